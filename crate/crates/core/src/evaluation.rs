//! Set-based metrics (micro/macro F1), paired significance tests, level-wise
//! error decomposition, and the model memory/runtime report.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};
use thiserror::Error;

use crate::hierarchy::{Hierarchy, NodeId};
use crate::trainer::TrainedModel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("paired inputs have different lengths")]
    LengthMismatch,
    #[error("label {0} is not a leaf of the hierarchy")]
    UnknownLeaf(u32),
    #[error("nothing to evaluate")]
    Empty,
}

/// Per-leaf confusion counts over the full leaf set of the taxonomy.
#[derive(Debug, Clone)]
pub struct ConfusionStats {
    leaves: Vec<u32>, // original ids, ascending
    tp: Vec<u32>,
    fp: Vec<u32>,
    fn_: Vec<u32>,
    evaluated: usize,
}

impl ConfusionStats {
    pub fn from_labels(
        h: &Hierarchy,
        truth: &[u32],
        predicted: &[u32],
    ) -> Result<ConfusionStats, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch);
        }
        if truth.is_empty() {
            return Err(EvalError::Empty);
        }
        let leaves: Vec<u32> = {
            let mut v: Vec<u32> = h.leaves().map(|l| h.original_id(l)).collect();
            v.sort_unstable();
            v
        };
        let index = |label: u32| -> Result<usize, EvalError> {
            leaves
                .binary_search(&label)
                .map_err(|_| EvalError::UnknownLeaf(label))
        };
        let mut tp = vec![0u32; leaves.len()];
        let mut fp = vec![0u32; leaves.len()];
        let mut fn_ = vec![0u32; leaves.len()];
        for (&t, &p) in truth.iter().zip(predicted) {
            let ti = index(t)?;
            let pi = index(p)?;
            if ti == pi {
                tp[ti] += 1;
            } else {
                fn_[ti] += 1;
                fp[pi] += 1;
            }
        }
        Ok(ConfusionStats {
            leaves,
            tp,
            fp,
            fn_,
            evaluated: truth.len(),
        })
    }

    pub fn evaluated(&self) -> usize {
        self.evaluated
    }

    pub fn accuracy(&self) -> f64 {
        self.tp.iter().map(|&v| v as u64).sum::<u64>() as f64 / self.evaluated as f64
    }

    /// (leaf original id, F1) for every leaf; absent classes score 0.
    pub fn per_class_f1(&self) -> Vec<(u32, f64)> {
        (0..self.leaves.len())
            .map(|i| (self.leaves[i], self.class_f1(i)))
            .collect()
    }

    fn class_f1(&self, i: usize) -> f64 {
        let (tp, fp, fn_) = (self.tp[i] as f64, self.fp[i] as f64, self.fn_[i] as f64);
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// F1 value plus a flag for the degenerate pooled-zero case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub value: f64,
    pub defined: bool,
}

/// Pooled-counts F1; equals plain accuracy in single-label evaluation.
pub fn micro_f1(s: &ConfusionStats) -> F1Score {
    let tp: f64 = s.tp.iter().map(|&v| v as f64).sum();
    let fp: f64 = s.fp.iter().map(|&v| v as f64).sum();
    let fn_: f64 = s.fn_.iter().map(|&v| v as f64).sum();
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r == 0.0 {
        F1Score {
            value: 0.0,
            defined: false,
        }
    } else if p == r {
        // 2pr/(p+r) = p; computing it directly keeps the single-label
        // micro-F1 = accuracy identity exact
        F1Score {
            value: p,
            defined: true,
        }
    } else {
        F1Score {
            value: 2.0 * p * r / (p + r),
            defined: true,
        }
    }
}

/// Unweighted mean of per-leaf F1 over *all* leaves of the taxonomy;
/// classes that never occur contribute 0 to the mean.
pub fn macro_f1(s: &ConfusionStats) -> f64 {
    if s.leaves.is_empty() {
        return 0.0;
    }
    (0..s.leaves.len()).map(|i| s.class_f1(i)).sum::<f64>() / s.leaves.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SignTestResult {
    pub p_value: f64,
    pub discordant: usize,
    pub a_better: usize,
    pub b_better: usize,
    pub no_discordant_pairs: bool,
    pub exact: bool,
}

/// Two-sided sign test on paired correctness indicators; exact binomial up
/// to 100 discordant pairs, continuity-corrected normal approximation above.
pub fn sign_test(a: &[bool], b: &[bool]) -> Result<SignTestResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch);
    }
    let a_better = a.iter().zip(b).filter(|&(&x, &y)| x && !y).count();
    let b_better = a.iter().zip(b).filter(|&(&x, &y)| !x && y).count();
    let n = a_better + b_better;
    if n == 0 {
        return Ok(SignTestResult {
            p_value: 1.0,
            discordant: 0,
            a_better,
            b_better,
            no_discordant_pairs: true,
            exact: true,
        });
    }
    let k = a_better.min(b_better);
    let (p_value, exact) = if n <= 100 {
        let binom = Binomial::new(0.5, n as u64).expect("valid binomial");
        ((2.0 * binom.cdf(k as u64)).min(1.0), true)
    } else if 2 * k == n {
        (1.0, false)
    } else {
        let z = (2.0 * k as f64 + 1.0 - n as f64) / (n as f64).sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap();
        ((2.0 * normal.cdf(z)).min(1.0), false)
    };
    Ok(SignTestResult {
        p_value,
        discordant: n,
        a_better,
        b_better,
        no_discordant_pairs: false,
        exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WilcoxonResult {
    pub p_value: f64,
    pub w_statistic: f64,
    pub n_nonzero: usize,
    pub all_zero_differences: bool,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test on paired per-class scores: zero
/// differences dropped, midranks for tied magnitudes, exact null
/// distribution up to 25 non-zero pairs and the tie-corrected normal
/// approximation beyond.
pub fn wilcoxon_rank_test(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch);
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x - y)
        .filter(|&d| d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            p_value: 1.0,
            w_statistic: 0.0,
            n_nonzero: 0,
            all_zero_differences: true,
            exact: true,
        });
    }

    // midranks of |d|, doubled so ties stay integral
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut doubled_rank = vec![0u64; n];
    let mut tie_correction = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && diffs[order[j]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let doubled_mid = (i + 1 + j) as u64; // 2 * midrank
        for &idx in &order[i..j] {
            doubled_rank[idx] = doubled_mid;
        }
        let t = (j - i) as f64;
        tie_correction += t * t * t - t;
        i = j;
    }
    let w_plus: u64 = (0..n)
        .filter(|&i| diffs[i] > 0.0)
        .map(|i| doubled_rank[i])
        .sum();
    let w_minus: u64 = (0..n)
        .filter(|&i| diffs[i] < 0.0)
        .map(|i| doubled_rank[i])
        .sum();
    let doubled_w = w_plus.min(w_minus);
    let w_statistic = doubled_w as f64 / 2.0;

    let (p_value, exact) = if n <= 25 {
        // exact null distribution of the doubled rank sum via subset DP;
        // counts stay below 2^25 so f64 arithmetic is lossless
        let total: u64 = doubled_rank.iter().sum();
        let mut dist = vec![0.0f64; total as usize + 1];
        dist[0] = 1.0;
        for &r in &doubled_rank {
            for s in (r as usize..dist.len()).rev() {
                dist[s] += dist[s - r as usize];
            }
        }
        let cdf: f64 = dist[..=doubled_w as usize].iter().sum();
        ((2.0 * cdf / 2f64.powi(n as i32)).min(1.0), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction / 48.0;
        if var <= 0.0 || w_statistic == mean {
            (1.0, false)
        } else {
            let z = (w_statistic - mean) / var.sqrt();
            let normal = Normal::new(0.0, 1.0).unwrap();
            ((2.0 * normal.cdf(z)).min(1.0), false)
        }
    };
    Ok(WilcoxonResult {
        p_value,
        w_statistic,
        n_nonzero: n,
        all_zero_differences: false,
        exact,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LevelRow {
    pub level: u32,
    pub instances: usize,
    pub errors: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LevelwiseReport {
    /// Error at level d counted over instances whose true path reaches d; a
    /// wrong turn propagates to every deeper level.
    pub cumulative: Vec<LevelRow>,
    /// Error at level d among instances still correct at level d-1.
    pub conditional: Vec<LevelRow>,
}

pub fn levelwise_errors(
    h: &Hierarchy,
    truth: &[u32],
    predicted: &[u32],
) -> Result<LevelwiseReport, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch);
    }
    let leaf_of = |label: u32| -> Result<NodeId, EvalError> {
        match h.node_of(label) {
            Some(n) if h.is_leaf(n) => Ok(n),
            _ => Err(EvalError::UnknownLeaf(label)),
        }
    };
    let depth = h.height() as usize;
    let mut cum = vec![(0usize, 0usize); depth + 1]; // (instances, errors)
    let mut cond = vec![(0usize, 0usize); depth + 1];
    for (&t, &p) in truth.iter().zip(predicted) {
        let t_path = h.path_from_root(leaf_of(t)?);
        let p_path = h.path_from_root(leaf_of(p)?);
        let mut parent_ok = true;
        for d in 1..t_path.len() {
            let wrong = d >= p_path.len() || p_path[d] != t_path[d];
            cum[d].0 += 1;
            cum[d].1 += wrong as usize;
            if parent_ok {
                cond[d].0 += 1;
                cond[d].1 += wrong as usize;
            }
            parent_ok = parent_ok && !wrong;
        }
    }
    let to_rows = |v: Vec<(usize, usize)>| -> Vec<LevelRow> {
        v.into_iter()
            .enumerate()
            .skip(1)
            .filter(|&(_, (n, _))| n > 0)
            .map(|(level, (instances, errors))| LevelRow {
                level: level as u32,
                instances,
                errors,
                rate: errors as f64 / instances as f64,
            })
            .collect()
    };
    Ok(LevelwiseReport {
        cumulative: to_rows(cum),
        conditional: to_rows(cond),
    })
}

/// Decimal-unit size with two decimals
/// (1,652,076 parameters * 4 bytes prints as "6.61 MB").
pub fn human_size(bytes: u64) -> String {
    let b = bytes as f64;
    if b >= 1e9 {
        format!("{:.2} GB", b / 1e9)
    } else if b >= 1e6 {
        format!("{:.2} MB", b / 1e6)
    } else if b >= 1e3 {
        format!("{:.2} KB", b / 1e3)
    } else {
        format!("{bytes} B")
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct NodeReportRow {
    pub node: u32,
    pub children: usize,
    pub subset_size: usize,
    pub parameters: u64,
    pub lambda: f64,
    pub sparsity: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ModelReport {
    pub parameter_count: u64,
    pub size_bytes: u64,
    pub size_human: String,
    pub bytes_per_parameter: u32,
    pub internal_nodes: usize,
    pub leaves: usize,
    pub height: u32,
    pub total_train_seconds: f64,
    pub nodes: Vec<NodeReportRow>,
}

/// Memory and runtime accounting for a trained model, 4 bytes per parameter.
pub fn model_report(m: &TrainedModel) -> ModelReport {
    let h = &m.hierarchy;
    let seconds: std::collections::HashMap<u32, f64> =
        m.manifest.per_node_seconds.iter().copied().collect();
    let mut nodes: Vec<NodeReportRow> = m
        .models
        .iter()
        .flatten()
        .map(|nm| NodeReportRow {
            node: h.original_id(nm.node),
            children: nm.children.len(),
            subset_size: nm.subset.len(),
            parameters: nm.parameter_count(),
            lambda: nm.lambda,
            sparsity: nm.sparsity(),
            train_seconds: seconds.get(&h.original_id(nm.node)).copied().unwrap_or(0.0),
        })
        .collect();
    nodes.sort_by_key(|r| r.node);
    let parameter_count = m.parameter_count();
    ModelReport {
        parameter_count,
        size_bytes: parameter_count * 4,
        size_human: human_size(parameter_count * 4),
        bytes_per_parameter: 4,
        internal_nodes: h.num_internal(),
        leaves: h.num_leaves(),
        height: h.height(),
        total_train_seconds: m.manifest.total_seconds,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn star(n: u32) -> Hierarchy {
        Hierarchy::from_edges(&(1..=n).map(|c| (0, c)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn micro_f1_is_accuracy_on_single_label_data() {
        let h = star(4);
        let truth = vec![1, 2, 3, 4, 1, 2];
        let pred = vec![1, 2, 4, 4, 2, 2];
        let s = ConfusionStats::from_labels(&h, &truth, &pred).unwrap();
        let f1 = micro_f1(&s);
        assert!(f1.defined);
        assert_eq!(f1.value, s.accuracy());
        assert_eq!(f1.value, 4.0 / 6.0);
    }

    #[test]
    fn perfect_and_all_wrong() {
        let h = star(3);
        let s = ConfusionStats::from_labels(&h, &[1, 2, 3], &[1, 2, 3]).unwrap();
        assert_eq!(micro_f1(&s).value, 1.0);
        assert_eq!(macro_f1(&s), 1.0);
        let s = ConfusionStats::from_labels(&h, &[1, 2, 3], &[2, 3, 1]).unwrap();
        let f1 = micro_f1(&s);
        assert_eq!(f1.value, 0.0);
        assert!(!f1.defined);
        assert_eq!(macro_f1(&s), 0.0);
    }

    /// Oracle: hand confusion matrix for instances A->A, A->B, B->B, C->B.
    /// Pooled P = R = 2/4; per-class F1 = {A: 2/3, B: 1/2, C: 0}.
    #[test]
    fn three_class_toy_confusion() {
        let h = star(3); // A=1, B=2, C=3
        let truth = vec![1, 1, 2, 3];
        let pred = vec![1, 2, 2, 2];
        let s = ConfusionStats::from_labels(&h, &truth, &pred).unwrap();
        assert_eq!(micro_f1(&s).value, 0.5);
        let per_class = s.per_class_f1();
        assert_eq!(per_class[0], (1, 2.0 / 3.0));
        assert_eq!(per_class[1], (2, 0.5));
        assert_eq!(per_class[2], (3, 0.0));
        let expect = (2.0 / 3.0 + 0.5 + 0.0) / 3.0; // = 7/18
        assert!((macro_f1(&s) - expect).abs() < 1e-15);
        assert!((macro_f1(&s) - 7.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn macro_divisor_covers_all_leaves() {
        // 2 leaves: one perfectly predicted, one never appears at all
        let h = star(2);
        let s = ConfusionStats::from_labels(&h, &[1, 1], &[1, 1]).unwrap();
        assert_eq!(macro_f1(&s), 0.5);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let h = star(2);
        assert_eq!(
            ConfusionStats::from_labels(&h, &[1, 9], &[1, 1]).unwrap_err(),
            EvalError::UnknownLeaf(9)
        );
        // internal node id is not a valid label either
        assert_eq!(
            ConfusionStats::from_labels(&h, &[0], &[1]).unwrap_err(),
            EvalError::UnknownLeaf(0)
        );
    }

    #[test]
    fn sign_test_exact_cases() {
        // identical systems
        let a = vec![true, false, true];
        let r = sign_test(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.no_discordant_pairs);

        // 8 discordant pairs all favoring system A: p = 2 * (1/2)^8
        let a: Vec<bool> = vec![true; 8];
        let b: Vec<bool> = vec![false; 8];
        let r = sign_test(&a, &b).unwrap();
        assert!((r.p_value - 2.0 * 0.5f64.powi(8)).abs() < 1e-12);
        assert_eq!(r.discordant, 8);

        // 5 vs 5: maximally non-significant
        let a: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let b: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let r = sign_test(&a, &b).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    /// Oracle: direct binomial-sum enumeration.
    #[test]
    fn sign_test_matches_binomial_enumeration() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..30 {
            let n = rng.random_range(2..40usize);
            let a: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let b: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let r = sign_test(&a, &b).unwrap();
            let na = a.iter().zip(&b).filter(|&(&x, &y)| x && !y).count();
            let nb = a.iter().zip(&b).filter(|&(&x, &y)| !x && y).count();
            let m = na + nb;
            if m == 0 {
                assert_eq!(r.p_value, 1.0);
                continue;
            }
            let k = na.min(nb);
            // C(m, i) via multiplicative recurrence
            let mut coef = 1.0f64;
            let mut cdf = 0.0;
            for i in 0..=k {
                if i > 0 {
                    coef = coef * (m - i + 1) as f64 / i as f64;
                }
                cdf += coef;
            }
            let expect = (2.0 * cdf / 2f64.powi(m as i32)).min(1.0);
            assert!(
                (r.p_value - expect).abs() < 1e-10,
                "{} vs {}",
                r.p_value,
                expect
            );
        }
    }

    #[test]
    fn wilcoxon_trivial_and_distinct_positive() {
        let a = vec![0.5, 0.6, 0.7];
        let r = wilcoxon_rank_test(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.all_zero_differences);

        // 6 distinct positive differences: p = 2 / 2^6
        let a = vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let b = vec![0.85, 0.70, 0.55, 0.42, 0.30, 0.18];
        let r = wilcoxon_rank_test(&a, &b).unwrap();
        assert!((r.p_value - 2.0 / 64.0).abs() < 1e-12);
        assert!(r.exact);
    }

    /// Frozen values from an independent statistics package.
    #[test]
    fn wilcoxon_matches_reference_implementation() {
        // exact branch, n = 14, distinct magnitudes
        let diffs: [f64; 14] = [
            0.081388, 0.031458, 0.192723, -0.020427, 0.093086, 0.052829, 0.042275, 0.113318,
            -0.030896, 0.010766, 0.054292, 0.147064, 0.064452, 0.104784,
        ];
        let zeros = vec![0.0; 14];
        let r = wilcoxon_rank_test(diffs.as_ref(), &zeros).unwrap();
        assert!(r.exact);
        assert!(
            (r.p_value - 0.001220703125).abs() < 1e-12,
            "p = {}",
            r.p_value
        );
        assert_eq!(r.w_statistic, 5.0);

        // approximate branch, n = 40 with ties
        let f1_a: [f64; 40] = [
            0.45, 0.64, 1.0, 0.79, 0.79, 0.83, 0.26, 0.38, 0.82, 0.45, 0.99, 0.72, 0.04, 0.04,
            0.28, 0.4, 0.45, 0.02, 0.12, 0.98, 0.25, 0.73, 0.16, 0.12, 0.48, 0.36, 0.63, 0.58,
            0.13, 0.02, 0.25, 0.37, 0.46, 0.44, 0.5, 0.78, 0.54, 0.07, 0.83, 0.52,
        ];
        let f1_b: [f64; 40] = [
            0.67, 0.59, 1.0, 0.72, 0.8, 0.77, 0.2, 0.3, 0.85, 0.49, 1.0, 0.76, 0.0, 0.0, 0.3, 0.55,
            0.39, 0.0, 0.29, 0.99, 0.35, 0.81, 0.04, 0.2, 0.59, 0.18, 0.64, 0.64, 0.17, 0.1, 0.14,
            0.3, 0.44, 0.61, 0.63, 0.93, 0.64, 0.07, 0.8, 0.49,
        ];
        let r = wilcoxon_rank_test(&f1_a, &f1_b).unwrap();
        assert!(!r.exact);
        assert_eq!(r.n_nonzero, 38);
        assert!(
            (r.p_value - 0.24586293073892906).abs() < 1e-6,
            "p = {}",
            r.p_value
        );

        // approximate branch, n = 30
        let a2: [f64; 30] = [
            0.114, 0.963, 0.066, 0.004, 0.059, 0.016, 0.476, 0.317, 0.413, 0.716, 0.11, 0.824,
            0.94, 0.059, 0.893, 0.191, 0.257, 0.566, 0.253, 0.135, 0.654, 0.988, 0.417, 0.101,
            0.826, 0.818, 0.454, 0.088, 0.819, 0.15,
        ];
        let b2: [f64; 30] = [
            0.057, 0.931, 0.118, 0.0, 0.104, 0.0, 0.422, 0.276, 0.325, 0.764, 0.177, 0.754, 0.967,
            0.04, 0.836, 0.172, 0.195, 0.503, 0.17, 0.078, 0.625, 0.996, 0.508, 0.114, 0.815,
            0.724, 0.478, 0.052, 0.742, 0.187,
        ];
        let r = wilcoxon_rank_test(&a2, &b2).unwrap();
        assert!(
            (r.p_value - 0.049498046027749744).abs() < 1e-6,
            "p = {}",
            r.p_value
        );
    }

    /// Oracle: enumerate all 2^n sign assignments directly (ties included).
    #[test]
    fn wilcoxon_exact_matches_sign_enumeration() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(2..11usize);
            let diffs: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(-4i32..5) as f64) / 4.0)
                .filter(|&d| d != 0.0)
                .collect();
            if diffs.is_empty() {
                continue;
            }
            let zeros = vec![0.0; diffs.len()];
            let r = wilcoxon_rank_test(&diffs, &zeros).unwrap();

            // independent path: midranks then full enumeration
            let m = diffs.len();
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
            let mut ranks = vec![0.0f64; m];
            let mut i = 0;
            while i < m {
                let mut j = i;
                while j < m && diffs[idx[j]].abs() == diffs[idx[i]].abs() {
                    j += 1;
                }
                for &ix in &idx[i..j] {
                    ranks[ix] = (i + 1 + j) as f64 / 2.0;
                }
                i = j;
            }
            let w_plus: f64 = (0..m).filter(|&i| diffs[i] > 0.0).map(|i| ranks[i]).sum();
            let w_minus: f64 = (0..m).filter(|&i| diffs[i] < 0.0).map(|i| ranks[i]).sum();
            let w_obs = w_plus.min(w_minus);
            let mut count = 0u64;
            for mask in 0u64..(1 << m) {
                let w: f64 = (0..m)
                    .filter(|&i| mask >> i & 1 == 1)
                    .map(|i| ranks[i])
                    .sum();
                if w <= w_obs + 1e-12 {
                    count += 1;
                }
            }
            let expect = (2.0 * count as f64 / (1u64 << m) as f64).min(1.0);
            assert!(
                (r.p_value - expect).abs() < 1e-12,
                "n={m} p={} expect={expect}",
                r.p_value
            );
        }
    }

    #[test]
    fn significance_tests_are_symmetric() {
        let mut rng = StdRng::seed_from_u64(7);
        let a: Vec<bool> = (0..50).map(|_| rng.random_bool(0.6)).collect();
        let b: Vec<bool> = (0..50).map(|_| rng.random_bool(0.5)).collect();
        assert_eq!(
            sign_test(&a, &b).unwrap().p_value,
            sign_test(&b, &a).unwrap().p_value
        );

        let x: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        assert_eq!(
            wilcoxon_rank_test(&x, &y).unwrap().p_value,
            wilcoxon_rank_test(&y, &x).unwrap().p_value
        );
    }

    #[test]
    fn levelwise_perfect_and_root_mistake() {
        // root(0) -> A(1), B(2); A -> 3, 4; B -> 5, 6
        let h = Hierarchy::from_edges(&[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]).unwrap();
        let perfect = levelwise_errors(&h, &[3, 5, 6], &[3, 5, 6]).unwrap();
        assert!(perfect.cumulative.iter().all(|r| r.errors == 0));

        // one instance takes the wrong branch at the root: errors at both levels
        let r = levelwise_errors(&h, &[3, 5], &[5, 5]).unwrap();
        assert_eq!(r.cumulative[0].level, 1);
        assert_eq!(r.cumulative[0].errors, 1);
        assert_eq!(r.cumulative[1].level, 2);
        assert_eq!(r.cumulative[1].errors, 1);
        // conditional: level-2 denominator excludes the instance lost at level 1
        assert_eq!(r.conditional[1].instances, 1);
        assert_eq!(r.conditional[1].errors, 0);
    }

    /// Oracle: brute-force ancestor comparison per level.
    #[test]
    fn levelwise_matches_ancestor_scan() {
        let mut rng = StdRng::seed_from_u64(11);
        let edges = crate::synthetic::balanced_taxonomy(3, 2);
        let h = Hierarchy::from_edges(&edges).unwrap();
        let leaves: Vec<u32> = h.leaves().map(|l| h.original_id(l)).collect();
        let truth: Vec<u32> = (0..100)
            .map(|_| *leaves.choose(&mut rng).unwrap())
            .collect();
        let pred: Vec<u32> = (0..100)
            .map(|_| *leaves.choose(&mut rng).unwrap())
            .collect();
        let report = levelwise_errors(&h, &truth, &pred).unwrap();
        for row in &report.cumulative {
            let d = row.level as usize;
            let mut errors = 0;
            let mut total = 0;
            for (&t, &p) in truth.iter().zip(&pred) {
                let tp = h.path_from_root(h.node_of(t).unwrap());
                let pp = h.path_from_root(h.node_of(p).unwrap());
                if d < tp.len() {
                    total += 1;
                    if d >= pp.len() || pp[d] != tp[d] {
                        errors += 1;
                    }
                }
            }
            assert_eq!(row.instances, total);
            assert_eq!(row.errors, errors);
        }
    }

    #[test]
    fn deepest_level_error_equals_one_minus_micro_f1() {
        // uniform-depth tree: every true path reaches the deepest level
        let mut rng = StdRng::seed_from_u64(13);
        let edges = crate::synthetic::balanced_taxonomy(2, 3);
        let h = Hierarchy::from_edges(&edges).unwrap();
        let leaves: Vec<u32> = h.leaves().map(|l| h.original_id(l)).collect();
        let truth: Vec<u32> = (0..60).map(|_| *leaves.choose(&mut rng).unwrap()).collect();
        let pred: Vec<u32> = (0..60).map(|_| *leaves.choose(&mut rng).unwrap()).collect();
        let report = levelwise_errors(&h, &truth, &pred).unwrap();
        let deepest = report.cumulative.last().unwrap();
        assert_eq!(deepest.level, h.height());
        let stats = ConfusionStats::from_labels(&h, &truth, &pred).unwrap();
        assert!((deepest.rate - (1.0 - micro_f1(&stats).value)).abs() < 1e-15);
    }

    #[test]
    fn size_formatting_matches_convention() {
        assert_eq!(human_size(6_608_304), "6.61 MB");
        assert_eq!(human_size(27_840), "27.84 KB");
        assert_eq!(human_size(487_263_084), "487.26 MB");
        assert_eq!(human_size(4_866_427_176 * 4), "19.47 GB");
        assert_eq!(human_size(123), "123 B");
    }
}
