//! Per-node filter feature scoring: Gini-Index, mutual-information based
//! MRMR (difference and quotient flavors), and the Kruskal-Wallis rank
//! statistic.
//!
//! All methods score features against the *children* of one internal node:
//! each child class aggregates every leaf in its subtree, so a node's table
//! ranks exactly the discriminative power the top-down router needs there.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Dataset;
use crate::hierarchy::{Hierarchy, NodeId, NodeTrainingView};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("feature {0} has no non-zero value at this node")]
    FeatureAbsent(u32),
    #[error("column lengths differ")]
    LengthMismatch,
    #[error("fewer active features than requested")]
    NotEnoughFeatures,
    #[error("node has a single (effective) child; nothing to discriminate")]
    SingleChildNode,
    #[error("all values tied; rank statistic undefined")]
    DegenerateRanking,
}

/// Filter method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMethod {
    Gini,
    MrmrD,
    MrmrQ,
    KruskalWallis,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 4] = [
        ScoreMethod::Gini,
        ScoreMethod::MrmrD,
        ScoreMethod::MrmrQ,
        ScoreMethod::KruskalWallis,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScoreMethod::Gini => "gini",
            ScoreMethod::MrmrD => "mrmr-d",
            ScoreMethod::MrmrQ => "mrmr-q",
            ScoreMethod::KruskalWallis => "kw",
        }
    }
}

impl std::str::FromStr for ScoreMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gini" => Ok(ScoreMethod::Gini),
            "mrmr-d" => Ok(ScoreMethod::MrmrD),
            "mrmr-q" => Ok(ScoreMethod::MrmrQ),
            "kw" => Ok(ScoreMethod::KruskalWallis),
            other => Err(format!("unknown feature selection method '{other}'")),
        }
    }
}

/// MRMR combination flavor: relevance minus redundancy, or their quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrmrFlavor {
    Difference,
    Quotient,
}

// Damps the quotient objective's denominator. With plug-in MI the
// redundancy of an uninformative candidate is a near-zero noise term, so
// the raw ratio would rank noise above real signal and swing wildly with
// the sampling error of the denominator.
const QUOTIENT_DAMPING: f64 = 0.25;

fn mrmr_objective(flavor: MrmrFlavor, relevance: f64, redundancy: f64) -> f64 {
    match flavor {
        MrmrFlavor::Difference => relevance - redundancy,
        MrmrFlavor::Quotient => relevance / (redundancy + QUOTIENT_DAMPING),
    }
}

/// How feature columns are discretized for mutual-information estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// Density below 0.5 picks presence binarization, otherwise 4 bins.
    Auto,
    /// zero / non-zero
    Presence,
    /// Equal-frequency bins over the node's value column (dense data).
    EqualFrequency(u8),
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreConfig {
    pub discretization: Discretization,
    /// Ranks smaller Kruskal-Wallis statistics as more relevant instead of
    /// larger ones (replication aid; the default follows the standard
    /// reading of the statistic).
    pub kw_lower_is_better: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            discretization: Discretization::Auto,
            kw_lower_is_better: false,
        }
    }
}

/// Per-feature, per-child-class non-zero occurrence counts at one node.
#[derive(Debug, Clone)]
pub struct FeatureClassCounts {
    num_classes: usize,
    class_totals: Vec<u32>,
    active: Vec<u32>,
    counts: Vec<u32>, // active_idx * num_classes + class
    totals: Vec<u32>, // per active_idx
}

impl FeatureClassCounts {
    pub fn from_view(
        view: &NodeTrainingView,
        data: &Dataset,
        children: &[NodeId],
    ) -> FeatureClassCounts {
        NodeColumns::build(view, data, children).class_counts()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_totals(&self) -> &[u32] {
        &self.class_totals
    }

    pub fn active_features(&self) -> &[u32] {
        &self.active
    }

    fn active_index(&self, f: u32) -> Option<usize> {
        self.active.binary_search(&f).ok()
    }

    pub fn total(&self, f: u32) -> u32 {
        self.active_index(f).map_or(0, |i| self.totals[i])
    }

    pub fn count(&self, f: u32, class: usize) -> u32 {
        self.active_index(f)
            .map_or(0, |i| self.counts[i * self.num_classes + class])
    }

    fn gini_at(&self, idx: usize) -> f64 {
        let total = self.totals[idx] as f64;
        let row = &self.counts[idx * self.num_classes..(idx + 1) * self.num_classes];
        1.0 - row.iter().map(|&c| (c as f64 / total).powi(2)).sum::<f64>()
    }
}

/// `1 - sum_k p(k|f)^2` over the child classes; 0 is perfectly class-pure,
/// smaller is more relevant.
pub fn gini_index(counts: &FeatureClassCounts, f: u32) -> Result<f64, ScoreError> {
    match counts.active_index(f) {
        Some(idx) if counts.totals[idx] > 0 => Ok(counts.gini_at(idx)),
        _ => Err(ScoreError::FeatureAbsent(f)),
    }
}

/// Plug-in mutual information (nats) between two discrete columns.
pub fn mutual_information(x: &[usize], y: &[usize]) -> Result<f64, ScoreError> {
    if x.len() != y.len() || x.is_empty() {
        return Err(ScoreError::LengthMismatch);
    }
    let ax = x.iter().max().unwrap() + 1;
    let ay = y.iter().max().unwrap() + 1;
    let mut joint = vec![0u32; ax * ay];
    let mut mx = vec![0u32; ax];
    let mut my = vec![0u32; ay];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * ay + b] += 1;
        mx[a] += 1;
        my[b] += 1;
    }
    let n = x.len() as f64;
    let mut mi = 0.0;
    for a in 0..ax {
        for b in 0..ay {
            let c = joint[a * ay + b];
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p * n * n / (mx[a] as f64 * my[b] as f64)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

fn mi_from_2x2(n11: u32, total_x: u32, total_y: u32, n: u32) -> f64 {
    let n10 = total_x - n11;
    let n01 = total_y - n11;
    let n00 = n - total_x - n01;
    let nf = n as f64;
    let marg = [
        (n - total_x) as f64 / nf,
        total_x as f64 / nf,
        (n - total_y) as f64 / nf,
        total_y as f64 / nf,
    ];
    let mut mi = 0.0;
    for (c, (px, py)) in [
        (n00, (marg[0], marg[2])),
        (n01, (marg[0], marg[3])),
        (n10, (marg[1], marg[2])),
        (n11, (marg[1], marg[3])),
    ] {
        if c > 0 {
            let p = c as f64 / nf;
            mi += p * (p / (px * py)).ln();
        }
    }
    mi.max(0.0)
}

/// Standard Kruskal-Wallis H with midranks for ties; larger means stronger
/// separation between classes. All values tied is `DegenerateRanking`.
pub fn kruskal_wallis(values: &[f64], classes: &[usize]) -> Result<f64, ScoreError> {
    if values.len() != classes.len() {
        return Err(ScoreError::LengthMismatch);
    }
    let n = values.len();
    if n < 2 {
        return Err(ScoreError::DegenerateRanking);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let num_classes = classes.iter().max().unwrap() + 1;
    let mut rank_sum = vec![0.0f64; num_classes];
    let mut class_n = vec![0u32; num_classes];
    for &c in classes {
        class_n[c] += 1;
    }
    let rbar = (n as f64 + 1.0) / 2.0;
    let mut denom = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // midrank of the tie group covering sorted positions i..j (1-based)
        let mid = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            rank_sum[classes[idx]] += mid;
        }
        denom += (j - i) as f64 * (mid - rbar) * (mid - rbar);
        i = j;
    }
    if denom == 0.0 {
        return Err(ScoreError::DegenerateRanking);
    }
    let numer: f64 = (0..num_classes)
        .filter(|&k| class_n[k] > 0)
        .map(|k| {
            let nk = class_n[k] as f64;
            let mean = rank_sum[k] / nk;
            nk * (mean - rbar) * (mean - rbar)
        })
        .sum();
    Ok((n as f64 - 1.0) * numer / denom)
}

/// Extracted per-node columns: class of each routed instance plus sparse
/// value postings for every feature active at the node.
#[derive(Debug)]
pub struct NodeColumns {
    n: usize,
    num_classes: usize,
    class_of: Vec<u8>,
    class_totals: Vec<u32>,
    active: Vec<u32>,
    value_postings: Vec<Vec<(u32, f64)>>, // per active feature: (row, value) sorted by row
}

impl NodeColumns {
    pub fn build(view: &NodeTrainingView, data: &Dataset, children: &[NodeId]) -> NodeColumns {
        assert!(
            children.len() <= u8::MAX as usize + 1,
            "fan-out exceeds class index width"
        );
        let n = view.rows.len();
        let num_classes = children.len();
        let mut class_of = Vec::with_capacity(n);
        let mut class_totals = vec![0u32; num_classes];
        let mut map: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        for (row_idx, &(instance, child)) in view.rows.iter().enumerate() {
            let class = children
                .binary_search(&child)
                .expect("routed child not in children");
            class_of.push(class as u8);
            class_totals[class] += 1;
            for &(f, v) in data.row(instance) {
                if v != 0.0 {
                    map.entry(f).or_default().push((row_idx as u32, v));
                }
            }
        }
        let mut active: Vec<u32> = map.keys().copied().collect();
        active.sort_unstable();
        let value_postings = active.iter().map(|f| map.remove(f).unwrap()).collect();
        NodeColumns {
            n,
            num_classes,
            class_of,
            class_totals,
            active,
            value_postings,
        }
    }

    pub fn num_instances(&self) -> usize {
        self.n
    }

    pub fn active_features(&self) -> &[u32] {
        &self.active
    }

    pub fn distinct_classes(&self) -> usize {
        self.class_totals.iter().filter(|&&c| c > 0).count()
    }

    fn nnz(&self) -> usize {
        self.value_postings.iter().map(Vec::len).sum()
    }

    pub fn class_counts(&self) -> FeatureClassCounts {
        let k = self.num_classes;
        let mut counts = vec![0u32; self.active.len() * k];
        let mut totals = vec![0u32; self.active.len()];
        for (idx, posting) in self.value_postings.iter().enumerate() {
            totals[idx] = posting.len() as u32;
            for &(row, _) in posting {
                counts[idx * k + self.class_of[row as usize] as usize] += 1;
            }
        }
        FeatureClassCounts {
            num_classes: k,
            class_totals: self.class_totals.clone(),
            active: self.active.clone(),
            counts,
            totals,
        }
    }

    fn resolve_discretization(&self, d: Discretization) -> Discretization {
        match d {
            Discretization::Auto => {
                let density = if self.active.is_empty() || self.n == 0 {
                    0.0
                } else {
                    self.nnz() as f64 / (self.n * self.active.len()) as f64
                };
                if density >= 0.5 {
                    Discretization::EqualFrequency(4)
                } else {
                    Discretization::Presence
                }
            }
            other => other,
        }
    }

    fn discretize(&self, d: Discretization) -> DiscreteColumns {
        match self.resolve_discretization(d) {
            Discretization::Presence => DiscreteColumns::Presence {
                postings: self
                    .value_postings
                    .iter()
                    .map(|p| p.iter().map(|&(r, _)| r).collect())
                    .collect(),
            },
            Discretization::EqualFrequency(bins) => {
                let bins = bins.max(2);
                let columns = self
                    .value_postings
                    .par_iter()
                    .map(|posting| {
                        let mut col = vec![0.0f64; self.n];
                        for &(r, v) in posting {
                            col[r as usize] = v;
                        }
                        let mut sorted = col.clone();
                        sorted.sort_by(f64::total_cmp);
                        // equal-frequency thresholds; ties share a bin by value
                        let thresholds: Vec<f64> = (1..bins as usize)
                            .map(|b| sorted[b * self.n / bins as usize])
                            .collect();
                        col.iter()
                            .map(|&v| thresholds.iter().take_while(|&&t| v >= t).count() as u8)
                            .collect()
                    })
                    .collect();
                DiscreteColumns::Binned {
                    columns,
                    n_bins: bins as usize,
                }
            }
            Discretization::Auto => unreachable!("resolved above"),
        }
    }

    /// Kruskal-Wallis for one active feature without materializing the dense
    /// column: absent instances form a single zero tie group.
    fn kruskal_wallis_at(&self, idx: usize) -> Result<f64, ScoreError> {
        let posting = &self.value_postings[idx];
        let n = self.n;
        if n < 2 {
            return Err(ScoreError::DegenerateRanking);
        }
        let zeros_total = n - posting.len();
        let mut nonzero: Vec<(f64, u8)> = posting
            .iter()
            .map(|&(r, v)| (v, self.class_of[r as usize]))
            .collect();
        nonzero.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut zero_class = self.class_totals.clone();
        for &(r, _) in posting {
            zero_class[self.class_of[r as usize] as usize] -= 1;
        }

        let rbar = (n as f64 + 1.0) / 2.0;
        let mut rank_sum = vec![0.0f64; self.num_classes];
        let mut denom = 0.0;
        let mut consumed = 0usize; // ranks handed out so far
        let mut i = 0;
        let mut zeros_done = zeros_total == 0;
        while i < nonzero.len() || !zeros_done {
            // next tie group: the zero block or the next run of equal values
            let take_zero = !zeros_done && (i >= nonzero.len() || 0.0 < nonzero[i].0);
            if take_zero {
                let mid = (consumed + 1 + consumed + zeros_total) as f64 / 2.0;
                for (k, &z) in zero_class.iter().enumerate() {
                    rank_sum[k] += mid * z as f64;
                }
                denom += zeros_total as f64 * (mid - rbar) * (mid - rbar);
                consumed += zeros_total;
                zeros_done = true;
            } else {
                let mut j = i;
                while j < nonzero.len() && nonzero[j].0 == nonzero[i].0 {
                    j += 1;
                }
                let t = j - i;
                let mid = (consumed + 1 + consumed + t) as f64 / 2.0;
                for &(_, c) in &nonzero[i..j] {
                    rank_sum[c as usize] += mid;
                }
                denom += t as f64 * (mid - rbar) * (mid - rbar);
                consumed += t;
                i = j;
            }
        }
        if denom == 0.0 {
            return Err(ScoreError::DegenerateRanking);
        }
        let numer: f64 = (0..self.num_classes)
            .filter(|&k| self.class_totals[k] > 0)
            .map(|k| {
                let nk = self.class_totals[k] as f64;
                let mean = rank_sum[k] / nk;
                nk * (mean - rbar) * (mean - rbar)
            })
            .sum();
        Ok((n as f64 - 1.0) * numer / denom)
    }
}

enum DiscreteColumns {
    Presence {
        postings: Vec<Vec<u32>>,
    },
    Binned {
        columns: Vec<Vec<u8>>,
        n_bins: usize,
    },
}

impl DiscreteColumns {
    fn pairwise_mi(&self, a: usize, b: usize, n: usize) -> f64 {
        match self {
            DiscreteColumns::Presence { postings } => {
                let (pa, pb) = (&postings[a], &postings[b]);
                let mut n11 = 0u32;
                let (mut i, mut j) = (0, 0);
                while i < pa.len() && j < pb.len() {
                    match pa[i].cmp(&pb[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            n11 += 1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                mi_from_2x2(n11, pa.len() as u32, pb.len() as u32, n as u32)
            }
            DiscreteColumns::Binned { columns, n_bins } => {
                let nb = *n_bins;
                let mut joint = vec![0u32; nb * nb];
                for (&x, &y) in columns[a].iter().zip(&columns[b]) {
                    joint[x as usize * nb + y as usize] += 1;
                }
                let mut ma = vec![0u32; nb];
                let mut mb = vec![0u32; nb];
                for x in 0..nb {
                    for y in 0..nb {
                        ma[x] += joint[x * nb + y];
                        mb[y] += joint[x * nb + y];
                    }
                }
                let nf = n as f64;
                let mut mi = 0.0;
                for x in 0..nb {
                    for y in 0..nb {
                        let c = joint[x * nb + y];
                        if c > 0 {
                            let p = c as f64 / nf;
                            mi += p * (p * nf * nf / (ma[x] as f64 * mb[y] as f64)).ln();
                        }
                    }
                }
                mi.max(0.0)
            }
        }
    }

    fn class_mi(&self, a: usize, class_of: &[u8], num_classes: usize, n: usize) -> f64 {
        match self {
            DiscreteColumns::Presence { postings } => {
                // 2 x K table from the posting
                let mut n1k = vec![0u32; num_classes];
                for &r in &postings[a] {
                    n1k[class_of[r as usize] as usize] += 1;
                }
                let mut class_totals = vec![0u32; num_classes];
                for &c in class_of {
                    class_totals[c as usize] += 1;
                }
                let nf = n as f64;
                let total = postings[a].len() as f64;
                let (p1, p0) = (total / nf, 1.0 - total / nf);
                let mut mi = 0.0;
                for k in 0..num_classes {
                    let pk = class_totals[k] as f64 / nf;
                    let c1 = n1k[k];
                    let c0 = class_totals[k] - c1;
                    if c1 > 0 {
                        let p = c1 as f64 / nf;
                        mi += p * (p / (p1 * pk)).ln();
                    }
                    if c0 > 0 {
                        let p = c0 as f64 / nf;
                        mi += p * (p / (p0 * pk)).ln();
                    }
                }
                mi.max(0.0)
            }
            DiscreteColumns::Binned { columns, .. } => {
                let x: Vec<usize> = columns[a].iter().map(|&b| b as usize).collect();
                let y: Vec<usize> = class_of.iter().map(|&c| c as usize).collect();
                mutual_information(&x, &y).unwrap_or(0.0)
            }
        }
    }
}

/// Greedy forward MRMR selection over a node's columns; returns the selection
/// order together with the objective value at each pick (the first pick is
/// pure relevance).
pub fn mrmr_rank(
    columns: &NodeColumns,
    k: usize,
    flavor: MrmrFlavor,
    discretization: Discretization,
) -> Result<Vec<(u32, f64)>, ScoreError> {
    let m = columns.active.len();
    if k == 0 || k > m {
        return Err(ScoreError::NotEnoughFeatures);
    }
    let discrete = columns.discretize(discretization);
    let relevance: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| discrete.class_mi(i, &columns.class_of, columns.num_classes, columns.n))
        .collect();

    let mut selected: Vec<(u32, f64)> = Vec::with_capacity(k);
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut red_sum = vec![0.0f64; m];

    // first pick: pure relevance (identical for both flavors)
    let first = *remaining
        .iter()
        .max_by(|&&a, &&b| {
            relevance[a]
                .total_cmp(&relevance[b])
                .then(columns.active[b].cmp(&columns.active[a]))
        })
        .unwrap();
    selected.push((columns.active[first], relevance[first]));
    remaining.retain(|&i| i != first);
    let mut last = first;

    while selected.len() < k {
        let mi_vs_last: Vec<f64> = remaining
            .par_iter()
            .map(|&i| discrete.pairwise_mi(i, last, columns.n))
            .collect();
        let mut best: Option<(f64, usize)> = None;
        for (pos, &i) in remaining.iter().enumerate() {
            red_sum[i] += mi_vs_last[pos];
            let red_mean = red_sum[i] / selected.len() as f64;
            let obj = mrmr_objective(flavor, relevance[i], red_mean);
            let better = match best {
                None => true,
                Some((bobj, bi)) => {
                    obj > bobj || (obj == bobj && columns.active[i] < columns.active[bi])
                }
            };
            if better {
                best = Some((obj, i));
            }
        }
        let (obj, pick) = best.unwrap();
        selected.push((columns.active[pick], obj));
        remaining.retain(|&i| i != pick);
        last = pick;
    }
    Ok(selected)
}

/// Greedy MRMR returning just the ordered feature ids (length `k`).
pub fn mrmr_select(
    columns: &NodeColumns,
    k: usize,
    flavor: MrmrFlavor,
    discretization: Discretization,
) -> Result<Vec<u32>, ScoreError> {
    Ok(mrmr_rank(columns, k, flavor, discretization)?
        .into_iter()
        .map(|(f, _)| f)
        .collect())
}

/// Subset-level MRMR objective (mean relevance combined with mean pairwise
/// redundancy, self-pairs excluded); the target the greedy search chases.
/// Exposed for exhaustive-search verification.
pub fn mrmr_subset_objective(
    columns: &NodeColumns,
    subset: &[usize],
    flavor: MrmrFlavor,
    discretization: Discretization,
) -> f64 {
    let discrete = columns.discretize(discretization);
    let rel: f64 = subset
        .iter()
        .map(|&i| discrete.class_mi(i, &columns.class_of, columns.num_classes, columns.n))
        .sum::<f64>()
        / subset.len() as f64;
    let mut red = 0.0;
    if subset.len() > 1 {
        let mut pairs = 0usize;
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                red += discrete.pairwise_mi(i, j, columns.n);
                pairs += 1;
            }
        }
        red /= pairs as f64;
    }
    mrmr_objective(flavor, rel, red)
}

/// Relevance scores and ranked order of every feature active at one node.
#[derive(Debug, Clone)]
pub struct FeatureScoreTable {
    pub node: NodeId,
    pub method: ScoreMethod,
    /// Feature ids from most to least relevant; ties broken by ascending id.
    pub rank_order: Vec<u32>,
    /// Score of `rank_order[i]`.
    pub scores: Vec<f64>,
}

impl FeatureScoreTable {
    pub fn len(&self) -> usize {
        self.rank_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank_order.is_empty()
    }

    /// TSV rows: feature_id, score, rank (1-based).
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "feature_id\tscore\trank")?;
        for (rank, (&f, &s)) in self.rank_order.iter().zip(&self.scores).enumerate() {
            writeln!(w, "{f}\t{s}\t{}", rank + 1)?;
        }
        Ok(())
    }
}

/// Scores all features active at `view.node` with `method`.
///
/// Gini and Kruskal-Wallis are independent per-feature statistics; the MRMR
/// flavors rank by greedy forward selection run to exhaustion. Features with
/// a degenerate rank statistic sort last (ascending id among themselves).
pub fn score_node(
    h: &Hierarchy,
    view: &NodeTrainingView,
    data: &Dataset,
    method: ScoreMethod,
    cfg: &ScoreConfig,
) -> Result<FeatureScoreTable, ScoreError> {
    let children = h.children(view.node);
    if children.len() < 2 {
        return Err(ScoreError::SingleChildNode);
    }
    let columns = NodeColumns::build(view, data, children);
    if columns.distinct_classes() < 2 {
        return Err(ScoreError::SingleChildNode);
    }

    let (order, scores) = match method {
        ScoreMethod::Gini => {
            let counts = columns.class_counts();
            let scores: Vec<f64> = (0..columns.active.len())
                .into_par_iter()
                .map(|i| counts.gini_at(i))
                .collect();
            rank_by(&columns.active, &scores, /*ascending=*/ true)
        }
        ScoreMethod::KruskalWallis => {
            let lower_better = cfg.kw_lower_is_better;
            let worst = if lower_better {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            let scores: Vec<f64> = (0..columns.active.len())
                .into_par_iter()
                .map(|i| columns.kruskal_wallis_at(i).unwrap_or(worst))
                .collect();
            rank_by(&columns.active, &scores, lower_better)
        }
        ScoreMethod::MrmrD | ScoreMethod::MrmrQ => {
            let flavor = if method == ScoreMethod::MrmrD {
                MrmrFlavor::Difference
            } else {
                MrmrFlavor::Quotient
            };
            let ranked = mrmr_rank(&columns, columns.active.len(), flavor, cfg.discretization)?;
            let (order, scores) = ranked.into_iter().unzip();
            (order, scores)
        }
    };
    Ok(FeatureScoreTable {
        node: view.node,
        method,
        rank_order: order,
        scores,
    })
}

fn rank_by(features: &[u32], scores: &[f64], ascending: bool) -> (Vec<u32>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        let ord = scores[a].total_cmp(&scores[b]);
        let ord = if ascending { ord } else { ord.reverse() };
        ord.then(features[a].cmp(&features[b]))
    });
    (
        idx.iter().map(|&i| features[i]).collect(),
        idx.iter().map(|&i| scores[i]).collect(),
    )
}

/// One score table per internal node (parallel over nodes). Nodes whose view
/// has fewer than two effective children get `None`.
pub fn score_all_nodes(
    h: &Hierarchy,
    views: &[NodeTrainingView],
    data: &Dataset,
    method: ScoreMethod,
    cfg: &ScoreConfig,
) -> Vec<Option<FeatureScoreTable>> {
    let mut tables: Vec<Option<FeatureScoreTable>> = vec![None; h.num_nodes()];
    let computed: Vec<(NodeId, Option<FeatureScoreTable>)> = h
        .internal_nodes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|n| {
            let table = match score_node(h, &views[n], data, method, cfg) {
                Ok(t) => Some(t),
                Err(ScoreError::SingleChildNode) => None,
                Err(e) => panic!("scoring node {n}: {e}"),
            };
            (n, table)
        })
        .collect();
    for (n, t) in computed {
        tables[n] = t;
    }
    tables
}
