//! Deterministic full-batch proximal gradient solver for the per-child
//! regularized logistic regression problems.
//!
//! The objective is `lambda * sum_i log(1 + exp(-y_i w.x_i)) + R(w)` with
//! `R` either the l1 norm (soft-threshold prox) or the squared l2 norm
//! (closed-form shrink). Note `lambda` multiplies the loss, so larger
//! values mean weaker regularization. Backtracking line search keeps the
//! objective non-increasing every epoch.

use crate::trainer::Regularizer;

pub struct LogRegProblem<'a> {
    pub rows: &'a [Vec<(u32, f64)>],
    pub labels: &'a [f64], // +1 / -1
    pub dim: usize,
    pub lambda: f64,
    pub reg: Regularizer,
}

pub struct SolveOutcome {
    pub weights: Vec<f64>,
    /// Objective after every epoch, starting with the value at zero.
    pub objectives: Vec<f64>,
    pub converged: bool,
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogRegProblem<'_> {
    fn margins(&self, w: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(f, v)| w[f as usize] * v).sum())
            .collect()
    }

    fn smooth_from_margins(&self, margins: &[f64]) -> f64 {
        self.lambda
            * margins
                .iter()
                .zip(self.labels)
                .map(|(&m, &y)| log1p_exp(-y * m))
                .sum::<f64>()
    }

    fn regularizer(&self, w: &[f64]) -> f64 {
        match self.reg {
            Regularizer::L1 => w.iter().map(|v| v.abs()).sum(),
            Regularizer::L2 => w.iter().map(|v| v * v).sum(),
        }
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        self.smooth_from_margins(&self.margins(w)) + self.regularizer(w)
    }

    pub fn smooth_objective(&self, w: &[f64]) -> f64 {
        self.smooth_from_margins(&self.margins(w))
    }

    /// Gradient of the smooth (loss) part only.
    pub fn smooth_grad(&self, w: &[f64]) -> Vec<f64> {
        self.smooth_grad_from_margins(&self.margins(w))
    }

    fn smooth_grad_from_margins(&self, margins: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for ((row, &m), &y) in self.rows.iter().zip(margins).zip(self.labels) {
            let coef = -self.lambda * y * sigmoid(-y * m);
            for &(f, v) in row {
                g[f as usize] += coef * v;
            }
        }
        g
    }

    fn prox(&self, v: &[f64], step: f64) -> Vec<f64> {
        match self.reg {
            Regularizer::L1 => v
                .iter()
                .map(|&x| {
                    let shrunk = x.abs() - step;
                    if shrunk <= 0.0 {
                        0.0
                    } else {
                        shrunk.copysign(x)
                    }
                })
                .collect(),
            Regularizer::L2 => v.iter().map(|&x| x / (1.0 + 2.0 * step)).collect(),
        }
    }
}

pub fn solve(p: &LogRegProblem, max_epochs: usize, tolerance: f64) -> SolveOutcome {
    let mut w = vec![0.0f64; p.dim];
    let mut margins = vec![0.0f64; p.rows.len()];
    let mut smooth = p.smooth_from_margins(&margins);
    let mut objective = smooth + p.regularizer(&w);
    let mut objectives = vec![objective];
    let mut step = 1.0f64;
    let mut converged = false;

    for _ in 0..max_epochs {
        let grad = p.smooth_grad_from_margins(&margins);
        let mut accepted = None;
        while step > 1e-20 {
            let shifted: Vec<f64> = w
                .iter()
                .zip(&grad)
                .map(|(&wi, &gi)| wi - step * gi)
                .collect();
            let cand = p.prox(&shifted, step);
            let cand_margins = p.margins(&cand);
            let cand_smooth = p.smooth_from_margins(&cand_margins);
            let lin: f64 = grad
                .iter()
                .zip(cand.iter().zip(&w))
                .map(|(&g, (&c, &o))| g * (c - o))
                .sum();
            let sq: f64 = cand.iter().zip(&w).map(|(&c, &o)| (c - o) * (c - o)).sum();
            if cand_smooth <= smooth + lin + sq / (2.0 * step) + 1e-12 * smooth.abs() {
                accepted = Some((cand, cand_margins, cand_smooth));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_margins, cand_smooth)) = accepted else {
            converged = true; // step size underflow: no descent direction left
            break;
        };
        let moved = cand != w;
        w = cand;
        margins = cand_margins;
        smooth = cand_smooth;
        let new_objective = smooth + p.regularizer(&w);
        objectives.push(new_objective);
        let decrease = objective - new_objective;
        let done = !moved || decrease < tolerance * objective.abs().max(1.0);
        objective = new_objective;
        if done {
            converged = true;
            break;
        }
        step = (step * 1.5).min(1e12);
    }

    SolveOutcome {
        weights: w,
        objectives,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn sparse_row(rng: &mut StdRng, dim: u32, density: f64, lo: f64, hi: f64) -> Vec<(u32, f64)> {
        let mut row = Vec::new();
        for f in 0..dim {
            if rng.random_bool(density) {
                row.push((f, rng.random_range(lo..hi)));
            }
        }
        row
    }

    fn random_problem(rng: &mut StdRng, n: usize, dim: usize) -> (Vec<Vec<(u32, f64)>>, Vec<f64>) {
        let rows: Vec<Vec<(u32, f64)>> = (0..n)
            .map(|_| sparse_row(rng, dim as u32, 0.6, -2.0, 2.0))
            .collect();
        let labels: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        (rows, labels)
    }

    /// Oracle: central finite differences of the smooth objective.
    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(41);
        let (rows, labels) = random_problem(&mut rng, 20, 10);
        let p = LogRegProblem {
            rows: &rows,
            labels: &labels,
            dim: 10,
            lambda: 1.0,
            reg: Regularizer::L1,
        };
        for _ in 0..5 {
            let w: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = p.smooth_grad(&w);
            let h = 1e-6;
            let mut max_rel = 0.0f64;
            for i in 0..10 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (p.smooth_objective(&wp) - p.smooth_objective(&wm)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel < 1e-5, "max relative error {max_rel}");
        }
    }

    #[test]
    fn objective_is_monotone_and_beats_zero_vector() {
        let mut rng = StdRng::seed_from_u64(42);
        for reg in [Regularizer::L1, Regularizer::L2] {
            let (rows, labels) = random_problem(&mut rng, 30, 8);
            let p = LogRegProblem {
                rows: &rows,
                labels: &labels,
                dim: 8,
                lambda: 2.0,
                reg,
            };
            let out = solve(&p, 300, 1e-9);
            for pair in out.objectives.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9, "objective increased: {pair:?}");
            }
            let at_zero = p.objective(&[0.0; 8]);
            assert!(p.objective(&out.weights) <= at_zero);
        }
    }

    #[test]
    fn separable_problem_is_fit_perfectly() {
        // x = +1 -> class +1, x = -1 -> class -1; weak regularization
        let rows: Vec<Vec<(u32, f64)>> = (0..10)
            .map(|i| vec![(0u32, if i % 2 == 0 { 1.0 } else { -1.0 })])
            .collect();
        let labels: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let p = LogRegProblem {
            rows: &rows,
            labels: &labels,
            dim: 1,
            lambda: 1000.0,
            reg: Regularizer::L2,
        };
        let out = solve(&p, 500, 1e-9);
        assert!(out.weights[0] > 0.0);
        for (row, &y) in rows.iter().zip(&labels) {
            let m: f64 = row.iter().map(|&(f, v)| out.weights[f as usize] * v).sum();
            assert!(m * y > 0.0, "misrouted training point");
        }
    }

    #[test]
    fn vanishing_lambda_shrinks_weights_to_zero() {
        let mut rng = StdRng::seed_from_u64(43);
        let (rows, labels) = random_problem(&mut rng, 25, 6);
        let p = LogRegProblem {
            rows: &rows,
            labels: &labels,
            dim: 6,
            lambda: 1e-9,
            reg: Regularizer::L2,
        };
        let out = solve(&p, 500, 1e-12);
        let norm: f64 = out.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "norm {norm}");
    }

    #[test]
    fn strong_l1_regularization_zeroes_everything() {
        let mut rng = StdRng::seed_from_u64(44);
        let (rows, labels) = random_problem(&mut rng, 25, 6);
        let p = LogRegProblem {
            rows: &rows,
            labels: &labels,
            dim: 6,
            lambda: 1e-6,
            reg: Regularizer::L1,
        };
        let out = solve(&p, 500, 1e-12);
        assert!(out.weights.iter().all(|&v| v == 0.0));
    }
}
