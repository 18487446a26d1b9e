//! One-vs-rest logistic regression training for every child of every
//! internal node, on that node's selected feature subset.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Dataset;
use crate::hierarchy::{Hierarchy, NodeId, NodeTrainingView};
use crate::optim::{solve, LogRegProblem};
use crate::selection::FeatureSubset;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainError {
    #[error("node {0}: no training instances reach this node")]
    NoInstances(u32),
    #[error("node {0}: empty lambda grid")]
    EmptyGrid(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    L1,
    L2,
}

impl std::str::FromStr for Regularizer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "l1" => Ok(Regularizer::L1),
            "l2" => Ok(Regularizer::L2),
            other => Err(format!("unknown regularizer '{other}' (expected l1 or l2)")),
        }
    }
}

/// Solver and penalty configuration. `lambda_grid` multiplies the loss term,
/// so larger values regularize less; the grid is searched on validation
/// routing accuracy per node.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingConfig {
    pub lambda_grid: Vec<f64>,
    pub regularizer: Regularizer,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda_grid: vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
            regularizer: Regularizer::L1,
            max_epochs: 500,
            tolerance: 1e-6,
            seed: 42,
        }
    }
}

/// The fitted one-vs-rest weight vectors for one internal node, restricted
/// to the node's feature subset. No bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    pub node: NodeId,
    pub children: Vec<NodeId>,
    pub subset: FeatureSubset,
    pub lambda: f64,
    /// One weight vector per child, each of length `subset.len()`.
    pub weights: Vec<Vec<f32>>,
}

impl NodeModel {
    /// Zero-weight model; a single-child node routes unconditionally.
    pub fn trivial(
        node: NodeId,
        children: Vec<NodeId>,
        subset: FeatureSubset,
        lambda: f64,
    ) -> Self {
        let weights = vec![vec![0.0; subset.len()]; children.len()];
        NodeModel {
            node,
            children,
            subset,
            lambda,
            weights,
        }
    }

    pub fn parameter_count(&self) -> u64 {
        self.children.len() as u64 * self.subset.len() as u64
    }

    /// Fraction of exactly-zero weights across all children.
    pub fn sparsity(&self) -> f64 {
        let total: usize = self.weights.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let zeros: usize = self
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .filter(|&&v| v == 0.0)
            .count();
        zeros as f64 / total as f64
    }

    /// Per-child scores for a full-feature-space sparse vector.
    pub fn scores(&self, x: &[(u32, f64)]) -> Vec<f64> {
        // restrict x to the subset once, then dot with every child
        let local = self.subset.restrict(x);
        self.weights
            .iter()
            .map(|w| local.iter().map(|&(j, v)| w[j as usize] as f64 * v).sum())
            .collect()
    }

    /// Child with the maximal score; ties go to the smallest child id.
    pub fn route(&self, x: &[(u32, f64)]) -> (NodeId, Vec<f64>) {
        let scores = self.scores(x);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        (self.children[best], scores)
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainingManifest {
    pub config: TrainingConfig,
    /// (original node id, seconds) per trained node.
    pub per_node_seconds: Vec<(u32, f64)>,
    pub total_seconds: f64,
    pub parameter_count: u64,
}

/// The complete top-down classifier: one `NodeModel` per internal node plus
/// the taxonomy it was trained against.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub hierarchy: Hierarchy,
    pub num_features: usize,
    /// Indexed by dense node id; `Some` exactly at internal nodes.
    pub models: Vec<Option<NodeModel>>,
    pub manifest: TrainingManifest,
    /// Frozen idf weights when the training pipeline applied tf-idf.
    pub idf: Option<Vec<f64>>,
}

impl TrainedModel {
    pub fn parameter_count(&self) -> u64 {
        self.models
            .iter()
            .flatten()
            .map(NodeModel::parameter_count)
            .sum()
    }

    pub fn node_model(&self, node: NodeId) -> Option<&NodeModel> {
        self.models[node].as_ref()
    }

    /// Weight sparsity pooled over every node model.
    pub fn sparsity(&self) -> f64 {
        let mut zeros = 0usize;
        let mut total = 0usize;
        for m in self.models.iter().flatten() {
            for w in &m.weights {
                total += w.len();
                zeros += w.iter().filter(|&&v| v == 0.0).count();
            }
        }
        if total == 0 {
            0.0
        } else {
            zeros as f64 / total as f64
        }
    }
}

/// `sum over internal nodes of children(n) * subset_size(n)`: the stored
/// model size in weights, computable without fitting anything.
pub fn parameter_count_for(h: &Hierarchy, subset_size: impl Fn(NodeId) -> usize) -> u64 {
    h.internal_nodes()
        .map(|n| h.children(n).len() as u64 * subset_size(n) as u64)
        .sum()
}

/// View data restricted to a subset's coordinates.
struct NodeProblem {
    rows: Vec<Vec<(u32, f64)>>,
    classes: Vec<usize>,
}

fn restrict_rows(
    data: &Dataset,
    view: &NodeTrainingView,
    children: &[NodeId],
    subset: &FeatureSubset,
) -> NodeProblem {
    let identity = subset.len() == data.num_features();
    let rows = view
        .rows
        .iter()
        .map(|&(instance, _)| {
            if identity {
                data.row(instance).to_vec()
            } else {
                subset.restrict(data.row(instance))
            }
        })
        .collect();
    let classes = view
        .rows
        .iter()
        .map(|&(_, child)| {
            children
                .binary_search(&child)
                .expect("child not under node")
        })
        .collect();
    NodeProblem { rows, classes }
}

/// Fits one-vs-rest weight vectors for every child of `view.node` at a fixed
/// `lambda`. A structurally single-child node yields the trivial model.
pub fn train_node(
    h: &Hierarchy,
    data: &Dataset,
    view: &NodeTrainingView,
    subset: &FeatureSubset,
    lambda: f64,
    cfg: &TrainingConfig,
) -> Result<NodeModel, TrainError> {
    let node = view.node;
    let children = h.children(node).to_vec();
    if children.len() == 1 {
        return Ok(NodeModel::trivial(node, children, subset.clone(), lambda));
    }
    if view.rows.is_empty() {
        return Err(TrainError::NoInstances(h.original_id(node)));
    }
    let problem = restrict_rows(data, view, &children, subset);
    let dim = subset.len();
    let weights: Vec<Vec<f32>> = (0..children.len())
        .into_par_iter()
        .map(|c| {
            let labels: Vec<f64> = problem
                .classes
                .iter()
                .map(|&k| if k == c { 1.0 } else { -1.0 })
                .collect();
            let p = LogRegProblem {
                rows: &problem.rows,
                labels: &labels,
                dim,
                lambda,
                reg: cfg.regularizer,
            };
            let out = solve(&p, cfg.max_epochs, cfg.tolerance);
            out.weights.into_iter().map(|w| w as f32).collect()
        })
        .collect();
    Ok(NodeModel {
        node,
        children,
        subset: subset.clone(),
        lambda,
        weights,
    })
}

/// Fraction of a node's validation rows routed to the correct child.
/// Returns `None` when the view is empty.
pub fn routing_accuracy(model: &NodeModel, data: &Dataset, view: &NodeTrainingView) -> Option<f64> {
    if view.rows.is_empty() {
        return None;
    }
    let correct = view
        .rows
        .iter()
        .filter(|&&(instance, child)| model.route(data.row(instance)).0 == child)
        .count();
    Some(correct as f64 / view.rows.len() as f64)
}

/// Grid-searches `cfg.lambda_grid` on validation routing accuracy at one
/// node (ties to the smaller lambda), then retrains at the winner on the
/// full training portion. Nodes without validation rows take the middle
/// grid value.
#[allow(clippy::too_many_arguments)]
pub fn tune_lambda(
    h: &Hierarchy,
    train: &Dataset,
    train_view: &NodeTrainingView,
    val: &Dataset,
    val_view: &NodeTrainingView,
    full: &Dataset,
    full_view: &NodeTrainingView,
    subset: &FeatureSubset,
    cfg: &TrainingConfig,
) -> Result<(f64, NodeModel), TrainError> {
    if cfg.lambda_grid.is_empty() {
        return Err(TrainError::EmptyGrid(h.original_id(train_view.node)));
    }
    let best_lambda = if val_view.rows.is_empty() || cfg.lambda_grid.len() == 1 {
        cfg.lambda_grid[cfg.lambda_grid.len() / 2]
    } else {
        let mut best: Option<(f64, f64)> = None; // (accuracy, lambda)
        for &lambda in &cfg.lambda_grid {
            let model = train_node(h, train, train_view, subset, lambda, cfg)?;
            let acc = routing_accuracy(&model, val, val_view).unwrap();
            if best.is_none_or(|(ba, _)| acc > ba) {
                best = Some((acc, lambda));
            }
        }
        best.unwrap().1
    };
    let final_model = train_node(h, full, full_view, subset, best_lambda, cfg)?;
    Ok((best_lambda, final_model))
}

fn assemble(
    h: &Hierarchy,
    num_features: usize,
    cfg: &TrainingConfig,
    trained: Vec<(NodeId, NodeModel, f64)>,
    total_seconds: f64,
) -> TrainedModel {
    let mut models: Vec<Option<NodeModel>> = vec![None; h.num_nodes()];
    let mut per_node_seconds = Vec::with_capacity(trained.len());
    for (node, model, secs) in trained {
        per_node_seconds.push((h.original_id(node), secs));
        models[node] = Some(model);
    }
    per_node_seconds.sort_by_key(|a| a.0);
    let parameter_count = models
        .iter()
        .flatten()
        .map(NodeModel::parameter_count)
        .sum();
    TrainedModel {
        hierarchy: h.clone(),
        num_features,
        models,
        manifest: TrainingManifest {
            config: cfg.clone(),
            per_node_seconds,
            total_seconds,
            parameter_count,
        },
        idf: None,
    }
}

/// Trains every internal node at a fixed `lambda`. `subsets` must cover all
/// internal nodes.
pub fn train_hierarchy(
    h: &Hierarchy,
    data: &Dataset,
    views: &[NodeTrainingView],
    subsets: &[Option<FeatureSubset>],
    lambda: f64,
    cfg: &TrainingConfig,
) -> Result<TrainedModel, TrainError> {
    let start = Instant::now();
    let nodes: Vec<NodeId> = h.internal_nodes().collect();
    let trained: Result<Vec<_>, TrainError> = nodes
        .into_par_iter()
        .map(|n| {
            let subset = subsets[n]
                .as_ref()
                .expect("subset missing for internal node");
            let t0 = Instant::now();
            let model = train_node(h, data, &views[n], subset, lambda, cfg)?;
            Ok((n, model, t0.elapsed().as_secs_f64()))
        })
        .collect();
    Ok(assemble(
        h,
        data.num_features(),
        cfg,
        trained?,
        start.elapsed().as_secs_f64(),
    ))
}

/// Full protocol: per-node lambda grid search on the validation split, then
/// retraining on the complete training data with the winning lambda.
#[allow(clippy::too_many_arguments)]
pub fn train_hierarchy_tuned(
    h: &Hierarchy,
    train: &Dataset,
    train_views: &[NodeTrainingView],
    val: &Dataset,
    val_views: &[NodeTrainingView],
    full: &Dataset,
    full_views: &[NodeTrainingView],
    subsets: &[Option<FeatureSubset>],
    cfg: &TrainingConfig,
) -> Result<TrainedModel, TrainError> {
    let start = Instant::now();
    let nodes: Vec<NodeId> = h.internal_nodes().collect();
    let trained: Result<Vec<_>, TrainError> = nodes
        .into_par_iter()
        .map(|n| {
            let subset = subsets[n]
                .as_ref()
                .expect("subset missing for internal node");
            let t0 = Instant::now();
            let (_, model) = tune_lambda(
                h,
                train,
                &train_views[n],
                val,
                &val_views[n],
                full,
                &full_views[n],
                subset,
                cfg,
            )?;
            Ok((n, model, t0.elapsed().as_secs_f64()))
        })
        .collect();
    Ok(assemble(
        h,
        full.num_features(),
        cfg,
        trained?,
        start.elapsed().as_secs_f64(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_node_views;
    use crate::selection::FeatureSubset;
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

    fn star(n_leaves: u32) -> Hierarchy {
        let edges: Vec<(u32, u32)> = (1..=n_leaves).map(|c| (0, c)).collect();
        Hierarchy::from_edges(&edges).unwrap()
    }

    fn full_subset(node: NodeId, num_features: usize) -> FeatureSubset {
        FeatureSubset::all_features(node, num_features)
    }

    fn separable_fixture() -> (Hierarchy, Dataset) {
        let h = star(2);
        let rows: Vec<Vec<(u32, f64)>> = (0..20)
            .map(|i| vec![(0u32, if i % 2 == 0 { 1.0 } else { -1.0 })])
            .collect();
        let labels: Vec<u32> = (0..20).map(|i| if i % 2 == 0 { 1 } else { 2 }).collect();
        (h, Dataset::new(1, rows, labels))
    }

    #[test]
    fn separable_node_routes_perfectly() {
        let (h, d) = separable_fixture();
        let views = build_node_views(&h, d.labels()).unwrap();
        let root = h.root();
        let cfg = TrainingConfig {
            regularizer: Regularizer::L2,
            ..Default::default()
        };
        let model = train_node(&h, &d, &views[root], &full_subset(root, 1), 1000.0, &cfg).unwrap();
        assert_eq!(routing_accuracy(&model, &d, &views[root]), Some(1.0));
    }

    #[test]
    fn single_child_node_is_trivial_and_empty_view_errors() {
        let h = Hierarchy::from_edges(&[(0, 1), (1, 2), (1, 3)]).unwrap();
        let d = Dataset::new(1, vec![vec![(0, 1.0)]], vec![2]);
        let views = build_node_views(&h, d.labels()).unwrap();
        let cfg = TrainingConfig::default();
        let root = h.root();
        let trivial = train_node(&h, &d, &views[root], &full_subset(root, 1), 1.0, &cfg).unwrap();
        assert_eq!(trivial.weights, vec![vec![0.0f32]]);

        let h2 = star(2);
        let empty_view = NodeTrainingView {
            node: h2.root(),
            rows: vec![],
        };
        let err = train_node(&h2, &d, &empty_view, &full_subset(h2.root(), 1), 1.0, &cfg);
        assert_eq!(err.unwrap_err(), TrainError::NoInstances(0));
    }

    #[test]
    fn training_is_deterministic_and_thread_count_independent() {
        let mut rng = StdRng::seed_from_u64(5);
        let h = star(3);
        let rows: Vec<Vec<(u32, f64)>> = (0..60)
            .map(|_| sparse_row(&mut rng, 12, 0.4, 0.1, 2.0))
            .collect();
        let labels: Vec<u32> = (0..60).map(|i| (i % 3 + 1) as u32).collect();
        let d = Dataset::new(12, rows, labels);
        let views = build_node_views(&h, d.labels()).unwrap();
        let cfg = TrainingConfig::default();
        let subsets: Vec<Option<FeatureSubset>> = (0..h.num_nodes())
            .map(|n| Some(full_subset(n, 12)))
            .collect();

        let a = train_hierarchy(&h, &d, &views, &subsets, 10.0, &cfg).unwrap();
        let b = train_hierarchy(&h, &d, &views, &subsets, 10.0, &cfg).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| train_hierarchy(&h, &d, &views, &subsets, 10.0, &cfg).unwrap());
        for n in h.internal_nodes() {
            let wa = &a.models[n].as_ref().unwrap().weights;
            assert_eq!(wa, &b.models[n].as_ref().unwrap().weights);
            assert_eq!(wa, &single.models[n].as_ref().unwrap().weights);
        }
    }

    #[test]
    fn subset_restriction_equals_zeroed_full_input() {
        let mut rng = StdRng::seed_from_u64(9);
        let h = star(2);
        let subset_ids: Vec<u32> = vec![1, 3, 4, 7];
        let rows: Vec<Vec<(u32, f64)>> = (0..40)
            .map(|_| sparse_row(&mut rng, 8, 0.5, -1.0, 1.0))
            .collect();
        let labels: Vec<u32> = (0..40).map(|_| rng.random_range(1..3)).collect();
        // zero out off-subset coordinates for the "full" variant
        let zeroed: Vec<Vec<(u32, f64)>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .copied()
                    .filter(|(f, _)| subset_ids.contains(f))
                    .collect()
            })
            .collect();
        let d = Dataset::new(8, rows, labels.clone());
        let dz = Dataset::new(8, zeroed, labels);
        let views = build_node_views(&h, d.labels()).unwrap();
        let cfg = TrainingConfig::default();
        let root = h.root();

        let sub = FeatureSubset::new(root, subset_ids.clone(), None, 0.5);
        let restricted = train_node(&h, &d, &views[root], &sub, 5.0, &cfg).unwrap();
        let full = train_node(&h, &dz, &views[root], &full_subset(root, 8), 5.0, &cfg).unwrap();
        for (c, w) in restricted.weights.iter().enumerate() {
            for (j, &f) in subset_ids.iter().enumerate() {
                assert_eq!(w[j], full.weights[c][f as usize]);
            }
            for f in 0..8u32 {
                if !subset_ids.contains(&f) {
                    assert_eq!(full.weights[c][f as usize], 0.0);
                }
            }
        }
    }

    #[test]
    fn lambda_tuning_prefers_smaller_on_ties_and_singleton_grid() {
        let (h, d) = separable_fixture();
        let (train, val) = d.split(&crate::corpus::SplitSpec::default()).unwrap();
        let train_views = build_node_views(&h, train.labels()).unwrap();
        let val_views = build_node_views(&h, val.labels()).unwrap();
        let full_views = build_node_views(&h, d.labels()).unwrap();
        let root = h.root();
        let subset = full_subset(root, 1);

        // separable data: every lambda achieves accuracy 1.0 -> smallest wins
        let cfg = TrainingConfig {
            regularizer: Regularizer::L2,
            ..Default::default()
        };
        let (lambda, _) = tune_lambda(
            &h,
            &train,
            &train_views[root],
            &val,
            &val_views[root],
            &d,
            &full_views[root],
            &subset,
            &cfg,
        )
        .unwrap();
        assert_eq!(lambda, cfg.lambda_grid[0]);

        let single = TrainingConfig {
            lambda_grid: vec![7.0],
            ..Default::default()
        };
        let (lambda, model) = tune_lambda(
            &h,
            &train,
            &train_views[root],
            &val,
            &val_views[root],
            &d,
            &full_views[root],
            &subset,
            &single,
        )
        .unwrap();
        assert_eq!(lambda, 7.0);
        assert_eq!(model.lambda, 7.0);

        let empty = TrainingConfig {
            lambda_grid: vec![],
            ..Default::default()
        };
        let err = tune_lambda(
            &h,
            &train,
            &train_views[root],
            &val,
            &val_views[root],
            &d,
            &full_views[root],
            &subset,
            &empty,
        );
        assert_eq!(err.unwrap_err(), TrainError::EmptyGrid(0));
    }

    #[test]
    fn node_scores_use_subset_local_coordinates() {
        let subset = FeatureSubset::new(0, vec![2, 5], None, 0.25);
        let model = NodeModel {
            node: 0,
            children: vec![1, 2],
            subset,
            lambda: 1.0,
            weights: vec![vec![1.0, 10.0], vec![-1.0, 0.0]],
        };
        let x = vec![(0u32, 9.0), (2, 1.0), (5, 2.0), (7, 4.0)];
        assert_eq!(model.scores(&x), vec![21.0, -1.0]);
        let (chosen, _) = model.route(&x);
        assert_eq!(chosen, 1);
    }

    #[test]
    fn parameter_count_matches_counting_identity() {
        let h = Hierarchy::from_edges(&crate::synthetic::ng_taxonomy_edges()).unwrap();
        assert_eq!(parameter_count_for(&h, |_| 61_188), 1_652_076);
        // 10%-of-features subsets scale the count exactly
        let tenth = parameter_count_for(&h, |_| 6_119);
        let per_node: u64 = h
            .internal_nodes()
            .map(|n| h.children(n).len() as u64 * 6_119)
            .sum();
        assert_eq!(tenth, per_node);
    }
}
