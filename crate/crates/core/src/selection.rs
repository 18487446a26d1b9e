//! Per-node feature subset selection: a single tuned fraction shared by all
//! internal nodes (global), or an independently tuned fraction per node
//! (adaptive), both searched over a validation split.

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Dataset;
use crate::evaluation::{macro_f1, micro_f1, ConfusionStats};
use crate::hierarchy::{Hierarchy, NodeId, NodeTrainingView};
use crate::predictor::{predict_batch, PredictError};
use crate::scoring::{FeatureScoreTable, ScoreMethod};
use crate::trainer::{routing_accuracy, train_hierarchy, train_node, TrainError, TrainingConfig};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("empty tuning grid")]
    EmptyGrid,
    #[error("invalid tuning grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// Candidate feature fractions, strictly increasing within (0, 1].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TuningGrid {
    pub fractions: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            fractions: vec![0.01, 0.02, 0.05, 0.10, 0.25, 0.40, 0.50, 0.60, 0.75],
        }
    }
}

impl TuningGrid {
    pub fn new(fractions: Vec<f64>) -> Result<Self, SelectionError> {
        if fractions.is_empty() {
            return Err(SelectionError::EmptyGrid);
        }
        if fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SelectionError::InvalidGrid(
                "fractions must strictly increase".into(),
            ));
        }
        if fractions.iter().any(|&f| f <= 0.0 || f > 1.0) {
            return Err(SelectionError::InvalidGrid(
                "fractions must lie in (0, 1]".into(),
            ));
        }
        Ok(TuningGrid { fractions })
    }
}

/// The feature ids one node keeps: always a prefix of that node's score
/// table, stored sorted for fast sparse restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSubset {
    pub node: NodeId,
    features: Vec<u32>,
    pub method: Option<ScoreMethod>,
    pub fraction: f64,
}

impl FeatureSubset {
    pub fn new(
        node: NodeId,
        mut features: Vec<u32>,
        method: Option<ScoreMethod>,
        fraction: f64,
    ) -> Self {
        features.sort_unstable();
        features.dedup();
        FeatureSubset {
            node,
            features,
            method,
            fraction,
        }
    }

    /// Every feature id of the corpus: the no-selection baseline.
    pub fn all_features(node: NodeId, num_features: usize) -> Self {
        FeatureSubset {
            node,
            features: (0..num_features as u32).collect(),
            method: None,
            fraction: 1.0,
        }
    }

    /// Prefix of `table.rank_order` holding `fraction` of the active
    /// features (rounded, at least one).
    pub fn from_table(table: &FeatureScoreTable, fraction: f64) -> Self {
        let len = prefix_len(table.len(), fraction);
        Self::new(
            table.node,
            table.rank_order[..len].to_vec(),
            Some(table.method),
            fraction,
        )
    }

    /// Fraction-sized prefix of a plain active-feature list (ascending ids);
    /// used for nodes whose view cannot be scored (single effective child).
    pub fn from_active(node: NodeId, active: &[u32], fraction: f64) -> Self {
        let len = prefix_len(active.len(), fraction);
        Self::new(node, active[..len].to_vec(), None, fraction)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[u32] {
        &self.features
    }

    pub fn contains(&self, f: u32) -> bool {
        self.features.binary_search(&f).is_ok()
    }

    /// Maps a sparse vector into subset-local coordinates, dropping features
    /// outside the subset.
    pub fn restrict(&self, x: &[(u32, f64)]) -> Vec<(u32, f64)> {
        let Some(&last) = self.features.last() else {
            return Vec::new();
        };
        // identity subsets (0..len) skip the binary search
        if last as usize == self.features.len() - 1 {
            return x
                .iter()
                .copied()
                .filter(|&(f, _)| (f as usize) < self.features.len())
                .collect();
        }
        x.iter()
            .filter_map(|&(f, v)| {
                self.features
                    .binary_search(&f)
                    .ok()
                    .map(|local| (local as u32, v))
            })
            .collect()
    }
}

fn prefix_len(active: usize, fraction: f64) -> usize {
    if active == 0 {
        return 0;
    }
    ((fraction * active as f64).round() as usize).clamp(1, active)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FsMode {
    Global,
    Adaptive,
}

impl std::str::FromStr for FsMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(FsMode::Global),
            "adaptive" => Ok(FsMode::Adaptive),
            other => Err(format!("unknown selection mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMetric {
    MicroF1,
    MacroF1,
}

impl std::str::FromStr for ValidationMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "micro-f1" => Ok(ValidationMetric::MicroF1),
            "macro-f1" => Ok(ValidationMetric::MacroF1),
            other => Err(format!("unknown validation metric '{other}'")),
        }
    }
}

/// Everything a selection search needs: the split data, per-node views on
/// both portions, and the score tables to draw prefixes from.
pub struct SelectionContext<'a> {
    pub hierarchy: &'a Hierarchy,
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
    pub train_views: &'a [NodeTrainingView],
    pub val_views: &'a [NodeTrainingView],
    pub tables: &'a [Option<FeatureScoreTable>],
    pub method: ScoreMethod,
    pub config: TrainingConfig,
    /// Single mid-grid penalty used for the throwaway models during the
    /// fraction search; the real lambda grid runs once afterwards.
    pub tuning_lambda: f64,
    pub metric: ValidationMetric,
    /// Nodes with fewer validation instances fall back to the global
    /// fraction during adaptive selection.
    pub min_node_val_instances: usize,
}

impl SelectionContext<'_> {
    fn active_features(&self, node: NodeId) -> Vec<u32> {
        let mut ids: Vec<u32> = self.train_views[node]
            .rows
            .iter()
            .flat_map(|&(i, _)| self.train.row(i).iter().map(|&(f, _)| f))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn subset_at(&self, node: NodeId, fraction: f64) -> FeatureSubset {
        match &self.tables[node] {
            Some(t) => FeatureSubset::from_table(t, fraction),
            // un-scorable node: plain ascending-id prefix of its active set
            None => FeatureSubset::from_active(node, &self.active_features(node), fraction),
        }
    }

    fn subsets_at(&self, fraction: f64) -> Vec<Option<FeatureSubset>> {
        let mut subsets = vec![None; self.hierarchy.num_nodes()];
        for n in self.hierarchy.internal_nodes() {
            subsets[n] = Some(self.subset_at(n, fraction));
        }
        subsets
    }

    /// End-to-end validation score of throwaway models trained on the train
    /// portion with the given subsets.
    fn end_to_end_score(&self, subsets: &[Option<FeatureSubset>]) -> Result<f64, SelectionError> {
        let model = train_hierarchy(
            self.hierarchy,
            self.train,
            self.train_views,
            subsets,
            self.tuning_lambda,
            &self.config,
        )?;
        let batch = predict_batch(&model, self.validation, false)?;
        let predicted: Vec<u32> = batch
            .leaves
            .iter()
            .map(|&l| self.hierarchy.original_id(l))
            .collect();
        let stats =
            ConfusionStats::from_labels(self.hierarchy, self.validation.labels(), &predicted)
                .expect("validation labels already validated");
        Ok(match self.metric {
            ValidationMetric::MicroF1 => micro_f1(&stats).value,
            ValidationMetric::MacroF1 => macro_f1(&stats),
        })
    }

    /// Routing accuracy of a throwaway node model at one fraction, on the
    /// node's own validation instances.
    fn node_score(&self, node: NodeId, fraction: f64) -> Result<Option<f64>, SelectionError> {
        let subset = self.subset_at(node, fraction);
        let model = train_node(
            self.hierarchy,
            self.train,
            &self.train_views[node],
            &subset,
            self.tuning_lambda,
            &self.config,
        )?;
        Ok(routing_accuracy(
            &model,
            self.validation,
            &self.val_views[node],
        ))
    }
}

/// One node's selection verdict.
#[derive(Debug, Clone)]
pub struct NodeSelection {
    pub subset: FeatureSubset,
    pub validation_score: Option<f64>,
    pub fallback: bool,
    pub val_instances: usize,
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub mode: FsMode,
    pub method: ScoreMethod,
    pub metric: ValidationMetric,
    pub grid: Vec<f64>,
    pub global_fraction: f64,
    pub global_validation_score: f64,
    /// Indexed by dense node id; `Some` at internal nodes.
    pub per_node: Vec<Option<NodeSelection>>,
    pub fallback_nodes: usize,
}

impl SelectionOutcome {
    pub fn subsets(&self) -> Vec<Option<FeatureSubset>> {
        self.per_node
            .iter()
            .map(|s| s.as_ref().map(|ns| ns.subset.clone()))
            .collect()
    }

    /// Selection manifest: one record per internal node.
    pub fn manifest(&self, h: &Hierarchy) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .per_node
            .iter()
            .enumerate()
            .filter_map(|(n, s)| s.as_ref().map(|ns| (n, ns)))
            .map(|(n, ns)| {
                serde_json::json!({
                    "node": h.original_id(n),
                    "method": ns.subset.method.map(|m| m.name()),
                    "fraction": ns.subset.fraction,
                    "subset_size": ns.subset.len(),
                    "validation_score": ns.validation_score,
                    "fallback": ns.fallback,
                    "val_instances": ns.val_instances,
                })
            })
            .collect();
        serde_json::json!({
            "mode": self.mode,
            "method": self.method.name(),
            "metric": self.metric,
            "grid": self.grid,
            "global_fraction": self.global_fraction,
            "global_validation_score": self.global_validation_score,
            "fallback_nodes": self.fallback_nodes,
            "nodes": nodes,
        })
    }
}

/// One fraction for every node, maximizing end-to-end validation score;
/// ties go to the smaller fraction.
pub fn global_select(
    ctx: &SelectionContext,
    grid: &TuningGrid,
) -> Result<SelectionOutcome, SelectionError> {
    if grid.fractions.is_empty() {
        return Err(SelectionError::EmptyGrid);
    }
    let mut best: Option<(f64, f64)> = None; // (score, fraction)
    for &fraction in &grid.fractions {
        let score = ctx.end_to_end_score(&ctx.subsets_at(fraction))?;
        if best.is_none_or(|(bs, _)| score > bs) {
            best = Some((score, fraction));
        }
    }
    let (score, fraction) = best.unwrap();

    // per-node routing accuracy at the winning fraction, for the manifest
    let nodes: Vec<NodeId> = ctx.hierarchy.internal_nodes().collect();
    let rows: Result<Vec<_>, SelectionError> = nodes
        .into_par_iter()
        .map(|n| {
            let val_instances = ctx.val_views[n].count();
            let validation_score = ctx.node_score(n, fraction)?;
            Ok((
                n,
                NodeSelection {
                    subset: ctx.subset_at(n, fraction),
                    validation_score,
                    fallback: false,
                    val_instances,
                },
            ))
        })
        .collect();
    let mut per_node = vec![None; ctx.hierarchy.num_nodes()];
    for (n, sel) in rows? {
        per_node[n] = Some(sel);
    }
    Ok(SelectionOutcome {
        mode: FsMode::Global,
        method: ctx.method,
        metric: ctx.metric,
        grid: grid.fractions.clone(),
        global_fraction: fraction,
        global_validation_score: score,
        per_node,
        fallback_nodes: 0,
    })
}

/// Per-node fractions, each maximizing that node's child-routing accuracy on
/// its own validation instances. Data-sparse nodes (fewer than
/// `ctx.min_node_val_instances` validation rows) and un-scorable nodes fall
/// back to the global winner.
pub fn adaptive_select(
    ctx: &SelectionContext,
    grid: &TuningGrid,
) -> Result<SelectionOutcome, SelectionError> {
    let global = global_select(ctx, grid)?;
    let global_fraction = global.global_fraction;

    let nodes: Vec<NodeId> = ctx.hierarchy.internal_nodes().collect();
    let rows: Result<Vec<_>, SelectionError> = nodes
        .into_par_iter()
        .map(|n| {
            let val_instances = ctx.val_views[n].count();
            if val_instances < ctx.min_node_val_instances || ctx.tables[n].is_none() {
                let validation_score = ctx.node_score(n, global_fraction)?;
                return Ok((
                    n,
                    NodeSelection {
                        subset: ctx.subset_at(n, global_fraction),
                        validation_score,
                        fallback: true,
                        val_instances,
                    },
                ));
            }
            let mut best: Option<(f64, f64)> = None; // (accuracy, fraction)
            let mut at_global = None;
            for &fraction in &grid.fractions {
                let acc = ctx
                    .node_score(n, fraction)?
                    .expect("validation rows present");
                if fraction == global_fraction {
                    at_global = Some(acc);
                }
                if best.is_none_or(|(ba, _)| acc > ba) {
                    best = Some((acc, fraction));
                }
            }
            let (acc, fraction) = best.unwrap();
            // the grid contains the global winner, so the per-node argmax
            // can never score below it
            debug_assert!(at_global.is_none_or(|g| acc >= g));
            Ok((
                n,
                NodeSelection {
                    subset: ctx.subset_at(n, fraction),
                    validation_score: Some(acc),
                    fallback: false,
                    val_instances,
                },
            ))
        })
        .collect();

    let mut per_node = vec![None; ctx.hierarchy.num_nodes()];
    let mut fallback_nodes = 0;
    for (n, sel) in rows? {
        fallback_nodes += sel.fallback as usize;
        per_node[n] = Some(sel);
    }
    Ok(SelectionOutcome {
        mode: FsMode::Adaptive,
        method: ctx.method,
        metric: ctx.metric,
        grid: grid.fractions.clone(),
        global_fraction,
        global_validation_score: global.global_validation_score,
        per_node,
        fallback_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_node_views;
    use crate::scoring::{score_all_nodes, ScoreConfig};
    use crate::synthetic::{PlantedConfig, PlantedDataset};
    use rand::prelude::*;

    fn context<'a>(
        h: &'a Hierarchy,
        train: &'a Dataset,
        val: &'a Dataset,
        train_views: &'a [NodeTrainingView],
        val_views: &'a [NodeTrainingView],
        tables: &'a [Option<FeatureScoreTable>],
    ) -> SelectionContext<'a> {
        SelectionContext {
            hierarchy: h,
            train,
            validation: val,
            train_views,
            val_views,
            tables,
            method: ScoreMethod::Gini,
            config: TrainingConfig::default(),
            tuning_lambda: 1.0,
            metric: ValidationMetric::MicroF1,
            min_node_val_instances: 5,
        }
    }

    fn planted_fixture(seed: u64) -> PlantedDataset {
        PlantedConfig {
            num_features: 120,
            num_instances: 400,
            seed,
            ..Default::default()
        }
        .generate()
    }

    struct Prepared {
        h: Hierarchy,
        train: Dataset,
        val: Dataset,
        train_views: Vec<NodeTrainingView>,
        val_views: Vec<NodeTrainingView>,
        tables: Vec<Option<FeatureScoreTable>>,
    }

    fn prepare(p: &PlantedDataset) -> Prepared {
        let (train, val) = p.data.split(&crate::corpus::SplitSpec::default()).unwrap();
        let train_views = build_node_views(&p.hierarchy, train.labels()).unwrap();
        let val_views = build_node_views(&p.hierarchy, val.labels()).unwrap();
        let tables = score_all_nodes(
            &p.hierarchy,
            &train_views,
            &train,
            ScoreMethod::Gini,
            &ScoreConfig::default(),
        );
        Prepared {
            h: p.hierarchy.clone(),
            train,
            val,
            train_views,
            val_views,
            tables,
        }
    }

    #[test]
    fn restrict_handles_empty_identity_and_sparse_subsets() {
        let x = vec![(0u32, 9.0), (2, 1.0), (5, 2.0), (7, 4.0)];
        let empty = FeatureSubset::new(0, vec![], None, 0.1);
        assert!(empty.restrict(&x).is_empty());
        let identity = FeatureSubset::all_features(0, 6);
        assert_eq!(identity.restrict(&x), vec![(0, 9.0), (2, 1.0), (5, 2.0)]);
        let sparse = FeatureSubset::new(0, vec![2, 5], None, 0.25);
        assert_eq!(sparse.restrict(&x), vec![(0, 1.0), (1, 2.0)]);
    }

    #[test]
    fn grid_validation() {
        assert!(TuningGrid::new(vec![]).is_err());
        assert!(TuningGrid::new(vec![0.5, 0.5]).is_err());
        assert!(TuningGrid::new(vec![0.5, 0.2]).is_err());
        assert!(TuningGrid::new(vec![0.0, 0.5]).is_err());
        assert!(TuningGrid::new(vec![0.5, 1.5]).is_err());
        assert!(TuningGrid::new(vec![0.01, 0.75, 1.0]).is_ok());
    }

    #[test]
    fn prefix_subsets_are_monotone() {
        let table = FeatureScoreTable {
            node: 0,
            method: ScoreMethod::Gini,
            rank_order: vec![9, 3, 5, 1, 7, 0, 2],
            scores: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        };
        let grid = TuningGrid::default();
        let mut prev: Option<FeatureSubset> = None;
        for &f in &grid.fractions {
            let s = FeatureSubset::from_table(&table, f);
            assert!(!s.is_empty());
            if let Some(p) = &prev {
                assert!(
                    p.features().iter().all(|f| s.contains(*f)),
                    "prefix not nested"
                );
            }
            prev = Some(s);
        }
    }

    #[test]
    fn full_fraction_equals_all_active_features() {
        let p = planted_fixture(1);
        let prep = prepare(&p);
        let ctx = context(
            &prep.h,
            &prep.train,
            &prep.val,
            &prep.train_views,
            &prep.val_views,
            &prep.tables,
        );
        let grid = TuningGrid::new(vec![1.0]).unwrap();
        let out = global_select(&ctx, &grid).unwrap();
        assert_eq!(out.global_fraction, 1.0);
        for n in prep.h.internal_nodes() {
            let subset = &out.per_node[n].as_ref().unwrap().subset;
            let active = ctx.active_features(n);
            assert_eq!(subset.features(), &active[..]);
        }
    }

    /// With clean planted markers, a small fraction already carries all the
    /// signal: the tuned fraction stays small and never loses to the
    /// all-features baseline.
    #[test]
    fn planted_signal_tunes_to_a_small_fraction() {
        let p = PlantedConfig {
            num_features: 1000,
            num_instances: 600,
            informative_presence: 0.9,
            off_presence: 0.0,
            seed: 3,
            ..Default::default()
        }
        .generate();
        let prep = prepare(&p);
        let ctx = context(
            &prep.h,
            &prep.train,
            &prep.val,
            &prep.train_views,
            &prep.val_views,
            &prep.tables,
        );
        let grid = TuningGrid::default();
        let out = global_select(&ctx, &grid).unwrap();
        assert!(
            out.global_fraction <= 0.05,
            "fraction {}",
            out.global_fraction
        );

        let all: Vec<Option<FeatureSubset>> = (0..prep.h.num_nodes())
            .map(|n| {
                (!prep.h.is_leaf(n)).then(|| FeatureSubset::all_features(n, p.data.num_features()))
            })
            .collect();
        let all_score = ctx.end_to_end_score(&all).unwrap();
        assert!(
            out.global_validation_score >= all_score,
            "selected {} vs all-features {all_score}",
            out.global_validation_score
        );
    }

    #[test]
    fn tied_fractions_resolve_to_smaller() {
        // feature 0 alone separates the two classes; extra features are dead
        let h = Hierarchy::from_edges(&[(0, 1), (0, 2)]).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = 1 + (i % 2) as u32;
            let sign = if class == 1 { 1.0 } else { -1.0 };
            rows.push(vec![(0u32, sign), (1, 1.0), (2, 1.0)]);
            labels.push(class);
        }
        let d = Dataset::new(3, rows, labels);
        let (train, val) = d.split(&crate::corpus::SplitSpec::default()).unwrap();
        let train_views = build_node_views(&h, train.labels()).unwrap();
        let val_views = build_node_views(&h, val.labels()).unwrap();
        let tables = score_all_nodes(
            &h,
            &train_views,
            &train,
            ScoreMethod::Gini,
            &ScoreConfig::default(),
        );
        let ctx = context(&h, &train, &val, &train_views, &val_views, &tables);
        let grid = TuningGrid::new(vec![0.5, 1.0]).unwrap();
        let out = global_select(&ctx, &grid).unwrap();
        assert_eq!(out.global_validation_score, 1.0);
        assert_eq!(out.global_fraction, 0.5);
    }

    #[test]
    fn single_internal_node_adaptive_equals_global() {
        // star hierarchy: routing accuracy at the root IS end-to-end accuracy
        let mut rng = StdRng::seed_from_u64(7);
        let h = Hierarchy::from_edges(&[(0, 1), (0, 2), (0, 3)]).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..120 {
            let class = rng.random_range(1..4u32);
            let mut row = vec![(class - 1, 1.0 + rng.random_range(0.0..0.5))];
            for f in 3..10u32 {
                if rng.random_bool(0.3) {
                    row.push((f, 1.0));
                }
            }
            row.sort_unstable_by_key(|e| e.0);
            rows.push(row);
            labels.push(class);
        }
        let d = Dataset::new(10, rows, labels);
        let (train, val) = d.split(&crate::corpus::SplitSpec::default()).unwrap();
        let train_views = build_node_views(&h, train.labels()).unwrap();
        let val_views = build_node_views(&h, val.labels()).unwrap();
        let tables = score_all_nodes(
            &h,
            &train_views,
            &train,
            ScoreMethod::Gini,
            &ScoreConfig::default(),
        );
        let ctx = context(&h, &train, &val, &train_views, &val_views, &tables);
        let grid = TuningGrid::new(vec![0.2, 0.6, 1.0]).unwrap();

        let g = global_select(&ctx, &grid).unwrap();
        let a = adaptive_select(&ctx, &grid).unwrap();
        let root = h.root();
        assert_eq!(
            a.per_node[root].as_ref().unwrap().subset,
            g.per_node[root].as_ref().unwrap().subset
        );
        assert_eq!(a.fallback_nodes, 0);
    }

    #[test]
    fn sparse_validation_nodes_fall_back_to_global() {
        let p = planted_fixture(11);
        let prep = prepare(&p);
        // validation set with instances only under leaf 3: node 2 gets none
        let keep: Vec<usize> = (0..prep.val.num_instances())
            .filter(|&i| prep.val.label(i) == 3)
            .collect();
        let tiny_val = prep.val.subset(&keep);
        let val_views = build_node_views(&prep.h, tiny_val.labels()).unwrap();
        let ctx = context(
            &prep.h,
            &prep.train,
            &tiny_val,
            &prep.train_views,
            &val_views,
            &prep.tables,
        );
        let grid = TuningGrid::new(vec![0.1, 0.5]).unwrap();
        let out = adaptive_select(&ctx, &grid).unwrap();
        let node_b = prep.h.node_of(2).unwrap();
        let sel = out.per_node[node_b].as_ref().unwrap();
        assert!(sel.fallback);
        assert_eq!(sel.val_instances, 0);
        assert_eq!(sel.subset.fraction, out.global_fraction);
        assert!(out.fallback_nodes >= 1);
    }

    /// A node whose children separate on one planted feature picks the
    /// smallest fraction even when a sibling needs a larger one.
    #[test]
    fn adaptive_fractions_differ_across_nodes() {
        let mut rng = StdRng::seed_from_u64(13);
        // root(0) -> A(1), B(2); A -> 3, 4; B -> 5, 6
        let h = Hierarchy::from_edges(&[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]).unwrap();
        let nf = 100usize;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..600 {
            let leaf = 3 + (i % 4) as u32;
            let mut row: Vec<(u32, f64)> = Vec::new();
            // feature 0: root discriminant; feature 1 marks leaf 4, so the
            // absent-feature tie at node A already routes leaf 3 correctly
            if leaf <= 4 {
                row.push((0, 1.0));
                if leaf == 4 {
                    row.push((1, 1.0));
                }
            } else {
                // B side: 40 weak features, each mildly informative for b1
                for f in 10..50u32 {
                    let p = if leaf == 5 { 0.55 } else { 0.35 };
                    if rng.random_bool(p) {
                        row.push((f, 1.0));
                    }
                }
            }
            for f in 60..nf as u32 {
                if rng.random_bool(0.1) {
                    row.push((f, 1.0));
                }
            }
            row.sort_unstable_by_key(|e| e.0);
            row.dedup_by_key(|e| e.0);
            rows.push(row);
            labels.push(leaf);
        }
        let d = Dataset::new(nf, rows, labels);
        let (train, val) = d.split(&crate::corpus::SplitSpec::default()).unwrap();
        let train_views = build_node_views(&h, train.labels()).unwrap();
        let val_views = build_node_views(&h, val.labels()).unwrap();
        let tables = score_all_nodes(
            &h,
            &train_views,
            &train,
            ScoreMethod::Gini,
            &ScoreConfig::default(),
        );
        let ctx = context(&h, &train, &val, &train_views, &val_views, &tables);
        let grid = TuningGrid::new(vec![0.01, 0.75]).unwrap();
        let out = adaptive_select(&ctx, &grid).unwrap();

        let node_a = h.node_of(1).unwrap();
        let node_b = h.node_of(2).unwrap();
        let sel_a = out.per_node[node_a].as_ref().unwrap();
        let sel_b = out.per_node[node_b].as_ref().unwrap();
        assert_eq!(sel_a.subset.fraction, 0.01, "A separates on one feature");
        assert_eq!(sel_b.subset.fraction, 0.75, "B needs the wide subset");
        assert_eq!(sel_a.validation_score, Some(1.0));
    }

    #[test]
    fn selection_is_deterministic() {
        let p = planted_fixture(17);
        let prep = prepare(&p);
        let ctx = context(
            &prep.h,
            &prep.train,
            &prep.val,
            &prep.train_views,
            &prep.val_views,
            &prep.tables,
        );
        let grid = TuningGrid::new(vec![0.05, 0.25, 1.0]).unwrap();
        let a = adaptive_select(&ctx, &grid).unwrap();
        let b = adaptive_select(&ctx, &grid).unwrap();
        assert_eq!(a.global_fraction, b.global_fraction);
        for n in prep.h.internal_nodes() {
            assert_eq!(
                a.per_node[n].as_ref().unwrap().subset,
                b.per_node[n].as_ref().unwrap().subset
            );
        }
    }
}
