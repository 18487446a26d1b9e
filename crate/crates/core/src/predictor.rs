//! Greedy top-down prediction: descend from the root, at each internal node
//! scoring the children against the node's subset-restricted input and
//! following the argmax (ties to the smallest child id).

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Dataset;
use crate::hierarchy::NodeId;
use crate::trainer::TrainedModel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PredictError {
    #[error("no model stored for internal node {0}")]
    ModelIncomplete(u32),
}

#[derive(Debug, Clone)]
pub struct TraceStep {
    pub node: NodeId,
    pub chosen: NodeId,
    pub scores: Vec<(NodeId, f64)>,
}

/// The root-to-leaf decision path for one instance.
#[derive(Debug, Clone)]
pub struct PredictionTrace {
    pub instance: usize,
    pub path: Vec<TraceStep>,
    pub leaf: NodeId,
    /// Weight-vector dot products evaluated (= sum of fan-outs on the path).
    pub dot_products: usize,
    /// Input features at ids beyond the training feature space, dropped.
    pub dropped_features: usize,
}

pub fn predict(m: &TrainedModel, x: &[(u32, f64)]) -> Result<PredictionTrace, PredictError> {
    predict_instance(m, x, 0)
}

pub fn predict_instance(
    m: &TrainedModel,
    x: &[(u32, f64)],
    instance: usize,
) -> Result<PredictionTrace, PredictError> {
    let h = &m.hierarchy;
    let dropped = x
        .iter()
        .filter(|&&(f, _)| f as usize >= m.num_features)
        .count();
    let mut path = Vec::with_capacity(h.height() as usize);
    let mut dot_products = 0;
    let mut cur = h.root();
    while !h.is_leaf(cur) {
        let model = m
            .node_model(cur)
            .ok_or_else(|| PredictError::ModelIncomplete(h.original_id(cur)))?;
        let (chosen, scores) = model.route(x);
        dot_products += model.children.len();
        path.push(TraceStep {
            node: cur,
            chosen,
            scores: model.children.iter().copied().zip(scores).collect(),
        });
        cur = chosen;
    }
    Ok(PredictionTrace {
        instance,
        path,
        leaf: cur,
        dot_products,
        dropped_features: dropped,
    })
}

#[derive(Debug)]
pub struct BatchPrediction {
    pub leaves: Vec<NodeId>,
    pub traces: Option<Vec<PredictionTrace>>,
    pub seconds: f64,
    pub mean_seconds_per_instance: f64,
    pub dot_products: u64,
    pub dropped_features: u64,
}

/// Predicts every instance (in parallel, order preserved); identical to
/// sequential `predict` calls.
pub fn predict_batch(
    m: &TrainedModel,
    data: &Dataset,
    keep_traces: bool,
) -> Result<BatchPrediction, PredictError> {
    let start = Instant::now();
    let traces: Result<Vec<PredictionTrace>, PredictError> = (0..data.num_instances())
        .into_par_iter()
        .map(|i| predict_instance(m, data.row(i), i))
        .collect();
    let traces = traces?;
    let seconds = start.elapsed().as_secs_f64();
    let n = data.num_instances();
    Ok(BatchPrediction {
        leaves: traces.iter().map(|t| t.leaf).collect(),
        dot_products: traces.iter().map(|t| t.dot_products as u64).sum(),
        dropped_features: traces.iter().map(|t| t.dropped_features as u64).sum(),
        traces: keep_traces.then_some(traces),
        seconds,
        mean_seconds_per_instance: if n == 0 { 0.0 } else { seconds / n as f64 },
    })
}
