//! Top-down hierarchical classification over large sparse datasets, with
//! filter-based feature selection (Gini-Index, MRMR-D/Q, Kruskal-Wallis)
//! embedded at every internal node of the taxonomy.
//!
//! The pipeline: parse a taxonomy and a LIBSVM-style corpus, score features
//! per internal node, pick a feature fraction per node (globally or
//! adaptively, tuned on a held-out validation split), fit one-vs-rest
//! logistic regression among siblings on the reduced features, and predict
//! greedily from the root down.

pub mod corpus;
pub mod evaluation;
pub mod hierarchy;
pub mod model;
pub mod optim;
pub mod predictor;
pub mod scoring;
pub mod selection;
pub mod synthetic;
pub mod trainer;

pub use corpus::{Dataset, SplitSpec};
pub use hierarchy::{Hierarchy, NodeTrainingView};
pub use predictor::PredictionTrace;
pub use scoring::{FeatureScoreTable, ScoreMethod};
pub use selection::{FeatureSubset, FsMode, SelectionOutcome, TuningGrid};
pub use trainer::{NodeModel, Regularizer, TrainedModel, TrainingConfig};
