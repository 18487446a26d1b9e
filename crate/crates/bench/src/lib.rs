//! Shared fixtures for the pipeline benchmarks.

use hicl_core::hierarchy::{build_node_views, NodeTrainingView};
use hicl_core::synthetic::{PlantedConfig, PlantedDataset};

pub struct BenchFixture {
    pub planted: PlantedDataset,
    pub views: Vec<NodeTrainingView>,
}

pub fn fixture(num_features: usize, num_instances: usize) -> BenchFixture {
    let planted = PlantedConfig {
        num_features,
        num_instances,
        seed: 1234,
        ..Default::default()
    }
    .generate();
    let views = build_node_views(&planted.hierarchy, planted.data.labels()).unwrap();
    BenchFixture { planted, views }
}
