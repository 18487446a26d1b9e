//! Synthetic taxonomies and planted-feature benchmark data used by the
//! acceptance suite, the sweep driver, and the benchmarks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Dataset;
use crate::hierarchy::Hierarchy;

/// A 28-node taxonomy with the shape of the twenty-newsgroups hierarchy:
/// 8 internal nodes, 20 leaves, height 4, 27 child edges.
pub fn ng_taxonomy_edges() -> Vec<(u32, u32)> {
    vec![
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 4),
        (1, 10),
        (1, 11),
        (4, 5),
        (4, 12),
        (4, 13),
        (5, 14),
        (5, 15),
        (5, 16),
        (2, 6),
        (2, 17),
        (2, 18),
        (2, 19),
        (6, 20),
        (6, 21),
        (6, 22),
        (6, 23),
        (3, 7),
        (3, 24),
        (3, 25),
        (7, 26),
        (7, 27),
        (7, 28),
        (7, 29),
    ]
}

/// A chain of `num_internal` internal nodes with `num_leaves` leaves hanging
/// off the last one. With (1249, 1139) this matches the DMOZ-SMALL node and
/// edge counts.
pub fn chain_taxonomy(num_internal: u32, num_leaves: u32) -> Vec<(u32, u32)> {
    assert!(num_internal >= 1 && num_leaves >= 1);
    let mut edges = Vec::with_capacity((num_internal + num_leaves - 1) as usize);
    for i in 1..num_internal {
        edges.push((i - 1, i));
    }
    for l in 0..num_leaves {
        edges.push((num_internal - 1, num_internal + l));
    }
    edges
}

/// Complete `branching`-ary tree of the given depth; ids in BFS order.
pub fn balanced_taxonomy(branching: u32, depth: u32) -> Vec<(u32, u32)> {
    assert!(branching >= 2 && depth >= 1);
    let mut edges = Vec::new();
    let mut frontier = vec![0u32];
    let mut next_id = 1u32;
    for _ in 0..depth {
        let mut next = Vec::new();
        for &p in &frontier {
            for _ in 0..branching {
                edges.push((p, next_id));
                next.push(next_id);
                next_id += 1;
            }
        }
        frontier = next;
    }
    edges
}

/// Random root -> internals -> leaves tree (levels 0..2) with fan-outs in
/// 2..=4 at both tiers.
pub fn random_three_level_taxonomy(rng: &mut impl Rng) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    let mut next_id = 1u32;
    let internals = rng.random_range(2..=4);
    for _ in 0..internals {
        let internal = next_id;
        next_id += 1;
        edges.push((0, internal));
        for _ in 0..rng.random_range(2..=4) {
            edges.push((internal, next_id));
            next_id += 1;
        }
    }
    edges
}

/// A planted feature and the internal node whose routing decision it marks.
#[derive(Debug, Clone)]
pub struct PlantedFeature {
    pub feature: u32,
    /// Original id of the node where this feature is discriminative.
    pub node: u32,
    /// Leaves under which the feature fires at the high rate.
    pub on_leaves: Vec<u32>,
}

/// Sparse benchmark generator over a 3-level hierarchy: root 0 splits into
/// branches 1 and 2, each carrying `leaves_per_branch` leaf categories. The
/// first `num_informative` features each mark one routing decision (branch
/// membership or a single leaf) and everything else is class-independent
/// background noise.
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub num_features: usize,
    pub num_informative: usize,
    pub num_instances: usize,
    pub leaves_per_branch: usize,
    /// Presence rate of background features.
    pub background_presence: f64,
    /// Presence rate of an informative feature under its "on" leaves.
    pub informative_presence: f64,
    /// Presence rate of an informative feature elsewhere.
    pub off_presence: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            num_features: 1000,
            num_informative: 10,
            num_instances: 2000,
            leaves_per_branch: 2,
            background_presence: 0.02,
            informative_presence: 0.5,
            off_presence: 0.02,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub hierarchy: Hierarchy,
    pub data: Dataset,
    pub informative: Vec<PlantedFeature>,
}

impl PlantedConfig {
    /// Leaf label ids, branch 1 first.
    pub fn leaves(&self) -> Vec<u32> {
        (3..3 + 2 * self.leaves_per_branch as u32).collect()
    }

    pub fn build_hierarchy(&self) -> Hierarchy {
        let mut edges = vec![(0, 1), (0, 2)];
        let leaves = self.leaves();
        let (first, second) = leaves.split_at(self.leaves_per_branch);
        edges.extend(first.iter().map(|&l| (1, l)));
        edges.extend(second.iter().map(|&l| (2, l)));
        Hierarchy::from_edges(&edges).unwrap()
    }

    fn informative_slots(&self) -> Vec<(u32, Vec<u32>)> {
        let leaves = self.leaves();
        let (first, second) = leaves.split_at(self.leaves_per_branch);
        let mut slots = vec![(0, first.to_vec()), (0, second.to_vec())];
        for &l in first {
            slots.push((1, vec![l]));
        }
        for &l in second {
            slots.push((2, vec![l]));
        }
        slots
    }

    pub fn generate(&self) -> PlantedDataset {
        assert!(self.num_informative <= self.num_features);
        let hierarchy = self.build_hierarchy();
        let slots = self.informative_slots();
        let informative: Vec<PlantedFeature> = (0..self.num_informative)
            .map(|f| {
                let (node, on_leaves) = slots[f % slots.len()].clone();
                PlantedFeature {
                    feature: f as u32,
                    node,
                    on_leaves: on_leaves.clone(),
                }
            })
            .collect();

        let leaves = self.leaves();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut rows = Vec::with_capacity(self.num_instances);
        let mut labels = Vec::with_capacity(self.num_instances);
        for i in 0..self.num_instances {
            let leaf = leaves[i % leaves.len()];
            let mut row: Vec<(u32, f64)> = Vec::new();
            for pf in &informative {
                let p = if pf.on_leaves.contains(&leaf) {
                    self.informative_presence
                } else {
                    self.off_presence
                };
                if rng.random_bool(p) {
                    row.push((pf.feature, rng.random_range(1..4) as f64));
                }
            }
            sample_background(
                &mut rng,
                self.num_informative as u32,
                self.num_features as u32,
                self.background_presence,
                &mut row,
            );
            rows.push(row);
            labels.push(leaf);
        }
        PlantedDataset {
            hierarchy,
            data: Dataset::new(self.num_features, rows, labels),
            informative,
        }
    }
}

// Geometric skip sampling: each feature in [start, end) present
// independently with probability `p`, in O(nnz) draws.
fn sample_background(rng: &mut impl Rng, start: u32, end: u32, p: f64, row: &mut Vec<(u32, f64)>) {
    if p <= 0.0 || start >= end {
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut f = start as f64;
    loop {
        let u: f64 = rng.random::<f64>().max(1e-300);
        f += (u.ln() / log_q).floor();
        if f >= end as f64 {
            return;
        }
        row.push((f as u32, rng.random_range(1..4) as f64));
        f += 1.0;
    }
}
