//! Full training pipeline: split, score, select, tune lambda, retrain on
//! the complete training data, and write the model plus manifests.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use hicl_core::corpus::Dataset;
use hicl_core::hierarchy::{build_node_views, Hierarchy};
use hicl_core::model::{write_model, write_model_json, TransformKind};
use hicl_core::scoring::score_all_nodes;
use hicl_core::selection::{
    adaptive_select, global_select, FeatureSubset, FsMode, SelectionContext, SelectionOutcome,
    TuningGrid,
};
use hicl_core::trainer::{train_hierarchy_tuned, TrainedModel};

use crate::config::{EffectiveTrainConfig, TrainFlags};
use crate::error::CliError;
use crate::manifest::RunManifest;

use super::{ensure_out_dir, load_data, load_taxonomy, write_json};

/// Runs the whole fitting protocol on already-transformed data: 90:10
/// split, per-node scoring, fraction selection, lambda tuning, and the
/// final retraining on the complete data.
pub(crate) fn fit(
    hierarchy: &Hierarchy,
    data: &Dataset,
    cfg: &EffectiveTrainConfig,
    manifest: &mut RunManifest,
) -> Result<(TrainedModel, Option<SelectionOutcome>), CliError> {
    let (train, val) = data.split(&cfg.split_spec())?;
    let train_views = build_node_views(hierarchy, train.labels())?;
    let val_views = build_node_views(hierarchy, val.labels())?;
    let full_views = build_node_views(hierarchy, data.labels())?;

    let training_config = cfg.training_config();
    let selection: Option<SelectionOutcome> = match cfg.fs_method {
        None => None,
        Some(method) => {
            let tables = manifest.time_stage("fs_scoring", || {
                score_all_nodes(hierarchy, &train_views, &train, method, &cfg.score_config())
            });
            let grid = TuningGrid::new(cfg.fs_grid.clone())?;
            let ctx = SelectionContext {
                hierarchy,
                train: &train,
                validation: &val,
                train_views: &train_views,
                val_views: &val_views,
                tables: &tables,
                method,
                config: training_config.clone(),
                tuning_lambda: 1.0,
                metric: cfg.fs_metric,
                min_node_val_instances: cfg.fs_min_val_instances,
            };
            let outcome = manifest.time_stage("fs_selection", || match cfg.fs_mode {
                FsMode::Global => global_select(&ctx, &grid),
                FsMode::Adaptive => adaptive_select(&ctx, &grid),
            })?;
            Some(outcome)
        }
    };

    let subsets = match &selection {
        Some(outcome) => outcome.subsets(),
        None => (0..hierarchy.num_nodes())
            .map(|n| {
                (!hierarchy.is_leaf(n)).then(|| FeatureSubset::all_features(n, data.num_features()))
            })
            .collect(),
    };

    let model = manifest.time_stage("training", || {
        train_hierarchy_tuned(
            hierarchy,
            &train,
            &train_views,
            &val,
            &val_views,
            data,
            &full_views,
            &subsets,
            &training_config,
        )
    })?;
    Ok((model, selection))
}

pub fn run(
    taxonomy: &Path,
    data_path: &Path,
    out: &Path,
    json_model: bool,
    flags: &TrainFlags,
    threads: usize,
) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    println!("seed: {}", cfg.seed);

    let mut manifest = RunManifest::new("train", threads);
    manifest.seed = Some(cfg.seed);
    manifest.config = serde_json::to_value(&cfg).expect("config serializes");
    manifest.add_input(taxonomy)?;
    manifest.add_input(data_path)?;

    let mut hierarchy = manifest.time_stage("load_taxonomy", || load_taxonomy(taxonomy))?;
    if cfg.flat {
        hierarchy = flatten(&hierarchy);
    }
    let raw = manifest.time_stage("load_data", || load_data(data_path, cfg.one_based))?;
    let (data, idf) = manifest.time_stage("transform", || {
        if cfg.tfidf {
            let (d, idf) = raw.tfidf_transform();
            (d, Some(idf))
        } else {
            (raw, None)
        }
    });

    let (mut model, selection) = fit(&hierarchy, &data, &cfg, &mut manifest)?;
    model.idf = idf;
    let transform = if cfg.tfidf {
        TransformKind::TfidfL2
    } else {
        TransformKind::None
    };

    ensure_out_dir(out)?;
    let model_path = out.join("model.bin");
    manifest.time_stage("write_model", || -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(&model_path)?);
        write_model(&model, transform, &mut w).map_err(CliError::from)
    })?;
    manifest.record_output(&model_path);

    if json_model {
        let json_path = out.join("model.json");
        let mut w = BufWriter::new(File::create(&json_path)?);
        write_model_json(&model, transform, &mut w)?;
        manifest.record_output(&json_path);
    }

    if let Some(outcome) = &selection {
        let path = out.join("selection.json");
        write_json(&path, &outcome.manifest(&hierarchy))?;
        manifest.record_output(&path);
    }

    println!(
        "trained {} node models, {} parameters ({}), total {:.2}s",
        hierarchy.num_internal(),
        model.parameter_count(),
        hicl_core::evaluation::human_size(model.parameter_count() * 4),
        model.manifest.total_seconds,
    );
    manifest.write(out)?;
    Ok(())
}

fn flatten(h: &Hierarchy) -> Hierarchy {
    let root = h.original_id(h.root());
    let edges: Vec<(u32, u32)> = h.leaves().map(|l| (root, h.original_id(l))).collect();
    Hierarchy::from_edges(&edges).expect("flattened tree is valid")
}
