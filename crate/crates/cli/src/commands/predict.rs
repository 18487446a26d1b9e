//! Top-down batch prediction with an on-disk model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use hicl_core::model::{read_model, TransformKind};
use hicl_core::predictor::predict_batch;

use crate::error::CliError;
use crate::manifest::RunManifest;

use super::{ensure_out_dir, load_data};

pub fn run(
    model_path: &Path,
    data_path: &Path,
    out: &Path,
    trace: bool,
    one_based: bool,
    threads: usize,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("predict", threads);
    manifest.add_input(model_path)?;
    manifest.add_input(data_path)?;

    let (model, transform) = manifest.time_stage("load_model", || -> Result<_, CliError> {
        let mut r = BufReader::new(
            File::open(model_path)
                .map_err(|e| CliError::Data(format!("{}: {e}", model_path.display())))?,
        );
        Ok(read_model(&mut r)?)
    })?;
    let raw = manifest.time_stage("load_data", || load_data(data_path, one_based))?;
    let data = manifest.time_stage("transform", || match transform {
        TransformKind::TfidfL2 => {
            let idf = model.idf.as_deref().unwrap_or(&[]);
            raw.apply_tfidf(idf)
        }
        TransformKind::None => raw,
    });

    let batch = manifest.time_stage("predict", || predict_batch(&model, &data, trace))?;
    if batch.dropped_features > 0 {
        eprintln!(
            "warning: dropped {} feature occurrences beyond the model's {}-feature space",
            batch.dropped_features, model.num_features
        );
    }

    ensure_out_dir(out)?;
    let pred_path = out.join("predictions.tsv");
    let mut w = BufWriter::new(File::create(&pred_path)?);
    let h = &model.hierarchy;
    for (i, &leaf) in batch.leaves.iter().enumerate() {
        write!(w, "{i}\t{}", h.original_id(leaf))?;
        if let Some(traces) = &batch.traces {
            let path: Vec<String> = traces[i]
                .path
                .iter()
                .map(|step| {
                    let score = step
                        .scores
                        .iter()
                        .find(|&&(c, _)| c == step.chosen)
                        .map(|&(_, s)| s)
                        .unwrap_or(0.0);
                    format!(
                        "{}:{}:{score}",
                        h.original_id(step.node),
                        h.original_id(step.chosen)
                    )
                })
                .collect();
            write!(w, "\t{}", path.join(","))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    manifest.record_output(&pred_path);
    manifest.config = serde_json::json!({
        "trace": trace,
        "one_based": one_based,
        "transform": transform,
    });
    manifest.stages_seconds.push((
        "mean_seconds_per_instance".into(),
        batch.mean_seconds_per_instance,
    ));
    println!(
        "predicted {} instances in {:.3}s ({:.1} dot products/instance)",
        batch.leaves.len(),
        batch.seconds,
        if batch.leaves.is_empty() {
            0.0
        } else {
            batch.dot_products as f64 / batch.leaves.len() as f64
        },
    );
    manifest.write(out)?;
    Ok(())
}
