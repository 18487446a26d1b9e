//! Metric computation over prediction files, with optional paired
//! significance tests between two systems.

use std::path::Path;

use hicl_core::evaluation::{
    levelwise_errors, macro_f1, micro_f1, sign_test, wilcoxon_rank_test, ConfusionStats,
};
use hicl_core::hierarchy::Hierarchy;

use crate::error::CliError;
use crate::manifest::RunManifest;

use super::{ensure_out_dir, load_taxonomy, write_json};

/// instance_id <tab> predicted_leaf [<tab> path]
fn load_predictions(path: &Path) -> Result<Vec<u32>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<(usize, u32)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let parse = |t: Option<&str>| -> Option<u32> { t.and_then(|v| v.parse().ok()) };
        let instance = parse(cols.next());
        let leaf = parse(cols.next());
        match (instance, leaf) {
            (Some(i), Some(l)) => rows.push((i as usize, l)),
            _ => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected 'instance<TAB>leaf'",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    rows.sort_by_key(|&(i, _)| i);
    Ok(rows.into_iter().map(|(_, l)| l).collect())
}

/// Truth labels from a LIBSVM-style data file (label leads each line) or a
/// plain one-label-per-line file.
fn load_truth(path: &Path) -> Result<Vec<u32>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first = line.split_whitespace().next().unwrap();
        let label: u32 = first.parse().map_err(|_| {
            CliError::Data(format!(
                "{}:{}: bad label '{first}'",
                path.display(),
                lineno + 1
            ))
        })?;
        labels.push(label);
    }
    Ok(labels)
}

fn correctness(truth: &[u32], pred: &[u32]) -> Vec<bool> {
    truth.iter().zip(pred).map(|(&t, &p)| t == p).collect()
}

fn report_for(h: &Hierarchy, truth: &[u32], pred: &[u32]) -> Result<serde_json::Value, CliError> {
    let stats = ConfusionStats::from_labels(h, truth, pred)?;
    let f1 = micro_f1(&stats);
    let levels = levelwise_errors(h, truth, pred)?;
    let per_class: serde_json::Map<String, serde_json::Value> = stats
        .per_class_f1()
        .into_iter()
        .map(|(leaf, v)| (leaf.to_string(), serde_json::json!(v)))
        .collect();
    Ok(serde_json::json!({
        "instances": stats.evaluated(),
        "accuracy": stats.accuracy(),
        "micro_f1": f1.value,
        "micro_f1_defined": f1.defined,
        "macro_f1": macro_f1(&stats),
        "per_class_f1": per_class,
        "per_level_error": levels.cumulative,
        "per_level_error_conditional": levels.conditional,
    }))
}

pub fn run(
    predictions: &Path,
    truth_path: &Path,
    taxonomy: &Path,
    out: &Path,
    compare: Option<&Path>,
    threads: usize,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("evaluate", threads);
    manifest.add_input(predictions)?;
    manifest.add_input(truth_path)?;
    manifest.add_input(taxonomy)?;

    let h = load_taxonomy(taxonomy)?;
    let truth = load_truth(truth_path)?;
    let pred = load_predictions(predictions)?;
    if pred.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} predictions vs {} truth labels",
            pred.len(),
            truth.len()
        )));
    }

    let mut report = manifest.time_stage("evaluate", || report_for(&h, &truth, &pred))?;

    if let Some(compare_path) = compare {
        manifest.add_input(compare_path)?;
        let pred_b = load_predictions(compare_path)?;
        if pred_b.len() != truth.len() {
            return Err(CliError::Data(format!(
                "{} comparison predictions vs {} truth labels",
                pred_b.len(),
                truth.len()
            )));
        }
        let report_b = report_for(&h, &truth, &pred_b)?;
        let sign = sign_test(&correctness(&truth, &pred), &correctness(&truth, &pred_b))?;
        let stats_a = ConfusionStats::from_labels(&h, &truth, &pred)?;
        let stats_b = ConfusionStats::from_labels(&h, &truth, &pred_b)?;
        let f1_a: Vec<f64> = stats_a.per_class_f1().into_iter().map(|(_, v)| v).collect();
        let f1_b: Vec<f64> = stats_b.per_class_f1().into_iter().map(|(_, v)| v).collect();
        let wilcoxon = wilcoxon_rank_test(&f1_a, &f1_b)?;
        report["comparison"] = serde_json::json!({
            "system_b": report_b,
            "sign_test": sign,
            "wilcoxon_rank_test": wilcoxon,
            "significant_at_0.05": sign.p_value < 0.05 || wilcoxon.p_value < 0.05,
            "significant_at_0.1": sign.p_value < 0.1 || wilcoxon.p_value < 0.1,
        });
    }

    ensure_out_dir(out)?;
    let path = out.join("evaluation.json");
    write_json(&path, &report)?;
    manifest.record_output(&path);
    println!(
        "micro-F1 {:.4}, macro-F1 {:.4} over {} instances",
        report["micro_f1"].as_f64().unwrap(),
        report["macro_f1"].as_f64().unwrap(),
        truth.len()
    );
    manifest.write(out)?;
    Ok(())
}
