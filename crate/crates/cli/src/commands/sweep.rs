//! Training-size sweep: for each per-class size, repeatedly subsample the
//! training pool, fit feature-selected and all-features models, and compare
//! them on a held-out test set (mean, standard deviation, sign tests).

use std::collections::HashMap;
use std::path::Path;

use hicl_core::corpus::Dataset;
use hicl_core::evaluation::{macro_f1, micro_f1, sign_test, ConfusionStats};
use hicl_core::hierarchy::Hierarchy;
use hicl_core::predictor::predict_batch;
use hicl_core::trainer::TrainedModel;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::{EffectiveTrainConfig, TrainFlags};
use crate::error::CliError;
use crate::manifest::RunManifest;

use super::train::fit;
use super::{ensure_out_dir, load_data, load_taxonomy, write_json};

fn subsample_per_class(
    data: &Dataset,
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset, CliError> {
    let mut by_class: HashMap<u32, Vec<usize>> = HashMap::new();
    for i in 0..data.num_instances() {
        by_class.entry(data.label(i)).or_default().push(i);
    }
    let mut classes: Vec<u32> = by_class.keys().copied().collect();
    classes.sort_unstable();
    let mut picked = Vec::with_capacity(per_class * classes.len());
    for class in classes {
        let mut idx = by_class.remove(&class).unwrap();
        if idx.len() < per_class {
            return Err(CliError::Data(format!(
                "class {class} has {} instances, sweep needs {per_class}",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        picked.extend_from_slice(&idx[..per_class]);
    }
    picked.sort_unstable();
    Ok(data.subset(&picked))
}

struct ArmScores {
    micro: Vec<f64>,
    macro_: Vec<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn test_scores(model: &TrainedModel, test: &Dataset) -> Result<(f64, f64, Vec<bool>), CliError> {
    let batch = predict_batch(model, test, false)?;
    let predicted: Vec<u32> = batch
        .leaves
        .iter()
        .map(|&l| model.hierarchy.original_id(l))
        .collect();
    let stats = ConfusionStats::from_labels(&model.hierarchy, test.labels(), &predicted)?;
    let correct: Vec<bool> = test
        .labels()
        .iter()
        .zip(&predicted)
        .map(|(&t, &p)| t == p)
        .collect();
    Ok((micro_f1(&stats).value, macro_f1(&stats), correct))
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    taxonomy: &Path,
    data_path: &Path,
    test_path: &Path,
    out: &Path,
    per_class_list: &str,
    repeats: usize,
    flags: &TrainFlags,
    threads: usize,
) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    println!("seed: {}", cfg.seed);
    let sizes: Result<Vec<usize>, _> = per_class_list
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect();
    let sizes = sizes.map_err(|e| CliError::Usage(format!("--per-class: {e}")))?;
    if sizes.is_empty() || repeats == 0 {
        return Err(CliError::Usage(
            "need at least one size and one repeat".into(),
        ));
    }

    let mut manifest = RunManifest::new("sweep", threads);
    manifest.seed = Some(cfg.seed);
    manifest.config = serde_json::to_value(&cfg).expect("config serializes");
    manifest.add_input(taxonomy)?;
    manifest.add_input(data_path)?;
    manifest.add_input(test_path)?;

    let hierarchy: Hierarchy = load_taxonomy(taxonomy)?;
    let pool_raw = load_data(data_path, cfg.one_based)?;
    let test_raw = load_data(test_path, cfg.one_based)?;

    let mut rows = Vec::new();
    for &per_class in &sizes {
        let mut fs_arm = ArmScores {
            micro: vec![],
            macro_: vec![],
        };
        let mut all_arm = ArmScores {
            micro: vec![],
            macro_: vec![],
        };
        let mut sign_p = Vec::new();
        for rep in 0..repeats {
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (per_class as u64).wrapping_mul(0x9e3779b9) ^ rep as u64,
            );
            let sample_raw = subsample_per_class(&pool_raw, per_class, &mut rng)?;
            // idf fit on the subsample only, replayed on the test data
            let (sample, test) = if cfg.tfidf {
                let (s, idf) = sample_raw.tfidf_transform();
                (s, test_raw.apply_tfidf(&idf))
            } else {
                (sample_raw, test_raw.clone())
            };

            let mut scratch = RunManifest::new("sweep-fit", threads);
            let (fs_model, _) = fit(&hierarchy, &sample, &cfg, &mut scratch)?;
            let all_cfg = EffectiveTrainConfig {
                fs_method: None,
                ..cfg.clone()
            };
            let (all_model, _) = fit(&hierarchy, &sample, &all_cfg, &mut scratch)?;

            let (fs_micro, fs_macro, fs_correct) = test_scores(&fs_model, &test)?;
            let (all_micro, all_macro, all_correct) = test_scores(&all_model, &test)?;
            fs_arm.micro.push(fs_micro);
            fs_arm.macro_.push(fs_macro);
            all_arm.micro.push(all_micro);
            all_arm.macro_.push(all_macro);
            sign_p.push(sign_test(&fs_correct, &all_correct)?.p_value);
        }
        let (fs_micro_mean, fs_micro_std) = mean_std(&fs_arm.micro);
        let (fs_macro_mean, fs_macro_std) = mean_std(&fs_arm.macro_);
        let (all_micro_mean, all_micro_std) = mean_std(&all_arm.micro);
        let (all_macro_mean, all_macro_std) = mean_std(&all_arm.macro_);
        println!(
            "per-class {per_class}: FS micro {fs_micro_mean:.4} ({fs_micro_std:.4}) vs all {all_micro_mean:.4} ({all_micro_std:.4})"
        );
        rows.push(serde_json::json!({
            "per_class": per_class,
            "repeats": repeats,
            "fs": {
                "micro_f1_mean": fs_micro_mean, "micro_f1_std": fs_micro_std,
                "macro_f1_mean": fs_macro_mean, "macro_f1_std": fs_macro_std,
                "micro_f1_runs": fs_arm.micro, "macro_f1_runs": fs_arm.macro_,
            },
            "all_features": {
                "micro_f1_mean": all_micro_mean, "micro_f1_std": all_micro_std,
                "macro_f1_mean": all_macro_mean, "macro_f1_std": all_macro_std,
                "micro_f1_runs": all_arm.micro, "macro_f1_runs": all_arm.macro_,
            },
            "sign_test_p_per_run": sign_p,
        }));
    }

    ensure_out_dir(out)?;
    let json_path = out.join("sweep.json");
    write_json(&json_path, &serde_json::json!({ "rows": rows }))?;
    manifest.record_output(&json_path);

    let csv_path = out.join("sweep.csv");
    {
        use std::io::Write;
        let mut w = std::fs::File::create(&csv_path)?;
        writeln!(
            w,
            "per_class,fs_micro_mean,fs_micro_std,fs_macro_mean,fs_macro_std,all_micro_mean,all_micro_std,all_macro_mean,all_macro_std"
        )?;
        for row in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                row["per_class"],
                row["fs"]["micro_f1_mean"],
                row["fs"]["micro_f1_std"],
                row["fs"]["macro_f1_mean"],
                row["fs"]["macro_f1_std"],
                row["all_features"]["micro_f1_mean"],
                row["all_features"]["micro_f1_std"],
                row["all_features"]["macro_f1_mean"],
                row["all_features"]["macro_f1_std"],
            )?;
        }
    }
    manifest.record_output(&csv_path);
    manifest.write(out)?;
    Ok(())
}
