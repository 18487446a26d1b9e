//! `key = value` config files and flag/file/default precedence for the
//! training pipeline. The effective configuration is frozen into the run
//! manifest.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use hicl_core::scoring::ScoreMethod;
use hicl_core::selection::{FsMode, TuningGrid, ValidationMetric};
use hicl_core::trainer::Regularizer;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected 'key = value'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

fn parsed<T: FromStr>(text: &str, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    text.parse::<T>()
        .map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))
}

/// flag > config file > default
fn resolve<T: FromStr>(
    flag: Option<T>,
    cfg: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => match cfg.get(key) {
            Some(text) => parsed(text, key),
            None => Ok(default),
        },
    }
}

fn parse_f64_list(text: &str, key: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| parsed::<f64>(t.trim(), key))
        .collect()
}

/// Everything `train` (and `sweep`) needs, after precedence resolution.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveTrainConfig {
    pub fs_method: Option<ScoreMethod>,
    pub fs_mode: FsMode,
    pub fs_grid: Vec<f64>,
    pub fs_metric: ValidationMetric,
    pub fs_min_val_instances: usize,
    pub regularizer: Regularizer,
    pub lambda_grid: Vec<f64>,
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
    pub tfidf: bool,
    pub one_based: bool,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub kw_invert: bool,
    pub flat: bool,
}

/// Raw optional flags shared by `train` and `sweep`.
#[derive(Debug, Clone, clap::Args)]
pub struct TrainFlags {
    /// Filter method: gini, mrmr-d, mrmr-q, kw, or none (all features)
    #[arg(long)]
    pub fs_method: Option<String>,
    /// Selection mode: global or adaptive
    #[arg(long)]
    pub fs_mode: Option<String>,
    /// Comma-separated feature fractions to search
    #[arg(long)]
    pub fs_grid: Option<String>,
    /// Validation metric for Global FS tuning: micro-f1 or macro-f1
    #[arg(long)]
    pub fs_metric: Option<String>,
    /// Nodes with fewer validation instances fall back to the global fraction
    #[arg(long)]
    pub fs_min_val: Option<usize>,
    /// Regularizer: l1 or l2
    #[arg(long)]
    pub reg: Option<String>,
    /// Single loss-penalty value (shortcut for a one-point grid)
    #[arg(long, conflicts_with = "lambda_grid")]
    pub lambda: Option<f64>,
    /// Comma-separated loss-penalty grid
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain (non-stratified) train/validation split
    #[arg(long)]
    pub no_stratify: bool,
    /// Apply tf-idf with L2 normalization; the idf vector is frozen into
    /// the model
    #[arg(long)]
    pub tfidf: bool,
    /// Data file uses 1-based feature indices
    #[arg(long)]
    pub one_based: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Rank smaller Kruskal-Wallis statistics as more relevant
    #[arg(long)]
    pub kw_invert: bool,
    /// Flatten the taxonomy to root -> leaves (flat one-vs-rest baseline)
    #[arg(long)]
    pub flat: bool,
    /// key = value config file (flags win over file entries)
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

impl TrainFlags {
    pub fn resolve(&self) -> Result<EffectiveTrainConfig, CliError> {
        let cfg = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let method_text = resolve(
            self.fs_method.clone(),
            &cfg,
            "fs-method",
            "gini".to_string(),
        )?;
        let fs_method = match method_text.as_str() {
            "none" => None,
            other => Some(ScoreMethod::from_str(other).map_err(CliError::Usage)?),
        };
        let fs_mode = FsMode::from_str(&resolve(
            self.fs_mode.clone(),
            &cfg,
            "fs-mode",
            "global".to_string(),
        )?)
        .map_err(CliError::Usage)?;
        let fs_grid = match resolve(self.fs_grid.clone(), &cfg, "fs-grid", String::new())? {
            s if s.is_empty() => TuningGrid::default().fractions,
            s => parse_f64_list(&s, "fs-grid")?,
        };
        let fs_metric = ValidationMetric::from_str(&resolve(
            self.fs_metric.clone(),
            &cfg,
            "fs-metric",
            "micro-f1".to_string(),
        )?)
        .map_err(CliError::Usage)?;
        let regularizer =
            Regularizer::from_str(&resolve(self.reg.clone(), &cfg, "reg", "l1".to_string())?)
                .map_err(CliError::Usage)?;
        let lambda_grid = match (self.lambda, &self.lambda_grid) {
            (Some(l), _) => vec![l],
            (None, Some(text)) => parse_f64_list(text, "lambda-grid")?,
            (None, None) => match (cfg.get("lambda"), cfg.get("lambda-grid")) {
                (Some(l), _) => vec![parsed::<f64>(l, "lambda")?],
                (None, Some(text)) => parse_f64_list(text, "lambda-grid")?,
                (None, None) => hicl_core::trainer::TrainingConfig::default().lambda_grid,
            },
        };
        if lambda_grid.iter().any(|&l| l <= 0.0) {
            return Err(CliError::Usage("lambda values must be positive".into()));
        }
        Ok(EffectiveTrainConfig {
            fs_method,
            fs_mode,
            fs_grid,
            fs_metric,
            fs_min_val_instances: resolve(self.fs_min_val, &cfg, "fs-min-val", 5)?,
            regularizer,
            lambda_grid,
            train_fraction: resolve(self.train_fraction, &cfg, "train-fraction", 0.9)?,
            seed: resolve(self.seed, &cfg, "seed", 42)?,
            stratified: if self.no_stratify {
                false
            } else {
                resolve(None, &cfg, "stratify", true)?
            },
            tfidf: self.tfidf || resolve(None, &cfg, "tfidf", false)?,
            one_based: self.one_based || resolve(None, &cfg, "one-based", false)?,
            max_epochs: resolve(self.max_epochs, &cfg, "max-epochs", 500)?,
            tolerance: resolve(self.tolerance, &cfg, "tolerance", 1e-6)?,
            kw_invert: self.kw_invert || resolve(None, &cfg, "kw-invert", false)?,
            flat: self.flat || resolve(None, &cfg, "flat", false)?,
        })
    }
}

impl EffectiveTrainConfig {
    pub fn training_config(&self) -> hicl_core::trainer::TrainingConfig {
        hicl_core::trainer::TrainingConfig {
            lambda_grid: self.lambda_grid.clone(),
            regularizer: self.regularizer,
            max_epochs: self.max_epochs,
            tolerance: self.tolerance,
            seed: self.seed,
        }
    }

    pub fn score_config(&self) -> hicl_core::scoring::ScoreConfig {
        hicl_core::scoring::ScoreConfig {
            discretization: hicl_core::scoring::Discretization::Auto,
            kw_lower_is_better: self.kw_invert,
        }
    }

    pub fn split_spec(&self) -> hicl_core::corpus::SplitSpec {
        hicl_core::corpus::SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratified: self.stratified,
        }
    }
}
