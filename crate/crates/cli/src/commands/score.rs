//! Per-node feature score tables as TSV files, one per internal node.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use hicl_core::hierarchy::build_node_views;
use hicl_core::scoring::{score_all_nodes, Discretization, ScoreConfig, ScoreMethod};

use crate::error::CliError;
use crate::manifest::RunManifest;

use super::{ensure_out_dir, load_data, load_taxonomy};

#[allow(clippy::too_many_arguments)]
pub fn run(
    taxonomy: &Path,
    data_path: &Path,
    out: &Path,
    method: &str,
    tfidf: bool,
    one_based: bool,
    kw_invert: bool,
    threads: usize,
) -> Result<(), CliError> {
    let method = ScoreMethod::from_str(method).map_err(CliError::Usage)?;
    let mut manifest = RunManifest::new("score-features", threads);
    manifest.add_input(taxonomy)?;
    manifest.add_input(data_path)?;
    manifest.config = serde_json::json!({
        "method": method.name(),
        "tfidf": tfidf,
        "one_based": one_based,
        "kw_invert": kw_invert,
    });

    let h = load_taxonomy(taxonomy)?;
    let raw = load_data(data_path, one_based)?;
    let data = if tfidf { raw.tfidf_transform().0 } else { raw };
    let views = build_node_views(&h, data.labels())?;
    let cfg = ScoreConfig {
        discretization: Discretization::Auto,
        kw_lower_is_better: kw_invert,
    };
    let tables = manifest.time_stage("fs_scoring", || {
        score_all_nodes(&h, &views, &data, method, &cfg)
    });

    ensure_out_dir(out)?;
    let mut written = 0;
    for table in tables.iter().flatten() {
        let path = out.join(format!(
            "node_{}.{}.tsv",
            h.original_id(table.node),
            method.name()
        ));
        let mut w = BufWriter::new(File::create(&path)?);
        table.write_tsv(&mut w)?;
        manifest.record_output(&path);
        written += 1;
    }
    println!("wrote {written} score tables under {}", out.display());
    manifest.write(out)?;
    Ok(())
}
