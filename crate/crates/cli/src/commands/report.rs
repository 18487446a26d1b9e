//! Model memory/runtime report and a CSV + gnuplot bundle for the standard
//! bar charts (parameters per node, level-wise error, per-node subsets).

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use hicl_core::evaluation::model_report;
use hicl_core::model::read_model;

use crate::error::CliError;
use crate::manifest::RunManifest;

use super::{ensure_out_dir, write_json};

pub fn run(
    model_path: &Path,
    out: &Path,
    evaluation: Option<&Path>,
    selection: Option<&Path>,
    threads: usize,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("report", threads);
    manifest.add_input(model_path)?;

    let (model, _) = {
        let mut r = BufReader::new(
            File::open(model_path)
                .map_err(|e| CliError::Data(format!("{}: {e}", model_path.display())))?,
        );
        read_model(&mut r)?
    };
    let report = model_report(&model);

    ensure_out_dir(out)?;
    let report_path = out.join("report.json");
    write_json(
        &report_path,
        &serde_json::to_value(&report).expect("report serializes"),
    )?;
    manifest.record_output(&report_path);

    let params_path = out.join("parameters.csv");
    {
        let mut w = File::create(&params_path)?;
        writeln!(w, "node,children,subset_size,parameters,lambda,sparsity")?;
        for row in &report.nodes {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.node, row.children, row.subset_size, row.parameters, row.lambda, row.sparsity
            )?;
        }
    }
    manifest.record_output(&params_path);

    let mut plots = vec![
        "set datafile separator ','".to_string(),
        "set style fill solid 0.6".to_string(),
        "set term pngcairo size 900,500".to_string(),
        "set output 'parameters.png'".to_string(),
        "set title 'Parameters per internal node'".to_string(),
        "plot 'parameters.csv' using 4:xtic(1) with boxes title 'parameters' skip 1".to_string(),
    ];

    if let Some(eval_path) = evaluation {
        manifest.add_input(eval_path)?;
        let eval: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(eval_path)
                .map_err(|e| CliError::Data(format!("{}: {e}", eval_path.display())))?,
        )
        .map_err(|e| CliError::Data(format!("{}: {e}", eval_path.display())))?;
        let levels_path = out.join("level_errors.csv");
        let mut w = File::create(&levels_path)?;
        writeln!(w, "level,instances,errors,rate")?;
        if let Some(rows) = eval["per_level_error"].as_array() {
            for row in rows {
                writeln!(
                    w,
                    "{},{},{},{}",
                    row["level"], row["instances"], row["errors"], row["rate"]
                )?;
            }
        }
        manifest.record_output(&levels_path);
        plots.extend([
            "set output 'level_errors.png'".to_string(),
            "set title 'Level-wise error'".to_string(),
            "plot 'level_errors.csv' using 4:xtic(1) with boxes title 'error rate' skip 1"
                .to_string(),
        ]);
    }

    if let Some(sel_path) = selection {
        manifest.add_input(sel_path)?;
        let sel: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(sel_path)
                .map_err(|e| CliError::Data(format!("{}: {e}", sel_path.display())))?,
        )
        .map_err(|e| CliError::Data(format!("{}: {e}", sel_path.display())))?;
        let sel_csv = out.join("selection.csv");
        let mut w = File::create(&sel_csv)?;
        writeln!(w, "node,fraction,subset_size,validation_score,fallback")?;
        if let Some(rows) = sel["nodes"].as_array() {
            for row in rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    row["node"],
                    row["fraction"],
                    row["subset_size"],
                    row["validation_score"],
                    row["fallback"]
                )?;
            }
        }
        manifest.record_output(&sel_csv);
        plots.extend([
            "set output 'selection.png'".to_string(),
            "set title 'Selected fraction per node'".to_string(),
            "plot 'selection.csv' using 2:xtic(1) with boxes title 'fraction' skip 1".to_string(),
        ]);
    }

    let gp_path = out.join("plots.gp");
    std::fs::write(&gp_path, plots.join("\n") + "\n")?;
    manifest.record_output(&gp_path);

    println!(
        "{} parameters ({}), {} internal nodes; report under {}",
        group_digits(report.parameter_count),
        report.size_human,
        report.internal_nodes,
        out.display()
    );
    manifest.write(out)?;
    Ok(())
}

fn group_digits(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
