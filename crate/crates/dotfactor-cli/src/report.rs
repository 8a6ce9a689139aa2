use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use dotfactor::metrics::MetricReport;

use crate::require_file;

const METRICS: [&str; 6] = ["factorvae", "dci", "mig", "betavae", "modularity", "explicitness"];

fn metric_cell(report: &MetricReport, name: &str) -> String {
    let s = match name {
        "factorvae" => &report.factorvae,
        "dci" => &report.dci_d,
        "mig" => &report.mig,
        "betavae" => &report.betavae,
        "modularity" => &report.modularity,
        "explicitness" => &report.explicitness,
        _ => unreachable!(),
    };
    format!("{:.3} \u{b1} {:.3}", s.mean, s.std)
}

/// One row per report, columns per metric, sorted by MIG descending.
/// A single report renders as one row per metric instead.
pub fn render_table(reports: &[(String, MetricReport)]) -> String {
    let mut out = String::new();
    if reports.len() == 1 {
        let (name, report) = &reports[0];
        out.push_str(&format!("metrics for {name}\n"));
        for metric in METRICS {
            out.push_str(&format!("  {:<13} {}\n", metric, metric_cell(report, metric)));
        }
        return out;
    }
    let mut rows: Vec<&(String, MetricReport)> = reports.iter().collect();
    rows.sort_by(|a, b| b.1.mig.mean.partial_cmp(&a.1.mig.mean).unwrap());
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(4).max(4);
    out.push_str(&format!("{:<name_width$}", "name"));
    for metric in METRICS {
        out.push_str(&format!("  {metric:>15}"));
    }
    out.push('\n');
    for (name, report) in rows {
        out.push_str(&format!("{name:<name_width$}"));
        for metric in METRICS {
            out.push_str(&format!("  {:>15}", metric_cell(report, metric)));
        }
        out.push('\n');
    }
    out
}

pub fn run(paths: &[PathBuf]) -> anyhow::Result<()> {
    let mut reports = Vec::with_capacity(paths.len());
    for path in paths {
        require_file(path, "report")?;
        let report: MetricReport = serde_json::from_str(&fs::read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        let stem = path.file_stem().map(|n| n.to_string_lossy().into_owned());
        let parent = path.parent().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned());
        let name = match (parent, stem) {
            (Some(p), Some(s)) => format!("{p}/{s}"),
            (_, Some(s)) => s,
            _ => path.display().to_string(),
        };
        reports.push((name, report));
    }
    print!("{}", render_table(&reports));
    Ok(())
}
