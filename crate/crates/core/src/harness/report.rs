use std::path::Path;

use super::ResultsTable;
use crate::error::{Error, Result};
use crate::fsio::write_atomic;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_MD: &str = "results.md";
pub const EPISODES_CSV: &str = "episodes.csv";

/// `"73.38% ± 0.42%"` for a mean of 0.7338 and half-width 0.0042.
pub fn format_accuracy(mean: f64, ci95: Option<f64>) -> String {
    match ci95 {
        Some(ci) => format!("{:.2}% ± {:.2}%", 100.0 * mean, 100.0 * ci),
        None => format!("{:.2}% ± n/a", 100.0 * mean),
    }
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Rendered report files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub markdown: String,
    pub csv: String,
    pub episodes_csv: String,
}

pub fn emit_report(table: &ResultsTable) -> Report {
    let episodes = table.rows.first().map_or(0, |r| r.accuracies.len());
    let mut markdown = format!("| Variant | Accuracy ({episodes} episodes) |\n|---|---|\n");
    let mut csv = String::from("variant,mean_pct,ci95_pct\n");
    let mut episodes_csv = String::from("episode,variant,accuracy\n");
    for row in &table.rows {
        markdown.push_str(&format!("| {} | {} |\n", row.name, format_accuracy(row.mean, row.ci95)));
        csv.push_str(&format!("{},{},{}\n", row.name, percent(Some(row.mean)), percent(row.ci95)));
    }
    for ep in 0..episodes {
        for row in &table.rows {
            episodes_csv.push_str(&format!("{ep},{},{}\n", row.name, row.accuracies[ep]));
        }
    }
    Report {
        markdown,
        csv,
        episodes_csv,
    }
}

/// Writes `results.md`, `results.csv` and `episodes.csv` into `dir`.
pub fn write_reports(dir: &Path, table: &ResultsTable) -> Result<Report> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = emit_report(table);
    write_atomic(&dir.join(RESULTS_MD), &report.markdown)?;
    write_atomic(&dir.join(RESULTS_CSV), &report.csv)?;
    write_atomic(&dir.join(EPISODES_CSV), &report.episodes_csv)?;
    Ok(report)
}
