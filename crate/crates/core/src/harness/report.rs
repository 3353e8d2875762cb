use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::experiment::ExperimentReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// `0.90698` → `"90.70"`. Always `.` as the decimal separator.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

pub fn report_to_json(report: &ExperimentReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::Data(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Accuracy grid with methods as rows and bands as columns.
pub fn report_to_csv(report: &ExperimentReport) -> Result<String> {
    let grid = &report.accuracy;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(format!("csv encoding failed: {e}"));
    let mut header = vec!["method".to_string()];
    header.extend(grid.bands.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for &m in &grid.methods {
        let mut row = vec![m.name().to_string()];
        for b in &grid.bands {
            let cell = grid
                .get(m, b)
                .ok_or_else(|| Error::Data(format!("report has no cell for {m} in band {b}")))?;
            row.push(format_percent(cell.loocv.accuracy()));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn render(report: &ExperimentReport, format: Format) -> Result<String> {
    match format {
        Format::Json => report_to_json(report),
        Format::Csv => report_to_csv(report),
    }
}

pub fn emit_report(report: &ExperimentReport, path: &Path, format: Format) -> Result<()> {
    let text = render(report, format)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}:{}: invalid report: {e}", path.display(), e.line())))
}
