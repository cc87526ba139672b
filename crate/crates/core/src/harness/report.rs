//! Replication records, summary rows and their file forms.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, NuisanceVariant};

/// One estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub estimator: String,
    pub point: f64,
    pub se: Option<f64>,
    /// Ȳ of the replication.
    pub truth: f64,
    pub covered: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub bias: f64,
    #[serde(rename = "empSE")]
    pub emp_se: f64,
    #[serde(rename = "SEhat")]
    pub se_hat: Option<f64>,
    /// Percent of intervals containing Ȳ.
    pub cover: Option<f64>,
}

/// Summaries per estimator, in the order of `ids`. Sums run over records in
/// the order given, so the result depends only on the record sequence.
pub fn summarize(records: &[RepRecord], ids: &[String]) -> Vec<SummaryRow> {
    ids.iter()
        .filter_map(|id| {
            let rows: Vec<&RepRecord> = records.iter().filter(|r| &r.estimator == id).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len() as f64;
            let bias = rows.iter().map(|r| r.point - r.truth).sum::<f64>() / n;
            let mean = rows.iter().map(|r| r.point).sum::<f64>() / n;
            let emp_se = if rows.len() > 1 {
                (rows.iter().map(|r| (r.point - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let ses: Vec<f64> = rows.iter().filter_map(|r| r.se).collect();
            let se_hat = (ses.len() == rows.len()).then(|| ses.iter().sum::<f64>() / n);
            let cov: Vec<u8> = rows.iter().filter_map(|r| r.covered).collect();
            let cover = (cov.len() == rows.len()).then(|| 100.0 * cov.iter().map(|&c| f64::from(c)).sum::<f64>() / n);
            Some(SummaryRow {
                estimator: id.clone(),
                bias,
                emp_se,
                se_hat,
                cover,
            })
        })
        .collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_records(path: impl AsRef<Path>, records: &[RepRecord]) -> Result<()> {
    write_rows(path.as_ref(), records)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RepRecord>> {
    read_rows(path.as_ref())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    read_rows(path.as_ref())
}

/// Writes the summary CSV (`estimator,bias,empSE,SEhat,cover`) at `path`
/// and the aligned text table next to it with a `.txt` extension.
pub fn emit_report(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if rows.is_empty() {
        return Err(Error::Config("no summary rows to report".into()));
    }
    write_rows(path, rows)?;
    let txt = path.with_extension("txt");
    std::fs::write(&txt, format_table(rows)).map_err(|e| Error::io(&txt, e))
}

/// Table block an estimator row belongs to, for separator lines.
fn block(name: &str) -> u8 {
    match name.parse::<EstimatorId>() {
        Ok(id) if !id.kind.uses_nuisances() => 0,
        Ok(id) => match id.nuisances {
            NuisanceVariant::Parametric => 1,
            NuisanceVariant::BoostedCrossFit => 2,
            NuisanceVariant::BoostedSingle => 3,
        },
        Err(_) => 4,
    }
}

/// Three decimals for bias and standard errors, integer coverage.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let width = rows.iter().map(|r| r.estimator.len()).max().unwrap_or(0).max(9);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} {:>7} {:>7} {:>7} {:>5}",
        "", "bias", "empSE", "SEhat", "cover"
    );
    let rule = "-".repeat(width + 32);
    let _ = writeln!(out, "{rule}");
    let mut last = None;
    for r in rows {
        let b = block(&r.estimator);
        if last.is_some_and(|l| l != b) {
            let _ = writeln!(out, "{rule}");
        }
        last = Some(b);
        let se_hat = r.se_hat.map_or(String::new(), |v| format!("{v:.3}"));
        let cover = r.cover.map_or(String::new(), |v| format!("{v:.0}"));
        let _ = writeln!(
            out,
            "{:<width$} {:>7.3} {:>7.3} {:>7} {:>5}",
            r.estimator, r.bias, r.emp_se, se_hat, cover
        );
    }
    out
}
