use std::path::Path;

use super::{EvalReport, EvalRow, ReportMeta};
use crate::error::{Error, Result};

/// The first five columns are the headline report; the last two restrict the
/// adversarial accuracy to frames each classifier got right when clean.
pub const REPORT_HEADER: &str =
    "classifier,snr_db,n,accuracy_clean,accuracy_adv,n_correct_clean,accuracy_adv_of_correct";

pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.classifier.slug(),
            r.snr_db,
            r.n,
            r.accuracy_clean(),
            r.accuracy_adv(),
            r.correct_clean,
            r.accuracy_adv_of_clean_correct()
        ));
    }
    out
}

pub fn emit_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::invalid("report has no rows"));
    }
    let path = path.as_ref();
    std::fs::write(path, render_csv(report)).map_err(|e| Error::io(path, e))
}

/// Rebuilds the integer counts from the ratios; metadata is not stored in the CSV.
pub fn parse_csv(text: &str) -> Result<EvalReport> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Schema {
            field: "header".into(),
            message: format!("expected `{REPORT_HEADER}`"),
        });
    }
    let rows = lines
        .enumerate()
        .map(|(i, line)| parse_row(line).map_err(|field| Error::Schema {
            field: field.into(),
            message: format!("bad value on data line {}", i + 1),
        }))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        rows,
        meta: ReportMeta::default(),
    })
}

fn count(acc: f64, n: usize) -> std::result::Result<usize, ()> {
    let c = (acc * n as f64).round();
    if !(0.0..=n as f64).contains(&c) {
        return Err(());
    }
    Ok(c as usize)
}

fn parse_row(line: &str) -> std::result::Result<EvalRow, &'static str> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 7 {
        return Err("columns");
    }
    let n: usize = f[2].parse().map_err(|_| "n")?;
    let acc_clean: f64 = f[3].parse().map_err(|_| "accuracy_clean")?;
    let acc_adv: f64 = f[4].parse().map_err(|_| "accuracy_adv")?;
    let correct_clean: usize = f[5].parse().map_err(|_| "n_correct_clean")?;
    let acc_of: f64 = f[6].parse().map_err(|_| "accuracy_adv_of_correct")?;
    Ok(EvalRow {
        classifier: f[0].parse().map_err(|_| "classifier")?,
        snr_db: f[1].parse().map_err(|_| "snr_db")?,
        n,
        correct_clean: count(acc_clean, n).map_err(|_| "accuracy_clean")?,
        correct_adv: count(acc_adv, n).map_err(|_| "accuracy_adv")?,
        correct_adv_of_clean_correct: count(acc_of, correct_clean).map_err(|_| "accuracy_adv_of_correct")?,
    })
}
