//! Clean vs adversarial accuracy per classifier and SNR, transfer rates, and
//! the CSV/SVG report.

mod csv;
mod svg;

pub use self::csv::{emit_csv, parse_csv, REPORT_HEADER};
pub use self::svg::{emit_svg, render_svg};

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::MetadataRow;
use crate::classical::{ClassifierKind, TrainedClassifier};
use crate::error::{Error, Result};
use crate::signal::{Dataset, ScalerId, SNR_GRID};

/// Integer counts for one (classifier, SNR) bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalRow {
    pub classifier: ClassifierKind,
    pub snr_db: i8,
    pub n: usize,
    pub correct_clean: usize,
    pub correct_adv: usize,
    /// Frames among the clean-correct ones still correct after the attack.
    pub correct_adv_of_clean_correct: usize,
}

impl EvalRow {
    pub fn accuracy_clean(&self) -> f64 {
        ratio(self.correct_clean, self.n)
    }

    pub fn accuracy_adv(&self) -> f64 {
        ratio(self.correct_adv, self.n)
    }

    /// Adversarial accuracy restricted to frames classified correctly when clean.
    pub fn accuracy_adv_of_clean_correct(&self) -> f64 {
        ratio(self.correct_adv_of_clean_correct, self.correct_clean)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset_seed: u64,
    pub attack_config_digest: String,
    /// (classifier slug, hex SHA-256 of its model file).
    pub model_digests: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub meta: ReportMeta,
}

impl EvalReport {
    pub fn classifiers(&self) -> Vec<ClassifierKind> {
        let mut out: Vec<ClassifierKind> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.classifier) {
                out.push(r.classifier);
            }
        }
        out
    }

    pub fn rows_for(&self, kind: ClassifierKind) -> impl Iterator<Item = &EvalRow> {
        self.rows.iter().filter(move |r| r.classifier == kind)
    }

    /// Unweighted mean over the SNR buckets in `[lo, hi]` dB.
    pub fn mean_accuracy(&self, kind: ClassifierKind, lo: i8, hi: i8, adversarial: bool) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows_for(kind)
            .filter(|r| (lo..=hi).contains(&r.snr_db))
            .map(|r| if adversarial { r.accuracy_adv() } else { r.accuracy_clean() })
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRate {
    pub classifier: ClassifierKind,
    /// MLP-successful frames this classifier got right when clean.
    pub eligible: usize,
    /// Of those, frames it gets wrong after the attack.
    pub flipped: usize,
}

impl TransferRate {
    pub fn rate(&self) -> f64 {
        ratio(self.flipped, self.eligible)
    }
}

/// Predictions of each classifier on paired clean/adversarial frames.
#[derive(Debug, Clone)]
pub struct PairedPredictions {
    pub kinds: Vec<ClassifierKind>,
    pub labels: Vec<usize>,
    pub snr_db: Vec<i8>,
    pub attack_success: Vec<bool>,
    /// `clean[c][k]`, `adv[c][k]`: prediction of classifier c on pair k.
    pub clean: Vec<Vec<usize>>,
    pub adv: Vec<Vec<usize>>,
}

impl PairedPredictions {
    /// `adv` frame k is the counterpart of clean frame `metadata[k].frame_index`.
    pub fn compute(
        classifiers: &[TrainedClassifier],
        clean: &Dataset,
        adv: &Dataset,
        metadata: &[MetadataRow],
    ) -> Result<Self> {
        check_pairing(clean, adv, metadata)?;
        let first = classifiers
            .first()
            .ok_or_else(|| Error::invalid("no classifiers to evaluate"))?;
        let scaler = first.scaler();
        let id: ScalerId = scaler.id();
        if let Some(c) = classifiers.iter().find(|c| c.scaler_id() != id) {
            return Err(Error::contract(format!(
                "{} uses scaler {}, expected {id} shared by all classifiers",
                c.kind(),
                c.scaler_id()
            )));
        }
        let indices: Vec<usize> = metadata.iter().map(|m| m.frame_index).collect();
        let clean_set = scaler.transform_indices(clean, &indices)?;
        let adv_set = scaler.transform(adv, None)?;

        let mut clean_preds = Vec::with_capacity(classifiers.len());
        let mut adv_preds = Vec::with_capacity(classifiers.len());
        for c in classifiers {
            clean_preds.push(c.predict_batch(&clean_set)?);
            adv_preds.push(c.predict_batch(&adv_set)?);
        }
        Ok(Self {
            kinds: classifiers.iter().map(TrainedClassifier::kind).collect(),
            labels: clean_set.labels,
            snr_db: clean_set.snr_db,
            attack_success: metadata.iter().map(|m| m.success).collect(),
            clean: clean_preds,
            adv: adv_preds,
        })
    }

    pub fn report(&self, meta: ReportMeta) -> EvalReport {
        let mut rows = Vec::new();
        for (c, &kind) in self.kinds.iter().enumerate() {
            for &snr in SNR_GRID.iter() {
                let mut row = EvalRow {
                    classifier: kind,
                    snr_db: snr,
                    n: 0,
                    correct_clean: 0,
                    correct_adv: 0,
                    correct_adv_of_clean_correct: 0,
                };
                for k in (0..self.labels.len()).filter(|&k| self.snr_db[k] == snr) {
                    let ok_clean = self.clean[c][k] == self.labels[k];
                    let ok_adv = self.adv[c][k] == self.labels[k];
                    row.n += 1;
                    row.correct_clean += usize::from(ok_clean);
                    row.correct_adv += usize::from(ok_adv);
                    row.correct_adv_of_clean_correct += usize::from(ok_clean && ok_adv);
                }
                if row.n > 0 {
                    rows.push(row);
                }
            }
        }
        EvalReport { rows, meta }
    }

    pub fn transfer(&self) -> Vec<TransferRate> {
        self.kinds
            .iter()
            .enumerate()
            .map(|(c, &kind)| {
                let mut t = TransferRate {
                    classifier: kind,
                    eligible: 0,
                    flipped: 0,
                };
                for k in 0..self.labels.len() {
                    if self.attack_success[k] && self.clean[c][k] == self.labels[k] {
                        t.eligible += 1;
                        t.flipped += usize::from(self.adv[c][k] != self.labels[k]);
                    }
                }
                t
            })
            .collect()
    }
}

fn check_pairing(clean: &Dataset, adv: &Dataset, metadata: &[MetadataRow]) -> Result<()> {
    if adv.len() != metadata.len() {
        return Err(Error::contract(format!(
            "{} adversarial frames but {} metadata rows",
            adv.len(),
            metadata.len()
        )));
    }
    for (k, m) in metadata.iter().enumerate() {
        if m.frame_index >= clean.len() {
            return Err(Error::contract(format!(
                "metadata row {k} refers to frame {} beyond the clean dataset",
                m.frame_index
            )));
        }
        let (c, a) = (clean.frame(m.frame_index), adv.frame(k));
        if c.label() != a.label()
            || c.snr_db() != a.snr_db()
            || c.label() as usize != m.true_label
            || c.snr_db() != m.snr_db
        {
            return Err(Error::contract(format!(
                "adversarial frame {k} does not pair with clean frame {}",
                m.frame_index
            )));
        }
    }
    Ok(())
}

pub fn evaluate(
    classifiers: &[TrainedClassifier],
    clean: &Dataset,
    adv: &Dataset,
    metadata: &[MetadataRow],
    meta: ReportMeta,
) -> Result<EvalReport> {
    Ok(PairedPredictions::compute(classifiers, clean, adv, metadata)?.report(meta))
}

pub fn transfer_matrix(
    classifiers: &[TrainedClassifier],
    clean: &Dataset,
    adv: &Dataset,
    metadata: &[MetadataRow],
) -> Result<Vec<TransferRate>> {
    Ok(PairedPredictions::compute(classifiers, clean, adv, metadata)?.transfer())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
