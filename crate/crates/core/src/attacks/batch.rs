use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cw_l2, fgsm, AttackGoal, AttackResult, CwConfig, FgsmConfig};
use crate::error::{Error, Result};
use crate::mlp::MlpModel;
use crate::signal::{Dataset, IqFrame, ScaledSet, Split};

pub const METADATA_HEADER: &str = "frame_index,true_label,snr_db,method,success,l2,c_used,iterations";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum AttackMethod {
    Cw(CwConfig),
    Fgsm(FgsmConfig),
}

impl AttackMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Cw(_) => "cw",
            AttackMethod::Fgsm(_) => "fgsm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AttackMethod::Cw(c) => c.validate(),
            AttackMethod::Fgsm(c) => c.validate(),
        }
    }

    /// Untargeted attack on one scaled frame.
    pub fn run(&self, model: &MlpModel, x: &[f64], label: usize) -> Result<AttackResult> {
        match self {
            AttackMethod::Cw(c) => cw_l2(model.network(), x, &AttackGoal::untargeted(label), c),
            AttackMethod::Fgsm(c) => fgsm(model.network(), x, label, c),
        }
    }
}

/// One line of the attack metadata table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRow {
    /// Index of the attacked frame in the clean dataset.
    pub frame_index: usize,
    pub true_label: usize,
    pub snr_db: i8,
    pub method: String,
    pub success: bool,
    pub l2: f64,
    pub c_used: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Per attacked row; `Err` carries the message of a frame that failed.
    pub results: Vec<std::result::Result<AttackResult, String>>,
    pub metadata: Vec<MetadataRow>,
    /// Row k holds the adversarial counterpart of `metadata[k].frame_index`.
    /// Failed frames are copied through unchanged.
    pub adversarial: Dataset,
}

impl BatchOutput {
    pub fn errors(&self) -> impl Iterator<Item = (usize, &str)> {
        self.results
            .iter()
            .zip(&self.metadata)
            .filter_map(|(r, m)| r.as_ref().err().map(|e| (m.frame_index, e.as_str())))
    }

    pub fn success_rate(&self) -> f64 {
        if self.metadata.is_empty() {
            return 0.0;
        }
        self.metadata.iter().filter(|m| m.success).count() as f64 / self.metadata.len() as f64
    }

    pub fn mean_l2(&self) -> f64 {
        let hits: Vec<f64> = self.metadata.iter().filter(|m| m.success).map(|m| m.l2).collect();
        if hits.is_empty() {
            0.0
        } else {
            hits.iter().sum::<f64>() / hits.len() as f64
        }
    }
}

/// Attacks every row of `data`, which must be scaled with the model's scaler
/// from frames of `clean`. Rows are independent and run on the current rayon
/// pool; results are collected in row order.
pub fn attack_batch(model: &MlpModel, clean: &Dataset, data: &ScaledSet, method: &AttackMethod) -> Result<BatchOutput> {
    method.validate()?;
    if data.scaler_id != model.scaler_id() {
        return Err(Error::contract(format!(
            "data scaled with {} but the model expects {}",
            data.scaler_id,
            model.scaler_id()
        )));
    }
    for (k, &i) in data.indices.iter().enumerate() {
        if i >= clean.len() {
            return Err(Error::contract(format!("row {k} refers to frame {i} beyond the dataset")));
        }
        let f = clean.frame(i);
        if f.label() as usize != data.labels[k] || f.snr_db() != data.snr_db[k] {
            return Err(Error::contract(format!("row {k} does not match frame {i}")));
        }
    }

    let results: Vec<std::result::Result<AttackResult, String>> = (0..data.len())
        .into_par_iter()
        .map(|k| method.run(model, data.row(k), data.labels[k]).map_err(|e| e.to_string()))
        .collect();

    let scaler = model.scaler();
    let mut frames = Vec::with_capacity(results.len());
    let mut metadata = Vec::with_capacity(results.len());
    for (k, r) in results.iter().enumerate() {
        let idx = data.indices[k];
        let src = clean.frame(idx);
        let row = match r {
            Ok(a) => {
                let raw = scaler.invert(&a.adversarial)?;
                frames.push(IqFrame::from_f64(&raw, src.label(), src.snr_db())?);
                MetadataRow {
                    frame_index: idx,
                    true_label: data.labels[k],
                    snr_db: data.snr_db[k],
                    method: method.name().into(),
                    success: a.success,
                    l2: a.l2,
                    c_used: a.c_used,
                    iterations: a.iterations,
                }
            }
            Err(_) => {
                frames.push(src.clone());
                MetadataRow {
                    frame_index: idx,
                    true_label: data.labels[k],
                    snr_db: data.snr_db[k],
                    method: method.name().into(),
                    success: false,
                    l2: 0.0,
                    c_used: 0.0,
                    iterations: 0,
                }
            }
        };
        metadata.push(row);
    }
    let split = vec![Split::Test; frames.len()];
    Ok(BatchOutput {
        results,
        metadata,
        adversarial: Dataset::new(frames, split, clean.seed())?,
    })
}

pub fn write_metadata_csv(rows: &[MetadataRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(METADATA_HEADER.len() + 1 + rows.len() * 48);
    out.push_str(METADATA_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.frame_index, r.true_label, r.snr_db, r.method, r.success, r.l2, r.c_used, r.iterations
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metadata_csv(path: impl AsRef<Path>) -> Result<Vec<MetadataRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METADATA_HEADER) {
        return Err(Error::Schema {
            field: "header".into(),
            message: format!("{}: expected `{METADATA_HEADER}`", path.display()),
        });
    }
    lines
        .enumerate()
        .map(|(n, line)| parse_row(line).map_err(|field| Error::Schema {
            field: field.into(),
            message: format!("{}: bad value on data line {}", path.display(), n + 1),
        }))
        .collect()
}

fn parse_row(line: &str) -> std::result::Result<MetadataRow, &'static str> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 8 {
        return Err("columns");
    }
    Ok(MetadataRow {
        frame_index: f[0].parse().map_err(|_| "frame_index")?,
        true_label: f[1].parse().map_err(|_| "true_label")?,
        snr_db: f[2].parse().map_err(|_| "snr_db")?,
        method: f[3].to_string(),
        success: f[4].parse().map_err(|_| "success")?,
        l2: f[5].parse().map_err(|_| "l2")?,
        c_used: f[6].parse().map_err(|_| "c_used")?,
        iterations: f[7].parse().map_err(|_| "iterations")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::TrainConfig;
    use crate::numerics::l2_norm;
    use crate::signal::{build_dataset, fit_scaler};

    fn fixture() -> (Dataset, MlpModel, ScaledSet) {
        let ds = build_dataset(3, 3).unwrap();
        let scaler = fit_scaler(&ds).unwrap();
        let train = scaler.transform(&ds, Some(Split::Train)).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let mut model = MlpModel::init(scaler.clone(), &cfg).unwrap();
        model.fit(&train, &cfg).unwrap();
        let test = scaler.transform(&ds, Some(Split::Test)).unwrap();
        (ds, model, test)
    }

    fn quick_cw() -> AttackMethod {
        AttackMethod::Cw(CwConfig {
            inner_iterations: 40,
            c_search_steps: 3,
            ..CwConfig::default()
        })
    }

    #[test]
    fn empty_selection_gives_empty_outputs() {
        let (ds, model, test) = fixture();
        let none = model.scaler().transform_indices(&ds, &[]).unwrap();
        assert!(test.len() > 0);
        let out = attack_batch(&model, &ds, &none, &quick_cw()).unwrap();
        assert!(out.results.is_empty() && out.metadata.is_empty() && out.adversarial.is_empty());
    }

    #[test]
    fn serial_and_parallel_agree() {
        let (ds, model, test) = fixture();
        let method = quick_cw();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| attack_batch(&model, &ds, &test, &method).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.metadata, b.metadata);
        assert_eq!(a.adversarial, b.adversarial);
    }

    #[test]
    fn saved_outputs_reproduce_l2() {
        let (ds, model, test) = fixture();
        let out = attack_batch(&model, &ds, &test, &AttackMethod::Fgsm(FgsmConfig::new(0.05))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (adv_path, meta_path) = (dir.path().join("adv.iqd"), dir.path().join("meta.csv"));
        crate::signal::write_iqd(&out.adversarial, &adv_path).unwrap();
        write_metadata_csv(&out.metadata, &meta_path).unwrap();
        let adv = crate::signal::read_iqd(&adv_path).unwrap();
        let meta = read_metadata_csv(&meta_path).unwrap();
        assert_eq!(meta, out.metadata);
        for (k, m) in meta.iter().enumerate() {
            let x = model.scaler().apply(&ds.frame(m.frame_index).features()).unwrap();
            let xa = model.scaler().apply(&adv.frame(k).features()).unwrap();
            let d: Vec<f64> = xa.iter().zip(&x).map(|(a, b)| a - b).collect();
            assert!((l2_norm(&d) - m.l2).abs() < 1e-5, "row {k}");
        }
    }

    #[test]
    fn success_flags_are_reproducible() {
        let (ds, model, test) = fixture();
        let out = attack_batch(&model, &ds, &test, &quick_cw()).unwrap();
        for (r, m) in out.results.iter().zip(&out.metadata) {
            let r = r.as_ref().unwrap();
            assert!(r.adversarial.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(m.success, model.predict(&r.adversarial).unwrap() != m.true_label);
        }
    }

    #[test]
    fn zero_epsilon_success_rate_is_clean_error_rate() {
        let (ds, model, test) = fixture();
        let out = attack_batch(&model, &ds, &test, &AttackMethod::Fgsm(FgsmConfig::new(0.0))).unwrap();
        let wrong = model
            .predict_batch(&test)
            .unwrap()
            .iter()
            .zip(&test.labels)
            .filter(|(p, l)| p != l)
            .count();
        assert_eq!(out.metadata.iter().filter(|m| m.success).count(), wrong);
    }

    #[test]
    fn foreign_scaler_is_rejected() {
        let (ds, model, _) = fixture();
        let other = build_dataset(3, 99).unwrap();
        let s2 = fit_scaler(&other).unwrap();
        let foreign = s2.transform(&ds, Some(Split::Test)).unwrap();
        let err = attack_batch(&model, &ds, &foreign, &quick_cw()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn bad_header_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "a,b\n").unwrap();
        assert!(matches!(read_metadata_csv(&p).unwrap_err(), Error::Schema { .. }));
    }
}
