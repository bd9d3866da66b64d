use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{Dataset, Split};
use super::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Per-feature min/max fitted on the training split; maps features onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Short fingerprint of a fitted scaler, used to catch feature matrices
/// scaled with a different scaler than the model expects.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalerId(pub String);

impl std::fmt::Display for ScalerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl MinMaxScaler {
    /// Fits over any nonempty collection of equal-length rows.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("cannot fit a scaler on zero rows"))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in iter {
            if row.len() != min.len() {
                return Err(Error::invalid("rows of unequal length"));
            }
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        Self::from_bounds(min, max)
    }

    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::invalid("scaler bounds must be nonempty and equal length"));
        }
        for i in 0..min.len() {
            if !min[i].is_finite() || !max[i].is_finite() {
                return Err(Error::invalid(format!("non-finite scaler bound at {i}")));
            }
            if max[i] <= min[i] {
                return Err(Error::DegenerateFeature {
                    index: i,
                    value: min[i],
                });
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn id(&self) -> ScalerId {
        let mut h = Sha256::new();
        for v in self.min.iter().chain(&self.max) {
            h.update(v.to_le_bytes());
        }
        let digest = h.finalize();
        ScalerId(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "scaler expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// (x − min)/(max − min), clamped to [0, 1].
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| ((v - self.min[i]) / (self.max[i] - self.min[i])).clamp(0.0, 1.0))
            .collect())
    }

    /// Exact affine inverse of the unclamped map.
    pub fn invert(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| v * (self.max[i] - self.min[i]) + self.min[i])
            .collect())
    }

    /// Scales every frame of `dataset` in `which` (or all frames for `None`).
    pub fn transform(&self, dataset: &Dataset, which: Option<Split>) -> Result<ScaledSet> {
        let indices: Vec<usize> = match which {
            Some(s) => dataset.indices(s),
            None => (0..dataset.len()).collect(),
        };
        self.transform_indices(dataset, &indices)
    }

    pub fn transform_indices(&self, dataset: &Dataset, indices: &[usize]) -> Result<ScaledSet> {
        let mut data = Vec::with_capacity(indices.len() * self.dim());
        let mut labels = Vec::with_capacity(indices.len());
        let mut snr_db = Vec::with_capacity(indices.len());
        for &i in indices {
            let f = dataset.frame(i);
            data.extend(self.apply(&f.features())?);
            labels.push(f.label() as usize);
            snr_db.push(f.snr_db());
        }
        Ok(ScaledSet {
            indices: indices.to_vec(),
            features: Matrix::from_vec(indices.len(), self.dim(), data)?,
            labels,
            snr_db,
            scaler_id: self.id(),
        })
    }
}

/// Fits the scaler on the training split only.
pub fn fit_scaler(dataset: &Dataset) -> Result<MinMaxScaler> {
    let rows: Vec<Vec<f64>> = dataset
        .indices(Split::Train)
        .into_iter()
        .map(|i| dataset.frame(i).features())
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let scaler = MinMaxScaler::fit(rows.iter().map(Vec::as_slice))?;
    debug_assert_eq!(scaler.dim(), FEATURE_DIM);
    Ok(scaler)
}

/// Scaled feature rows plus the labels and provenance needed downstream.
#[derive(Debug, Clone)]
pub struct ScaledSet {
    /// Frame index in the source dataset for each row.
    pub indices: Vec<usize>,
    pub features: Matrix,
    /// Canonical class codes.
    pub labels: Vec<usize>,
    pub snr_db: Vec<i8>,
    pub scaler_id: ScalerId,
}

impl ScaledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }
}
