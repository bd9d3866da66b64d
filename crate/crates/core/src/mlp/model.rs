use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Dense, Network};
use super::train::{train_network, LossCurve, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::signal::{MinMaxScaler, ModulationScheme, ScaledSet, ScalerId, FEATURE_DIM, NUM_CLASSES};

pub const HIDDEN_LAYERS: usize = 4;
pub const LAYER_SIZES: [usize; HIDDEN_LAYERS + 2] = [FEATURE_DIM, 256, 128, 64, 32, NUM_CLASSES];
pub const MLP_FORMAT: &str = "modadv-mlp-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
}

impl From<&TrainConfig> for TrainMeta {
    fn from(c: &TrainConfig) -> Self {
        Self {
            seed: c.seed,
            epochs: c.epochs,
            lr: c.learning_rate,
            momentum: c.momentum,
            batch: c.batch_size,
        }
    }
}

/// The white-box victim: four ReLU hidden layers, softmax head, and the
/// scaler whose [0, 1] box the attacks operate in.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    network: Network,
    scaler: MinMaxScaler,
    label_order: Vec<u8>,
    train_meta: TrainMeta,
}

impl MlpModel {
    /// Freshly initialized, untrained model.
    pub fn init(scaler: MinMaxScaler, config: &TrainConfig) -> Result<Self> {
        let network = Network::init(&LAYER_SIZES, &mut Rng::new(config.seed))?;
        Self::from_parts(
            network,
            scaler,
            TrainMeta {
                epochs: 0,
                ..TrainMeta::from(config)
            },
        )
    }

    pub fn from_parts(network: Network, scaler: MinMaxScaler, train_meta: TrainMeta) -> Result<Self> {
        let sizes = network.layer_sizes();
        if sizes.len() != HIDDEN_LAYERS + 2 {
            return Err(Error::Schema {
                field: "layer_sizes".into(),
                message: format!(
                    "expected exactly {HIDDEN_LAYERS} hidden layers, found {}",
                    sizes.len().saturating_sub(2)
                ),
            });
        }
        if sizes[0] != FEATURE_DIM || sizes[sizes.len() - 1] != NUM_CLASSES {
            return Err(Error::Schema {
                field: "layer_sizes".into(),
                message: format!("expected {FEATURE_DIM} inputs and {NUM_CLASSES} outputs"),
            });
        }
        if scaler.dim() != FEATURE_DIM {
            return Err(Error::Schema {
                field: "scaler".into(),
                message: format!("scaler has {} features", scaler.dim()),
            });
        }
        Ok(Self {
            network,
            scaler,
            label_order: ModulationScheme::ALL.iter().map(|m| m.code()).collect(),
            train_meta,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub fn scaler_id(&self) -> ScalerId {
        self.scaler.id()
    }

    pub fn train_meta(&self) -> &TrainMeta {
        &self.train_meta
    }

    pub fn label_order(&self) -> &[u8] {
        &self.label_order
    }

    fn check_scaler(&self, data: &ScaledSet) -> Result<()> {
        if data.scaler_id != self.scaler_id() {
            return Err(Error::contract(format!(
                "features scaled with scaler {}, model expects {}",
                data.scaler_id,
                self.scaler_id()
            )));
        }
        Ok(())
    }

    /// Trains in place on a scaled training set; returns the per-epoch loss.
    pub fn fit(&mut self, data: &ScaledSet, config: &TrainConfig) -> Result<LossCurve> {
        self.check_scaler(data)?;
        let curve = train_network(&mut self.network, &data.features, &data.labels, config)?;
        self.train_meta = TrainMeta::from(config);
        Ok(curve)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.network.predict(x)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.network.predict_proba(x)
    }

    pub fn predict_batch(&self, data: &ScaledSet) -> Result<Vec<usize>> {
        self.check_scaler(data)?;
        data.features.row_iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> String {
        let layers = self.network.layers();
        let file = MlpFile {
            format: MLP_FORMAT.to_string(),
            layer_sizes: self.network.layer_sizes(),
            weights: layers.iter().map(|l| l.weights.to_rows()).collect(),
            biases: layers.iter().map(|l| l.bias.clone()).collect(),
            scaler: self.scaler.clone(),
            label_order: self.label_order.clone(),
            train_meta: self.train_meta,
        };
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: MlpFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpFile {
    format: String,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    scaler: MinMaxScaler,
    label_order: Vec<u8>,
    train_meta: TrainMeta,
}

impl MlpFile {
    fn into_model(self) -> Result<MlpModel> {
        let schema = |field: &str, message: String| Error::Schema {
            field: field.to_string(),
            message,
        };
        if self.format != MLP_FORMAT {
            return Err(schema("format", format!("expected `{MLP_FORMAT}`, found `{}`", self.format)));
        }
        if self.layer_sizes.len() != HIDDEN_LAYERS + 2 {
            return Err(schema(
                "layer_sizes",
                format!(
                    "expected exactly {HIDDEN_LAYERS} hidden layers, found {}",
                    self.layer_sizes.len().saturating_sub(2)
                ),
            ));
        }
        let expected_order: Vec<u8> = ModulationScheme::ALL.iter().map(|m| m.code()).collect();
        if self.label_order != expected_order {
            return Err(schema("label_order", "must list codes 0..7 in canonical order".into()));
        }
        let n_layers = self.layer_sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(schema("weights", format!("expected {n_layers} weight and bias arrays")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (l, (w, b)) in self.weights.into_iter().zip(self.biases).enumerate() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if w.len() != fan_out || w.iter().any(|r| r.len() != fan_in) {
                return Err(schema(
                    &format!("weights[{l}]"),
                    format!("expected {fan_out}x{fan_in}"),
                ));
            }
            if b.len() != fan_out {
                return Err(schema(&format!("biases[{l}]"), format!("expected {fan_out} entries")));
            }
            let matrix = Matrix::from_rows(&w)
                .map_err(|e| schema(&format!("weights[{l}]"), e.to_string()))?;
            let dense = Dense::new(matrix, b).map_err(|e| schema(&format!("biases[{l}]"), e.to_string()))?;
            layers.push(dense);
        }
        let scaler = MinMaxScaler::from_bounds(self.scaler.min, self.scaler.max)
            .map_err(|e| schema("scaler", e.to_string()))?;
        MlpModel::from_parts(Network::new(layers)?, scaler, self.train_meta)
    }
}
