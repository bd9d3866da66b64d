use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    AdaBoost, AdaBoostParams, Classifier, DecisionTree, ForestParams, GaussianNb, GradientBoosting,
    GradientBoostingParams, Knn, KnnParams, Labeled, Lda, LdaParams, NbParams, RandomForest, Svm,
    SvmParams, TreeConfig,
};
use crate::error::{Error, Result};
use crate::mlp::{MlpModel, TrainConfig};
use crate::numerics::Matrix;
use crate::signal::{MinMaxScaler, ModulationScheme, ScaledSet, ScalerId, FEATURE_DIM, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Mlp,
    Knn,
    SvmRbf,
    GaussianNb,
    Lda,
    DecisionTree,
    RandomForest,
    AdaBoost,
    GradientBoosting,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 9] = [
        Self::Mlp,
        Self::Knn,
        Self::SvmRbf,
        Self::GaussianNb,
        Self::Lda,
        Self::DecisionTree,
        Self::RandomForest,
        Self::AdaBoost,
        Self::GradientBoosting,
    ];

    /// Short name used on the command line, in file names and in reports.
    pub fn slug(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::Knn => "knn",
            Self::SvmRbf => "svm",
            Self::GaussianNb => "nb",
            Self::Lda => "lda",
            Self::DecisionTree => "dt",
            Self::RandomForest => "rf",
            Self::AdaBoost => "adaboost",
            Self::GradientBoosting => "gb",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::Mlp => "MLP",
            Self::Knn => "KNN",
            Self::SvmRbf => "SVM (RBF)",
            Self::GaussianNb => "Gaussian NB",
            Self::Lda => "LDA",
            Self::DecisionTree => "Decision tree",
            Self::RandomForest => "Random forest",
            Self::AdaBoost => "AdaBoost",
            Self::GradientBoosting => "Gradient boosting",
        }
    }

    pub fn format_tag(self) -> String {
        format!("modadv-{}-v1", self.slug())
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.slug() == lower)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.slug()).collect();
                Error::invalid(format!("unknown classifier `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Hyperparameters for every kind, with the pinned defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ClassifierConfig {
    pub mlp: TrainConfig,
    pub knn: KnnParams,
    pub svm: SvmParams,
    pub nb: NbParams,
    pub lda: LdaParams,
    pub tree: TreeConfig,
    pub forest: ForestParams,
    pub adaboost: AdaBoostParams,
    pub gb: GradientBoostingParams,
}

impl ClassifierConfig {
    /// Defaults with every seeded component driven by `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut c = Self::default();
        c.mlp.seed = seed;
        c.svm.seed = seed;
        c.forest.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mlp(MlpModel),
    Knn(Knn),
    Svm(Svm),
    Nb(GaussianNb),
    Lda(Lda),
    Tree(DecisionTree),
    Forest(RandomForest),
    AdaBoost(AdaBoost),
    Gb(GradientBoosting),
}

/// Any of the nine classifiers together with the scaler its inputs must
/// come from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    model: Model,
    scaler: MinMaxScaler,
    seed: u64,
}

impl TrainedClassifier {
    /// Trains one classifier on a scaled training set. Single-threaded and
    /// deterministic in (data, config).
    pub fn train(
        kind: ClassifierKind,
        data: &ScaledSet,
        scaler: &MinMaxScaler,
        config: &ClassifierConfig,
    ) -> Result<Self> {
        if data.scaler_id != scaler.id() {
            return Err(Error::contract(format!(
                "training features scaled with {}, scaler given is {}",
                data.scaler_id,
                scaler.id()
            )));
        }
        let labeled = Labeled::new(&data.features, &data.labels, NUM_CLASSES)?;
        let (model, seed) = match kind {
            ClassifierKind::Mlp => {
                let mut m = MlpModel::init(scaler.clone(), &config.mlp)?;
                m.fit(data, &config.mlp)?;
                (Model::Mlp(m), config.mlp.seed)
            }
            ClassifierKind::Knn => (Model::Knn(Knn::fit(labeled, config.knn)?), 0),
            ClassifierKind::SvmRbf => (Model::Svm(Svm::fit(labeled, config.svm)?), config.svm.seed),
            ClassifierKind::GaussianNb => (Model::Nb(GaussianNb::fit(labeled, config.nb)?), 0),
            ClassifierKind::Lda => (Model::Lda(Lda::fit(labeled, config.lda)?), 0),
            ClassifierKind::DecisionTree => (Model::Tree(DecisionTree::fit(labeled, config.tree)?), 0),
            ClassifierKind::RandomForest => (
                Model::Forest(RandomForest::fit(labeled, config.forest)?),
                config.forest.seed,
            ),
            ClassifierKind::AdaBoost => (Model::AdaBoost(AdaBoost::fit(labeled, config.adaboost)?), 0),
            ClassifierKind::GradientBoosting => (Model::Gb(GradientBoosting::fit(labeled, config.gb)?), 0),
        };
        Ok(Self {
            model,
            scaler: scaler.clone(),
            seed,
        })
    }

    pub fn from_mlp(model: MlpModel) -> Self {
        let scaler = model.scaler().clone();
        let seed = model.train_meta().seed;
        Self {
            model: Model::Mlp(model),
            scaler,
            seed,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match &self.model {
            Model::Mlp(_) => ClassifierKind::Mlp,
            Model::Knn(_) => ClassifierKind::Knn,
            Model::Svm(_) => ClassifierKind::SvmRbf,
            Model::Nb(_) => ClassifierKind::GaussianNb,
            Model::Lda(_) => ClassifierKind::Lda,
            Model::Tree(_) => ClassifierKind::DecisionTree,
            Model::Forest(_) => ClassifierKind::RandomForest,
            Model::AdaBoost(_) => ClassifierKind::AdaBoost,
            Model::Gb(_) => ClassifierKind::GradientBoosting,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn as_mlp(&self) -> Option<&MlpModel> {
        match &self.model {
            Model::Mlp(m) => Some(m),
            _ => None,
        }
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub fn scaler_id(&self) -> ScalerId {
        self.scaler.id()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn classifier(&self) -> &dyn Classifier {
        match &self.model {
            Model::Mlp(_) => unreachable!("MLP handled separately"),
            Model::Knn(m) => m,
            Model::Svm(m) => m,
            Model::Nb(m) => m,
            Model::Lda(m) => m,
            Model::Tree(m) => m,
            Model::Forest(m) => m,
            Model::AdaBoost(m) => m,
            Model::Gb(m) => m,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != FEATURE_DIM {
            return Err(Error::contract(format!(
                "expected {FEATURE_DIM} features, got {}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite feature value"));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match &self.model {
            Model::Mlp(m) => m.predict_proba(x),
            _ => Ok(self.classifier().predict_proba(x)),
        }
    }

    /// `argmax(predict_proba(x))`, ties toward the lowest label code.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        match &self.model {
            Model::Mlp(m) => m.predict(x),
            _ => Ok(self.classifier().predict(x)),
        }
    }

    /// Predicts every row; the scaler fingerprint must match.
    pub fn predict_batch(&self, data: &ScaledSet) -> Result<Vec<usize>> {
        if data.scaler_id != self.scaler_id() {
            return Err(Error::contract(format!(
                "features scaled with scaler {}, classifier expects {}",
                data.scaler_id,
                self.scaler_id()
            )));
        }
        self.predict_rows(&data.features)
    }

    /// Predicts the rows of an already scaled matrix. Rows are independent, so
    /// this parallelizes without affecting results.
    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<usize>> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.predict(x.row(i)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let (hyperparams, payload) = match &self.model {
            Model::Mlp(m) => return m.to_json(),
            Model::Knn(m) => (to_value(m.params()), to_value(m)),
            Model::Svm(m) => (to_value(m.params()), to_value(m)),
            Model::Nb(m) => (to_value(m.params()), to_value(m)),
            Model::Lda(m) => (to_value(m.params()), to_value(m)),
            Model::Tree(m) => (to_value(m.params()), to_value(m)),
            Model::Forest(m) => (to_value(m.params()), to_value(m)),
            Model::AdaBoost(m) => (to_value(m.params()), to_value(m)),
            Model::Gb(m) => (to_value(m.params()), to_value(m)),
        };
        let file = ModelFile {
            format: self.kind().format_tag(),
            hyperparams,
            payload,
            scaler: self.scaler.clone(),
            label_order: canonical_order(),
            seed: self.seed,
        };
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format: String,
        }
        let probe: Probe = deserialize_at(text)?;
        if probe.format == ClassifierKind::Mlp.format_tag() {
            return MlpModel::from_json(text).map(Self::from_mlp);
        }
        let kind = ClassifierKind::ALL
            .into_iter()
            .find(|k| k.format_tag() == probe.format)
            .ok_or_else(|| Error::Schema {
                field: "format".into(),
                message: format!("unknown model format `{}`", probe.format),
            })?;
        let file: ModelFile = deserialize_at(text)?;
        if file.label_order != canonical_order() {
            return Err(Error::Schema {
                field: "label_order".into(),
                message: "must list codes 0..7 in canonical order".into(),
            });
        }
        let scaler = MinMaxScaler::from_bounds(file.scaler.min.clone(), file.scaler.max.clone()).map_err(
            |e| Error::Schema {
                field: "scaler".into(),
                message: e.to_string(),
            },
        )?;
        if scaler.dim() != FEATURE_DIM {
            return Err(Error::Schema {
                field: "scaler".into(),
                message: format!("scaler has {} features", scaler.dim()),
            });
        }
        let model = decode_payload(kind, &file)?;
        Ok(Self {
            model,
            scaler,
            seed: file.seed,
        })
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
struct ModelFile {
    format: String,
    hyperparams: serde_json::Value,
    payload: serde_json::Value,
    scaler: MinMaxScaler,
    label_order: Vec<u8>,
    seed: u64,
}

fn canonical_order() -> Vec<u8> {
    ModulationScheme::ALL.iter().map(|m| m.code()).collect()
}

fn to_value<T: Serialize>(v: T) -> serde_json::Value {
    serde_json::to_value(v).expect("classifier state serializes")
}

fn deserialize_at<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn from_value<T: DeserializeOwned>(section: &str, v: &serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| Error::Schema {
        field: format!("{section}.{}", e.path()),
        message: e.inner().to_string(),
    })
}

fn decode_payload(kind: ClassifierKind, file: &ModelFile) -> Result<Model> {
    fn load<T, P>(file: &ModelFile, params_of: impl Fn(&T) -> P, check: impl Fn(&T) -> Result<()>) -> Result<T>
    where
        T: DeserializeOwned,
        P: DeserializeOwned + PartialEq,
    {
        let params: P = from_value("hyperparams", &file.hyperparams)?;
        let model: T = from_value("payload", &file.payload)?;
        if params_of(&model) != params {
            return Err(Error::Schema {
                field: "hyperparams".into(),
                message: "hyperparameters disagree with the payload".into(),
            });
        }
        check(&model).map_err(|e| Error::Schema {
            field: "payload".into(),
            message: e.to_string(),
        })?;
        Ok(model)
    }
    let d = FEATURE_DIM;
    Ok(match kind {
        ClassifierKind::Mlp => unreachable!("dispatched before"),
        ClassifierKind::Knn => Model::Knn(load(file, Knn::params, |m: &Knn| {
            m.validate()?;
            dims(m.x.cols(), m.n_classes)
        })?),
        ClassifierKind::SvmRbf => Model::Svm(load(file, Svm::params, |m: &Svm| {
            m.validate(d)?;
            dims(d, m.n_classes)
        })?),
        ClassifierKind::GaussianNb => Model::Nb(load(file, GaussianNb::params, |m: &GaussianNb| {
            m.validate(d)?;
            dims(d, m.log_prior.len())
        })?),
        ClassifierKind::Lda => Model::Lda(load(file, Lda::params, |m: &Lda| {
            m.validate(d)?;
            dims(d, m.coef.len())
        })?),
        ClassifierKind::DecisionTree => Model::Tree(load(file, DecisionTree::params, |m: &DecisionTree| {
            m.validate(d)?;
            dims(d, m.n_classes)
        })?),
        ClassifierKind::RandomForest => Model::Forest(load(file, RandomForest::params, |m: &RandomForest| {
            m.validate(d)?;
            dims(d, m.n_classes)
        })?),
        ClassifierKind::AdaBoost => Model::AdaBoost(load(file, AdaBoost::params, |m: &AdaBoost| {
            m.validate(d)?;
            dims(d, m.n_classes)
        })?),
        ClassifierKind::GradientBoosting => Model::Gb(load(file, GradientBoosting::params, |m: &GradientBoosting| {
            m.validate(d)?;
            dims(d, m.init.len())
        })?),
    })
}

fn dims(dim: usize, classes: usize) -> Result<()> {
    if dim != FEATURE_DIM || classes != NUM_CLASSES {
        return Err(Error::invalid(format!(
            "expected {FEATURE_DIM} features and {NUM_CLASSES} classes, found {dim} and {classes}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::signal::MinMaxScaler;

    fn unit_scaler() -> MinMaxScaler {
        MinMaxScaler::from_bounds(vec![0.0; FEATURE_DIM], vec![1.0; FEATURE_DIM]).unwrap()
    }

    /// 8 classes separated along the first two features, 20 rows each.
    fn toy_set(scaler: &MinMaxScaler) -> ScaledSet {
        let mut rng = Rng::new(17);
        let n = 160;
        let mut data = Vec::with_capacity(n * FEATURE_DIM);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % NUM_CLASSES;
            for j in 0..FEATURE_DIM {
                let base = match j {
                    0 => (c % 4) as f64 / 4.0 + 0.1,
                    1 => (c / 4) as f64 / 2.0 + 0.2,
                    _ => 0.5,
                };
                data.push((base + 0.03 * rng.gaussian()).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
        ScaledSet {
            indices: (0..n).collect(),
            features: Matrix::from_vec(n, FEATURE_DIM, data).unwrap(),
            labels,
            snr_db: vec![0; n],
            scaler_id: scaler.id(),
        }
    }

    fn small_config() -> ClassifierConfig {
        let mut c = ClassifierConfig::seeded(5);
        c.mlp.epochs = 2;
        c.knn.k = 3;
        c.forest.n_trees = 3;
        c.adaboost.rounds = 5;
        c.gb.rounds = 3;
        c
    }

    #[test]
    fn every_kind_round_trips_through_json() {
        let scaler = unit_scaler();
        let data = toy_set(&scaler);
        let config = small_config();
        for kind in ClassifierKind::ALL {
            let clf = TrainedClassifier::train(kind, &data, &scaler, &config).unwrap();
            assert_eq!(clf.kind(), kind);
            let text = clf.to_json();
            assert!(text.contains(&kind.format_tag()), "{kind}");
            let back = TrainedClassifier::from_json(&text).unwrap();
            assert_eq!(back.to_json(), text, "{kind}");
            let preds = clf.predict_batch(&data).unwrap();
            assert_eq!(back.predict_batch(&data).unwrap(), preds);
            for i in 0..data.len() {
                let p = clf.predict_proba(data.row(i)).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{kind}");
                assert_eq!(crate::numerics::argmax(&p), preds[i], "{kind}");
            }
            if kind != ClassifierKind::Mlp {
                let acc = preds.iter().zip(&data.labels).filter(|(a, b)| a == b).count();
                // Chance is 1/8; five stumps cannot separate eight classes.
                assert!(acc * 4 > data.len(), "{kind} accuracy {acc}/{}", data.len());
            }
        }
    }

    #[test]
    fn scaler_mismatch_is_a_contract_error() {
        let scaler = unit_scaler();
        let data = toy_set(&scaler);
        let clf = TrainedClassifier::train(ClassifierKind::Knn, &data, &scaler, &small_config()).unwrap();
        let mut other = data.clone();
        other.scaler_id = ScalerId("0000000000000000".into());
        assert!(matches!(clf.predict_batch(&other), Err(Error::Contract(_))));
        assert!(matches!(clf.predict(&[0.5; 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn knn_default_k_recorded() {
        let scaler = unit_scaler();
        let data = toy_set(&scaler);
        let clf = TrainedClassifier::train(ClassifierKind::Knn, &data, &scaler, &ClassifierConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&clf.to_json()).unwrap();
        assert_eq!(v["hyperparams"]["k"], 15);
        assert_eq!(v["payload"]["k"], 15);
    }

    #[test]
    fn single_class_training_predicts_that_class() {
        let scaler = unit_scaler();
        let mut data = toy_set(&scaler);
        data.labels.iter_mut().for_each(|l| *l = 5);
        let mut config = small_config();
        config.mlp.epochs = 5;
        for kind in ClassifierKind::ALL {
            if kind == ClassifierKind::Mlp {
                continue;
            }
            let clf = TrainedClassifier::train(kind, &data, &scaler, &config).unwrap();
            assert!(clf.predict_batch(&data).unwrap().iter().all(|&p| p == 5), "{kind}");
        }
    }

    #[test]
    fn tampered_payload_rejected() {
        let scaler = unit_scaler();
        let data = toy_set(&scaler);
        let clf = TrainedClassifier::train(ClassifierKind::DecisionTree, &data, &scaler, &small_config()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&clf.to_json()).unwrap();
        v["hyperparams"]["max_depth"] = 3.into();
        let err = TrainedClassifier::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Schema { ref field, .. } if field == "hyperparams"), "{err}");

        let text = clf.to_json().replace("modadv-dt-v1", "modadv-xx-v1");
        assert!(matches!(
            TrainedClassifier::from_json(&text),
            Err(Error::Schema { ref field, .. }) if field == "format"
        ));
    }

    #[test]
    fn kind_names_parse() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.slug().parse::<ClassifierKind>().unwrap(), k);
        }
        assert!("perceptron".parse::<ClassifierKind>().is_err());
    }
}
