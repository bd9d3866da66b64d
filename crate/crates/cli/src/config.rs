//! Plain-text `key = value` experiment configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use modadv::attacks::{AttackMethod, CwConfig, FgsmConfig};
use modadv::classical::ClassifierConfig;
use modadv::mlp::Surrogate;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub frames_per_cell: usize,
    pub out_dir: PathBuf,
    /// Read this dataset instead of synthesizing one.
    pub dataset: Option<PathBuf>,
    /// Defaults to `<out_dir>/models`.
    pub models_dir: Option<PathBuf>,
    pub threads: usize,
    pub attack: AttackMethod,
    pub classifiers: ClassifierConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new(42)
    }
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            frames_per_cell: 100,
            out_dir: PathBuf::from("run"),
            dataset: None,
            models_dir: None,
            threads: 1,
            attack: AttackMethod::Cw(CwConfig::default()),
            classifiers: ClassifierConfig::seeded(seed),
        }
    }

    pub fn models_dir(&self) -> PathBuf {
        self.models_dir.clone().unwrap_or_else(|| self.out_dir.join("models"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(n, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(usage(n, format!("duplicate key `{k}`")));
            }
            entries.push((n, k.to_string(), v.to_string()));
        }

        // The seed feeds every seeded component, so it is applied first.
        let seed = match entries.iter().find(|(_, k, _)| k == "seed") {
            Some((n, _, v)) => num(*n, "seed", v)?,
            None => 42,
        };
        let mut cfg = Self::new(seed);
        let mut cw = CwConfig::default();
        let mut fgsm = FgsmConfig::default();
        let mut method = "cw".to_string();

        for (n, k, v) in &entries {
            let n = *n;
            let c = &mut cfg.classifiers;
            match k.as_str() {
                "seed" => {}
                "frames_per_cell" => cfg.frames_per_cell = num(n, k, v)?,
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "dataset" => cfg.dataset = Some(PathBuf::from(v)),
                "models_dir" => cfg.models_dir = Some(PathBuf::from(v)),
                "threads" => cfg.threads = num(n, k, v)?,
                "attack.method" => match v.as_str() {
                    "cw" | "fgsm" => method = v.clone(),
                    _ => return Err(usage(n, format!("attack.method must be cw or fgsm, got `{v}`"))),
                },
                "attack.epsilon" => fgsm.epsilon = num(n, k, v)?,
                "attack.clip_to_box" => fgsm.clip_to_box = num(n, k, v)?,
                "attack.c_init" => cw.c_init = num(n, k, v)?,
                "attack.c_search_steps" => cw.c_search_steps = num(n, k, v)?,
                "attack.c_max" => cw.c_max = num(n, k, v)?,
                "attack.inner_iterations" => cw.inner_iterations = num(n, k, v)?,
                "attack.step_size" => cw.step_size = num(n, k, v)?,
                "attack.confidence" => cw.confidence = num(n, k, v)?,
                "attack.abort_early" => cw.abort_early = num(n, k, v)?,
                "attack.surrogate" => {
                    cw.surrogate = match v.as_str() {
                        "softmax" => Surrogate::Softmax,
                        "logits" => Surrogate::Logits,
                        _ => return Err(usage(n, format!("attack.surrogate must be softmax or logits, got `{v}`"))),
                    }
                }
                "mlp.learning_rate" => c.mlp.learning_rate = num(n, k, v)?,
                "mlp.momentum" => c.mlp.momentum = num(n, k, v)?,
                "mlp.batch_size" => c.mlp.batch_size = num(n, k, v)?,
                "mlp.epochs" => c.mlp.epochs = num(n, k, v)?,
                "knn.k" => c.knn.k = num(n, k, v)?,
                "svm.c" => c.svm.c = num(n, k, v)?,
                "svm.gamma" => c.svm.gamma = if v == "auto" { None } else { Some(num(n, k, v)?) },
                "svm.cap_per_class" => c.svm.cap_per_class = num(n, k, v)?,
                "svm.tolerance" => c.svm.tolerance = num(n, k, v)?,
                "nb.var_smoothing" => c.nb.var_smoothing = num(n, k, v)?,
                "lda.shrinkage" => c.lda.shrinkage = num(n, k, v)?,
                "dt.max_depth" => c.tree.max_depth = num(n, k, v)?,
                "rf.n_trees" => c.forest.n_trees = num(n, k, v)?,
                "rf.max_depth" => c.forest.max_depth = num(n, k, v)?,
                "rf.max_features" => c.forest.max_features = if v == "sqrt" { None } else { Some(num(n, k, v)?) },
                "rf.bootstrap" => c.forest.bootstrap = num(n, k, v)?,
                "adaboost.rounds" => c.adaboost.rounds = num(n, k, v)?,
                "gb.rounds" => c.gb.rounds = num(n, k, v)?,
                "gb.max_depth" => c.gb.max_depth = num(n, k, v)?,
                "gb.shrinkage" => c.gb.shrinkage = num(n, k, v)?,
                _ => return Err(usage(n, format!("unknown key `{k}`"))),
            }
        }
        cfg.attack = if method == "cw" {
            AttackMethod::Cw(cw)
        } else {
            AttackMethod::Fgsm(fgsm)
        };
        cfg.attack.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if cfg.frames_per_cell == 0 {
            return Err(CliError::Usage("frames_per_cell must be at least 1".into()));
        }
        if cfg.threads == 0 {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// Every key with its effective value; parsing this text yields `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("frames_per_cell", self.frames_per_cell.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        if let Some(d) = &self.dataset {
            kv("dataset", d.display().to_string());
        }
        kv("models_dir", self.models_dir().display().to_string());
        kv("threads", self.threads.to_string());
        kv("attack.method", self.attack.name().to_string());
        match &self.attack {
            AttackMethod::Cw(cw) => {
                kv("attack.c_init", cw.c_init.to_string());
                kv("attack.c_search_steps", cw.c_search_steps.to_string());
                kv("attack.c_max", cw.c_max.to_string());
                kv("attack.inner_iterations", cw.inner_iterations.to_string());
                kv("attack.step_size", cw.step_size.to_string());
                let surrogate = match cw.surrogate {
                    Surrogate::Softmax => "softmax",
                    Surrogate::Logits => "logits",
                };
                kv("attack.surrogate", surrogate.to_string());
                kv("attack.confidence", cw.confidence.to_string());
                kv("attack.abort_early", cw.abort_early.to_string());
            }
            AttackMethod::Fgsm(f) => {
                kv("attack.epsilon", f.epsilon.to_string());
                kv("attack.clip_to_box", f.clip_to_box.to_string());
            }
        }
        let c = &self.classifiers;
        kv("mlp.learning_rate", c.mlp.learning_rate.to_string());
        kv("mlp.momentum", c.mlp.momentum.to_string());
        kv("mlp.batch_size", c.mlp.batch_size.to_string());
        kv("mlp.epochs", c.mlp.epochs.to_string());
        kv("knn.k", c.knn.k.to_string());
        kv("svm.c", c.svm.c.to_string());
        kv("svm.gamma", c.svm.gamma.map_or("auto".into(), |g| g.to_string()));
        kv("svm.cap_per_class", c.svm.cap_per_class.to_string());
        kv("svm.tolerance", c.svm.tolerance.to_string());
        kv("nb.var_smoothing", c.nb.var_smoothing.to_string());
        kv("lda.shrinkage", c.lda.shrinkage.to_string());
        kv("dt.max_depth", c.tree.max_depth.to_string());
        kv("rf.n_trees", c.forest.n_trees.to_string());
        kv("rf.max_depth", c.forest.max_depth.to_string());
        kv("rf.max_features", c.forest.max_features.map_or("sqrt".into(), |m| m.to_string()));
        kv("rf.bootstrap", c.forest.bootstrap.to_string());
        kv("adaboost.rounds", c.adaboost.rounds.to_string());
        kv("gb.rounds", c.gb.rounds.to_string());
        kv("gb.max_depth", c.gb.max_depth.to_string());
        kv("gb.shrinkage", c.gb.shrinkage.to_string());
        s
    }
}

fn usage(line: usize, msg: String) -> CliError {
    CliError::Usage(format!("line {}: {msg}", line + 1))
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| usage(line, format!("bad value `{v}` for `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        let cfg = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.classifiers.knn.k, 15);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse(
            "seed = 7   # trailing\nframes_per_cell=10\nknn.k = 5\nattack.method = fgsm\nattack.epsilon = 0.05\nsvm.gamma = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.classifiers.mlp.seed, 7);
        assert_eq!(cfg.classifiers.forest.seed, 7);
        assert_eq!(cfg.frames_per_cell, 10);
        assert_eq!(cfg.classifiers.knn.k, 5);
        assert_eq!(cfg.classifiers.svm.gamma, Some(0.5));
        assert_eq!(cfg.attack, AttackMethod::Fgsm(FgsmConfig::new(0.05)));
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        for bad in ["colour = blue\n", "seed = 1\nseed = 2\n", "seed\n", "knn.k = many\n", "attack.method = pgd\n"] {
            assert!(matches!(RunConfig::parse(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn rendered_snapshot_parses_back() {
        let mut cfg = RunConfig::parse("seed = 3\nrf.max_features = 9\nattack.surrogate = logits\nmlp.learning_rate = 0.003\n").unwrap();
        cfg.models_dir = Some(PathBuf::from("elsewhere"));
        let back = RunConfig::parse(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.render(), cfg.render());
    }
}
