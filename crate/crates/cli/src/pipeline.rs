//! The synth → train → attack → eval steps, shared by the subcommands and
//! `run-experiment`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use modadv::attacks::{attack_batch, write_metadata_csv, AttackMethod, BatchOutput, MetadataRow};
use modadv::classical::{ClassifierConfig, ClassifierKind, TrainedClassifier};
use modadv::eval::{
    emit_csv, emit_svg, sha256_file, EvalReport, PairedPredictions, ReportMeta, TransferRate,
};
use modadv::mlp::MlpModel;
use modadv::signal::{build_dataset, fit_scaler, write_iqd, Dataset, ModulationScheme, Split, SNR_GRID};

use crate::{CliError, RunConfig};

type Result<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

/// Where `run-experiment` puts each artifact inside its output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub dataset: PathBuf,
    pub models_dir: PathBuf,
    pub adversarial: PathBuf,
    pub metadata: PathBuf,
    pub attack_config: PathBuf,
    pub report_csv: PathBuf,
    pub report_svg: PathBuf,
    pub report_meta: PathBuf,
    pub transfer_csv: PathBuf,
    pub resolved_config: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        let out = &cfg.out_dir;
        Self {
            dataset: cfg.dataset.clone().unwrap_or_else(|| out.join("dataset.iqd")),
            models_dir: cfg.models_dir(),
            adversarial: out.join("adversarial.iqd"),
            metadata: out.join("attack_metadata.csv"),
            attack_config: out.join("attack_config.json"),
            report_csv: out.join("report.csv"),
            report_svg: out.join("report.svg"),
            report_meta: out.join("report_meta.json"),
            transfer_csv: out.join("transfer.csv"),
            resolved_config: out.join("resolved.cfg"),
        }
    }
}

pub fn model_path(dir: &Path, kind: ClassifierKind) -> PathBuf {
    dir.join(format!("{}.json", kind.slug()))
}

pub fn synthesize(frames_per_cell: usize, seed: u64, out: &Path) -> Result<Dataset> {
    let ds = build_dataset(frames_per_cell, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_iqd(&ds, out)?;
    Ok(ds)
}

/// Frame counts per (scheme, SNR) as a fixed-width table.
pub fn strata_table(ds: &Dataset) -> String {
    let counts = ds.stratum_counts(None);
    let mut s = format!("{:<8}", "scheme");
    for snr in SNR_GRID {
        let _ = write!(s, "{snr:>5}");
    }
    s.push('\n');
    for (scheme, row) in ModulationScheme::ALL.iter().zip(counts.iter()) {
        let _ = write!(s, "{:<8}", scheme.name());
        for c in row {
            let _ = write!(s, "{c:>5}");
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "total {} frames ({} train, {} test)",
        ds.len(),
        ds.indices(Split::Train).len(),
        ds.indices(Split::Test).len()
    );
    s
}

/// Fits the shared scaler on the training split, trains each kind and writes
/// `<slug>.json` plus a `<slug>.log` training log into `dir`.
pub fn train_classifiers(
    ds: &Dataset,
    kinds: &[ClassifierKind],
    config: &ClassifierConfig,
    dir: &Path,
    log: &mut dyn Write,
) -> Result<Vec<TrainedClassifier>> {
    create_dir(dir)?;
    let scaler = fit_scaler(ds)?;
    let train = scaler.transform(ds, Some(Split::Train))?;
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let started = Instant::now();
        let mut text = format!("classifier = {}\ntrain_frames = {}\nscaler = {}\n", kind.slug(), train.len(), scaler.id());
        let trained = if kind == ClassifierKind::Mlp {
            let mut m = MlpModel::init(scaler.clone(), &config.mlp)?;
            let curve = m.fit(&train, &config.mlp)?;
            text.push_str("epoch,loss\n");
            for (i, l) in curve.0.iter().enumerate() {
                let _ = writeln!(text, "{},{l}", i + 1);
            }
            TrainedClassifier::from_mlp(m)
        } else {
            TrainedClassifier::train(kind, &train, &scaler, config)?
        };
        let path = model_path(dir, kind);
        trained.save(&path)?;
        write_file(&dir.join(format!("{}.log", kind.slug())), text)?;
        let _ = writeln!(log, "trained {:<18} {:>7.1}s -> {}", kind.display_name(), started.elapsed().as_secs_f64(), path.display());
        out.push(trained);
    }
    Ok(out)
}

pub fn load_classifiers(dir: &Path, kinds: &[ClassifierKind]) -> Result<Vec<TrainedClassifier>> {
    kinds
        .iter()
        .map(|&k| {
            let path = model_path(dir, k);
            if !path.is_file() {
                return Err(CliError::Runtime(format!("missing model file {}", path.display())));
            }
            let model = TrainedClassifier::load(&path)?;
            if model.kind() != k {
                return Err(CliError::Runtime(format!("{} holds a {} model, expected {k}", path.display(), model.kind())));
            }
            Ok(model)
        })
        .collect()
}

pub fn attack_config_json(method: &AttackMethod) -> String {
    serde_json::to_string_pretty(method).expect("attack configs serialize")
}

/// Attacks every test frame and writes the adversarial dataset, the metadata
/// table and the attack configuration.
pub fn run_attack(
    mlp: &MlpModel,
    ds: &Dataset,
    method: &AttackMethod,
    adv_path: &Path,
    meta_path: &Path,
    config_path: &Path,
) -> Result<BatchOutput> {
    let test = mlp.scaler().transform(ds, Some(Split::Test))?;
    let out = attack_batch(mlp, ds, &test, method)?;
    if let Some(dir) = adv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_iqd(&out.adversarial, adv_path)?;
    write_metadata_csv(&out.metadata, meta_path)?;
    write_file(config_path, attack_config_json(method) + "\n")?;
    Ok(out)
}

pub fn transfer_csv(rates: &[TransferRate]) -> String {
    let mut s = String::from("classifier,eligible,flipped,rate\n");
    for t in rates {
        let _ = writeln!(s, "{},{},{},{}", t.classifier.slug(), t.eligible, t.flipped, t.rate());
    }
    s
}

pub struct EvalPaths<'a> {
    pub csv: &'a Path,
    pub svg: &'a Path,
    pub meta: &'a Path,
    pub transfer: &'a Path,
}

#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    classifiers: &[TrainedClassifier],
    model_files: &[PathBuf],
    clean: &Dataset,
    adv: &Dataset,
    metadata: &[MetadataRow],
    attack_config_digest: String,
    paths: EvalPaths<'_>,
) -> Result<(EvalReport, Vec<TransferRate>)> {
    let mut model_digests = Vec::with_capacity(model_files.len());
    for (c, p) in classifiers.iter().zip(model_files) {
        model_digests.push((c.kind().slug().to_string(), sha256_file(p)?));
    }
    let meta = ReportMeta {
        dataset_seed: clean.seed(),
        attack_config_digest,
        model_digests,
    };
    let paired = PairedPredictions::compute(classifiers, clean, adv, metadata)?;
    let report = paired.report(meta);
    let transfer = paired.transfer();
    if let Some(dir) = paths.csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    emit_csv(&report, paths.csv)?;
    emit_svg(&report, paths.svg)?;
    write_file(
        paths.meta,
        serde_json::to_string_pretty(&report.meta).expect("report metadata serializes") + "\n",
    )?;
    write_file(paths.transfer, transfer_csv(&transfer))?;
    Ok((report, transfer))
}

/// Clean and adversarial mean accuracy over SNR ≥ 0 dB per classifier.
pub fn summary_table(report: &EvalReport, transfer: &[TransferRate]) -> String {
    let mut s = format!("{:<20}{:>12}{:>12}{:>10}\n", "classifier", "clean>=0dB", "adv>=0dB", "transfer");
    for kind in report.classifiers() {
        let clean = report.mean_accuracy(kind, 0, i8::MAX, false).unwrap_or(0.0);
        let adv = report.mean_accuracy(kind, 0, i8::MAX, true).unwrap_or(0.0);
        let t = transfer.iter().find(|t| t.classifier == kind).map_or(0.0, TransferRate::rate);
        let _ = writeln!(s, "{:<20}{clean:>12.3}{adv:>12.3}{t:>10.3}", kind.display_name());
    }
    s
}

/// Everything `run-experiment` produced, kept in memory for callers that
/// want to inspect results without re-reading the files.
pub struct Experiment {
    pub layout: Layout,
    pub dataset: Dataset,
    pub classifiers: Vec<TrainedClassifier>,
    pub attack: BatchOutput,
    pub report: EvalReport,
    pub transfer: Vec<TransferRate>,
}

pub fn run_experiment(cfg: &RunConfig, log: &mut dyn Write) -> Result<Experiment> {
    let layout = Layout::new(cfg);
    create_dir(&cfg.out_dir)?;
    write_file(&layout.resolved_config, cfg.render())?;

    let started = Instant::now();
    let dataset = match &cfg.dataset {
        Some(p) => modadv::signal::read_iqd(p)?,
        None => synthesize(cfg.frames_per_cell, cfg.seed, &layout.dataset)?,
    };
    let _ = writeln!(log, "dataset: {} frames ({:.1}s)", dataset.len(), started.elapsed().as_secs_f64());

    let classifiers = train_classifiers(&dataset, &ClassifierKind::ALL, &cfg.classifiers, &layout.models_dir, log)?;
    let mlp = classifiers[0].as_mlp().expect("the first kind is the MLP");

    let t = Instant::now();
    let attack = run_attack(mlp, &dataset, &cfg.attack, &layout.adversarial, &layout.metadata, &layout.attack_config)?;
    let _ = writeln!(
        log,
        "attack {}: {} frames, success rate {:.3}, mean L2 {:.4} ({:.1}s)",
        cfg.attack.name(),
        attack.metadata.len(),
        attack.success_rate(),
        attack.mean_l2(),
        t.elapsed().as_secs_f64()
    );
    for (i, e) in attack.errors() {
        let _ = writeln!(log, "frame {i}: attack failed: {e}");
    }

    let model_files: Vec<PathBuf> = ClassifierKind::ALL.iter().map(|&k| model_path(&layout.models_dir, k)).collect();
    let t = Instant::now();
    let (report, transfer) = run_eval(
        &classifiers,
        &model_files,
        &dataset,
        &attack.adversarial,
        &attack.metadata,
        sha256_file(&layout.attack_config)?,
        EvalPaths {
            csv: &layout.report_csv,
            svg: &layout.report_svg,
            meta: &layout.report_meta,
            transfer: &layout.transfer_csv,
        },
    )?;
    let _ = writeln!(log, "eval ({:.1}s)\n{}", t.elapsed().as_secs_f64(), summary_table(&report, &transfer));
    let _ = writeln!(log, "total {:.1}s", started.elapsed().as_secs_f64());

    Ok(Experiment {
        layout,
        dataset,
        classifiers,
        attack,
        report,
        transfer,
    })
}
