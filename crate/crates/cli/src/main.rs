use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modadv::attacks::{read_metadata_csv, AttackMethod, CwConfig, FgsmConfig};
use modadv::classical::{ClassifierKind, TrainedClassifier};
use modadv::eval::sha256_file;
use modadv::mlp::Surrogate;
use modadv::signal::read_iqd;
use modadv_cli::pipeline::{self, EvalPaths};
use modadv_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "modadv", version, about = "Adversarial examples against modulation classifiers")]
struct Cli {
    /// Worker threads; 1 keeps every step single-threaded.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labelled I/Q dataset.
    Synth(SynthArgs),
    /// Train one classifier or all nine.
    Train(TrainArgs),
    /// Craft adversarial examples for every test frame against the MLP.
    Attack(AttackArgs),
    /// Clean vs adversarial accuracy per classifier and SNR.
    Eval(EvalArgs),
    /// synth, train --all, attack and eval in one go, driven by a config file.
    RunExperiment(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    frames_per_cell: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// mlp, knn, svm, nb, lda, dt, rf, adaboost or gb.
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    model: Option<ClassifierKind>,
    #[arg(long)]
    all: bool,
    /// Output directory for `<name>.json` and `<name>.log`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Overrides the MLP epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Hyperparameter overrides in run-config syntax.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Cw,
    Fgsm,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurrogateArg {
    Softmax,
    Logits,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    data: PathBuf,
    /// MLP model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Adversarial dataset output.
    #[arg(long)]
    out: PathBuf,
    /// Metadata CSV output; the attack config goes next to it as `.config.json`.
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long)]
    no_clip: bool,
    #[arg(long, value_enum, default_value = "softmax")]
    surrogate: SurrogateArg,
    #[arg(long, default_value_t = 0.0)]
    confidence: f64,
    #[arg(long, default_value_t = 1e-2)]
    c_init: f64,
    #[arg(long, default_value_t = 6)]
    search_steps: usize,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    step_size: f64,
    #[arg(long)]
    no_abort_early: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Clean dataset the attack was run on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    adv: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Directory holding the nine model files.
    #[arg(long)]
    models: PathBuf,
    /// Output directory for report.csv, report.svg, report_meta.json, transfer.csv.
    #[arg(long)]
    out: PathBuf,
    /// Attack config to fingerprint; defaults to the file next to --meta.
    #[arg(long)]
    attack_config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn attack_config_path(meta: &Path) -> PathBuf {
    meta.with_extension("config.json")
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.frames_per_cell == 0 {
        return Err(CliError::Usage("--frames-per-cell must be at least 1".into()));
    }
    let ds = pipeline::synthesize(args.frames_per_cell, args.seed, &args.out)?;
    print!("{}", pipeline::strata_table(&ds));
    println!("wrote {}", args.out.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(args.seed),
    };
    if args.config.is_some() {
        let seeded = RunConfig::new(args.seed).classifiers;
        cfg.classifiers.mlp.seed = seeded.mlp.seed;
        cfg.classifiers.svm.seed = seeded.svm.seed;
        cfg.classifiers.forest.seed = seeded.forest.seed;
    }
    if let Some(e) = args.epochs {
        cfg.classifiers.mlp.epochs = e;
    }
    let kinds: Vec<ClassifierKind> = match args.model {
        Some(k) => vec![k],
        None => ClassifierKind::ALL.to_vec(),
    };
    let ds = read_iqd(&args.data)?;
    pipeline::train_classifiers(&ds, &kinds, &cfg.classifiers, &args.out, &mut std::io::stderr())?;
    Ok(())
}

fn attack(args: AttackArgs) -> Result<(), CliError> {
    let method = match args.method {
        Method::Fgsm => AttackMethod::Fgsm(FgsmConfig {
            epsilon: args.epsilon,
            clip_to_box: !args.no_clip,
        }),
        Method::Cw => AttackMethod::Cw(CwConfig {
            c_init: args.c_init,
            c_search_steps: args.search_steps,
            inner_iterations: args.iterations,
            step_size: args.step_size,
            surrogate: match args.surrogate {
                SurrogateArg::Softmax => Surrogate::Softmax,
                SurrogateArg::Logits => Surrogate::Logits,
            },
            confidence: args.confidence,
            abort_early: !args.no_abort_early,
            ..CwConfig::default()
        }),
    };
    method.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let model = TrainedClassifier::load(&args.model)?;
    let mlp = model.as_mlp().ok_or_else(|| {
        CliError::Usage(format!(
            "{} is a {} model; the white-box attack needs the MLP's gradients",
            args.model.display(),
            model.kind()
        ))
    })?;
    let ds = read_iqd(&args.data)?;
    let out = pipeline::run_attack(mlp, &ds, &method, &args.out, &args.meta, &attack_config_path(&args.meta))?;
    for (i, e) in out.errors() {
        eprintln!("frame {i}: attack failed: {e}");
    }
    println!(
        "attacked {} frames with {}: success rate {:.4}, mean L2 {:.6}",
        out.metadata.len(),
        method.name(),
        out.success_rate(),
        out.mean_l2()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let classifiers = pipeline::load_classifiers(&args.models, &ClassifierKind::ALL)?;
    let files: Vec<PathBuf> = ClassifierKind::ALL.iter().map(|&k| pipeline::model_path(&args.models, k)).collect();
    let clean = read_iqd(&args.data)?;
    let adv = read_iqd(&args.adv)?;
    let meta = read_metadata_csv(&args.meta)?;
    let config_path = args.attack_config.clone().unwrap_or_else(|| attack_config_path(&args.meta));
    let digest = if config_path.is_file() {
        sha256_file(&config_path)?
    } else if args.attack_config.is_some() {
        return Err(CliError::Runtime(format!("missing attack config {}", config_path.display())));
    } else {
        String::new()
    };
    let (csv, svg, meta_json, transfer) = (
        args.out.join("report.csv"),
        args.out.join("report.svg"),
        args.out.join("report_meta.json"),
        args.out.join("transfer.csv"),
    );
    let (report, rates) = pipeline::run_eval(
        &classifiers,
        &files,
        &clean,
        &adv,
        &meta,
        digest,
        EvalPaths {
            csv: &csv,
            svg: &svg,
            meta: &meta_json,
            transfer: &transfer,
        },
    )?;
    print!("{}", pipeline::summary_table(&report, &rates));
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}

fn run_experiment(args: RunArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    init_threads(cfg.threads)?;
    let exp = pipeline::run_experiment(&cfg, &mut std::io::stderr())?;
    println!("wrote {}", exp.layout.report_csv.display());
    Ok(())
}

fn init_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::RunExperiment(args) = cli.command {
        return run_experiment(args, cli.threads);
    }
    init_threads(cli.threads.unwrap_or(1))?;
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Attack(a) => attack(a),
        Command::Eval(a) => eval(a),
        Command::RunExperiment(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
