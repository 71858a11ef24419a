//! `stressrep` command line.
//!
//! ```text
//! stressrep [--config run.toml] [--seed N] <command>
//!   corpus synth      --out DIR [--speakers 20] [--utts 10]
//!   features extract  --manifest CSV --out FEATURES.csv
//!   pretrain          --manifest CSV --out DIR [--steps N] [--batch-size N]
//!                     [--alpha-ss A] [--alpha-sup A] [--tau T] [--resume CKPT]
//!   embed             --checkpoint CKPT --manifest CSV --out EMB.bin
//!   eval              --features FILE --manifest CSV --out REPORT.json [--name NAME]
//!   report            REPORT.json... [--out TABLE.csv]
//! ```
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data error,
//! 3 numeric failure. `STRESSREP_THREADS` caps the worker pool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{write_atomic, RunConfig};
use crate::data;
use crate::eval::{compare_reports, evaluate, EvalError, EvalReport, Manifest, Standardization};
use crate::features::FeatureTable;
use crate::nn::NnError;
use crate::synth::{gen_corpus_with, SynthConfig, SynthError};
use crate::train::{embed_manifest, prepare_corpus, pretrain, EmbeddingMatrix, TrainError};

pub const THREADS_ENV: &str = "STRESSREP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stressrep", version, about = "Hybrid self-supervised speech representations for task-load detection")]
pub struct Cli {
    /// Run configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic corpus generation.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Handcrafted feature extraction.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Hybrid pretraining.
    Pretrain(PretrainArgs),
    /// Frozen-encoder embeddings.
    Embed(EmbedArgs),
    /// Downstream evaluation of a feature or embedding file.
    Eval(EvalArgs),
    /// Compare evaluation reports.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum FeaturesCmd {
    Extract(ExtractArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub speakers: usize,
    #[arg(long, default_value_t = 10)]
    pub utts: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha_ss: Option<f64>,
    #[arg(long)]
    pub alpha_sup: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Feature CSV or embedding file.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Label used in the report (default: file stem).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_parser = ["per-partition", "train-fit"])]
    pub standardization: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } | TrainError::Nn(NnError::NonFiniteGradient(_)) => CliError::Numeric(e.to_string()),
            TrainError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Invalid(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
        cfg.eval.seed = s;
    }
    Ok(cfg)
}

fn manifest_path(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| cfg.paths.manifest.clone())
        .ok_or_else(|| CliError::Usage("a manifest is required (--manifest or paths.manifest)".into()))
}

fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let m = Manifest::load(path)?;
    m.validate(true)?;
    Ok(m)
}

/// `<file>.config.toml` next to a file output.
fn echo_config_for_file(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let mut p = out.as_os_str().to_owned();
    p.push(".config.toml");
    let p = PathBuf::from(p);
    write_atomic(&p, cfg.to_toml().as_bytes()).map_err(io_err(&p))
}

fn finalize(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(CliError::Usage)
}

fn cmd_corpus_synth(cli: &Cli, a: &SynthArgs) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let seed = cli.seed.unwrap_or(cfg.train.seed);
    let m = gen_corpus_with(a.speakers, a.utts, &a.out, seed, &SynthConfig::default())?;
    let mut cfg = cfg;
    cfg.paths.manifest = Some(a.out.join("manifest.csv"));
    write_atomic(&a.out.join("resolved_config.toml"), cfg.to_toml().as_bytes()).map_err(io_err(&a.out))?;
    println!("wrote {} utterances to {}", m.len(), a.out.display());
    Ok(())
}

fn cmd_features(cli: &Cli, a: &ExtractArgs) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let mpath = manifest_path(&a.manifest, &cfg)?;
    let m = load_manifest(&mpath)?;
    let table = data::extract_feature_table(&m, &cfg.features.lld_config()).map_err(|e| CliError::Data(e.to_string()))?;
    table.save(&a.out).map_err(|e| CliError::Data(e.to_string()))?;
    echo_config_for_file(&a.out, &cfg)?;
    println!("wrote {} x {} features to {}", table.len(), table.dim(), a.out.display());
    Ok(())
}

fn cmd_pretrain(cli: &Cli, a: &PretrainArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(cli)?;
    if let Some(v) = a.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.alpha_ss {
        cfg.train.alpha_ss = v;
    }
    if let Some(v) = a.alpha_sup {
        cfg.train.alpha_sup = v;
    }
    if let Some(v) = a.tau {
        cfg.train.tau = v;
    }
    finalize(&cfg)?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.paths.out.clone())
        .ok_or_else(|| CliError::Usage("an output directory is required (--out or paths.out)".into()))?;
    let mpath = manifest_path(&a.manifest, &cfg)?;
    let m = load_manifest(&mpath)?;
    let corpus = prepare_corpus(&m, &cfg.frontend, &cfg.features.lld_config())?;
    let res = pretrain(&corpus, &cfg, &out, a.resume.as_deref())?;
    write_atomic(&out.join("resolved_config.toml"), cfg.to_toml().as_bytes()).map_err(io_err(&out))?;
    let last = res.log.rows.last().map(|r| r.l_hybrid).unwrap_or(f64::NAN);
    println!(
        "trained {} steps; final l_hybrid {last:.4}; checkpoint {}",
        res.trainer.step,
        res.checkpoint.display()
    );
    Ok(())
}

fn cmd_embed(cli: &Cli, a: &EmbedArgs) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let mpath = manifest_path(&a.manifest, &cfg)?;
    let m = load_manifest(&mpath)?;
    let e = embed_manifest(&a.checkpoint, &m, &cfg.frontend)?;
    e.save(&a.out)?;
    echo_config_for_file(&a.out, &cfg)?;
    println!("wrote {} x {} embeddings to {}", e.rows.len(), e.dim, a.out.display());
    Ok(())
}

/// Feature CSV or embedding file, detected by content.
pub fn load_features(path: &Path) -> Result<FeatureTable, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"STRESSREP-EMB") {
        Ok(EmbeddingMatrix::read(&bytes)?.to_feature_table())
    } else {
        FeatureTable::read_csv(bytes.as_slice()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(cli)?;
    if let Some(s) = &a.standardization {
        cfg.eval.standardization = if s == "train-fit" {
            Standardization::TrainFit
        } else {
            Standardization::PerPartition
        };
    }
    finalize(&cfg)?;
    let mpath = manifest_path(&a.manifest, &cfg)?;
    let m = Manifest::load(&mpath)?;
    m.validate(false)?;
    let table = load_features(&a.features)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.features
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "features".into())
    });
    let report = evaluate(&table, &m, &cfg.eval, &name)?;
    write_atomic(&a.out, report.to_json().as_bytes()).map_err(io_err(&a.out))?;
    echo_config_for_file(&a.out, &cfg)?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            EvalReport::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (text, csv) = compare_reports(&reports);
    if let Some(out) = &a.out {
        write_atomic(out, csv.as_bytes()).map_err(io_err(out))?;
    }
    print!("{text}");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Corpus(CorpusCmd::Synth(a)) => cmd_corpus_synth(cli, a),
        Command::Features(FeaturesCmd::Extract(a)) => cmd_features(cli, a),
        Command::Pretrain(a) => cmd_pretrain(cli, a),
        Command::Embed(a) => cmd_embed(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Worker count from `STRESSREP_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Parse `args` and run the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = thread_cap().and_then(|cap| {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cap {
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| CliError::Usage(e.to_string()))?;
        pool.install(|| dispatch(&cli))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
