//! The `veil` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::attacks::{attribute_inference, membership_inference, reconstruction_attack, structural_check, AttackReport};
use crate::data::{Dataset, Targets};
use crate::diagnostics::{reports_to_csv, DiagnosticsReport};
use crate::downstream::{DownstreamModel, LinearRegression, LogisticRegression};
use crate::error::{Result, VeilError};
use crate::io::{ingest_csv, CsvSchema, CsvTable, LatentBatchFile, RunConfig, Task};
use crate::numeric::Matrix;
use crate::scrae::{encode_batch, load_model, save_model, train, EncoderModel};
use crate::service::{serve_local, spawn_inference, AuditLog, InferenceService, SourceService};

/// Exit code for usage and configuration problems.
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "veil", version, about = "Train non-invertible supervised encoders and test what their latents leak")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Run configuration (JSON, unknown keys rejected).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model artifact (or downstream model for `serve inference`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder and fit the downstream model on its latents.
    Train(Common),
    /// Encode raw rows into a latent batch file.
    Encode(Common),
    /// Latent-geometry diagnostics of a trained model on labelled data.
    Diagnose(Common),
    /// Run an attack; the exit code is 0 (no leak), 2 (leak) or 3 (inconclusive).
    Attack {
        #[command(subcommand)]
        kind: AttackCommand,
    },
    /// Run one side of the split deployment.
    Serve {
        #[command(subcommand)]
        side: ServeCommand,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct LatentSource {
    /// Attack a latent batch file instead of encoding `--data` with `--model`.
    #[arg(long)]
    pub latents: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: LatentSource,
    },
    Attribute {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: LatentSource,
        /// Feature column holding the sensitive attribute (integer codes).
        #[arg(long)]
        attribute: String,
    },
    Membership(Common),
    Structural(Common),
}

#[derive(Debug, Subcommand)]
pub enum ServeCommand {
    /// Untrusted side: answers latent prediction requests.
    Inference {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        listen: Option<String>,
        /// Append every received latent to this file.
        #[arg(long)]
        latent_store: Option<PathBuf>,
    },
    /// Trusted side: encodes local records and forwards latents only.
    Source {
        #[command(flatten)]
        common: Common,
        /// Inference service address.
        #[arg(long)]
        inference: Option<String>,
        /// Local address for raw JSON-line requests.
        #[arg(long)]
        local: Option<String>,
        /// NDJSON audit log.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| VeilError::Config(vec![format!("--{flag} is required")]))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// The configuration for a command: `--config` first, then the one embedded
/// in the model artifact.
fn run_config(common: &Common, model: Option<&EncoderModel>) -> Result<Option<RunConfig>> {
    let cfg = match (&common.config, model.and_then(|m| m.meta.run_config.clone())) {
        (Some(p), _) => Some(RunConfig::load(p)?),
        (None, Some(v)) => Some(serde_json::from_value(v).map_err(|e| VeilError::Config(vec![format!("embedded config: {e}")]))?),
        (None, None) => None,
    };
    Ok(cfg.map(|c| c.resolve(common.seed)))
}

fn schema(cfg: &Option<RunConfig>) -> CsvSchema {
    cfg.as_ref().map(RunConfig::schema).unwrap_or(CsvSchema {
        target: None,
        task: Task::Regression,
    })
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn latents_of(model: &EncoderModel, x: &Matrix) -> Result<Matrix> {
    Ok(encode_batch(model, x)?.to_matrix())
}

fn check_dim(model: &EncoderModel, table: &CsvTable) -> Result<()> {
    if table.x.cols() != model.input_dim() {
        return Err(crate::error::dim_err("data columns vs model input", model.input_dim(), table.x.cols()));
    }
    Ok(())
}

pub fn cmd_train(c: &Common) -> Result<i32> {
    let cfg = RunConfig::load(need(&c.config, "config")?)?.resolve(c.seed);
    let out = need(&c.out, "out")?;
    if cfg.data.target.is_none() {
        return Err(VeilError::Config(vec!["data.target is required for training".into()]));
    }
    let ds = ingest_csv(need(&c.data, "data")?, &cfg.schema())?.into_dataset()?;
    let n_classes = match &ds.targets {
        Targets::Labels { n_classes, .. } => *n_classes,
        Targets::Values(_) => 0,
    };
    let spec = cfg.encoder_spec(ds.dim(), n_classes);
    cfg.validate(Some(&spec))?;
    let split_seed = cfg.data.split_seed.expect("filled by resolve");
    let (tr, va) = ds.split(1.0 - cfg.data.validation_fraction, split_seed)?;
    log::info!("training on {} rows, validating on {}", tr.len(), va.len());
    let (mut model, tlog) = train(&tr, Some(&va), &spec, &cfg.train)?;
    for w in &tlog.warnings {
        log::warn!("{w}");
    }
    model.meta.run_config = Some(cfg.to_value());
    save_model(&model, out)?;
    std::fs::write(with_suffix(out, ".training.csv"), tlog.to_csv())?;

    let (ztr, zva) = (latents_of(&model, &tr.x)?, latents_of(&model, &va.x)?);
    let (downstream, metric) = fit_downstream(&cfg, &tr, &va, &ztr, &zva, n_classes)?;
    downstream.save(&with_suffix(out, ".downstream.json"))?;
    let summary = serde_json::json!({
        "model": out,
        "rows": {"train": tr.len(), "validation": va.len()},
        "head_validation_metric": tlog.epochs.last().and_then(|e| e.validation_metric),
        "downstream_validation_metric": metric,
        "sigma": tlog.sigma,
        "warnings": tlog.warnings,
        "config": cfg.to_value(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}

fn fit_downstream(cfg: &RunConfig, tr: &Dataset, va: &Dataset, ztr: &Matrix, zva: &Matrix, n_classes: usize) -> Result<(DownstreamModel, f64)> {
    Ok(match (&tr.targets, &va.targets) {
        (Targets::Labels { labels, .. }, Targets::Labels { labels: vl, .. }) => {
            let m = LogisticRegression::fit(ztr, labels, n_classes, &cfg.downstream.logistic)?;
            let acc = m.accuracy(zva, vl)?;
            (DownstreamModel::Logistic(m), acc)
        }
        (Targets::Values(y), Targets::Values(vy)) => {
            let m = LinearRegression::fit(ztr, y, cfg.downstream.ridge)?;
            let r2 = m.r2(zva, vy)?;
            (DownstreamModel::Linear(m), r2)
        }
        _ => unreachable!("both splits share one target type"),
    })
}

pub fn cmd_encode(c: &Common) -> Result<i32> {
    let model = load_model(need(&c.model, "model")?)?;
    let cfg = run_config(c, Some(&model))?;
    let table = ingest_csv(need(&c.data, "data")?, &schema(&cfg))?;
    check_dim(&model, &table)?;
    let latents = encode_batch(&model, &table.x)?;
    let targets = table.targets.as_ref().and_then(|t| match t {
        Targets::Labels { labels, .. } => Some(labels.iter().map(|&l| l as f64).collect()),
        Targets::Values(y) if y.cols() == 1 => Some(y.data().to_vec()),
        Targets::Values(_) => None,
    });
    let file = LatentBatchFile::new(latents, targets)?;
    let out = need(&c.out, "out")?;
    file.write(out)?;
    log::info!("wrote {} latents of dim {} to {}", file.latents.rows, file.latents.dim, out.display());
    Ok(0)
}

pub fn cmd_diagnose(c: &Common) -> Result<i32> {
    let model = load_model(need(&c.model, "model")?)?;
    let cfg = run_config(c, Some(&model))?;
    let table = ingest_csv(need(&c.data, "data")?, &schema(&cfg))?;
    check_dim(&model, &table)?;
    let ds = table.into_dataset()?;
    let fp = model.forward(&ds.x)?;
    let seed = cfg.as_ref().map_or(0, |c| c.train.seed);
    let report = DiagnosticsReport::compute(model.meta.epochs, &fp.psi, &ds.targets.as_matrix(), &fp.y_hat, seed)?;
    let json = report.to_json()?;
    match &c.out {
        Some(p) => {
            std::fs::write(p, &json)?;
            std::fs::write(with_suffix(p, ".csv"), reports_to_csv(std::slice::from_ref(&report)))?;
        }
        None => println!("{json}"),
    }
    Ok(0)
}

/// Latents under attack plus the raw table they came from.
fn attack_inputs(common: &Common, source: &LatentSource) -> Result<(Matrix, CsvTable, Option<RunConfig>)> {
    let data = need(&common.data, "data")?;
    match (&source.latents, &common.model) {
        (Some(lp), _) => {
            let cfg = match &common.config {
                Some(p) => Some(RunConfig::load(p)?.resolve(common.seed)),
                None => None,
            };
            let table = ingest_csv(data, &schema(&cfg))?;
            let file = LatentBatchFile::read(lp)?;
            if file.latents.rows != table.x.rows() {
                return Err(crate::error::dim_err("latent rows vs data rows", table.x.rows(), file.latents.rows));
            }
            Ok((file.latents.to_matrix(), table, cfg))
        }
        (None, Some(mp)) => {
            let model = load_model(mp)?;
            let cfg = run_config(common, Some(&model))?;
            let table = ingest_csv(data, &schema(&cfg))?;
            check_dim(&model, &table)?;
            Ok((latents_of(&model, &table.x)?, table, cfg))
        }
        (None, None) => Err(VeilError::Config(vec!["one of --model or --latents is required".into()])),
    }
}

fn settings(cfg: &Option<RunConfig>, seed: Option<u64>) -> crate::io::AttackSettings {
    let mut s = cfg.as_ref().map(|c| c.attacks.clone()).unwrap_or_default();
    if let Some(seed) = seed {
        s.reconstruction.seed = seed;
        s.attribute.seed = seed;
        s.membership.seed = seed;
    }
    s
}

fn finish(report: &AttackReport, out: Option<&Path>) -> Result<i32> {
    write_or_print(out, &report.to_json()?)?;
    eprintln!(
        "{:?} {}: advantage {:+.4}, p = {:.4}, verdict {:?}",
        report.attack, report.variant, report.advantage, report.p_value, report.verdict
    );
    Ok(report.verdict.exit_code())
}

pub fn cmd_attack(kind: &AttackCommand) -> Result<i32> {
    match kind {
        AttackCommand::Reconstruct { common, source } => {
            let (z, table, cfg) = attack_inputs(common, source)?;
            let s = settings(&cfg, common.seed);
            let r = reconstruction_attack(&z, &table.x, &table.kinds, &s.reconstruction)?;
            finish(&r, common.out.as_deref())
        }
        AttackCommand::Attribute { common, source, attribute } => {
            let (z, table, cfg) = attack_inputs(common, source)?;
            let s = settings(&cfg, common.seed);
            let values = table.column(attribute)?;
            let mut codes = Vec::with_capacity(values.len());
            for (i, v) in values.iter().enumerate() {
                if *v < 0.0 || v.fract() != 0.0 {
                    return Err(VeilError::Csv {
                        row: i + 1,
                        column: attribute.clone(),
                        message: format!("attribute value {v} is not a non-negative integer code"),
                    });
                }
                codes.push(*v as usize);
            }
            let r = attribute_inference(&z, &codes, &s.attribute)?;
            finish(&r, common.out.as_deref())
        }
        AttackCommand::Membership(common) => {
            let model = load_model(need(&common.model, "model")?)?;
            let cfg = run_config(common, Some(&model))?;
            let table = ingest_csv(need(&common.data, "data")?, &schema(&cfg))?;
            check_dim(&model, &table)?;
            let s = settings(&cfg, common.seed);
            let r = membership_inference(&table.into_dataset()?, &model, &s.membership)?;
            finish(&r, common.out.as_deref())
        }
        AttackCommand::Structural(common) => {
            let bytes = std::fs::read(need(&common.model, "model")?)?;
            let header = crate::scrae::read_header(&bytes)?;
            let cfg = match (&common.config, header.meta.run_config) {
                (Some(p), _) => Some(RunConfig::load(p)?),
                (None, Some(v)) => serde_json::from_value(v).ok(),
                (None, None) => None,
            };
            let table = ingest_csv(need(&common.data, "data")?, &schema(&cfg))?;
            let report = structural_check(&bytes, &table.x)?;
            write_or_print(common.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            let passed = report.passed();
            eprintln!("structural checks {}", if passed { "passed" } else { "FAILED" });
            Ok(if passed { 0 } else { 2 })
        }
    }
}

pub fn cmd_serve(side: &ServeCommand) -> Result<i32> {
    match side {
        ServeCommand::Inference {
            common,
            listen,
            latent_store,
        } => {
            let cfg = match &common.config {
                Some(p) => Some(RunConfig::load(p)?),
                None => None,
            };
            let serve = cfg.map(|c| c.serve).unwrap_or_default();
            let model = DownstreamModel::load(need(&common.model, "model")?)?;
            let mut svc = InferenceService::new(model);
            if let Some(p) = latent_store.as_ref().or(serve.latent_store.as_ref()) {
                svc = svc.with_latent_store(p)?;
            }
            let addr = listen.clone().unwrap_or(serve.listen);
            let handle = spawn_inference(Arc::new(svc), addr.as_str())?;
            eprintln!("inference service listening on {}", handle.addr());
            handle.wait();
            Ok(0)
        }
        ServeCommand::Source {
            common,
            inference,
            local,
            audit,
        } => {
            let model = load_model(need(&common.model, "model")?)?;
            let cfg = run_config(common, Some(&model))?;
            let serve = cfg.map(|c| c.serve).unwrap_or_default();
            let audit_path = audit.clone().or(serve.audit_log);
            let log = Arc::new(match &audit_path {
                Some(p) => AuditLog::to_file(p)?,
                None => AuditLog::in_memory(),
            });
            let target = inference.clone().unwrap_or(serve.inference);
            let source = SourceService::connect(Arc::new(model), target.as_str(), log)?;
            let (addr, h) = serve_local(source, local.clone().unwrap_or(serve.local).as_str())?;
            eprintln!("source service accepting records on {addr}, forwarding latents to {target}");
            let _ = h.join();
            Ok(0)
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Encode(c) => cmd_encode(c),
        Command::Diagnose(c) => cmd_diagnose(c),
        Command::Attack { kind } => cmd_attack(kind),
        Command::Serve { side } => cmd_serve(side),
    }
}

/// Parses `args` and runs the command, mapping failures to exit codes.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e @ VeilError::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
