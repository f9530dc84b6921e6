//! The `sensorchain` command line.
//!
//! Exit codes: 0 success, 1 domain failure (invalid chain, divergent replicas,
//! failed training), 2 usage or I/O error.

use std::fs::File;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sensorchain_api::{ApiConfig, AppState};
use sensorchain_core::experiment::{read_records, run_experiment, sample_records, train_dnn, ExperimentError};
use sensorchain_core::ledger::{load_path, AuthoritySet, LedgerError};
use sensorchain_core::nn::{loss_mse, DEFAULT_HIDDEN};
use sensorchain_core::peer::{run_scenario, Scenario, ScenarioError};
use sensorchain_core::{ExperimentConfig, SavedModel, SensorRecord};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input, missing files, unreadable data.
    #[error("{0}")]
    Usage(String),
    /// The command ran but the answer is "no".
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

fn usage(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "sensorchain", version, about = "Battery-life prediction and a signed prediction ledger")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the network on a CSV and write a model file.
    Train(TrainArgs),
    /// Fit the network and both baselines on one split and compare them on the test rows.
    Evaluate(EvaluateArgs),
    /// Predict battery life for one reading.
    Predict(PredictArgs),
    /// Validate a chain file.
    ChainVerify(ChainVerifyArgs),
    /// Replay a peer-network script and report convergence.
    Scenario(ScenarioArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Seed for the split, initialization, shuffling and GBT row sampling.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HIDDEN)]
    pub hidden: Vec<usize>,
}

impl FitArgs {
    pub fn config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default().with_seed(self.seed);
        cfg.prepare.test_fraction = self.test_fraction;
        cfg.train.epochs = self.epochs;
        cfg.train.batch_size = self.batch_size;
        cfg.train.learning_rate = self.learning_rate;
        cfg.hidden = self.hidden.clone();
        cfg
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Sensor CSV. Omit to use the bundled sample.
    pub csv: Option<PathBuf>,
    #[arg(long, short, default_value = "model.bin")]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Sensor CSV. Omit to use the bundled sample.
    pub csv: Option<PathBuf>,
    /// Score this trained network instead of fitting a new one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "metrics.json")]
    pub metrics_out: PathBuf,
    /// Also write the fitted models here as dnn.bin, linear.bin and gbt.bin.
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// The reading as a JSON object, or `-` to read it from stdin.
    #[arg(long)]
    pub json: String,
}

#[derive(Debug, Args)]
pub struct ChainVerifyArgs {
    pub chain: PathBuf,
    /// Public authority key file. Defaults to authority.pub.json next to the chain.
    #[arg(long)]
    pub authority: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    pub script: PathBuf,
    /// Where to write the trace. Defaults to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "chain.jsonl")]
    pub chain_path: PathBuf,
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    #[arg(long, default_value = "metrics.json")]
    pub metrics_path: PathBuf,
    /// Bearer token for block creation. Without one the service is read-only.
    #[arg(long, env = "ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: Option<String>,
    /// Secret key file; generated on first run.
    #[arg(long, default_value = "authority.key.json")]
    pub authority_key: PathBuf,
    /// Number of in-process peers that must accept each block.
    #[arg(long, default_value_t = 3)]
    pub peers: usize,
    /// Allowed browser origin. Repeatable; none allows any origin.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::ChainVerify(a) => cmd_chain_verify(&a),
        Command::Scenario(a) => cmd_scenario(&a),
        Command::Serve(a) => cmd_serve(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_records(csv: Option<&Path>) -> Result<Vec<SensorRecord>, CliError> {
    match csv {
        None => Ok(sample_records()),
        Some(path) => {
            let file = File::open(path).map_err(|e| usage(path.display(), e))?;
            read_records(BufReader::new(file)).map_err(|e| usage(path.display(), e))
        }
    }
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Dataset(_) | ExperimentError::PreprocessorMismatch => CliError::Usage(e.to_string()),
        other => CliError::Domain(other.to_string()),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let records = load_records(args.csv.as_deref())?;
    let cfg = args.fit.config();
    let (data, model, history) = train_dnn(&records, &cfg).map_err(experiment_error)?;
    let final_loss = match history.last() {
        Some(&l) => l,
        None => match &model.model {
            sensorchain_core::Regressor::Dnn(p) => loss_mse(p, &data.train).map_err(|e| CliError::Domain(e.to_string()))?,
            _ => unreachable!("train_dnn returns a network"),
        },
    };
    model.save(&args.out).map_err(|e| usage(args.out.display(), e))?;
    println!("final training loss: {final_loss}");
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let records = load_records(args.csv.as_deref())?;
    let pretrained = match &args.model {
        Some(path) => Some(SavedModel::load(path).map_err(|e| usage(path.display(), e))?),
        None => None,
    };
    let cfg = args.fit.config();
    let exp = run_experiment(&records, &cfg, pretrained).map_err(experiment_error)?;
    let json = serde_json::to_string_pretty(&exp.metrics).expect("metrics serialize");
    std::fs::write(&args.metrics_out, json + "\n").map_err(|e| usage(args.metrics_out.display(), e))?;
    if let Some(dir) = &args.models_dir {
        std::fs::create_dir_all(dir).map_err(|e| usage(dir.display(), e))?;
        for (name, model) in [("dnn", &exp.dnn), ("linear", &exp.linear), ("gbt", &exp.gbt)] {
            let path = dir.join(format!("{name}.bin"));
            model.save(&path).map_err(|e| usage(path.display(), e))?;
        }
    }
    println!(
        "seed {}  train {}  test {}",
        exp.metrics.seed, exp.metrics.train_rows, exp.metrics.test_rows
    );
    print!("{}", exp.metrics.table().render_text());
    println!("wrote {}", args.metrics_out.display());
    Ok(())
}

/// The body accepted by `predict`, as for `POST /api/predict`: every key present,
/// numeric values may be null.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Reading {
    beach_name: String,
    #[serde(default)]
    measurement_timestamp: String,
    water_temperature: Option<f64>,
    turbidity: Option<f64>,
    transducer_depth: Option<f64>,
    wave_height: Option<f64>,
    wave_period: Option<f64>,
}

const READING_KEYS: [&str; 6] = [
    "beach_name",
    "water_temperature",
    "turbidity",
    "transducer_depth",
    "wave_height",
    "wave_period",
];

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let model = SavedModel::load(&args.model).map_err(|e| usage(args.model.display(), e))?;
    let text = if args.json == "-" {
        std::io::read_to_string(std::io::stdin()).map_err(|e| usage("stdin", e))?
    } else {
        args.json.clone()
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage("reading", e))?;
    let missing: Vec<&str> = READING_KEYS
        .into_iter()
        .filter(|k| value.get(k).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(usage("reading", format!("missing keys: {}", missing.join(", "))));
    }
    let r: Reading = serde_json::from_value(value).map_err(|e| usage("reading", e))?;
    let record = SensorRecord {
        beach_name: r.beach_name,
        measurement_timestamp: r.measurement_timestamp,
        water_temperature: r.water_temperature,
        turbidity: r.turbidity,
        transducer_depth: r.transducer_depth,
        wave_height: r.wave_height,
        wave_period: r.wave_period,
        battery_life: None,
    };
    println!("{}", model.predict_record(&record));
    Ok(())
}

pub fn default_authority_path(chain: &Path) -> PathBuf {
    chain.with_file_name("authority.pub.json")
}

pub fn cmd_chain_verify(args: &ChainVerifyArgs) -> Result<(), CliError> {
    let key_path = args.authority.clone().unwrap_or_else(|| default_authority_path(&args.chain));
    let authorities = AuthoritySet::load(&key_path).map_err(|e| usage(key_path.display(), e))?;
    if !args.chain.is_file() {
        return Err(usage(args.chain.display(), "no such file"));
    }
    match load_path(&args.chain, &authorities) {
        Ok(chain) => {
            println!("OK length={}", chain.len());
            Ok(())
        }
        Err(LedgerError::Io(e)) => Err(usage(args.chain.display(), e)),
        Err(LedgerError::CorruptChainFile { index, reason }) => {
            println!("TAMPERED index={index}");
            Err(CliError::Domain(format!("block {index}: {reason}")))
        }
        Err(e) => Err(CliError::Domain(e.to_string())),
    }
}

pub fn cmd_scenario(args: &ScenarioArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.script).map_err(|e| usage(args.script.display(), e))?;
    let scenario = Scenario::from_json(&text).map_err(|e| usage(args.script.display(), e))?;
    let trace = run_scenario(&scenario).map_err(|e: ScenarioError| usage(args.script.display(), e))?;
    let json = serde_json::to_string_pretty(&trace).expect("trace serializes") + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, json).map_err(|e| usage(path.display(), e))?,
        None => std::io::stdout().write_all(json.as_bytes()).map_err(|e| usage("stdout", e))?,
    }
    let last = trace.snapshots.last().expect("trace has an initial snapshot");
    let online: Vec<_> = last.nodes.iter().filter(|n| n.online).collect();
    eprintln!(
        "{} events, {} of {} nodes online, converged={}",
        trace.snapshots.len() - 1,
        online.len(),
        last.nodes.len(),
        trace.converged
    );
    if !trace.divergent_offline.is_empty() {
        eprintln!("offline and behind: {}", trace.divergent_offline.join(", "));
    }
    if trace.converged {
        Ok(())
    } else {
        Err(CliError::Domain("online replicas did not converge".into()))
    }
}

pub fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let cfg = ApiConfig {
        chain_path: args.chain_path.clone(),
        model_path: args.model_path.clone(),
        metrics_path: Some(args.metrics_path.clone()),
        authority_key: args.authority_key.clone(),
        admin_token: args.admin_token.clone(),
        peers: args.peers,
        cors_origins: args.cors_origins.clone(),
    };
    let state = Arc::new(AppState::open(&cfg).map_err(|e| usage("startup", e))?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| usage("runtime", e))?;
    runtime.block_on(async {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port)
            .parse()
            .map_err(|e| usage("address", e))?;
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| usage(addr, e))?;
        let local = listener.local_addr().map_err(|e| usage(addr, e))?;
        println!("listening on http://{local}");
        if let Some(t) = &state.startup_tamper {
            println!("chain invalid at block {}; serving read-only", t.index);
        }
        std::io::stdout().flush().ok();
        sensorchain_api::serve(listener, state, &cfg.cors_origins, shutdown_signal())
            .await
            .map_err(|e| usage("serve", e))
    })?;
    println!("shut down cleanly");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        tokio::signal::ctrl_c().await.ok();
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
