use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sts_core::netsim::{monte_carlo, SimConfig};
use sts_core::phy::{link_csv, run_sts_link, run_uplink_impact, LinkConfig, UplinkConfig};
use sts_core::{DecodeStatus, FieldSpec, Icrm, IcrmProfile, ObservedTones, StsCode};

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(anyhow!(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "sts", version, about = "Single-tone signaling codec and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Encode a message into the tone indices of an STS codeword.
    Encode(EncodeArgs),
    /// Decode observed tones read from a JSON file.
    Decode(DecodeArgs),
    /// Pack or unpack an interference-coordination request message.
    Icrm(IcrmArgs),
    /// Run an experiment suite and write CSV/JSON artifacts.
    Experiment(ExperimentArgs),
    /// Re-run the experiment recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
struct CodeArgs {
    /// Prime field modulus.
    #[arg(long)]
    field: u64,
    /// Codeword length (OFDM symbols).
    #[arg(long)]
    n: usize,
    /// Message symbols.
    #[arg(long)]
    k: usize,
    /// Code generator; defaults to the smallest element of adequate order.
    #[arg(long)]
    beta: Option<u64>,
}

impl CodeArgs {
    fn code(&self) -> Result<StsCode> {
        let field = FieldSpec::new(self.field).map_err(|e| anyhow!("--field: {e}"))?;
        let code = match self.beta {
            Some(b) => {
                let beta = field.element(b).map_err(|e| anyhow!("--beta: {e}"))?;
                StsCode::with_beta(field, self.n, self.k, beta)
            }
            None => StsCode::new(field, self.n, self.k),
        };
        code.map_err(|e| anyhow!("{e}"))
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[command(flatten)]
    code: CodeArgs,
    /// Integer message.
    #[arg(long, conflicts_with = "symbols", required_unless_present = "symbols")]
    message: Option<u64>,
    /// Raw message symbols, comma separated.
    #[arg(long, value_delimiter = ',')]
    symbols: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[command(flatten)]
    code: CodeArgs,
    /// JSON array: one tone (or null) per symbol, or one tone list per symbol.
    #[arg(long)]
    observations: PathBuf,
    /// Recover every superposed codeword.
    #[arg(long)]
    multi: bool,
    /// Minimum matched symbols for a multi-signal candidate.
    #[arg(long, requires = "multi")]
    theta: Option<usize>,
    /// Largest subcarrier offset searched.
    #[arg(long, default_value_t = 0)]
    offset_window: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileName {
    Canonical,
    Wide,
}

impl ProfileName {
    fn profile(self) -> IcrmProfile {
        match self {
            ProfileName::Canonical => IcrmProfile::CANONICAL,
            ProfileName::Wide => IcrmProfile::WIDE,
        }
    }
}

#[derive(Args, Debug)]
struct IcrmArgs {
    #[arg(long, value_enum, default_value = "canonical")]
    profile: ProfileName,
    /// Packed integer to unpack.
    #[arg(long, conflicts_with_all = ["resource", "priority", "hash"])]
    message: Option<u64>,
    #[arg(long, requires_all = ["priority", "hash"])]
    resource: Option<u8>,
    #[arg(long)]
    priority: Option<u8>,
    #[arg(long)]
    hash: Option<u16>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Experiment {
    StsLink,
    DataImpact,
    Network,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: Experiment,
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct RerunArgs {
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: Vec<String>,
    experiment: Experiment,
    config: Value,
    seed: u64,
    code_version: String,
    outputs: Vec<String>,
    threads: Option<usize>,
    started_unix_s: u64,
    wall_clock_s: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Encode(a) => encode(a),
        Cmd::Decode(a) => decode(a),
        Cmd::Icrm(a) => icrm(a),
        Cmd::Experiment(a) => {
            let config = match &a.config {
                Some(p) => read_json::<Value>(p)?,
                None => json!({}),
            };
            experiment(a.name, config, a.seed, &a.out, a.threads)
        }
        Cmd::Rerun(a) => {
            let m: RunManifest = read_json(&a.manifest)?;
            experiment(m.experiment, m.config, m.seed, &a.out, a.threads)
        }
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Deserializes with the failing field path in the message.
fn parse_config<T: DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("at `{path}`: {}", e.into_inner())
    })
}

fn encode(a: EncodeArgs) -> Result<ExitCode> {
    let code = a.code.code()?;
    let (message, u) = match (a.message, a.symbols) {
        (Some(m), _) => (Some(m), code.message_to_symbols(m)),
        (None, Some(s)) => {
            let u = code.symbols(&s);
            (u.as_ref().ok().and_then(|u| code.symbols_to_message(u).ok()), u)
        }
        (None, None) => return usage("one of --message or --symbols is required"),
    };
    let u = u.map_err(|e| anyhow!("{e}"))?;
    print_json(&json!({
        "field": code.field().modulus(),
        "n": code.n(),
        "k": code.k(),
        "beta": code.beta().value(),
        "message": message,
        "symbols": u,
        "codeword": code.encode(&u),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn decode(a: DecodeArgs) -> Result<ExitCode> {
    let code = a.code.code()?;
    let obs: ObservedTones = read_json(&a.observations)?;
    let empty = match &obs {
        ObservedTones::Single(v) => v.iter().all(Option::is_none),
        ObservedTones::Sets(v) => v.iter().all(Vec::is_empty),
    };
    let result = if empty {
        None
    } else if a.multi {
        let sets: Vec<Vec<u64>> = match obs {
            ObservedTones::Single(v) => v.into_iter().map(|x| x.into_iter().collect()).collect(),
            ObservedTones::Sets(v) => v,
        };
        let theta = a.theta.unwrap_or(code.default_threshold());
        Some(code.decode_multi(&sets, theta, a.offset_window))
    } else {
        let single: Vec<Option<u64>> = match obs {
            ObservedTones::Single(v) => v,
            ObservedTones::Sets(v) => {
                if v.iter().any(|s| s.len() > 1) {
                    return usage("several tones in one symbol; use --multi");
                }
                v.into_iter().map(|s| s.first().copied()).collect()
            }
        };
        Some(code.decode_single(&single, a.offset_window))
    };
    let report = match result {
        None => json!({ "status": "erasure", "entries": [] }),
        Some(r) => {
            let r = r.map_err(|e| anyhow!("{e}"))?;
            let entries: Vec<Value> = r
                .entries
                .iter()
                .map(|e| {
                    json!({
                        "message": code.symbols_to_message(&e.symbols).ok(),
                        "symbols": e.symbols,
                        "score": e.score,
                        "offset": e.offset,
                    })
                })
                .collect();
            json!({ "status": r.status, "entries": entries })
        }
    };
    let erased = report["status"] == json!(DecodeStatus::Erasure);
    print_json(&report)?;
    Ok(if erased { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn icrm(a: IcrmArgs) -> Result<ExitCode> {
    let profile = a.profile.profile();
    let icrm = match (a.message, a.resource, a.priority, a.hash) {
        (Some(m), ..) => Icrm::unpack(m, &profile).map_err(|e| anyhow!("{e}"))?,
        (None, Some(resource_id), Some(priority), Some(hashed_bs_id)) => Icrm {
            resource_id,
            priority,
            hashed_bs_id,
        },
        _ => return usage("give --message, or all of --resource, --priority and --hash"),
    };
    let packed = icrm.pack(&profile).map_err(|e| anyhow!("{e}"))?;
    print_json(&json!({ "message": packed, "fields": icrm }))?;
    Ok(ExitCode::SUCCESS)
}

fn artifacts(exp: Experiment) -> &'static [&'static str] {
    match exp {
        Experiment::StsLink => &["sts_link.csv"],
        Experiment::DataImpact => &["data_impact.csv", "data_impact_penalty.csv"],
        Experiment::Network => &["rates.csv", "percentiles.csv", "summary.json"],
    }
}

fn experiment(exp: Experiment, config: Value, seed: u64, out: &Path, threads: Option<usize>) -> Result<ExitCode> {
    // resolve defaults up front so the manifest records the full config
    let resolved = match exp {
        Experiment::StsLink => resolve::<LinkConfig>(&config)?,
        Experiment::DataImpact => resolve::<UplinkConfig>(&config)?,
        Experiment::Network => resolve::<SimConfig>(&config)?,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut manifest = RunManifest {
        command: std::env::args().collect(),
        experiment: exp,
        config: resolved.clone(),
        seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: artifacts(exp).iter().map(|s| s.to_string()).collect(),
        threads,
        started_unix_s: started,
        wall_clock_s: None,
    };
    let manifest_path = out.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return usage("--threads must be positive");
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;
    let t0 = Instant::now();
    let files = pool.install(|| run_experiment(exp, &resolved, seed))?;
    for (name, body) in files {
        fs::write(out.join(name), body).with_context(|| format!("writing {name}"))?;
    }
    manifest.wall_clock_s = Some(t0.elapsed().as_secs_f64());
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExitCode::SUCCESS)
}

fn resolve<T: DeserializeOwned + Serialize>(config: &Value) -> Result<Value> {
    let cfg: T = parse_config(&config.to_string()).map_err(|e| anyhow!("config {e}"))?;
    Ok(serde_json::to_value(cfg)?)
}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("config: {e}")
}

fn run_experiment(exp: Experiment, config: &Value, seed: u64) -> Result<Vec<(&'static str, String)>> {
    match exp {
        Experiment::StsLink => {
            let cfg: LinkConfig = serde_json::from_value(config.clone())?;
            let points = run_sts_link(&cfg, seed).map_err(config_err)?;
            Ok(vec![("sts_link.csv", link_csv(&points, seed))])
        }
        Experiment::DataImpact => {
            let cfg: UplinkConfig = serde_json::from_value(config.clone())?;
            let curves = run_uplink_impact(&cfg, seed).map_err(config_err)?;
            Ok(vec![
                ("data_impact.csv", curves.curves_csv(seed)),
                ("data_impact_penalty.csv", curves.penalty_csv(seed)),
            ])
        }
        Experiment::Network => {
            let cfg: SimConfig = serde_json::from_value(config.clone())?;
            let mc = monte_carlo(&cfg, seed).map_err(config_err)?;
            let summary = json!({
                "seed": seed,
                "drops": cfg.drops,
                "mean_active_cells": mc.mean_active_cells,
                "schemes": mc.summaries,
            });
            Ok(vec![
                ("rates.csv", mc.rates_csv()),
                ("percentiles.csv", mc.percentiles_csv()),
                ("summary.json", serde_json::to_string_pretty(&summary)?),
            ])
        }
    }
}
