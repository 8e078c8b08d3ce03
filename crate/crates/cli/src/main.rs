//! `rhsim` — build a simulated ride-hailing ledger network, run scripted
//! scenarios and load benchmarks in virtual time, probe adversary
//! defenses, and dump or verify block stores.
//!
//! Exit codes: 0 success, 1 assertion or verdict failure, 2 usage or
//! configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use rhsim_core::config::NetworkConfig;
use rhsim_core::ledger::BlockStore;
use rhsim_core::scenario::{run_scenario_with_world, ScenarioScript};
use rhsim_core::txflow::EndorsedTx;
use rhsim_core::workload::{
    run_adversary, run_bench, sweep, trend_csv, AdversaryScenario, BenchOptions, SweepAxis,
    SweepOptions, TrafficProfile,
};

#[derive(Parser)]
#[command(name = "rhsim", version, about = "Deterministic ride-hailing ledger network simulator")]
struct Cli {
    /// Network topology/config file (JSON). Defaults to a built-in
    /// two-organization, two-peers-each network.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed. Required here or in the config file; there is no
    /// wall-clock fallback.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for generated files.
    #[arg(long, global = true, default_value = "rhsim-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scripted scenario and report its ledger assertions.
    Scenario {
        /// Scenario script (JSON).
        script: PathBuf,
    },
    /// Drive full ride lifecycles through the network and write
    /// metrics.csv plus summary.json.
    Bench(BenchArgs),
    /// Benchmark a series of network shapes and write per-point reports
    /// plus a combined trend.csv.
    Sweep(SweepArgs),
    /// Run an adversary scenario and report the verdict.
    Adversary {
        /// One of: eclipse, malicious-query, stale-endorser.
        #[arg(long)]
        scenario: String,
    },
    /// Run a scenario and print the resulting block store as JSON lines.
    Dump {
        /// Scenario script (JSON).
        script: PathBuf,
    },
    /// Verify the hash chain of a dumped block store.
    VerifyChain {
        /// Dump produced by `rhsim dump`.
        dump: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Traffic shape: `constant` or `poisson`.
    #[arg(long)]
    profile: String,
    /// Constant profile: delay between one submitter's transactions, ms.
    #[arg(long)]
    delay_ms: Option<f64>,
    /// Constant profile: uniform deviation fraction around the delay.
    #[arg(long, default_value_t = 0.3)]
    deviation: f64,
    /// Poisson profile: aggregate arrival rate, transactions per second.
    #[arg(long)]
    lambda_tps: Option<f64>,
    /// Poisson profile: mean inter-arrival time in ms (alternative unit).
    #[arg(long)]
    lambda_interarrival_ms: Option<f64>,
    /// Rides to run; each ride is six transactions.
    #[arg(long, default_value_t = 1000)]
    rides: usize,
    /// Submitter clients per organization.
    #[arg(long, default_value_t = 2)]
    submitters_per_org: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep axis: `peers` or `orgs`.
    #[arg(long)]
    axis: String,
    #[arg(long)]
    from: u32,
    #[arg(long)]
    to: u32,
    /// Endorsement policy for every point.
    #[arg(long, default_value = "ALL_ORG_PEERS")]
    policy: String,
    /// Orgs axis: scale offered traffic with the organization count.
    #[arg(long, default_value_t = false)]
    scale_traffic: bool,
    /// Rides per point (peers axis) or per organization (orgs axis with
    /// --scale-traffic).
    #[arg(long, default_value_t = 120)]
    rides: usize,
    #[arg(long, default_value_t = 300.0)]
    delay_ms: f64,
    #[arg(long, default_value_t = 0.3)]
    deviation: f64,
    #[arg(long, default_value_t = 2)]
    submitters_per_org: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<NetworkConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(NetworkConfig::from_json(&text)?)
        }
        None => Ok(NetworkConfig::two_orgs_two_peers()),
    }
}

fn load_script(path: &Path) -> Result<ScenarioScript> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    Ok(ScenarioScript::from_json(&text)?)
}

/// Write atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = load_config(&cli.config)?;
    let seed = config.seed_or(cli.seed)?;
    match cli.command {
        Command::Scenario { script } => {
            let script = load_script(&script)?;
            let (report, _) = run_scenario_with_world(&config, seed, &script)?;
            for line in &report.assertion_lines {
                println!("ok   {line}");
            }
            match &report.failure {
                None => {
                    println!(
                        "scenario passed: {}/{} steps, {} assertions",
                        report.steps_run,
                        report.steps_total,
                        report.assertion_lines.len()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Some(failure) => {
                    eprintln!("scenario failed: {failure}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Bench(args) => {
            let profile = parse_profile(&args)?;
            let options = BenchOptions {
                rides: args.rides,
                profile,
                submitters_per_org: args.submitters_per_org,
            };
            let report = run_bench(&config, seed, &options)?;
            let csv_path = cli.out.join("metrics.csv");
            let summary_path = cli.out.join("summary.json");
            write_atomic(&csv_path, report.to_csv().as_bytes())?;
            write_atomic(&summary_path, &pretty_json(&report.summary_json()))?;
            println!("{}", serde_json::to_string_pretty(&report.summary_json())?);
            println!("wrote {} and {}", csv_path.display(), summary_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let axis = SweepAxis::parse(&args.axis)
                .ok_or_else(|| anyhow!("--axis must be peers or orgs, got {:?}", args.axis))?;
            let options = SweepOptions {
                axis,
                from: args.from,
                to: args.to,
                policy: args.policy.clone(),
                scale_traffic: args.scale_traffic,
                rides: args.rides,
                profile: TrafficProfile::ConstantRate {
                    delay_ms: args.delay_ms,
                    deviation_frac: args.deviation,
                },
                submitters_per_org: args.submitters_per_org,
            };
            options
                .profile
                .validate()
                .map_err(|e| anyhow!(e.to_string()))?;
            let points = sweep(&config, seed, &options)?;
            for point in &points {
                let dir = cli.out.join(format!("{}{}", args.axis, point.axis_value));
                write_atomic(&dir.join("metrics.csv"), point.report.to_csv().as_bytes())?;
                write_atomic(
                    &dir.join("summary.json"),
                    &pretty_json(&point.report.summary_json()),
                )?;
                println!(
                    "{}={}: tps={:.3} peer={:.3}ms orderer={:.3}ms event={:.3}ms",
                    args.axis,
                    point.axis_value,
                    point.report.tps_committed,
                    point.report.peer_mean_ms,
                    point.report.orderer_mean_ms,
                    point.report.event_mean_ms,
                );
            }
            let trend = trend_csv(axis, &args.policy, &points);
            let trend_path = cli.out.join("trend.csv");
            write_atomic(&trend_path, trend.as_bytes())?;
            println!("wrote {}", trend_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Adversary { scenario } => {
            let scenario = AdversaryScenario::parse(&scenario).ok_or_else(|| {
                anyhow!("--scenario must be eclipse, malicious-query, or stale-endorser")
            })?;
            let verdict = run_adversary(&config, seed, scenario)?;
            println!("scenario: {}", verdict.scenario);
            for line in &verdict.details {
                println!("  {line}");
            }
            if verdict.passed {
                println!("verdict: defended");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verdict: FAILED");
                Ok(ExitCode::from(1))
            }
        }
        Command::Dump { script } => {
            let script = load_script(&script)?;
            let (report, world) = run_scenario_with_world(&config, seed, &script)?;
            if let Some(failure) = &report.failure {
                eprintln!("scenario failed: {failure}");
                return Ok(ExitCode::from(1));
            }
            print!("{}", world.net.reference_peer().ledger.store.dump_jsonl());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyChain { dump } => {
            let text = fs::read_to_string(&dump)
                .with_context(|| format!("reading dump {}", dump.display()))?;
            let store: BlockStore<EndorsedTx> =
                BlockStore::parse_jsonl(&text).map_err(|e| anyhow!("parsing dump: {e}"))?;
            match store.verify_chain() {
                Ok(()) => {
                    println!("ok: {} blocks, tip {}", store.blocks().len(), store.tip_hash());
                    Ok(ExitCode::SUCCESS)
                }
                Err(height) => {
                    println!("chain broken at height {height}");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

fn parse_profile(args: &BenchArgs) -> Result<TrafficProfile> {
    let profile = match args.profile.as_str() {
        "constant" => {
            let delay_ms = args
                .delay_ms
                .ok_or_else(|| anyhow!("--profile constant requires --delay-ms"))?;
            TrafficProfile::ConstantRate {
                delay_ms,
                deviation_frac: args.deviation,
            }
        }
        "poisson" => match (args.lambda_tps, args.lambda_interarrival_ms) {
            (Some(tps), None) => TrafficProfile::Poisson { lambda_tps: tps },
            (None, Some(ms)) if ms > 0.0 => TrafficProfile::Poisson {
                lambda_tps: 1000.0 / ms,
            },
            (None, Some(_)) => return Err(anyhow!("--lambda-interarrival-ms must be positive")),
            (Some(_), Some(_)) => {
                return Err(anyhow!(
                    "pass either --lambda-tps or --lambda-interarrival-ms, not both"
                ))
            }
            (None, None) => {
                return Err(anyhow!(
                    "--profile poisson requires --lambda-tps or --lambda-interarrival-ms"
                ))
            }
        },
        other => return Err(anyhow!("unknown profile {other:?}, expected constant or poisson")),
    };
    profile.validate().map_err(|e| anyhow!(e.to_string()))?;
    Ok(profile)
}

fn pretty_json(value: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("summary serializes");
    bytes.push(b'\n');
    bytes
}
