use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use txpower::export::{export_traces, write_comparison, RunSummary};
use txpower::metrics::build_comparison;
use txpower::selftest::run_selftest;
use txpower::sim::{run_experiment, run_single, ArmResult};
use txpower::{Arm, Error, NodeId, Result, ScenarioConfig};

#[derive(Parser)]
#[command(name = "txpower", version, about = "Multi-hop WiFi transmit power control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one arm on one seed.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        arm: Option<Arm>,
    },
    /// Run every arm over a shared set of seeds and tabulate the results.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Inclusive range `a..b`, a comma list, or a single seed.
        #[arg(long, default_value = "1..32")]
        seeds: String,
    },
    /// Write per-frame power and reward traces of one run.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        arm: Option<Arm>,
        /// Only this node; all nodes when omitted.
        #[arg(long)]
        node: Option<usize>,
    },
    /// Gradient check, state encoding sweep and FLOP count.
    Selftest {
        #[arg(long, default_value_t = 20)]
        gradient_seeds: u64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(m) = self.episodes {
            cfg.episodes = m;
        }
        cfg.validate()?;
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds {s:?}"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    Ok(seeds)
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    summary.write(fs::File::create(path)?)
}

fn print_arm(r: &ArmResult) {
    println!(
        "{:<7} efficiency {:>9.4} Mbit/J  throughput {:>8.4} Mbps  ({} runs)",
        r.arm.name(),
        r.mean_energy_efficiency,
        r.mean_throughput_mbps,
        r.runs.len()
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, seed, arm } => {
            let cfg = common.load()?;
            let seed = seed.unwrap_or(cfg.seed);
            let arm = arm.unwrap_or(cfg.policy);
            let (metrics, log) = run_single(&cfg, arm, seed)?;
            export_traces(&log, None, &common.out.join("traces.csv"))?;
            let result = ArmResult {
                arm,
                mean_throughput_mbps: metrics.throughput_mbps,
                mean_energy_efficiency: metrics.energy_efficiency,
                runs: vec![metrics],
            };
            print_arm(&result);
            let results = [result];
            write_summary(
                &common.out.join("summary.json"),
                &RunSummary::new(&cfg, &[seed], &results, None),
            )
        }
        Command::Compare { common, seeds } => {
            let cfg = common.load()?;
            let seeds = parse_seeds(&seeds)?;
            let results = run_experiment(&cfg, &[Arm::Fixed, Arm::Myopic, Arm::Dqn], &seeds)?;
            let entries: Vec<_> = results
                .iter()
                .map(|r| (r.arm, r.mean_energy_efficiency, r.mean_throughput_mbps))
                .collect();
            let table = build_comparison(&entries);
            results.iter().for_each(print_arm);
            write_comparison(&table, fs::File::create(common.out.join("comparison.csv"))?)?;
            write_summary(
                &common.out.join("summary.json"),
                &RunSummary::new(&cfg, &seeds, &results, Some(&table)),
            )
        }
        Command::Export {
            common,
            seed,
            arm,
            node,
        } => {
            let cfg = common.load()?;
            let seed = seed.unwrap_or(cfg.seed);
            let arm = arm.unwrap_or(cfg.policy);
            let node = node.map(NodeId);
            if let Some(id) = node {
                if id.0 >= cfg.node_count {
                    return Err(Error::UnknownNode(id.0));
                }
            }
            let (_, log) = run_single(&cfg, arm, seed)?;
            let name = match node {
                Some(id) => format!("traces_{}_node{}.csv", arm.name(), id.0),
                None => format!("traces_{}.csv", arm.name()),
            };
            let path = common.out.join(name);
            let rows = export_traces(&log, node, &path)?;
            println!("wrote {rows} rows to {}", path.display());
            Ok(())
        }
        Command::Selftest { gradient_seeds } => {
            let report = run_selftest(gradient_seeds)?;
            let worst = report.worst_gradient_error();
            println!("decision FLOPs       {}", report.decision_flops);
            println!("states               {}", report.states);
            println!("state-action pairs   {}", report.state_action_pairs);
            println!("gradient check       max relative error {worst:.3e} over {gradient_seeds} seeds");
            if worst < 1e-4 {
                Ok(())
            } else {
                Err(Error::Contract(format!("gradient check failed: {worst:.3e}")))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
