use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cogneq_core::analysis::{condition_report, default_t};
use cogneq_core::consensus::{compute_finite_time_params, finite_time_average, random_values, Digraph, GraphKind};
use cogneq_core::harness::{load_config, run_experiment, Preset};

#[derive(Parser)]
#[command(name = "cogneq", version, about = "Distributed sensing/transmission equilibria for cognitive radio networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// sensing-sweep, convergence or global-constraints
        #[arg(long)]
        preset: Option<Preset>,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exact averages instead of finite-time consensus.
        #[arg(long)]
        centralized: bool,
    },
    /// Validate a configuration and print the condition report.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Finite-time average consensus on a random initial state.
    ConsensusDemo {
        #[arg(long)]
        nodes: usize,
        #[arg(long, value_enum)]
        graph: GraphArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum GraphArg {
    Complete,
    Ring,
    Random,
}

impl From<GraphArg> for GraphKind {
    fn from(g: GraphArg) -> Self {
        match g {
            GraphArg::Complete => GraphKind::Complete,
            GraphArg::Ring => GraphKind::Ring,
            GraphArg::Random => GraphKind::Random,
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config, preset, seed, out, centralized } => {
            let mut cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if preset.is_some() {
                cfg.preset = preset;
            }
            if let Some(s) = seed {
                cfg.scenario.generator.seed = s;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            cfg.algorithm.run.centralized |= centralized;
            cfg.validate()?;
            let summary = run_experiment(&cfg)?;
            println!(
                "status: {:?}  converged: {}  certified: {}  conditions: {}  iterations: {}  residual: {:.3e}",
                summary.status,
                summary.converged,
                summary.certified,
                summary.conditions_certified,
                summary.iterations,
                summary.residual
            );
            for n in &summary.notes {
                println!("  note: {n}");
            }
            println!("artifacts in {}", cfg.output.dir.display());
            Ok(summary.status.exit_code())
        }
        Command::Check { config } => {
            let cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            let (sc, model) = cfg.build()?;
            let t = cfg.algorithm.t.unwrap_or_else(|| default_t(&sc));
            let report = condition_report(&sc, &model, t, cfg.algorithm.run.tol);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::ConsensusDemo { nodes, graph, seed } => {
            let g = Digraph::build(graph.into(), nodes, seed);
            let params = compute_finite_time_params(&g, nodes as i64)?;
            let values = random_values(nodes, 0.0, 1.0, seed);
            let out = finite_time_average(&values, &params)?;
            let mean = values.iter().sum::<f64>() / nodes as f64;
            println!("initial:  {values:?}");
            println!("horizons: {:?}", params.horizon);
            for (q, v) in out.node_values.iter().enumerate() {
                println!("node {q}: {v:.15} (error {:.2e})", (v - mean).abs());
            }
            println!("mean {mean:.15}; rounds {}; messages {}", out.iters_used, out.messages_total);
            if !params.horizon_warnings.is_empty() {
                println!("horizon above n - deg + 1 at nodes {:?}", params.horizon_warnings);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
