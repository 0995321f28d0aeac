use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tdoa_track::fdi::{active_lifted, DetectorConfig};
use tdoa_track::gain::write_gains_csv;
use tdoa_track::harness::{build_trial, load_scenario, run_monte_carlo, trial_gain, write_outputs, FilterMode, McSummary, ScenarioConfig};
use tdoa_track::measurement::MeasurementModel;
use tdoa_track::network::{edge_connectivity, node_connectivity};
use tdoa_track::observability::distributed_observability;
use tdoa_track::seeding::trial_seed;

/// Distributed TDOA target tracking simulator.
#[derive(Debug, Parser)]
#[command(name = "tdoa-track", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the scenario's output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single trial and write its outputs.
    Simulate,
    /// Run the Monte-Carlo study described by the scenario.
    Mc,
    /// Design the stabilizing gain for the first trial's network.
    DesignGain,
    /// Report connectivity and distributed observability of the network.
    CheckNetwork,
    /// Run one trial with fault detection and isolation enabled.
    Fdi,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let Some(path) = &cli.config else { bail!("--config <FILE> is required") };
    let mut config = load_scenario(path)?;
    if let Some(seed) = cli.seed {
        config.scenario.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.output.dir = dir.clone();
    }
    let out = config.output.dir.clone();
    match cli.command {
        Command::Simulate => {
            config.scenario.trials = 1;
            simulate(&config, &out)
        }
        Command::Mc => simulate(&config, &out),
        Command::DesignGain => design(&config, &out),
        Command::CheckNetwork => check_network(&config),
        Command::Fdi => {
            config.scenario.trials = 1;
            if config.scenario.mode == FilterMode::Centralized {
                bail!("fault detection runs on the distributed filter; set scenario.mode = \"distributed\"");
            }
            config.detector.get_or_insert_with(DetectorConfig::default);
            let summary = simulate_summary(&config, &out)?;
            for curve in &summary.curves {
                let trace = &curve.example;
                let log = trace.log.as_ref().expect("detector enabled");
                let isolated: Vec<String> =
                    (0..config.scenario.sensors).filter_map(|i| log.isolated_at(i).map(|k| format!("{i}@{k}"))).collect();
                println!(
                    "{}: faulty {} isolated [{}] terminated {} alarm rate {:.4}",
                    curve.kind.name(),
                    log.faulty_count(),
                    isolated.join(", "),
                    trace.terminated,
                    log.false_alarm_rate(),
                );
            }
            Ok(())
        }
    }
}

fn simulate(config: &ScenarioConfig, out: &Path) -> Result<()> {
    simulate_summary(config, out).map(|_| ())
}

fn simulate_summary(config: &ScenarioConfig, out: &Path) -> Result<McSummary> {
    let summary = run_monte_carlo(config)?;
    for curve in &summary.curves {
        let last = curve.mse_total.last().copied().unwrap_or(f64::NAN);
        match curve.mean_rho {
            Some(rho) => println!("{}: final MSE {last:.4e}, mean rho {rho:.4}", curve.kind.name()),
            None => println!("{}: final MSE {last:.4e}", curve.kind.name()),
        }
    }
    let files = write_outputs(&summary, out).with_context(|| format!("writing outputs to {}", out.display()))?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(summary)
}

fn design(config: &ScenarioConfig, out: &Path) -> Result<()> {
    let setup = build_trial(config, trial_seed(config.scenario.seed, 0))?;
    for &kind in &config.scenario.kinds {
        let (design, _) = trial_gain(config, kind, &setup)?;
        println!(
            "{}: rho {:.6} bound {} evaluations {} feasible {}",
            kind.name(),
            design.achieved_rho(),
            design.rho_bound(),
            design.evaluations(),
            design.is_feasible()
        );
        let design = design.require_feasible()?;
        std::fs::create_dir_all(out)?;
        let path = out.join(format!("gains-{}.csv", kind.name()));
        write_gains_csv(design.blocks(), &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn check_network(config: &ScenarioConfig) -> Result<()> {
    let setup = build_trial(config, trial_seed(config.scenario.seed, 0))?;
    let adj = setup.network.adjacency();
    println!("sensors {} links {}", adj.len(), adj.link_count());
    println!("strongly connected {}", setup.network.is_strongly_connected());
    println!("node connectivity {}", node_connectivity(adj));
    println!("edge connectivity {}", edge_connectivity(adj));
    let noise = &config.noise;
    let mut observable = true;
    for &kind in &config.scenario.kinds {
        let measurement = MeasurementModel::new(kind, &setup.network, noise.measurement_std, noise.speed, noise.mode, setup.model.state_dim())?;
        let at = tdoa_track::dynamics::position_of(&setup.x0);
        let (lifted, _) = active_lifted(&setup.network, &setup.weights, setup.model.transition(), &measurement, &at)?;
        let report = distributed_observability(&lifted);
        println!("{}: observability rank {} of {}", kind.name(), report.rank, report.dim);
        observable &= report.observable();
    }
    if !observable {
        bail!("the network is not distributed observable");
    }
    Ok(())
}
