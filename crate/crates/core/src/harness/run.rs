use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{FilterMode, ScenarioConfig, TopologyKind};
use crate::dynamics::{position_of, TargetModel};
use crate::error::{Error, Result};
use crate::estimator::{initial_estimates, CentralizedKf};
use crate::fdi::{active_lifted, run_algorithm1, AlarmLog, TrackingSetup};
use crate::gain::{design_gain, read_gains_csv, DesignOptions, GainDesign};
use crate::measurement::{MeasurementKind, MeasurementModel};
use crate::network::{build_complete, build_cycle, build_kappa_connected, make_weights, place_sensors, read_edge_list, read_positions_csv, SensorNetwork, WeightMatrix};
use crate::seeding::{sensor_rng, stream, stream_rng, trial_seed};

/// Randomised ingredients of one trial.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub model: TargetModel,
    pub network: SensorNetwork,
    pub weights: WeightMatrix,
    pub x0: DVector<f64>,
    pub initial: Vec<DVector<f64>>,
    pub seed: u64,
}

pub fn build_trial(config: &ScenarioConfig, seed: u64) -> Result<TrialSetup> {
    let sc = &config.scenario;
    let n = sc.sensors;
    let [lo, hi] = sc.bounds;
    let model = TargetModel::ncv(sc.period, config.noise.process_std)?;
    let positions = match &config.topology.positions {
        Some(path) => {
            let p = read_positions_csv(path)?;
            if p.len() != n {
                return Err(Error::InvalidNetwork(format!("{} lists {} positions for {n} sensors", path.display(), p.len())));
            }
            p
        }
        None => place_sensors(n, lo, hi, &mut stream_rng(seed, stream::PLACEMENT))?,
    };
    let adjacency = match config.topology.kind {
        TopologyKind::Cycle => build_cycle(n)?,
        TopologyKind::Kappa => build_kappa_connected(n, config.topology.kappa)?,
        TopologyKind::AllToAll => build_complete(n),
        TopologyKind::File => read_edge_list(config.topology.path.as_ref().expect("validated"), n)?,
    };
    let network = SensorNetwork::new(positions, adjacency)?;
    let weights = make_weights(network.adjacency(), config.topology.weights, &mut stream_rng(seed, stream::WEIGHTS))?;
    let x0 = match config.target.initial {
        Some(x) => DVector::from_row_slice(&x),
        None => {
            let mut rng = stream_rng(seed, stream::TARGET_INIT);
            let mut x = DVector::zeros(6);
            for a in 0..3 {
                x[a] = rng.random_range(lo..=hi);
            }
            for a in 3..6 {
                x[a] = config.target.velocity_std * rng.sample::<f64, _>(StandardNormal);
            }
            x
        }
    };
    let initial = initial_estimates(&x0, config.noise.init_std, n, &mut stream_rng(seed, stream::ESTIMATE_INIT));
    Ok(TrialSetup { model, network, weights, x0, initial, seed })
}

/// Result of one trial for one measurement kind.
#[derive(Debug, Clone)]
pub struct TrialTrace {
    pub kind: MeasurementKind,
    pub seed: u64,
    pub positions: Vec<Vector3<f64>>,
    /// True state for `k = 0..=steps` (shorter if tracking terminated).
    pub truth: Vec<DVector<f64>>,
    /// Per step, per sensor `x − x̂_i`; a single entry for the centralized
    /// filter.
    pub errors: Vec<Vec<Option<DVector<f64>>>>,
    pub gains: Option<Vec<DMatrix<f64>>>,
    pub achieved_rho: Option<f64>,
    pub log: Option<AlarmLog>,
    pub terminated: bool,
    /// Connectivity and observability of the network after each isolation.
    pub strongly_connected_after_isolation: Vec<bool>,
    pub observable_after_isolation: Vec<bool>,
}

impl TrialTrace {
    /// Per-step mean over sensors of the squared position and velocity
    /// errors.
    pub fn mse(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::with_capacity(self.errors.len());
        let mut vel = Vec::with_capacity(self.errors.len());
        for step in &self.errors {
            let present: Vec<_> = step.iter().flatten().collect();
            let m = present.len().max(1) as f64;
            pos.push(present.iter().map(|e| e.rows(0, 3).norm_squared()).sum::<f64>() / m);
            vel.push(present.iter().map(|e| e.rows(3, 3).norm_squared()).sum::<f64>() / m);
        }
        (pos, vel)
    }
}

fn design_point(kind: MeasurementKind, setup: &TrialSetup) -> Vector3<f64> {
    match kind {
        MeasurementKind::LinearizedEstimated => {
            let mean = setup.initial.iter().fold(Vector3::zeros(), |acc, x| acc + position_of(x));
            mean / setup.initial.len() as f64
        }
        _ => position_of(&setup.x0),
    }
}

pub fn run_trial(config: &ScenarioConfig, kind: MeasurementKind, seed: u64) -> Result<TrialTrace> {
    let setup = build_trial(config, seed)?;
    let noise = &config.noise;
    let measurement = MeasurementModel::new(kind, &setup.network, noise.measurement_std, noise.speed, noise.mode, setup.model.state_dim())?;
    match config.scenario.mode {
        FilterMode::Distributed => run_distributed(config, kind, setup, measurement),
        FilterMode::Centralized => run_centralized(config, kind, setup, measurement),
    }
}

/// Designs (or loads) the trial's gain at its design point; infeasible
/// designs are returned, not rejected.
pub fn trial_gain(config: &ScenarioConfig, kind: MeasurementKind, setup: &TrialSetup) -> Result<(GainDesign, Vector3<f64>)> {
    let noise = &config.noise;
    let measurement = MeasurementModel::new(kind, &setup.network, noise.measurement_std, noise.speed, noise.mode, setup.model.state_dim())?;
    let at = design_point(kind, setup);
    let (lifted, _) = active_lifted(&setup.network, &setup.weights, setup.model.transition(), &measurement, &at)?;
    let rho_bound = config.filter.rho_bound;
    let design = match &config.filter.gains {
        Some(path) => GainDesign::from_blocks(&lifted, read_gains_csv(path)?, rho_bound)?,
        None => {
            let g = setup.model.input();
            let shape = g * g.transpose();
            design_gain(&lifted, DesignOptions { rho_bound, budget: config.filter.budget, process_shape: Some(shape) })?
        }
    };
    Ok((design, at))
}

fn run_distributed(config: &ScenarioConfig, kind: MeasurementKind, setup: TrialSetup, measurement: MeasurementModel) -> Result<TrialTrace> {
    let (design, at) = trial_gain(config, kind, &setup)?;
    let design = design.require_feasible()?;
    let kappa = match config.topology.kind {
        TopologyKind::Kappa => config.topology.kappa,
        _ => 0,
    };
    let tracking = TrackingSetup {
        model: setup.model.clone(),
        network: setup.network.clone(),
        weights: setup.weights.clone(),
        measurement,
        design: design.clone(),
        design_point: at,
        kappa,
        detector: config.detector,
        faults: config.faults.clone(),
        steps: config.scenario.steps,
        x0: setup.x0.clone(),
        initial: setup.initial.clone(),
        seed: setup.seed,
    };
    let report = run_algorithm1(&tracking)?;
    Ok(TrialTrace {
        kind,
        seed: setup.seed,
        positions: setup.network.positions().to_vec(),
        terminated: report.terminated(),
        strongly_connected_after_isolation: report.strongly_connected_after_isolation,
        observable_after_isolation: report.observable_after_isolation,
        truth: report.truth,
        errors: report.errors,
        gains: Some(design.blocks().to_vec()),
        achieved_rho: Some(design.achieved_rho()),
        log: config.detector.map(|_| report.log),
    })
}

/// Centralized Kalman filter fed by sensor 0's TDOAs to its measurement
/// neighbours (every other sensor on an all-to-all network).
fn run_centralized(config: &ScenarioConfig, kind: MeasurementKind, setup: TrialSetup, measurement: MeasurementModel) -> Result<TrialTrace> {
    const REFERENCE: usize = 0;
    if setup.network.measurement_neighbors(REFERENCE).is_empty() {
        return Err(Error::InvalidNetwork("the reference sensor has no measurement neighbours".into()));
    }
    let n = setup.network.len();
    let s = setup.model.state_dim();
    let filter_std = config.noise.measurement_std.max(config.filter.min_measurement_std);
    let p0 = DMatrix::identity(s, s) * config.noise.init_std.powi(2);
    let mut kf = CentralizedKf::new(&setup.model, filter_std, setup.initial[REFERENCE].clone(), p0)?;
    let mut w_rng = stream_rng(setup.seed, stream::PROCESS_NOISE);
    let mut sensor_rngs: Vec<_> = (0..n).map(|i| sensor_rng(setup.seed, i)).collect();
    let mut x = setup.x0.clone();
    let mut truth = vec![x.clone()];
    let mut errors = vec![vec![Some(&x - kf.state())]];
    for k in 1..=config.scenario.steps {
        let w = setup.model.sample_noise(&mut w_rng);
        x = setup.model.propagate(&x, &w);
        let frame = measurement.frame(&x, &setup.network, k, &mut sensor_rngs, &config.faults);
        let y = frame.outputs[REFERENCE].as_ref().expect("reference sensor is active");
        kf.step(y, &measurement, &setup.network, REFERENCE, &position_of(&x))?;
        truth.push(x.clone());
        errors.push(vec![Some(&x - kf.state())]);
    }
    Ok(TrialTrace {
        kind,
        seed: setup.seed,
        positions: setup.network.positions().to_vec(),
        truth,
        errors,
        gains: None,
        achieved_rho: None, log: None,
        terminated: false,
        strongly_connected_after_isolation: Vec::new(),
        observable_after_isolation: Vec::new(),
    })
}

/// Per-trial MSE traces of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMse {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
}

/// Monte-Carlo curves for one measurement kind.
#[derive(Debug, Clone)]
pub struct KindCurve {
    pub kind: MeasurementKind,
    pub mse_pos: Vec<f64>,
    pub mse_vel: Vec<f64>,
    pub mse_total: Vec<f64>,
    /// Standard deviation across trials of the total MSE.
    pub std: Vec<f64>,
    pub trials: Vec<TrialMse>,
    pub mean_rho: Option<f64>,
    pub terminated_trials: usize,
    pub isolated_sensors: usize,
    /// Full trace of the first trial.
    pub example: TrialTrace,
}

#[derive(Debug, Clone)]
pub struct McSummary {
    pub curves: Vec<KindCurve>,
    pub trials: usize,
    pub steps: usize,
    pub runtime_secs: f64,
    pub config: ScenarioConfig,
}

impl McSummary {
    pub fn curve(&self, kind: MeasurementKind) -> Option<&KindCurve> {
        self.curves.iter().find(|c| c.kind == kind)
    }
}

fn aggregate(kind: MeasurementKind, traces: Vec<TrialTrace>, steps: usize) -> KindCurve {
    let trials: Vec<TrialMse> = traces
        .iter()
        .map(|t| {
            let (pos, vel) = t.mse();
            TrialMse { pos, vel }
        })
        .collect();
    let mut mse_pos = vec![0.0; steps + 1];
    let mut mse_vel = vec![0.0; steps + 1];
    let mut mse_total = vec![0.0; steps + 1];
    let mut std = vec![0.0; steps + 1];
    for k in 0..=steps {
        // trials that terminated early contribute up to their last step
        let totals: Vec<f64> = trials.iter().filter(|t| k < t.pos.len()).map(|t| t.pos[k] + t.vel[k]).collect();
        let cnt = totals.len().max(1) as f64;
        mse_pos[k] = trials.iter().filter(|t| k < t.pos.len()).map(|t| t.pos[k]).sum::<f64>() / cnt;
        mse_vel[k] = trials.iter().filter(|t| k < t.vel.len()).map(|t| t.vel[k]).sum::<f64>() / cnt;
        mse_total[k] = totals.iter().sum::<f64>() / cnt;
        std[k] = if totals.len() > 1 { (totals.iter().map(|v| (v - mse_total[k]).powi(2)).sum::<f64>() / (cnt - 1.0)).sqrt() } else { 0.0 };
    }
    let rhos: Vec<f64> = traces.iter().filter_map(|t| t.achieved_rho).collect();
    let mean_rho = (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64);
    let terminated_trials = traces.iter().filter(|t| t.terminated).count();
    let isolated_sensors = traces.iter().filter_map(|t| t.log.as_ref()).map(|l| l.faulty_count()).sum();
    let example = traces.into_iter().next().expect("at least one trial");
    KindCurve { kind, mse_pos, mse_vel, mse_total, std, trials, mean_rho, terminated_trials, isolated_sensors, example }
}

/// Runs every configured kind over `scenario.trials` trials. Trial `t`
/// uses `trial_seed(seed, t)` for every kind, so kinds are compared on
/// identical geometry and noise draws.
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<McSummary> {
    config.validate()?;
    let start = Instant::now();
    let sc = &config.scenario;
    let mut curves = Vec::with_capacity(sc.kinds.len());
    for &kind in &sc.kinds {
        let traces = (0..sc.trials).into_par_iter().map(|t| run_trial(config, kind, trial_seed(sc.seed, t))).collect::<Result<Vec<_>>>()?;
        curves.push(aggregate(kind, traces, sc.steps));
    }
    Ok(McSummary { curves, trials: sc.trials, steps: sc.steps, runtime_secs: start.elapsed().as_secs_f64(), config: config.clone() })
}
