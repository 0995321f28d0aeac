//! Residual-based fault detection and isolation, and the end-to-end
//! tracking loop with isolation and termination.
//!
//! Each sensor monitors `r_i(k) = ‖y_i − ŷ_i‖`. The stateless test alarms
//! when `r_i > √2 erf⁻¹(c) Φ_i`; the stateful test sums `r_i²/Φ_i` over a
//! window of `θ` steps and compares it with the χ²_θ quantile at `c`.
//! `c` is the confidence level (one minus the false alarm rate).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erf_inv;

use crate::dynamics::{position_of, TargetModel};
use crate::error::{Error, Result};
use crate::estimator::FilterBank;
use crate::gain::{design_gain, verify_gain, DesignOptions, GainDesign};
use crate::linalg::spectral_norm;
use crate::measurement::{FaultSpec, MeasurementModel};
use crate::network::{remove_nodes, SensorNetwork, WeightMatrix};
use crate::observability::{build_lifted, distributed_observability, LiftedSystem};
use crate::seeding::{sensor_rng, stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorMode {
    #[default]
    Stateless,
    Stateful,
}

/// Which estimate the residual is formed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualSource {
    #[default]
    Prior,
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Confidence level `c` in (0, 1).
    pub confidence: f64,
    /// Sliding window length `θ` for the stateful test.
    pub window: usize,
    pub mode: DetectorMode,
    /// Contraction factor in Φ; defaults to the gain's spectral radius.
    pub b_bar: Option<f64>,
    pub residual: ResidualSource,
    /// Steps before the first test. Residuals are still logged. Defaults
    /// to the time for the closed loop to shrink the initial error 1000-fold.
    pub warmup: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            confidence: 0.95,
            window: 10,
            mode: DetectorMode::Stateless,
            b_bar: None,
            residual: ResidualSource::Prior,
            warmup: None,
        }
    }
}

/// Steps for a transient contracting at rate `rho` to shrink 1000-fold.
pub fn default_warmup(rho: f64) -> usize {
    if !(rho > 0.0) {
        return 0;
    }
    if rho >= 1.0 {
        return usize::MAX;
    }
    (1e-3f64.ln() / rho.ln()).ceil() as usize
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(format!("detector confidence must lie in (0, 1), got {}", self.confidence)));
        }
        if self.window < 1 {
            return Err(Error::InvalidParameter("detector window must be at least 1".into()));
        }
        if let Some(b) = self.b_bar {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidParameter(format!("b_bar must lie in (0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// 2-norm of an innovation vector.
pub fn residual(innovation: &DVector<f64>) -> f64 {
    innovation.norm()
}

/// `‖y − bias − H x̂‖`.
pub fn residual_of(y: &DVector<f64>, output: &DMatrix<f64>, bias: &DVector<f64>, x_hat: &DVector<f64>) -> f64 {
    (y - bias - output * x_hat).norm()
}

/// Per-node bound
/// `Φ_i = ‖R‖ + ‖H_i‖ (a₁ N ‖Q‖ + a₂ ‖R̄‖) / (N b̄)` with
/// `a₁ = ‖I − K D_H‖²`, `a₂ = ‖K‖²` and `R̄ = diag(H_iᵀ R H_i)`.
///
/// `process_cov` is the covariance `Q` of the target's random input and
/// `noise_std` the per-output measurement noise standard deviation.
pub fn phi_bound(lifted: &LiftedSystem, gains: &[DMatrix<f64>], process_cov: &DMatrix<f64>, noise_std: f64, b_bar: f64) -> Result<Vec<f64>> {
    let n = lifted.nodes();
    let s = lifted.block();
    if gains.len() != n {
        return Err(Error::Dimension(format!("{} gains for {n} nodes", gains.len())));
    }
    if !(b_bar > 0.0) {
        return Err(Error::InvalidParameter(format!("b_bar must be positive, got {b_bar}")));
    }
    let var = noise_std * noise_std;
    let mut a1: f64 = 0.0;
    let mut a2: f64 = 0.0;
    let mut rbar: f64 = 0.0;
    for i in 0..n {
        let m = DMatrix::identity(s, s) - &gains[i] * lifted.info_block(i);
        a1 = a1.max(spectral_norm(&m).powi(2));
        a2 = a2.max(spectral_norm(&gains[i]).powi(2));
        rbar = rbar.max(var * spectral_norm(&lifted.info_block(i)));
    }
    let q = spectral_norm(process_cov);
    let nn = n as f64;
    Ok((0..n).map(|i| var + spectral_norm(&lifted.outputs()[i]) * (a1 * nn * q + a2 * rbar) / (nn * b_bar)).collect())
}

/// `√2 erf⁻¹(c) Φ`.
pub fn stateless_threshold(confidence: f64, phi: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    Ok(std::f64::consts::SQRT_2 * erf_inv(confidence) * phi)
}

/// `Σ r(m)² / Φ` over the last `window` residuals; `None` until the window
/// is full.
pub fn distance_measure(residuals: &[f64], window: usize, phi: f64) -> Option<f64> {
    if window == 0 || residuals.len() < window {
        return None;
    }
    Some(residuals[residuals.len() - window..].iter().map(|r| r * r).sum::<f64>() / phi)
}

/// χ² quantile with `window` degrees of freedom at probability
/// `1 − false_alarm_rate`.
pub fn stateful_threshold(false_alarm_rate: f64, window: usize) -> Result<f64> {
    if !(false_alarm_rate > 0.0 && false_alarm_rate < 1.0) {
        return Err(Error::InvalidParameter(format!("false alarm rate must lie in (0, 1), got {false_alarm_rate}")));
    }
    if window < 1 {
        return Err(Error::InvalidParameter("window must be at least 1".into()));
    }
    let chi2 = ChiSquared::new(window as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(chi2.inverse_cdf(1.0 - false_alarm_rate))
}

/// Strict exceedance of the active test. The stateful test never fires
/// before its window is full.
pub fn detect(mode: DetectorMode, residual: f64, distance: Option<f64>, threshold: f64) -> bool {
    match mode {
        DetectorMode::Stateless => residual > threshold,
        DetectorMode::Stateful => distance.is_some_and(|z| z > threshold),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmRecord {
    pub k: usize,
    pub sensor: usize,
    pub residual: f64,
    pub distance: Option<f64>,
    pub threshold: f64,
    pub alarm: bool,
    pub isolated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlarmLog {
    records: Vec<AlarmRecord>,
    residuals: Vec<Vec<f64>>,
    alarm_steps: Vec<Vec<usize>>,
    isolated_at: Vec<Option<usize>>,
    faulty_count: usize,
    terminated: Option<usize>,
}

impl AlarmLog {
    pub fn new(sensors: usize) -> Self {
        Self { residuals: vec![Vec::new(); sensors], alarm_steps: vec![Vec::new(); sensors], isolated_at: vec![None; sensors], ..Self::default() }
    }

    pub fn records(&self) -> &[AlarmRecord] {
        &self.records
    }

    pub fn residuals(&self, sensor: usize) -> &[f64] {
        &self.residuals[sensor]
    }

    pub fn alarm_steps(&self, sensor: usize) -> &[usize] {
        &self.alarm_steps[sensor]
    }

    pub fn isolated_at(&self, sensor: usize) -> Option<usize> {
        self.isolated_at[sensor]
    }

    /// Number of isolated sensors `N_f`.
    pub fn faulty_count(&self) -> usize {
        self.faulty_count
    }

    pub fn terminated(&self) -> bool {
        self.terminated.is_some()
    }

    pub fn terminated_at(&self) -> Option<usize> {
        self.terminated
    }

    pub fn false_alarm_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.alarm).count() as f64 / self.records.len() as f64
    }

    fn push(&mut self, record: AlarmRecord) {
        self.residuals[record.sensor].push(record.residual);
        if record.alarm {
            self.alarm_steps[record.sensor].push(record.k);
        }
        self.records.push(record);
    }

    fn isolate(&mut self, sensor: usize, k: usize) {
        self.isolated_at[sensor] = Some(k);
        self.faulty_count += 1;
        if let Some(r) = self.records.iter_mut().rev().find(|r| r.sensor == sensor && r.k == k) {
            r.isolated = true;
        }
    }

    /// CSV with header `k,sensor,residual,z,threshold,alarm,isolated`;
    /// `z` is empty while the stateful window is filling.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "k,sensor,residual,z,threshold,alarm,isolated")?;
        for r in &self.records {
            let z = r.distance.map(|z| z.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{},{}", r.k, r.sensor, r.residual, z, r.threshold, r.alarm as u8, r.isolated as u8)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Output matrices used by the filter at `at`, for the listed sensors.
pub fn filter_outputs(measurement: &MeasurementModel, network: &SensorNetwork, nodes: &[usize], at: &Vector3<f64>) -> Result<Vec<DMatrix<f64>>> {
    nodes.iter().map(|&i| measurement.output_matrix(network, i, at)).collect()
}

/// Lifted system restricted to the active sensors, in index order.
pub fn active_lifted(network: &SensorNetwork, weights: &WeightMatrix, transition: &DMatrix<f64>, measurement: &MeasurementModel, at: &Vector3<f64>) -> Result<(LiftedSystem, Vec<usize>)> {
    let nodes = network.active_indices();
    let outputs = filter_outputs(measurement, network, &nodes, at)?;
    Ok((build_lifted(&weights.compact(&nodes), transition, &outputs)?, nodes))
}

/// Everything needed for one tracking run.
#[derive(Debug, Clone)]
pub struct TrackingSetup {
    pub model: TargetModel,
    pub network: SensorNetwork,
    pub weights: WeightMatrix,
    pub measurement: MeasurementModel,
    /// Gain design over the active sensors, in index order.
    pub design: GainDesign,
    /// Position at which linearized output matrices are taken for design.
    pub design_point: Vector3<f64>,
    pub kappa: usize,
    pub detector: Option<DetectorConfig>,
    pub faults: Vec<FaultSpec>,
    pub steps: usize,
    pub x0: DVector<f64>,
    pub initial: Vec<DVector<f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrackingReport {
    /// True state for `k = 0..=steps_run`.
    pub truth: Vec<DVector<f64>>,
    /// Per step, per sensor `x − x̂_i` (`None` once a sensor is isolated).
    pub errors: Vec<Vec<Option<DVector<f64>>>>,
    pub log: AlarmLog,
    pub achieved_rho: f64,
    /// Gains redesigned after an isolation.
    pub redesigns: usize,
    /// Observability of the surviving network after each isolation.
    pub observable_after_isolation: Vec<bool>,
    pub strongly_connected_after_isolation: Vec<bool>,
    pub final_network: SensorNetwork,
}

impl TrackingReport {
    pub fn steps_run(&self) -> usize {
        self.truth.len() - 1
    }

    pub fn terminated(&self) -> bool {
        self.log.terminated()
    }
}

fn expand_gains(blocks: &[DMatrix<f64>], nodes: &[usize], n: usize, s: usize) -> Vec<DMatrix<f64>> {
    let mut full = vec![DMatrix::zeros(s, s); n];
    for (b, &i) in blocks.iter().zip(nodes) {
        full[i] = b.clone();
    }
    full
}

struct Thresholds {
    phi: Vec<f64>,
    threshold: Vec<f64>,
}

fn thresholds(setup: &TrackingSetup, config: &DetectorConfig, lifted: &LiftedSystem, nodes: &[usize], gains: &[DMatrix<f64>], rho: f64) -> Result<Thresholds> {
    let n = setup.network.len();
    let process_cov = setup.model.process_cov();
    let active_gains: Vec<_> = nodes.iter().map(|&i| gains[i].clone()).collect();
    let b_bar = config.b_bar.unwrap_or(rho);
    let phi_active = phi_bound(lifted, &active_gains, process_cov, setup.measurement.noise_std(), b_bar)?;
    let mut phi = vec![0.0; n];
    let mut threshold = vec![0.0; n];
    let stateful = stateful_threshold(1.0 - config.confidence, config.window)?;
    for (&i, &p) in nodes.iter().zip(&phi_active) {
        phi[i] = p;
        threshold[i] = match config.mode {
            // Φ bounds the residual's second moment, so its root is the scale.
            DetectorMode::Stateless => stateless_threshold(config.confidence, p.sqrt())?,
            DetectorMode::Stateful => stateful,
        };
    }
    Ok(Thresholds { phi, threshold })
}

/// Runs the distributed filter with (optional) detection and isolation.
///
/// Per step: the target moves, every active sensor measures, the filter
/// takes one synchronous step, and each sensor tests its residual. Alarmed
/// sensors are removed from the network and `N_f` grows; while
/// `N_f ≤ κ` tracking continues on the reduced network (the gain is kept
/// if it still meets the bound there, otherwise redesigned), else the run
/// is terminated.
pub fn run_algorithm1(setup: &TrackingSetup) -> Result<TrackingReport> {
    if let Some(cfg) = &setup.detector {
        cfg.validate()?;
    }
    let design = setup.design.clone().require_feasible()?;
    let n = setup.network.len();
    let s = setup.model.state_dim();
    let nodes = setup.network.active_indices();
    if design.blocks().len() != nodes.len() {
        return Err(Error::Dimension(format!("{} gain blocks for {} active sensors", design.blocks().len(), nodes.len())));
    }
    let gains = expand_gains(design.blocks(), &nodes, n, s);
    let mut bank = FilterBank::new(
        setup.network.clone(),
        setup.weights.clone(),
        setup.model.transition().clone(),
        setup.measurement.clone(),
        gains,
        setup.initial.clone(),
    )?;
    let mut rho = design.achieved_rho();
    let warmup = setup.detector.and_then(|c| c.warmup).unwrap_or_else(|| default_warmup(rho));
    let mut thr = match &setup.detector {
        Some(cfg) => {
            let (lifted, nodes) = active_lifted(&setup.network, &setup.weights, setup.model.transition(), &setup.measurement, &setup.design_point)?;
            Some(thresholds(setup, cfg, &lifted, &nodes, bank.gains(), rho)?)
        }
        None => None,
    };

    let mut w_rng = stream_rng(setup.seed, stream::PROCESS_NOISE);
    let mut sensor_rngs: Vec<_> = (0..n).map(|i| sensor_rng(setup.seed, i)).collect();
    let mut x = setup.x0.clone();
    let mut truth = vec![x.clone()];
    let errs0 = bank.estimates().iter().map(|e| e.as_ref().map(|e| &x - e)).collect();
    let mut errors = vec![errs0];
    let mut log = AlarmLog::new(n);
    let mut redesigns = 0;
    let mut observable_after = Vec::new();
    let mut sc_after = Vec::new();

    for k in 1..=setup.steps {
        let w = setup.model.sample_noise(&mut w_rng);
        x = setup.model.propagate(&x, &w);
        let frame = setup.measurement.frame(&x, bank.network(), k, &mut sensor_rngs, &setup.faults);
        bank.step(&frame, &position_of(&x))?;
        truth.push(x.clone());
        errors.push(bank.estimates().iter().map(|e| e.as_ref().map(|e| &x - e)).collect());

        let (Some(cfg), Some(t)) = (&setup.detector, &thr) else { continue };
        let mut alarmed = Vec::new();
        for i in bank.network().active_indices() {
            let Some(innov) = &bank.innovations()[i] else { continue };
            let r = match cfg.residual {
                ResidualSource::Prior => residual(innov),
                ResidualSource::Posterior => {
                    let y = frame.outputs[i].as_ref().expect("active sensor has an output");
                    let post = bank.estimates()[i].as_ref().expect("active sensor has an estimate");
                    residual(&bank.measurement().innovation(y, post, bank.network(), i))
                }
            };
            let mut window: Vec<f64> = log.residuals(i).to_vec();
            window.push(r);
            let z = distance_measure(&window, cfg.window, t.phi[i]);
            let alarm = k > warmup && detect(cfg.mode, r, z, t.threshold[i]);
            log.push(AlarmRecord { k, sensor: i, residual: r, distance: z, threshold: t.threshold[i], alarm, isolated: false });
            if alarm {
                alarmed.push(i);
            }
        }
        if alarmed.is_empty() {
            continue;
        }
        for &i in &alarmed {
            log.isolate(i, k);
        }
        if log.faulty_count() > setup.kappa || alarmed.len() >= bank.network().active_count() {
            log.terminated = Some(k);
            break;
        }
        let (net, weights) = remove_nodes(bank.network(), bank.weights(), &alarmed)?;
        sc_after.push(net.is_strongly_connected());
        let measurement = bank.measurement().rebuild(&net)?;
        let at = position_of(bank.estimates().iter().flatten().next().expect("active sensors remain"));
        let at = if measurement.kind().is_linear() { at } else { setup.design_point };
        let (lifted, nodes) = active_lifted(&net, &weights, setup.model.transition(), &measurement, &at)?;
        let observable = distributed_observability(&lifted).observable();
        observable_after.push(observable);
        let kept: Vec<_> = nodes.iter().map(|&i| bank.gains()[i].clone()).collect();
        let check = verify_gain(&lifted, &kept, design.rho_bound())?;
        let new_gains = if check.stable || !observable {
            rho = check.rho;
            None
        } else {
            let d = design_gain(&lifted, DesignOptions { rho_bound: design.rho_bound(), ..DesignOptions::default() })?;
            rho = d.achieved_rho();
            redesigns += 1;
            Some(expand_gains(d.blocks(), &nodes, n, s))
        };
        bank.reconfigure(net, weights, new_gains)?;
        if let (Some(cfg), Some(_)) = (&setup.detector, &thr) {
            thr = Some(thresholds(setup, cfg, &lifted, &nodes, bank.gains(), rho.min(1.0 - 1e-9))?);
        }
    }

    Ok(TrackingReport {
        truth,
        errors,
        log,
        achieved_rho: design.achieved_rho(),
        redesigns,
        observable_after_isolation: observable_after,
        strongly_connected_after_isolation: sc_after,
        final_network: bank.network().clone(),
    })
}
