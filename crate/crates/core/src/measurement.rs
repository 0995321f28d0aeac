//! TOA/TDOA measurement models.
//!
//! Three output forms are supported for sensor `i` with measurement
//! neighbours `j_1..j_m`:
//!
//! * range difference: `h_ij = ‖p − p_i‖ − ‖p − p_j‖` (nonlinear);
//! * its Jacobian, evaluated either at the true or the estimated position;
//! * half squared-range difference: `h_ij = ½(‖p − p_i‖² − ‖p − p_j‖²)`,
//!   which equals `(p_j − p_i)·p − ½(‖p_j‖² − ‖p_i‖²)`. The bias term is
//!   known from the sensor positions, so after subtracting it the output is
//!   `H_i x` with a constant `H_i`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::position_of;
use crate::error::{Error, Result};
use crate::network::SensorNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementKind {
    /// Half squared-range differences with a constant output matrix.
    Linear,
    /// Range differences, Jacobian taken at the true target position.
    LinearizedExact,
    /// Range differences, Jacobian taken at each sensor's own estimate.
    LinearizedEstimated,
    /// Raw range differences (measurement only).
    Nonlinear,
}

impl MeasurementKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::LinearizedExact => "linearized-exact",
            Self::LinearizedEstimated => "linearized-estimated",
            Self::Nonlinear => "nonlinear",
        }
    }

    pub fn is_linear(self) -> bool {
        self == Self::Linear
    }
}

/// Where measurement noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// `y_i = h_i(x) + ν_i`, `ν_i ~ N(0, σ² I)`.
    #[default]
    OutputAdditive,
    /// Each sensor's range (`c · TOA`) carries `N(0, σ²)` noise before the
    /// differences are formed.
    ToaNoise,
}

pub fn toa(target: &Vector3<f64>, sensor: &Vector3<f64>, speed: f64) -> f64 {
    (target - sensor).norm() / speed
}

pub fn tdoa_nonlinear(p: &Vector3<f64>, network: &SensorNetwork, i: usize) -> DVector<f64> {
    let di = (p - network.position(i)).norm();
    let nb = network.measurement_neighbors(i);
    DVector::from_iterator(nb.len(), nb.iter().map(|&j| di - (p - network.position(j)).norm()))
}

/// `½(d_i² − d_j²)` for each measurement neighbour.
pub fn tdoa_linear(p: &Vector3<f64>, network: &SensorNetwork, i: usize) -> DVector<f64> {
    let di2 = (p - network.position(i)).norm_squared();
    let nb = network.measurement_neighbors(i);
    DVector::from_iterator(nb.len(), nb.iter().map(|&j| 0.5 * (di2 - (p - network.position(j)).norm_squared())))
}

/// Row `r`: `unit(p_ref − p_i) − unit(p_ref − p_j)` in the position
/// columns, zero elsewhere.
pub fn jacobian_linearized(p_ref: &Vector3<f64>, network: &SensorNetwork, i: usize, state_dim: usize) -> Result<DMatrix<f64>> {
    let unit = |s: usize| -> Result<Vector3<f64>> {
        let d = p_ref - network.position(s);
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::Singular(format!("reference point coincides with sensor {s}")));
        }
        Ok(d / r)
    };
    let nb = network.measurement_neighbors(i);
    let ui = unit(i)?;
    let mut h = DMatrix::zeros(nb.len(), state_dim);
    for (r, &j) in nb.iter().enumerate() {
        let g = ui - unit(j)?;
        for a in 0..3 {
            h[(r, a)] = g[a];
        }
    }
    Ok(h)
}

/// Constant output matrix and bias of the linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOutput {
    pub h: DMatrix<f64>,
    pub bias: DVector<f64>,
}

pub fn linear_h(network: &SensorNetwork, i: usize, state_dim: usize) -> Result<LinearOutput> {
    let nb = network.measurement_neighbors(i);
    if nb.is_empty() {
        return Err(Error::InvalidNetwork(format!("sensor {i} has no measurement neighbours")));
    }
    let pi = network.position(i);
    let mut h = DMatrix::zeros(nb.len(), state_dim);
    let mut bias = DVector::zeros(nb.len());
    for (r, &j) in nb.iter().enumerate() {
        let pj = network.position(j);
        let rel = pj - pi;
        for a in 0..3 {
            h[(r, a)] = rel[a];
        }
        bias[r] = -0.5 * (pj.norm_squared() - pi.norm_squared());
    }
    Ok(LinearOutput { h, bias })
}

pub fn debias(y: &DVector<f64>, bias: &DVector<f64>) -> DVector<f64> {
    y - bias
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultProfile {
    None,
    /// `f(k) = magnitude` for `k >= onset`.
    #[default]
    ConstantOffset,
    /// `f(k) = magnitude * (k - onset + 1)` for `k >= onset`.
    Ramp,
}

/// Additive measurement fault on one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub sensor: usize,
    pub onset: usize,
    #[serde(default)]
    pub profile: FaultProfile,
    /// Offset, or slope per step for a ramp.
    pub magnitude: f64,
    /// Affected output components; empty means all.
    #[serde(default)]
    pub components: Vec<usize>,
}

impl FaultSpec {
    pub fn constant(sensor: usize, onset: usize, magnitude: f64) -> Self {
        Self { sensor, onset, profile: FaultProfile::ConstantOffset, magnitude, components: vec![0] }
    }

    /// Fault vector at step `k` for an output of dimension `dim`.
    pub fn term(&self, k: usize, dim: usize) -> Option<DVector<f64>> {
        if k < self.onset {
            return None;
        }
        let v = match self.profile {
            FaultProfile::None => return None,
            FaultProfile::ConstantOffset => self.magnitude,
            FaultProfile::Ramp => self.magnitude * (k - self.onset + 1) as f64,
        };
        let mut f = DVector::zeros(dim);
        if self.components.is_empty() {
            f.fill(v);
        } else {
            for &c in self.components.iter().filter(|&&c| c < dim) {
                f[c] = v;
            }
        }
        Some(f)
    }
}

/// Measurements of all sensors at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub k: usize,
    /// `y_i` for active sensors (raw, not debiased).
    pub outputs: Vec<Option<DVector<f64>>>,
    /// Noisy time of arrival per sensor (seconds).
    pub toa: Vec<f64>,
    /// Output noise `ν_i` actually added (output-additive mode).
    pub noise: Vec<Option<DVector<f64>>>,
    pub faulty: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    kind: MeasurementKind,
    noise_std: f64,
    speed: f64,
    noise_mode: NoiseMode,
    state_dim: usize,
    outputs: Vec<Option<LinearOutput>>,
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

impl MeasurementModel {
    pub fn new(kind: MeasurementKind, network: &SensorNetwork, noise_std: f64, speed: f64, noise_mode: NoiseMode, state_dim: usize) -> Result<Self> {
        if !(noise_std >= 0.0) {
            return Err(Error::InvalidParameter(format!("measurement noise std must be non-negative, got {noise_std}")));
        }
        if !(speed > 0.0) {
            return Err(Error::InvalidParameter(format!("propagation speed must be positive, got {speed}")));
        }
        let outputs = (0..network.len())
            .map(|i| {
                if kind.is_linear() && network.is_active(i) && !network.measurement_neighbors(i).is_empty() {
                    linear_h(network, i, state_dim).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { kind, noise_std, speed, noise_mode, state_dim, outputs })
    }

    /// Rebuilds the constant outputs after the network changed.
    pub fn rebuild(&self, network: &SensorNetwork) -> Result<Self> {
        Self::new(self.kind, network, self.noise_std, self.speed, self.noise_mode, self.state_dim)
    }

    pub fn kind(&self) -> MeasurementKind {
        self.kind
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Constant `(H_i, bias_i)` of the linear model.
    pub fn output(&self, i: usize) -> Option<&LinearOutput> {
        self.outputs.get(i).and_then(|o| o.as_ref())
    }

    /// `R_i = σ² I` over sensor `i`'s output dimension.
    pub fn noise_cov(&self, network: &SensorNetwork, i: usize) -> DMatrix<f64> {
        let m = network.measurement_neighbors(i).len();
        DMatrix::identity(m, m) * (self.noise_std * self.noise_std)
    }

    /// Noise-free output `h_i(p)` in this model's form.
    pub fn ideal(&self, p: &Vector3<f64>, network: &SensorNetwork, i: usize) -> DVector<f64> {
        if self.kind.is_linear() {
            tdoa_linear(p, network, i)
        } else {
            tdoa_nonlinear(p, network, i)
        }
    }

    /// Output matrix used by the filter: constant `H_i` for the linear
    /// model, the Jacobian at `reference` otherwise.
    pub fn output_matrix(&self, network: &SensorNetwork, i: usize, reference: &Vector3<f64>) -> Result<DMatrix<f64>> {
        match self.output(i) {
            Some(o) => Ok(o.h.clone()),
            None if self.kind.is_linear() => Ok(DMatrix::zeros(0, self.state_dim)),
            None => jacobian_linearized(reference, network, i, self.state_dim),
        }
    }

    /// Innovation `y_i − ŷ_i` for a state estimate: `ỹ_i − H_i x̂` for the
    /// linear model, `y_i − h_i(p̂)` for range differences.
    pub fn innovation(&self, y: &DVector<f64>, x_hat: &DVector<f64>, network: &SensorNetwork, i: usize) -> DVector<f64> {
        match self.output(i) {
            Some(o) => debias(y, &o.bias) - &o.h * x_hat,
            None => y - self.ideal(&position_of(x_hat), network, i),
        }
    }

    /// Innovation of the range-difference model linearized about
    /// `reference`: `y_i − h_i(p_r) − H_i(p_r)(p̂ − p_r)`. With
    /// `reference = p̂` this is [`Self::innovation`]. The linear model
    /// ignores `reference`.
    pub fn innovation_about(&self, y: &DVector<f64>, x_hat: &DVector<f64>, network: &SensorNetwork, i: usize, reference: &Vector3<f64>) -> Result<DVector<f64>> {
        if self.output(i).is_some() {
            return Ok(self.innovation(y, x_hat, network, i));
        }
        let jac = jacobian_linearized(reference, network, i, self.state_dim)?;
        let mut offset = DVector::zeros(self.state_dim);
        offset.rows_mut(0, 3).copy_from(&(position_of(x_hat) - reference));
        Ok(y - self.ideal(reference, network, i) - jac * offset)
    }

    /// One sensor's output `y_i = h_i(x) + ν_i + f_i(k)`.
    pub fn measure<R: Rng + ?Sized>(&self, x_true: &DVector<f64>, network: &SensorNetwork, i: usize, k: usize, rng: &mut R, fault: Option<&FaultSpec>) -> DVector<f64> {
        let p = position_of(x_true);
        let nb = network.measurement_neighbors(i);
        let mut y = match self.noise_mode {
            NoiseMode::OutputAdditive => self.ideal(&p, network, i) + normal_vec(rng, nb.len(), self.noise_std),
            NoiseMode::ToaNoise => {
                let di = (p - network.position(i)).norm() + self.noise_std * rng.sample::<f64, _>(StandardNormal);
                let dj: Vec<f64> = nb.iter().map(|&j| (p - network.position(j)).norm() + self.noise_std * rng.sample::<f64, _>(StandardNormal)).collect();
                self.combine_ranges(di, &dj)
            }
        };
        if let Some(f) = fault.filter(|f| f.sensor == i).and_then(|f| f.term(k, y.len())) {
            y += f;
        }
        y
    }

    fn combine_ranges(&self, di: f64, dj: &[f64]) -> DVector<f64> {
        if self.kind.is_linear() {
            DVector::from_iterator(dj.len(), dj.iter().map(|d| 0.5 * (di * di - d * d)))
        } else {
            DVector::from_iterator(dj.len(), dj.iter().map(|d| di - d))
        }
    }

    /// Outputs of every active sensor at step `k`. `rngs[i]` is sensor `i`'s
    /// private noise stream; in TOA-noise mode each sensor's range noise is
    /// drawn once and shared by every TDOA that uses it.
    pub fn frame<R: Rng>(&self, x_true: &DVector<f64>, network: &SensorNetwork, k: usize, rngs: &mut [R], faults: &[FaultSpec]) -> MeasurementFrame {
        let n = network.len();
        let p = position_of(x_true);
        let mut outputs = vec![None; n];
        let mut noise = vec![None; n];
        let mut faulty = vec![false; n];
        let mut toa_vals: Vec<f64> = (0..n).map(|i| toa(&p, network.position(i), self.speed)).collect();

        if self.noise_mode == NoiseMode::ToaNoise {
            for i in network.active_indices() {
                toa_vals[i] += self.noise_std * rngs[i].sample::<f64, _>(StandardNormal) / self.speed;
            }
        }
        for i in network.active_indices() {
            let nb = network.measurement_neighbors(i);
            let mut y = match self.noise_mode {
                NoiseMode::OutputAdditive => {
                    let nu = normal_vec(&mut rngs[i], nb.len(), self.noise_std);
                    let y = self.ideal(&p, network, i) + &nu;
                    noise[i] = Some(nu);
                    y
                }
                NoiseMode::ToaNoise => {
                    let dj: Vec<f64> = nb.iter().map(|&j| toa_vals[j] * self.speed).collect();
                    self.combine_ranges(toa_vals[i] * self.speed, &dj)
                }
            };
            for f in faults.iter().filter(|f| f.sensor == i) {
                if let Some(t) = f.term(k, y.len()) {
                    y += t;
                    faulty[i] = true;
                }
            }
            outputs[i] = Some(y);
        }
        MeasurementFrame { k, outputs, toa: toa_vals, noise, faulty }
    }
}
