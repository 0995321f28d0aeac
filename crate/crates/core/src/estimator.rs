//! The single-time-scale distributed filter, the collective error
//! recursion it induces, and a centralized Kalman filter baseline.
//!
//! One step of sensor `i`:
//!
//! ```text
//! prior_i     = Σ_j W_ij F x̂_j(k−1)
//! x̂_i(k)      = prior_i + K_i H_iᵀ (y_i(k) − H_i prior_i)
//! ```
//!
//! Every sensor reads the previous round's posteriors, so the step is
//! synchronous. Stacking the errors `e_i = x − x̂_i` gives
//! `e(k) = (W⊗F − K D_H (W⊗F)) e(k−1) + η(k)` with
//! `η = 1⊗Gw − K(D_H(1⊗Gw) + diag(H_iᵀ) ν)`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{position_of, TargetModel};
use crate::error::{Error, Result};
use crate::measurement::{MeasurementFrame, MeasurementKind, MeasurementModel};
use crate::network::{SensorNetwork, WeightMatrix};
use crate::observability::LiftedSystem;

/// Consensus prior `Σ_j W_ij F x̂_j` over the non-zero entries of row `i`.
pub fn sts_predict(weights: &DMatrix<f64>, transition: &DMatrix<f64>, estimates: &[Option<DVector<f64>>], i: usize) -> DVector<f64> {
    let mut mixed = DVector::zeros(transition.ncols());
    for (j, est) in estimates.iter().enumerate() {
        let wij = weights[(i, j)];
        if wij != 0.0 {
            if let Some(x) = est {
                mixed.axpy(wij, x, 1.0);
            }
        }
    }
    transition * mixed
}

/// `prior + K_i H_iᵀ innovation`.
pub fn sts_update(prior: &DVector<f64>, gain: &DMatrix<f64>, output: &DMatrix<f64>, innovation: &DVector<f64>) -> Result<DVector<f64>> {
    if output.nrows() != innovation.len() || output.ncols() != prior.len() || gain.shape() != (prior.len(), prior.len()) {
        return Err(Error::Dimension(format!(
            "update with K {:?}, H {:?}, innovation {}, state {}",
            gain.shape(),
            output.shape(),
            innovation.len(),
            prior.len()
        )));
    }
    Ok(prior + gain * (output.transpose() * innovation))
}

/// Per-sensor state of the distributed filter.
#[derive(Debug, Clone)]
pub struct FilterBank {
    network: SensorNetwork,
    weights: WeightMatrix,
    transition: DMatrix<f64>,
    measurement: MeasurementModel,
    gains: Vec<DMatrix<f64>>,
    estimates: Vec<Option<DVector<f64>>>,
    priors: Vec<Option<DVector<f64>>>,
    innovations: Vec<Option<DVector<f64>>>,
    k: usize,
}

impl FilterBank {
    pub fn new(
        network: SensorNetwork,
        weights: WeightMatrix,
        transition: DMatrix<f64>,
        measurement: MeasurementModel,
        gains: Vec<DMatrix<f64>>,
        initial: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = network.len();
        let s = transition.nrows();
        if measurement.kind() == MeasurementKind::Nonlinear {
            return Err(Error::InvalidParameter("the filter needs a linear or linearized measurement kind".into()));
        }
        if weights.len() != n || gains.len() != n || initial.len() != n {
            return Err(Error::Dimension(format!(
                "{n} sensors but {} weight rows, {} gains, {} initial estimates",
                weights.len(),
                gains.len(),
                initial.len()
            )));
        }
        if gains.iter().any(|g| g.shape() != (s, s)) || initial.iter().any(|x| x.len() != s) {
            return Err(Error::Dimension(format!("gains must be {s}x{s} and estimates of length {s}")));
        }
        let estimates = initial.into_iter().enumerate().map(|(i, x)| network.is_active(i).then_some(x)).collect();
        Ok(Self { network, weights, transition, measurement, gains, estimates, priors: vec![None; n], innovations: vec![None; n], k: 0 })
    }

    pub fn network(&self) -> &SensorNetwork {
        &self.network
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn gains(&self) -> &[DMatrix<f64>] {
        &self.gains
    }

    pub fn measurement(&self) -> &MeasurementModel {
        &self.measurement
    }

    /// Posterior estimates; `None` for inactive sensors.
    pub fn estimates(&self) -> &[Option<DVector<f64>>] {
        &self.estimates
    }

    pub fn priors(&self) -> &[Option<DVector<f64>>] {
        &self.priors
    }

    /// Innovations of the last step, formed against the priors.
    pub fn innovations(&self) -> &[Option<DVector<f64>>] {
        &self.innovations
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    /// One synchronous predict/update round. `true_position` is only read
    /// by the linearized-exact kind, which linearizes about the truth.
    pub fn step(&mut self, frame: &MeasurementFrame, true_position: &Vector3<f64>) -> Result<()> {
        if frame.k != self.k + 1 {
            return Err(Error::InvalidParameter(format!("frame for step {} after step {}", frame.k, self.k)));
        }
        let n = self.network.len();
        let mut priors = vec![None; n];
        let mut posts = vec![None; n];
        let mut innovations = vec![None; n];
        for i in self.network.active_indices() {
            let prior = sts_predict(self.weights.matrix(), &self.transition, &self.estimates, i);
            let post = match frame.outputs[i].as_ref() {
                Some(y) if y.len() > 0 => {
                    let reference = match self.measurement.kind() {
                        MeasurementKind::LinearizedExact => *true_position,
                        _ => position_of(&prior),
                    };
                    let h = self.measurement.output_matrix(&self.network, i, &reference)?;
                    let innov = self.measurement.innovation_about(y, &prior, &self.network, i, &reference)?;
                    let post = sts_update(&prior, &self.gains[i], &h, &innov)?;
                    innovations[i] = Some(innov);
                    post
                }
                _ => prior.clone(),
            };
            priors[i] = Some(prior);
            posts[i] = Some(post);
        }
        self.estimates = posts;
        self.priors = priors;
        self.innovations = innovations;
        self.k = frame.k;
        Ok(())
    }

    /// Replaces the network after sensors were removed. Gains of the
    /// surviving sensors are kept unless `gains` is given.
    pub fn reconfigure(&mut self, network: SensorNetwork, weights: WeightMatrix, gains: Option<Vec<DMatrix<f64>>>) -> Result<()> {
        if network.len() != self.network.len() || weights.len() != network.len() {
            return Err(Error::Dimension("reconfigured network must keep sensor indexing".into()));
        }
        self.measurement = self.measurement.rebuild(&network)?;
        for i in 0..network.len() {
            if !network.is_active(i) {
                self.estimates[i] = None;
                self.priors[i] = None;
                self.innovations[i] = None;
            }
        }
        if let Some(g) = gains {
            if g.len() != network.len() {
                return Err(Error::Dimension(format!("{} gains for {} sensors", g.len(), network.len())));
            }
            self.gains = g;
        }
        self.network = network;
        self.weights = weights;
        Ok(())
    }

    /// Stacked errors `x − x̂_i` over all sensors (inactive sensors give 0).
    pub fn stacked_errors(&self, x_true: &DVector<f64>) -> DVector<f64> {
        let s = x_true.len();
        let mut e = DVector::zeros(s * self.estimates.len());
        for (i, est) in self.estimates.iter().enumerate() {
            if let Some(x) = est {
                e.rows_mut(i * s, s).copy_from(&(x_true - x));
            }
        }
        e
    }
}

/// Initial estimates `x̂_i(0) ~ N(x(0), σ₀² I)`.
pub fn initial_estimates<R: Rng + ?Sized>(x0: &DVector<f64>, sigma0: f64, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
    (0..n).map(|_| x0 + DVector::from_fn(x0.len(), |_, _| sigma0 * rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Stacked error `e` with the noise aggregate `η` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub e: DVector<f64>,
    pub eta: DVector<f64>,
}

/// One step of the collective error recursion, driven by the process noise
/// `w` and the per-sensor output noise `ν_i`.
pub fn error_step(lifted: &LiftedSystem, gains: &[DMatrix<f64>], input: &DMatrix<f64>, e: &DVector<f64>, w: &DVector<f64>, noise: &[DVector<f64>]) -> Result<ErrorState> {
    let n = lifted.nodes();
    let s = lifted.block();
    if e.len() != n * s || gains.len() != n || noise.len() != n {
        return Err(Error::Dimension(format!("error recursion over {n} nodes of size {s}")));
    }
    let gw = input * w;
    let mut eta = DVector::zeros(n * s);
    for i in 0..n {
        let h = &lifted.outputs()[i];
        if noise[i].len() != h.nrows() {
            return Err(Error::Dimension(format!("sensor {i}: {} noise entries for {} outputs", noise[i].len(), h.nrows())));
        }
        let drive = lifted.info_block(i) * &gw + h.transpose() * &noise[i];
        eta.rows_mut(i * s, s).copy_from(&(&gw - &gains[i] * drive));
    }
    let a = lifted.a_net();
    let mut next = DVector::zeros(n * s);
    let ae = a * e;
    for i in 0..n {
        let blk = ae.rows(i * s, s);
        let fb = &gains[i] * (lifted.info_block(i) * blk);
        next.rows_mut(i * s, s).copy_from(&(blk - fb));
    }
    next += &eta;
    Ok(ErrorState { e: next, eta })
}

/// Centralized Kalman filter over one reference sensor's outputs.
#[derive(Debug, Clone)]
pub struct CentralizedKf {
    transition: DMatrix<f64>,
    process_cov: DMatrix<f64>,
    noise_var: f64,
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl CentralizedKf {
    pub fn new(model: &TargetModel, noise_std: f64, x0: DVector<f64>, p0: DMatrix<f64>) -> Result<Self> {
        if !(noise_std > 0.0) {
            return Err(Error::InvalidParameter(format!("measurement covariance must be positive definite (std {noise_std})")));
        }
        let g = model.input();
        Ok(Self {
            transition: model.transition().clone(),
            process_cov: g * model.process_cov() * g.transpose(),
            noise_var: noise_std * noise_std,
            x: x0,
            p: p0,
        })
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Predict, then update with sensor `reference`'s output `y`. The output
    /// matrix is the linear `H`, or the range-difference model linearized at
    /// the true position (linearized-exact) or at the predicted position
    /// (linearized-estimated).
    pub fn step(&mut self, y: &DVector<f64>, measurement: &MeasurementModel, network: &SensorNetwork, reference: usize, true_position: &Vector3<f64>) -> Result<()> {
        let prior = &self.transition * &self.x;
        let p_prior = &self.transition * &self.p * self.transition.transpose() + &self.process_cov;
        let at = match measurement.kind() {
            MeasurementKind::LinearizedExact => *true_position,
            _ => position_of(&prior),
        };
        let h = measurement.output_matrix(network, reference, &at)?;
        let innov = measurement.innovation_about(y, &prior, network, reference, &at)?;
        let m = h.nrows();
        let r = DMatrix::identity(m, m) * self.noise_var;
        let s = &h * &p_prior * h.transpose() + &r;
        let chol = s.cholesky().ok_or_else(|| Error::Singular("innovation covariance is not positive definite".into()))?;
        let gain = chol.solve(&(&h * &p_prior)).transpose();
        let ikh = DMatrix::identity(prior.len(), prior.len()) - &gain * &h;
        self.x = prior + &gain * innov;
        let p = &ikh * p_prior * ikh.transpose() + &gain * r * gain.transpose();
        self.p = (&p + p.transpose()) * 0.5;
        Ok(())
    }
}
