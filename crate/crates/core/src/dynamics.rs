//! Target motion: the nearly-constant-velocity (NCV) model
//! `x(k+1) = F x(k) + G w(k)` with `w ~ N(0, Q)`.
//!
//! State layout is `(px, py, pz, vx, vy, vz)`. Other linear models (for
//! example nearly-constant acceleration) can be supplied through
//! [`TargetModel::custom`] as long as the first three state entries are the
//! position.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    period: f64,
    transition: DMatrix<f64>,
    input: DMatrix<f64>,
    process_cov: DMatrix<f64>,
    // L with L Lᵀ = Q, used to colour standard normal draws
    noise_factor: DMatrix<f64>,
}

impl TargetModel {
    /// NCV model with `Q = q_std² I₃`.
    pub fn ncv(period: f64, q_std: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidModel(format!("sampling period must be positive, got {period}")));
        }
        if !(q_std >= 0.0) || !q_std.is_finite() {
            return Err(Error::InvalidModel(format!("process noise std must be non-negative, got {q_std}")));
        }
        let t = period;
        let mut f = DMatrix::identity(6, 6);
        let mut g = DMatrix::zeros(6, 3);
        for a in 0..3 {
            f[(a, a + 3)] = t;
            g[(a, a)] = t * t / 2.0;
            g[(a + 3, a)] = t;
        }
        let q = DMatrix::identity(3, 3) * (q_std * q_std);
        Self::custom(period, f, g, q)
    }

    /// Arbitrary linear model with compatible shapes.
    pub fn custom(period: f64, transition: DMatrix<f64>, input: DMatrix<f64>, process_cov: DMatrix<f64>) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidModel(format!("sampling period must be positive, got {period}")));
        }
        let n = transition.nrows();
        if !transition.is_square() || n < 3 {
            return Err(Error::InvalidModel("transition must be square with at least 3 states".into()));
        }
        if input.nrows() != n {
            return Err(Error::InvalidModel(format!("input has {} rows, expected {n}", input.nrows())));
        }
        let m = input.ncols();
        if process_cov.shape() != (m, m) {
            return Err(Error::InvalidModel(format!("process covariance must be {m}x{m}")));
        }
        let scale = process_cov.amax().max(1.0);
        if (&process_cov - process_cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidModel("process covariance is not symmetric".into()));
        }
        if linalg::min_symmetric_eigenvalue(&process_cov) < -1e-12 * scale {
            return Err(Error::InvalidModel("process covariance is not positive semi-definite".into()));
        }
        let noise_factor = linalg::psd_factor(&process_cov);
        Ok(Self { period, transition, input, process_cov, noise_factor })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn input(&self) -> &DMatrix<f64> {
        &self.input
    }

    pub fn process_cov(&self) -> &DMatrix<f64> {
        &self.process_cov
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.noise_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.noise_factor * z
    }

    /// `F x + G w`.
    pub fn propagate(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.transition * x + &self.input * w
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &TargetState, rng: &mut R) -> TargetState {
        let w = self.sample_noise(rng);
        TargetState { x: self.propagate(&state.x, &w), k: state.k + 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub x: DVector<f64>,
    pub k: usize,
}

impl TargetState {
    pub fn new(x: DVector<f64>) -> Self {
        Self { x, k: 0 }
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(x))
    }

    pub fn position(&self) -> nalgebra::Vector3<f64> {
        position_of(&self.x)
    }
}

/// First three entries of a state vector.
pub fn position_of(x: &DVector<f64>) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(x[0], x[1], x[2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<TargetState>,
}

impl Trajectory {
    pub fn states(&self) -> &[TargetState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn simulate_trajectory<R: Rng + ?Sized>(model: &TargetModel, x0: TargetState, steps: usize, rng: &mut R) -> Trajectory {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0);
    for _ in 0..steps {
        let next = model.step(states.last().unwrap(), rng);
        states.push(next);
    }
    Trajectory { states }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use approx::assert_relative_eq;

    #[test]
    fn ncv_block_structure() {
        let m = TargetModel::ncv(0.1, 0.0).unwrap();
        assert_relative_eq!(m.transition()[(0, 3)], 0.1);
        assert_relative_eq!(m.input()[(0, 0)], 0.005, epsilon = 1e-15);
        assert_relative_eq!(m.input()[(3, 0)], 0.1);

        let m = TargetModel::ncv(1.0, 0.0).unwrap();
        let mut expected = DMatrix::identity(6, 6);
        for a in 0..3 {
            expected[(a, a + 3)] = 1.0;
        }
        assert_eq!(m.transition(), &expected);

        let m = TargetModel::ncv(0.5, 2.0).unwrap();
        for r in 0..6 {
            for c in 0..3 {
                let want = match (r, c) {
                    (r, c) if r == c => 0.125,
                    (r, c) if r == c + 3 => 0.5,
                    _ => 0.0,
                };
                assert_eq!(m.input()[(r, c)], want);
            }
        }
    }

    #[test]
    fn rejects_bad_period() {
        assert!(TargetModel::ncv(0.0, 1.0).is_err());
        assert!(TargetModel::ncv(-0.1, 1.0).is_err());
        assert!(TargetModel::ncv(0.1, -1.0).is_err());
    }

    #[test]
    fn noise_free_steps() {
        let m = TargetModel::ncv(0.1, 0.0).unwrap();
        let mut rng = stream_rng(0, 0);
        let s = m.step(&TargetState::from_slice(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]), &mut rng);
        assert_relative_eq!(s.x, DVector::from_vec(vec![0.1, 0.0, 0.0, 1.0, 0.0, 0.0]), epsilon = 1e-15);
        assert_eq!(s.k, 1);
        let s = m.step(&TargetState::from_slice(&[0.0; 6]), &mut rng);
        assert_eq!(s.x, DVector::zeros(6));
        let s = m.step(&TargetState::from_slice(&[1.0, 2.0, 3.0, -1.0, 0.0, 2.0]), &mut rng);
        assert_relative_eq!(s.x, DVector::from_vec(vec![0.9, 2.0, 3.2, -1.0, 0.0, 2.0]), epsilon = 1e-14);
    }

    #[test]
    fn trajectory_shapes() {
        let m = TargetModel::ncv(0.1, 0.0).unwrap();
        let x0 = TargetState::from_slice(&[1.0, 2.0, 3.0, 0.5, -0.5, 0.25]);
        let mut rng = stream_rng(0, 0);
        let tr = simulate_trajectory(&m, x0.clone(), 0, &mut rng);
        assert_eq!(tr.states(), &[x0.clone()]);
        let tr = simulate_trajectory(&m, x0.clone(), 2, &mut rng);
        let f = m.transition();
        assert_eq!(tr.len(), 3);
        assert_relative_eq!(tr.states()[1].x, f * &x0.x, epsilon = 1e-14);
        assert_relative_eq!(tr.states()[2].x, f * f * &x0.x, epsilon = 1e-14);
        assert_eq!(tr.states()[2].k, 2);
    }

    #[test]
    fn noise_free_closed_form() {
        let m = TargetModel::ncv(0.1, 0.0).unwrap();
        let x0 = TargetState::from_slice(&[1.0, -2.0, 0.5, 0.3, 0.7, -1.1]);
        let tr = simulate_trajectory(&m, x0.clone(), 50, &mut stream_rng(0, 0));
        for s in tr.states() {
            for a in 0..3 {
                let want = x0.x[a] + s.k as f64 * 0.1 * x0.x[a + 3];
                assert_relative_eq!(s.x[a], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let m = TargetModel::ncv(0.1, 0.7).unwrap();
        let x0 = TargetState::from_slice(&[0.0; 6]);
        let a = simulate_trajectory(&m, x0.clone(), 100, &mut stream_rng(11, 2));
        let b = simulate_trajectory(&m, x0, 100, &mut stream_rng(11, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn one_step_covariance_matches_gqg() {
        let m = TargetModel::ncv(0.1, 1.5).unwrap();
        let mut rng = stream_rng(3, 2);
        let trials = 20_000;
        let mut acc = DMatrix::<f64>::zeros(6, 6);
        let x0 = TargetState::from_slice(&[0.0; 6]);
        for _ in 0..trials {
            let x1 = m.step(&x0, &mut rng).x;
            acc += &x1 * x1.transpose();
        }
        let sample = acc / trials as f64;
        let expected = m.input() * m.process_cov() * m.input().transpose();
        let err = linalg::spectral_norm(&(&sample - &expected));
        assert!(err < 0.1 * linalg::spectral_norm(&expected), "err {err}");
    }

    #[test]
    fn custom_model_hook() {
        let t: f64 = 0.2;
        let mut f = DMatrix::identity(9, 9);
        for a in 0..3 {
            f[(a, a + 3)] = t;
            f[(a, a + 6)] = t * t / 2.0;
            f[(a + 3, a + 6)] = t;
        }
        let mut g = DMatrix::zeros(9, 3);
        for a in 0..3 {
            g[(a + 6, a)] = t;
        }
        let m = TargetModel::custom(t, f, g, DMatrix::identity(3, 3)).unwrap();
        assert_eq!(m.state_dim(), 9);
        assert!(TargetModel::custom(t, DMatrix::identity(6, 6), DMatrix::zeros(5, 3), DMatrix::identity(3, 3)).is_err());
        let not_psd = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]));
        assert!(TargetModel::custom(t, DMatrix::identity(6, 6), DMatrix::zeros(6, 3), not_psd).is_err());
    }
}
