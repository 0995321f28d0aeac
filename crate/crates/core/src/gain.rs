//! Block-diagonal feedback gain for the collective error dynamics
//! `e(k) = (W⊗F − K D_H (W⊗F)) e(k−1) + η(k)`.
//!
//! The search works in two stages:
//!
//! 1. A network-average surrogate. With `π` the stationary distribution of
//!    `W`, the consensus mode of the closed loop is driven by
//!    `S̄ = Σ π_i H_iᵀH_i`. A steady-state Kalman gain `L` is computed for
//!    `(F, S̄^{1/2})` and every sensor gets `K_i = α L S̄^{+1/2}`, so that
//!    `Σ π_i K_i H_iᵀH_i = α L S̄^{1/2}`. A grid over `α` and the surrogate's
//!    process weight is evaluated on the exact closed loop, followed by a
//!    log-space pattern search on the two scalars.
//! 2. If the bound is still not met, a coordinate search over the
//!    individual block entries that act on measured directions.
//!
//! Every candidate is scored with the exact spectral radius of the full
//! closed-loop matrix.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::observability::{distributed_observability, LiftedSystem};

pub use crate::linalg::spectral_radius;

pub const DEFAULT_RHO_BOUND: f64 = 0.99;

/// Designs closer than this to the bound are reported infeasible.
pub const STRICT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    pub rho_bound: f64,
    /// Maximum number of closed-loop evaluations.
    pub budget: usize,
    /// Shape of the surrogate filter's process noise (for example `G Gᵀ`);
    /// the identity when absent.
    pub process_shape: Option<DMatrix<f64>>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { rho_bound: DEFAULT_RHO_BOUND, budget: 3000, process_shape: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainDesign {
    blocks: Vec<DMatrix<f64>>,
    achieved_rho: f64,
    rho_bound: f64,
    evaluations: usize,
    feasible: bool,
}

impl GainDesign {
    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn achieved_rho(&self) -> f64 {
        self.achieved_rho
    }

    pub fn rho_bound(&self) -> f64 {
        self.rho_bound
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn is_feasible(&self) -> bool {
        self.feasible
    }

    pub fn require_feasible(self) -> Result<Self> {
        if self.feasible {
            Ok(self)
        } else {
            Err(Error::GainInfeasible { best_rho: self.achieved_rho, rho_bound: self.rho_bound })
        }
    }

    /// `diag(K_i)`.
    pub fn block_diag(&self) -> DMatrix<f64> {
        linalg::block_diag(&self.blocks)
    }

    /// Wraps externally supplied blocks (for example an imported design),
    /// scoring them against `lifted`.
    pub fn from_blocks(lifted: &LiftedSystem, blocks: Vec<DMatrix<f64>>, rho_bound: f64) -> Result<Self> {
        let check = verify_gain(lifted, &blocks, rho_bound)?;
        Ok(Self { blocks, achieved_rho: check.rho, rho_bound, evaluations: 1, feasible: check.stable })
    }
}

/// `W⊗F − diag(K_i) D_H (W⊗F)`, assembled block by block.
pub fn closed_loop(lifted: &LiftedSystem, blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let n = lifted.nodes();
    let s = lifted.block();
    if blocks.len() != n {
        return Err(Error::Dimension(format!("{} gain blocks for {n} nodes", blocks.len())));
    }
    if let Some(b) = blocks.iter().find(|b| b.shape() != (s, s)) {
        return Err(Error::Dimension(format!("gain block is {:?}, expected {s}x{s}", b.shape())));
    }
    let f = lifted.transition();
    let w = lifted.weights();
    let mut out = DMatrix::zeros(n * s, n * s);
    for i in 0..n {
        let m = (DMatrix::identity(s, s) - &blocks[i] * lifted.info_block(i)) * f;
        for j in 0..n {
            let wij = w[(i, j)];
            if wij != 0.0 {
                out.view_mut((i * s, j * s), (s, s)).copy_from(&(&m * wij));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCheck {
    pub stable: bool,
    pub rho: f64,
}

/// Strict check `ρ(closed loop) < rho_bound − STRICT_MARGIN`.
pub fn verify_gain(lifted: &LiftedSystem, blocks: &[DMatrix<f64>], rho_bound: f64) -> Result<GainCheck> {
    let rho = spectral_radius(&closed_loop(lifted, blocks)?);
    Ok(GainCheck { stable: rho < rho_bound - STRICT_MARGIN, rho })
}

/// Left Perron vector of a row-stochastic irreducible `W` (`πᵀW = πᵀ`,
/// `Σπ = 1`).
pub fn stationary_distribution(w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = w.nrows();
    let mut a = w.transpose() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or_else(|| Error::Infeasible("weight matrix has no unique stationary distribution".into()))?;
    if pi.iter().any(|&v| v < -1e-12) {
        return Err(Error::Infeasible("stationary distribution has negative entries".into()));
    }
    Ok(pi)
}

/// Steady-state update gain `L` of a Kalman filter for `x' = F x + w`,
/// `z = C x + v` with `w ~ N(0, Q)` and `v ~ N(0, I)`.
pub fn steady_state_gain(f: &DMatrix<f64>, c: &DMatrix<f64>, qm: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = f.nrows();
    let m = c.nrows();
    // Structured doubling on the dual control problem (A = Fᵀ, B = Cᵀ, R = I).
    let eye = DMatrix::<f64>::identity(s, s);
    let mut a = f.transpose();
    let mut g = c.transpose() * c;
    let mut h = qm.clone();
    let mut converged = false;
    for _ in 0..200 {
        let w = (&eye + &g * &h)
            .try_inverse()
            .ok_or_else(|| Error::Infeasible("singular doubling step".into()))?;
        let a_next = &a * &w * &a;
        let g_next = &g + &a * &w * &g * a.transpose();
        let h_next = &h + a.transpose() * &h * &w * &a;
        let delta = (&h_next - &h).amax();
        a = a_next;
        g = g_next;
        h = h_next;
        if !h.iter().all(|v| v.is_finite()) {
            break;
        }
        if delta <= 1e-14 * h.amax().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Infeasible("Riccati iteration did not converge".into()));
    }
    let p = (&h + h.transpose()) * 0.5;
    let innov = c * &p * c.transpose() + DMatrix::identity(m, m);
    let inv = innov.try_inverse().ok_or_else(|| Error::Infeasible("singular innovation covariance".into()))?;
    Ok(&p * c.transpose() * inv)
}

/// Common per-sensor gain `K_c` with `K_c S̄ = L S̄^{1/2}`.
fn surrogate_block(lifted: &LiftedSystem, pi: &DVector<f64>, shape: &DMatrix<f64>, q: f64) -> Result<DMatrix<f64>> {
    let s = lifted.block();
    let mut sbar = DMatrix::zeros(s, s);
    for i in 0..lifted.nodes() {
        sbar += lifted.info_block(i) * pi[i];
    }
    let c = linalg::psd_sqrt(&sbar);
    let l = steady_state_gain(lifted.transition(), &c, &(shape * q))?;
    Ok(l * linalg::psd_pinv(&c))
}

struct Search<'a> {
    lifted: &'a LiftedSystem,
    evaluations: usize,
    budget: usize,
}

impl Search<'_> {
    fn score(&self, blocks: &[DMatrix<f64>]) -> f64 {
        closed_loop(self.lifted, blocks).map(|m| spectral_radius(&m)).unwrap_or(f64::INFINITY)
    }

    fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.evaluations)
    }

    /// Scores candidates in parallel; returns the index of the best one
    /// (lowest index on ties).
    fn best_of(&mut self, candidates: &[Vec<DMatrix<f64>>]) -> Option<(usize, f64)> {
        let take = candidates.len().min(self.remaining());
        self.evaluations += take;
        let scores: Vec<f64> = candidates[..take].par_iter().map(|c| self.score(c)).collect();
        scores.into_iter().enumerate().fold(None, |best, (i, r)| match best {
            Some((_, br)) if br <= r => best,
            _ => Some((i, r)),
        })
    }
}

pub fn design_gain(lifted: &LiftedSystem, options: DesignOptions) -> Result<GainDesign> {
    let bound = options.rho_bound;
    if !(bound > 0.0 && bound < 1.0) {
        return Err(Error::InvalidParameter(format!("rho bound must lie in (0, 1), got {bound}")));
    }
    let report = distributed_observability(lifted);
    if !report.observable() {
        return Err(Error::NotObservable { rank: report.rank, dim: report.dim });
    }
    let n = lifted.nodes();
    let target = bound - STRICT_MARGIN;
    let pi = stationary_distribution(lifted.weights())?;
    let s = lifted.block();
    let shape = match &options.process_shape {
        Some(m) if m.shape() == (s, s) => m.clone(),
        Some(m) => return Err(Error::Dimension(format!("process shape is {:?}, state has {s}", m.shape()))),
        None => DMatrix::identity(s, s),
    };
    let mut search = Search { lifted, evaluations: 0, budget: options.budget.max(1) };

    // stage 1: surrogate grid
    let qs: Vec<f64> = (-4..=1).map(|e| 10f64.powi(e)).collect();
    let mut surrogates = Vec::new();
    for &q in &qs {
        surrogates.push(surrogate_block(lifted, &pi, &shape, q)?);
    }
    let alphas: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
    let mut grid = Vec::new();
    let mut params = Vec::new();
    for (qi, base) in surrogates.iter().enumerate() {
        for &a in &alphas {
            grid.push(vec![base * a; n]);
            params.push((a.ln(), qs[qi].ln()));
        }
    }
    let (idx, mut best_rho) = search.best_of(&grid).expect("non-empty grid");
    let mut best = grid.swap_remove(idx);
    let (mut la, mut lq) = params[idx];

    // log-space pattern search on (alpha, q)
    let mut step = 1.0;
    while best_rho >= target && step > 0.02 && search.remaining() > 0 {
        let moves = [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)];
        let mut cands = Vec::new();
        for (da, dq) in moves {
            let block = surrogate_block(lifted, &pi, &shape, (lq + dq).exp())?;
            cands.push(vec![block * (la + da).exp(); n]);
        }
        match search.best_of(&cands) {
            Some((k, r)) if r < best_rho => {
                best_rho = r;
                best = cands.swap_remove(k);
                la += moves[k].0;
                lq += moves[k].1;
            }
            _ => step *= 0.5,
        }
    }

    // stage 2: coordinate search over entries acting on measured directions
    if best_rho >= target {
        let measured: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let info = lifted.info_block(i);
                (0..s).filter(|&c| info.column(c).amax() > 0.0).collect()
            })
            .collect();
        let mut delta = best.iter().map(|b| b.amax()).fold(0.0, f64::max).max(1e-3) * 0.25;
        while best_rho >= target && delta > 1e-9 && search.remaining() > 0 {
            let mut improved = false;
            'sweep: for i in 0..n {
                for &c in &measured[i] {
                    for r in 0..s {
                        if best_rho < target || search.remaining() == 0 {
                            break 'sweep;
                        }
                        let mut cands = Vec::with_capacity(2);
                        for sign in [1.0, -1.0] {
                            let mut cand = best.clone();
                            cand[i][(r, c)] += sign * delta;
                            cands.push(cand);
                        }
                        if let Some((k, rho)) = search.best_of(&cands) {
                            if rho < best_rho {
                                best_rho = rho;
                                best = cands.swap_remove(k);
                                improved = true;
                            }
                        }
                    }
                }
            }
            if !improved {
                delta *= 0.5;
            }
        }
    }

    Ok(GainDesign { blocks: best, achieved_rho: best_rho, rho_bound: bound, evaluations: search.evaluations, feasible: best_rho < target })
}

/// Writes gains as CSV with header `sensor,row,c0..c{s-1}`, one row per
/// block row, blocks stacked in sensor order.
pub fn write_gains_csv(blocks: &[DMatrix<f64>], path: &Path) -> Result<()> {
    let s = blocks.first().map_or(0, |b| b.ncols());
    let mut out = fs::File::create(path)?;
    let mut header = String::from("sensor,row");
    for c in 0..s {
        header.push_str(&format!(",c{c}"));
    }
    writeln!(out, "{header}")?;
    for (i, b) in blocks.iter().enumerate() {
        for r in 0..b.nrows() {
            let vals: Vec<String> = b.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{i},{r},{}", vals.join(","))?;
        }
    }
    Ok(())
}

pub fn read_gains_csv(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let width = reader.headers()?.len();
    if width < 3 {
        return Err(Error::Parse(format!("{}: expected columns sensor,row,c0..", path.display())));
    }
    let s = width - 2;
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> { rec[k].trim().parse::<f64>().map_err(|e| Error::Parse(format!("{}: row {}: {e}", path.display(), line + 2))) };
        let (i, r) = (num(0)? as usize, num(1)? as usize);
        if i == blocks.len() {
            blocks.push(DMatrix::zeros(s, s));
        }
        if i + 1 != blocks.len() || r >= s {
            return Err(Error::Parse(format!("{}: row {}: blocks must be stacked in order", path.display(), line + 2)));
        }
        for c in 0..s {
            blocks[i][(r, c)] = num(c + 2)?;
        }
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TargetModel;
    use crate::observability::build_lifted;
    use approx::assert_relative_eq;

    fn f() -> DMatrix<f64> {
        TargetModel::ncv(0.1, 0.0).unwrap().transition().clone()
    }

    fn position_output() -> DMatrix<f64> {
        let mut h = DMatrix::zeros(3, 6);
        h[(0, 0)] = 2.0;
        h[(1, 1)] = 1.0;
        h[(2, 2)] = 1.5;
        h
    }

    #[test]
    fn open_loop_and_single_node_reduction() {
        let h = position_output();
        let l = build_lifted(&DMatrix::from_element(1, 1, 1.0), &f(), &[h.clone()]).unwrap();
        assert_eq!(closed_loop(&l, &[DMatrix::zeros(6, 6)]).unwrap(), f());
        let k = DMatrix::from_fn(6, 6, |r, c| 0.01 * (r as f64 + 1.0) - 0.003 * c as f64);
        let want = f() - &k * h.transpose() * &h * f();
        assert_relative_eq!(closed_loop(&l, &[k]).unwrap(), want, epsilon = 1e-14);
        assert!(closed_loop(&l, &[DMatrix::zeros(5, 5)]).is_err());
    }

    #[test]
    fn closed_loop_block_sparsity() {
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5]);
        let hs = vec![position_output(); 3];
        let l = build_lifted(&w, &f(), &hs).unwrap();
        let ks = vec![DMatrix::from_element(6, 6, 0.01); 3];
        let cl = closed_loop(&l, &ks).unwrap();
        for (i, j) in [(0, 2), (1, 0), (2, 1)] {
            assert_eq!(cl.view((6 * i, 6 * j), (6, 6)).amax(), 0.0);
        }
        assert!(cl.view((0, 6), (6, 6)).amax() > 0.0);
    }

    #[test]
    fn single_node_design_feasible() {
        let l = build_lifted(&DMatrix::from_element(1, 1, 1.0), &f(), &[position_output()]).unwrap();
        let d = design_gain(&l, DesignOptions::default()).unwrap();
        assert!(d.is_feasible());
        assert!(d.achieved_rho() < 0.99);
        let check = verify_gain(&l, d.blocks(), 0.99).unwrap();
        assert!(check.stable);
        assert_relative_eq!(check.rho, d.achieved_rho(), max_relative = 1e-12);
        // the steady-state Kalman gain alone stabilises this single node
        let c = linalg::psd_sqrt(&l.info_block(0));
        let kalman = steady_state_gain(&f(), &c, &DMatrix::identity(6, 6)).unwrap() * linalg::psd_pinv(&c);
        assert!(verify_gain(&l, &[kalman], 0.99).unwrap().stable);
    }

    #[test]
    fn zero_gain_never_verifies() {
        let w = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let l = build_lifted(&w, &f(), &[position_output(), position_output()]).unwrap();
        let check = verify_gain(&l, &[DMatrix::zeros(6, 6), DMatrix::zeros(6, 6)], 0.99).unwrap();
        assert!(!check.stable);
        assert!(check.rho >= 1.0 - 1e-9);
    }

    #[test]
    fn unobservable_rejected() {
        let l = build_lifted(&DMatrix::from_element(1, 1, 1.0), &f(), &[DMatrix::zeros(1, 6)]).unwrap();
        assert!(matches!(design_gain(&l, DesignOptions::default()), Err(Error::NotObservable { .. })));
    }

    #[test]
    fn stationary_distribution_of_cycle() {
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
        let pi = stationary_distribution(&w).unwrap();
        assert_relative_eq!(pi, DVector::from_element(3, 1.0 / 3.0), epsilon = 1e-12);
        assert_relative_eq!((pi.transpose() * &w).transpose(), pi, epsilon = 1e-12);
    }

    #[test]
    fn gains_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let blocks = vec![DMatrix::from_fn(6, 6, |r, c| r as f64 - 0.1 * c as f64), DMatrix::from_element(6, 6, 1e-7)];
        write_gains_csv(&blocks, &path).unwrap();
        assert_eq!(read_gains_csv(&path).unwrap(), blocks);
    }
}
