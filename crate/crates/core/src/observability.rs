//! The network-lifted error system and distributed observability.
//!
//! Stacking every sensor's error gives the pair `(W ⊗ F, D_H)` with
//! `D_H = diag(H_iᵀ H_i)`. The pair is tested numerically through the
//! observable subspace of `(W ⊗ F, diag(H_i))`, which is the same subspace
//! since `D_H = diag(H_i)ᵀ diag(H_i)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{is_strongly_connected, Adjacency};

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    weights: DMatrix<f64>,
    transition: DMatrix<f64>,
    outputs: Vec<DMatrix<f64>>,
    a_net: DMatrix<f64>,
    d_h: DMatrix<f64>,
    h_stack: DMatrix<f64>,
}

impl LiftedSystem {
    pub fn nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn block(&self) -> usize {
        self.transition.nrows()
    }

    pub fn dim(&self) -> usize {
        self.nodes() * self.block()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// Per-node output matrices `H_i`.
    pub fn outputs(&self) -> &[DMatrix<f64>] {
        &self.outputs
    }

    /// `W ⊗ F`.
    pub fn a_net(&self) -> &DMatrix<f64> {
        &self.a_net
    }

    /// `diag(H_iᵀ H_i)`.
    pub fn d_h(&self) -> &DMatrix<f64> {
        &self.d_h
    }

    /// `diag(H_i)`.
    pub fn h_stack(&self) -> &DMatrix<f64> {
        &self.h_stack
    }

    /// `H_iᵀ H_i`.
    pub fn info_block(&self, i: usize) -> DMatrix<f64> {
        let h = &self.outputs[i];
        h.transpose() * h
    }
}

pub fn build_lifted(weights: &DMatrix<f64>, transition: &DMatrix<f64>, outputs: &[DMatrix<f64>]) -> Result<LiftedSystem> {
    let n = weights.nrows();
    if !weights.is_square() {
        return Err(Error::Dimension("weight matrix must be square".into()));
    }
    if !transition.is_square() {
        return Err(Error::Dimension("transition must be square".into()));
    }
    if outputs.len() != n {
        return Err(Error::Dimension(format!("{} output matrices for {n} nodes", outputs.len())));
    }
    let s = transition.nrows();
    if let Some((i, h)) = outputs.iter().enumerate().find(|(_, h)| h.ncols() != s) {
        return Err(Error::Dimension(format!("H_{i} has {} columns, state has {s}", h.ncols())));
    }
    let a_net = linalg::kron(weights, transition);
    let infos: Vec<DMatrix<f64>> = outputs.iter().map(|h| h.transpose() * h).collect();
    let d_h = linalg::block_diag(&infos);
    let h_stack = linalg::block_diag(outputs);
    Ok(LiftedSystem { weights: weights.clone(), transition: transition.clone(), outputs: outputs.to_vec(), a_net, d_h, h_stack })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservabilityReport {
    pub rank: usize,
    pub dim: usize,
}

impl ObservabilityReport {
    pub fn observable(&self) -> bool {
        self.rank == self.dim
    }
}

fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let r = top.nrows();
    DMatrix::from_fn(r + bottom.nrows(), top.ncols(), |i, j| if i < r { top[(i, j)] } else { bottom[(i - r, j)] })
}

/// Replaces a tall stack by the `R` factor of its QR decomposition, which
/// has the same singular values and at most `ncols` rows.
fn compress(m: DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() <= m.ncols() {
        return m;
    }
    m.qr().r()
}

/// Rank of the observability matrix `[H; H A; ...; H A^{dim-1}]` of
/// `(W ⊗ F, diag(H_i))`.
///
/// Singular values at or below `dim * eps * sigma_max` count as zero. The
/// stack is row-compressed with QR every few powers, which leaves its
/// singular values unchanged while bounding memory.
pub fn distributed_observability(lifted: &LiftedSystem) -> ObservabilityReport {
    let dim = lifted.dim();
    let a = lifted.a_net();
    let mut power = lifted.h_stack().clone();
    let mut stack = power.clone();
    let every = lifted.block().max(1);
    for k in 1..dim {
        power = &power * a;
        stack = vstack(&stack, &power);
        if k % every == 0 {
            stack = compress(stack);
        }
    }
    if stack.nrows() == 0 {
        return ObservabilityReport { rank: 0, dim };
    }
    let sv = stack.svd(false, false).singular_values;
    let smax = sv.max();
    let tol = dim as f64 * f64::EPSILON * smax;
    let rank = if smax > 0.0 { sv.iter().filter(|&&v| v > tol).count() } else { 0 };
    ObservabilityReport { rank, dim }
}

pub fn is_distributed_observable(lifted: &LiftedSystem) -> bool {
    distributed_observability(lifted).observable()
}

/// Irreducibility of `W`, i.e. strong connectivity of its support graph.
pub fn is_irreducible(weights: &DMatrix<f64>) -> bool {
    weights.is_square() && weights.nrows() > 0 && is_strongly_connected(&Adjacency::from_support(weights))
}
