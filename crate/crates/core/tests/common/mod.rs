#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tdoa_track::dynamics::TargetModel;
use tdoa_track::measurement::{linear_h, MeasurementKind, MeasurementModel, NoiseMode};
use tdoa_track::network::{
    build_cycle, build_kappa_connected, is_strongly_connected, make_weights, place_sensors, Adjacency, SensorNetwork, WeightMatrix,
    WeightScheme,
};
use tdoa_track::observability::{build_lifted, LiftedSystem};

/// Random digraph with self-loops: a cycle through a random permutation
/// plus each remaining link with probability `p`. Always strongly connected.
pub fn random_sc(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Adjacency {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut a = Adjacency::self_loops(n);
    for k in 0..n {
        a.set(order[(k + 1) % n], order[k], true);
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                a.set(i, j, true);
            }
        }
    }
    a
}

/// One of: directed cycle, κ-connected circulant, random strongly connected.
pub fn random_topology(n: usize, rng: &mut ChaCha8Rng) -> Adjacency {
    match rng.random_range(0..3) {
        0 => build_cycle(n).unwrap(),
        1 if n >= 3 => build_kappa_connected(n, rng.random_range(1..n - 1).min(3)).unwrap(),
        _ => random_sc(n, 0.2, rng),
    }
}

/// Random digraph with self-loops that is not strongly connected, where
/// every node still hears at least one other.
pub fn random_not_sc(n: usize, rng: &mut ChaCha8Rng) -> Adjacency {
    loop {
        let mut a = Adjacency::self_loops(n);
        let p = rng.random_range(0.1..0.6);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < p {
                    a.set(i, j, true);
                }
            }
        }
        if !is_strongly_connected(&a) && (0..n).all(|i| !a.in_neighbors(i).is_empty()) {
            return a;
        }
    }
}

pub fn network(adj: Adjacency, rng: &mut ChaCha8Rng) -> SensorNetwork {
    let pos = place_sensors(adj.len(), 0.0, 10.0, rng).unwrap();
    SensorNetwork::new(pos, adj).unwrap()
}

pub fn weights(net: &SensorNetwork, rng: &mut ChaCha8Rng) -> WeightMatrix {
    make_weights(net.adjacency(), WeightScheme::RandomStochastic, rng).unwrap()
}

pub fn linear_model(net: &SensorNetwork, sigma: f64) -> MeasurementModel {
    MeasurementModel::new(MeasurementKind::Linear, net, sigma, 1.0, NoiseMode::OutputAdditive, 6).unwrap()
}

pub fn lifted(net: &SensorNetwork, w: &WeightMatrix, model: &TargetModel) -> LiftedSystem {
    let hs: Vec<DMatrix<f64>> = (0..net.len()).map(|i| linear_h(net, i, 6).unwrap().h).collect();
    build_lifted(w.matrix(), model.transition(), &hs).unwrap()
}

pub fn gauss_vec(n: usize, std: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    use rand_distr::{Distribution, Normal};
    let d = Normal::new(0.0, std).unwrap();
    DVector::from_fn(n, |_, _| d.sample(rng))
}

/// Least-squares slope of `ys` against their index.
pub fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Slope of `log ‖Aᵏ e₀‖` over `steps` noise-free steps, renormalising
/// each step so long runs neither underflow nor overflow.
pub fn decay_slope(a: &DMatrix<f64>, e0: &DVector<f64>, steps: usize) -> f64 {
    let mut e = e0.clone();
    let mut log_norm = e.norm().ln();
    let mut logs = vec![log_norm];
    for _ in 0..steps {
        e = a * &e / e.norm();
        log_norm += e.norm().ln();
        logs.push(log_norm);
    }
    slope(&logs)
}
