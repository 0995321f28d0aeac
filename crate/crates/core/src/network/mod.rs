//! Sensor placement, directed communication topology and fusion weights.
//!
//! Adjacency entry `(i, j)` is true when sensor `i` receives from sensor
//! `j`; information therefore flows along the directed edge `j -> i`.
//! Fusion neighbourhoods include the sensor itself (positive diagonal of
//! `W`), measurement neighbourhoods never do.

mod connectivity;
mod io;

pub use connectivity::{edge_connectivity, is_strongly_connected, is_strongly_connected_among, node_connectivity, strongly_connected_components};
pub use io::{read_edge_list, read_positions_csv, write_edge_list, write_positions_csv};

use nalgebra::{DMatrix, Vector3};
use rand::Rng;

use crate::error::{Error, Result};

/// Dense directed adjacency; `(i, j)` means `i` receives from `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    links: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self { n, links: vec![false; n * n] }
    }

    /// Empty graph plus a self-loop on every node.
    pub fn self_loops(n: usize) -> Self {
        let mut a = Self::empty(n);
        for i in 0..n {
            a.set(i, i, true);
        }
        a
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has(&self, i: usize, j: usize) -> bool {
        self.links[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.links[i * self.n + j] = on;
    }

    /// Nodes `i` receives from, excluding itself, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| j != i && self.has(i, j)).collect()
    }

    /// Nodes receiving from `j`, excluding itself.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| i != j && self.has(i, j)).collect()
    }

    /// Non-self links as `(receiver, sender)` pairs in row-major order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.has(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn link_count(&self) -> usize {
        self.links().len()
    }

    /// Adjacency of the support of a weight matrix.
    pub fn from_support(w: &DMatrix<f64>) -> Self {
        let n = w.nrows();
        let mut a = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if w[(i, j)] != 0.0 {
                    a.set(i, j, true);
                }
            }
        }
        a
    }
}

/// Directed cycle: node `i+1 (mod n)` receives from node `i`, plus self-loops.
pub fn build_cycle(n: usize) -> Result<Adjacency> {
    if n < 2 {
        return Err(Error::InvalidNetwork(format!("a cycle needs at least 2 nodes, got {n}")));
    }
    let mut a = Adjacency::self_loops(n);
    for i in 0..n {
        a.set((i + 1) % n, i, true);
    }
    Ok(a)
}

pub fn build_complete(n: usize) -> Adjacency {
    let mut a = Adjacency::empty(n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, true);
        }
    }
    a
}

/// Symmetric circulant graph: `i` and `i ± d (mod n)` are linked both ways
/// for every offset `d`, with self-loops.
pub fn circulant(n: usize, offsets: &[usize]) -> Adjacency {
    let mut a = Adjacency::self_loops(n);
    for i in 0..n {
        for &d in offsets {
            let d = d % n;
            if d == 0 {
                continue;
            }
            a.set(i, (i + d) % n, true);
            a.set((i + d) % n, i, true);
        }
    }
    a
}

/// Harary-style circulant whose edge and node connectivity are at least
/// `kappa + 1`, so it stays strongly connected after losing any `kappa`
/// links or any `kappa` nodes.
pub fn build_kappa_connected(n: usize, kappa: usize) -> Result<Adjacency> {
    if kappa < 1 || n <= kappa {
        return Err(Error::Infeasible(format!("cannot build a {kappa}-redundant network on {n} nodes")));
    }
    let k = kappa + 1;
    if k >= n - 1 {
        return Ok(build_complete(n));
    }
    let mut offsets: Vec<usize> = (1..=k / 2).collect();
    if k % 2 == 1 {
        if n % 2 == 0 {
            // antipodal chord
            offsets.push(n / 2);
        } else {
            offsets.push(k / 2 + 1);
        }
    }
    Ok(circulant(n, &offsets))
}

/// Uniform i.i.d. positions in `[lo, hi]³`. For `n >= 4` the draw is
/// repeated (up to 100 times) until the sensors are not coplanar.
pub fn place_sensors<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Vec<Vector3<f64>>> {
    if n < 2 {
        return Err(Error::InvalidNetwork(format!("need at least 2 sensors, got {n}")));
    }
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("empty placement box [{lo}, {hi}]")));
    }
    const ATTEMPTS: usize = 100;
    for _ in 0..ATTEMPTS {
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)))
            .collect();
        if n < 4 || !is_coplanar(&pts) {
            return Ok(pts);
        }
    }
    Err(Error::PlacementExhausted { attempts: ATTEMPTS })
}

/// True when the centred position table has rank below 3.
pub fn is_coplanar(points: &[Vector3<f64>]) -> bool {
    if points.len() < 4 {
        return true;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let m = DMatrix::from_fn(points.len(), 3, |r, c| points[r][c] - mean[c]);
    let sv = m.singular_values();
    let smax = sv.max();
    smax == 0.0 || sv.min() <= 1e-9 * smax
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNetwork {
    positions: Vec<Vector3<f64>>,
    adjacency: Adjacency,
    measurement_neighbors: Vec<Vec<usize>>,
    active: Vec<bool>,
}

impl SensorNetwork {
    pub fn new(positions: Vec<Vector3<f64>>, adjacency: Adjacency) -> Result<Self> {
        if positions.len() != adjacency.len() {
            return Err(Error::Dimension(format!("{} positions for {} nodes", positions.len(), adjacency.len())));
        }
        if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidNetwork("non-finite sensor position".into()));
        }
        if positions.len() >= 4 && is_coplanar(&positions) {
            return Err(Error::InvalidNetwork("sensors are coplanar".into()));
        }
        let measurement_neighbors = (0..adjacency.len()).map(|i| adjacency.in_neighbors(i)).collect();
        let active = vec![true; positions.len()];
        Ok(Self { positions, adjacency, measurement_neighbors, active })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &Vector3<f64> {
        &self.positions[i]
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn measurement_neighbors(&self, i: usize) -> &[usize] {
        &self.measurement_neighbors[i]
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected_among(&self.adjacency, &self.active)
    }

    /// Drops the measurement pair `(i, j)` and the link it rides on.
    pub fn without_link(&self, receiver: usize, sender: usize) -> Self {
        let mut out = self.clone();
        out.adjacency.set(receiver, sender, false);
        out.measurement_neighbors[receiver].retain(|&j| j != sender);
        out
    }
}

/// Row-stochastic fusion weights supported on the adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `1 / in-degree` (self included) on every permitted entry.
    Uniform,
    /// Independent draws in `[0.5, 1.5]`, normalised per row.
    #[default]
    RandomStochastic,
}

impl WeightMatrix {
    /// Validates non-negativity and row-stochasticity (rows of inactive
    /// nodes may be all zero).
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension("weight matrix must be square".into()));
        }
        for i in 0..w.nrows() {
            let row = w.row(i);
            if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidNetwork(format!("row {i} has a negative or non-finite weight")));
            }
            let s = row.sum();
            if s != 0.0 && (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidNetwork(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self(w))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    /// Weights restricted to the given node indices.
    pub fn compact(&self, nodes: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(nodes.len(), nodes.len(), |r, c| self.0[(nodes[r], nodes[c])])
    }
}

pub fn make_weights<R: Rng + ?Sized>(adjacency: &Adjacency, scheme: WeightScheme, rng: &mut R) -> Result<WeightMatrix> {
    let n = adjacency.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        if !adjacency.has(i, i) {
            if adjacency.in_neighbors(i).is_empty() {
                return Err(Error::InvalidNetwork(format!("node {i} has no in-neighbours")));
            }
            return Err(Error::InvalidNetwork(format!("node {i} lacks a self-loop")));
        }
        for j in 0..n {
            if adjacency.has(i, j) {
                w[(i, j)] = match scheme {
                    WeightScheme::Uniform => 1.0,
                    WeightScheme::RandomStochastic => rng.random_range(0.5..=1.5),
                };
            }
        }
        let s = w.row(i).sum();
        w.row_mut(i).unscale_mut(s);
    }
    Ok(WeightMatrix(w))
}

/// Isolates `victims`: marks them inactive, cuts their links and
/// measurements, zeroes their rows and columns of `W` and renormalises the
/// surviving rows.
pub fn remove_nodes(network: &SensorNetwork, weights: &WeightMatrix, victims: &[usize]) -> Result<(SensorNetwork, WeightMatrix)> {
    let n = network.len();
    if weights.len() != n {
        return Err(Error::Dimension(format!("weights are {}x{0}, network has {n} nodes", weights.len())));
    }
    for &v in victims {
        if v >= n || !network.active[v] {
            return Err(Error::InvalidNetwork(format!("node {v} is not an active sensor")));
        }
    }
    let mut net = network.clone();
    for &v in victims {
        net.active[v] = false;
    }
    if net.active_count() == 0 {
        return Err(Error::InvalidNetwork("cannot remove every sensor".into()));
    }
    let mut w = weights.0.clone();
    let mut touched = vec![false; n];
    for &v in victims {
        for k in 0..n {
            touched[k] |= w[(k, v)] != 0.0;
            net.adjacency.set(v, k, false);
            net.adjacency.set(k, v, false);
            w[(v, k)] = 0.0;
            w[(k, v)] = 0.0;
        }
    }
    for i in 0..n {
        net.measurement_neighbors[i].retain(|j| !victims.contains(j));
        if !net.active[i] {
            net.measurement_neighbors[i].clear();
            continue;
        }
        let s = w.row(i).sum();
        if touched[i] && s > 0.0 {
            w.row_mut(i).unscale_mut(s);
        }
    }
    Ok((net, WeightMatrix(w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;

    fn random_positions(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        place_sensors(n, 0.0, 10.0, &mut stream_rng(seed, 3)).unwrap()
    }

    #[test]
    fn placement_in_box_and_reproducible() {
        let a = random_positions(10, 5);
        assert_eq!(a.len(), 10);
        assert!(a.iter().flat_map(|p| p.iter()).all(|&v| (0.0..=10.0).contains(&v)));
        assert_eq!(a, random_positions(10, 5));
        assert!(!is_coplanar(&a));
        // two sensors are always accepted
        assert_eq!(random_positions(2, 1).len(), 2);
        assert!(place_sensors(1, 0.0, 1.0, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn coplanar_sensors_rejected() {
        let pts = vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 1.0), Vector3::new(0.0, 1.0, 1.0), Vector3::new(3.0, 2.0, 1.0)];
        assert!(is_coplanar(&pts));
        assert!(SensorNetwork::new(pts, build_complete(4)).is_err());
    }

    #[test]
    fn cycle_examples() {
        let c = build_cycle(3).unwrap();
        assert_eq!(c.links(), vec![(0, 2), (1, 0), (2, 1)]);
        assert!(is_strongly_connected(&c));
        let mut broken = c.clone();
        broken.set(0, 2, false);
        assert!(!is_strongly_connected(&broken));
        let pair = build_cycle(2).unwrap();
        assert!(pair.has(0, 1) && pair.has(1, 0));
        assert!(build_cycle(1).is_err());
    }

    #[test]
    fn kappa_offsets() {
        assert_eq!(build_kappa_connected(10, 1).unwrap(), circulant(10, &[1]));
        assert_eq!(build_kappa_connected(10, 3).unwrap(), circulant(10, &[1, 2]));
        assert_eq!(build_kappa_connected(10, 2).unwrap(), circulant(10, &[1, 5]));
        assert!(build_kappa_connected(3, 3).is_err());
        assert!(build_kappa_connected(5, 0).is_err());
        for n in 4..=12 {
            for kappa in 1..(n - 1).min(6) {
                let g = build_kappa_connected(n, kappa).unwrap();
                assert!(edge_connectivity(&g) > kappa, "n={n} kappa={kappa}");
                assert!(node_connectivity(&g) > kappa, "n={n} kappa={kappa}");
            }
        }
    }

    #[test]
    fn weights_uniform_and_random() {
        let mut rng = stream_rng(1, 4);
        let w = make_weights(&build_complete(4), WeightScheme::Uniform, &mut rng).unwrap();
        assert!(w.matrix().iter().all(|&v| v == 0.25));
        let adj = build_kappa_connected(10, 2).unwrap();
        let w1 = make_weights(&adj, WeightScheme::RandomStochastic, &mut stream_rng(9, 4)).unwrap();
        let w2 = make_weights(&adj, WeightScheme::RandomStochastic, &mut stream_rng(9, 4)).unwrap();
        assert_eq!(w1, w2);
        for i in 0..10 {
            assert!((w1.matrix().row(i).sum() - 1.0).abs() <= 1e-12);
            for j in 0..10 {
                assert_eq!(w1.get(i, j) > 0.0, adj.has(i, j));
            }
        }
        assert!(make_weights(&Adjacency::empty(3), WeightScheme::Uniform, &mut rng).is_err());
    }

    #[test]
    fn removal_examples() {
        let pos = random_positions(10, 2);
        let adj = build_kappa_connected(10, 1).unwrap();
        let net = SensorNetwork::new(pos.clone(), adj.clone()).unwrap();
        let w = make_weights(&adj, WeightScheme::RandomStochastic, &mut stream_rng(2, 4)).unwrap();
        for v in 0..10 {
            let (n2, w2) = remove_nodes(&net, &w, &[v]).unwrap();
            assert!(n2.is_strongly_connected());
            assert!(!n2.is_active(v));
            for i in n2.active_indices() {
                assert!((w2.matrix().row(i).sum() - 1.0).abs() <= 1e-12);
                assert!(!n2.measurement_neighbors(i).contains(&v));
                assert_eq!(w2.get(i, v), 0.0);
            }
        }
        let (same_net, same_w) = remove_nodes(&net, &w, &[]).unwrap();
        assert_eq!(same_net, net);
        assert_eq!(same_w, w);

        let cyc = SensorNetwork::new(pos, build_cycle(10).unwrap()).unwrap();
        let wc = make_weights(cyc.adjacency(), WeightScheme::Uniform, &mut stream_rng(0, 0)).unwrap();
        let (broken, _) = remove_nodes(&cyc, &wc, &[4]).unwrap();
        assert!(!broken.is_strongly_connected());

        let all: Vec<usize> = (0..10).collect();
        assert!(remove_nodes(&net, &w, &all).is_err());
        let (gone, wg) = remove_nodes(&net, &w, &[3]).unwrap();
        assert!(remove_nodes(&gone, &wg, &[3]).is_err());
    }
}
