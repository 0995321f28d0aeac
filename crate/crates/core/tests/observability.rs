mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use tdoa_track::dynamics::TargetModel;
use tdoa_track::linalg::kron;
use tdoa_track::network::{build_complete, SensorNetwork};
use tdoa_track::observability::{build_lifted, distributed_observability, is_irreducible};
use tdoa_track::seeding::stream_rng;

#[test]
fn strongly_connected_topologies_are_observable() {
    let model = TargetModel::ncv(0.1, 0.1).unwrap();
    let mut rng = stream_rng(21, 0);
    let mut counterexamples = Vec::new();
    for t in 0..120 {
        let n = rng.random_range(4..=8);
        let net = common::network(common::random_topology(n, &mut rng), &mut rng);
        let w = common::weights(&net, &mut rng);
        assert!(is_irreducible(w.matrix()));
        let report = distributed_observability(&common::lifted(&net, &w, &model));
        if !report.observable() {
            counterexamples.push((t, n, report.rank));
        }
    }
    assert!(counterexamples.is_empty(), "{counterexamples:?}");
}

#[test]
fn three_sensors_lack_rank_even_when_complete() {
    // Three sensors give two independent range differences per node, and
    // every node sees the same plane of position directions.
    let model = TargetModel::ncv(0.1, 0.1).unwrap();
    let mut rng = stream_rng(22, 0);
    for _ in 0..20 {
        let net = common::network(build_complete(3), &mut rng);
        let w = common::weights(&net, &mut rng);
        let report = distributed_observability(&common::lifted(&net, &w, &model));
        assert_eq!(report.rank, 12);
    }
}

#[test]
fn zero_outputs_have_zero_rank() {
    let model = TargetModel::ncv(0.1, 0.1).unwrap();
    let w = DMatrix::from_element(3, 3, 1.0 / 3.0);
    let hs = vec![DMatrix::zeros(2, 6); 3];
    let report = distributed_observability(&build_lifted(&w, model.transition(), &hs).unwrap());
    assert_eq!(report.rank, 0);
}

#[test]
fn rank_is_invariant_under_relabeling() {
    let model = TargetModel::ncv(0.1, 0.1).unwrap();
    let mut rng = stream_rng(23, 0);
    for _ in 0..10 {
        let n = 5;
        let base = common::network(common::random_not_sc(n, &mut rng), &mut rng);
        let w = common::weights(&base, &mut rng);
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        };
        let mut adj = tdoa_track::network::Adjacency::empty(n);
        for i in 0..n {
            for j in 0..n {
                adj.set(perm[i], perm[j], base.adjacency().has(i, j));
            }
        }
        let mut pos = base.positions().to_vec();
        for i in 0..n {
            pos[perm[i]] = *base.position(i);
        }
        let net2 = SensorNetwork::new(pos, adj).unwrap();
        let w2 = DMatrix::from_fn(n, n, |r, c| {
            let (i, j) = (perm.iter().position(|&p| p == r).unwrap(), perm.iter().position(|&p| p == c).unwrap());
            w.get(i, j)
        });
        let w2 = tdoa_track::network::WeightMatrix::from_matrix(w2).unwrap();
        let a = distributed_observability(&common::lifted(&base, &w, &model));
        let b = distributed_observability(&common::lifted(&net2, &w2, &model));
        assert_eq!(a.rank, b.rank);
    }
}

proptest! {
    #[test]
    fn kronecker_mixed_product(n in 1usize..5, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let w = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let f = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let lhs = kron(&w, &f) * kron(&DMatrix::from_column_slice(n, 1, v.as_slice()), &DMatrix::from_column_slice(6, 1, u.as_slice()));
        let rhs = kron(&DMatrix::from_column_slice(n, 1, (&w * &v).as_slice()), &DMatrix::from_column_slice(6, 1, (&f * &u).as_slice()));
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn lifted_blocks_match_inputs(n in 1usize..6, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 1);
        let model = TargetModel::ncv(0.1, 0.1).unwrap();
        let w = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
        let hs: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::from_fn(2, 6, |_, c| if c < 3 { rng.random_range(-1.0..1.0) } else { 0.0 })).collect();
        let lifted = build_lifted(&w, model.transition(), &hs).unwrap();
        for i in 0..n {
            for j in 0..n {
                let a = lifted.a_net().view((6 * i, 6 * j), (6, 6)).into_owned();
                prop_assert!((a - model.transition() * w[(i, j)]).amax() < 1e-15);
                let d = lifted.d_h().view((6 * i, 6 * j), (6, 6)).into_owned();
                if i == j {
                    prop_assert!((d - hs[i].transpose() * &hs[i]).amax() < 1e-12);
                } else {
                    prop_assert_eq!(d.amax(), 0.0);
                }
            }
        }
    }
}
