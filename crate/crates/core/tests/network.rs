mod common;

use proptest::prelude::*;
use rand::seq::index::sample;

use tdoa_track::network::{
    build_cycle, build_kappa_connected, edge_connectivity, is_strongly_connected, is_strongly_connected_among, make_weights,
    node_connectivity, remove_nodes, Adjacency, WeightScheme,
};
use tdoa_track::seeding::stream_rng;

fn without(adj: &Adjacency, links: &[(usize, usize)]) -> Adjacency {
    let mut a = adj.clone();
    for &(i, j) in links {
        a.set(i, j, false);
    }
    a
}

fn subsets(len: usize, size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..len {
        for rest in subsets(len - first - 1, size - 1) {
            let mut s = vec![first];
            s.extend(rest.into_iter().map(|r| r + first + 1));
            out.push(s);
        }
    }
    out
}

#[test]
fn every_link_subset_of_size_kappa_keeps_connectivity() {
    for kappa in [1, 2] {
        let adj = build_kappa_connected(10, kappa).unwrap();
        let links = adj.links();
        let cases = subsets(links.len(), kappa);
        assert!(!cases.is_empty());
        for s in cases {
            let cut: Vec<_> = s.iter().map(|&k| links[k]).collect();
            assert!(is_strongly_connected(&without(&adj, &cut)), "kappa {kappa}, cut {cut:?}");
        }
    }
}

#[test]
fn sampled_link_removals_keep_connectivity_for_kappa_three() {
    let adj = build_kappa_connected(10, 3).unwrap();
    let links = adj.links();
    let mut rng = stream_rng(3, 0);
    for _ in 0..1000 {
        let cut: Vec<_> = sample(&mut rng, links.len(), 3).into_iter().map(|k| links[k]).collect();
        assert!(is_strongly_connected(&without(&adj, &cut)), "cut {cut:?}");
    }
}

#[test]
fn every_node_subset_of_size_kappa_keeps_connectivity() {
    for kappa in 1..=3 {
        let n = 10;
        let adj = build_kappa_connected(n, kappa).unwrap();
        for s in subsets(n, kappa) {
            let mut active = vec![true; n];
            for &v in &s {
                active[v] = false;
            }
            assert!(is_strongly_connected_among(&adj, &active), "kappa {kappa}, removed {s:?}");
        }
    }
}

#[test]
fn removing_kappa_plus_one_links_can_disconnect() {
    let adj = build_kappa_connected(10, 1).unwrap();
    // both links into node 0 from its ring neighbours
    let incoming: Vec<_> = adj.in_neighbors(0).into_iter().map(|j| (0, j)).collect();
    assert_eq!(incoming.len(), 2);
    assert!(!is_strongly_connected(&without(&adj, &incoming)));
}

#[test]
fn cycle_connectivity_is_one() {
    let adj = build_cycle(7).unwrap();
    assert_eq!(node_connectivity(&adj), 1);
    assert_eq!(edge_connectivity(&adj), 1);
}

proptest! {
    #[test]
    fn kappa_builder_meets_its_redundancy(n in 4usize..14, kappa in 1usize..4) {
        prop_assume!(kappa + 1 < n - 1);
        let adj = build_kappa_connected(n, kappa).unwrap();
        prop_assert!(node_connectivity(&adj) > kappa);
        prop_assert!(edge_connectivity(&adj) > kappa);
        for i in 0..n {
            prop_assert!(adj.has(i, i));
        }
    }

    #[test]
    fn weights_are_row_stochastic_on_the_support(n in 2usize..12, seed in any::<u64>(), uniform in any::<bool>()) {
        let mut rng = stream_rng(seed, 0);
        let adj = common::random_sc(n, 0.3, &mut rng);
        let scheme = if uniform { WeightScheme::Uniform } else { WeightScheme::RandomStochastic };
        let w = make_weights(&adj, scheme, &mut rng).unwrap();
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| w.get(i, j)).sum();
            prop_assert!((row_sum - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(w.get(i, j) > 0.0, adj.has(i, j));
            }
        }
    }

    #[test]
    fn node_removal_keeps_survivors_stochastic(n in 5usize..11, seed in any::<u64>(), victims in 1usize..3) {
        let mut rng = stream_rng(seed, 1);
        let net = common::network(build_kappa_connected(n, 2).unwrap(), &mut rng);
        let w = common::weights(&net, &mut rng);
        let dead: Vec<usize> = sample(&mut rng, n, victims).into_vec();
        let (net2, w2) = remove_nodes(&net, &w, &dead).unwrap();
        prop_assert_eq!(net2.active_count(), n - victims);
        prop_assert!(net2.is_strongly_connected());
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| w2.get(i, j)).sum();
            if dead.contains(&i) {
                prop_assert_eq!(row_sum, 0.0);
                prop_assert!(net2.measurement_neighbors(i).is_empty());
            } else {
                prop_assert!((row_sum - 1.0).abs() < 1e-12);
                for &d in &dead {
                    prop_assert_eq!(w2.get(i, d), 0.0);
                    prop_assert!(!net2.measurement_neighbors(i).contains(&d));
                }
            }
        }
    }
}
