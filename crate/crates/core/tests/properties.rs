mod common;

use common::random_dag;
use fbnet::chain::*;
use fbnet::fixed_point::{node_balance, solve, IterationConfig};
use fbnet::metrics::{delay_table, seat_distribution, throughput};
use fbnet::model::parse_network;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dag(seed: u64) -> fbnet::model::NetworkSpec {
    random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 10)
}

fn histogram(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|mut h| {
        let s: f64 = h.iter().sum();
        h.iter_mut().for_each(|x| *x /= s);
        h
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transition_matrices_are_stochastic(r in prop::collection::vec(0.0f64..=1.0, 1..6), m in 1usize..8) {
        let d = departure_dist(&RateVector::new(r).unwrap());
        let te = build_te(&d, m);
        let ta = build_ta(&d, m);
        prop_assert!(te.max_row_sum_error() < 1e-12);
        prop_assert!(ta.max_row_sum_error() < 1e-12);
        for s in 0..=m {
            for t in 0..=m {
                prop_assert!(te.get(s, t) >= 0.0 && ta.get(s, t) >= 0.0);
                if t > s { prop_assert_eq!(te.get(s, t), 0.0); }
                if t < s { prop_assert_eq!(ta.get(s, t), 0.0); }
            }
        }
    }

    #[test]
    fn node_conserves_packets(
        l in prop::collection::vec(0.0f64..=1.0, 1..5),
        w in prop::collection::vec(0.0f64..=1.0, 1..5),
        m in 1usize..7,
    ) {
        let chain = NodeChain::solve(RateVector::new(l).unwrap(), RateVector::new(w).unwrap(), m).unwrap();
        prop_assert!((chain.accepted_inflow() - chain.outflow()).abs() < 1e-8);
        let sum: f64 = chain.theta.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn birth_death_matches_closed_form(l in 0.01f64..0.99, w in 0.01f64..0.99, m in 1usize..10) {
        let chain = NodeChain::solve(RateVector::new(vec![l]).unwrap(), RateVector::new(vec![w]).unwrap(), m).unwrap();
        let ratio = l * (1.0 - w) / (w * (1.0 - l));
        let mut want = vec![1.0, l / (w * (1.0 - l))];
        for s in 2..=m {
            want.push(want[s - 1] * ratio);
        }
        let total: f64 = want.iter().sum();
        for (got, want) in chain.theta.probs().iter().zip(&want) {
            prop_assert!((got - want / total).abs() < 1e-10);
        }
    }

    #[test]
    fn info_rate_grows_with_occupancy(w in prop::collection::vec(0.05f64..=1.0, 1..5), m in 1usize..6, from in 0usize..6) {
        // moving mass to a fuller state never lowers the outflow of any edge
        let from = from % m;
        let mut lo = vec![0.0; m + 1];
        lo[from] = 1.0;
        let mut hi = vec![0.0; m + 1];
        hi[from + 1] = 1.0;
        let omega = RateVector::new(w.clone()).unwrap();
        for i in 0..w.len() {
            let a = info_rate(i, &OccupancyDist::new(lo.clone(), Phase::PostArrival), &omega).unwrap();
            let b = info_rate(i, &OccupancyDist::new(hi.clone(), Phase::PostArrival), &omega).unwrap();
            prop_assert!(b >= a - 1e-15);
        }
    }

    #[test]
    fn blocking_grows_with_occupancy(l in prop::collection::vec(0.05f64..=1.0, 1..5), m in 1usize..6, from in 0usize..6) {
        let from = from % m;
        let mut lo = vec![0.0; m + 1];
        lo[from] = 1.0;
        let mut hi = vec![0.0; m + 1];
        hi[from + 1] = 1.0;
        let lambda = RateVector::new(l.clone()).unwrap();
        for i in 0..l.len() {
            let a = blocking_prob(i, &OccupancyDist::new(lo.clone(), Phase::PostDeparture), &lambda, m).unwrap();
            let b = blocking_prob(i, &OccupancyDist::new(hi.clone(), Phase::PostDeparture), &lambda, m).unwrap();
            prop_assert!(b >= a - 1e-15);
        }
    }

    #[test]
    fn seat_distribution_normalizes(h in (2usize..8).prop_flat_map(histogram)) {
        let m = h.len() - 1;
        let pi = seat_distribution(&OccupancyDist::new(h, Phase::PostDeparture), m).unwrap();
        prop_assert_eq!(pi.len(), m);
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn topological_order_respects_edges(seed in any::<u64>()) {
        let spec = dag(seed);
        prop_assert!(spec.topo_order().respects(spec.edges()));
        let ranks = spec.topo_order().ranks();
        prop_assert_eq!(ranks[spec.source().index()], 0);
        prop_assert_eq!(ranks[spec.destination().index()], spec.node_count() - 1);
    }

    #[test]
    fn config_round_trips(seed in any::<u64>()) {
        let spec = dag(seed);
        let back = parse_network(&spec.to_json()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn fixed_point_conserves_flow(seed in any::<u64>()) {
        let spec = dag(seed);
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        prop_assert!(res.converged);
        for (_, gap) in node_balance(&spec, &res.edge_states).unwrap() {
            prop_assert!(gap.abs() < 1e-8, "balance {}", gap);
        }
        let thr = throughput(&res, &spec, 64);
        prop_assert!(thr.max_cut_gap() < 1e-8);
        let cap: f64 = spec.in_edges(spec.destination()).iter().map(|&e| spec.edge(e).survival()).sum();
        prop_assert!(thr.value >= 0.0 && thr.value <= cap + 1e-12);
    }

    #[test]
    fn delay_structure(seed in any::<u64>()) {
        let spec = dag(seed);
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let table = delay_table(&res, &spec, spec.topo_order());
        for v in spec.intermediates() {
            let node = table.node(v);
            for k in 1..node.delays.len() {
                let step = node.delays[k] - node.delays[k - 1];
                prop_assert!((step - 1.0 / node.total_rate).abs() < 1e-9);
            }
        }
        prop_assert!(table.node(spec.destination()).delays.iter().all(|&d| d == 0.0));
        prop_assert!(table.mean_delay() > 0.0);
    }

    #[test]
    fn delay_at_least_hop_count(seed in any::<u64>()) {
        let spec = dag(seed);
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let table = delay_table(&res, &spec, spec.topo_order());
        // each hop costs at least one epoch only while no node drains faster than one packet per epoch
        if table.nodes.iter().any(|n| n.total_rate > 1.0) {
            return Ok(());
        }
        let d = table.mean_delay();
        prop_assert!(d >= hops(&spec) as f64 - 1e-9, "delay {} hops {}", d, hops(&spec));
    }
}

fn hops(spec: &fbnet::model::NetworkSpec) -> usize {
    let mut dist = vec![usize::MAX; spec.node_count()];
    dist[spec.source().index()] = 0;
    for u in spec.topo_order().iter() {
        if dist[u.index()] == usize::MAX {
            continue;
        }
        for &e in spec.out_edges(u) {
            let v = spec.edge(e).head.index();
            dist[v] = dist[v].min(dist[u.index()] + 1);
        }
    }
    dist[spec.destination().index()]
}

#[test]
fn hop_bound_fails_for_fast_nodes() {
    let spec = fbnet::model::network_from_parts(
        &[None, Some(1), Some(1), None],
        &[(0, 1, 0.05), (0, 2, 0.05), (1, 3, 0.05), (2, 3, 0.05)],
        0,
        3,
    )
    .unwrap();
    let res = solve(&spec, &IterationConfig::default()).unwrap();
    let d = delay_table(&res, &spec, spec.topo_order()).mean_delay();
    assert_eq!(hops(&spec), 2);
    assert!(d < 2.0, "{d}");
}
