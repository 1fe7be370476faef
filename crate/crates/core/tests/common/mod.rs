#![allow(dead_code)]

use fbnet::model::{network_from_parts, NetworkSpec};
use rand::Rng;

pub const MAX_DEGREE: usize = 4;

/// A random connected DAG on `0..n` with node 0 as source and `n − 1` as
/// destination. Labels are already a topological order.
pub fn random_dag(rng: &mut impl Rng, max_nodes: usize) -> NetworkSpec {
    loop {
        if let Some(spec) = try_dag(rng, max_nodes) {
            return spec;
        }
    }
}

fn try_dag(rng: &mut impl Rng, max_nodes: usize) -> Option<NetworkSpec> {
    let n = rng.random_range(3..=max_nodes);
    let mut out_deg = vec![0usize; n];
    let mut in_deg = vec![0usize; n];
    let mut edges: Vec<(i64, i64, f64)> = Vec::new();
    let add = |u: usize, v: usize, out_deg: &mut [usize], in_deg: &mut [usize], edges: &mut Vec<(i64, i64, f64)>, eps: f64| {
        if u != v && out_deg[u] < MAX_DEGREE && in_deg[v] < MAX_DEGREE && !edges.iter().any(|e| e.0 == u as i64 && e.1 == v as i64) {
            out_deg[u] += 1;
            in_deg[v] += 1;
            edges.push((u as i64, v as i64, eps));
        }
    };
    let density = rng.random_range(0.2..0.6);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(density) {
                let eps = rng.random_range(0.05..0.9);
                add(u, v, &mut out_deg, &mut in_deg, &mut edges, eps);
            }
        }
    }
    for v in 1..n {
        if in_deg[v] == 0 {
            let u = rng.random_range(0..v);
            let eps = rng.random_range(0.05..0.9);
            add(u, v, &mut out_deg, &mut in_deg, &mut edges, eps);
        }
    }
    for u in 0..n - 1 {
        if out_deg[u] == 0 {
            let v = rng.random_range(u + 1..n);
            let eps = rng.random_range(0.05..0.9);
            add(u, v, &mut out_deg, &mut in_deg, &mut edges, eps);
        }
    }
    let buffers: Vec<Option<u32>> = (0..n)
        .map(|v| (v != 0 && v != n - 1).then(|| rng.random_range(1..=4)))
        .collect();
    network_from_parts(&buffers, &edges, 0, n as i64 - 1).ok()
}

pub fn two_hop(eps_in: f64, eps_out: f64, m: u32) -> NetworkSpec {
    network_from_parts(&[None, Some(m), None], &[(0, 1, eps_in), (1, 2, eps_out)], 0, 2).unwrap()
}

pub fn networks_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("networks")
}
