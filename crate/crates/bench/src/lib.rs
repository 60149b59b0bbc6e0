//! Fixtures shared by the benchmarks.

use cip_core::graph::Dag;
use cip_core::rng::{stream, Domain};
use nalgebra::DMatrix;
use rand::Rng;

pub fn uniform(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed, Domain::Aux, 0);
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Layered DAG: `layers` rows of `width` nodes, each node wired to every
/// node of the previous layer with probability `p`.
pub fn layered_dag(layers: usize, width: usize, p: f64, seed: u64) -> Dag {
    let mut rng = stream(seed, Domain::Aux, 1);
    let name = |l: usize, i: usize| format!("L{l}_{i}");
    let nodes: Vec<String> = (0..layers)
        .flat_map(|l| (0..width).map(move |i| name(l, i)))
        .collect();
    let mut edges = Vec::new();
    for l in 1..layers {
        for i in 0..width {
            for j in 0..width {
                if rng.gen_bool(p) {
                    edges.push((name(l - 1, j), name(l, i)));
                }
            }
        }
    }
    Dag::new(nodes, edges).expect("layered graphs are acyclic")
}
