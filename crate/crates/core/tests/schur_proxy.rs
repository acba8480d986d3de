use std::collections::BTreeMap;

use vertexlab::rng::stream;
use vertexlab::schur::{length_law_on, simulate_special, KernelGrid, SchurSetup, DEFAULT_KERNEL_NODES};
use vertexlab::stats::ks_discrete;

/// Simulated `x_N + N` against the Fredholm law of `T - length` at a moderate size.
#[test]
fn simulated_edge_matches_fredholm_law() {
    const M: usize = 100;
    const REPS: u64 = 40_000;
    let s = SchurSetup::scaled(0.2, -1.0, 1.0, 1.0, 2.0, M).unwrap();
    let law = length_law_on(&KernelGrid::auto(&s, DEFAULT_KERNEL_NODES).unwrap()).unwrap();
    let mut fredholm: BTreeMap<i64, f64> = BTreeMap::new();
    for (len, p) in law.iter().enumerate() {
        *fredholm.entry(s.t as i64 - len as i64).or_insert(0.0) += p;
    }
    let mut sim: BTreeMap<i64, f64> = BTreeMap::new();
    for k in 0..REPS {
        let x = simulate_special(&s, &mut stream(3, k)).unwrap() + s.n as i64;
        *sim.entry(x).or_insert(0.0) += 1.0 / REPS as f64;
    }
    let ks = ks_discrete(&sim, &fredholm);
    let bound = 0.05 + 1.36 / (REPS as f64).sqrt();
    println!("M = {M}: Kolmogorov distance {ks:.4} (bound {bound:.4})");
    assert!(ks <= bound, "{ks} > {bound}");
}
