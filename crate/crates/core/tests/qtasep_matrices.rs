use std::collections::BTreeMap;

use nalgebra::DMatrix;
use vertexlab::params::ModelParams;
use vertexlab::qtasep::{move_for_step, transition_matrix, Move, TimeLikePath};

#[test]
fn two_particle_box_commutator() {
    let a = [1.1, 0.8];
    let q = 0.45;
    let g = transition_matrix(Move::Geometric(0.5), &a, q, -5, 5, 1e-12).unwrap();
    let b = transition_matrix(Move::Bernoulli(0.9), &a, q, -5, 5, 1e-12).unwrap();
    let comm = (&b.matrix * &g.matrix - &g.matrix * &b.matrix).amax();
    assert!(comm <= 1e-10, "commutator {comm:e}");
    // Bernoulli rows that cannot leave the box are exactly stochastic
    for (r, s) in b.states.iter().enumerate() {
        if s[0] < 5 {
            assert!((b.matrix.row(r).sum() - 1.0).abs() < 1e-15);
        }
    }
    assert!(g.dropped <= 1e-12);
}

/// Law of every particle configuration at the end of `path`, started from
/// the step configuration, by multiplying transition matrices.
fn endpoint_law(path: &TimeLikePath, p: &ModelParams, lo: i64, hi: i64) -> (Vec<Vec<i64>>, Vec<f64>) {
    let l = 3;
    let mut pts = vec![(1, 0)];
    pts.extend(path.0.iter().skip(1));
    let mut prod: Option<DMatrix<f64>> = None;
    let mut states = Vec::new();
    for w in pts.windows(2) {
        let tm = transition_matrix(move_for_step(p, w[0], w[1]), &p.a[..l], p.q, lo, hi, 1e-14).unwrap();
        states = tm.states.clone();
        prod = Some(match prod {
            None => tm.matrix,
            Some(m) => m * tm.matrix,
        });
    }
    let start = states.iter().position(|s| *s == vec![-1, -2, -3]).unwrap();
    (states, prod.unwrap().row(start).iter().copied().collect())
}

#[test]
fn endpoint_law_is_path_independent() {
    let p = ModelParams::new(0.5, vec![-0.6, -0.9], vec![1.0, 0.9, 1.2], vec![0.0, 0.3, 0.4]);
    let (lo, hi) = (-3, 7);
    let laws: Vec<_> = ["NNTT", "TTNN", "NTNT", "TNTN"]
        .iter()
        .map(|steps| {
            let path = TimeLikePath::from_steps((1, 0), steps).unwrap();
            assert_eq!(*path.0.last().unwrap(), (3, 2));
            endpoint_law(&path, &p, lo, hi)
        })
        .collect();
    let marginal = |(states, w): &(Vec<Vec<i64>>, Vec<f64>)| {
        let mut m: BTreeMap<i64, f64> = BTreeMap::new();
        for (s, x) in states.iter().zip(w) {
            *m.entry(s[2]).or_insert(0.0) += x;
        }
        m
    };
    let reference = marginal(&laws[0]);
    assert!(reference.values().sum::<f64>() > 0.99);
    for law in &laws[1..] {
        let full = law.1.iter().zip(&laws[0].1).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(full <= 1e-10, "joint law differs by {full:e}");
        for (k, v) in marginal(law) {
            assert!((v - reference[&k]).abs() <= 1e-10, "x3 = {k}");
        }
    }
}
