use vertexlab::diffops::{apply_d, EvaluablePoint};
use vertexlab::harness::key_lemma_sides;
use vertexlab::params::{ModelParams, Partition};
use vertexlab::vertex::f_tilde;

fn point() -> ModelParams {
    ModelParams::new(0.35, vec![-0.7], vec![1.2, 0.75], vec![0.3, 0.45])
}

#[test]
fn single_function_ratio_matches_display() {
    let p = point();
    let (q, a1, a2, nu1, nu2) = (p.q, p.a[0], p.a[1], p.nu[0], p.nu[1]);
    let kappa = Partition::new(vec![2]).unwrap();
    let f = |x: &EvaluablePoint| f_tilde(&kappa, &x.apply_to(&p), 1, 2);
    let base = EvaluablePoint::from_params(&p);
    let ratio = apply_d(&f, 2, &base, q).unwrap() / f(&base).unwrap();
    let expected = 1.0 - q * nu1 * nu2 + (1.0 - q) * (1.0 - nu1) * a2 / (a1 - a2);
    assert!((ratio - expected).abs() < 1e-11, "{ratio} vs {expected}");
    // the lemma's eigenvalue alone would be 1 - q nu1 nu2
    assert!((ratio - (1.0 - q * nu1 * nu2)).abs() > 1e-3);
}

#[test]
fn sum_over_kappa_restores_the_eigenvalue() {
    let p = point();
    let (lhs, rhs) = key_lemma_sides(&p, &[2], 2, 1).unwrap();
    assert!((lhs - rhs).abs() < 1e-11 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn rejects_increasing_levels() {
    assert!(key_lemma_sides(&point(), &[1, 2], 2, 1).is_err());
}
