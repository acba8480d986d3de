//! q-difference operators acting on functions of the column parameters.
//!
//! ```text
//! W_N f = sum_r prod_{i!=r} a_i/(a_i - a_r)                  f(a_r -> q a_r)
//! D_N f = sum_r (1-nu_r) prod_{i!=r} (a_i - nu_i a_r)/(a_i - a_r)
//!                                                  f(a_r -> q a_r, nu_r -> q nu_r)
//! ```
//!
//! `D_N` is `W_N` conjugated by `Pi_N = prod_{i,j<=N} 1/(a_i c_j; q)_inf` with
//! `c_j = nu_j / a_j` held fixed. Both act on the first `N` coordinates only.

use std::collections::HashMap;

use crate::error::{check_q, Error, Result};
use crate::params::ModelParams;
use crate::qseries::qpoch_inf;

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluablePoint {
    pub a: Vec<f64>,
    pub nu: Vec<f64>,
}

impl EvaluablePoint {
    pub fn from_params(p: &ModelParams) -> Self {
        EvaluablePoint { a: p.a.clone(), nu: p.nu.clone() }
    }

    /// Copy of `p` with the column parameters replaced.
    pub fn apply_to(&self, p: &ModelParams) -> ModelParams {
        ModelParams { q: p.q, u: p.u.clone(), a: self.a.clone(), nu: self.nu.clone() }
    }
}

pub type PointFn<'a> = dyn Fn(&EvaluablePoint) -> Result<f64> + 'a;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    /// `W_N`
    W(usize),
    /// `D_N`
    D(usize),
}

impl Operator {
    fn arity(self) -> usize {
        match self {
            Operator::W(n) | Operator::D(n) => n,
        }
    }
}

fn check_point(x: &EvaluablePoint, n: usize) -> Result<()> {
    if x.a.len() < n || x.nu.len() < n {
        return Err(Error::InvalidParams(format!("operator of arity {n} needs {n} coordinates")));
    }
    let scale = x.a[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in i + 1..n {
            if (x.a[i] - x.a[j]).abs() < 1e-9 * scale {
                return Err(Error::Collision(format!("a_{} = a_{}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

fn coefficient(op: Operator, x: &EvaluablePoint, r: usize) -> f64 {
    match op {
        Operator::W(n) => (0..n).filter(|&i| i != r).map(|i| x.a[i] / (x.a[i] - x.a[r])).product(),
        Operator::D(n) => {
            (1.0 - x.nu[r])
                * (0..n)
                    .filter(|&i| i != r)
                    .map(|i| (x.a[i] - x.nu[i] * x.a[r]) / (x.a[i] - x.a[r]))
                    .product::<f64>()
        }
    }
}

fn shifted(op: Operator, x: &EvaluablePoint, r: usize, q: f64) -> EvaluablePoint {
    let mut y = x.clone();
    y.a[r] *= q;
    if let Operator::D(_) = op {
        y.nu[r] *= q;
    }
    y
}

fn apply(op: Operator, f: &PointFn, base: &EvaluablePoint, q: f64) -> Result<f64> {
    check_q(q)?;
    let n = op.arity();
    check_point(base, n)?;
    let mut s = 0.0;
    for r in 0..n {
        s += coefficient(op, base, r) * f(&shifted(op, base, r, q))?;
    }
    Ok(s)
}

pub fn apply_w(f: &PointFn, n: usize, base: &EvaluablePoint, q: f64) -> Result<f64> {
    apply(Operator::W(n), f, base, q)
}

pub fn apply_d(f: &PointFn, n: usize, base: &EvaluablePoint, q: f64) -> Result<f64> {
    apply(Operator::D(n), f, base, q)
}

/// Macdonald operator `sum_r prod_{i!=r} (a_i - t a_r)/(a_i - a_r) T_{q,a_r}`.
pub fn apply_macdonald(f: &PointFn, n: usize, base: &EvaluablePoint, t: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    check_point(base, n)?;
    let mut s = 0.0;
    for r in 0..n {
        let c: f64 = (0..n).filter(|&i| i != r).map(|i| (base.a[i] - t * base.a[r]) / (base.a[i] - base.a[r])).product();
        s += c * f(&shifted(Operator::W(n), base, r, q))?;
    }
    Ok(s)
}

/// Applies `ops[0]` first and `ops[last]` last, memoizing intermediate
/// functions on the lattice of shifts.
pub fn apply_chain(ops: &[Operator], f: &PointFn, base: &EvaluablePoint, q: f64) -> Result<f64> {
    check_q(q)?;
    let width = ops.iter().map(|o| o.arity()).max().unwrap_or(0);
    for op in ops {
        check_point(base, op.arity())?;
    }
    type Key = (usize, Vec<u8>, Vec<u8>);
    struct Ctx<'a, 'b> {
        ops: &'a [Operator],
        f: &'a PointFn<'b>,
        base: &'a EvaluablePoint,
        q: f64,
        memo: HashMap<Key, f64>,
    }
    fn point(ctx: &Ctx, sa: &[u8], sn: &[u8]) -> EvaluablePoint {
        let mut x = ctx.base.clone();
        for (i, (&ka, &kn)) in sa.iter().zip(sn).enumerate() {
            x.a[i] *= ctx.q.powi(ka as i32);
            x.nu[i] *= ctx.q.powi(kn as i32);
        }
        x
    }
    fn eval(ctx: &mut Ctx, level: usize, sa: Vec<u8>, sn: Vec<u8>) -> Result<f64> {
        let key = (level, sa, sn);
        if let Some(v) = ctx.memo.get(&key) {
            return Ok(*v);
        }
        let (_, sa, sn) = &key;
        let x = point(ctx, sa, sn);
        let v = if level == 0 {
            (ctx.f)(&x)?
        } else {
            let op = ctx.ops[level - 1];
            check_point(&x, op.arity())?;
            let mut s = 0.0;
            for r in 0..op.arity() {
                let mut sa2 = sa.clone();
                let mut sn2 = sn.clone();
                sa2[r] += 1;
                if let Operator::D(_) = op {
                    sn2[r] += 1;
                }
                s += coefficient(op, &x, r) * eval(ctx, level - 1, sa2, sn2)?;
            }
            s
        };
        ctx.memo.insert(key, v);
        Ok(v)
    }
    let mut ctx = Ctx { ops, f, base, q, memo: HashMap::new() };
    eval(&mut ctx, ops.len(), vec![0; width], vec![0; width])
}

/// `Phi_M = prod_{i<=T} prod_{j<=M} (1 - a_j u_i)`.
pub fn phi_m(x: &EvaluablePoint, u: &[f64], m: usize) -> f64 {
    let mut v = 1.0;
    for &ui in u {
        for &aj in &x.a[..m] {
            v *= 1.0 - aj * ui;
        }
    }
    v
}

/// `Pi_N = prod_{i,j<=N} 1/(a_i c_j; q)_inf` with `c_j = nu_j / a_j`.
pub fn pi_n(x: &EvaluablePoint, n: usize, q: f64) -> Result<f64> {
    check_q(q)?;
    let mut v = 1.0;
    for i in 0..n {
        for j in 0..n {
            let z = x.a[i] * x.nu[j] / x.a[j];
            if z >= 1.0 {
                return Err(Error::InvalidParams(format!("a_{} c_{} = {z} is not below 1", i + 1, j + 1)));
            }
            v /= qpoch_inf(z, q);
        }
    }
    Ok(v)
}

/// `D_{N_l} ... D_{N_1} Phi_M / Phi_M` for `n_list = [N_1, ..., N_l]`,
/// `N_1 >= ... >= N_l`, `M >= N_1`.
///
/// Under the step boundary this equals
/// `E prod_j (q^{h(N_j+1, T)} - q^{T+l-j} nu_1 ... nu_{N_j})`.
pub fn operator_expectation(n_list: &[usize], t: usize, p: &ModelParams, m: usize) -> Result<f64> {
    if n_list.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidParams("N_1 >= N_2 >= ... required".into()));
    }
    if let Some(&n1) = n_list.first() {
        if m < n1 {
            return Err(Error::InvalidParams("M must be at least N_1".into()));
        }
    }
    p.require(m, t)?;
    let u = p.u[..t].to_vec();
    let base = EvaluablePoint::from_params(p);
    let ops: Vec<Operator> = n_list.iter().map(|&n| Operator::D(n)).collect();
    let f = |x: &EvaluablePoint| Ok(phi_m(x, &u, m));
    let v = apply_chain(&ops, &f, &base, p.q)?;
    Ok(v / phi_m(&base, &u, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt() -> EvaluablePoint {
        EvaluablePoint { a: vec![1.3, 0.8, 1.7, 1.1], nu: vec![0.3, 0.55, 0.2, 0.4] }
    }

    fn one(_: &EvaluablePoint) -> Result<f64> {
        Ok(1.0)
    }

    #[test]
    fn w_on_constant() {
        let x = EvaluablePoint { a: vec![2.0, 1.0], nu: vec![0.0, 0.0] };
        assert!((apply_w(&one, 2, &x, 0.5).unwrap() - 1.0).abs() < 1e-15);
        for n in 1..=4 {
            assert!((apply_w(&one, n, &pt(), 0.4).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn d_on_constant() {
        let x = pt();
        for n in 1..=4 {
            let prod: f64 = x.nu[..n].iter().product();
            assert!((apply_d(&one, n, &x, 0.4).unwrap() - (1.0 - prod)).abs() < 1e-13);
        }
    }

    #[test]
    fn chain_on_constant() {
        let x = pt();
        let q = 0.4;
        let ns = [4usize, 3, 3, 1];
        let ops: Vec<_> = ns.iter().map(|&n| Operator::D(n)).collect();
        let v = apply_chain(&ops, &one, &x, q).unwrap();
        let l = ns.len();
        let mut e = 1.0;
        for (j, &n) in ns.iter().enumerate() {
            let prod: f64 = x.nu[..n].iter().product();
            e *= 1.0 - q.powi((l - j - 1) as i32) * prod;
        }
        assert!((v - e).abs() < 1e-12, "{v} {e}");
    }

    #[test]
    fn d_is_conjugated_w() {
        let x = EvaluablePoint { a: vec![1.3, 0.9, 1.1], nu: vec![0.2, 0.3, 0.15] };
        let q = 0.45;
        let n = 3;
        let f = |y: &EvaluablePoint| Ok((y.a[0] * y.nu[1] + y.a[2]).sin() + y.nu[0] * y.a[1]);
        let c: Vec<f64> = x.nu.iter().zip(&x.a).map(|(v, a)| v / a).collect();
        let lifted = |y: &EvaluablePoint| {
            let z = EvaluablePoint { a: y.a.clone(), nu: y.a.iter().zip(&c).map(|(a, c)| a * c).collect() };
            Ok(pi_n(&z, n, q)? * f(&z)?)
        };
        let lhs = apply_d(&f, n, &x, q).unwrap();
        let rhs = apply_w(&lifted, n, &x, q).unwrap() / pi_n(&x, n, q).unwrap();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
    }

    #[test]
    fn quasi_commutation() {
        let x = pt();
        let q = 0.35;
        let n = 3;
        let u = -0.7;
        let g = |y: &EvaluablePoint| Ok((y.a[0] + 2.0 * y.a[1]).cos() * (1.0 + y.nu[2]));
        let prod = |y: &EvaluablePoint| (0..n).map(|i| y.nu[i] - y.a[i] * u).product::<f64>();
        let lhs = apply_d(&|y: &EvaluablePoint| Ok(prod(y) * g(y)?), n, &x, q).unwrap();
        let rhs = q * prod(&x) * apply_d(&g, n, &x, q).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn macdonald_specialization() {
        let t = 0.3;
        let x = EvaluablePoint { a: vec![1.3, 0.8, 1.7], nu: vec![t; 3] };
        let g = |y: &EvaluablePoint| Ok(y.a[0] * y.a[0] - y.a[1] * y.a[2] + 1.0 / (3.0 - y.a[1]));
        let d = apply_d(&g, 3, &x, 0.5).unwrap();
        let m = apply_macdonald(&g, 3, &x, t, 0.5).unwrap();
        assert!((d - (1.0 - t) * m).abs() < 1e-13);
    }

    #[test]
    fn collision_rejected() {
        let x = EvaluablePoint { a: vec![1.0, 1.0], nu: vec![0.1, 0.2] };
        assert!(matches!(apply_d(&one, 2, &x, 0.5), Err(Error::Collision(_))));
    }

    #[test]
    fn single_row_bernoulli_example() {
        let (q, a, u) = (0.5, 1.3, -0.8);
        let p = ModelParams::new(q, vec![u], vec![a], vec![0.0]);
        let v = operator_expectation(&[1], 1, &p, 1).unwrap();
        assert!((v - (1.0 - q * a * u) / (1.0 - a * u)).abs() < 1e-15);
    }
}
