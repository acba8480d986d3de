//! Moments of the height function and of q-Whittaker measures.
//!
//! Three routes compute the same family of observables:
//!
//! * iterated residues of the small-contour formula for `E prod_i q^{h(N_i+1, T)}`;
//! * tensor trapezoid quadrature of the nested large-contour formula for
//!   `E prod_j (q^{h(N_j+1, T)} - q^{T+l-j} nu_1...nu_{N_j})`;
//! * the difference operators in [`crate::diffops`].
//!
//! The first two are linked by [`plain_from_centered`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diffops::{apply_chain, EvaluablePoint, Operator};
use crate::error::{check_q, Error, Result};
use crate::params::{digest_json, ModelParams};
use crate::qseries::{cpoch_inf, pi_w, qfact_table, Specialization};
use crate::stats::mc_estimate;
use crate::vertex::{Boundary, QuadrantSampler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub formula: String,
    pub params_digest: String,
    pub value: f64,
    pub method: String,
    pub error_estimate: f64,
}

/// `(c + d w)^e`.
#[derive(Clone, Copy, Debug)]
struct LinearFactor {
    c: f64,
    d: f64,
    e: i32,
}

/// Product of powers of linear factors in one variable.
#[derive(Clone, Debug, Default)]
struct LinearProduct {
    scale: f64,
    factors: Vec<LinearFactor>,
}

impl LinearProduct {
    fn new() -> Self {
        LinearProduct { scale: 1.0, factors: Vec::new() }
    }

    fn push(&mut self, c: f64, d: f64, e: i32) {
        self.factors.push(LinearFactor { c, d, e });
    }

    /// Residue at `p`, exact for poles of any order.
    fn residue_at(&self, p: f64) -> f64 {
        let mut order = 0i32;
        let mut vanishing = Vec::new();
        let mut regular = Vec::new();
        for f in &self.factors {
            let v = f.c + f.d * p;
            let size = f.c.abs() + (f.d * p).abs();
            if v.abs() <= 1e-12 * size.max(1e-300) {
                order += f.e;
                vanishing.push(*f);
            } else {
                regular.push((*f, v));
            }
        }
        if order >= 0 {
            return 0.0;
        }
        let k = (-order) as usize;
        // Taylor coefficients in eps = w - p up to eps^(k-1)
        let mut series = vec![0.0; k];
        series[0] = self.scale;
        for f in &vanishing {
            series[0] *= f.d.powi(f.e);
        }
        for (f, v) in regular {
            series[0] *= v.powi(f.e);
            if k > 1 {
                let ratio = f.d / v;
                let mut bin = vec![1.0; k];
                for n in 1..k {
                    bin[n] = bin[n - 1] * (f.e as f64 - (n - 1) as f64) / n as f64 * ratio;
                }
                let mut next = vec![0.0; k];
                for i in 0..k {
                    for j in 0..k - i {
                        next[i + j] += series[i] * bin[j];
                    }
                }
                let s0 = series[0];
                series = next;
                series[0] = s0;
            }
        }
        series[k - 1]
    }
}

fn check_u(u: &[f64], q: f64) -> Result<()> {
    let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..u.len() {
        for j in 0..u.len() {
            if i != j && (u[i] - u[j]).abs() < 1e-9 * scale {
                return Err(Error::Collision(format!("u_{} = u_{}", i + 1, j + 1)));
            }
            if (u[i] - q * u[j]).abs() < 1e-9 * scale {
                return Err(Error::Collision(format!("u_{} = q u_{}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// `E prod_i q^{h(N_i + 1, T)}` under the step boundary, summing residues at
/// `0` and `u_t^{-1}` one variable at a time, innermost zero circle first.
pub fn moment_height_residues(n_list: &[usize], t: usize, p: &ModelParams) -> Result<f64> {
    check_q(p.q)?;
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    p.require(n_max, t)?;
    let u = &p.u[..t];
    check_u(u, p.q)?;
    let q = p.q;
    let l = n_list.len();
    let mut poles = vec![0.0];
    poles.extend(u.iter().map(|x| 1.0 / x));

    fn rec(k: usize, n_list: &[usize], p: &ModelParams, u: &[f64], poles: &[f64], chosen: &mut Vec<f64>) -> f64 {
        if k == n_list.len() {
            return 1.0;
        }
        let q = p.q;
        let mut f = LinearProduct::new();
        f.push(0.0, 1.0, -1);
        for j in 0..n_list[k] {
            f.push(p.a[j], -p.nu[j], 1);
            f.push(p.a[j], -1.0, -1);
        }
        for &ur in u {
            f.push(1.0, -q * ur, 1);
            f.push(1.0, -ur, -1);
        }
        for &pa in chosen.iter() {
            f.push(pa, -1.0, 1);
            f.push(pa, -q, -1);
        }
        let mut total = 0.0;
        for &pole in poles {
            let r = f.residue_at(pole);
            if r != 0.0 {
                chosen.push(pole);
                total += r * rec(k + 1, n_list, p, u, poles, chosen);
                chosen.pop();
            }
        }
        total
    }
    let v = rec(0, n_list, p, u, &poles, &mut Vec::new());
    Ok(q.powi((l * l.saturating_sub(1) / 2) as i32) * v)
}

/// `E prod_i q^{h(N_i+1,T)}` from the centered moments of all sub-lists.
pub fn plain_from_centered(n_list: &[usize], t: usize, p: &ModelParams, mut centered: impl FnMut(&[usize]) -> Result<f64>) -> Result<f64> {
    let l = n_list.len();
    let q = p.q;
    let b: Vec<f64> = n_list.iter().map(|&n| q.powi(t as i32) * p.nu[..n].iter().product::<f64>()).collect();
    let mut total = 0.0;
    for mask in 0u32..(1 << l) {
        let idx: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let k = idx.len() as i32;
        let mut w = q.powi(-k * (k + 1) / 2);
        for i in 0..l {
            if mask >> i & 1 == 0 {
                w *= b[i];
            } else {
                w *= q.powi(i as i32 + 1);
            }
        }
        let sub: Vec<usize> = idx.iter().map(|&i| n_list[i]).collect();
        let c = if sub.is_empty() { 1.0 } else { centered(&sub)? };
        total += w * c;
    }
    Ok(total)
}

/// Residual of the finite expansion of `X_1 ... X_l` in terms of
/// `X_i - q^{k-j+i} b_i`.
pub fn formal_identity_check(x: &[f64], b: &[f64], q: f64) -> Result<f64> {
    if x.len() != b.len() {
        return Err(Error::InvalidParams("X and b must have equal length".into()));
    }
    let l = x.len();
    let tri = |k: usize| (k * (k + 1) / 2) as i32;
    let mut lhs = 0.0;
    for mask in 0u32..(1 << l) {
        let idx: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let k = idx.len();
        let mut term = q.powi(tri(l) - tri(k));
        for r in 0..l {
            if mask >> r & 1 == 0 {
                term *= b[r];
            }
        }
        for (j, &i) in idx.iter().enumerate() {
            // 1-based: q^{k - j + i_j}
            term *= x[i] - q.powi((k - (j + 1) + i + 1) as i32) * b[i];
        }
        lhs += term;
    }
    let rhs: f64 = x.iter().product();
    Ok(lhs - rhs)
}

/// Concentric circles `|z - center| = radii[j]` with circle `j` enclosing
/// `q` times circle `j + 1`, all enclosing the `a`'s and excluding 0.
///
/// Circle `j` is traversed as `z = center + r (w - s)/(1 - s w)` with `w` on
/// the unit circle and `s = clustering[j]`, which packs the trapezoid nodes
/// near the left edge where the inner circles come close to the origin.
#[derive(Clone, Debug)]
pub struct NestedContours {
    pub center: f64,
    pub radii: Vec<f64>,
    pub clustering: Vec<f64>,
}

pub fn nested_contours(a: &[f64], q: f64, l: usize) -> Result<NestedContours> {
    let amin = a.iter().copied().fold(f64::INFINITY, f64::min);
    let amax = a.iter().copied().fold(0.0, f64::max);
    if !(amin > 0.0) || !(amin > q * amax) {
        return Err(Error::Infeasible(format!("nested contours need min a > q max a ({amin} vs {})", q * amax)));
    }
    let center = 0.5 * (amin + amax);
    // distance from each circle to the origin; s_j = q s_{j+1} / 2
    let mut s = vec![0.0; l];
    if l > 0 {
        s[l - 1] = 0.6 * amin;
        for j in (0..l - 1).rev() {
            s[j] = 0.5 * q * s[j + 1];
        }
    }
    let radii: Vec<f64> = s.iter().map(|x| center - x).collect();
    // singularities sit at relative distance ~ s/r outside and ~1 inside;
    // 1 - clustering = sqrt(2 s / r) balances the two in the w plane
    let clustering = s.iter().zip(&radii).map(|(x, r)| (1.0 - (2.0 * x / r).sqrt()).max(0.0)).collect();
    Ok(NestedContours { center, radii, clustering })
}

/// `(2 pi i)^{-l} \oint...\oint prod_j f_j(z_j) prod_{a<b} (z_a - z_b)/(z_a - q z_b) dz`
/// with `n` trapezoid nodes per circle.
fn nested_integral(fs: &[&dyn Fn(Complex64) -> Complex64], c: &NestedContours, q: f64, n: usize) -> Complex64 {
    let l = fs.len();
    let one = Complex64::new(1.0, 0.0);
    let mut nodes: Vec<Vec<Complex64>> = Vec::with_capacity(l);
    let mut weights: Vec<Vec<Complex64>> = Vec::with_capacity(l);
    for j in 0..l {
        let (r, s) = (c.radii[j], c.clustering[j]);
        let (mut zs, mut ws) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            let w = Complex64::from_polar(1.0, th);
            let den = one - s * w;
            let z = c.center + r * (w - s) / den;
            // dz / (2 pi i) per unit of the node spacing
            let jac = r * (1.0 - s * s) / (den * den) * w;
            zs.push(z);
            ws.push(fs[j](z) * jac / n as f64);
        }
        nodes.push(zs);
        weights.push(ws);
    }
    fn rec(d: usize, nodes: &[Vec<Complex64>], mult: &[Vec<Complex64>], q: f64) -> Complex64 {
        let l = nodes.len();
        if d == l - 1 {
            return mult[d].iter().sum();
        }
        let mut total = Complex64::new(0.0, 0.0);
        let mut next: Vec<Vec<Complex64>> = mult.to_vec();
        for (k, &z) in nodes[d].iter().enumerate() {
            let wk = mult[d][k];
            if wk == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in d + 1..l {
                for (m, &y) in nodes[j].iter().enumerate() {
                    next[j][m] = mult[j][m] * (z - y) / (z - q * y);
                }
            }
            total += wk * rec(d + 1, nodes, &next, q);
        }
        total
    }
    if l == 0 {
        return Complex64::new(1.0, 0.0);
    }
    rec(0, &nodes, &weights, q)
}

#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    pub start_nodes: usize,
    pub max_nodes: usize,
    pub tol: f64,
}

impl QuadratureOptions {
    /// 512 nodes per circle for up to two variables; the tensor grid for more
    /// variables starts at 128.
    pub fn for_dim(l: usize) -> Self {
        let start = if l <= 2 { 512 } else { 128 };
        let max = match l {
            0 | 1 => 1 << 16,
            2 => 4096,
            _ => 1024,
        };
        QuadratureOptions { start_nodes: start, max_nodes: max, tol: 1e-13 }
    }
}

fn adaptive(fs: &[&dyn Fn(Complex64) -> Complex64], c: &NestedContours, q: f64, opt: QuadratureOptions) -> Result<(f64, f64)> {
    let mut n = opt.start_nodes;
    let mut prev = nested_integral(fs, c, q, n);
    loop {
        let n2 = 2 * n;
        if n2 > opt.max_nodes {
            return Err(Error::NotConverged(format!("quadrature unstable at {n} nodes")));
        }
        let cur = nested_integral(fs, c, q, n2);
        let err = (cur - prev).norm();
        if err <= opt.tol * cur.norm().max(1.0) {
            return Ok((cur.re, err.max(cur.im.abs())));
        }
        prev = cur;
        n = n2;
    }
}

/// `E prod_j (q^{h(N_j+1,T)} - q^{T+l-j} nu_1 ... nu_{N_j})` by quadrature of
/// the nested contour formula. Returns the value and an error estimate.
pub fn moment_product_quadrature(n_list: &[usize], t: usize, p: &ModelParams, opt: Option<QuadratureOptions>) -> Result<(f64, f64)> {
    check_q(p.q)?;
    if n_list.windows(2).any(|w| w[0] < w[1]) || n_list.contains(&0) {
        return Err(Error::InvalidParams("need N_1 >= ... >= N_l >= 1".into()));
    }
    let l = n_list.len();
    if l == 0 {
        return Ok((1.0, 0.0));
    }
    let n_max = n_list[0];
    p.require(n_max, t)?;
    let q = p.q;
    let c = nested_contours(&p.a[..n_max], q, l)?;
    let u = &p.u[..t];
    let g = |n: usize| {
        move |z: Complex64| {
            let mut v = 1.0 / z;
            for i in 0..n {
                v *= (p.a[i] - p.nu[i] * z) / (p.a[i] - z);
            }
            for &r in u {
                v *= (1.0 - q * r * z) / (1.0 - r * z);
            }
            v
        }
    };
    let closures: Vec<_> = n_list.iter().map(|&n| g(n)).collect();
    let fs: Vec<&dyn Fn(Complex64) -> Complex64> = closures.iter().map(|f| f as &dyn Fn(Complex64) -> Complex64).collect();
    let (v, e) = adaptive(&fs, &c, q, opt.unwrap_or(QuadratureOptions::for_dim(l)))?;
    let pre = if l % 2 == 0 { 1.0 } else { -1.0 } * q.powi((l * (l - 1) / 2) as i32);
    Ok((pre * v, pre.abs() * e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WhittakerMethod {
    NestedContour,
    DifferenceOperator,
}

/// `E q^{k lambda_N}` under the q-Whittaker measure with column variables
/// `a` and specialization `rho`.
pub fn moment_qwhittaker(k: usize, a: &[f64], rho: &Specialization, q: f64, method: WhittakerMethod) -> Result<(f64, f64)> {
    check_q(q)?;
    if a.is_empty() {
        return Err(Error::InvalidParams("need at least one variable".into()));
    }
    for &ai in a {
        for &al in &rho.alphas {
            if ai * al >= 1.0 {
                return Err(Error::InvalidParams(format!("a alpha = {} is not below 1", ai * al)));
            }
        }
    }
    if k == 0 {
        return Ok((1.0, 0.0));
    }
    match method {
        WhittakerMethod::NestedContour => {
            let c = nested_contours(a, q, k)?;
            let f = |z: Complex64| {
                let mut v = 1.0 / z;
                for &am in a {
                    v *= am / (am - z);
                }
                for &al in &rho.alphas {
                    v *= 1.0 - al * z;
                }
                for &b in &rho.betas {
                    v *= (1.0 + q * b * z) / (1.0 + b * z);
                }
                v * ((q - 1.0) * rho.gamma * z).exp()
            };
            let fs: Vec<&dyn Fn(Complex64) -> Complex64> = (0..k).map(|_| &f as &dyn Fn(Complex64) -> Complex64).collect();
            let (v, e) = adaptive(&fs, &c, q, QuadratureOptions::for_dim(k))?;
            let pre = if k % 2 == 0 { 1.0 } else { -1.0 } * q.powi((k * (k - 1) / 2) as i32);
            Ok((pre * v, pre.abs() * e))
        }
        WhittakerMethod::DifferenceOperator => {
            let n = a.len();
            let base = EvaluablePoint { a: a.to_vec(), nu: vec![0.0; n] };
            let pi = |x: &EvaluablePoint| -> Result<f64> {
                let mut v = 1.0;
                for &ai in &x.a {
                    v *= pi_w(ai, rho, q)?;
                }
                Ok(v)
            };
            let ops = vec![Operator::W(n); k];
            let v = apply_chain(&ops, &pi, &base, q)? / pi(&base)?;
            Ok((v, 1e-14 * (k as f64)))
        }
    }
}

/// The specialization matched to the height function at `(N, T)`:
/// alphas `c_1..c_N` (zeros dropped), betas `-u_1..-u_T`.
pub fn matched_specialization(p: &ModelParams, n: usize, t: usize) -> Specialization {
    Specialization {
        alphas: (1..=n).map(|j| p.c(j)).filter(|&c| c != 0.0).collect(),
        betas: p.u[..t].iter().map(|u| -u).collect(),
        gamma: 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaplaceMode {
    /// Monte Carlo over the vertex model.
    Vertex { budget: u64, seed: u64 },
    /// Series over q-Whittaker moments.
    QWhittaker,
}

/// `E[(zeta q^T nu_1..nu_N; q)_inf / (zeta q^{h(N+1,T)}; q)_inf]` in vertex
/// mode, `E[1/(zeta q^{lambda_N}; q)_inf]` in q-Whittaker mode.
pub fn q_laplace(n: usize, t: usize, p: &ModelParams, zeta: f64, mode: LaplaceMode) -> Result<(f64, f64)> {
    check_q(p.q)?;
    if !(zeta.abs() < 1.0) {
        return Err(Error::InvalidParams("q-Laplace transform needs |zeta| < 1".into()));
    }
    p.require(n, t)?;
    let q = p.q;
    match mode {
        LaplaceMode::Vertex { budget, seed } => {
            let s = QuadrantSampler::new(p, Boundary::Step, n.max(1), t)?;
            let mut f = s.empty_field();
            let num = cpoch_inf(Complex64::new(zeta * q.powi(t as i32) * p.nu[..n].iter().product::<f64>(), 0.0), q).re;
            let est = mc_estimate(budget, &[seed], |rng| {
                s.sample_into(rng, &mut f);
                let h = f.get(n + 1, t);
                num / cpoch_inf(Complex64::new(zeta * q.powi(h as i32), 0.0), q).re
            });
            Ok((est.mean, est.se))
        }
        LaplaceMode::QWhittaker => {
            let rho = matched_specialization(p, n, t);
            let fact = qfact_table(q, 400);
            let mut total = 0.0;
            let mut l = 0usize;
            loop {
                let w = zeta.powi(l as i32) / fact[l];
                if w.abs() < 1e-12 || l >= 400 {
                    // remaining terms are bounded by a geometric series in |zeta|
                    let tail = w.abs() / (fact[400] * (1.0 - zeta.abs()));
                    return Ok((total, tail));
                }
                let (m, _) = moment_qwhittaker(l, &p.a[..n], &rho, q, WhittakerMethod::DifferenceOperator)?;
                total += w * m;
                l += 1;
            }
        }
    }
}

impl MomentRecord {
    pub fn new(formula: &str, p: &impl Serialize, value: f64, method: &str, error_estimate: f64) -> Self {
        MomentRecord {
            formula: formula.into(),
            params_digest: digest_json(p),
            value,
            method: method.into(),
            error_estimate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vertex::row_state_law;

    fn params() -> ModelParams {
        ModelParams::new(0.45, vec![-0.6, -1.1, -0.35], vec![1.1, 0.9, 1.25], vec![0.3, 0.5, 0.2])
    }

    fn exact_plain(n_list: &[usize], t: usize, p: &ModelParams) -> f64 {
        let n_max = *n_list.iter().max().unwrap();
        let law = row_state_law(p, Boundary::Step, n_max.max(1), t).unwrap();
        law.iter()
            .map(|(s, w)| w * n_list.iter().map(|&n| p.q.powi(s.height(n + 1) as i32)).product::<f64>())
            .sum()
    }

    fn exact_centered(n_list: &[usize], t: usize, p: &ModelParams) -> f64 {
        let n_max = *n_list.iter().max().unwrap();
        let l = n_list.len();
        let law = row_state_law(p, Boundary::Step, n_max, t).unwrap();
        law.iter()
            .map(|(s, w)| {
                w * n_list
                    .iter()
                    .enumerate()
                    .map(|(j, &n)| {
                        p.q.powi(s.height(n + 1) as i32)
                            - p.q.powi((t + l - j - 1) as i32) * p.nu[..n].iter().product::<f64>()
                    })
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn residue_of_double_pole() {
        // 1/(w-2)^2 * w^3 has residue 3*4 = 12 at 2
        let mut f = LinearProduct::new();
        f.push(-2.0, 1.0, -2);
        f.push(0.0, 1.0, 3);
        assert!((f.residue_at(2.0) - 12.0).abs() < 1e-12);
        assert_eq!(f.residue_at(1.0), 0.0);
    }

    #[test]
    fn empty_column_gives_q_power() {
        let p = params();
        for t in 0..=3 {
            let v = moment_height_residues(&[0], t, &p).unwrap();
            assert!((v - p.q.powi(t as i32)).abs() < 1e-13);
            let v = moment_height_residues(&[0, 0], t, &p).unwrap();
            assert!((v - p.q.powi(2 * t as i32)).abs() < 1e-13);
        }
    }

    #[test]
    fn residues_match_enumeration() {
        let p = params();
        for t in 1..=3 {
            for nl in [vec![1], vec![3], vec![2, 1], vec![3, 3], vec![3, 2, 1]] {
                let r = moment_height_residues(&nl, t, &p).unwrap();
                let e = exact_plain(&nl, t, &p);
                assert!((r - e).abs() < 1e-12, "{nl:?} T={t}: {r} vs {e}");
            }
        }
    }

    #[test]
    fn quadrature_matches_enumeration() {
        let p = params();
        for t in 1..=3 {
            for nl in [vec![1], vec![3], vec![2, 2], vec![3, 1]] {
                let (v, err) = moment_product_quadrature(&nl, t, &p, None).unwrap();
                let e = exact_centered(&nl, t, &p);
                assert!((v - e).abs() < 1e-11, "{nl:?} T={t}: {v} vs {e} ({err})");
            }
        }
    }

    #[test]
    fn recombination_single() {
        let p = params();
        let v = plain_from_centered(&[2], 2, &p, |nl| Ok(exact_centered(nl, 2, &p))).unwrap();
        assert!((v - exact_plain(&[2], 2, &p)).abs() < 1e-13);
        let v = plain_from_centered(&[3, 1], 2, &p, |nl| Ok(exact_centered(nl, 2, &p))).unwrap();
        assert!((v - exact_plain(&[3, 1], 2, &p)).abs() < 1e-13);
    }

    #[test]
    fn formal_identity_small() {
        let r = formal_identity_check(&[0.3, -1.2, 0.7], &[1.1, 0.4, -0.5], 0.6).unwrap();
        assert!(r.abs() < 1e-14);
    }

    #[test]
    fn whittaker_routes_agree() {
        let rho = Specialization { alphas: vec![0.3], betas: vec![0.5, 0.2], gamma: 0.4 };
        let a = [1.0, 0.8];
        for k in 1..=2 {
            let (x, _) = moment_qwhittaker(k, &a, &rho, 0.5, WhittakerMethod::NestedContour).unwrap();
            let (y, _) = moment_qwhittaker(k, &a, &rho, 0.5, WhittakerMethod::DifferenceOperator).unwrap();
            assert!((x - y).abs() < 1e-11, "{k}: {x} {y}");
        }
    }

    #[test]
    fn nested_contours_reject_spread() {
        assert!(nested_contours(&[1.0, 3.0], 0.5, 2).is_err());
    }
}
