//! Local coupling of Bernoulli and geometric q-TASEP moves through one
//! vertex, and the exact check that step-Bernoulli heights along a
//! time-like path have the law of the mixed q-TASEP.
//!
//! Given `x`, `y = B(x)` and `x' = G(x)`, the coupled position of particle
//! `m` is drawn from the vertex `L_{-beta, a_m, alpha a_m}` with
//! `i1 = x_{m-1} - x'_m - 1` arrows from below and `j1 = y_{m-1} - x_{m-1}`
//! from the left: a right exit gives `y'_m = x'_m + 1`, otherwise `x'_m`.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_q, Error, Result};
use crate::params::{digest_json, ModelParams};
use crate::qtasep::{move_law, GeomKernel, Move, TimeLikePath};
use crate::rng::Rng;
use crate::stats::total_variation;
use crate::vertex::{right_prob, row_transition, Boundary, RowState};

pub const COUPLING_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub check: String,
    pub params_digest: String,
    pub tv_distance: f64,
    pub truncation_deficit: f64,
    pub pass: bool,
}

impl CouplingReport {
    fn new(check: &str, digest: String, tv: f64, deficit: f64) -> Self {
        CouplingReport {
            check: check.into(),
            params_digest: digest,
            tv_distance: tv,
            truncation_deficit: deficit,
            pass: tv <= COUPLING_TOL && deficit <= COUPLING_TOL,
        }
    }
}

/// Local data for one coupled update of particle `m` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalInputs {
    /// `x_{m-1}`, or `None` for the first particle.
    pub x_prev: Option<i64>,
    /// `y_{m-1}`; ignored for the first particle.
    pub y_prev: i64,
    /// `x'_m`.
    pub xp: i64,
    pub a_m: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Two-point law of the coupled position: `(x'_m, p0), (x'_m + 1, p1)`.
pub fn y_dagger_law(inp: &LocalInputs, q: f64) -> Result<[(i64, f64); 2]> {
    check_q(q)?;
    let au = -inp.a_m * inp.beta;
    let nu = inp.alpha * inp.a_m;
    let (qg, j1) = match inp.x_prev {
        None => (0.0, 0u8),
        Some(xp) => {
            let g = xp - inp.xp - 1;
            let j1 = inp.y_prev - xp;
            if g < 0 || !(0..=1).contains(&j1) {
                return Err(Error::InvalidParams(format!("inconsistent local data {inp:?}")));
            }
            (q.powi(g as i32), j1 as u8)
        }
    };
    let p1 = right_prob(au, nu, qg, j1);
    if !(-1e-15..=1.0 + 1e-15).contains(&p1) {
        return Err(Error::NegativeWeight { weight: p1, context: format!("coupling vertex {inp:?}") });
    }
    Ok([(inp.xp, 1.0 - p1), (inp.xp + 1, p1)])
}

pub fn sample_y_dagger(inp: &LocalInputs, q: f64, rng: &mut Rng) -> Result<i64> {
    let law = y_dagger_law(inp, q)?;
    Ok(if rng.gen::<f64>() < law[1].1 { law[1].0 } else { law[0].0 })
}

#[derive(Serialize)]
struct LocalDigest<'a> {
    x: &'a [i64],
    m: usize,
    a: &'a [f64],
    alpha: f64,
    beta: f64,
    q: f64,
}

const TAIL: f64 = 1e-14;

/// Marginal of `(x_{m-1} image, x_m image)` pairs after one move, from the
/// exact law of the first `m` particles. Index `m-1` missing means `+inf`.
fn pair_law(x: &[i64], a: &[f64], mv: Move, q: f64, m: usize) -> Result<(HashMap<(i64, i64), f64>, f64)> {
    let (law, dropped) = move_law(&x[..m], &a[..m], mv, q, TAIL)?;
    let mut out = HashMap::new();
    for (c, w) in law {
        let prev = if m >= 2 { c[m - 2] } else { i64::MAX };
        *out.entry((prev, c[m - 1])).or_insert(0.0) += w;
    }
    Ok((out, dropped))
}

fn check_local(x: &[i64], m: usize, a: &[f64]) -> Result<()> {
    if m == 0 || m > x.len() || a.len() < m {
        return Err(Error::InvalidParams(format!("particle index {m} out of range")));
    }
    Ok(())
}

/// Law of `(y_{m-1}, y'_m)` from the vertex, paired with `x'_m` as well.
fn dagger_side(x: &[i64], m: usize, a: &[f64], alpha: f64, beta: f64, q: f64) -> Result<(HashMap<(i64, i64, i64), f64>, f64)> {
    let (ylaw, _) = pair_law(x, a, Move::Bernoulli(beta), q, m)?;
    let mut yprev: HashMap<i64, f64> = HashMap::new();
    for ((p, _), w) in ylaw {
        *yprev.entry(p).or_insert(0.0) += w;
    }
    let gap = if m >= 2 { Some((x[m - 2] - x[m - 1] - 1) as u64) } else { None };
    let (jumps, dropped) = GeomKernel::new(a[m - 1] * alpha, q)?.pmf(gap, TAIL);
    let mut out = HashMap::new();
    for (&yp, &wy) in &yprev {
        for (j, &pj) in jumps.iter().enumerate() {
            let xp = x[m - 1] + j as i64;
            let inp = LocalInputs {
                x_prev: if m >= 2 { Some(x[m - 2]) } else { None },
                y_prev: yp,
                xp,
                a_m: a[m - 1],
                alpha,
                beta,
            };
            for (yd, pd) in y_dagger_law(&inp, q)? {
                *out.entry((yp, xp, yd)).or_insert(0.0) += wy * pj * pd;
            }
        }
    }
    Ok((out, dropped))
}

/// TV distance between the laws of `(y_{m-1}, y'_m)` and `(y_{m-1}, (G B x)_m)`.
pub fn joint_law_check_prop_a(x: &[i64], m: usize, a: &[f64], alpha: f64, beta: f64, q: f64) -> Result<CouplingReport> {
    check_q(q)?;
    check_local(x, m, a)?;
    let (dag, d1) = dagger_side(x, m, a, alpha, beta, q)?;
    let mut lhs: HashMap<(i64, i64), f64> = HashMap::new();
    for ((yp, _, yd), w) in dag {
        *lhs.entry((yp, yd)).or_insert(0.0) += w;
    }
    let (ylaw, _) = pair_law(x, a, Move::Bernoulli(beta), q, m)?;
    let mut rhs: HashMap<(i64, i64), f64> = HashMap::new();
    let k = GeomKernel::new(a[m - 1] * alpha, q)?;
    let mut d2: f64 = 0.0;
    for ((yp, ym), w) in ylaw {
        let gap = if m >= 2 { Some((yp - ym - 1) as u64) } else { None };
        let (jumps, d) = k.pmf(gap, TAIL);
        d2 = d2.max(d);
        for (j, pj) in jumps.iter().enumerate() {
            *rhs.entry((yp, ym + j as i64)).or_insert(0.0) += w * pj;
        }
    }
    let digest = digest_json(&LocalDigest { x, m, a, alpha, beta, q });
    Ok(CouplingReport::new("prop_a", digest, total_variation(&lhs, &rhs), d1.max(d2)))
}

/// TV distance between the laws of `(x'_m, y'_m)` and `(x'_m, (B G x)_m)`.
pub fn joint_law_check_prop_b(x: &[i64], m: usize, a: &[f64], alpha: f64, beta: f64, q: f64) -> Result<CouplingReport> {
    check_q(q)?;
    check_local(x, m, a)?;
    let (dag, d1) = dagger_side(x, m, a, alpha, beta, q)?;
    let mut lhs: HashMap<(i64, i64), f64> = HashMap::new();
    for ((_, xp, yd), w) in dag {
        *lhs.entry((xp, yd)).or_insert(0.0) += w;
    }
    let (glaw, d2) = move_law(&x[..m], &a[..m], Move::Geometric(alpha), q, TAIL)?;
    let mut rhs: HashMap<(i64, i64), f64> = HashMap::new();
    for (xp, w) in glaw {
        let (blaw, _) = move_law(&xp, &a[..m], Move::Bernoulli(beta), q, 0.0)?;
        for (y, wb) in blaw {
            *rhs.entry((xp[m - 1], y[m - 1])).or_insert(0.0) += w * wb;
        }
    }
    let digest = digest_json(&LocalDigest { x, m, a, alpha, beta, q });
    Ok(CouplingReport::new("prop_b", digest, total_variation(&lhs, &rhs), d1 + d2))
}

#[derive(Serialize)]
struct TheoremDigest<'a> {
    path: &'a TimeLikePath,
    params: &'a ModelParams,
    order: usize,
}

/// Joint law of the heights `h(N_t + r, T_t)` along `path` under the
/// boundary with `nu_1 = ... = nu_r = 0`.
pub fn vertex_path_law(path: &TimeLikePath, p: &ModelParams, order: usize) -> Result<HashMap<Vec<i64>, f64>> {
    path.validate()?;
    let boundary = if order <= 1 { Boundary::StepBernoulli } else { Boundary::GenStepBernoulli(order as u32) };
    let r = order.max(1);
    let n_window = path.max_n() + r - 1;
    let t_max = path.0.iter().map(|p| p.1).max().unwrap_or(0);
    p.require(n_window, t_max)?;
    let mut law: HashMap<(RowState, Vec<i64>), f64> = HashMap::new();
    law.insert((RowState::empty(n_window), Vec::new()), 1.0);
    let mut idx = 0;
    for t in 0..=t_max {
        // record every path point on this row
        while idx < path.0.len() && path.0[idx].1 == t {
            let n = path.0[idx].0;
            let mut next = HashMap::new();
            for ((s, hist), w) in law {
                let mut h = hist.clone();
                h.push(s.height(n + r) as i64);
                *next.entry((s, h)).or_insert(0.0) += w;
            }
            law = next;
            idx += 1;
        }
        if t == t_max {
            break;
        }
        let mut next = HashMap::new();
        for ((s, hist), w) in &law {
            for (s2, w2) in row_transition(p, boundary, t + 1, s)? {
                *next.entry((s2, hist.clone())).or_insert(0.0) += w * w2;
            }
        }
        law = next;
    }
    let mut out = HashMap::new();
    for ((_, h), w) in law {
        *out.entry(h).or_insert(0.0) += w;
    }
    Ok(out)
}

/// Joint law of `x_{N_t + r - 1} + N_t + r - 1` along `path` for the mixed
/// q-TASEP. Returns the law and the truncated mass.
pub fn qtasep_path_law(path: &TimeLikePath, p: &ModelParams, order: usize) -> Result<(HashMap<Vec<i64>, f64>, f64)> {
    path.validate()?;
    let r = order.max(1);
    let l = path.max_n() + r - 1;
    let t_max = path.0.iter().map(|p| p.1).max().unwrap_or(0);
    p.require(l, t_max)?;
    let full = path.with_prefix();
    let skip = full.len() - path.0.len();
    let mut deficit = 0.0;
    let mut law: HashMap<(Vec<i64>, Vec<i64>), f64> = HashMap::new();
    law.insert(((1..=l as i64).map(|i| -i).collect(), Vec::new()), 1.0);
    for (k, &pt) in full.iter().enumerate() {
        if k > 0 {
            let prev = full[k - 1];
            let mv = if pt.0 > prev.0 { Move::Geometric(p.c(pt.0 + r - 1)) } else { Move::Bernoulli(-p.u[pt.1 - 1]) };
            let mut next: HashMap<(Vec<i64>, Vec<i64>), f64> = HashMap::new();
            for ((x, hist), w) in &law {
                let (ml, dropped) = move_law(x, &p.a[..l], mv, p.q, 1e-15)?;
                deficit += w * dropped;
                for (y, wy) in ml {
                    let ww = w * wy;
                    if ww < 1e-22 {
                        deficit += ww;
                        continue;
                    }
                    *next.entry((y, hist.clone())).or_insert(0.0) += ww;
                }
            }
            law = next;
        }
        if k >= skip {
            let idx = pt.0 + r - 1;
            let mut next = HashMap::with_capacity(law.len());
            for ((x, hist), w) in law {
                let mut h = hist;
                h.push(x[idx - 1] + idx as i64);
                *next.entry((x, h)).or_insert(0.0) += w;
            }
            law = next;
        }
    }
    let mut out = HashMap::new();
    for ((_, h), w) in law {
        *out.entry(h).or_insert(0.0) += w;
    }
    Ok((out, deficit))
}

/// Compares the two joint laws along `path`. `order = 1` is the
/// step-Bernoulli boundary; `order = r > 1` the generalized one.
pub fn theorem_coupling_check(path: &TimeLikePath, p: &ModelParams, order: usize) -> Result<CouplingReport> {
    check_q(p.q)?;
    let r = order.max(1);
    if p.nu.len() < r || p.nu[..r].iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidParams(format!("order {r} needs nu_1..nu_{r} = 0")));
    }
    let v = vertex_path_law(path, p, r)?;
    let (t, deficit) = qtasep_path_law(path, p, r)?;
    let digest = digest_json(&TheoremDigest { path, params: p, order: r });
    Ok(CouplingReport::new("theorem", digest, total_variation(&v, &t), deficit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn dagger_example() {
        let inp = LocalInputs { x_prev: Some(0), y_prev: 0, xp: -2, a_m: 1.0, alpha: 0.3, beta: 1.0 };
        let law = y_dagger_law(&inp, 0.5).unwrap();
        assert_eq!(law[0].0, -2);
        assert!((law[0].1 - 0.75).abs() < 1e-15);
        assert_eq!(law[1].0, -1);
        assert!((law[1].1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn first_particle_is_bernoulli() {
        let inp = LocalInputs { x_prev: None, y_prev: 0, xp: 4, a_m: 1.5, alpha: 0.2, beta: 0.8 };
        let law = y_dagger_law(&inp, 0.4).unwrap();
        assert!((law[1].1 - 1.2 / 2.2).abs() < 1e-15);
        let mut rng = stream(1, 1);
        let v = sample_y_dagger(&inp, 0.4, &mut rng).unwrap();
        assert!(v == 4 || v == 5);
    }

    #[test]
    fn props_hold_on_small_config() {
        let x = [2, 0, -1];
        let a = [1.0, 0.7, 1.3];
        for m in 1..=3 {
            let ra = joint_law_check_prop_a(&x, m, &a, 0.35, 0.9, 0.5).unwrap();
            let rb = joint_law_check_prop_b(&x, m, &a, 0.35, 0.9, 0.5).unwrap();
            assert!(ra.pass, "{ra:?}");
            assert!(rb.pass, "{rb:?}");
        }
    }

    #[test]
    fn theorem_on_short_path() {
        let p = ModelParams::new(0.5, vec![-0.8, -0.5, -1.2], vec![1.0, 0.8, 1.2, 0.9], vec![0.0, 0.4, 0.3, 0.2]);
        let path = TimeLikePath::from_steps((1, 0), "NTNT").unwrap();
        let r = theorem_coupling_check(&path, &p, 1).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
