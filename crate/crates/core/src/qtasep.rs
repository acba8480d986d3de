//! Discrete time q-TASEP with geometric and Bernoulli moves.
//!
//! Particles sit at `x_1 > x_2 > ...`; particle `i` has rate `a_i` and sees the
//! gap `x_{i-1} - x_i - 1` (infinite for the first particle).
//!
//! * Geometric move `G(alpha)`: all particles jump in parallel, particle `i`
//!   by `j ~ p_{gap, a_i alpha}` where
//!   `p_{m,alpha}(j) = alpha^j (alpha;q)_{m-j} (q;q)_m / ((q;q)_j (q;q)_{m-j})`.
//! * Bernoulli move `B(beta)`: particles update left to right. Particle `i`
//!   jumps by one with probability `a_i beta / (1 + a_i beta)` if particle
//!   `i-1` jumped, and with `(1 - q^gap) a_i beta / (1 + a_i beta)` otherwise.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_q, Error, Result};
use crate::params::ModelParams;
use crate::qseries::{qpoch_finite, qpoch_inf, PochLen};
use crate::rng::Rng;

/// Cumulative mass at which the inverse CDF of an unbounded jump is cut.
pub const INFINITE_GAP_CUT: f64 = 1.0 - 1e-14;

pub fn q_geom_pmf(m: PochLen, alpha: f64, q: f64, j: u64) -> Result<f64> {
    check_q(q)?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParams(format!("geometric parameter {alpha} outside [0,1)")));
    }
    Ok(match m {
        PochLen::Finite(m) => {
            if j > m {
                0.0
            } else {
                alpha.powi(j as i32) * qpoch_finite(alpha, q, m - j) * qpoch_finite(q, q, m)
                    / (qpoch_finite(q, q, j) * qpoch_finite(q, q, m - j))
            }
        }
        PochLen::Infinite => alpha.powi(j as i32) * qpoch_inf(alpha, q) / qpoch_finite(q, q, j),
    })
}

/// q-Hahn jump distribution `phi(j | ell)` with parameters `eta`, `zeta`.
pub fn q_hahn_pmf(eta: f64, zeta: f64, q: f64, ell: PochLen, j: u64) -> Result<f64> {
    check_q(q)?;
    if eta == 0.0 {
        if zeta != 0.0 {
            return Err(Error::InvalidParams("q-Hahn weights need eta != 0 when zeta != 0".into()));
        }
        return Ok(if j == 0 { 1.0 } else { 0.0 });
    }
    let ratio = zeta / eta;
    let v = match ell {
        PochLen::Finite(l) => {
            if j > l {
                return Ok(0.0);
            }
            eta.powi(j as i32) * qpoch_finite(ratio, q, j) * qpoch_finite(eta, q, l - j) / qpoch_finite(zeta, q, l)
                * qpoch_finite(q, q, l)
                / (qpoch_finite(q, q, j) * qpoch_finite(q, q, l - j))
        }
        PochLen::Infinite => {
            eta.powi(j as i32) * qpoch_finite(ratio, q, j) * qpoch_inf(eta, q)
                / (qpoch_finite(q, q, j) * qpoch_inf(zeta, q))
        }
    };
    if v < -1e-14 || !v.is_finite() {
        return Err(Error::NegativeWeight { weight: v, context: format!("q-Hahn eta={eta} zeta={zeta} j={j}") });
    }
    Ok(v.max(0.0))
}

/// Cached constants for sampling `p_{m, alpha}` for any gap `m`.
#[derive(Clone, Debug)]
pub struct GeomKernel {
    alpha: f64,
    /// `(alpha;q)_m` for small `m`; beyond the table it equals `(alpha;q)_inf`.
    poch: Vec<f64>,
    poch_inf: f64,
    q_pow: Vec<f64>,
}

impl GeomKernel {
    pub fn new(alpha: f64, q: f64) -> Result<Self> {
        check_q(q)?;
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParams(format!("geometric parameter {alpha} outside [0,1)")));
        }
        let mut poch = vec![1.0];
        let mut q_pow = vec![1.0];
        let mut ak = alpha;
        while ak > 1e-18 || q_pow.len() < 2 {
            let last = *poch.last().unwrap();
            poch.push(last * (1.0 - ak));
            ak *= q;
            q_pow.push(q_pow.last().unwrap() * q);
        }
        let poch_inf = *poch.last().unwrap();
        while *q_pow.last().unwrap() > 1e-18 {
            q_pow.push(q_pow.last().unwrap() * q);
        }
        Ok(GeomKernel { alpha, poch, poch_inf, q_pow })
    }

    fn poch_at(&self, m: u64) -> f64 {
        self.poch.get(m as usize).copied().unwrap_or(self.poch_inf)
    }

    fn qp(&self, k: u64) -> f64 {
        self.q_pow.get(k as usize).copied().unwrap_or(0.0)
    }

    /// Draws a jump with gap `m` (`None` for an unbounded gap).
    pub fn sample(&self, m: Option<u64>, rng: &mut Rng) -> u64 {
        if self.alpha == 0.0 || m == Some(0) {
            return 0;
        }
        let u: f64 = rng.gen();
        let mut p = match m {
            Some(m) => self.poch_at(m),
            None => self.poch_inf,
        };
        let mut cdf = p;
        let mut j = 0u64;
        while u > cdf {
            match m {
                Some(m) => {
                    if j == m {
                        break;
                    }
                    let r = m - j;
                    p *= self.alpha * (1.0 - self.qp(r)) / ((1.0 - self.qp(j + 1)) * (1.0 - self.alpha * self.qp(r - 1)));
                }
                None => {
                    if cdf >= INFINITE_GAP_CUT {
                        break;
                    }
                    p *= self.alpha / (1.0 - self.qp(j + 1));
                }
            }
            j += 1;
            cdf += p;
        }
        j
    }

    /// Full pmf for gap `m`; an unbounded gap is truncated once the remaining
    /// mass is below `tail`. Returns the pmf and the dropped mass.
    pub fn pmf(&self, m: Option<u64>, tail: f64) -> (Vec<f64>, f64) {
        let mut out = Vec::new();
        let mut p = match m {
            Some(m) => self.poch_at(m),
            None => self.poch_inf,
        };
        let mut cdf = 0.0;
        let mut j = 0u64;
        loop {
            out.push(p);
            cdf += p;
            match m {
                Some(m) => {
                    if j == m {
                        break;
                    }
                    let r = m - j;
                    p *= self.alpha * (1.0 - self.qp(r)) / ((1.0 - self.qp(j + 1)) * (1.0 - self.alpha * self.qp(r - 1)));
                }
                None => {
                    // later ratios alpha/(1-q^k) only decrease, so the rest is
                    // bounded by a geometric series
                    let r = self.alpha / (1.0 - self.qp(j + 1));
                    if self.alpha == 0.0 || (r < 1.0 && p * r / (1.0 - r) < tail) {
                        break;
                    }
                    p *= r;
                }
            }
            j += 1;
        }
        let dropped = if m.is_none() { (1.0 - cdf).max(0.0) } else { 0.0 };
        (out, dropped)
    }
}

fn gap(x: &[i64], i: usize) -> Option<u64> {
    if i == 0 {
        None
    } else {
        Some((x[i - 1] - x[i] - 1) as u64)
    }
}

fn check_config(x: &[i64]) -> Result<()> {
    if x.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidParams("configuration must be strictly decreasing".into()));
    }
    Ok(())
}

fn kernels(a: &[f64], alpha: f64, q: f64) -> Result<Vec<GeomKernel>> {
    a.iter().map(|&ai| GeomKernel::new(ai * alpha, q)).collect()
}

/// Parallel geometric update. `a` holds the particle rates.
pub fn geometric_move(x: &mut [i64], a: &[f64], alpha: f64, q: f64, rng: &mut Rng) -> Result<()> {
    check_config(x)?;
    let ks = kernels(&a[..x.len()], alpha, q)?;
    geometric_move_with(x, &ks, rng);
    Ok(())
}

pub(crate) fn geometric_move_with(x: &mut [i64], ks: &[GeomKernel], rng: &mut Rng) {
    let mut prev_old = i64::MAX;
    for i in 0..x.len() {
        let m = if i == 0 { None } else { Some((prev_old - x[i] - 1) as u64) };
        prev_old = x[i];
        x[i] += ks[i].sample(m, rng) as i64;
    }
}

/// Sequential Bernoulli update; gaps are taken from the configuration before the move.
pub fn bernoulli_move(x: &mut [i64], a: &[f64], beta: f64, q: f64, rng: &mut Rng) -> Result<()> {
    check_q(q)?;
    check_config(x)?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidParams(format!("Bernoulli parameter {beta} must be nonnegative")));
    }
    let mut prev_old = i64::MAX;
    let mut prev_jumped = false;
    for i in 0..x.len() {
        let p = a[i] * beta / (1.0 + a[i] * beta);
        let pj = if i == 0 || prev_jumped { p } else { p * (1.0 - q.powi((prev_old - x[i] - 1) as i32)) };
        prev_old = x[i];
        let jump = pj > 0.0 && rng.gen::<f64>() < pj;
        if jump {
            x[i] += 1;
        }
        prev_jumped = jump;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Move {
    Geometric(f64),
    Bernoulli(f64),
}

/// Exact law of the configuration after one move. Unbounded jumps of the
/// first particle are cut when the remaining mass drops below `tail`; the
/// dropped mass is returned.
pub fn move_law(x: &[i64], a: &[f64], mv: Move, q: f64, tail: f64) -> Result<(Vec<(Vec<i64>, f64)>, f64)> {
    check_q(q)?;
    check_config(x)?;
    let l = x.len();
    match mv {
        Move::Geometric(alpha) => {
            let ks = kernels(&a[..l], alpha, q)?;
            let mut out = vec![(Vec::with_capacity(l), 1.0)];
            let mut dropped = 0.0;
            for i in 0..l {
                let (pmf, d) = ks[i].pmf(gap(x, i), tail);
                dropped += d;
                let mut next = Vec::with_capacity(out.len() * pmf.len());
                for (cfg, w) in &out {
                    for (j, pj) in pmf.iter().enumerate() {
                        if *pj == 0.0 {
                            continue;
                        }
                        let mut c = cfg.clone();
                        c.push(x[i] + j as i64);
                        next.push((c, w * pj));
                    }
                }
                out = next;
            }
            Ok((out, dropped))
        }
        Move::Bernoulli(beta) => {
            // state: (partial configuration, whether the last particle jumped)
            let mut out: Vec<(Vec<i64>, bool, f64)> = vec![(Vec::with_capacity(l), false, 1.0)];
            for i in 0..l {
                let p = a[i] * beta / (1.0 + a[i] * beta);
                let mut next = Vec::with_capacity(out.len() * 2);
                for (cfg, jumped, w) in &out {
                    let pj = match gap(x, i) {
                        None => p,
                        Some(_) if *jumped => p,
                        Some(g) => p * (1.0 - q.powi(g as i32)),
                    };
                    for (jump, pw) in [(true, pj), (false, 1.0 - pj)] {
                        if pw == 0.0 {
                            continue;
                        }
                        let mut c = cfg.clone();
                        c.push(x[i] + jump as i64);
                        next.push((c, jump, w * pw));
                    }
                }
                out = next;
            }
            Ok((out.into_iter().map(|(c, _, w)| (c, w)).collect(), 0.0))
        }
    }
}

/// Sub-stochastic transition matrix on strictly decreasing configurations in
/// a box. Particles only move right, so every path between two in-box states
/// stays in the box: entries, and products of such matrices, are exact up to
/// the pmf truncation.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    pub states: Vec<Vec<i64>>,
    pub index: HashMap<Vec<i64>, usize>,
    pub matrix: DMatrix<f64>,
    /// Row mass that leaves the box.
    pub leakage: Vec<f64>,
    /// Largest row mass lost to truncating infinite jump laws.
    pub dropped: f64,
}

/// States in lexicographic order of the position vectors.
pub fn box_states(l: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    fn rec(l: usize, lo: i64, cap: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == l {
            out.push(cur.clone());
            return;
        }
        let remaining = (l - cur.len() - 1) as i64;
        for v in (lo + remaining)..=cap {
            cur.push(v);
            rec(l, lo, v - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(l, lo, hi, &mut Vec::new(), &mut out);
    out.sort();
    out
}

pub fn transition_matrix(mv: Move, a: &[f64], q: f64, lo: i64, hi: i64, tail_tol: f64) -> Result<TransitionMatrix> {
    let l = a.len();
    if l == 0 || hi - lo + 1 < l as i64 {
        return Err(Error::InvalidParams("box too small for the particle count".into()));
    }
    let states = box_states(l, lo, hi);
    let index: HashMap<Vec<i64>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let n = states.len();
    let mut matrix = DMatrix::zeros(n, n);
    let mut leakage = vec![0.0; n];
    let mut max_dropped: f64 = 0.0;
    for (r, s) in states.iter().enumerate() {
        let (law, dropped) = move_law(s, a, mv, q, tail_tol)?;
        let mut kept = 0.0;
        for (c, w) in law {
            if let Some(&k) = index.get(&c) {
                matrix[(r, k)] += w;
                kept += w;
            }
        }
        leakage[r] = (1.0 - kept).max(0.0);
        max_dropped = max_dropped.max(dropped);
    }
    if max_dropped > tail_tol {
        return Err(Error::Infeasible(format!("truncated jump mass {max_dropped:e} exceeds {tail_tol:e}")));
    }
    Ok(TransitionMatrix { states, index, matrix, leakage, dropped: max_dropped })
}

/// Unit-step path in the `(N, T)` plane.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeLikePath(pub Vec<(usize, usize)>);

impl TimeLikePath {
    pub fn validate(&self) -> Result<()> {
        let pts = &self.0;
        if pts.is_empty() || pts[0].0 < 1 {
            return Err(Error::InvalidParams("path must start at N >= 1".into()));
        }
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ok = (b.0 == a.0 + 1 && b.1 == a.1) || (b.0 == a.0 && b.1 == a.1 + 1);
            if !ok {
                return Err(Error::InvalidParams(format!("{a:?} -> {b:?} is not a unit step")));
            }
        }
        Ok(())
    }

    /// Builds a path from `start` following a string of `N`/`T` steps.
    pub fn from_steps(start: (usize, usize), steps: &str) -> Result<Self> {
        let mut pts = vec![start];
        let mut cur = start;
        for ch in steps.chars() {
            match ch {
                'N' | 'n' => cur.0 += 1,
                'T' | 't' => cur.1 += 1,
                c if c.is_whitespace() => continue,
                c => return Err(Error::InvalidParams(format!("unknown step '{c}'"))),
            }
            pts.push(cur);
        }
        let p = TimeLikePath(pts);
        p.validate()?;
        Ok(p)
    }

    /// Path from `(1, 0)` to `start`, then along `self`.
    pub(crate) fn with_prefix(&self) -> Vec<(usize, usize)> {
        let (n0, t0) = self.0[0];
        let mut v = Vec::new();
        for n in 1..n0 {
            v.push((n, 0));
        }
        for t in 0..t0 {
            v.push((n0, t));
        }
        v.extend_from_slice(&self.0);
        v
    }

    pub fn max_n(&self) -> usize {
        self.0.iter().map(|p| p.0).max().unwrap_or(1)
    }
}

/// Which move is applied when stepping to `to`, for step-Bernoulli data.
pub fn move_for_step(p: &ModelParams, from: (usize, usize), to: (usize, usize)) -> Move {
    if to.0 > from.0 {
        Move::Geometric(p.c(to.0))
    } else {
        Move::Bernoulli(-p.u[to.1 - 1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub big_t: usize,
    #[serde(rename = "move")]
    pub mv: String,
    pub x: Vec<i64>,
    #[serde(rename = "X_value")]
    pub x_value: i64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Trajectory(pub Vec<TrajectoryRecord>);

impl Trajectory {
    pub fn to_jsonl(&self) -> String {
        self.0.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect()
    }
}

/// Runs the mixed process from the step configuration along `path`.
/// At each point the record holds `x_N + N`.
pub fn run_mixed(path: &TimeLikePath, p: &ModelParams, rng: &mut Rng) -> Result<Trajectory> {
    check_q(p.q)?;
    path.validate()?;
    let l = path.max_n();
    let t_max = path.0.iter().map(|p| p.1).max().unwrap_or(0);
    p.require(l, t_max)?;
    let mut x: Vec<i64> = (1..=l as i64).map(|i| -i).collect();
    let full = path.with_prefix();
    let skip = full.len() - path.0.len();
    let mut out = Trajectory::default();
    for (k, &pt) in full.iter().enumerate() {
        let mut label = "start";
        if k > 0 {
            match move_for_step(p, full[k - 1], pt) {
                Move::Geometric(alpha) => {
                    geometric_move(&mut x, &p.a[..l], alpha, p.q, rng)?;
                    label = "G";
                }
                Move::Bernoulli(beta) => {
                    bernoulli_move(&mut x, &p.a[..l], beta, p.q, rng)?;
                    label = "B";
                }
            }
        }
        if k >= skip {
            out.0.push(TrajectoryRecord {
                t: k - skip,
                n: pt.0,
                big_t: pt.1,
                mv: if k == skip { "start".into() } else { label.into() },
                x: x.clone(),
                x_value: x[pt.0 - 1] + pt.0 as i64,
            });
        }
    }
    Ok(out)
}
