//! Stochastic higher spin six vertex model in the quadrant.
//!
//! A vertex at column `N`, row `T` has `i1` arrows entering from below, `j1`
//! (0 or 1) from the left, and emits `i2` up and `j2` right. With
//! `g = i1` the weights are
//!
//! ```text
//! (g,0) -> (g,0)     (1 - a u q^g) / (1 - a u)
//! (g,0) -> (g-1,1)   -a u (1 - q^g) / (1 - a u)
//! (g,1) -> (g,1)     (nu q^g - a u) / (1 - a u)
//! (g,1) -> (g+1,0)   (1 - nu q^g) / (1 - a u)
//! ```
//!
//! Rows are sampled bottom to top and columns left to right, which visits
//! every vertex after the two it depends on.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_q, Error, Result};
use crate::params::{ModelParams, Partition};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arrows {
    Finite(u32),
    Infinite,
}

impl Arrows {
    fn q_pow(self, q: f64) -> f64 {
        match self {
            Arrows::Finite(g) => q.powi(g as i32),
            Arrows::Infinite => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VertexOutcome {
    pub i2: Arrows,
    pub j2: u8,
    pub weight: f64,
}

/// Probability that the outgoing horizontal edge is occupied, given `q^g`.
#[inline]
pub(crate) fn right_prob(au: f64, nu: f64, qg: f64, j1: u8) -> f64 {
    if j1 == 0 {
        -au * (1.0 - qg) / (1.0 - au)
    } else {
        (nu * qg - au) / (1.0 - au)
    }
}

/// All outcomes of one vertex with their weights.
pub fn vertex_weight_row(u: f64, a: f64, nu: f64, q: f64, i1: Arrows, j1: u8) -> Result<Vec<VertexOutcome>> {
    check_q(q)?;
    if j1 > 1 {
        return Err(Error::InvalidParams("j1 must be 0 or 1".into()));
    }
    let au = a * u;
    let qg = i1.q_pow(q);
    let right = right_prob(au, nu, qg, j1);
    let stay = if j1 == 0 { (1.0 - au * qg) / (1.0 - au) } else { (1.0 - nu * qg) / (1.0 - au) };
    for w in [right, stay] {
        if w < -1e-12 || !w.is_finite() {
            return Err(Error::NegativeWeight {
                weight: w,
                context: format!("vertex u={u} a={a} nu={nu} i1={i1:?} j1={j1}"),
            });
        }
    }
    let (i_right, i_up) = match (i1, j1) {
        (Arrows::Infinite, _) => (Arrows::Infinite, Arrows::Infinite),
        (Arrows::Finite(g), 0) => (Arrows::Finite(g.wrapping_sub(1)), Arrows::Finite(g)),
        (Arrows::Finite(g), _) => (Arrows::Finite(g), Arrows::Finite(g + 1)),
    };
    let mut out = Vec::with_capacity(2);
    if j1 == 1 {
        out.push(VertexOutcome { i2: i_right, j2: 1, weight: right });
        out.push(VertexOutcome { i2: i_up, j2: 0, weight: stay });
    } else {
        out.push(VertexOutcome { i2: i_up, j2: 0, weight: stay });
        if i1 != Arrows::Finite(0) {
            out.push(VertexOutcome { i2: i_right, j2: 1, weight: right });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// A path enters at every row through column 1.
    Step,
    /// Requires `nu_1 = 0`; the model seen from column 2 on.
    StepBernoulli,
    /// Requires `nu_1 = ... = nu_r = 0`; the model seen from column `r + 1` on.
    GenStepBernoulli(u32),
}

impl Boundary {
    fn check(self, p: &ModelParams) -> Result<()> {
        let r = match self {
            Boundary::Step => return Ok(()),
            Boundary::StepBernoulli => 1,
            Boundary::GenStepBernoulli(r) => r as usize,
        };
        if r == 0 || p.nu.len() < r || p.nu[..r].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParams(format!("boundary {self:?} needs nu_1..nu_{r} = 0")));
        }
        Ok(())
    }

    /// First column whose vertices are sampled explicitly.
    fn first_column(self) -> usize {
        match self {
            Boundary::Step => 1,
            _ => 2,
        }
    }
}

/// Heights `h(N, T)` for `1 <= N <= n_max + 1`, `0 <= T <= t_max`, plus the
/// column occupancies inside the window.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    pub n_max: usize,
    pub t_max: usize,
    pub boundary: Boundary,
    h: Vec<u32>,
    occ: Vec<u32>,
    /// Number of paths that have left through the right edge by row T.
    pub exits: Vec<u32>,
}

impl HeightField {
    fn new(n_max: usize, t_max: usize, boundary: Boundary) -> Self {
        HeightField {
            n_max,
            t_max,
            boundary,
            h: vec![0; (n_max + 1) * (t_max + 1)],
            occ: vec![0; n_max * (t_max + 1)],
            exits: vec![0; t_max + 1],
        }
    }

    /// `h(n, t)`: number of paths crossing the line `t + 1/2` at columns `>= n`.
    pub fn get(&self, n: usize, t: usize) -> u32 {
        assert!(n >= 1 && n <= self.n_max + 1 && t <= self.t_max);
        self.h[t * (self.n_max + 1) + n - 1]
    }

    /// Occupancy of column `n` above row `t`.
    pub fn occupancy(&self, n: usize, t: usize) -> u32 {
        self.occ[t * self.n_max + n - 1]
    }

    /// The row state at height `t + 1/2` as a partition, or `None` if some
    /// path already left the window.
    pub fn row_state(&self, t: usize) -> Option<Partition> {
        if self.exits[t] > 0 {
            return None;
        }
        let first = self.boundary.first_column();
        let occ: Vec<u32> = (first..=self.n_max).map(|n| self.occupancy(n, t)).collect();
        Some(Partition::from_occupancy(&occ, first as u32))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,T,h\n");
        for t in 0..=self.t_max {
            for n in 1..=self.n_max + 1 {
                let _ = writeln!(s, "{n},{t},{}", self.get(n, t));
            }
        }
        s
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for t in 0..=self.t_max {
            for n in 1..=self.n_max + 1 {
                let _ = writeln!(s, "{}", serde_json::json!({"N": n, "T": t, "h": self.get(n, t)}));
            }
        }
        s
    }
}

/// Precomputed sampler for repeated draws in a fixed window.
pub struct QuadrantSampler {
    n_max: usize,
    t_max: usize,
    boundary: Boundary,
    /// `a_n u_t`, row-major over `(t, n)`.
    au: Vec<f64>,
    nu: Vec<f64>,
    q_pows: Vec<f64>,
    entry: Vec<f64>,
}

impl QuadrantSampler {
    pub fn new(p: &ModelParams, boundary: Boundary, n_max: usize, t_max: usize) -> Result<Self> {
        check_q(p.q)?;
        if n_max == 0 {
            return Err(Error::InvalidParams("window needs at least one column".into()));
        }
        p.require(n_max, t_max)?;
        boundary.check(p)?;
        let mut au = Vec::with_capacity(n_max * t_max);
        for t in 0..t_max {
            for n in 0..n_max {
                let x = p.a[n] * p.u[t];
                if !(x < 0.0) {
                    return Err(Error::InvalidParams(format!("a_{} u_{} must be negative", n + 1, t + 1)));
                }
                au.push(x);
            }
        }
        for &v in &p.nu[..n_max] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("nu = {v} outside [0,1)")));
            }
        }
        let q_pows = (0..=t_max as i32 + 1).map(|k| p.q.powi(k)).collect();
        let entry = (0..t_max).map(|t| {
            let x = p.a[0] * p.u[t];
            -x / (1.0 - x)
        }).collect();
        Ok(QuadrantSampler { n_max, t_max, boundary, au, nu: p.nu[..n_max].to_vec(), q_pows, entry })
    }

    pub fn empty_field(&self) -> HeightField {
        HeightField::new(self.n_max, self.t_max, self.boundary)
    }

    pub fn sample_into(&self, rng: &mut Rng, f: &mut HeightField) {
        let nm = self.n_max;
        let first = self.boundary.first_column();
        f.occ.iter_mut().for_each(|x| *x = 0);
        f.h.iter_mut().for_each(|x| *x = 0);
        f.exits[0] = 0;
        for t in 1..=self.t_max {
            let (prev, cur) = f.occ.split_at_mut(t * nm);
            let prev = &prev[(t - 1) * nm..];
            let cur = &mut cur[..nm];
            let mut j: u8 = if first == 1 {
                1
            } else if rng.gen::<f64>() < self.entry[t - 1] {
                1
            } else {
                0
            };
            let row_au = &self.au[(t - 1) * nm..t * nm];
            for n in first..=nm {
                let g = prev[n - 1];
                let qg = self.q_pows[g as usize];
                let pr = right_prob(row_au[n - 1], self.nu[n - 1], qg, j);
                let j2 = if g == 0 && j == 0 { 0 } else { (rng.gen::<f64>() < pr) as u8 };
                cur[n - 1] = g + j as u32 - j2 as u32;
                j = j2;
            }
            f.exits[t] = f.exits[t - 1] + j as u32;
        }
        for t in 0..=self.t_max {
            let mut acc = f.exits[t];
            let w = nm + 1;
            f.h[t * w + nm] = acc;
            for n in (1..=nm).rev() {
                acc += f.occ[t * nm + n - 1];
                f.h[t * w + n - 1] = acc;
            }
            if first > 1 {
                // paths waiting in column 1 are not simulated; h(1, T) = T
                f.h[t * w] = t as u32;
            }
        }
    }
}

/// One draw of the height field in the window `n_max x t_max`.
pub fn sample_quadrant(p: &ModelParams, boundary: Boundary, n_max: usize, t_max: usize, rng: &mut Rng) -> Result<HeightField> {
    let s = QuadrantSampler::new(p, boundary, n_max, t_max)?;
    let mut f = s.empty_field();
    s.sample_into(rng, &mut f);
    Ok(f)
}

/// Occupancies of columns `1..=n_max` above one row, plus paths already gone.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowState {
    pub occ: Vec<u32>,
    pub exited: u32,
}

impl RowState {
    pub fn empty(n_max: usize) -> Self {
        RowState { occ: vec![0; n_max], exited: 0 }
    }

    /// Number of paths at columns `>= n`.
    pub fn height(&self, n: usize) -> u32 {
        self.exited + self.occ.iter().skip(n - 1).sum::<u32>()
    }
}

/// Exact law of the next row state given the current one, for row `t` (1-based).
pub fn row_transition(p: &ModelParams, boundary: Boundary, t: usize, state: &RowState) -> Result<Vec<(RowState, f64)>> {
    let n_max = state.occ.len();
    p.require(n_max, t)?;
    boundary.check(p)?;
    let u = p.u[t - 1];
    let first = boundary.first_column();
    let mut out = Vec::new();
    let mut starts = Vec::new();
    if first == 1 {
        starts.push((1u8, 1.0));
    } else {
        let x = p.a[0] * u;
        let pb = -x / (1.0 - x);
        starts.push((1u8, pb));
        starts.push((0u8, 1.0 - pb));
    }
    fn rec(p: &ModelParams, u: f64, n: usize, j: u8, w: f64, st: &mut RowState, prev: &RowState, out: &mut Vec<(RowState, f64)>) {
        if n > prev.occ.len() {
            let mut s = st.clone();
            s.exited = prev.exited + j as u32;
            out.push((s, w));
            return;
        }
        let g = prev.occ[n - 1];
        let pr = right_prob(p.a[n - 1] * u, p.nu[n - 1], p.q.powi(g as i32), j);
        for j2 in [0u8, 1] {
            let pw = if j2 == 1 { pr } else { 1.0 - pr };
            if pw == 0.0 || (j2 == 1 && g == 0 && j == 0) {
                continue;
            }
            st.occ[n - 1] = g + j as u32 - j2 as u32;
            rec(p, u, n + 1, j2, w * pw, st, prev, out);
        }
    }
    for (j, w) in starts {
        if w == 0.0 {
            continue;
        }
        let mut st = state.clone();
        rec(p, u, first, j, w, &mut st, state, &mut out);
    }
    Ok(out)
}

/// Exact law of the row state above row `t`, by enumerating rows.
pub fn row_state_law(p: &ModelParams, boundary: Boundary, n_max: usize, t: usize) -> Result<HashMap<RowState, f64>> {
    let mut law = HashMap::new();
    law.insert(RowState::empty(n_max), 1.0);
    for row in 1..=t {
        let mut next = HashMap::new();
        for (s, w) in &law {
            for (s2, w2) in row_transition(p, boundary, row, s)? {
                *next.entry(s2).or_insert(0.0) += w * w2;
            }
        }
        law = next;
    }
    Ok(law)
}

fn check_distinct(u: &[f64]) -> Result<()> {
    let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            if (u[i] - u[j]).abs() < 1e-9 * scale {
                return Err(Error::Collision(format!("u_{} = u_{}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// Calls `f` on every permutation of `0..n` (Heap's algorithm).
pub(crate) fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn symmetrize(u: &[f64], q: f64, factor: &[Vec<f64>]) -> f64 {
    let t = u.len();
    let mut total = 0.0;
    for_each_permutation(t, |s| {
        let mut term = 1.0;
        for al in 0..t {
            for be in al + 1..t {
                let (x, y) = (u[s[al]], u[s[be]]);
                term *= (x - q * y) / (x - y);
            }
        }
        for (i, row) in factor.iter().enumerate() {
            term *= row[s[i]];
        }
        total += term;
    });
    total
}

fn multiplicity_prefactor(kappa: &Partition, p: &ModelParams) -> f64 {
    let q = p.q;
    let mut pre = 1.0;
    for (r, &k) in kappa.multiplicities().iter().enumerate().skip(1) {
        if k > 0 {
            let mut num = 1.0;
            let mut den = 1.0;
            for i in 0..k {
                num *= 1.0 - p.nu[r - 1] * q.powi(i as i32);
                den *= 1.0 - q.powi(i as i32 + 1);
            }
            pre *= num / den;
        }
    }
    pre
}

fn check_kappa(kappa: &Partition, p: &ModelParams, t: usize) -> Result<()> {
    if kappa.len() != t {
        return Err(Error::InvalidParams(format!("partition has {} parts, expected {t}", kappa.len())));
    }
    p.require(kappa.largest() as usize, t)?;
    check_distinct(&p.u[..t])
}

/// Probability that the row state above row `t` equals `kappa` under the step
/// boundary, by symmetrization over the row parameters.
pub fn f_stoch(kappa: &Partition, p: &ModelParams, t: usize) -> Result<f64> {
    check_kappa(kappa, p, t)?;
    let q = p.q;
    let u = &p.u[..t];
    let factor: Vec<Vec<f64>> = kappa
        .0
        .iter()
        .map(|&c| {
            let c = c as usize;
            u.iter()
                .map(|&x| {
                    let mut v = (1.0 - q) / (1.0 - p.a[c - 1] * x);
                    for j in 0..c - 1 {
                        v *= (p.nu[j] - p.a[j] * x) / (1.0 - p.a[j] * x);
                    }
                    v
                })
                .collect()
        })
        .collect();
    Ok(multiplicity_prefactor(kappa, p) * symmetrize(u, q, &factor))
}

/// `prod_{i<=t} prod_{j<=m} (1 - a_j u_i)`.
pub fn phi(p: &ModelParams, t: usize, m: usize) -> f64 {
    let mut v = 1.0;
    for &x in &p.u[..t] {
        for &a in &p.a[..m] {
            v *= 1.0 - a * x;
        }
    }
    v
}

/// `phi(p, t, m) * f_stoch(kappa)`, computed with the denominators cleared so
/// it stays finite at `a_j u_i = 1`.
pub fn f_tilde(kappa: &Partition, p: &ModelParams, t: usize, m: usize) -> Result<f64> {
    check_kappa(kappa, p, t)?;
    p.require(m, t)?;
    let q = p.q;
    let u = &p.u[..t];
    let factor: Vec<Vec<f64>> = kappa
        .0
        .iter()
        .map(|&c| {
            let c = c as usize;
            u.iter()
                .map(|&x| {
                    let mut v = 1.0 - q;
                    for j in 0..c - 1 {
                        v *= p.nu[j] - p.a[j] * x;
                    }
                    if c <= m {
                        for j in c..m {
                            v *= 1.0 - p.a[j] * x;
                        }
                    } else {
                        for j in m..c {
                            v /= 1.0 - p.a[j] * x;
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();
    Ok(multiplicity_prefactor(kappa, p) * symmetrize(u, q, &factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::partitions_in_box;
    use crate::rng::stream;

    #[test]
    fn weight_example() {
        let w = vertex_weight_row(-1.0, 1.0, 0.5, 0.5, Arrows::Finite(1), 1).unwrap();
        let stay = w.iter().find(|o| o.j2 == 1).unwrap();
        let up = w.iter().find(|o| o.j2 == 0).unwrap();
        assert_eq!(stay.i2, Arrows::Finite(1));
        assert!((stay.weight - 0.625).abs() < 1e-15);
        assert_eq!(up.i2, Arrows::Finite(2));
        assert!((up.weight - 0.375).abs() < 1e-15);
    }

    #[test]
    fn nu_inverse_q_blocks_vertical_move() {
        let w = vertex_weight_row(-1.0, 1.0, 2.0, 0.5, Arrows::Finite(1), 1).unwrap();
        let up = w.iter().find(|o| o.j2 == 0).unwrap();
        assert!(up.weight.abs() < 1e-15);
    }

    #[test]
    fn infinite_column_is_bernoulli() {
        for j1 in [0, 1] {
            let w = vertex_weight_row(-0.5, 2.0, 0.3, 0.4, Arrows::Infinite, j1).unwrap();
            let right = w.iter().find(|o| o.j2 == 1).unwrap().weight;
            assert!((right - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        for g in 0..10 {
            for j1 in [0, 1] {
                let w = vertex_weight_row(-0.7, 1.3, 0.6, 0.45, Arrows::Finite(g), j1).unwrap();
                let s: f64 = w.iter().map(|o| o.weight).sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn f_tilde_single_path() {
        let p = ModelParams::new(0.5, vec![-0.8], vec![1.3], vec![0.35]);
        let v = f_tilde(&Partition(vec![1]), &p, 1, 1).unwrap();
        assert!((v - (1.0 - 0.35)).abs() < 1e-15);
    }

    #[test]
    fn f_stoch_rejects_collision() {
        let p = ModelParams::new(0.5, vec![-0.8, -0.8], vec![1.0, 1.0], vec![0.3, 0.3]);
        assert!(matches!(f_stoch(&Partition(vec![1, 1]), &p, 2), Err(Error::Collision(_))));
    }

    fn params() -> ModelParams {
        ModelParams::new(
            0.4,
            vec![-0.6, -1.1, -0.35],
            vec![0.9, 1.4, 0.7, 1.2],
            vec![0.3, 0.55, 0.2, 0.45],
        )
    }

    #[test]
    fn f_stoch_matches_row_enumeration() {
        let p = params();
        let n_max = 4;
        for t in 1..=3 {
            let law = row_state_law(&p, Boundary::Step, n_max, t).unwrap();
            for (s, w) in law {
                if s.exited > 0 {
                    continue;
                }
                let k = Partition::from_occupancy(&s.occ, 1);
                let f = f_stoch(&k, &p, t).unwrap();
                assert!((f - w).abs() < 1e-13, "{k:?}: {f} vs {w}");
            }
        }
    }

    #[test]
    fn f_tilde_is_phi_times_f_stoch() {
        let p = params();
        for k in partitions_in_box(3, 4) {
            for m in 1..=4 {
                let a = f_tilde(&k, &p, 3, m).unwrap();
                let b = phi(&p, 3, m) * f_stoch(&k, &p, 3).unwrap();
                assert!((a - b).abs() < 1e-13 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sampler_is_reproducible() {
        let p = params();
        let a = sample_quadrant(&p, Boundary::Step, 4, 3, &mut stream(5, 0)).unwrap();
        let b = sample_quadrant(&p, Boundary::Step, 4, 3, &mut stream(5, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("N,T,h\n1,0,0\n"));
    }

    #[test]
    fn height_invariants() {
        let p = params();
        for seed in 0..200 {
            let f = sample_quadrant(&p, Boundary::Step, 4, 3, &mut stream(11, seed)).unwrap();
            for t in 0..=3 {
                assert_eq!(f.get(1, t), t as u32);
                for n in 1..=4 {
                    assert!(f.get(n, t) >= f.get(n + 1, t));
                }
                if t > 0 {
                    for n in 1..=5 {
                        let d = f.get(n, t) as i64 - f.get(n, t - 1) as i64;
                        assert!(d == 0 || d == 1);
                    }
                }
            }
        }
    }

    #[test]
    fn bernoulli_boundary_needs_nu1_zero() {
        let p = params();
        assert!(sample_quadrant(&p, Boundary::StepBernoulli, 3, 2, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn bernoulli_entry_counts() {
        let mut p = params();
        p.nu[0] = 0.0;
        let f = sample_quadrant(&p, Boundary::StepBernoulli, 3, 3, &mut stream(3, 1)).unwrap();
        assert_eq!(f.get(2, 0), 0);
        assert!(f.get(2, 3) <= 3);
    }
}
