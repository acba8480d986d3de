//! Schur-measure side of the special case `nu_i = q`: brute-force Schur
//! sums, the correlation kernel and Fredholm gap probabilities, the Airy
//! kernel and GUE Tracy-Widom law, and the large-scale q-TASEP experiment.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_q, Error, Result};
use crate::params::{ModelParams, Partition};
use crate::qseries::{cpoch_inf, qpoch_inf};
use crate::qtasep::GeomKernel;
use crate::rng::{stream, Rng};
use crate::stats::ks_distance;

/// Homogeneous setup: `u_t = u < 0`, `a_1` free, `a_i = 1` and `nu_i = q`
/// for `i >= 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurSetup {
    pub q: f64,
    pub u: f64,
    pub a1: f64,
    pub n: usize,
    pub t: usize,
}

impl SchurSetup {
    pub fn new(q: f64, u: f64, a1: f64, n: usize, t: usize) -> Result<Self> {
        let s = SchurSetup { q, u, a1, n, t };
        s.check()?;
        Ok(s)
    }

    /// `N = floor(eta M)`, `T = floor(tau M)`.
    pub fn scaled(q: f64, u: f64, a1: f64, eta: f64, tau: f64, m: usize) -> Result<Self> {
        if !(eta > 0.0 && tau > 0.0) {
            return Err(Error::InvalidParams(format!("eta={eta}, tau={tau} must be positive")));
        }
        let n = (eta * m as f64).floor() as usize;
        let t = (tau * m as f64).floor() as usize;
        Self::new(q, u, a1, n.max(1), t)
    }

    fn check(&self) -> Result<()> {
        check_q(self.q)?;
        if !(self.u < 0.0) {
            return Err(Error::InvalidParams(format!("u={} must be negative", self.u)));
        }
        if !(self.a1 > 0.0) {
            return Err(Error::InvalidParams(format!("a1={} must be positive", self.a1)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParams("N must be at least 1".into()));
        }
        Ok(())
    }

    /// Vertex parameters for the step-Bernoulli model on columns `1..=N+1`.
    pub fn model_params(&self) -> ModelParams {
        let mut a = vec![1.0; self.n + 1];
        a[0] = self.a1;
        let mut nu = vec![self.q; self.n + 1];
        nu[0] = 0.0;
        ModelParams::new(self.q, vec![self.u; self.t], a, nu)
    }

    /// `Pi_S` for the two specializations.
    pub fn normalization(&self) -> f64 {
        let per = qpoch_inf(1.0 / (self.a1 * self.u), self.q) * (1.0 - 1.0 / self.u).powi(self.n as i32 - 1);
        per.powi(self.t as i32)
    }
}

/// `h_k` of `T` copies of `-1/u`, and of the beta specialization
/// `(q^k / a_1)_{k>=0}, 1^{N-1}`, for `k < len`.
fn h_series(s: &SchurSetup, len: usize) -> (Vec<f64>, Vec<f64>) {
    let x = -1.0 / s.u;
    let mut hx = vec![0.0; len];
    let mut binom = 1.0;
    for (k, h) in hx.iter_mut().enumerate() {
        if k > 0 {
            binom *= (k + s.t - 1) as f64 / k as f64;
        }
        *h = if s.t == 0 { f64::from(k == 0) } else { binom * x.powi(k as i32) };
    }
    // Euler expansion of (-z/a_1; q)_inf
    let mut euler = vec![0.0; len];
    let mut c = 1.0;
    for (k, e) in euler.iter_mut().enumerate() {
        if k > 0 {
            c *= s.q.powi(k as i32 - 1) / ((1.0 - s.q.powi(k as i32)) * s.a1);
        }
        *e = c;
    }
    let mut hb = euler;
    for _ in 1..s.n {
        let mut next = hb.clone();
        for k in 1..len {
            next[k] += hb[k - 1];
        }
        hb = next;
    }
    (hx, hb)
}

fn jacobi_trudi(lambda: &[u32], h: &[f64]) -> f64 {
    let l = lambda.len();
    if l == 0 {
        return 1.0;
    }
    let m = DMatrix::from_fn(l, l, |i, j| {
        let k = lambda[i] as i64 - i as i64 + j as i64;
        if k < 0 {
            0.0
        } else {
            h.get(k as usize).copied().unwrap_or(0.0)
        }
    });
    m.determinant()
}

/// Result of a truncated Schur-measure sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BruteForce {
    pub value: f64,
    pub deficit: f64,
}

pub const BRUTE_DEFICIT_TOL: f64 = 1e-10;

fn partitions_up_to(len: usize, cap: u32, f: &mut impl FnMut(&[u32])) {
    fn rec(len: usize, cap: u32, cur: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
        f(cur);
        if cur.len() == len {
            return;
        }
        for p in 1..=cap {
            cur.push(p);
            rec(len, p, cur, f);
            cur.pop();
        }
    }
    rec(len, cap, &mut Vec::new(), f);
}

/// `sum_lambda s_lambda(x) s_lambda(rho) / Pi_S * observable(lambda)` over
/// partitions with at most `T` parts, each at most `part_cutoff`.
pub fn schur_bruteforce_expectation(s: &SchurSetup, observable: impl Fn(&Partition) -> f64, part_cutoff: u32) -> Result<BruteForce> {
    s.check()?;
    let len = part_cutoff as usize + s.t + 1;
    let (hx, hb) = h_series(s, len);
    let z = s.normalization();
    let mut total = 0.0;
    let mut value = 0.0;
    partitions_up_to(s.t, part_cutoff, &mut |lam| {
        let w = jacobi_trudi(lam, &hx) * jacobi_trudi(lam, &hb) / z;
        total += w;
        value += w * observable(&Partition(lam.to_vec()));
    });
    let deficit = (1.0 - total).abs();
    if deficit > BRUTE_DEFICIT_TOL {
        return Err(Error::Infeasible(format!("Schur sum deficit {deficit:.3e} with cutoff {part_cutoff}")));
    }
    Ok(BruteForce { value, deficit })
}

/// `prod_{j>=0} (1 + zeta q^{lambda_{T-j} + j}) / (1 + zeta q^j)` where the
/// factors with `j >= T` reduce to `1 / (1 + zeta q^j)`.
pub fn schur_observable(lambda: &Partition, t: usize, zeta: f64, q: f64) -> f64 {
    let num: f64 = (0..t)
        .map(|j| {
            let part = lambda.0.get(t - 1 - j).copied().unwrap_or(0) as i32;
            1.0 + zeta * q.powi(part + j as i32)
        })
        .product();
    num / qpoch_inf(-zeta, q)
}

/// `prod_{i>=0} 1 / (1 + zeta q^{h + i})`.
pub fn vertex_observable(h: u32, zeta: f64, q: f64) -> f64 {
    1.0 / qpoch_inf(-zeta * q.powi(h as i32), q)
}

/// Trapezoid nodes of the two circles carrying the kernel integral.
#[derive(Clone, Debug)]
pub struct KernelGrid {
    setup: SchurSetup,
    v_center: f64,
    w_center: f64,
    /// `v` inside `w`: the integral is `K - 1`.
    swapped: bool,
    v: Vec<Complex64>,
    w: Vec<Complex64>,
    fv: Vec<Complex64>,
    fw_inv: Vec<Complex64>,
}

pub const DEFAULT_KERNEL_NODES: usize = 256;

fn circle(center: f64, r: f64, nodes: usize) -> Vec<Complex64> {
    (0..nodes).map(|k| center + Complex64::from_polar(r, 2.0 * PI * k as f64 / nodes as f64)).collect()
}

impl KernelGrid {
    /// Circles centred at `p/2`, `p = -1/u`, of radii `p/2 + 1/3` (w) and
    /// `p/2 + 2/3` (v): both enclose `0` and `p` and exclude `-1`.
    pub fn new(s: &SchurSetup, nodes: usize) -> Result<Self> {
        Self::check_setup(s)?;
        let c = -0.5 / s.u;
        Ok(Self::build(s, c, circle(c, c + 2.0 / 3.0, nodes), c, circle(c, c + 1.0 / 3.0, nodes), false))
    }

    /// Interchanged contours: `v` on `|v| = r_v`, `w` on the circle through
    /// the real points `w_left < -r_v` and `w_right > p`. Passing both close
    /// to the double critical point keeps the integrand of order one when
    /// `N, T` are large.
    pub fn swapped(s: &SchurSetup, nodes: usize, r_v: f64, w_left: f64, w_right: f64) -> Result<Self> {
        Self::check_setup(s)?;
        let p = -1.0 / s.u;
        let c = 0.5 * (w_left + w_right);
        let r = 0.5 * (w_right - w_left);
        if !(r_v > 0.0 && w_left > -1.0 && w_left < -r_v && w_right > p && c.abs() + r_v < r) {
            return Err(Error::Infeasible(format!("contours r_v={r_v}, w in [{w_left}, {w_right}] are not admissible for p={p}")));
        }
        Ok(Self::build(s, 0.0, circle(0.0, r_v, nodes), c, circle(c, r, nodes), true))
    }

    /// Interchanged contours through the double critical point of the
    /// `N : T` direction when it lies in `(-1, 0)`, nested circles otherwise.
    pub fn auto(s: &SchurSetup, nodes: usize) -> Result<Self> {
        Self::check_setup(s)?;
        let crit = critical_point(s.n as f64, s.t as f64, s.u);
        let vc = crit.v_c;
        if crit.regime == Regime::Curved && vc > -1.0 && vc < 0.0 && s.t > 3 {
            let r = vc.abs();
            let left = -(r + 0.25 * (1.0 - r));
            Self::swapped(s, nodes, r * 0.8, left, -1.0 / s.u + 1.0)
        } else {
            Self::new(s, nodes)
        }
    }

    fn check_setup(s: &SchurSetup) -> Result<()> {
        s.check()?;
        if s.a1 < 1.0 {
            return Err(Error::Infeasible(format!("a1={} < 1 puts -a1 inside the contours", s.a1)));
        }
        Ok(())
    }

    fn build(s: &SchurSetup, v_center: f64, v: Vec<Complex64>, w_center: f64, w: Vec<Complex64>, swapped: bool) -> Self {
        let f = |z: Complex64| -> Complex64 {
            cpoch_inf(-z / s.a1, s.q) * (1.0 + z).powi(s.n as i32 - 1) * (s.u + 1.0 / z).powi(s.t as i32)
        };
        let fv = v.iter().map(|&z| f(z)).collect();
        let fw_inv = w.iter().map(|&z| 1.0 / f(z)).collect();
        KernelGrid { setup: *s, v_center, w_center, swapped, v, w, fv, fw_inv }
    }

    /// Kernel matrix over `sites x sites`, complex before taking real parts.
    pub fn matrix_complex(&self, sites: &[i64]) -> DMatrix<Complex64> {
        let nv = self.v.len();
        let nw = self.w.len();
        let a = DMatrix::from_fn(sites.len(), nv, |r, k| {
            let v = self.v[k];
            self.fv[k] * v.powi(-(sites[r] as i32) - 1) * (v - self.v_center) / nv as f64
        });
        let b = DMatrix::from_fn(nw, sites.len(), |k, c| {
            let w = self.w[k];
            self.fw_inv[k] * w.powi(sites[c] as i32) * (w - self.w_center) / nw as f64
        });
        let cross = DMatrix::from_fn(nv, nw, |i, j| 1.0 / (self.v[i] - self.w[j]));
        let mut k = a * cross * b;
        if self.swapped {
            for (r, &i) in sites.iter().enumerate() {
                for (c, &j) in sites.iter().enumerate() {
                    if i == j {
                        k[(r, c)] += 1.0;
                    }
                }
            }
        }
        k
    }

    pub fn matrix(&self, sites: &[i64]) -> DMatrix<f64> {
        self.matrix_complex(sites).map(|z| z.re)
    }

    pub fn setup(&self) -> &SchurSetup {
        &self.setup
    }
}

/// `K(i, j)` of the point process `{lambda_k - k}`.
pub fn schur_kernel(i: i64, j: i64, s: &SchurSetup) -> Result<f64> {
    let g = KernelGrid::new(s, DEFAULT_KERNEL_NODES)?;
    let m = g.matrix(&[i, j]);
    Ok(if i == j { m[(0, 0)] } else { m[(0, 1)] })
}

/// `1_{i=j} - K(i, j)`.
pub fn complement_kernel(i: i64, j: i64, s: &SchurSetup) -> Result<f64> {
    Ok(f64::from(i == j) - schur_kernel(i, j, s)?)
}

/// `P(-len(lambda) > x)`. Sites below `-T` are always occupied, so the
/// Fredholm determinant reduces exactly to `det K` on `{x, ..., -T}`;
/// `cutoff` bounds the number of sites below `x` that may be used.
pub fn prob_length_exceeds(x: i64, s: &SchurSetup, cutoff: usize) -> Result<f64> {
    let g = KernelGrid::new(s, DEFAULT_KERNEL_NODES)?;
    prob_length_exceeds_on(&g, x, cutoff)
}

pub fn prob_length_exceeds_on(g: &KernelGrid, x: i64, cutoff: usize) -> Result<f64> {
    let t = g.setup.t as i64;
    if x >= 0 {
        return Ok(0.0);
    }
    if x < -t {
        return Ok(1.0);
    }
    if x - (cutoff as i64) > -t {
        return Err(Error::Infeasible(format!("cutoff {cutoff} does not reach site {}", -t)));
    }
    let sites: Vec<i64> = (-t..=x).rev().collect();
    Ok(g.matrix(&sites).determinant())
}

/// Law of `len(lambda)` on `0..=T` from the Fredholm probabilities.
pub fn length_law(s: &SchurSetup, nodes: usize) -> Result<Vec<f64>> {
    length_law_on(&KernelGrid::new(s, nodes)?)
}

pub fn length_law_on(g: &KernelGrid) -> Result<Vec<f64>> {
    let t = g.setup.t;
    // P(len < k) = P(-len > -k), walked down from k = T + 1 where it is 1;
    // once it drops below LAW_FLOOR the remaining sites hold no mass.
    let mut cdf = vec![0.0; t + 2];
    cdf[t + 1] = 1.0;
    for k in (0..=t).rev() {
        let p = prob_length_exceeds_on(g, -(k as i64), t + 1)?;
        if !(-1e-10..=cdf[k + 1] + 1e-10).contains(&p) {
            return Err(Error::NotConverged(format!("Fredholm probability {p:e} at len < {k} is not monotone")));
        }
        cdf[k] = p.max(0.0);
        if p < LAW_FLOOR {
            cdf[k] = 0.0;
            break;
        }
    }
    Ok((0..=t).map(|k| cdf[k + 1] - cdf[k]).collect())
}

pub const LAW_FLOOR: f64 = 1e-15;

// ---------------------------------------------------------------- Airy

fn airy_integral(x: f64) -> (f64, f64) {
    // Ai(x) = (1/2pi) int exp(t^3/3 - x t) ds along t = c + i s
    let c = if x > 1.0 { x.sqrt() } else { 1.0 };
    let h = 0.02;
    let s_max = (40.0 / c).sqrt() + 2.0;
    let n = (s_max / h).ceil() as usize;
    let (mut ai, mut aip) = (0.0, 0.0);
    for k in 0..=n {
        let t = Complex64::new(c, k as f64 * h);
        let e = (t * t * t / 3.0 - x * t).exp();
        let wgt = if k == 0 { 1.0 } else { 2.0 };
        ai += wgt * e.re;
        aip += wgt * (-t * e).re;
    }
    (ai * h / (2.0 * PI), aip * h / (2.0 * PI))
}

fn airy_u(k: usize) -> f64 {
    // Gamma(3k+1/2) / (54^k k! Gamma(k+1/2)) by recurrence
    let mut u = 1.0;
    for j in 1..=k {
        let jf = j as f64;
        u *= (6.0 * jf - 5.0) * (6.0 * jf - 3.0) * (6.0 * jf - 1.0) / (216.0 * jf * (2.0 * jf - 1.0));
    }
    u
}

fn airy_asymptotic(x: f64) -> (f64, f64) {
    let z = x.abs();
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let terms: Vec<(f64, f64)> = (0..40)
        .map(|k| {
            let u = airy_u(k);
            let v = if k == 0 { 1.0 } else { -(6.0 * k as f64 + 1.0) / (6.0 * k as f64 - 1.0) * u };
            (u / zeta.powi(k as i32), v / zeta.powi(k as i32))
        })
        .collect();
    // truncate at the smallest term
    let mut stop = terms.len();
    for k in 1..terms.len() {
        if terms[k].0.abs() > terms[k - 1].0.abs() {
            stop = k;
            break;
        }
    }
    let sq = PI.sqrt();
    if x > 0.0 {
        let (mut su, mut sv) = (0.0, 0.0);
        for (k, (u, v)) in terms.iter().take(stop).enumerate() {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            su += sgn * u;
            sv += sgn * v;
        }
        let e = (-zeta).exp();
        (e / (2.0 * sq * z.powf(0.25)) * su, -z.powf(0.25) * e / (2.0 * sq) * sv)
    } else {
        let (mut ue, mut uo, mut ve, mut vo) = (0.0, 0.0, 0.0, 0.0);
        for (k, (u, v)) in terms.iter().take(stop).enumerate() {
            let sgn = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                ue += sgn * u;
                ve += sgn * v;
            } else {
                uo += sgn * u;
                vo += sgn * v;
            }
        }
        let ph = zeta + PI / 4.0;
        let ai = (ph.sin() * ue - ph.cos() * uo) / (sq * z.powf(0.25));
        let aip = -z.powf(0.25) / sq * (ph.cos() * ve + ph.sin() * vo);
        (ai, aip)
    }
}

/// `(Ai(x), Ai'(x))`.
pub fn airy(x: f64) -> (f64, f64) {
    if x.abs() <= 8.0 {
        airy_integral(x)
    } else {
        airy_asymptotic(x)
    }
}

/// Gauss-Legendre nodes and weights on `(0, 1)`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = 0.5 * (1.0 - z);
        ws[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (xs, ws)
}

pub const DEFAULT_TW_NODES: usize = 64;

/// `F_GUE(r) = det(1 - K_Ai)` on `(r, inf)` with `n` Gauss-Legendre nodes
/// mapped by `x = r + 10 tan(pi xi / 2)`.
pub fn tracy_widom_cdf_with(r: f64, n: usize) -> f64 {
    let (xi, wi) = gauss_legendre(n);
    let mut pts = Vec::with_capacity(n);
    for k in 0..n {
        let arg = PI * xi[k] / 2.0;
        let x = r + 10.0 * arg.tan();
        let w = wi[k] * 10.0 * PI / 2.0 / arg.cos().powi(2);
        let (a, ap) = airy(x);
        pts.push((x, w.sqrt(), a, ap));
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        let (x, sx, ax, apx) = pts[i];
        let (y, sy, ay, apy) = pts[j];
        let k = if i == j { apx * apx - x * ax * ax } else { (ax * apy - apx * ay) / (x - y) };
        f64::from(i == j) - sx * k * sy
    });
    m.determinant().clamp(0.0, 1.0)
}

pub fn tracy_widom_cdf(r: f64) -> f64 {
    tracy_widom_cdf_with(r, DEFAULT_TW_NODES)
}

// ---------------------------------------------------------- asymptotics

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Curved,
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalData {
    pub x_c: f64,
    pub v_c: f64,
    pub sigma: f64,
    pub regime: Regime,
}

/// Derivatives `G^{(k)}(v; x)` for `k = 1, 2, 3` of
/// `G = eta log(1+v) + tau log(u + 1/v) - x log(-v)`.
pub fn g_derivatives(v: f64, x: f64, eta: f64, tau: f64, u: f64) -> [f64; 3] {
    // tau log(u + 1/v) = tau log(uv + 1) - tau log(-v) up to constants
    let w = u * v + 1.0;
    let c = tau + x;
    [
        eta / (1.0 + v) + tau * u / w - c / v,
        -eta / (1.0 + v).powi(2) - tau * u * u / (w * w) + c / (v * v),
        2.0 * eta / (1.0 + v).powi(3) + 2.0 * tau * u.powi(3) / w.powi(3) - 2.0 * c / v.powi(3),
    ]
}

pub fn critical_point(eta: f64, tau: f64, u: f64) -> CriticalData {
    let r = (-u * eta * tau).sqrt();
    let x_c = (eta - tau - 2.0 * r) / (1.0 - u);
    let v_c = (-(1.0 - u) * r - u * (eta + tau)) / (u * (tau + eta * u));
    let regime = if tau / eta > -1.0 / u { Regime::Curved } else { Regime::Flat };
    CriticalData { x_c, v_c, sigma: sigma_closed(eta, tau, u), regime }
}

/// Closed-form fluctuation scale.
pub fn sigma_closed(eta: f64, tau: f64, u: f64) -> f64 {
    (-u * tau * eta).powf(1.0 / 6.0)
        * (1.0 + (-u * eta / tau).sqrt()).powf(2.0 / 3.0)
        * (1.0 - (-u * tau / eta).sqrt()).abs().powf(2.0 / 3.0)
        / (1.0 - u)
}

/// `-v_c * cbrt(G'''(v_c; x_c) / 2)`: the scale turning the cubic Taylor
/// term `M G''' (v - v_c)^3 / 6` into `v~^3 / 3`.
pub fn sigma_from_g(eta: f64, tau: f64, u: f64) -> f64 {
    let c = critical_point(eta, tau, u);
    -c.v_c * (0.5 * g_derivatives(c.v_c, c.x_c, eta, tau, u)[2]).cbrt()
}

pub fn limit_shape(eta: f64, tau: f64, u: f64) -> f64 {
    if tau / eta > -1.0 / u {
        (-u * (tau - eta) - 2.0 * (-u * eta * tau).sqrt()) / (1.0 - u)
    } else {
        -eta
    }
}

/// `x_N(N, T)` of the special q-TASEP: `N - 1` geometric moves with jump
/// parameter `q` (`q a_1` for the first particle) and `T` Bernoulli moves
/// with `beta = -u`. Only the moved prefix is swept.
pub fn simulate_special(s: &SchurSetup, rng: &mut Rng) -> Result<i64> {
    s.check()?;
    if s.q * s.a1 >= 1.0 {
        return Err(Error::InvalidParams(format!("q a1 = {} must be below 1", s.q * s.a1)));
    }
    let n = s.n;
    let first = GeomKernel::new(s.q * s.a1, s.q)?;
    let rest = GeomKernel::new(s.q, s.q)?;
    let beta = -s.u;
    let p_first = s.a1 * beta / (1.0 + s.a1 * beta);
    let p_rest = beta / (1.0 + beta);
    let mut x: Vec<i64> = (1..=n as i64).map(|i| -i).collect();
    let mut active = 1usize;
    for _ in 1..n {
        let mut prev_old = i64::MAX;
        for i in 0..active.min(n) {
            let (k, m) = if i == 0 { (&first, None) } else { (&rest, Some((prev_old - x[i] - 1) as u64)) };
            prev_old = x[i];
            x[i] += k.sample(m, rng) as i64;
        }
        if active < n && x[active - 1] != -(active as i64) {
            active += 1;
        }
    }
    for _ in 0..s.t {
        let mut prev_old = i64::MAX;
        let mut prev_jumped = false;
        let mut i = 0;
        while i < n && (i < active || prev_jumped) {
            let pj = if i == 0 {
                p_first
            } else if prev_jumped {
                p_rest
            } else {
                p_rest * (1.0 - s.q.powi((prev_old - x[i] - 1) as i32))
            };
            prev_old = x[i];
            prev_jumped = pj > 0.0 && rng.gen::<f64>() < pj;
            if prev_jumped {
                x[i] += 1;
            }
            i += 1;
        }
        while active < n && x[active - 1] != -(active as i64) {
            active += 1;
        }
    }
    Ok(x[n - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub replica: usize,
    pub x_scaled: f64,
    pub standardized: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    #[serde(rename = "M")]
    pub m: usize,
    pub eta: f64,
    pub tau: f64,
    pub u: f64,
    pub a1: f64,
    #[serde(rename = "X_theory")]
    pub x_theory: f64,
    pub sigma: f64,
    pub mean_err: f64,
    /// Kolmogorov distance of `-standardized` to `F_GUE`; curved regime only.
    pub ks_stat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub summaries: Vec<ExperimentSummary>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("M,replica,x_scaled,standardized\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.m, r.replica, r.x_scaled, r.standardized));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub q: f64,
    pub u: f64,
    pub a1: f64,
    pub eta: f64,
    pub tau: f64,
}

/// Replica `k` at scale `M` draws from `stream(seed ^ M, k)`.
pub fn asymptotics_experiment(cfg: &ExperimentConfig, m_list: &[usize], replicas: usize, seed: u64) -> Result<ExperimentReport> {
    if cfg.a1 < 1.0 {
        return Err(Error::InvalidParams(format!("a1={} < 1 is outside the covered regime", cfg.a1)));
    }
    let crit = critical_point(cfg.eta, cfg.tau, cfg.u);
    let x_theory = limit_shape(cfg.eta, cfg.tau, cfg.u);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &m in m_list {
        let s = SchurSetup::scaled(cfg.q, cfg.u, cfg.a1, cfg.eta, cfg.tau, m)?;
        let mf = m as f64;
        let scale = crit.sigma * mf.powf(1.0 / 3.0);
        let mut xs = Vec::with_capacity(replicas);
        for k in 0..replicas {
            let mut rng = stream(seed ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), k as u64);
            let x = simulate_special(&s, &mut rng)? as f64;
            let st = (x - mf * x_theory) / scale;
            rows.push(ExperimentRow { m, replica: k, x_scaled: x / mf, standardized: st });
            xs.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64 / mf;
        let ks_stat = match crit.regime {
            Regime::Curved => {
                let neg: Vec<f64> = xs.iter().map(|x| -(x - mf * x_theory) / scale).collect();
                Some(ks_distance(&neg, tracy_widom_cdf))
            }
            Regime::Flat => None,
        };
        summaries.push(ExperimentSummary {
            m,
            eta: cfg.eta,
            tau: cfg.tau,
            u: cfg.u,
            a1: cfg.a1,
            x_theory,
            sigma: crit.sigma,
            mean_err: (mean - x_theory).abs(),
            ks_stat,
        });
    }
    Ok(ExperimentReport { rows, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vertex::{row_state_law, Boundary};

    #[test]
    fn airy_reference_values() {
        let (a0, ap0) = airy(0.0);
        assert!((a0 - 0.355028053887817).abs() < 1e-12, "{a0}");
        assert!((ap0 + 0.258819403792807).abs() < 1e-12, "{ap0}");
        assert!((airy(1.0).0 - 0.135292416312881).abs() < 1e-12);
        assert!((airy(-1.0).0 - 0.535560883292352).abs() < 1e-12);
    }

    #[test]
    fn airy_branches_meet() {
        for x in [8.0, -8.0] {
            let (a, ap) = airy_integral(x);
            let (b, bp) = airy_asymptotic(x);
            assert!((a - b).abs() < 1e-11 && (ap - bp).abs() < 1e-10, "{x}: {a} {b} {ap} {bp}");
        }
    }

    #[test]
    fn tracy_widom_moments() {
        let (lo, hi, h) = (-9.0, 7.0, 0.05);
        let n = ((hi - lo) / h) as usize;
        let (mut i0, mut i1) = (0.0, 0.0);
        let mut prev = 0.0;
        for k in 0..=n {
            let x = lo + k as f64 * h;
            let f = tracy_widom_cdf(x);
            assert!(f >= prev - 1e-12);
            prev = f;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            i0 += w * f * h;
            i1 += w * x * f * h;
        }
        let mean = hi - i0;
        // x F(x) has unit slope at the upper end: Euler-Maclaurin correction
        let second = hi * hi - 2.0 * (i1 - h * h / 12.0);
        assert!((mean + 1.7710868074).abs() < 1e-6, "{mean}");
        assert!((second - mean * mean - 0.8131947928).abs() < 1e-6);
    }

    #[test]
    fn critical_point_example() {
        let c = critical_point(0.25, 1.0, -1.0);
        assert!((c.x_c + 7.0 / 8.0).abs() < 1e-14);
        assert!((c.v_c + 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(c.regime, Regime::Curved);
        let g = g_derivatives(c.v_c, c.x_c, 0.25, 1.0, -1.0);
        assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
    }

    #[test]
    fn sigma_forms_agree() {
        let expect = 2f64.powf(1.0 / 6.0) * (1.0 + 0.5f64.sqrt()).powf(2.0 / 3.0) * (2f64.sqrt() - 1.0).powf(2.0 / 3.0) / 2.0;
        assert!((sigma_closed(1.0, 2.0, -1.0) - expect).abs() < 1e-15);
        for (e, t, u) in [(1.0, 2.0, -1.0), (0.5, 3.0, -0.7), (1.0, 1.0, -2.5)] {
            assert!((sigma_closed(e, t, u) - sigma_from_g(e, t, u)).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_shape_branches() {
        assert!((limit_shape(1.0, 2.0, -1.0) - (1.0 - 2.0 * 2f64.sqrt()) / 2.0).abs() < 1e-15);
        // boundary tau/eta = -1/u
        let (eta, u): (f64, f64) = (1.5, -0.5);
        let tau = -eta / u;
        let curved = (-u * (tau - eta) - 2.0 * (-u * eta * tau).sqrt()) / (1.0 - u);
        assert!((curved + eta).abs() < 1e-14);
        assert_eq!(limit_shape(eta, tau, u), -eta);
        assert!(sigma_closed(eta, tau, u).abs() < 1e-7);
    }

    #[test]
    fn bruteforce_normalized_and_empty_weight() {
        let s = SchurSetup::new(0.4, -0.8, 1.3, 3, 3).unwrap();
        let one = schur_bruteforce_expectation(&s, |_| 1.0, 40).unwrap();
        assert!((one.value - 1.0).abs() < 1e-10);
        let empty = schur_bruteforce_expectation(&s, |l| f64::from(l.is_empty()), 40).unwrap();
        assert!((empty.value - 1.0 / s.normalization()).abs() < 1e-14);
    }

    fn exact_vertex_expectation(s: &SchurSetup, zeta: f64) -> f64 {
        let p = s.model_params();
        let law = row_state_law(&p, Boundary::StepBernoulli, s.n + 1, s.t).unwrap();
        law.iter().map(|(st, w)| w * vertex_observable(st.height(s.n + 1), zeta, s.q)).sum()
    }

    #[test]
    fn schur_matching_against_exact_vertex_law() {
        for (n, t) in [(1, 1), (2, 2), (3, 2), (2, 3)] {
            let s = SchurSetup::new(0.5, -0.7, 1.2, n, t).unwrap();
            for zeta in [0.3, 1.0] {
                let lhs = exact_vertex_expectation(&s, zeta);
                let rhs = schur_bruteforce_expectation(&s, |l| schur_observable(l, t, zeta, s.q), 40).unwrap();
                assert!((lhs - rhs.value).abs() < 1e-10, "n={n} t={t} zeta={zeta}: {lhs} vs {}", rhs.value);
            }
        }
    }

    #[test]
    fn fredholm_matches_bruteforce() {
        let s = SchurSetup::new(0.5, -0.7, 1.2, 3, 3).unwrap();
        let law = length_law(&s, DEFAULT_KERNEL_NODES).unwrap();
        for (k, p) in law.iter().enumerate() {
            let b = schur_bruteforce_expectation(&s, |l| f64::from(l.len() == k), 40).unwrap();
            assert!((p - b.value).abs() < 1e-9, "len {k}: {p} vs {}", b.value);
        }
    }

    #[test]
    fn kernel_diagonal_counts_points() {
        let s = SchurSetup::new(0.5, -1.0, 1.0, 2, 3).unwrap();
        let g = KernelGrid::new(&s, DEFAULT_KERNEL_NODES).unwrap();
        let sites: Vec<i64> = (-3..25).collect();
        let mc = g.matrix_complex(&sites);
        let near: Vec<i64> = (-4..=10).collect();
        let im = g.matrix_complex(&near).iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(im < 1e-12, "{im}");
        let m = mc.map(|z| z.re);
        for x in [-2i64, 0, 1, 3] {
            let lhs: f64 = (x..25).map(|i| m[((i + 3) as usize, (i + 3) as usize)]).sum();
            let rhs = schur_bruteforce_expectation(&s, |l| (1..=3).filter(|&k| l.0.get(k - 1).copied().unwrap_or(0) as i64 - k as i64 >= x).count() as f64, 40)
                .unwrap()
                .value;
            assert!((lhs - rhs).abs() < 1e-9, "x={x}: {lhs} vs {rhs}");
        }
        let fine = KernelGrid::new(&s, 2 * DEFAULT_KERNEL_NODES).unwrap().matrix(&sites);
        assert!((fine - m).amax() < 1e-10);
    }

    #[test]
    fn length_probabilities_trivial_ends() {
        let s = SchurSetup::new(0.5, -0.7, 1.2, 2, 3).unwrap();
        assert_eq!(prob_length_exceeds(0, &s, 10).unwrap(), 0.0);
        assert_eq!(prob_length_exceeds(-10, &s, 10).unwrap(), 1.0);
        let mut prev = 1.0;
        for x in -4..=0 {
            let p = prob_length_exceeds(x, &s, 10).unwrap();
            assert!(p <= prev + 1e-12 && (-1e-10..=1.0 + 1e-10).contains(&p));
            prev = p;
        }
        assert!(prob_length_exceeds(-1, &s, 1).is_err());
    }

    #[test]
    fn special_simulation_matches_exact_height_law() {
        // x_N + N has the law of h(N+1, T)
        let s = SchurSetup::new(0.5, -0.9, 1.2, 3, 3).unwrap();
        let p = s.model_params();
        let law = row_state_law(&p, Boundary::StepBernoulli, s.n + 1, s.t).unwrap();
        let exact: f64 = law.iter().map(|(st, w)| w * st.height(s.n + 1) as f64).sum();
        let est = crate::stats::mc_estimate(100_000, &[5], |r| (simulate_special(&s, r).unwrap() + s.n as i64) as f64);
        assert!((est.mean - exact).abs() < 4.0 * est.se, "{} vs {exact}", est.mean);
    }
}
