//! q-Pochhammer symbols and the q-Whittaker Cauchy product.
//!
//! `(z;q)_n = prod_{k<n} (1 - z q^k)`; the infinite product is truncated once
//! `|z q^k| < 1e-16` and a bound on the neglected tail is reported.
//!
//! `Pi(u; rho) = exp(gamma u) prod_i (1 + beta_i u) / prod_i (alpha_i u; q)_inf`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_q, Error, Result};

/// Length argument of a q-Pochhammer symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PochLen {
    Finite(u64),
    Infinite,
}

const TRUNC: f64 = 1e-16;

/// Value of an infinite product together with a bound on `|value - truncated|`.
#[derive(Clone, Copy, Debug)]
pub struct Truncated {
    pub value: f64,
    pub tail_bound: f64,
}

pub fn q_pochhammer(z: f64, q: f64, n: PochLen) -> Result<f64> {
    check_q(q)?;
    Ok(match n {
        PochLen::Finite(n) => qpoch_finite(z, q, n),
        PochLen::Infinite => qpoch_inf_bounded(z, q).value,
    })
}

/// `(z;q)_inf` with the truncation bound.
pub fn q_pochhammer_inf(z: f64, q: f64) -> Result<Truncated> {
    check_q(q)?;
    Ok(qpoch_inf_bounded(z, q))
}

pub(crate) fn qpoch_finite(z: f64, q: f64, n: u64) -> f64 {
    let mut p = 1.0;
    let mut zk = z;
    for _ in 0..n {
        p *= 1.0 - zk;
        zk *= q;
        if zk.abs() < 1e-300 {
            break;
        }
    }
    p
}

pub(crate) fn qpoch_inf(z: f64, q: f64) -> f64 {
    qpoch_inf_bounded(z, q).value
}

fn qpoch_inf_bounded(z: f64, q: f64) -> Truncated {
    let mut p = 1.0;
    let mut zk = z;
    while zk.abs() >= TRUNC {
        p *= 1.0 - zk;
        zk *= q;
    }
    // remaining factors satisfy |log(1 - z q^k)| <= 2|z q^k|, summed geometrically
    let tail = 2.0 * zk.abs() / (1.0 - q);
    Truncated {
        value: p,
        tail_bound: p.abs() * (tail.exp() - 1.0),
    }
}

pub fn q_pochhammer_complex(z: Complex64, q: f64, n: PochLen) -> Result<Complex64> {
    check_q(q)?;
    Ok(match n {
        PochLen::Finite(n) => {
            let mut p = Complex64::new(1.0, 0.0);
            let mut zk = z;
            for _ in 0..n {
                p *= 1.0 - zk;
                zk *= q;
            }
            p
        }
        PochLen::Infinite => cpoch_inf(z, q),
    })
}

pub(crate) fn cpoch_inf(z: Complex64, q: f64) -> Complex64 {
    let mut p = Complex64::new(1.0, 0.0);
    let mut zk = z;
    while zk.norm() >= TRUNC {
        p *= 1.0 - zk;
        zk *= q;
    }
    p
}

/// `(q;q)_n` for `n = 0..=max`.
pub(crate) fn qfact_table(q: f64, max: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(max + 1);
    t.push(1.0);
    let mut qk = q;
    for k in 1..=max {
        t.push(t[k - 1] * (1.0 - qk));
        qk *= q;
    }
    t
}

/// Specialization of the q-Whittaker Cauchy product.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Specialization {
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
}

impl Specialization {
    fn validate(&self) -> Result<()> {
        let bad = self.alphas.iter().chain(&self.betas).any(|x| !(*x >= 0.0) || !x.is_finite());
        if bad || !(self.gamma >= 0.0) {
            return Err(Error::InvalidParams(
                "specialization parameters must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluates `Pi(u; rho)`. Requires `|alpha_i u| < 1`.
pub fn pi_w(u: f64, rho: &Specialization, q: f64) -> Result<f64> {
    check_q(q)?;
    rho.validate()?;
    let mut v = (rho.gamma * u).exp();
    for b in &rho.betas {
        v *= 1.0 + b * u;
    }
    for a in &rho.alphas {
        if (a * u).abs() >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "|alpha u| = {} is not below 1",
                (a * u).abs()
            )));
        }
        v /= qpoch_inf(a * u, q);
    }
    Ok(v)
}

/// Coefficients `Q_(0..=n_max)(rho)` of `Pi(u; rho)` in powers of `u`.
///
/// Each alpha factor is obtained by dividing by the Euler expansion of
/// `(alpha u; q)_inf`, so the q-binomial form `alpha^n/(q;q)_n` stays an
/// independent check.
pub fn pi_w_coefficients(rho: &Specialization, q: f64, n_max: usize) -> Result<Vec<f64>> {
    check_q(q)?;
    rho.validate()?;
    let mut series = vec![0.0; n_max + 1];
    series[0] = 1.0;
    let fact = qfact_table(q, n_max);

    // exp(gamma u)
    let mut e = vec![0.0; n_max + 1];
    e[0] = 1.0;
    for n in 1..=n_max {
        e[n] = e[n - 1] * rho.gamma / n as f64;
    }
    series = mul_series(&series, &e);

    for b in &rho.betas {
        let mut f = vec![0.0; n_max + 1];
        f[0] = 1.0;
        if n_max >= 1 {
            f[1] = *b;
        }
        series = mul_series(&series, &f);
    }

    for a in &rho.alphas {
        // (a u; q)_inf = sum_n (-1)^n q^{n(n-1)/2} a^n u^n / (q;q)_n
        let mut den = vec![0.0; n_max + 1];
        let mut an = 1.0;
        for n in 0..=n_max {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            den[n] = sign * q.powi((n * n.saturating_sub(1) / 2) as i32) * an / fact[n];
            an *= a;
        }
        series = div_series(&series, &den);
    }
    Ok(series)
}

fn mul_series(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..n - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn div_series(num: &[f64], den: &[f64]) -> Vec<f64> {
    let n = num.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut s = num[k];
        for j in 1..=k {
            s -= den[j] * out[k - j];
        }
        out[k] = s / den[0];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_example() {
        let v = q_pochhammer(0.3, 0.5, PochLen::Finite(2)).unwrap();
        assert!((v - 0.595).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_q() {
        assert!(q_pochhammer(0.3, 1.0, PochLen::Infinite).is_err());
        assert!(q_pochhammer(0.3, 0.0, PochLen::Finite(3)).is_err());
    }

    #[test]
    fn infinite_matches_euler_sum() {
        // (z;q)_inf = sum_n (-1)^n q^{n(n-1)/2} z^n / (q;q)_n
        for &(z, q) in &[(0.3f64, 0.5f64), (-0.7, 0.8), (0.9, 0.2)] {
            let fact = qfact_table(q, 200);
            let mut s = 0.0;
            for n in 0..200usize {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * q.powf((n * n.saturating_sub(1)) as f64 / 2.0) * z.powi(n as i32)
                    / fact[n];
            }
            let t = q_pochhammer_inf(z, q).unwrap();
            assert!((t.value - s).abs() < 1e-13, "{z} {q}");
            assert!(t.tail_bound < 1e-13, "{}", t.tail_bound);
        }
    }

    #[test]
    fn complex_agrees_on_real_axis() {
        let c = q_pochhammer_complex(Complex64::new(0.4, 0.0), 0.6, PochLen::Infinite).unwrap();
        let r = q_pochhammer(0.4, 0.6, PochLen::Infinite).unwrap();
        assert!((c.re - r).abs() < 1e-15 && c.im.abs() < 1e-15);
    }

    #[test]
    fn single_alpha_is_q_binomial() {
        let rho = Specialization { alphas: vec![0.2], ..Default::default() };
        let q = 0.5;
        let c = pi_w_coefficients(&rho, q, 10).unwrap();
        let mut qq = 1.0;
        for n in 0..=10 {
            if n > 0 {
                qq *= 1.0 - q.powi(n as i32);
            }
            assert!((c[n] - 0.2_f64.powi(n as i32) / qq).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_is_exponential() {
        let rho = Specialization { gamma: 1.7, ..Default::default() };
        let c = pi_w_coefficients(&rho, 0.3, 8).unwrap();
        let mut f = 1.0;
        for n in 0..=8 {
            if n > 0 {
                f *= n as f64;
            }
            assert!((c[n] - 1.7f64.powi(n as i32) / f).abs() < 1e-14);
        }
    }

    #[test]
    fn coefficients_sum_to_product() {
        let rho = Specialization { alphas: vec![0.3, 0.5], betas: vec![0.4], gamma: 0.6 };
        let q = 0.4;
        let u: f64 = 0.7;
        let c = pi_w_coefficients(&rho, q, 80).unwrap();
        let s: f64 = c.iter().enumerate().map(|(n, x)| x * u.powi(n as i32)).sum();
        assert!((s - pi_w(u, &rho, q).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn pi_w_domain() {
        let rho = Specialization { alphas: vec![2.0], ..Default::default() };
        assert!(pi_w(0.6, &rho, 0.5).is_err());
    }
}
