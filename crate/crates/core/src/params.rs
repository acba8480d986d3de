//! Inhomogeneous model parameters, partitions and validity checks.
//!
//! Rows carry spectral parameters `u_1, u_2, ...` (negative), columns carry
//! `a_1, a_2, ...` (positive) and `nu_1, nu_2, ...` in `[0, 1)`. Vectors are
//! stored 0-based, so `u[0]` belongs to row 1.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q: f64,
    pub u: Vec<f64>,
    pub a: Vec<f64>,
    pub nu: Vec<f64>,
}

impl ModelParams {
    pub fn new(q: f64, u: Vec<f64>, a: Vec<f64>, nu: Vec<f64>) -> Self {
        ModelParams { q, u, a, nu }
    }

    /// `c_j = nu_j / a_j` for column `j` (1-based).
    pub fn c(&self, j: usize) -> f64 {
        self.nu[j - 1] / self.a[j - 1]
    }

    /// Number of rows and columns that have parameters.
    pub fn dims(&self) -> (usize, usize) {
        (self.a.len().min(self.nu.len()), self.u.len())
    }

    pub(crate) fn require(&self, n_cols: usize, n_rows: usize) -> Result<()> {
        let (n, t) = self.dims();
        if n < n_cols || t < n_rows {
            return Err(Error::InvalidParams(format!(
                "need {n_cols} columns and {n_rows} rows, have {n} and {t}"
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

pub(crate) fn digest_json<T: Serialize>(v: &T) -> String {
    let s = serde_json::to_string(v).unwrap_or_default();
    let h = Sha256::digest(s.as_bytes());
    h.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub basic_ok: bool,
    pub whittaker_ok: bool,
    pub nested_ok: bool,
    /// Smallest distance of `a` from 0 and of `nu` from 1 inside the window.
    pub margin: f64,
}

/// Checks the parameters restricted to columns `1..=n_max` and rows `1..=t_max`.
pub fn validate_params(p: &ModelParams, n_max: usize, t_max: usize, eps: f64) -> ValidityReport {
    let (n, t) = p.dims();
    let fail = ValidityReport { basic_ok: false, whittaker_ok: false, nested_ok: false, margin: 0.0 };
    if n < n_max || t < t_max || !(p.q > 0.0 && p.q < 1.0) {
        return fail;
    }
    let a = &p.a[..n_max];
    let nu = &p.nu[..n_max];
    let u = &p.u[..t_max];
    let mut margin = f64::INFINITY;
    for &x in a {
        margin = margin.min(x);
    }
    for &x in nu {
        if x < 0.0 {
            margin = margin.min(x);
        }
        margin = margin.min(1.0 - x);
    }
    let u_ok = u.iter().all(|&x| x < 0.0 && x.is_finite());
    let finite = a.iter().chain(nu).all(|x| x.is_finite());
    let basic_ok = u_ok && finite && margin >= eps;
    let mut whittaker_ok = basic_ok;
    for &ai in a {
        for j in 0..n_max {
            if ai * nu[j] / a[j] >= 1.0 - eps {
                whittaker_ok = false;
            }
        }
    }
    let (amin, amax) = a.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let nested_ok = basic_ok && (n_max == 0 || amin > p.q * amax + eps);
    ValidityReport { basic_ok, whittaker_ok, nested_ok, margin: if margin.is_finite() { margin } else { 0.0 } }
}

/// A partition with positive, weakly decreasing parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition(pub Vec<u32>);

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.contains(&0) {
            return Err(Error::InvalidParams("partition parts must be positive".into()));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Partition(parts))
    }

    /// Builds the partition listing column `c` once per arrow, from occupancies
    /// indexed by column (index 0 is column `first`).
    pub fn from_occupancy(occ: &[u32], first: u32) -> Self {
        let mut parts = Vec::new();
        for (i, &k) in occ.iter().enumerate().rev() {
            for _ in 0..k {
                parts.push(first + i as u32);
            }
        }
        Partition(parts)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> u32 {
        self.0.first().copied().unwrap_or(0)
    }

    pub fn smallest(&self) -> u32 {
        self.0.last().copied().unwrap_or(0)
    }

    /// Multiplicity of each part value `1..=max`.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut m = vec![0; self.largest() as usize + 1];
        for &p in &self.0 {
            m[p as usize] += 1;
        }
        m
    }

    /// Number of parts `>= n`.
    pub fn height_at(&self, n: u32) -> usize {
        self.0.iter().filter(|&&p| p >= n).count()
    }
}

/// All partitions with exactly `len` parts, each in `1..=max_part`,
/// in lexicographic order of the part vectors.
pub fn partitions_in_box(len: usize, max_part: u32) -> Vec<Partition> {
    fn rec(len: usize, cap: u32, cur: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if cur.len() == len {
            out.push(Partition(cur.clone()));
            return;
        }
        for p in 1..=cap {
            cur.push(p);
            rec(len, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(len, max_part, &mut Vec::new(), &mut out);
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ModelParams {
        ModelParams::new(0.5, vec![-1.0], vec![1.0], vec![0.5])
    }

    #[test]
    fn example_all_ok() {
        let r = validate_params(&p(), 1, 1, DEFAULT_MARGIN);
        assert!(r.basic_ok && r.whittaker_ok && r.nested_ok);
    }

    #[test]
    fn nu_at_inverse_q_fails() {
        let mut m = p();
        m.nu[0] = 2.0;
        assert!(!validate_params(&m, 1, 1, DEFAULT_MARGIN).basic_ok);
    }

    #[test]
    fn positive_u_fails() {
        let mut m = p();
        m.u[0] = 0.1;
        assert!(!validate_params(&m, 1, 1, DEFAULT_MARGIN).basic_ok);
    }

    #[test]
    fn nested_condition() {
        let m = ModelParams::new(0.5, vec![-1.0], vec![1.0, 2.5], vec![0.1, 0.1]);
        let r = validate_params(&m, 2, 1, DEFAULT_MARGIN);
        assert!(r.basic_ok && !r.nested_ok);
    }

    #[test]
    fn whittaker_condition() {
        let m = ModelParams::new(0.5, vec![-1.0], vec![0.1, 2.0], vec![0.1, 0.9]);
        let r = validate_params(&m, 2, 1, DEFAULT_MARGIN);
        assert!(r.basic_ok && !r.whittaker_ok);
    }

    #[test]
    fn partitions_count() {
        // C(N+T, T) partitions with T parts in 1..=N+1
        assert_eq!(partitions_in_box(3, 4).len(), 20);
        assert_eq!(partitions_in_box(0, 4).len(), 1);
    }

    #[test]
    fn occupancy_round_trip() {
        let k = Partition::from_occupancy(&[2, 0, 1], 1);
        assert_eq!(k.0, vec![3, 1, 1]);
        assert_eq!(k.multiplicities(), vec![0, 2, 0, 1]);
        assert_eq!(k.height_at(2), 1);
    }
}
