//! Monte Carlo estimation and distribution comparisons.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::{stream, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

/// Welford accumulator for a vector of observables.
#[derive(Clone, Debug)]
pub struct StreamingMean {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StreamingMean {
    pub fn new(dim: usize) -> Self {
        StreamingMean { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..self.mean.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &StreamingMean) {
        if other.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
    }

    pub fn estimates(&self) -> Vec<McEstimate> {
        let n = self.n as f64;
        (0..self.mean.len())
            .map(|i| {
                let var = if self.n > 1 { self.m2[i] / (n - 1.0) } else { f64::NAN };
                McEstimate { mean: self.mean[i], se: (var / n).sqrt(), n: self.n }
            })
            .collect()
    }
}

/// Splits `budget` samples across `seeds`; sample `k` of shard `s` draws from
/// `stream(seeds[s], k)`. `observe` writes one vector of observables per call.
pub fn mc_estimate_vec(
    dim: usize,
    budget: u64,
    seeds: &[u64],
    mut observe: impl FnMut(&mut Rng, &mut [f64]),
) -> Vec<McEstimate> {
    let mut total = StreamingMean::new(dim);
    let shards = seeds.len().max(1) as u64;
    let mut buf = vec![0.0; dim];
    for (s, &seed) in seeds.iter().enumerate() {
        let count = budget / shards + u64::from((s as u64) < budget % shards);
        let mut acc = StreamingMean::new(dim);
        for k in 0..count {
            let mut rng = stream(seed, k);
            observe(&mut rng, &mut buf);
            acc.push(&buf);
        }
        total.merge(&acc);
    }
    total.estimates()
}

pub fn mc_estimate(budget: u64, seeds: &[u64], mut observe: impl FnMut(&mut Rng) -> f64) -> McEstimate {
    mc_estimate_vec(1, budget, seeds, |r, out| out[0] = observe(r))[0]
}

/// Empirical counts of a discrete observable.
pub fn sample_counts<K: Ord + Clone>(budget: u64, seed: u64, mut draw: impl FnMut(&mut Rng) -> K) -> BTreeMap<K, u64> {
    let mut counts = BTreeMap::new();
    for k in 0..budget {
        let mut rng = stream(seed, k);
        *counts.entry(draw(&mut rng)).or_insert(0) += 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CompareMode {
    ExactTv,
    Chi2,
    Ks,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub mode: CompareMode,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Total variation distance between two (sub-)probability vectors.
pub fn total_variation<K: Eq + Hash + Clone>(a: &HashMap<K, f64>, b: &HashMap<K, f64>) -> f64 {
    let mut s = 0.0;
    for (k, v) in a {
        s += (v - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            s += v.abs();
        }
    }
    0.5 * s
}

fn chi2_p(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let d = ChiSquared::new(dof as f64).expect("positive dof");
    1.0 - d.cdf(stat)
}

/// Pearson goodness of fit. Outcomes with expected count below 5 and all
/// mass missing from `pmf` are pooled into one bin.
pub fn chi2_goodness<K: Ord + Clone>(counts: &BTreeMap<K, u64>, pmf: &BTreeMap<K, f64>) -> Comparison {
    let n: u64 = counts.values().sum();
    let nf = n as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    let mut pooled_obs = n;
    let mut pooled_exp = nf;
    for (k, &p) in pmf {
        let e = p * nf;
        if e >= 5.0 {
            let o = counts.get(k).copied().unwrap_or(0);
            stat += (o as f64 - e).powi(2) / e;
            bins += 1;
            pooled_obs -= o;
            pooled_exp -= e;
        }
    }
    if pooled_exp >= 5.0 {
        stat += (pooled_obs as f64 - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    } else if pooled_obs > 0 && pooled_exp < 1e-9 {
        stat = f64::INFINITY;
    }
    let dof = bins.saturating_sub(1);
    Comparison { mode: CompareMode::Chi2, statistic: stat, dof, p_value: chi2_p(stat, dof) }
}

/// Two-sample chi-square test of homogeneity; sparse cells are pooled.
pub fn chi2_two_sample<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> Comparison {
    let na: f64 = a.values().sum::<u64>() as f64;
    let nb: f64 = b.values().sum::<u64>() as f64;
    let n = na + nb;
    let mut keys: Vec<K> = a.keys().cloned().collect();
    keys.extend(b.keys().cloned());
    keys.sort();
    keys.dedup();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for k in keys {
        let x = a.get(&k).copied().unwrap_or(0) as f64;
        let y = b.get(&k).copied().unwrap_or(0) as f64;
        let tot = x + y;
        if tot * na.min(nb) / n >= 5.0 {
            cells.push((x, y));
        } else {
            pool.0 += x;
            pool.1 += y;
        }
    }
    if pool.0 + pool.1 > 0.0 {
        cells.push(pool);
    }
    let mut stat = 0.0;
    for (x, y) in &cells {
        let tot = x + y;
        let ex = tot * na / n;
        let ey = tot * nb / n;
        stat += (x - ex).powi(2) / ex + (y - ey).powi(2) / ey;
    }
    let dof = cells.len().saturating_sub(1);
    Comparison { mode: CompareMode::Chi2, statistic: stat, dof, p_value: chi2_p(stat, dof) }
}

/// Kolmogorov distance between the empirical law of `sample` and `cdf`,
/// evaluated at the sample points from both sides.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    d
}

/// Kolmogorov distance between two discrete laws on the integers.
pub fn ks_discrete(a: &BTreeMap<i64, f64>, b: &BTreeMap<i64, f64>) -> f64 {
    let mut keys: Vec<i64> = a.keys().chain(b.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    let (mut fa, mut fb, mut d) = (0.0, 0.0, 0.0f64);
    for k in keys {
        fa += a.get(&k).copied().unwrap_or(0.0);
        fb += b.get(&k).copied().unwrap_or(0.0);
        d = d.max((fa - fb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn shard_count_only_changes_grouping() {
        let f = |r: &mut Rng| r.gen::<f64>();
        let a = mc_estimate(10_000, &[3], f);
        let b = mc_estimate(10_000, &[3], f);
        assert_eq!(a, b);
        assert!((a.mean - 0.5).abs() < 4.0 * a.se);
        assert!((a.se - (1.0 / 12.0f64 / 10_000.0).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut all = StreamingMean::new(1);
        let mut a = StreamingMean::new(1);
        let mut b = StreamingMean::new(1);
        for (i, x) in xs.iter().enumerate() {
            all.push(&[*x]);
            if i < 37 { a.push(&[*x]) } else { b.push(&[*x]) }
        }
        a.merge(&b);
        let (x, y) = (all.estimates()[0], a.estimates()[0]);
        assert!((x.mean - y.mean).abs() < 1e-14 && (x.se - y.se).abs() < 1e-14);
    }

    #[test]
    fn tv_of_disjoint_is_one() {
        let a: HashMap<i32, f64> = [(0, 1.0)].into();
        let b: HashMap<i32, f64> = [(1, 1.0)].into();
        assert_eq!(total_variation(&a, &b), 1.0);
    }

    #[test]
    fn chi2_accepts_true_law() {
        let pmf: BTreeMap<u8, f64> = [(0, 0.2), (1, 0.5), (2, 0.3)].into();
        let counts = sample_counts(50_000, 9, |r| {
            let u: f64 = r.gen();
            if u < 0.2 { 0u8 } else if u < 0.7 { 1 } else { 2 }
        });
        let c = chi2_goodness(&counts, &pmf);
        assert_eq!(c.dof, 2);
        assert!(c.p_value > 1e-4);
        let wrong: BTreeMap<u8, f64> = [(0, 0.25), (1, 0.45), (2, 0.3)].into();
        assert!(chi2_goodness(&counts, &wrong).p_value < 1e-10);
    }

    #[test]
    fn two_sample_detects_shift() {
        let a = sample_counts(20_000, 1, |r| (r.gen::<f64>() * 5.0) as i64);
        let b = sample_counts(20_000, 2, |r| (r.gen::<f64>() * 5.0) as i64);
        let c = sample_counts(20_000, 3, |r| (r.gen::<f64>() * 5.0 + 0.3) as i64);
        assert!(chi2_two_sample(&a, &b).p_value > 1e-4);
        assert!(chi2_two_sample(&a, &c).p_value < 1e-10);
    }

    #[test]
    fn ks_uniform() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance(&xs, |x| x) <= 0.0005 + 1e-12);
    }
}
