//! Acceptance checks, suites and their reports.
//!
//! Every check has a stable id. A suite is a list of [`ExperimentSpec`]s,
//! either one of the built-in lists or a TOML file:
//!
//! ```toml
//! name = "smoke"
//! seed = 11
//!
//! [[checks]]
//! id = "stochasticity"
//! budget = 200
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coupling::{joint_law_check_prop_a, joint_law_check_prop_b, theorem_coupling_check, COUPLING_TOL};
use crate::diffops::{apply_chain, apply_d, operator_expectation, EvaluablePoint, Operator};
use crate::error::{Error, Result};
use crate::moments::{
    formal_identity_check, moment_height_residues, moment_product_quadrature, moment_qwhittaker, plain_from_centered,
    WhittakerMethod,
};
use crate::params::{partitions_in_box, ModelParams, Partition};
use crate::qseries::{pi_w_coefficients, Specialization};
use crate::qtasep::{run_mixed, transition_matrix, Move, TimeLikePath};
use crate::rng::{stream, Rng};
use crate::schur::{
    asymptotics_experiment, length_law, limit_shape, schur_bruteforce_expectation, schur_observable,
    tracy_widom_cdf, tracy_widom_cdf_with, vertex_observable, ExperimentConfig, SchurSetup, DEFAULT_KERNEL_NODES,
};
use crate::stats::{chi2_goodness, chi2_two_sample, StreamingMean};
use crate::vertex::{f_stoch, f_tilde, vertex_weight_row, Arrows, Boundary, QuadrantSampler};

pub const DEFAULT_SEED: u64 = 20_240_601;
const DEFAULT_SHARDS: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Pass iff `statistic <= tolerance`.
    AtMost,
    /// Pass iff `statistic >= tolerance`.
    AtLeast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    MaxAbs,
    MaxRel,
    Tv,
    SeMultiples,
    PValue,
    Kolmogorov,
}

pub struct CheckInfo {
    pub id: &'static str,
    pub name: &'static str,
    pub kind: StatisticKind,
    pub bound: Bound,
    pub tolerance: f64,
    /// Draws, samples or replicas, depending on the check.
    pub budget: u64,
    pub long: bool,
    run: fn(&Ctx) -> Result<Outcome>,
}

/// The checks in order; the index plus one is the criterion number.
pub static CHECKS: [CheckInfo; 16] = [
    CheckInfo { id: "stochasticity", name: "vertex weights sum to one", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 1e-12, budget: 1000, long: false, run: check_stochasticity },
    CheckInfo { id: "sum_to_one", name: "row-state probabilities sum to one behind an empty column", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 1e-10, budget: 10, long: false, run: check_sum_to_one },
    CheckInfo { id: "sampler_formula", name: "quadrant sampler against symmetrization formula", kind: StatisticKind::PValue, bound: Bound::AtLeast, tolerance: 1e-4, budget: 1_000_000, long: false, run: check_sampler_formula },
    CheckInfo { id: "key_lemma", name: "difference operator on partial sums", kind: StatisticKind::MaxRel, bound: Bound::AtMost, tolerance: 1e-9, budget: 20, long: false, run: check_key_lemma },
    CheckInfo { id: "route_triangle", name: "operator, quadrature and residue moments agree", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 1e-9, budget: 3, long: false, run: check_route_triangle },
    CheckInfo { id: "mc_closure", name: "residue moments against vertex Monte Carlo", kind: StatisticKind::SeMultiples, bound: Bound::AtMost, tolerance: 4.0, budget: 1_000_000, long: false, run: check_mc_closure },
    CheckInfo { id: "formal_identity", name: "finite product expansion", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 1e-12, budget: 100, long: false, run: check_formal_identity },
    CheckInfo { id: "qwhittaker_n1", name: "one-variable q-Whittaker moments against series", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 1e-8, budget: 1, long: false, run: check_qwhittaker_n1 },
    CheckInfo { id: "commutation", name: "q-TASEP transition matrices commute", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 1e-10, budget: 3, long: false, run: check_commutation },
    CheckInfo { id: "local_coupling", name: "one-vertex coupling marginals", kind: StatisticKind::Tv, bound: Bound::AtMost, tolerance: COUPLING_TOL, budget: 50, long: false, run: check_local_coupling },
    CheckInfo { id: "coupling_theorem", name: "heights along time-like paths match mixed q-TASEP", kind: StatisticKind::Tv, bound: Bound::AtMost, tolerance: COUPLING_TOL, budget: 10, long: false, run: check_coupling_theorem },
    CheckInfo { id: "bernoulli_height_law", name: "step-Bernoulli height against last q-TASEP particle", kind: StatisticKind::PValue, bound: Bound::AtLeast, tolerance: 1e-4, budget: 1_000_000, long: false, run: check_bernoulli_height_law },
    CheckInfo { id: "schur_matching", name: "vertex q-Laplace observable against Schur measure", kind: StatisticKind::SeMultiples, bound: Bound::AtMost, tolerance: 4.0, budget: 1_000_000, long: false, run: check_schur_matching },
    CheckInfo { id: "fredholm", name: "Fredholm length law against Schur sums", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 1e-6, budget: 3, long: false, run: check_fredholm },
    CheckInfo { id: "lln", name: "law of large numbers for the scaled position", kind: StatisticKind::MaxAbs, bound: Bound::AtMost, tolerance: 0.05, budget: 200, long: false, run: check_lln },
    CheckInfo { id: "tracy_widom", name: "fluctuations against GUE Tracy-Widom", kind: StatisticKind::Kolmogorov, bound: Bound::AtMost, tolerance: 0.15, budget: 500, long: true, run: check_tracy_widom },
];

pub fn check_info(id: &str) -> Option<&'static CheckInfo> {
    CHECKS.iter().find(|c| c.id == id)
}

/// One entry of a suite.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(id: &str) -> Self {
        ExperimentSpec { id: id.into(), ..Default::default() }
    }

    fn validate(&self) -> Result<&'static CheckInfo> {
        let info = check_info(&self.id).ok_or_else(|| Error::Config(format!("unknown check id '{}'", self.id)))?;
        if self.budget == Some(0) {
            return Err(Error::Config(format!("check '{}': budget must be positive", self.id)));
        }
        if matches!(&self.seeds, Some(s) if s.is_empty()) {
            return Err(Error::Config(format!("check '{}': seed list is empty", self.id)));
        }
        Ok(info)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub checks: Vec<ExperimentSpec>,
}

impl Suite {
    /// `default` holds every check but the long one; `full` holds all.
    pub fn builtin(name: &str) -> Option<Suite> {
        let include_long = match name {
            "default" => false,
            "full" => true,
            _ => return None,
        };
        let checks = CHECKS.iter().filter(|c| include_long || !c.long).map(|c| ExperimentSpec::new(c.id)).collect();
        Some(Suite { name: name.into(), seed: None, checks })
    }

    pub fn from_toml(text: &str) -> Result<Suite> {
        let s: Suite = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for c in &s.checks {
            c.validate()?;
        }
        Ok(s)
    }

    /// A built-in name or a path to a TOML file.
    pub fn resolve(arg: &str) -> Result<Suite> {
        if let Some(s) = Suite::builtin(arg) {
            return Ok(s);
        }
        let text = std::fs::read_to_string(arg).map_err(|e| Error::Config(format!("cannot read suite '{arg}': {e}")))?;
        let mut s = Suite::from_toml(&text)?;
        if s.name.is_empty() {
            s.name = Path::new(arg).file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub id: String,
    pub name: String,
    pub kind: StatisticKind,
    pub statistic: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
    pub budget: u64,
    pub seeds: Vec<u64>,
    /// Oracle values, estimates and standard errors behind the statistic.
    pub details: Value,
    pub error: Option<String>,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub runtime_s: f64,
}

impl ComparisonReport {
    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {:<22} {} = {:.3e} (tolerance {:.1e}) {:.1}s",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            self.statistic,
            self.tolerance,
            self.runtime_s
        )
    }
}

pub fn default_seeds(base: u64) -> Vec<u64> {
    (0..DEFAULT_SHARDS).map(|i| base.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15))).collect()
}

struct Ctx {
    budget: u64,
    seeds: Vec<u64>,
}

impl Ctx {
    fn draw_rng(&self, k: u64) -> Rng {
        stream(self.seeds[0], k)
    }
}

struct Outcome {
    statistic: f64,
    details: Value,
    /// Extra conditions beyond the statistic bound.
    side_ok: bool,
}

impl Outcome {
    fn new(statistic: f64, details: Value) -> Self {
        Outcome { statistic, details, side_ok: true }
    }
}

/// Runs one check. Numerical failures inside the check become a failed report.
pub fn run_check(spec: &ExperimentSpec, base_seed: u64) -> Result<ComparisonReport> {
    let info = spec.validate()?;
    let ctx = Ctx {
        budget: spec.budget.unwrap_or(info.budget),
        seeds: spec.seeds.clone().unwrap_or_else(|| default_seeds(base_seed)),
    };
    let tolerance = spec.tolerance.unwrap_or(info.tolerance);
    let start = Instant::now();
    let res = (info.run)(&ctx);
    let runtime_s = start.elapsed().as_secs_f64();
    let (statistic, details, side_ok, error) = match res {
        Ok(o) => (o.statistic, o.details, o.side_ok, None),
        Err(e) => (f64::NAN, Value::Null, false, Some(e.to_string())),
    };
    let within = match info.bound {
        Bound::AtMost => statistic <= tolerance,
        Bound::AtLeast => statistic >= tolerance,
    };
    Ok(ComparisonReport {
        id: info.id.into(),
        name: spec.name.clone().unwrap_or_else(|| info.name.into()),
        kind: info.kind,
        statistic,
        tolerance,
        bound: info.bound,
        pass: within && side_ok,
        budget: ctx.budget,
        seeds: ctx.seeds,
        details,
        error,
        runtime_s,
    })
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub reports: Vec<ComparisonReport>,
}

impl SuiteOutcome {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("id,pass,kind,statistic,tolerance,budget,runtime_s\n");
        for r in &self.reports {
            let kind = serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{:e},{:e},{},{:.3}", r.id, r.pass, kind, r.statistic, r.tolerance, r.budget, r.runtime_s);
        }
        s
    }
}

/// Runs every check of `suite` on scoped threads and, if `out` is given,
/// writes `<id>.json` per check and `summary.csv`.
pub fn run_suite(suite: &Suite, base_seed: u64, out: Option<&Path>) -> Result<SuiteOutcome> {
    for c in &suite.checks {
        c.validate()?;
    }
    let base = suite.seed.unwrap_or(base_seed);
    let results = par_map(suite.checks.len(), |i| run_check(&suite.checks[i], base));
    let reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    let outcome = SuiteOutcome { reports };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        for r in &outcome.reports {
            std::fs::write(dir.join(format!("{}.json", r.id)), serde_json::to_string_pretty(r)? + "\n")?;
        }
        std::fs::write(dir.join("summary.csv"), outcome.summary_csv())?;
    }
    Ok(outcome)
}

/// `f(0), ..., f(n-1)` on scoped threads, in index order.
pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map(|x| x.get()).unwrap_or(1).min(n.max(1));
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let f = &f;
    std::thread::scope(|s| {
        let chunks: Vec<_> = slots
            .chunks_mut(n.div_ceil(threads))
            .enumerate()
            .map(|(c, chunk)| {
                s.spawn(move || {
                    let start = c * n.div_ceil(threads);
                    for (k, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(f(start + k));
                    }
                })
            })
            .collect();
        for h in chunks {
            h.join().expect("worker panicked");
        }
    });
    slots.into_iter().map(|x| x.expect("filled")).collect()
}

/// Splits `budget` over `seeds`; shard `s` gets `(seeds[s], count)`.
fn sharded<T: Send>(budget: u64, seeds: &[u64], shard: impl Fn(u64, u64) -> T + Sync) -> Vec<T> {
    let k = seeds.len() as u64;
    par_map(seeds.len(), |s| {
        let count = budget / k + u64::from((s as u64) < budget % k);
        shard(seeds[s], count)
    })
}

// ------------------------------------------------------------ draws

/// `len` values in `[lo, hi)` with `|x_i - q^e x_j| >= gap` for `e = 0, 1, 2`.
fn separated(rng: &mut Rng, len: usize, lo: f64, hi: f64, q: f64, gap: f64) -> Vec<f64> {
    'outer: loop {
        let xs: Vec<f64> = (0..len).map(|_| rng.gen_range(lo..hi)).collect();
        for i in 0..len {
            for j in 0..len {
                for e in 0..3 {
                    if (i != j || e > 0) && (xs[i] - q.powi(e) * xs[j]).abs() < gap {
                        continue 'outer;
                    }
                }
            }
        }
        return xs;
    }
}

/// Column and row parameters with `nu_1 = ... = nu_zeros = 0`.
/// `a in [0.7, 1.3)`, `nu in [0, 0.5)`, `u in [-1.5, -0.2)`, so `a_i c_j < 1`.
fn draw_model(rng: &mut Rng, q: f64, n: usize, t: usize, zeros: usize) -> ModelParams {
    let a = separated(rng, n, 0.7, 1.3, q, 0.04);
    let nu = (0..n).map(|i| if i < zeros { 0.0 } else { rng.gen_range(0.0..0.5) }).collect();
    let u = separated(rng, t, -1.5, -0.2, q, 0.04);
    ModelParams::new(q, u, a, nu)
}

fn rows(p: &ModelParams) -> Value {
    json!({"q": p.q, "u": p.u, "a": p.a, "nu": p.nu})
}

// ------------------------------------------------------------ checks

fn check_stochasticity(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut min_weight = f64::INFINITY;
    for k in 0..ctx.budget {
        let mut r = ctx.draw_rng(k);
        let q = r.gen_range(0.02..0.98);
        let a = r.gen_range(0.05..3.0);
        let nu = r.gen_range(0.0..0.98);
        let u = -r.gen_range(0.01..5.0);
        let mut inputs: Vec<Arrows> = (0..=40).map(Arrows::Finite).collect();
        inputs.push(Arrows::Infinite);
        for &i1 in &inputs {
            for j1 in 0..=1u8 {
                let out = vertex_weight_row(u, a, nu, q, i1, j1)?;
                let s: f64 = out.iter().map(|o| o.weight).sum();
                worst = worst.max((s - 1.0).abs());
                min_weight = out.iter().map(|o| o.weight).fold(min_weight, f64::min);
            }
        }
    }
    let mut o = Outcome::new(worst, json!({"draws": ctx.budget, "max_g": 40, "min_weight": min_weight}));
    o.side_ok = min_weight >= -1e-15;
    Ok(o)
}

fn check_sum_to_one(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut items = Vec::new();
    for k in 0..ctx.budget {
        let mut r = ctx.draw_rng(k);
        let q = r.gen_range(0.1..0.9);
        let p = draw_model(&mut r, q, 5, 4, 0);
        for n in 1..=4usize {
            let mut pn = p.clone();
            pn.a.truncate(n + 1);
            pn.nu.truncate(n + 1);
            pn.a[n] = 0.0;
            pn.nu[n] = 0.0;
            for t in 1..=4usize {
                let mut s = 0.0;
                for kappa in partitions_in_box(t, n as u32 + 1) {
                    s += f_stoch(&kappa, &pn, t)?;
                }
                let err = (s - 1.0).abs();
                worst = worst.max(err);
                items.push(json!({"draw": k, "N": n, "T": t, "sum": s}));
            }
        }
    }
    Ok(Outcome::new(worst, json!({"cases": items})))
}

fn check_sampler_formula(ctx: &Ctx) -> Result<Outcome> {
    const N: usize = 4;
    const T: usize = 3;
    let mut r = ctx.draw_rng(0);
    let p = draw_model(&mut r, 0.45, N, T, 0);
    let sampler = QuadrantSampler::new(&p, Boundary::Step, N, T)?;
    let shards = sharded(ctx.budget, &ctx.seeds, |seed, count| {
        let mut f = sampler.empty_field();
        let mut counts: Vec<BTreeMap<Option<Partition>, u64>> = vec![BTreeMap::new(); T];
        for k in 0..count {
            sampler.sample_into(&mut stream(seed, k), &mut f);
            for t in 1..=T {
                *counts[t - 1].entry(f.row_state(t)).or_insert(0) += 1;
            }
        }
        counts
    });
    let mut p_min: f64 = 1.0;
    let mut items = Vec::new();
    for t in 1..=T {
        let mut counts = BTreeMap::new();
        for s in &shards {
            for (k, v) in &s[t - 1] {
                *counts.entry(k.clone()).or_insert(0) += v;
            }
        }
        let mut pmf = BTreeMap::new();
        for kappa in partitions_in_box(t, N as u32) {
            let w = f_stoch(&kappa, &p, t)?;
            pmf.insert(Some(kappa), w);
        }
        let c = chi2_goodness(&counts, &pmf);
        p_min = p_min.min(c.p_value);
        items.push(json!({"T": t, "chi2": c.statistic, "dof": c.dof, "p_value": c.p_value,
            "outside_window": counts.get(&None).copied().unwrap_or(0)}));
    }
    Ok(Outcome::new(p_min, json!({"params": rows(&p), "window_columns": N, "tests": items})))
}

/// `sum_{kappa_1 <= n} F~^(m)_kappa` as a function of the column parameters.
fn partial_sum<'a>(p: &'a ModelParams, n: usize, t: usize, m: usize) -> impl Fn(&EvaluablePoint) -> Result<f64> + 'a {
    let kappas = partitions_in_box(t, n as u32);
    move |x: &EvaluablePoint| {
        let px = x.apply_to(p);
        kappas.iter().map(|k| f_tilde(k, &px, t, m)).sum()
    }
}

/// Both sides of the key lemma for `D_{N_l} ... D_{N_1}` acting on
/// `sum_{kappa_1 <= N} F~^(N)_kappa(T)`, with `N >= N_1 >= ... >= N_l`:
/// the operator side and `sum_kappa prod_j (q^{h_kappa(N_j+1)} - q^{T+l-j} nu_1..nu_{N_j}) F~_kappa`.
pub fn key_lemma_sides(p: &ModelParams, levels: &[usize], n: usize, t: usize) -> Result<(f64, f64)> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] < w[1]) || levels[0] > n || levels.contains(&0) {
        return Err(Error::InvalidParams(format!("levels {levels:?} must be non-increasing in 1..={n}")));
    }
    p.require(n, t)?;
    let q = p.q;
    let base = EvaluablePoint::from_params(p);
    let f = partial_sum(p, n, t, n);
    let ops: Vec<Operator> = levels.iter().map(|&x| Operator::D(x)).collect();
    let lhs = apply_chain(&ops, &f, &base, q)?;
    let mut rhs = 0.0;
    for kappa in partitions_in_box(t, n as u32) {
        let mut c = 1.0;
        for (j, &nj) in levels.iter().enumerate() {
            let pr: f64 = p.nu[..nj].iter().product();
            let h = kappa.height_at(nj as u32 + 1) as i32;
            c *= q.powi(h) - q.powi((t + levels.len() - j - 1) as i32) * pr;
        }
        rhs += c * f_tilde(&kappa, p, t, n)?;
    }
    Ok((lhs, rhs))
}

fn check_key_lemma(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut worst_multi: f64 = 0.0;
    for k in 0..ctx.budget {
        let mut r = ctx.draw_rng(k);
        let q = r.gen_range(0.2..0.8);
        let p = draw_model(&mut r, q, 3, 3, 0);
        let base = EvaluablePoint::from_params(&p);
        for n in 1..=3usize {
            let prod: f64 = p.nu[..n].iter().product();
            for t in 1..=3usize {
                let f = partial_sum(&p, n, t, n);
                let lhs = apply_d(&f, n, &base, q)?;
                let rhs = (1.0 - q.powi(t as i32) * prod) * f(&base)?;
                worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
            }
            for t in 1..=2usize {
                for n1 in 1..=n {
                    for n2 in 1..=n1 {
                        let (lhs, rhs) = key_lemma_sides(&p, &[n1, n2], n, t)?;
                        worst_multi = worst_multi.max((lhs - rhs).abs() / rhs.abs().max(1.0));
                    }
                }
            }
        }
    }
    Ok(Outcome::new(
        worst.max(worst_multi),
        json!({"draws": ctx.budget, "single_level": worst, "two_level": worst_multi, "scale": "max(1, |rhs|)"}),
    ))
}

fn level_lists(n_max: usize, l_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(n_max: usize, l: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == l {
            out.push(cur.clone());
            return;
        }
        let cap = cur.last().copied().unwrap_or(n_max);
        for n in 1..=cap {
            cur.push(n);
            rec(n_max, l, cur, out);
            cur.pop();
        }
    }
    for l in 1..=l_max {
        rec(n_max, l, &mut Vec::new(), &mut out);
    }
    out
}

fn check_route_triangle(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut items = Vec::new();
    for k in 0..ctx.budget {
        let mut r = ctx.draw_rng(k);
        let q = r.gen_range(0.2..0.5);
        let p = draw_model(&mut r, q, 3, 3, 0);
        for t in 1..=3usize {
            for nl in level_lists(3, 2) {
                let op = operator_expectation(&nl, t, &p, nl[0])?;
                let (quad, _) = moment_product_quadrature(&nl, t, &p, None)?;
                let plain_op = plain_from_centered(&nl, t, &p, |sub| operator_expectation(sub, t, &p, sub[0]))?;
                let res = moment_height_residues(&nl, t, &p)?;
                let d = (op - quad).abs().max((plain_op - res).abs());
                worst = worst.max(d);
                items.push(json!({"draw": k, "T": t, "levels": nl, "operator": op, "quadrature": quad,
                    "operator_plain": plain_op, "residues": res}));
            }
        }
    }
    Ok(Outcome::new(worst, json!({"cases": items})))
}

fn check_mc_closure(ctx: &Ctx) -> Result<Outcome> {
    const N: usize = 4;
    const T: usize = 4;
    let mut r = ctx.draw_rng(0);
    let p = draw_model(&mut r, 0.5, N, T, 0);
    let lists = level_lists(N, 2);
    let mut cases = Vec::new();
    for t in 1..=T {
        for nl in &lists {
            cases.push((t, nl.clone(), moment_height_residues(nl, t, &p)?));
        }
    }
    let sampler = QuadrantSampler::new(&p, Boundary::Step, N, T)?;
    let shards = sharded(ctx.budget, &ctx.seeds, |seed, count| {
        let mut f = sampler.empty_field();
        let mut acc = StreamingMean::new(cases.len());
        let mut buf = vec![0.0; cases.len()];
        for k in 0..count {
            sampler.sample_into(&mut stream(seed, k), &mut f);
            for (i, (t, nl, _)) in cases.iter().enumerate() {
                buf[i] = nl.iter().map(|&n| p.q.powi(f.get(n + 1, *t) as i32)).product();
            }
            acc.push(&buf);
        }
        acc
    });
    let mut total = StreamingMean::new(cases.len());
    for s in &shards {
        total.merge(s);
    }
    let est = total.estimates();
    let mut worst: f64 = 0.0;
    let mut items = Vec::new();
    for ((t, nl, oracle), e) in cases.iter().zip(&est) {
        let z = (e.mean - oracle).abs() / e.se;
        worst = worst.max(z);
        items.push(json!({"T": t, "levels": nl, "oracle": oracle, "estimate": e.mean, "se": e.se}));
    }
    Ok(Outcome::new(worst, json!({"params": rows(&p), "cases": items})))
}

fn check_formal_identity(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for k in 0..ctx.budget {
        let mut r = ctx.draw_rng(k);
        let q = r.gen_range(0.05..0.95);
        for l in 1..=5usize {
            let x: Vec<f64> = (0..l).map(|_| r.gen_range(-1.5..1.5)).collect();
            let b: Vec<f64> = (0..l).map(|_| r.gen_range(-1.5..1.5)).collect();
            worst = worst.max(formal_identity_check(&x, &b, q)?.abs());
        }
    }
    Ok(Outcome::new(worst, json!({"draws": ctx.budget, "max_len": 5})))
}

/// `E q^{k lambda_1}` for one variable from the coefficients of `Pi(u; rho)`.
fn series_moment(k: usize, a: f64, rho: &Specialization, q: f64, terms: usize) -> Result<f64> {
    let c = pi_w_coefficients(rho, q, terms)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (n, cn) in c.iter().enumerate() {
        let w = cn * a.powi(n as i32);
        den += w;
        num += w * q.powi((k * n) as i32);
    }
    Ok(num / den)
}

fn check_qwhittaker_n1(ctx: &Ctx) -> Result<Outcome> {
    let specs = [
        Specialization { alphas: vec![0.4], betas: vec![], gamma: 0.0 },
        Specialization { alphas: vec![], betas: vec![0.7, 0.3], gamma: 0.0 },
        Specialization { alphas: vec![], betas: vec![], gamma: 0.8 },
        Specialization { alphas: vec![0.3, 0.5], betas: vec![0.6], gamma: 0.0 },
        Specialization { alphas: vec![0.45], betas: vec![0.2, 0.9], gamma: 0.5 },
    ];
    let mut worst: f64 = 0.0;
    let mut items = Vec::new();
    for d in 0..ctx.budget {
        let mut r = ctx.draw_rng(d);
        let q = r.gen_range(0.2..0.7);
        let a = r.gen_range(0.6..1.2);
        for rho in &specs {
            for k in 1..=3usize {
                let oracle = series_moment(k, a, rho, q, 300)?;
                let (c, _) = moment_qwhittaker(k, &[a], rho, q, WhittakerMethod::NestedContour)?;
                let (o, _) = moment_qwhittaker(k, &[a], rho, q, WhittakerMethod::DifferenceOperator)?;
                worst = worst.max((c - oracle).abs()).max((o - oracle).abs());
                items.push(json!({"q": q, "a": a, "rho": rho, "k": k, "series": oracle, "contour": c, "operator": o}));
            }
        }
    }
    Ok(Outcome::new(worst, json!({"cases": items})))
}

fn check_commutation(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut items = Vec::new();
    for l in 1..=3usize {
        for d in 0..ctx.budget {
            let mut r = ctx.draw_rng(100 * l as u64 + d);
            let q = r.gen_range(0.2..0.8);
            let a: Vec<f64> = (0..l).map(|_| r.gen_range(0.6..1.4)).collect();
            let amax = a.iter().copied().fold(0.0, f64::max);
            let al = [r.gen_range(0.05..0.6) / amax, r.gen_range(0.05..0.6) / amax];
            let be = [r.gen_range(0.2..2.0), r.gen_range(0.2..2.0)];
            let (lo, hi) = (-(l as i64) - 4, 4);
            let g1 = transition_matrix(Move::Geometric(al[0]), &a, q, lo, hi, 1e-12)?.matrix;
            let g2 = transition_matrix(Move::Geometric(al[1]), &a, q, lo, hi, 1e-12)?.matrix;
            let b1 = transition_matrix(Move::Bernoulli(be[0]), &a, q, lo, hi, 1e-12)?.matrix;
            let b2 = transition_matrix(Move::Bernoulli(be[1]), &a, q, lo, hi, 1e-12)?.matrix;
            let bg = (&b1 * &g1 - &g1 * &b1).amax();
            let gg = (&g1 * &g2 - &g2 * &g1).amax();
            let bb = (&b1 * &b2 - &b2 * &b1).amax();
            worst = worst.max(bg).max(gg).max(bb);
            items.push(json!({"L": l, "box": [lo, hi], "q": q, "a": a, "alphas": al, "betas": be,
                "bg": bg, "gg": gg, "bb": bb}));
        }
    }
    Ok(Outcome::new(worst, json!({"cases": items})))
}

fn check_local_coupling(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut deficit: f64 = 0.0;
    for d in 0..ctx.budget {
        let mut r = ctx.draw_rng(d);
        let l = r.gen_range(1..=3usize);
        let q = r.gen_range(0.2..0.8);
        let a: Vec<f64> = (0..l).map(|_| r.gen_range(0.5..1.5)).collect();
        let amax = a.iter().copied().fold(0.0, f64::max);
        let alpha = r.gen_range(0.05..0.9) / amax;
        let beta = r.gen_range(0.2..2.0);
        let mut x = vec![r.gen_range(-3..=3i64)];
        for _ in 1..l {
            let prev = *x.last().unwrap();
            x.push(prev - 1 - r.gen_range(0..=3));
        }
        for m in 1..=l {
            for rep in [
                joint_law_check_prop_a(&x, m, &a, alpha, beta, q)?,
                joint_law_check_prop_b(&x, m, &a, alpha, beta, q)?,
            ] {
                worst = worst.max(rep.tv_distance);
                deficit = deficit.max(rep.truncation_deficit);
            }
        }
    }
    let mut o = Outcome::new(worst, json!({"draws": ctx.budget, "max_truncation_deficit": deficit}));
    o.side_ok = deficit <= COUPLING_TOL;
    Ok(o)
}

/// Every unit-step path whose points all have `N + T <= s_max`.
fn all_paths(s_max: usize) -> Vec<TimeLikePath> {
    let mut out = Vec::new();
    fn extend(cur: &mut Vec<(usize, usize)>, s_max: usize, out: &mut Vec<TimeLikePath>) {
        out.push(TimeLikePath(cur.clone()));
        let (n, t) = *cur.last().unwrap();
        if n + t < s_max {
            for next in [(n + 1, t), (n, t + 1)] {
                cur.push(next);
                extend(cur, s_max, out);
                cur.pop();
            }
        }
    }
    for s0 in 1..=s_max {
        for n0 in 1..=s0 {
            extend(&mut vec![(n0, s0 - n0)], s_max, &mut out);
        }
    }
    out
}

fn random_path(r: &mut Rng, s_end: usize) -> TimeLikePath {
    let s0 = r.gen_range(1..=3usize);
    let mut cur = (r.gen_range(1..=s0), 0);
    cur.1 = s0 - cur.0;
    let mut pts = vec![cur];
    while cur.0 + cur.1 < s_end {
        if r.gen_bool(0.5) {
            cur.0 += 1;
        } else {
            cur.1 += 1;
        }
        pts.push(cur);
    }
    TimeLikePath(pts)
}

fn check_coupling_theorem(ctx: &Ctx) -> Result<Outcome> {
    let mut r = ctx.draw_rng(0);
    let q = r.gen_range(0.3..0.7);
    let p1 = draw_model(&mut r, q, 6, 5, 1);
    let p2 = draw_model(&mut r, q, 7, 5, 2);
    let mut cases: Vec<(TimeLikePath, &ModelParams, usize)> = all_paths(4).into_iter().map(|x| (x, &p1, 1)).collect();
    let exhaustive = cases.len();
    for _ in 0..ctx.budget {
        cases.push((random_path(&mut r, 5), &p1, 1));
    }
    cases.push((random_path(&mut r, 5), &p2, 2));
    let reports = par_map(cases.len(), |i| theorem_coupling_check(&cases[i].0, cases[i].1, cases[i].2));
    let mut worst: f64 = 0.0;
    let mut deficit: f64 = 0.0;
    let mut random = Vec::new();
    for (i, rep) in reports.into_iter().enumerate() {
        let rep = rep?;
        worst = worst.max(rep.tv_distance);
        deficit = deficit.max(rep.truncation_deficit);
        if i >= exhaustive {
            random.push(json!({"path": cases[i].0, "order": cases[i].2, "tv": rep.tv_distance}));
        }
    }
    let mut o = Outcome::new(
        worst,
        json!({"exhaustive_paths": exhaustive, "random": random, "max_truncation_deficit": deficit,
            "params_order1": rows(&p1), "params_order2": rows(&p2)}),
    );
    o.side_ok = deficit <= COUPLING_TOL;
    Ok(o)
}

fn check_bernoulli_height_law(ctx: &Ctx) -> Result<Outcome> {
    const N: usize = 4;
    const T: usize = 4;
    let mut r = ctx.draw_rng(0);
    let p = draw_model(&mut r, 0.5, N + 1, T, 1);
    let sampler = QuadrantSampler::new(&p, Boundary::StepBernoulli, N + 1, T)?;
    let paths: Vec<TimeLikePath> = (1..=N).map(|n| TimeLikePath::from_steps((n, 0), &"T".repeat(T))).collect::<Result<_>>()?;
    type Counts = Vec<BTreeMap<i64, u64>>;
    let shards: Vec<Result<(Counts, Counts)>> = sharded(ctx.budget, &ctx.seeds, |seed, count| {
        let mut f = sampler.empty_field();
        let mut vc: Counts = vec![BTreeMap::new(); N * T];
        let mut qc: Counts = vec![BTreeMap::new(); N * T];
        for k in 0..count {
            let mut rng = stream(seed, k);
            sampler.sample_into(&mut rng, &mut f);
            for n in 1..=N {
                for t in 1..=T {
                    *vc[(n - 1) * T + t - 1].entry(f.get(n + 1, t) as i64).or_insert(0) += 1;
                }
            }
            for (i, path) in paths.iter().enumerate() {
                let traj = run_mixed(path, &p, &mut rng)?;
                for t in 1..=T {
                    *qc[i * T + t - 1].entry(traj.0[t].x_value).or_insert(0) += 1;
                }
            }
        }
        Ok((vc, qc))
    });
    let mut vc: Counts = vec![BTreeMap::new(); N * T];
    let mut qc: Counts = vec![BTreeMap::new(); N * T];
    for s in shards {
        let (a, b) = s?;
        for i in 0..N * T {
            for (k, v) in &a[i] {
                *vc[i].entry(*k).or_insert(0) += v;
            }
            for (k, v) in &b[i] {
                *qc[i].entry(*k).or_insert(0) += v;
            }
        }
    }
    let mut p_min: f64 = 1.0;
    let mut items = Vec::new();
    for n in 1..=N {
        for t in 1..=T {
            let i = (n - 1) * T + t - 1;
            let c = chi2_two_sample(&vc[i], &qc[i]);
            p_min = p_min.min(c.p_value);
            items.push(json!({"N": n, "T": t, "chi2": c.statistic, "dof": c.dof, "p_value": c.p_value}));
        }
    }
    Ok(Outcome::new(p_min, json!({"params": rows(&p), "tests": items})))
}

fn check_schur_matching(ctx: &Ctx) -> Result<Outcome> {
    const T: usize = 3;
    let zetas = [0.3, 1.0];
    let mut r = ctx.draw_rng(0);
    let q = r.gen_range(0.3..0.6);
    let u = -r.gen_range(0.4..1.2);
    let a1 = r.gen_range(0.8..1.5);
    let mut worst: f64 = 0.0;
    let mut items = Vec::new();
    for n in 1..=3usize {
        let s = SchurSetup::new(q, u, a1, n, T)?;
        let p = s.model_params();
        let sampler = QuadrantSampler::new(&p, Boundary::StepBernoulli, n + 1, T)?;
        let dim = T * zetas.len();
        let shards = sharded(ctx.budget, &ctx.seeds, |seed, count| {
            let mut f = sampler.empty_field();
            let mut acc = StreamingMean::new(dim);
            let mut buf = vec![0.0; dim];
            for k in 0..count {
                sampler.sample_into(&mut stream(seed, k), &mut f);
                for t in 1..=T {
                    for (z, &zeta) in zetas.iter().enumerate() {
                        buf[(t - 1) * zetas.len() + z] = vertex_observable(f.get(n + 1, t), zeta, q);
                    }
                }
                acc.push(&buf);
            }
            acc
        });
        let mut total = StreamingMean::new(dim);
        for sh in &shards {
            total.merge(sh);
        }
        let est = total.estimates();
        for t in 1..=T {
            let st = SchurSetup::new(q, u, a1, n, t)?;
            for (z, &zeta) in zetas.iter().enumerate() {
                let bf = schur_bruteforce_expectation(&st, |l| schur_observable(l, t, zeta, q), 40)?;
                let e = est[(t - 1) * zetas.len() + z];
                worst = worst.max((e.mean - bf.value).abs() / e.se);
                items.push(json!({"N": n, "T": t, "zeta": zeta, "schur": bf.value, "estimate": e.mean, "se": e.se}));
            }
        }
    }
    Ok(Outcome::new(worst, json!({"q": q, "u": u, "a1": a1, "cases": items})))
}

fn check_fredholm(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut items = Vec::new();
    for d in 0..ctx.budget {
        let mut r = ctx.draw_rng(d);
        let q = r.gen_range(0.3..0.7);
        let u = -r.gen_range(0.4..1.2);
        let a1 = r.gen_range(1.0..1.5);
        for n in 1..=3usize {
            for t in 1..=3usize {
                let s = SchurSetup::new(q, u, a1, n, t)?;
                let law = length_law(&s, DEFAULT_KERNEL_NODES)?;
                for (k, pk) in law.iter().enumerate() {
                    let bf = schur_bruteforce_expectation(&s, |l| f64::from(l.len() == k), 40)?;
                    worst = worst.max((pk - bf.value).abs());
                }
                items.push(json!({"q": q, "u": u, "a1": a1, "N": n, "T": t, "law": law}));
            }
        }
    }
    Ok(Outcome::new(worst, json!({"cases": items})))
}

/// Parameters of the scaling checks. The finite-size corrections grow with
/// `q`; at `q = 0.2` they sit well inside both tolerances.
pub const SCALING_CONFIG: ExperimentConfig = ExperimentConfig { q: 0.2, u: -1.0, a1: 1.0, eta: 1.0, tau: 2.0 };

fn check_lln(ctx: &Ctx) -> Result<Outcome> {
    let rep = asymptotics_experiment(&SCALING_CONFIG, &[400], ctx.budget as usize, ctx.seeds[0])?;
    let s = rep.summaries[0];
    let expected = (1.0 - 2.0 * 2f64.sqrt()) / 2.0;
    let mean = rep.rows.iter().map(|r| r.x_scaled).sum::<f64>() / rep.rows.len() as f64;
    let mut o = Outcome::new(s.mean_err, json!({"M": 400, "config": SCALING_CONFIG, "X_theory": s.x_theory,
        "X_closed_form": expected, "mean_scaled": mean}));
    o.side_ok = (limit_shape(1.0, 2.0, -1.0) - expected).abs() < 1e-12;
    Ok(o)
}

fn check_tracy_widom(ctx: &Ctx) -> Result<Outcome> {
    let grid: Vec<f64> = (0..=56).map(|i| -8.0 + 0.25 * i as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&r| tracy_widom_cdf(r)).collect();
    let monotone = vals.windows(2).all(|w| w[1] >= w[0] - 1e-14);
    let lower = tracy_widom_cdf(-8.0);
    let upper = tracy_widom_cdf(6.0);
    let limits = lower < 1e-6 && upper > 1.0 - 1e-8;
    let stability = grid.iter().map(|&r| (tracy_widom_cdf_with(r, 48) - tracy_widom_cdf_with(r, 96)).abs()).fold(0.0, f64::max);
    let rep = asymptotics_experiment(&SCALING_CONFIG, &[2000], ctx.budget as usize, ctx.seeds[0])?;
    let s = rep.summaries[0];
    let ks = s.ks_stat.ok_or_else(|| Error::Infeasible("scaling point is not in the curved regime".into()))?;
    let mut o = Outcome::new(ks, json!({"M": 2000, "config": SCALING_CONFIG, "sigma": s.sigma, "mean_err": s.mean_err,
        "cdf_monotone": monotone, "cdf_at_minus_8": lower, "cdf_at_6": upper, "node_doubling_diff": stability}));
    o.side_ok = monotone && limits && stability <= 1e-8;
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_id_is_unique() {
        let mut ids: Vec<_> = CHECKS.iter().map(|c| c.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), CHECKS.len());
    }

    #[test]
    fn builtin_suites() {
        assert_eq!(Suite::builtin("default").unwrap().checks.len(), 15);
        assert_eq!(Suite::builtin("full").unwrap().checks.len(), 16);
        assert!(Suite::builtin("nope").is_none());
    }

    #[test]
    fn empty_suite_passes() {
        let s = Suite::from_toml("name = \"empty\"").unwrap();
        let o = run_suite(&s, 1, None).unwrap();
        assert!(o.reports.is_empty());
        assert_eq!(o.exit_code(), 0);
    }

    #[test]
    fn unknown_id_rejected() {
        assert!(matches!(Suite::from_toml("[[checks]]\nid = \"bogus\""), Err(Error::Config(_))));
        assert!(matches!(Suite::from_toml("[[checks]]\nid = \"lln\"\nbudget = 0"), Err(Error::Config(_))));
    }

    #[test]
    fn par_map_keeps_order() {
        assert_eq!(par_map(7, |i| i * i), vec![0, 1, 4, 9, 16, 25, 36]);
    }

    #[test]
    fn path_enumeration() {
        // one point paths: 1 + 2 + 3 starts with N + T <= 3
        let ps = all_paths(1);
        assert_eq!(ps.len(), 1);
        let ps = all_paths(2);
        // (1,0), (1,0)->(2,0), (1,0)->(1,1), (1,1), (2,0)
        assert_eq!(ps.len(), 5);
        assert!(ps.iter().all(|p| p.validate().is_ok()));
    }

    #[test]
    fn level_list_count() {
        assert_eq!(level_lists(3, 2).len(), 9);
        assert_eq!(level_lists(4, 2).len(), 14);
    }
}
