use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use vertexlab::config::Config;
use vertexlab::coupling::theorem_coupling_check;
use vertexlab::diffops::operator_expectation;
use vertexlab::error::{Error, Result};
use vertexlab::harness::{key_lemma_sides, run_suite, Suite, DEFAULT_SEED};
use vertexlab::moments::{moment_height_residues, moment_product_quadrature, plain_from_centered, MomentRecord};
use vertexlab::qtasep::run_mixed;
use vertexlab::rng::{seed_from_env, stream};
use vertexlab::schur::{asymptotics_experiment, length_law, schur_bruteforce_expectation, DEFAULT_KERNEL_NODES};
use vertexlab::vertex::QuadrantSampler;

const KEY_LEMMA_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "vertexlab", version, about = "Stochastic vertex model and q-TASEP sampling and checks")]
struct Cli {
    /// TOML file with model parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; VERTEXLAB_SEED takes precedence.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of samples, trajectories or Monte Carlo draws.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Directory for output files; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Height functions of the vertex model in a window.
    SampleVertex,
    /// Trajectories of the mixed q-TASEP along a time-like path.
    SampleQtasep,
    /// Exact comparison of vertex heights and q-TASEP positions along a path.
    CoupleCheck,
    /// Height moments by every available route.
    Moments,
    /// Key lemma for the q-difference operators at the configured point.
    DiffopsCheck,
    /// Length law of the Schur setup, Fredholm and brute force.
    Schur,
    /// Scaled largest-particle statistics across sizes.
    Asymptotics,
    /// Run a check suite: `default`, `full` or a TOML file.
    Verify { suite: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidParams(_) | Error::InvalidQ(_) | Error::Io(_) => 2,
                _ => 1,
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(path) => Config::load(path),
        None => Err(Error::Config("this command needs --config".into())),
    }
}

fn emit(out: Option<&Path>, file: &str, content: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(file), content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    }
}

/// Returns whether every check the command ran passed.
fn run(cli: &Cli) -> Result<bool> {
    let seed = seed_from_env(cli.seed.unwrap_or(DEFAULT_SEED));
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Verify { suite } => {
            let suite = Suite::resolve(suite)?;
            let outcome = run_suite(&suite, seed, out)?;
            for r in &outcome.reports {
                println!("{}", r.summary_line());
            }
            Ok(outcome.all_pass())
        }
        Command::SampleVertex => {
            let cfg = load_config(cli)?;
            let p = cfg.model_params()?;
            let (n_max, t_max) = cfg.window()?;
            let sampler = QuadrantSampler::new(&p, cfg.boundary()?, n_max, t_max)?;
            let mut f = sampler.empty_field();
            let mut s = String::new();
            if cli.format == Format::Csv {
                s.push_str("sample,N,T,h\n");
            }
            for k in 0..cli.budget.unwrap_or(1) {
                sampler.sample_into(&mut stream(seed, k), &mut f);
                for t in 0..=t_max {
                    for n in 1..=n_max + 1 {
                        let h = f.get(n, t);
                        match cli.format {
                            Format::Csv => writeln!(s, "{k},{n},{t},{h}").unwrap(),
                            Format::Jsonl => writeln!(s, "{}", json!({"sample": k, "N": n, "T": t, "h": h})).unwrap(),
                        }
                    }
                }
            }
            emit(out, &format!("heights.{}", ext(cli.format)), &s)?;
            Ok(true)
        }
        Command::SampleQtasep => {
            let cfg = load_config(cli)?;
            let p = cfg.model_params()?;
            let path = cfg.path()?;
            let mut s = String::new();
            if cli.format == Format::Csv {
                s.push_str("sample,t,N,T,move,X_value,x\n");
            }
            for k in 0..cli.budget.unwrap_or(1) {
                let traj = run_mixed(&path, &p, &mut stream(seed, k))?;
                for r in &traj.0 {
                    match cli.format {
                        Format::Csv => {
                            let xs: Vec<String> = r.x.iter().map(i64::to_string).collect();
                            writeln!(s, "{k},{},{},{},{},{},{}", r.t, r.n, r.big_t, r.mv, r.x_value, xs.join(" ")).unwrap()
                        }
                        Format::Jsonl => {
                            let mut v = serde_json::to_value(r)?;
                            v["sample"] = json!(k);
                            writeln!(s, "{v}").unwrap()
                        }
                    }
                }
            }
            emit(out, &format!("trajectories.{}", ext(cli.format)), &s)?;
            Ok(true)
        }
        Command::CoupleCheck => {
            let cfg = load_config(cli)?;
            let report = theorem_coupling_check(&cfg.path()?, &cfg.model_params()?, cfg.order()?)?;
            emit(out, "couple_check.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
            Ok(report.pass)
        }
        Command::Moments => {
            let cfg = load_config(cli)?;
            let p = cfg.model_params()?;
            let levels = cfg.levels.clone().ok_or_else(|| Error::Config("missing 'levels' in config".into()))?;
            if levels.is_empty() {
                return Err(Error::Config("'levels' is empty".into()));
            }
            let t = cfg.t.unwrap_or(p.u.len());
            let formula = format!("E prod q^h(N+1,{t}) N={levels:?}");
            let centered = format!("E prod (q^h(N+1,{t}) - q^(T+l-j) nu..) N={levels:?}");
            let mut records = vec![MomentRecord::new(&formula, &p, moment_height_residues(&levels, t, &p)?, "residues", 0.0)];
            let (quad, err) = moment_product_quadrature(&levels, t, &p, None)?;
            records.push(MomentRecord::new(&centered, &p, quad, "quadrature", err));
            let op = operator_expectation(&levels, t, &p, levels[0])?;
            records.push(MomentRecord::new(&centered, &p, op, "operator", 0.0));
            let plain = plain_from_centered(&levels, t, &p, |sub| operator_expectation(sub, t, &p, sub[0]))?;
            records.push(MomentRecord::new(&formula, &p, plain, "operator", 0.0));
            if let Some(budget) = cli.budget {
                let n_max = levels[0];
                let sampler = QuadrantSampler::new(&p, vertexlab::vertex::Boundary::Step, n_max, t)?;
                let mut f = sampler.empty_field();
                let est = vertexlab::stats::mc_estimate(budget, &[seed], |rng| {
                    sampler.sample_into(rng, &mut f);
                    levels.iter().map(|&n| p.q.powi(f.get(n + 1, t) as i32)).product()
                });
                records.push(MomentRecord::new(&formula, &p, est.mean, "monte_carlo", est.se));
            }
            let mut s = String::new();
            match cli.format {
                Format::Csv => {
                    s.push_str("formula,params_digest,value,method,error_estimate\n");
                    for r in &records {
                        writeln!(s, "\"{}\",{},{},{},{}", r.formula, r.params_digest, r.value, r.method, r.error_estimate).unwrap();
                    }
                }
                Format::Jsonl => {
                    for r in &records {
                        writeln!(s, "{}", serde_json::to_string(r)?).unwrap();
                    }
                }
            }
            emit(out, &format!("moments.{}", ext(cli.format)), &s)?;
            Ok(true)
        }
        Command::DiffopsCheck => {
            let cfg = load_config(cli)?;
            let p = cfg.model_params()?;
            let n = cfg.n_max.unwrap_or(p.a.len());
            let t = cfg.t.unwrap_or(p.u.len());
            let levels = cfg.levels.clone().unwrap_or_else(|| vec![n]);
            let (lhs, rhs) = key_lemma_sides(&p, &levels, n, t)?;
            let residual = (lhs - rhs).abs() / rhs.abs().max(1.0);
            let pass = residual <= KEY_LEMMA_TOL;
            let v = json!({"N": n, "T": t, "levels": levels, "lhs": lhs, "rhs": rhs,
                "residual": residual, "tolerance": KEY_LEMMA_TOL, "pass": pass});
            emit(out, "diffops_check.json", &(serde_json::to_string_pretty(&v)? + "\n"))?;
            Ok(pass)
        }
        Command::Schur => {
            let cfg = load_config(cli)?;
            let setup = cfg.schur.ok_or_else(|| Error::Config("missing [schur] table".into()))?;
            let law = length_law(&setup, DEFAULT_KERNEL_NODES)?;
            // brute force enumerates partitions with up to T parts
            let brute_law = if setup.t <= 6 {
                let by_len = (0..law.len())
                    .map(|k| schur_bruteforce_expectation(&setup, |l| if l.len() == k { 1.0 } else { 0.0 }, 40).map(|b| b.value))
                    .collect::<Result<Vec<f64>>>()?;
                Some(by_len)
            } else {
                None
            };
            let mut s = String::new();
            if cli.format == Format::Csv {
                s.push_str("length,fredholm,bruteforce\n");
            }
            for (k, pk) in law.iter().enumerate() {
                let b = brute_law.as_ref().map(|v| v[k]);
                match cli.format {
                    Format::Csv => writeln!(s, "{k},{pk},{}", b.map(|x| x.to_string()).unwrap_or_default()).unwrap(),
                    Format::Jsonl => writeln!(s, "{}", json!({"length": k, "fredholm": pk, "bruteforce": b})).unwrap(),
                }
            }
            emit(out, &format!("schur_length.{}", ext(cli.format)), &s)?;
            Ok(true)
        }
        Command::Asymptotics => {
            let cfg = load_config(cli)?;
            let a = cfg.asymptotics.clone().ok_or_else(|| Error::Config("missing [asymptotics] table".into()))?;
            let replicas = cli.budget.map(|b| b as usize).unwrap_or(a.replicas);
            let report = asymptotics_experiment(&a.experiment(), &a.m_list, replicas, seed)?;
            let rows = match cli.format {
                Format::Csv => report.to_csv(),
                Format::Jsonl => report.rows.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect(),
            };
            emit(out, &format!("asymptotics.{}", ext(cli.format)), &rows)?;
            let summary = serde_json::to_string_pretty(&report.summaries)? + "\n";
            match out {
                Some(_) => emit(out, "summary.json", &summary)?,
                None => eprint!("{summary}"),
            }
            Ok(true)
        }
    }
}
