//! TOML configuration shared by the command-line tools.
//!
//! ```toml
//! q = 0.5
//! u = [-0.8, -0.5, -1.1]
//! a = [1.0, 0.8, 1.2, 0.9]
//! nu = [0.0, 0.4, 0.3, 0.2]
//! boundary = "step-bernoulli"
//! path = "NTNT"
//!
//! [schur]
//! q = 0.5
//! u = -0.7
//! a1 = 1.2
//! n = 3
//! t = 3
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::qseries::Specialization;
use crate::qtasep::TimeLikePath;
use crate::schur::{ExperimentConfig, SchurSetup};
use crate::vertex::Boundary;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub q: Option<f64>,
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub nu: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
    /// `step`, `step-bernoulli`, or `step-bernoulli-<r>`.
    pub boundary: Option<String>,
    pub n_max: Option<usize>,
    pub t_max: Option<usize>,
    /// `N`/`T` steps from `start`.
    pub path: Option<String>,
    pub start: Option<(usize, usize)>,
    /// `[N_1, ..., N_l]` for the moment routes.
    pub levels: Option<Vec<usize>>,
    pub t: Option<usize>,
    pub schur: Option<SchurSetup>,
    pub asymptotics: Option<AsymptoticsConfig>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub q: f64,
    pub u: f64,
    pub a1: f64,
    pub eta: f64,
    pub tau: f64,
    pub m_list: Vec<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

fn default_replicas() -> usize {
    100
}

impl AsymptoticsConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig { q: self.q, u: self.u, a1: self.a1, eta: self.eta, tau: self.tau }
    }
}

fn missing(what: &str) -> Error {
    Error::Config(format!("missing '{what}' in config"))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let q = self.q.ok_or_else(|| missing("q"))?;
        if self.a.is_empty() {
            return Err(missing("a"));
        }
        if self.a.len() != self.nu.len() {
            return Err(Error::Config(format!("a has {} entries but nu has {}", self.a.len(), self.nu.len())));
        }
        Ok(ModelParams::new(q, self.u.clone(), self.a.clone(), self.nu.clone()))
    }

    pub fn specialization(&self) -> Specialization {
        Specialization { alphas: self.alphas.clone(), betas: self.betas.clone(), gamma: self.gamma }
    }

    pub fn boundary(&self) -> Result<Boundary> {
        match self.boundary.as_deref().unwrap_or("step") {
            "step" => Ok(Boundary::Step),
            "step-bernoulli" => Ok(Boundary::StepBernoulli),
            s => match s.strip_prefix("step-bernoulli-").and_then(|r| r.parse::<u32>().ok()) {
                Some(1) => Ok(Boundary::StepBernoulli),
                Some(r) if r > 1 => Ok(Boundary::GenStepBernoulli(r)),
                _ => Err(Error::Config(format!("unknown boundary '{s}'"))),
            },
        }
    }

    /// `r` of the step-Bernoulli boundary; 1 for the plain step boundary too.
    pub fn order(&self) -> Result<usize> {
        Ok(match self.boundary()? {
            Boundary::GenStepBernoulli(r) => r as usize,
            _ => 1,
        })
    }

    pub fn path(&self) -> Result<TimeLikePath> {
        let steps = self.path.as_deref().ok_or_else(|| missing("path"))?;
        TimeLikePath::from_steps(self.start.unwrap_or((1, 0)), steps)
    }

    /// Window defaults to every column and row the parameters cover.
    pub fn window(&self) -> Result<(usize, usize)> {
        let n = self.n_max.unwrap_or(self.a.len());
        let t = self.t_max.unwrap_or(self.u.len());
        if n == 0 {
            return Err(missing("n_max"));
        }
        Ok((n, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_example() {
        let c = Config::from_toml(
            r#"
            q = 0.5
            u = [-0.8, -0.5]
            a = [1.0, 0.8, 1.2]
            nu = [0.0, 0.4, 0.3]
            boundary = "step-bernoulli-2"
            path = "NT"
            start = [2, 0]
            levels = [2, 1]
            t = 2

            [schur]
            q = 0.5
            u = -0.7
            a1 = 1.2
            n = 3
            t = 3

            [asymptotics]
            q = 0.2
            u = -1.0
            a1 = 1.0
            eta = 1.0
            tau = 2.0
            m_list = [50, 100]
            "#,
        )
        .unwrap();
        assert_eq!(c.model_params().unwrap().dims(), (3, 2));
        assert_eq!(c.boundary().unwrap(), Boundary::GenStepBernoulli(2));
        assert_eq!(c.order().unwrap(), 2);
        assert_eq!(c.path().unwrap().0, vec![(2, 0), (3, 0), (3, 1)]);
        assert_eq!(c.asymptotics.unwrap().replicas, 100);
        assert_eq!(c.schur.unwrap().n, 3);
    }

    #[test]
    fn rejects_unknown_keys_and_boundaries() {
        assert!(Config::from_toml("qq = 1").is_err());
        let c = Config::from_toml("boundary = \"nope\"").unwrap();
        assert!(c.boundary().is_err());
        assert!(Config::default().model_params().is_err());
    }
}
