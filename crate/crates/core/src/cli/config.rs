//! JSON configuration files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lowdisc::Randomization;
use crate::models::{DriftModel, ModelSpec};
use crate::oracles::GridSpec;
use crate::proposal::ProposalMode;
use crate::psi::{PsiConfig, PsiMode};
use crate::smc::{FilterConfig, Observation, ResampleScheme};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

/// Either an explicit list of times or `count` times spaced by `spacing`
/// (the first at `spacing`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationTimes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

impl ObservationTimes {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let times = match (&self.times, self.count, self.spacing) {
            (Some(t), None, None) => t.clone(),
            (None, Some(n), Some(dt)) => {
                if !(dt > 0.0) {
                    return Err(Error::config("observations.spacing", "must be positive"));
                }
                (1..=n).map(|k| k as f64 * dt).collect()
            }
            _ => {
                return Err(Error::config(
                    "observations",
                    "give either `times` or both `count` and `spacing`",
                ))
            }
        };
        let mut prev = 0.0;
        for &t in &times {
            if !(t > prev) || !t.is_finite() {
                return Err(Error::config(
                    "observations.times",
                    "times must be finite, positive and strictly increasing",
                ));
            }
            prev = t;
        }
        Ok(times)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    /// Euler steps per unit time for models without exact transition sampling.
    #[serde(default = "default_euler_steps")]
    pub euler_steps_per_unit: usize,
}

fn default_euler_steps() -> usize {
    2000
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            euler_steps_per_unit: default_euler_steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    #[serde(default)]
    pub psi: PsiConfig,
    #[serde(default)]
    pub proposal: ProposalMode,
    #[serde(default)]
    pub resampling: ResampleScheme,
    #[serde(default = "default_ess_threshold")]
    pub ess_threshold: f64,
}

fn default_ess_threshold() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub x0: f64,
    pub horizon: f64,
    pub observations: ObservationTimes,
    pub sigma: f64,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSection>,
    pub seed: u64,
}

/// The part of a run config that determines the generated data.
#[derive(Serialize)]
struct DataIdentity<'a> {
    model: &'a ModelSpec,
    x0: f64,
    times: &'a [f64],
    sigma: f64,
    simulation: &'a SimulationSettings,
    seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(DriftModel, Vec<f64>)> {
        let model = self
            .model
            .build()
            .map_err(|e| Error::config("model", e.to_string()))?;
        if !self.x0.is_finite() {
            return Err(Error::config("x0", "must be finite"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::config("horizon", "must be positive and finite"));
        }
        let times = self.observations.resolve()?;
        if let Some(&last) = times.last() {
            if last > self.horizon {
                return Err(Error::config(
                    "observations",
                    format!("last observation time {last} exceeds the horizon {}", self.horizon),
                ));
            }
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("sigma", "must be finite and nonnegative"));
        }
        if self.simulation.euler_steps_per_unit == 0 {
            return Err(Error::config("simulation.euler_steps_per_unit", "must be positive"));
        }
        if let Some(f) = &self.filter {
            self.filter_config_from(f, self.seed).validate(&model).map_err(|e| match e {
                Error::Config { field, message } => Error::config(
                    if field.starts_with("filter.") || field == "sigma" || field == "x0" {
                        field
                    } else {
                        format!("filter.{field}")
                    },
                    message,
                ),
                other => other,
            })?;
        }
        Ok((model, times))
    }

    fn filter_config_from(&self, f: &FilterSection, seed: u64) -> FilterConfig {
        FilterConfig {
            particles: f.particles,
            x0: self.x0,
            sigma: self.sigma,
            psi: f.psi,
            proposal: f.proposal,
            resampling: f.resampling,
            ess_threshold: f.ess_threshold,
            seed,
        }
    }

    pub fn filter_config(&self, seed: u64) -> Result<FilterConfig> {
        let f = self
            .filter
            .as_ref()
            .ok_or_else(|| Error::config("filter", "section missing"))?;
        Ok(self.filter_config_from(f, seed))
    }

    /// Content hash binding a dataset to the config that generated it.
    pub fn data_hash(&self, times: &[f64], seed: u64) -> String {
        let ident = DataIdentity {
            model: &self.model,
            x0: self.x0,
            times,
            sigma: self.sigma,
            simulation: &self.simulation,
            seed,
        };
        sha256_json(&ident)
    }
}

pub fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub model: ModelSpec,
    pub x_a: f64,
    pub x_b: f64,
    pub a: f64,
    pub b: f64,
    /// Grid of inner point counts `M`.
    pub inner_points: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<PsiMode>,
    #[serde(default = "default_cap")]
    pub rqmc_kappa_cap: usize,
    #[serde(default)]
    pub randomization: Randomization,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    /// Write the skeleton of this replication (first M, mc mode) as CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_skeleton_rep: Option<usize>,
    pub seed: u64,
}

fn default_modes() -> Vec<PsiMode> {
    vec![PsiMode::Mc, PsiMode::RqmcTimes, PsiMode::RqmcTimesValues]
}

fn default_cap() -> usize {
    64
}

fn default_bootstrap() -> usize {
    1000
}

impl BenchConfig {
    pub fn validate(&self) -> Result<DriftModel> {
        let model = self
            .model
            .build()
            .map_err(|e| Error::config("model", e.to_string()))?;
        if !(self.a < self.b) {
            return Err(Error::config("a", "need a < b"));
        }
        if !(self.x_a.is_finite() && self.x_b.is_finite()) {
            return Err(Error::config("x_a", "endpoints must be finite"));
        }
        if self.inner_points.is_empty() || self.inner_points.contains(&0) {
            return Err(Error::config("inner_points", "need a nonempty list of positive counts"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be positive"));
        }
        if self.modes.is_empty() {
            return Err(Error::config("modes", "need at least one mode"));
        }
        for (k, mode) in self.modes.iter().enumerate() {
            if self.modes[..k].contains(mode) {
                return Err(Error::config("modes", format!("duplicate mode `{mode}`")));
            }
        }
        for &mode in &self.modes {
            for &m in &self.inner_points {
                self.psi_config(mode, m)
                    .validate()
                    .map_err(|e| Error::config("modes", e.to_string()))?;
            }
        }
        Ok(model)
    }

    pub fn psi_config(&self, mode: PsiMode, inner_points: usize) -> PsiConfig {
        PsiConfig {
            mode,
            inner_points,
            rqmc_kappa_cap: self.rqmc_kappa_cap,
            randomization: self.randomization,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleConfig {
    /// Brute-force `E[ψ]` over Brownian bridges.
    Psi {
        model: ModelSpec,
        x_a: f64,
        x_b: f64,
        a: f64,
        b: f64,
        n_steps: usize,
        n_paths: usize,
        seed: u64,
    },
    /// Quadrature filter log-likelihood.
    GridFilter {
        model: ModelSpec,
        x0: f64,
        sigma: f64,
        observations: Vec<Observation>,
        grid: GridSpec,
    },
    /// Exact log-likelihood for the zero-drift model.
    Kalman {
        x0: f64,
        sigma: f64,
        observations: Vec<Observation>,
    },
}
