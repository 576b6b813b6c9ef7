//! Particle propagation between observation times.
//!
//! The transition density factors as `N(x_b; x_a, t) · exp{A(x_b) - A(x_a)} · E[ψ]`.
//! The Gaussian proposal samples the first factor and moves the tilt into the
//! weight; the tilted proposal samples the first two factors and contributes
//! the log of their normalizing constant `c(x_a, t)`, which only exists in
//! closed form for some models.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DriftModel;
use crate::normal;

pub const MAX_REJECTION_TRIALS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalMode {
    #[default]
    Gaussian,
    Tilted,
}

impl fmt::Display for ProposalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalMode::Gaussian => "gaussian",
            ProposalMode::Tilted => "tilted",
        })
    }
}

impl FromStr for ProposalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ProposalMode::Gaussian),
            "tilted" => Ok(ProposalMode::Tilted),
            other => Err(Error::InvalidArgument(format!(
                "unknown proposal `{other}` (expected gaussian | tilted)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Gaussian,
    TiltedExact,
    TiltedRejection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProposalOutcome {
    pub x_b: f64,
    /// Log of every weight factor except `ψ̂` and the observation density.
    pub log_weight_factor: f64,
    pub n_rejections: u64,
    pub kind: SamplerKind,
}

fn duration(a: f64, b: f64) -> Result<f64> {
    let t = b - a;
    if t > 0.0 {
        Ok(t)
    } else {
        Err(Error::InvalidArgument(format!(
            "proposal interval needs a < b, got [{a}, {b}]"
        )))
    }
}

pub fn propose<R: RngCore + ?Sized>(
    mode: ProposalMode,
    model: &DriftModel,
    x_a: f64,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<ProposalOutcome> {
    match mode {
        ProposalMode::Gaussian => propose_gaussian(model, x_a, a, b, rng),
        ProposalMode::Tilted => propose_tilted(model, x_a, a, b, rng),
    }
}

/// `x_b ~ N(x_a, b - a)` with log weight factor `A(x_b) - A(x_a)`.
pub fn propose_gaussian<R: RngCore + ?Sized>(
    model: &DriftModel,
    x_a: f64,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<ProposalOutcome> {
    let t = duration(a, b)?;
    let x_b = x_a + t.sqrt() * normal::std_normal(rng);
    Ok(ProposalOutcome {
        x_b,
        log_weight_factor: model.big_a(x_b) - model.big_a(x_a),
        n_rejections: 0,
        kind: SamplerKind::Gaussian,
    })
}

/// `x_b ∝ N(x_b; x_a, t) exp{A(x_b) - A(x_a)}` with log weight factor
/// `log c(x_a, t)`. Fails for models without a closed-form normalizer.
pub fn propose_tilted<R: RngCore + ?Sized>(
    model: &DriftModel,
    x_a: f64,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<ProposalOutcome> {
    let t = duration(a, b)?;
    let log_c = tilted_log_normalizer(model, t).ok_or_else(|| {
        Error::Unsupported(format!(
            "model `{}` has no closed-form tilted normalizer; use the gaussian proposal",
            model.name()
        ))
    })?;
    let (x_b, n_rejections, kind) = sample_tilted(model, x_a, t, rng)?;
    Ok(ProposalOutcome {
        x_b,
        log_weight_factor: log_c,
        n_rejections,
        kind,
    })
}

/// `log ∫ N(x; x_a, t) e^{A(x) - A(x_a)} dx` where known in closed form.
/// For tanh, `E[cosh Z] = e^{t/2} cosh μ` for `Z ~ N(μ, t)` gives `t/2`.
pub fn tilted_log_normalizer(model: &DriftModel, t: f64) -> Option<f64> {
    if model.is_zero() {
        Some(0.0)
    } else if model.is_tanh() {
        Some(t / 2.0)
    } else {
        None
    }
}

/// Draws from the tilted kernel. Returns `(x_b, rejections, sampler)`.
pub fn sample_tilted<R: RngCore + ?Sized>(
    model: &DriftModel,
    x_a: f64,
    t: f64,
    rng: &mut R,
) -> Result<(f64, u64, SamplerKind)> {
    if model.is_zero() {
        return Ok((x_a + t.sqrt() * normal::std_normal(rng), 0, SamplerKind::TiltedExact));
    }
    if model.is_tanh() {
        // mixture: weight e^{x_a}/(2 cosh x_a) on N(x_a + t, t), rest on N(x_a - t, t)
        let w_plus = 1.0 / (1.0 + (-2.0 * x_a).exp());
        let shift = if rng.random::<f64>() < w_plus { t } else { -t };
        let x = x_a + shift + t.sqrt() * normal::std_normal(rng);
        return Ok((x, 0, SamplerKind::TiltedExact));
    }
    let log_env = model.tilt_log_envelope().ok_or_else(|| {
        Error::Unsupported(format!("model `{}` has no tilted sampler", model.name()))
    })?;
    let a_ref = model.big_a(x_a);
    for trial in 0..MAX_REJECTION_TRIALS {
        let x = x_a + t.sqrt() * normal::std_normal(rng);
        let log_accept = model.big_a(x) - a_ref - log_env;
        if rng.random::<f64>().ln() < log_accept {
            return Ok((x, trial, SamplerKind::TiltedRejection));
        }
    }
    Err(Error::RejectionCap(MAX_REJECTION_TRIALS))
}

/// Fraction of single rejection-sampler trials that accept.
pub fn acceptance_rate_probe<R: RngCore + ?Sized>(
    model: &DriftModel,
    x_a: f64,
    t: f64,
    n: u64,
    rng: &mut R,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("empty probe (n = 0)".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("probe duration must be positive, got {t}")));
    }
    let log_env = model.tilt_log_envelope().ok_or_else(|| {
        Error::Unsupported(format!("model `{}` has no rejection envelope", model.name()))
    })?;
    let a_ref = model.big_a(x_a);
    let mut accepted = 0u64;
    for _ in 0..n {
        let x = x_a + t.sqrt() * normal::std_normal(rng);
        if rng.random::<f64>().ln() < model.big_a(x) - a_ref - log_env {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / n as f64)
}
