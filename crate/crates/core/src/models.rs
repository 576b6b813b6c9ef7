//! Scalar diffusion models `dX = α(X) dt + dB`.
//!
//! A [`DriftModel`] carries the drift `α`, its derivative `α'`, the
//! antiderivative `A` (normalized so `A(0) = 0`) and global bounds
//! `L ≤ φ(x) ≤ U` for `φ = (α² + α')/2`. Models whose `φ` is unbounded cannot
//! be registered.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// User-supplied drift. `antiderivative` must satisfy `A(0) = 0`.
pub trait DriftFn: Send + Sync {
    fn alpha(&self, x: f64) -> f64;
    fn alpha_prime(&self, x: f64) -> f64;
    fn antiderivative(&self, x: f64) -> f64;
}

#[derive(Clone)]
enum Drift {
    Zero,
    Tanh,
    ScaledSine { theta: f64 },
    Custom(Arc<dyn DriftFn>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub exact_transition_density: bool,
    pub tilted_sampler: bool,
    pub tilted_normalizer: bool,
}

/// Model selection as it appears in JSON configs:
/// `{"name": "scaled-sine", "theta": 0.8}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl ModelSpec {
    pub fn named(name: &str) -> Self {
        ModelSpec {
            name: name.to_string(),
            theta: None,
        }
    }

    pub fn build(&self) -> Result<DriftModel> {
        builtin(&self.name, self.theta)
    }
}

#[derive(Clone)]
pub struct DriftModel {
    name: String,
    drift: Drift,
    lower: f64,
    upper: f64,
    /// Bound on `sup A - inf A`, used as the log envelope of the tilted
    /// rejection sampler.
    tilt_log_envelope: Option<f64>,
}

impl fmt::Debug for DriftModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftModel")
            .field("name", &self.name)
            .field("phi_bounds", &(self.lower, self.upper))
            .finish()
    }
}

/// Built-in models: `zero`, `tanh`, `sine` and `scaled-sine` (needs `theta`).
pub fn builtin(name: &str, theta: Option<f64>) -> Result<DriftModel> {
    match (name, theta) {
        ("zero", None) => Ok(DriftModel::zero()),
        ("tanh", None) => Ok(DriftModel::tanh()),
        ("sine", None) => Ok(DriftModel::sine()),
        ("scaled-sine", Some(theta)) => DriftModel::scaled_sine(theta),
        ("scaled-sine", None) => Err(Error::InvalidModel(
            "scaled-sine requires a `theta` parameter".into(),
        )),
        ("zero" | "tanh" | "sine", Some(_)) => Err(Error::InvalidModel(format!(
            "model `{name}` takes no parameters"
        ))),
        (other, _) => Err(Error::UnknownModel(other.to_string())),
    }
}

impl DriftModel {
    pub fn zero() -> Self {
        DriftModel {
            name: "zero".into(),
            drift: Drift::Zero,
            lower: 0.0,
            upper: 0.0,
            tilt_log_envelope: Some(0.0),
        }
    }

    pub fn tanh() -> Self {
        DriftModel {
            name: "tanh".into(),
            drift: Drift::Tanh,
            lower: 0.5,
            upper: 0.5,
            tilt_log_envelope: None,
        }
    }

    pub fn sine() -> Self {
        let mut m = Self::scaled_sine(1.0).expect("theta = 1 is finite");
        m.name = "sine".into();
        m
    }

    /// `α(x) = θ sin x`. `φ = (θ² sin² x + θ cos x)/2` is extremized in
    /// `c = cos x ∈ [-1, 1]`: it is concave in `c`, so the minimum sits at
    /// `c = ±1` and the maximum at `c = 1/(2θ)` when that is feasible.
    pub fn scaled_sine(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidModel(format!("theta must be finite, got {theta}")));
        }
        let abs = theta.abs();
        let lower = -abs / 2.0;
        let upper = if abs >= 0.5 {
            (theta * theta + 0.25) / 2.0
        } else {
            abs / 2.0
        };
        Ok(DriftModel {
            name: format!("scaled-sine({theta})"),
            drift: Drift::ScaledSine { theta },
            lower,
            upper,
            tilt_log_envelope: Some(2.0 * abs),
        })
    }

    /// Registers a user drift. The bounds are checked against `φ` on a dense
    /// grid over [-20, 20]; unbounded or non-finite `φ` is rejected.
    pub fn custom(
        name: &str,
        drift: Arc<dyn DriftFn>,
        phi_bounds: (f64, f64),
        tilt_log_envelope: Option<f64>,
    ) -> Result<Self> {
        let (lower, upper) = phi_bounds;
        if !(lower.is_finite() && upper.is_finite()) || lower > upper {
            return Err(Error::InvalidModel(format!(
                "phi bounds must be finite with L <= U, got ({lower}, {upper})"
            )));
        }
        let model = DriftModel {
            name: name.to_string(),
            drift: Drift::Custom(drift),
            lower,
            upper,
            tilt_log_envelope,
        };
        let n = 100_000;
        for k in 0..=n {
            let x = -20.0 + 40.0 * k as f64 / n as f64;
            let p = model.phi(x);
            if !p.is_finite() || p < lower - 1e-9 || p > upper + 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "phi({x}) = {p} escapes the declared bounds [{lower}, {upper}]"
                )));
            }
        }
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn alpha(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Tanh => x.tanh(),
            Drift::ScaledSine { theta } => theta * x.sin(),
            Drift::Custom(d) => d.alpha(x),
        }
    }

    pub fn alpha_prime(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Tanh => {
                let s = 1.0 / x.cosh();
                s * s
            }
            Drift::ScaledSine { theta } => theta * x.cos(),
            Drift::Custom(d) => d.alpha_prime(x),
        }
    }

    /// `A(x) = ∫₀ˣ α(u) du`.
    pub fn big_a(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Tanh => log_cosh(x),
            Drift::ScaledSine { theta } => theta * (1.0 - x.cos()),
            Drift::Custom(d) => d.antiderivative(x),
        }
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            // tanh² + sech² ≡ 1
            Drift::Tanh => 0.5,
            _ => {
                let a = self.alpha(x);
                (a * a + self.alpha_prime(x)) / 2.0
            }
        }
    }

    pub fn phi_bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn tilt_log_envelope(&self) -> Option<f64> {
        self.tilt_log_envelope
    }

    pub(crate) fn is_tanh(&self) -> bool {
        matches!(self.drift, Drift::Tanh)
    }

    pub(crate) fn is_zero(&self) -> bool {
        matches!(self.drift, Drift::Zero)
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.drift, Drift::Custom(_))
    }

    pub fn capabilities(&self) -> Capabilities {
        match self.drift {
            Drift::Zero | Drift::Tanh => Capabilities {
                exact_transition_density: true,
                tilted_sampler: true,
                tilted_normalizer: true,
            },
            _ => Capabilities {
                exact_transition_density: false,
                tilted_sampler: self.tilt_log_envelope.is_some(),
                tilted_normalizer: false,
            },
        }
    }

    /// Closed-form `p_t(x_b | x_a)` for the models that have one.
    pub fn exact_transition_density(&self, x_a: f64, x_b: f64, t: f64) -> Result<f64> {
        self.log_exact_transition_density(x_a, x_b, t).map(f64::exp)
    }

    pub fn log_exact_transition_density(&self, x_a: f64, x_b: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("transition time must be positive, got {t}")));
        }
        let gauss = normal::log_pdf(x_b, x_a, t);
        match self.drift {
            Drift::Zero => Ok(gauss),
            // N(x_b; x_a, t) · cosh(x_b)/cosh(x_a) · e^{-t/2}
            Drift::Tanh => Ok(gauss + log_cosh(x_b) - log_cosh(x_a) - t / 2.0),
            _ => Err(Error::Unsupported(format!(
                "model `{}` has no closed-form transition density",
                self.name
            ))),
        }
    }
}

/// `ln cosh x` without overflow for large |x|.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}
