//! Unbiased estimation of the bridge functional `ψ(W) = exp{-∫ₐᵇ φ(W_t) dt}`.
//!
//! With `L ≤ φ ≤ U`, `κ ~ Poisson((U-L)(b-a))` and i.i.d. uniform times
//! `ξ_i` on `[a, b]`,
//!
//! ```text
//! ψ(W) = e^{-L(b-a)} · E[ E[ ∏_{i≤κ} (U - φ(W_{ξ_i}))/(U - L) | κ, W ] | W ]
//! ```
//!
//! κ is always drawn pseudo-randomly. The inner conditional expectation is
//! approximated either by `M` plain Monte Carlo replicates or by an average
//! over a randomized low-discrepancy point set of `M` points:
//!
//! - `rqmc-times`: dimension κ; coordinates give the times, bridge values are
//!   drawn pseudo-randomly and memoized in the shared skeleton.
//! - `rqmc-times-values`: dimension 2κ; the second half of each point drives the
//!   bridge values through the inverse normal CDF, and the skeleton is rolled
//!   back after every point.
//!
//! The empty product (κ = 0) is 1 and the `U - L` denominator is then never
//! evaluated, so degenerate bounds give `e^{-L(b-a)}` exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bridge::LazyBridge;
use crate::error::{Error, Result};
use crate::lowdisc::{self, Randomization, MAX_DIMENSION};
use crate::models::DriftModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMode {
    #[default]
    Mc,
    RqmcTimes,
    RqmcTimesValues,
}

impl PsiMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PsiMode::Mc => "mc",
            PsiMode::RqmcTimes => "rqmc-times",
            PsiMode::RqmcTimesValues => "rqmc-times-values",
        }
    }

    /// Point-set dimensions consumed per Poisson time.
    fn dims_per_time(self) -> usize {
        match self {
            PsiMode::Mc | PsiMode::RqmcTimes => 1,
            PsiMode::RqmcTimesValues => 2,
        }
    }
}

impl fmt::Display for PsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(PsiMode::Mc),
            "rqmc-times" => Ok(PsiMode::RqmcTimes),
            "rqmc-times-values" => Ok(PsiMode::RqmcTimesValues),
            other => Err(Error::InvalidArgument(format!(
                "unknown psi mode `{other}` (expected mc | rqmc-times | rqmc-times-values)"
            ))),
        }
    }
}

/// Which computation actually produced an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorPath {
    /// κ = 0: the estimate is `e^{-L(b-a)}` with no bridge queries.
    EmptyProduct,
    Mc,
    RqmcTimes,
    RqmcTimesValues,
    /// κ above the RQMC cap; plain Monte Carlo was used instead.
    McFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiConfig {
    pub mode: PsiMode,
    pub inner_points: usize,
    pub rqmc_kappa_cap: usize,
    pub randomization: Randomization,
}

impl Default for PsiConfig {
    fn default() -> Self {
        PsiConfig {
            mode: PsiMode::Mc,
            inner_points: 1,
            rqmc_kappa_cap: 64,
            randomization: Randomization::DigitalShift,
        }
    }
}

impl PsiConfig {
    pub fn new(mode: PsiMode, inner_points: usize) -> Self {
        PsiConfig {
            mode,
            inner_points,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_points == 0 {
            return Err(Error::config("psi.inner_points", "must be at least 1"));
        }
        if self.mode != PsiMode::Mc {
            if self.rqmc_kappa_cap == 0 {
                return Err(Error::config("psi.rqmc_kappa_cap", "must be at least 1"));
            }
            if self.rqmc_kappa_cap > MAX_DIMENSION {
                return Err(Error::config(
                    "psi.rqmc_kappa_cap",
                    format!("must not exceed the point-set dimension limit {MAX_DIMENSION}"),
                ));
            }
            if self.randomization == Randomization::None {
                return Err(Error::config(
                    "psi.randomization",
                    "RQMC modes need a randomized point set for unbiasedness",
                ));
            }
        }
        Ok(())
    }

    /// Largest κ handled with a point set; `rqmc-times-values` needs 2κ
    /// dimensions, so its cap is also limited to half the table size.
    pub fn effective_kappa_cap(&self) -> usize {
        self.rqmc_kappa_cap
            .min(MAX_DIMENSION / self.mode.dims_per_time())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsiEstimate {
    pub value: f64,
    pub kappa: u64,
    pub mode: PsiMode,
    pub path: EstimatorPath,
    /// Fresh bridge values drawn (memoized hits are not counted).
    pub n_bridge_queries: usize,
    /// Times-values mode only: time collisions resolved by a one-ulp nudge.
    pub n_time_collisions: usize,
}

/// `κ ~ Poisson((U - L)(b - a))`; a zero rate returns 0 without touching `rng`.
pub fn sample_kappa<R: RngCore + ?Sized>(bounds: (f64, f64), a: f64, b: f64, rng: &mut R) -> u64 {
    let rate = (bounds.1 - bounds.0) * (b - a);
    if !(rate > 0.0) {
        return 0;
    }
    let poisson = Poisson::new(rate).expect("positive finite rate");
    poisson.sample(rng) as u64
}

/// Dispatches on `cfg.mode`.
pub fn estimate<R: RngCore + ?Sized>(
    model: &DriftModel,
    bridge: &mut LazyBridge,
    cfg: &PsiConfig,
    rng: &mut R,
) -> Result<PsiEstimate> {
    let (a, b) = bridge.interval();
    let kappa = sample_kappa(model.phi_bounds(), a, b, rng);
    estimate_with_kappa(model, bridge, cfg, kappa, rng)
}

/// Plain Monte Carlo estimate: `M` inner replicates sharing one bridge.
pub fn estimate_mc<R: RngCore + ?Sized>(
    model: &DriftModel,
    bridge: &mut LazyBridge,
    cfg: &PsiConfig,
    rng: &mut R,
) -> Result<PsiEstimate> {
    let cfg = PsiConfig {
        mode: PsiMode::Mc,
        ..*cfg
    };
    estimate(model, bridge, &cfg, rng)
}

/// RQMC estimate of the inner expectation given a pseudo-random κ.
pub fn estimate_rqmc<R: RngCore + ?Sized>(
    model: &DriftModel,
    bridge: &mut LazyBridge,
    cfg: &PsiConfig,
    rng: &mut R,
) -> Result<PsiEstimate> {
    if cfg.mode == PsiMode::Mc {
        return Err(Error::InvalidArgument(
            "estimate_rqmc needs an rqmc-times or rqmc-times-values config".into(),
        ));
    }
    estimate(model, bridge, cfg, rng)
}

/// The estimator for a given κ. Exposed so that benchmarks can offer the same
/// κ to several modes.
pub fn estimate_with_kappa<R: RngCore + ?Sized>(
    model: &DriftModel,
    bridge: &mut LazyBridge,
    cfg: &PsiConfig,
    kappa: u64,
    rng: &mut R,
) -> Result<PsiEstimate> {
    cfg.validate()?;
    let (a, b) = bridge.interval();
    let (lower, _) = model.phi_bounds();
    let prefactor = (-lower * (b - a)).exp();
    let mut est = PsiEstimate {
        value: prefactor,
        kappa,
        mode: cfg.mode,
        path: EstimatorPath::EmptyProduct,
        n_bridge_queries: 0,
        n_time_collisions: 0,
    };
    if kappa == 0 {
        return Ok(est);
    }
    let k = kappa as usize;
    let m = cfg.inner_points;
    let use_points = cfg.mode != PsiMode::Mc && k <= cfg.effective_kappa_cap();
    let inner_sum = if !use_points {
        est.path = if cfg.mode == PsiMode::Mc {
            EstimatorPath::Mc
        } else {
            EstimatorPath::McFallback
        };
        mc_inner_sum(model, bridge, k, m, rng, &mut est)?
    } else {
        let dim = k * cfg.mode.dims_per_time();
        let seed = rng.next_u64();
        let points = lowdisc::randomize(&lowdisc::generate_base(dim, m)?, cfg.randomization, seed)?;
        match cfg.mode {
            PsiMode::RqmcTimes => {
                est.path = EstimatorPath::RqmcTimes;
                times_inner_sum(model, bridge, &points, rng, &mut est)?
            }
            PsiMode::RqmcTimesValues => {
                est.path = EstimatorPath::RqmcTimesValues;
                times_values_inner_sum(model, bridge, &points, k, &mut est)?
            }
            PsiMode::Mc => unreachable!(),
        }
    };
    est.value = prefactor * (inner_sum / m as f64);
    if !est.value.is_finite() {
        return Err(Error::Numeric(format!("psi estimate is {}", est.value)));
    }
    Ok(est)
}

struct Term {
    upper: f64,
    inv_width: f64,
}

impl Term {
    fn new(model: &DriftModel) -> Self {
        let (l, u) = model.phi_bounds();
        Term {
            upper: u,
            inv_width: 1.0 / (u - l),
        }
    }

    #[inline]
    fn eval(&self, model: &DriftModel, w: f64) -> Result<f64> {
        let p = model.phi(w);
        if p.is_nan() {
            return Err(Error::Numeric(format!("phi({w}) is NaN")));
        }
        Ok((self.upper - p) * self.inv_width)
    }
}

#[inline]
fn time_from_unit(a: f64, b: f64, u: f64) -> f64 {
    (a + (b - a) * u).min(b)
}

fn mc_inner_sum<R: RngCore + ?Sized>(
    model: &DriftModel,
    bridge: &mut LazyBridge,
    kappa: usize,
    replicates: usize,
    rng: &mut R,
    est: &mut PsiEstimate,
) -> Result<f64> {
    let term = Term::new(model);
    let (a, b) = bridge.interval();
    let mut sum = 0.0;
    for _ in 0..replicates {
        let mut prod = 1.0;
        for _ in 0..kappa {
            let t = time_from_unit(a, b, rng.random::<f64>());
            let (w, fresh) = bridge.value_at_counted(t, rng)?;
            est.n_bridge_queries += fresh as usize;
            prod *= term.eval(model, w)?;
        }
        sum += prod;
    }
    Ok(sum)
}

fn times_inner_sum<R: RngCore + ?Sized>(
    model: &DriftModel,
    bridge: &mut LazyBridge,
    points: &lowdisc::PointSet,
    rng: &mut R,
    est: &mut PsiEstimate,
) -> Result<f64> {
    let term = Term::new(model);
    let (a, b) = bridge.interval();
    let mut sum = 0.0;
    for row in points.rows() {
        let mut prod = 1.0;
        for &u in row {
            let (w, fresh) = bridge.value_at_counted(time_from_unit(a, b, u), rng)?;
            est.n_bridge_queries += fresh as usize;
            prod *= term.eval(model, w)?;
        }
        sum += prod;
    }
    Ok(sum)
}

/// Smallest positive driving uniform; point coordinates live on a 2^-53 grid
/// that includes 0.
const MIN_DRIVING_UNIFORM: f64 = 1.0 / (1u64 << 54) as f64;

fn times_values_inner_sum(
    model: &DriftModel,
    bridge: &mut LazyBridge,
    points: &lowdisc::PointSet,
    kappa: usize,
    est: &mut PsiEstimate,
) -> Result<f64> {
    let term = Term::new(model);
    let (a, b) = bridge.interval();
    let mark = bridge.mark();
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(kappa);
    let mut sum = 0.0;
    for row in points.rows() {
        pairs.clear();
        pairs.extend(
            row[..kappa]
                .iter()
                .zip(&row[kappa..])
                .map(|(&ut, &uv)| (ut, uv.max(MIN_DRIVING_UNIFORM))),
        );
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut prod = 1.0;
        for &(mut ut, uv) in &pairs {
            let w = loop {
                match bridge.value_at_with_uniform(time_from_unit(a, b, ut), uv) {
                    Ok(w) => break w,
                    Err(Error::TimeAlreadyPresent(_)) => {
                        est.n_time_collisions += 1;
                        let up = ut.next_up();
                        ut = if up < 1.0 { up } else { ut.next_down() };
                    }
                    Err(e) => {
                        bridge.rollback(mark);
                        return Err(e);
                    }
                }
            };
            est.n_bridge_queries += 1;
            match term.eval(model, w) {
                Ok(f) => prod *= f,
                Err(e) => {
                    bridge.rollback(mark);
                    return Err(e);
                }
            }
        }
        bridge.rollback(mark);
        sum += prod;
    }
    Ok(sum)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance; 0 when `n == 1`.
    pub variance: f64,
    pub se: f64,
    /// Set when `n == 1`, where no variance can be estimated.
    pub degenerate: bool,
    pub kappa_histogram: BTreeMap<u64, usize>,
    pub total_bridge_queries: usize,
    pub mean_bridge_queries: f64,
    pub fallbacks: usize,
}

pub fn psi_diagnostics(estimates: &[PsiEstimate]) -> Result<PsiSummary> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates to summarize".into()));
    }
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let (mean, variance) = mean_var(&values);
    let n = estimates.len();
    let mut kappa_histogram = BTreeMap::new();
    for e in estimates {
        *kappa_histogram.entry(e.kappa).or_insert(0) += 1;
    }
    let total_bridge_queries = estimates.iter().map(|e| e.n_bridge_queries).sum();
    Ok(PsiSummary {
        n,
        mean,
        variance,
        se: (variance / n as f64).sqrt(),
        degenerate: n < 2,
        kappa_histogram,
        total_bridge_queries,
        mean_bridge_queries: total_bridge_queries as f64 / n as f64,
        fallbacks: estimates
            .iter()
            .filter(|e| e.path == EstimatorPath::McFallback)
            .count(),
    })
}

/// Welford mean and unbiased variance (0 for a single value). Identical
/// inputs give their common value back exactly.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    if values.len() < 2 {
        return (mean, 0.0);
    }
    (mean, m2 / (values.len() - 1) as f64)
}
