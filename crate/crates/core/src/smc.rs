//! Random-weight particle filter.
//!
//! Each step moves every particle from the previous observation time `a` to the
//! next one `b`, builds a bridge between the two positions, and multiplies the
//! weight by the proposal's weight factor, an unbiased `ψ̂` and the Gaussian
//! observation density. Because `ψ̂` is unbiased, the product of mean
//! incremental weights is an unbiased estimate of the likelihood.
//!
//! Particle slot `i` owns random stream `i` of the master seed and resampling
//! uses a separate control stream, so a run depends only on its configuration
//! and seed, not on how many worker threads execute it.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::LazyBridge;
use crate::error::{Error, Result};
use crate::models::DriftModel;
use crate::normal;
use crate::proposal::{self, ProposalMode};
use crate::psi::{self, PsiConfig};
use crate::rng::{self, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleScheme {
    Multinomial,
    #[default]
    Systematic,
    Stratified,
}

impl fmt::Display for ResampleScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleScheme::Multinomial => "multinomial",
            ResampleScheme::Systematic => "systematic",
            ResampleScheme::Stratified => "stratified",
        })
    }
}

impl FromStr for ResampleScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(ResampleScheme::Multinomial),
            "systematic" => Ok(ResampleScheme::Systematic),
            "stratified" => Ok(ResampleScheme::Stratified),
            other => Err(Error::InvalidArgument(format!(
                "unknown resampling scheme `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub particles: usize,
    pub x0: f64,
    /// Observation noise standard deviation.
    pub sigma: f64,
    #[serde(default)]
    pub psi: PsiConfig,
    #[serde(default)]
    pub proposal: ProposalMode,
    #[serde(default)]
    pub resampling: ResampleScheme,
    /// Resample when ESS < `ess_threshold · N`.
    #[serde(default = "default_ess_threshold")]
    pub ess_threshold: f64,
    pub seed: u64,
}

fn default_ess_threshold() -> f64 {
    0.5
}

/// Smallest observation noise the filter and the Kalman oracle accept.
pub const MIN_SIGMA: f64 = 1e-6;

impl FilterConfig {
    pub fn new(particles: usize, x0: f64, sigma: f64, seed: u64) -> Self {
        FilterConfig {
            particles,
            x0,
            sigma,
            psi: PsiConfig::default(),
            proposal: ProposalMode::Gaussian,
            resampling: ResampleScheme::Systematic,
            ess_threshold: default_ess_threshold(),
            seed,
        }
    }

    pub fn validate(&self, model: &DriftModel) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("filter.particles", "must be at least 1"));
        }
        if !self.x0.is_finite() {
            return Err(Error::config("x0", "must be finite"));
        }
        if !(self.sigma >= MIN_SIGMA) || !self.sigma.is_finite() {
            return Err(Error::config(
                "sigma",
                format!("filtering needs finite sigma >= {MIN_SIGMA}, got {}", self.sigma),
            ));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(Error::config("filter.ess_threshold", "must lie in [0, 1]"));
        }
        self.psi.validate()?;
        if self.proposal == ProposalMode::Tilted && !model.capabilities().tilted_normalizer {
            return Err(Error::config(
                "filter.proposal",
                format!("model `{}` has no closed-form tilted normalizer", model.name()),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ParticleCloud {
    pub positions: Vec<f64>,
    /// Unnormalized; `-∞` marks a zero-weight particle.
    pub log_weights: Vec<f64>,
    streams: Vec<StreamRng>,
    control: StreamRng,
    pub step_index: usize,
    pub time: f64,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn streams(&self) -> &[StreamRng] {
        &self.streams
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.log_weights);
        self.log_weights.iter().map(|&l| (l - lse).exp()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterStepReport {
    pub step: usize,
    pub time: f64,
    /// ESS of the updated weights, before any resampling.
    pub ess: f64,
    pub log_likelihood_increment: f64,
    pub resampled: bool,
    pub mean_kappa: f64,
    pub posterior_mean: f64,
    pub posterior_var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterRun {
    pub reports: Vec<FilterStepReport>,
    pub total_log_likelihood: f64,
}

/// All particles at `x0` at time 0 with equal weights.
pub fn init_cloud(n: usize, x0: f64, master_seed: u64) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("particle count must be at least 1".into()));
    }
    Ok(ParticleCloud {
        positions: vec![x0; n],
        log_weights: vec![0.0; n],
        streams: (0..n as u64).map(|i| rng::stream(master_seed, i)).collect(),
        control: rng::stream(master_seed, rng::CONTROL_STREAM),
        step_index: 0,
        time: 0.0,
    })
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `(Σw)² / Σw²`, computed in the log domain. NaN when every weight is zero.
pub fn ess(log_weights: &[f64]) -> f64 {
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY {
        return f64::NAN;
    }
    let sum_sq: f64 = log_weights.iter().map(|&l| (2.0 * (l - lse)).exp()).sum();
    1.0 / sum_sq
}

/// Inverts the weight CDF at sorted positions `u_i ∈ [0, 1)`.
fn invert_sorted(weights: &[f64], sorted_u: impl Iterator<Item = f64>) -> Vec<usize> {
    let n = weights.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for u in sorted_u {
        let target = u * total;
        while j < n - 1 && cdf[j] <= target {
            j += 1;
        }
        out.push(j);
    }
    out
}

/// Systematic resampling with an explicit pivot `u ∈ [0, 1)`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    invert_sorted(weights, (0..n).map(|i| (i as f64 + u) / n as f64))
}

/// Offspring indices for normalized (or merely nonnegative) weights.
pub fn resample_indices<R: RngCore + ?Sized>(
    weights: &[f64],
    scheme: ResampleScheme,
    rng: &mut R,
) -> Vec<usize> {
    let n = weights.len();
    match scheme {
        ResampleScheme::Systematic => systematic_indices(weights, rng.random::<f64>()),
        ResampleScheme::Stratified => {
            let us: Vec<f64> = (0..n)
                .map(|i| (i as f64 + rng.random::<f64>()) / n as f64)
                .collect();
            invert_sorted(weights, us.into_iter())
        }
        ResampleScheme::Multinomial => {
            let mut us: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            us.sort_by(f64::total_cmp);
            invert_sorted(weights, us.into_iter())
        }
    }
}

/// Replaces the cloud by `N` offspring drawn from the control stream and
/// resets the weights to uniform. Streams stay attached to their slots.
pub fn resample(cloud: &mut ParticleCloud, scheme: ResampleScheme) -> Result<()> {
    let weights = cloud.normalized_weights();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Degeneracy {
            step: cloud.step_index,
            time: cloud.time,
        });
    }
    let idx = resample_indices(&weights, scheme, &mut cloud.control);
    cloud.positions = idx.iter().map(|&i| cloud.positions[i]).collect();
    cloud.log_weights.iter_mut().for_each(|l| *l = 0.0);
    Ok(())
}

struct Increment {
    log_weight: f64,
    kappa: u64,
}

/// One filter step from `cloud.time` to `obs.time`.
pub fn step(
    cloud: &mut ParticleCloud,
    model: &DriftModel,
    obs: Observation,
    cfg: &FilterConfig,
) -> Result<FilterStepReport> {
    let a = cloud.time;
    let b = obs.time;
    if !(b > a) {
        return Err(Error::InvalidArgument(format!(
            "observation time {b} does not follow the cloud time {a}"
        )));
    }
    let step_index = cloud.step_index + 1;
    let var_obs = cfg.sigma * cfg.sigma;
    let builtin = model.is_builtin();

    let increments: Vec<Increment> = cloud
        .positions
        .par_iter_mut()
        .zip(cloud.streams.par_iter_mut())
        .map(|(x, rng)| -> Result<Increment> {
            let x_a = *x;
            let prop = proposal::propose(cfg.proposal, model, x_a, a, b, rng)?;
            let mut bridge = LazyBridge::new(a, x_a, b, prop.x_b)?;
            let est = psi::estimate(model, &mut bridge, &cfg.psi, rng)?;
            if est.value < 0.0 {
                let msg = format!(
                    "negative psi estimate {} (kappa = {}) for model `{}`",
                    est.value,
                    est.kappa,
                    model.name()
                );
                return Err(if builtin {
                    Error::Invariant(msg)
                } else {
                    Error::Numeric(format!("{msg}; check the declared phi bounds"))
                });
            }
            *x = prop.x_b;
            Ok(Increment {
                log_weight: prop.log_weight_factor
                    + est.value.ln()
                    + normal::log_pdf(obs.value, prop.x_b, var_obs),
                kappa: est.kappa,
            })
        })
        .collect::<Result<_>>()?;

    let old_lse = log_sum_exp(&cloud.log_weights);
    let mut new_log_weights = Vec::with_capacity(cloud.len());
    for (old, inc) in cloud.log_weights.iter().zip(&increments) {
        let lw = (old - old_lse) + inc.log_weight;
        if lw.is_nan() {
            return Err(Error::Numeric(format!("NaN log-weight at step {step_index}")));
        }
        new_log_weights.push(lw);
    }
    let log_likelihood_increment = log_sum_exp(&new_log_weights);
    if log_likelihood_increment == f64::NEG_INFINITY {
        return Err(Error::Degeneracy {
            step: step_index,
            time: b,
        });
    }
    cloud.log_weights = new_log_weights;
    cloud.step_index = step_index;
    cloud.time = b;

    let weights = cloud.normalized_weights();
    let ess_value = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let posterior_mean: f64 = weights.iter().zip(&cloud.positions).map(|(w, x)| w * x).sum();
    let posterior_var: f64 = weights
        .iter()
        .zip(&cloud.positions)
        .map(|(w, x)| w * (x - posterior_mean) * (x - posterior_mean))
        .sum();
    let mean_kappa = increments.iter().map(|i| i.kappa as f64).sum::<f64>() / cloud.len() as f64;

    let n = cloud.len() as f64;
    let resampled = ess_value < cfg.ess_threshold * n;
    if resampled {
        resample(cloud, cfg.resampling)?;
    }
    Ok(FilterStepReport {
        step: step_index,
        time: b,
        ess: ess_value,
        log_likelihood_increment,
        resampled,
        mean_kappa,
        posterior_mean,
        posterior_var,
    })
}

/// Runs the filter over the whole observation sequence, starting at `x0` at
/// time 0.
pub fn run_filter(
    model: &DriftModel,
    observations: &[Observation],
    cfg: &FilterConfig,
) -> Result<FilterRun> {
    cfg.validate(model)?;
    let mut prev = 0.0;
    for (k, o) in observations.iter().enumerate() {
        if !(o.time > prev) || !o.value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "observation {} (t = {}, y = {}) must be finite with time after {prev}",
                k + 1,
                o.time,
                o.value
            )));
        }
        prev = o.time;
    }
    let mut cloud = init_cloud(cfg.particles, cfg.x0, cfg.seed)?;
    let mut reports = Vec::with_capacity(observations.len());
    let mut total = 0.0;
    for &obs in observations {
        let report = step(&mut cloud, model, obs, cfg)?;
        total += report.log_likelihood_increment;
        reports.push(report);
    }
    Ok(FilterRun {
        reports,
        total_log_likelihood: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_examples() {
        let c = init_cloud(4, 1.5, 9).unwrap();
        assert_eq!(c.positions, vec![1.5; 4]);
        assert_eq!(c.normalized_weights(), vec![0.25; 4]);
        let d = init_cloud(4, 1.5, 9).unwrap();
        assert_eq!(c.streams(), d.streams());
        assert!(init_cloud(0, 0.0, 1).is_err());
        assert_eq!(init_cloud(1, 0.0, 1).unwrap().len(), 1);
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.0; 8]) - 8.0).abs() < 1e-12);
        let ninf = f64::NEG_INFINITY;
        assert_eq!(ess(&[ninf, 3.0, ninf]), 1.0);
        assert!((ess(&[0.5f64.ln(), 0.5f64.ln(), ninf, ninf]) - 2.0).abs() < 1e-12);
        assert!(ess(&[ninf, ninf]).is_nan());
    }

    #[test]
    fn one_hot_resampling() {
        let w = [0.0, 0.0, 1.0, 0.0, 0.0];
        let mut rng = rng::stream(1, 0);
        for scheme in [ResampleScheme::Multinomial, ResampleScheme::Systematic, ResampleScheme::Stratified] {
            assert_eq!(resample_indices(&w, scheme, &mut rng), vec![2; 5]);
        }
    }

    #[test]
    fn systematic_zero_pivot_is_identity() {
        let w = [0.125; 8];
        assert_eq!(systematic_indices(&w, 0.0), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn zero_weights_never_chosen() {
        let w = [0.0, 0.5, 0.0, 0.5, 0.0];
        for &u in &[0.0, 0.3, 0.999_999] {
            assert!(systematic_indices(&w, u).iter().all(|&i| i == 1 || i == 3));
        }
    }

    #[test]
    fn empty_observations() {
        let cfg = FilterConfig::new(16, 0.0, 1.0, 3);
        let run = run_filter(&DriftModel::zero(), &[], &cfg).unwrap();
        assert!(run.reports.is_empty());
        assert_eq!(run.total_log_likelihood, 0.0);
    }

    #[test]
    fn single_particle_sums_increments() {
        let cfg = FilterConfig::new(1, 0.0, 1.0, 3);
        let obs: Vec<_> = (1..=3)
            .map(|k| Observation { time: k as f64, value: 0.1 * k as f64 })
            .collect();
        let run = run_filter(&DriftModel::sine(), &obs, &cfg).unwrap();
        assert!(run.reports.iter().all(|r| !r.resampled && r.ess == 1.0));
        let s: f64 = run.reports.iter().map(|r| r.log_likelihood_increment).sum();
        assert_eq!(s, run.total_log_likelihood);
    }

    #[test]
    fn deterministic_reruns() {
        let mut cfg = FilterConfig::new(64, 0.0, 0.5, 11);
        cfg.psi = PsiConfig::new(crate::psi::PsiMode::RqmcTimesValues, 4);
        let obs: Vec<_> = (1..=4)
            .map(|k| Observation { time: 0.5 * k as f64, value: (k as f64).sin() })
            .collect();
        let a = run_filter(&DriftModel::sine(), &obs, &cfg).unwrap();
        let b = run_filter(&DriftModel::sine(), &obs, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tanh_weights_use_deterministic_psi() {
        let mut cloud = init_cloud(8, 0.2, 5).unwrap();
        let cfg = FilterConfig::new(8, 0.2, 1.0, 5);
        let r = step(&mut cloud, &DriftModel::tanh(), Observation { time: 0.8, value: 0.0 }, &cfg).unwrap();
        assert_eq!(r.mean_kappa, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = FilterConfig::new(8, 0.0, 0.0, 1);
        assert!(run_filter(&DriftModel::zero(), &[], &cfg).is_err());
        let cfg = FilterConfig::new(8, 0.0, 1.0, 1);
        let obs = [Observation { time: 1.0, value: 0.0 }, Observation { time: 1.0, value: 0.0 }];
        assert!(run_filter(&DriftModel::zero(), &obs, &cfg).is_err());
        let mut cfg = FilterConfig::new(8, 0.0, 1.0, 1);
        cfg.proposal = ProposalMode::Tilted;
        assert!(run_filter(&DriftModel::sine(), &[], &cfg).is_err());
    }

    struct Flat;
    impl crate::models::DriftFn for Flat {
        fn alpha(&self, _: f64) -> f64 {
            0.0
        }
        fn alpha_prime(&self, _: f64) -> f64 {
            0.0
        }
        fn antiderivative(&self, _: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn degeneracy_is_reported() {
        // φ ≡ U makes every product term zero, so ψ̂ = 0 once κ > 0
        let model = DriftModel::custom("flat", std::sync::Arc::new(Flat), (-50.0, 0.0), None).unwrap();
        let cfg = FilterConfig::new(4, 0.0, 1.0, 2);
        let obs = [Observation { time: 1.0, value: 0.0 }];
        match run_filter(&model, &obs, &cfg) {
            Err(Error::Degeneracy { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }
}
