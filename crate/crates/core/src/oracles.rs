//! Reference computations that share no code path with the estimators they
//! check: fine-grid bridge simulation for `E[ψ]`, Euler–Maruyama histograms,
//! a quadrature grid filter and the Kalman filter.
//!
//! Path simulation here uses ziggurat normals (not the inverse CDF used by the
//! bridge) and batches of paths on independent streams; batch results are
//! merged in index order so the output does not depend on the thread count.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DriftModel;
use crate::normal;
use crate::rng;
use crate::smc::{Observation, MIN_SIGMA};

const PATHS_PER_BATCH: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub se: f64,
    pub n_steps: usize,
    pub n_paths: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }
}

/// Monte Carlo estimate of `E[exp{-∫ₐᵇ φ(W_t) dt}]` under the Brownian bridge
/// from `(a, x_a)` to `(b, x_b)`: exact bridge increments on a uniform grid of
/// `n_steps` intervals, trapezoid rule for the integral.
pub fn psi_bruteforce(
    model: &DriftModel,
    x_a: f64,
    x_b: f64,
    a: f64,
    b: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    if n_steps < 100 || n_paths < 1000 {
        return Err(Error::InvalidArgument(format!(
            "psi_bruteforce needs n_steps >= 100 and n_paths >= 1000 (got {n_steps}, {n_paths})"
        )));
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("need a < b, got [{a}, {b}]")));
    }
    let h = (b - a) / n_steps as f64;
    let n_batches = n_paths.div_ceil(PATHS_PER_BATCH);
    let batches: Vec<Moments> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = rng::stream(seed, batch as u64);
            let mut m = Moments::default();
            let paths = PATHS_PER_BATCH.min(n_paths - batch * PATHS_PER_BATCH);
            for _ in 0..paths {
                let mut w = x_a;
                let mut integral = 0.5 * model.phi(x_a);
                for k in 1..n_steps {
                    let remaining = b - (a + (k - 1) as f64 * h);
                    let mean = w + h / remaining * (x_b - w);
                    let var = h * (remaining - h) / remaining;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    w = mean + var.max(0.0).sqrt() * z;
                    integral += model.phi(w);
                }
                integral += 0.5 * model.phi(x_b);
                m.push((-integral * h).exp());
            }
            m
        })
        .collect();
    let total = batches.into_iter().fold(Moments::default(), Moments::merge);
    let var = if total.n > 1.0 { total.m2 / (total.n - 1.0) } else { 0.0 };
    Ok(OracleEstimate {
        mean: total.mean,
        se: (var / total.n).sqrt(),
        n_steps,
        n_paths,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_cells: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n_cells: usize) -> Result<Self> {
        let g = GridSpec { lo, hi, n_cells };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid needs finite lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.n_cells < 16 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 16 cells, got {}",
                self.n_cells
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_cells as f64
    }

    /// The `n_cells + 1` cell boundaries, used as quadrature nodes.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.width();
        (0..=self.n_cells).map(|k| self.lo + h * k as f64).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let h = self.width();
        (0..self.n_cells).map(|k| self.lo + h * (k as f64 + 0.5)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    /// Binomial standard error of each density value.
    pub se: Vec<f64>,
    /// Fraction of endpoints that fell outside the grid.
    pub outside: f64,
}

/// Endpoint density of Euler–Maruyama paths started at `x_a` and run for `t`.
pub fn euler_transition_histogram(
    model: &DriftModel,
    x_a: f64,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    grid: &GridSpec,
    seed: u64,
) -> Result<Histogram> {
    grid.validate()?;
    if n_steps == 0 || n_paths == 0 || !(t > 0.0) {
        return Err(Error::InvalidArgument(
            "euler_transition_histogram needs n_steps, n_paths >= 1 and t > 0".into(),
        ));
    }
    let h = t / n_steps as f64;
    let sqrt_h = h.sqrt();
    let width = grid.width();
    let n_batches = n_paths.div_ceil(PATHS_PER_BATCH);
    let partial: Vec<(Vec<u64>, u64)> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = rng::stream(seed, batch as u64);
            let mut counts = vec![0u64; grid.n_cells];
            let mut outside = 0u64;
            let paths = PATHS_PER_BATCH.min(n_paths - batch * PATHS_PER_BATCH);
            for _ in 0..paths {
                let mut x = x_a;
                for _ in 0..n_steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x += model.alpha(x) * h + sqrt_h * z;
                }
                if x >= grid.lo && x < grid.hi {
                    let k = (((x - grid.lo) / width) as usize).min(grid.n_cells - 1);
                    counts[k] += 1;
                } else {
                    outside += 1;
                }
            }
            (counts, outside)
        })
        .collect();
    let mut counts = vec![0u64; grid.n_cells];
    let mut outside = 0u64;
    for (c, o) in partial {
        counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
        outside += o;
    }
    let n = n_paths as f64;
    let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let se = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            (p * (1.0 - p) / n).sqrt() / width
        })
        .collect();
    Ok(Histogram {
        centers: grid.centers(),
        density,
        se,
        outside: outside as f64 / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridStep {
    pub time: f64,
    /// Posterior density at the grid nodes.
    pub posterior: Vec<f64>,
    pub mean: f64,
    pub var: f64,
    pub log_likelihood_increment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFilterResult {
    pub nodes: Vec<f64>,
    pub steps: Vec<GridStep>,
    pub total_log_likelihood: f64,
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Exact filtering recursion by trapezoid quadrature on a uniform grid,
/// starting from a point mass at `x0` at time 0.
pub fn grid_filter(
    model: &DriftModel,
    x0: f64,
    observations: &[Observation],
    sigma: f64,
    grid: &GridSpec,
) -> Result<GridFilterResult> {
    grid.validate()?;
    if !model.capabilities().exact_transition_density {
        return Err(Error::Unsupported(format!(
            "grid filter needs a closed-form transition density; `{}` has none",
            model.name()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("grid filter needs sigma > 0".into()));
    }
    let nodes = grid.nodes();
    let h = grid.width();
    let var_obs = sigma * sigma;
    let mut prev_time = 0.0;
    let mut posterior: Option<Vec<f64>> = None;
    let mut steps = Vec::with_capacity(observations.len());
    let mut total = 0.0;
    for obs in observations {
        let t = obs.time - prev_time;
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "observation times must increase (t = {})",
                obs.time
            )));
        }
        let predictive: Vec<f64> = match &posterior {
            None => nodes
                .iter()
                .map(|&x| model.exact_transition_density(x0, x, t))
                .collect::<Result<_>>()?,
            Some(post) => {
                let weighted: Vec<f64> = post
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let w = if i == 0 || i == nodes.len() - 1 { 0.5 } else { 1.0 };
                        w * h * p
                    })
                    .collect();
                nodes
                    .par_iter()
                    .map(|&x_new| {
                        let mut s = 0.0;
                        for (&x_old, &w) in nodes.iter().zip(&weighted) {
                            if w != 0.0 {
                                s += w * model.exact_transition_density(x_old, x_new, t)?;
                            }
                        }
                        Ok(s)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let unnormalized: Vec<f64> = predictive
            .iter()
            .zip(&nodes)
            .map(|(p, &x)| p * normal::pdf(obs.value, x, var_obs))
            .collect();
        let z = trapezoid(&unnormalized, h);
        if !(z > 0.0) {
            return Err(Error::Numeric(format!(
                "grid filter normalizer vanished at t = {}",
                obs.time
            )));
        }
        let post: Vec<f64> = unnormalized.iter().map(|u| u / z).collect();
        let n = post.len();
        let boundary_mass = 0.5 * h * (post[0] + post[1]) + 0.5 * h * (post[n - 2] + post[n - 1]);
        if boundary_mass >= 1e-10 {
            return Err(Error::GridTooSmall {
                mass: boundary_mass,
            });
        }
        let xs_post: Vec<f64> = post.iter().zip(&nodes).map(|(p, x)| p * x).collect();
        let mean = trapezoid(&xs_post, h);
        let sq: Vec<f64> = post
            .iter()
            .zip(&nodes)
            .map(|(p, x)| p * (x - mean) * (x - mean))
            .collect();
        let var = trapezoid(&sq, h);
        let inc = z.ln();
        total += inc;
        steps.push(GridStep {
            time: obs.time,
            posterior: post.clone(),
            mean,
            var,
            log_likelihood_increment: inc,
        });
        posterior = Some(post);
        prev_time = obs.time;
    }
    Ok(GridFilterResult {
        nodes,
        steps,
        total_log_likelihood: total,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KalmanResult {
    pub total_log_likelihood: f64,
    /// Filtered means and variances after each observation.
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
    pub log_likelihood_increments: Vec<f64>,
}

/// Kalman filter for `dX = dB` observed with `N(0, σ²)` noise, starting from a
/// point mass at `x0` at time 0.
pub fn kalman_filter(x0: f64, observations: &[Observation], sigma: f64) -> Result<KalmanResult> {
    if !(sigma >= MIN_SIGMA) {
        return Err(Error::InvalidArgument(format!(
            "kalman filter needs sigma >= {MIN_SIGMA}, got {sigma}"
        )));
    }
    let r = sigma * sigma;
    let mut mean = x0;
    let mut var = 0.0;
    let mut prev = 0.0;
    let mut out = KalmanResult {
        total_log_likelihood: 0.0,
        means: Vec::new(),
        vars: Vec::new(),
        log_likelihood_increments: Vec::new(),
    };
    for obs in observations {
        let dt = obs.time - prev;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "observation times must increase (t = {})",
                obs.time
            )));
        }
        let pred_var = var + dt;
        let innov_var = pred_var + r;
        let inc = normal::log_pdf(obs.value, mean, innov_var);
        let gain = pred_var / innov_var;
        mean += gain * (obs.value - mean);
        var = (1.0 - gain) * pred_var;
        out.total_log_likelihood += inc;
        out.log_likelihood_increments.push(inc);
        out.means.push(mean);
        out.vars.push(var);
        prev = obs.time;
    }
    Ok(out)
}
