//! Paired variance benchmark of the ψ estimators.
//!
//! For every `M` and replication, one κ is drawn and the same fresh bridge is
//! offered to each mode, so the comparison isolates the inner-expectation
//! variance. Each mode has its own stream (fresh point-set randomization per
//! RQMC estimate).

use rayon::prelude::*;
use serde::Serialize;

use super::config::BenchConfig;
use crate::bridge::LazyBridge;
use crate::error::Result;
use crate::models::DriftModel;
use crate::psi::{self, mean_var, PsiEstimate, PsiMode, PsiSummary};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub mode: PsiMode,
    pub m: usize,
    pub rep: usize,
    pub kappa: u64,
    pub value: f64,
    pub n_queries: usize,
    /// Seed that reproduces this replication on its own.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: PsiMode,
    pub m: usize,
    #[serde(flatten)]
    pub stats: PsiSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioSummary {
    pub m: usize,
    pub mode: PsiMode,
    /// `var(mc) / var(mode)`; `None` when `var(mode)` is zero.
    pub variance_ratio: Option<f64>,
    /// Set when the ratio is undefined (zero-variance estimator).
    pub degenerate: bool,
    /// 5th percentile of the paired bootstrap distribution of the ratio.
    pub bootstrap_lower_95: Option<f64>,
    pub bootstrap_resamples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub records: Vec<BenchRecord>,
    pub summaries: Vec<ModeSummary>,
    pub ratios: Vec<RatioSummary>,
}

pub fn replication_seed(master: u64, m_index: usize, rep: usize) -> u64 {
    rng::mix64(master ^ rng::mix64(((m_index as u64) << 40) | rep as u64))
}

/// Runs one replication for every configured mode; also returns the bridges
/// the estimators left behind.
pub fn run_replication(
    cfg: &BenchConfig,
    model: &DriftModel,
    m: usize,
    rep_seed: u64,
) -> Result<Vec<(PsiEstimate, LazyBridge)>> {
    let mut kappa_rng = rng::stream(rep_seed, 0);
    let kappa = psi::sample_kappa(model.phi_bounds(), cfg.a, cfg.b, &mut kappa_rng);
    let fresh = LazyBridge::new(cfg.a, cfg.x_a, cfg.b, cfg.x_b)?;
    cfg.modes
        .iter()
        .enumerate()
        .map(|(j, &mode)| {
            let mut bridge = fresh.clone();
            let mut rng = rng::stream(rep_seed, 1 + j as u64);
            let est = psi::estimate_with_kappa(model, &mut bridge, &cfg.psi_config(mode, m), kappa, &mut rng)?;
            Ok((est, bridge))
        })
        .collect()
}

pub fn run_psi_bench(cfg: &BenchConfig) -> Result<BenchResult> {
    let model = cfg.validate()?;
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut ratios = Vec::new();
    for (m_index, &m) in cfg.inner_points.iter().enumerate() {
        let per_rep: Vec<(u64, Vec<PsiEstimate>)> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = replication_seed(cfg.seed, m_index, rep);
                let ests = run_replication(cfg, &model, m, seed)?
                    .into_iter()
                    .map(|(e, _)| e)
                    .collect();
                Ok((seed, ests))
            })
            .collect::<Result<_>>()?;
        let estimates_by_mode: Vec<Vec<PsiEstimate>> = (0..cfg.modes.len())
            .map(|j| per_rep.iter().map(|(_, ests)| ests[j]).collect())
            .collect();
        for (j, &mode) in cfg.modes.iter().enumerate() {
            summaries.push(ModeSummary {
                mode,
                m,
                stats: psi::psi_diagnostics(&estimates_by_mode[j])?,
            });
        }
        if let Some(mc_index) = cfg.modes.iter().position(|&md| md == PsiMode::Mc) {
            let mc: Vec<f64> = estimates_by_mode[mc_index].iter().map(|e| e.value).collect();
            for (j, &mode) in cfg.modes.iter().enumerate() {
                if j == mc_index {
                    continue;
                }
                let other: Vec<f64> = estimates_by_mode[j].iter().map(|e| e.value).collect();
                let boot_seed = rng::mix64(cfg.seed ^ 0xB0_07_57_AA);
                let stream_id = ((m_index as u64) << 8) | j as u64;
                ratios.push(variance_ratio(&mc, &other, cfg.bootstrap_resamples, boot_seed, stream_id, m, mode));
            }
        }
        for (rep, (seed, ests)) in per_rep.into_iter().enumerate() {
            records.extend(ests.into_iter().map(|e| BenchRecord {
                mode: e.mode,
                m,
                rep,
                kappa: e.kappa,
                value: e.value,
                n_queries: e.n_bridge_queries,
                seed,
            }));
        }
    }
    Ok(BenchResult {
        records,
        summaries,
        ratios,
    })
}

fn variance_ratio(
    mc: &[f64],
    other: &[f64],
    resamples: usize,
    seed: u64,
    stream_id: u64,
    m: usize,
    mode: PsiMode,
) -> RatioSummary {
    let ratio = |x: &[f64], y: &[f64]| {
        let vy = mean_var(y).1;
        if vy > 0.0 {
            Some(mean_var(x).1 / vy)
        } else {
            None
        }
    };
    let point = ratio(mc, other);
    let lower = if point.is_some() && resamples > 0 {
        use rand::Rng;
        let mut rng = rng::stream(seed, stream_id);
        let n = mc.len();
        let mut xs = vec![0.0; n];
        let mut ys = vec![0.0; n];
        let mut boot: Vec<f64> = (0..resamples)
            .map(|_| {
                for k in 0..n {
                    let i = rng.random_range(0..n);
                    xs[k] = mc[i];
                    ys[k] = other[i];
                }
                ratio(&xs, &ys).unwrap_or(f64::INFINITY)
            })
            .collect();
        boot.sort_by(f64::total_cmp);
        Some(boot[(0.05 * resamples as f64).floor() as usize])
    } else {
        None
    };
    RatioSummary {
        m,
        mode,
        variance_ratio: point,
        degenerate: point.is_none(),
        bootstrap_lower_95: lower,
        bootstrap_resamples: resamples,
    }
}
