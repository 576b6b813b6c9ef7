//! Statistical checks of samplers, resampling and the oracles against each
//! other and against closed forms.

use statrs::distribution::{ContinuousCDF, Normal};

use rwpf_core::models::DriftModel;
use rwpf_core::oracles::{self, GridSpec};
use rwpf_core::proposal::{self, ProposalMode};
use rwpf_core::psi::mean_var;
use rwpf_core::rng;
use rwpf_core::smc::{self, resample_indices, FilterConfig, Observation, ResampleScheme};

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn obs(pairs: &[(f64, f64)]) -> Vec<Observation> {
    pairs
        .iter()
        .map(|&(time, value)| Observation { time, value })
        .collect()
}

#[test]
fn tanh_tilted_sampler_matches_its_mixture_law() {
    let model = DriftModel::tanh();
    let (x_a, t): (f64, f64) = (0.7, 0.8);
    let n = 20_000;
    let mut r = rng::stream(31, 0);
    let xs: Vec<f64> = (0..n)
        .map(|_| proposal::sample_tilted(&model, x_a, t, &mut r).unwrap().0)
        .collect();
    let w_plus = x_a.exp() / (2.0 * x_a.cosh());
    let plus = Normal::new(x_a + t, t.sqrt()).unwrap();
    let minus = Normal::new(x_a - t, t.sqrt()).unwrap();
    let d = ks_statistic(xs, |x| w_plus * plus.cdf(x) + (1.0 - w_plus) * minus.cdf(x));
    // 0.1% critical value ≈ 1.95 / √n
    assert!(d < 1.95 / (n as f64).sqrt(), "KS distance {d}");
}

#[test]
fn sine_rejection_rate_matches_quadrature() {
    let model = DriftModel::sine();
    let (x_a, t): (f64, f64) = (0.4, 0.5);
    let env = model.tilt_log_envelope().unwrap();
    let nd = Normal::new(x_a, t.sqrt()).unwrap();
    use statrs::distribution::Continuous;
    let (lo, hi, k) = (x_a - 12.0 * t.sqrt(), x_a + 12.0 * t.sqrt(), 20_000);
    let h = (hi - lo) / k as f64;
    let a_ref = model.big_a(x_a);
    let exact: f64 = (0..=k)
        .map(|i| {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == k { 0.5 } else { 1.0 };
            w * nd.pdf(x) * (model.big_a(x) - a_ref - env).exp()
        })
        .sum::<f64>()
        * h;
    let n = 200_000;
    let rate = proposal::acceptance_rate_probe(&model, x_a, t, n, &mut rng::stream(32, 0)).unwrap();
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((rate - exact).abs() < 4.0 * se, "{rate} vs {exact} (se {se})");
}

#[test]
fn multinomial_counts_follow_binomial_law() {
    let w = [0.1, 0.25, 0.05, 0.6];
    let n_particles = 400;
    let weights: Vec<f64> = (0..n_particles).map(|i| w[i % 4]).collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|x| x / total).collect();
    let p: f64 = weights.iter().step_by(4).sum();
    let reps = 4000;
    let mut r = rng::stream(33, 0);
    let counts: Vec<f64> = (0..reps)
        .map(|_| {
            resample_indices(&weights, ResampleScheme::Multinomial, &mut r)
                .iter()
                .filter(|&&i| i % 4 == 0)
                .count() as f64
        })
        .collect();
    let (mean, var) = mean_var(&counts);
    let n = n_particles as f64;
    let want_var = n * p * (1.0 - p);
    assert!((mean - n * p).abs() < 4.0 * (want_var / reps as f64).sqrt(), "{mean}");
    assert!((var / want_var - 1.0).abs() < 0.1, "{var} vs {want_var}");
}

#[test]
fn euler_histogram_matches_tanh_density() {
    let model = DriftModel::tanh();
    let grid = GridSpec::new(-4.0, 4.0, 64).unwrap();
    let (x_a, t) = (0.3, 1.0);
    let hist = oracles::euler_transition_histogram(&model, x_a, t, 400, 200_000, &grid, 34).unwrap();
    let w = grid.width();
    for ((&c, &d), &se) in hist.centers.iter().zip(&hist.density).zip(&hist.se) {
        // bin average of the exact density by Simpson's rule
        let f = |x: f64| model.exact_transition_density(x_a, x, t).unwrap();
        let avg = (f(c - w / 2.0) + 4.0 * f(c) + f(c + w / 2.0)) / 6.0;
        // 4 SE plus an allowance for the O(h) Euler bias
        assert!((d - avg).abs() < 4.0 * se + 2e-3, "x={c}: {d} vs {avg} (se {se})");
    }
}

#[test]
fn grid_filter_reproduces_kalman_on_zero_drift() {
    let model = DriftModel::zero();
    let o = obs(&[(0.5, 0.3), (1.0, -0.4), (2.0, 0.9), (2.5, 1.7), (4.0, 0.2)]);
    let sigma = 0.7;
    let kal = oracles::kalman_filter(0.1, &o, sigma).unwrap();
    let grid = oracles::grid_filter(&model, 0.1, &o, sigma, &GridSpec::new(-15.0, 15.0, 6000).unwrap())
        .unwrap();
    assert!((kal.total_log_likelihood - grid.total_log_likelihood).abs() < 1e-6);
    for (k, s) in grid.steps.iter().enumerate() {
        assert!((s.mean - kal.means[k]).abs() < 1e-6);
        assert!((s.var - kal.vars[k]).abs() < 1e-6);
    }
}

#[test]
fn uninformative_observation_leaves_the_transition_density() {
    let model = DriftModel::tanh();
    let grid = GridSpec::new(-10.0, 10.0, 2000).unwrap();
    let res = oracles::grid_filter(&model, 0.0, &obs(&[(1.0, 0.3)]), 100.0, &grid).unwrap();
    let h = grid.width();
    let kl: f64 = grid
        .nodes()
        .iter()
        .zip(&res.steps[0].posterior)
        .map(|(&x, &p)| {
            let q = model.exact_transition_density(0.0, x, 1.0).unwrap();
            if p > 0.0 && q > 0.0 {
                p * (p / q).ln() * h
            } else {
                0.0
            }
        })
        .sum();
    assert!(kl.abs() < 1e-5, "KL {kl}");
}

#[test]
fn bruteforce_oracle_is_stable_under_refinement() {
    let model = DriftModel::sine();
    let coarse = oracles::psi_bruteforce(&model, 0.5, -0.2, 0.0, 1.0, 200, 40_000, 35).unwrap();
    let fine = oracles::psi_bruteforce(&model, 0.5, -0.2, 0.0, 1.0, 400, 40_000, 36).unwrap();
    let z = (coarse.mean - fine.mean) / (coarse.se.powi(2) + fine.se.powi(2)).sqrt();
    assert!(z.abs() < 4.0, "{coarse:?} vs {fine:?}");
}

#[test]
fn tilted_proposal_filter_agrees_with_grid_filter() {
    let model = DriftModel::tanh();
    let o = obs(&[(1.0, 0.8), (2.0, 2.6), (3.0, 4.4)]);
    let sigma = 0.5;
    let grid = oracles::grid_filter(&model, 0.0, &o, sigma, &GridSpec::new(-10.0, 10.0, 4096).unwrap())
        .unwrap();
    // the likelihood estimate (not its log) is unbiased
    let ratios: Vec<f64> = (0..40)
        .map(|s| {
            let mut cfg = FilterConfig::new(512, 0.0, sigma, 500 + s);
            cfg.proposal = ProposalMode::Tilted;
            let ll = smc::run_filter(&model, &o, &cfg).unwrap().total_log_likelihood;
            (ll - grid.total_log_likelihood).exp()
        })
        .collect();
    let (mean, var) = mean_var(&ratios);
    let se = (var / ratios.len() as f64).sqrt();
    assert!((mean - 1.0).abs() < 4.0 * se, "{mean} ± {se}");
}
