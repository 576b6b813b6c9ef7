//! Property tests over the core data structures.

use proptest::prelude::*;

use rwpf_core::bridge::LazyBridge;
use rwpf_core::lowdisc::{self, Randomization};
use rwpf_core::models::DriftModel;
use rwpf_core::psi::{self, PsiConfig, PsiMode};
use rwpf_core::rng;
use rwpf_core::smc::{resample_indices, systematic_indices, ResampleScheme};

fn mode() -> impl Strategy<Value = PsiMode> {
    prop_oneof![
        Just(PsiMode::Mc),
        Just(PsiMode::RqmcTimes),
        Just(PsiMode::RqmcTimesValues)
    ]
}

fn scheme() -> impl Strategy<Value = Randomization> {
    prop_oneof![
        Just(Randomization::None),
        Just(Randomization::DigitalShift),
        Just(Randomization::OwenScramble)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bridge_skeleton_stays_sorted_and_counts_insertions(
        x_a in -5.0..5.0f64,
        x_b in -5.0..5.0f64,
        len in 0.01..10.0f64,
        us in prop::collection::vec(0.0..1.0f64, 0..40),
        seed in any::<u64>(),
    ) {
        let mut b = LazyBridge::new(0.0, x_a, len, x_b).unwrap();
        let mut r = rng::stream(seed, 0);
        let mut distinct = std::collections::BTreeSet::new();
        for u in &us {
            let t = u * len;
            let w = b.value_at(t, &mut r).unwrap();
            prop_assert!(w.is_finite());
            // querying again returns the stored value
            prop_assert_eq!(b.value_at(t, &mut r).unwrap(), w);
            distinct.insert(t.to_bits());
        }
        let times: Vec<f64> = b.skeleton().map(|(t, _)| t).collect();
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(times.first().copied(), Some(0.0));
        prop_assert_eq!(times.last().copied(), Some(len));
        let interior = distinct.iter().filter(|&&t| f64::from_bits(t) != 0.0 && f64::from_bits(t) != len).count();
        prop_assert_eq!(b.len(), interior + 2);
    }

    #[test]
    fn bridge_rollback_restores_skeleton(
        first in prop::collection::vec(0.01..0.99f64, 0..10),
        second in prop::collection::vec(0.01..0.99f64, 1..10),
        seed in any::<u64>(),
    ) {
        let mut b = LazyBridge::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let mut r = rng::stream(seed, 0);
        for &t in &first {
            b.value_at(t, &mut r).unwrap();
        }
        let before: Vec<(f64, f64)> = b.skeleton().collect();
        let mark = b.mark();
        for &t in &second {
            b.value_at(t, &mut r).unwrap();
        }
        b.rollback(mark);
        let after: Vec<(f64, f64)> = b.skeleton().collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn point_sets_lie_in_unit_cube_and_are_reproducible(
        d in 1usize..=12,
        m in 1usize..300,
        scheme in scheme(),
        seed in any::<u64>(),
    ) {
        let base = lowdisc::generate_base(d, m).unwrap();
        let ps = lowdisc::randomize(&base, scheme, seed).unwrap();
        prop_assert!(ps.rows().all(|p| p.iter().all(|&u| (0.0..1.0).contains(&u))));
        let again = lowdisc::randomize(&base, scheme, seed).unwrap();
        prop_assert_eq!(ps, again);
    }

    #[test]
    fn resampling_preserves_particle_count(
        weights in prop::collection::vec(0.0..1.0f64, 1..200),
        scheme in prop_oneof![
            Just(ResampleScheme::Multinomial),
            Just(ResampleScheme::Systematic),
            Just(ResampleScheme::Stratified)
        ],
        seed in any::<u64>(),
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-9);
        let total: f64 = weights.iter().sum();
        let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
        let mut r = rng::stream(seed, 0);
        let idx = resample_indices(&w, scheme, &mut r);
        prop_assert_eq!(idx.len(), w.len());
        prop_assert!(idx.iter().all(|&i| i < w.len() && w[i] > 0.0));
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn systematic_counts_are_floor_or_ceil(
        weights in prop::collection::vec(0.001..1.0f64, 1..100),
        u in 0.0..1.0f64,
    ) {
        let total: f64 = weights.iter().sum();
        let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
        let n = w.len();
        let idx = systematic_indices(&w, u);
        let mut counts = vec![0usize; n];
        for i in idx {
            counts[i] += 1;
        }
        for (c, wi) in counts.iter().zip(&w) {
            let e = wi * n as f64;
            let c = *c as f64;
            prop_assert!(c >= (e - 1e-9).floor() && c <= (e + 1e-9).ceil(), "{} vs {}", c, e);
        }
    }

    #[test]
    fn psi_estimates_lie_in_their_range(
        x_a in -3.0..3.0f64,
        x_b in -3.0..3.0f64,
        len in 0.05..2.0f64,
        mode in mode(),
        m in 1usize..40,
        seed in any::<u64>(),
    ) {
        let model = DriftModel::sine();
        let (lower, _) = model.phi_bounds();
        let mut b = LazyBridge::new(0.0, x_a, len, x_b).unwrap();
        let mut r = rng::stream(seed, 0);
        let est = psi::estimate(&model, &mut b, &PsiConfig::new(mode, m), &mut r).unwrap();
        let hi = (-lower * len).exp();
        prop_assert!(est.value >= 0.0 && est.value <= hi * (1.0 + 1e-12), "{} not in [0, {}]", est.value, hi);
    }
}
