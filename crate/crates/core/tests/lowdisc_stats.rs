use rand::Rng;
use rwpf_core::lowdisc::{self, projection_quality_of_rows, Randomization};
use rwpf_core::psi::mean_var;
use rwpf_core::rng;

const SEEDS: u64 = 2000;

fn shifted(d: usize, m: usize, seed: u64) -> lowdisc::PointSet {
    let base = lowdisc::generate_base(d, m).unwrap();
    lowdisc::randomize(&base, Randomization::DigitalShift, seed).unwrap()
}

#[test]
fn randomized_coordinates_have_mean_one_half() {
    for scheme in [Randomization::DigitalShift, Randomization::OwenScramble] {
        let base = lowdisc::generate_base(3, 8).unwrap();
        let xs: Vec<f64> = (0..SEEDS)
            .map(|s| lowdisc::randomize(&base, scheme, s).unwrap().point(3)[2])
            .collect();
        let (mean, var) = mean_var(&xs);
        let se = (var / SEEDS as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "{scheme}: {mean} ± {se}");
        assert!((var - 1.0 / 12.0).abs() < 0.01, "{scheme}: var {var}");
    }
}

#[test]
fn randomized_rules_are_unbiased_for_polynomials() {
    // ∫ u v dudv = 1/4 and ∫ u² du = 1/3
    let m = 32;
    let est: Vec<(f64, f64)> = (0..SEEDS)
        .map(|s| {
            let ps = shifted(2, m, s);
            let uv = ps.rows().map(|p| p[0] * p[1]).sum::<f64>() / m as f64;
            let uu = ps.rows().map(|p| p[0] * p[0]).sum::<f64>() / m as f64;
            (uv, uu)
        })
        .collect();
    for (vals, want) in [
        (est.iter().map(|e| e.0).collect::<Vec<_>>(), 0.25),
        (est.iter().map(|e| e.1).collect::<Vec<_>>(), 1.0 / 3.0),
    ] {
        let (mean, var) = mean_var(&vals);
        let se = (var / SEEDS as f64).sqrt();
        assert!((mean - want).abs() < 4.0 * se + 1e-15, "{mean} vs {want} (se {se})");
    }
}

#[test]
fn shifted_nets_beat_pseudo_random_points_on_discrepancy() {
    let m = 256;
    let mut wins = 0;
    let trials = 50;
    for s in 0..trials {
        let ps = shifted(2, m, s);
        let net = lowdisc::low_dimension_projection_quality(&ps).pairs[0].l2_star_discrepancy;
        let mut r = rng::stream(s, 1);
        let rows: Vec<[f64; 2]> = (0..m).map(|_| [r.random(), r.random()]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|p| &p[..]).collect();
        let iid = projection_quality_of_rows(&refs, 2).pairs[0].l2_star_discrepancy;
        wins += (net < iid) as u32;
    }
    assert!(wins as f64 >= 0.9 * trials as f64, "net won only {wins}/{trials}");
}

#[test]
fn csv_round_trip_preserves_points() {
    let ps = lowdisc::randomize(
        &lowdisc::generate_base(3, 16).unwrap(),
        Randomization::OwenScramble,
        42,
    )
    .unwrap();
    let mut buf = Vec::new();
    ps.write_csv(&mut buf).unwrap();
    let back = lowdisc::read_csv(&buf[..]).unwrap();
    assert_eq!(back.len(), 16);
    for (i, row) in back.iter().enumerate() {
        assert_eq!(&row[..], ps.point(i));
    }
}

#[test]
fn projection_report_flags_small_sets() {
    let small = lowdisc::low_dimension_projection_quality(&shifted(3, 64, 1));
    assert!(small.insufficient_points);
    let big = lowdisc::low_dimension_projection_quality(&shifted(3, 1024, 1));
    assert!(!big.insufficient_points);
    assert_eq!(big.pairs.len(), 3);
    for p in &big.pairs {
        // 1024 points over 256 cells: a (0,m,2)-net gives exactly 4 per cell
        // for the first pair; every pair should at least be far below the
        // chi-square mean of an iid sample (255).
        assert!(p.chi_square < 100.0, "{p:?}");
    }
}
