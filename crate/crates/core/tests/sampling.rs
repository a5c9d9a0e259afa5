use std::f64::consts::{FRAC_PI_4, SQRT_2};

use rmc_core::expression::{parse, EvalError, VarOrder};
use rmc_core::integrator::{integrate_direct, integrate_screened};
use rmc_core::model::{build_piecewise_proposal, validate_target, BoundingBox, SampleBatch, ScalarField, TargetSpec};
use rmc_core::samplers::{grmc_sample, srmc_sample, srmc_trace};
use rmc_core::stats::{chi_square_box, chi_square_from_counts, ks_test_1d, summarize, Alpha};

const GAUSS: &str = "exp(-(x^2 - 0.4*x*y + y^2)/(2*0.96))/(2*pi*sqrt(0.96))";

fn sine() -> TargetSpec {
    let x = VarOrder::new(["x"]).unwrap();
    let f = ScalarField::parse("sin(x)/sqrt(2)", &x).unwrap();
    validate_target(f, BoundingBox::parse("pi/4:3*pi/4").unwrap(), Some(1.1)).unwrap()
}

fn gauss(c: f64) -> TargetSpec {
    let f = ScalarField::parse(GAUSS, &VarOrder::new(["x", "y"]).unwrap()).unwrap();
    validate_target(f, BoundingBox::parse("-5:5,-5:5").unwrap(), Some(c)).unwrap()
}

fn sine_cdf(x: f64) -> Result<f64, EvalError> {
    Ok(0.5 - x.cos() / SQRT_2)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn same_run(a: &SampleBatch, b: &SampleBatch) -> bool {
    let bits = |s: &SampleBatch| s.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    bits(a) == bits(b)
        && a.meta.proposals_drawn == b.meta.proposals_drawn
        && a.meta.accepted == b.meta.accepted
        && a.meta.bound_c == b.meta.bound_c
}

#[test]
fn sine_samples_follow_the_target() {
    let target = sine();
    let mut passes = 0;
    for seed in 0..20 {
        let batch = srmc_sample(&target, 10_000, seed).unwrap();
        let report = ks_test_1d(&sorted(batch.column(0)), sine_cdf, Alpha::P01).unwrap();
        assert_eq!(report.pass, report.statistic < report.threshold);
        passes += report.pass as usize;
    }
    assert!(passes >= 19, "{passes}/20");
}

#[test]
fn accepted_points_are_reconstructible() {
    let target = sine();
    let trace = srmc_trace(&target, 3000, 77).unwrap();
    let batch = srmc_sample(&target, 1000, 77).unwrap();
    let accepted: Vec<&Vec<f64>> = trace.iter().filter(|t| t.accepted).map(|t| &t.point).collect();
    assert!(accepted.len() >= 1000);
    for (row, t) in batch.rows().zip(&accepted) {
        assert_eq!(row, t.as_slice());
    }
    for t in &trace {
        assert!(target.support().contains(&t.point));
        let f = target.field().eval(&t.point).unwrap();
        assert_eq!(t.accepted, f > t.y);
        assert!((0.0..target.bound_c()).contains(&t.y));
    }
}

#[test]
fn acceptance_rate_matches_integral_ratio() {
    // both targets integrate to 1 over the box (the Gaussian up to a 1e-6 tail)
    for (target, expected) in [(sine(), 1.0 / (1.1 * std::f64::consts::PI / 2.0)), (gauss(0.1657), 0.0603500)] {
        let batch = srmc_sample(&target, 100_000, 5).unwrap();
        let m = &batch.meta;
        let sd = (expected * (1.0 - expected) / m.proposals_drawn as f64).sqrt();
        assert!((m.acceptance_rate - expected).abs() < 3.0 * sd, "{} vs {expected}", m.acceptance_rate);
        assert_eq!(m.accepted, batch.len() as u64);
        assert!(m.accepted <= m.proposals_drawn);
        assert!(batch.rows().all(|r| target.support().contains(r)));
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let target = gauss(0.1657);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| srmc_sample(&target, 50_000, 0xABCDEF).unwrap())
    };
    let one = run(1);
    assert!(same_run(&one, &run(8)));
    assert!(same_run(&one, &run(3)));
    assert!(same_run(&one, &srmc_sample(&target, 50_000, 0xABCDEF).unwrap()));
    assert!(!same_run(&one, &srmc_sample(&target, 50_000, 0xABCDEE).unwrap()));
}

#[test]
fn histogram_matches_independent_quadrature() {
    // 64 bins, 160 midpoint nodes per bin (just over 10^4 in total), dof 63
    let target = sine();
    let batch = srmc_sample(&target, 100_000, 2024).unwrap();
    let (lo, hi) = (FRAC_PI_4, 3.0 * FRAC_PI_4);
    let width = (hi - lo) / 64.0;
    let nodes = 160;
    let mass: Vec<f64> = (0..64)
        .map(|b| {
            let step = width / nodes as f64;
            (0..nodes)
                .map(|i| (lo + b as f64 * width + (i as f64 + 0.5) * step).sin() / SQRT_2 * step)
                .sum()
        })
        .collect();
    let total: f64 = mass.iter().sum();
    let expected: Vec<f64> = mass.iter().map(|m| m / total * 1e5).collect();
    let mut observed = vec![0.0; 64];
    for x in batch.column(0) {
        observed[(((x - lo) / (hi - lo) * 64.0) as usize).min(63)] += 1.0;
    }
    let report = chi_square_from_counts(&observed, &expected).unwrap();
    assert_eq!(report.dof, Some(63));
    assert!(report.pass, "{}", report.statistic);

    let own = chi_square_box(&batch, &target, &[64]).unwrap();
    assert!(own.pass);
    assert!((own.statistic - report.statistic).abs() < 0.05, "{} vs {}", own.statistic, report.statistic);
}

#[test]
fn piecewise_sampler_follows_the_target() {
    let target = gauss(0.1657);
    let proposal = build_piecewise_proposal(target.field(), target.support(), &[16, 16]).unwrap();
    let batch = grmc_sample(target.field(), &proposal, 100_000, 3).unwrap();
    let report = chi_square_box(&batch, &target, &[8, 8]).unwrap();
    assert!(report.pass, "{report:?}");
    let rho = summarize(&batch).unwrap().correlation(0, 1).unwrap();
    assert!((rho - 0.2).abs() < 0.02, "{rho}");
    let srmc = srmc_sample(&target, 10_000, 3).unwrap();
    assert!(batch.meta.acceptance_rate > 5.0 * srmc.meta.acceptance_rate);
}

#[test]
fn single_cell_piecewise_equals_simple_sampler() {
    let target = sine();
    let proposal = build_piecewise_proposal(target.field(), target.support(), &[1]).unwrap();
    let h = proposal.max_height();
    let matched = validate_target(target.field().clone(), target.support().clone(), Some(h)).unwrap();
    for seed in [0, 1, 99] {
        let a = grmc_sample(target.field(), &proposal, 20_000, seed).unwrap();
        let b = srmc_sample(&matched, 20_000, seed).unwrap();
        assert!(same_run(&a, &b), "seed {seed}");
    }
}

#[test]
fn chi_square_flags_wrong_target() {
    let target = gauss(0.1657);
    let vars = VarOrder::new(["x", "y"]).unwrap();
    let wrong = ScalarField::parse("exp(-(x^2 + y^2)/2)", &vars).unwrap();
    let wrong = validate_target(wrong, target.support().clone(), Some(1.0)).unwrap();
    let batch = srmc_sample(&wrong, 50_000, 4).unwrap();
    assert!(!chi_square_box(&batch, &target, &[8, 8]).unwrap().pass);
}

#[test]
fn chi_square_runs_in_three_dimensions() {
    let vars = VarOrder::new(["x", "y", "z"]).unwrap();
    let f = ScalarField::parse("1 + x*y*z", &vars).unwrap();
    let target = validate_target(f, BoundingBox::parse("0:1,0:1,0:1").unwrap(), None).unwrap();
    let batch = srmc_sample(&target, 40_000, 8).unwrap();
    let report = chi_square_box(&batch, &target, &[4, 4, 4]).unwrap();
    assert_eq!(report.dof, Some(63));
    assert!(report.pass);
}

#[test]
fn screened_and_direct_estimators_agree() {
    let vars = VarOrder::new(["x", "y"]).unwrap();
    let g = ScalarField::parse("x*y", &vars).unwrap();
    let region = parse("y^2 <= x and y >= 0 and y >= x - 2", &vars).unwrap();
    let bx = BoundingBox::parse("0:4,0:2").unwrap();
    for seed in 0..3 {
        let s = integrate_screened(&g, &region, &bx, 100_000, 10, seed).unwrap();
        let d = integrate_direct(&g, &region, &bx, 100_000, 10, seed).unwrap();
        let band = 3.0 * (s.std_error.unwrap().powi(2) + d.std_error.unwrap().powi(2)).sqrt();
        assert!((s.value - d.value).abs() <= band, "seed {seed}: {} vs {}", s.value, d.value);
        assert!(s.n_in_region <= s.n_screened);
    }
}

#[test]
fn screened_error_shrinks_with_n() {
    let vars = VarOrder::new(["x", "y"]).unwrap();
    let g = ScalarField::parse("x*y", &vars).unwrap();
    let region = parse("y^2 <= x and y >= 0 and y >= x - 2", &vars).unwrap();
    let bx = BoundingBox::parse("0:4,0:2").unwrap();
    let deviation = |n| {
        (0..10)
            .map(|seed| (integrate_screened(&g, &region, &bx, n, 10, seed).unwrap().value - 6.0).abs())
            .sum::<f64>()
    };
    assert!(deviation(100_000) < deviation(100));
}
