use erw_core::bmpe_besq::{
    besq_simulate, bmpe_endpoint, bmpe_exit, bmpe_exit_grid, bmpe_simulate, bmpe_walk_step, exit_prob_analytic,
    exit_prob_initialized, rayknight_absorption, rayknight_law, BesqConfig, BmpeParams, DriftSchedule, ExitSide,
    Extrema, ExtremumSampler,
};
use erw_core::quadrature::incomplete_beta;
use erw_core::rng::Rng64;
use erw_core::stats::{ks_two_sample, mean_se, wilson_ci};
use erw_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Lower-exit probabilities from the origin with `a = -1`, computed with
/// 30-digit quadrature of the beta integrand: `(theta+, theta-, b, value)`.
#[allow(clippy::approx_constant)]
const EXIT_TABLE: [(f64, f64, f64, f64); 18] = [
    (-0.5, -0.5, 1.0, 0.5),
    (-0.5, -0.5, 2.0, 0.7082085942090711),
    (-0.5, 0.0, 1.0, 0.6464466094067263),
    (-0.5, 0.0, 2.0, 0.8075499102701247),
    (-0.5, 0.5, 1.0, 0.8183098861837906),
    (-0.5, 0.5, 2.0, 0.908278886688428),
    (0.0, -0.5, 1.0, 0.3535533905932738),
    (0.0, -0.5, 2.0, 0.5443310539518174),
    (0.0, 0.0, 1.0, 0.5),
    (0.0, 0.0, 2.0, 0.6666666666666666),
    (0.0, 0.5, 1.0, 0.7071067811865476),
    (0.0, 0.5, 2.0, 0.816496580927726),
    (0.5, -0.5, 1.0, 0.18169011381620934),
    (0.5, -0.5, 2.0, 0.3080680092503573),
    (0.5, 0.0, 1.0, 0.2928932188134525),
    (0.5, 0.0, 2.0, 0.4226497308103742),
    (0.5, 0.5, 1.0, 0.5),
    (0.5, 0.5, 2.0, 0.6081734479693927),
];

fn lower_exit_frequency(params: BmpeParams, init: Extrema, a: f64, b: f64, reps: u64, seed: u64) -> u64 {
    let mut rng = Rng64::seed_from_u64(seed);
    (0..reps).filter(|_| bmpe_exit(params, init, a, b, &mut rng).unwrap().side == ExitSide::Lower).count() as u64
}

#[test]
fn incomplete_beta_matches_high_precision_values() {
    let cases = [
        (0.3, 0.7, 0.1, 0.4333100473342345),
        (2.5, 0.4, 0.9, 0.40925824792740256),
        (0.05, 0.05, 0.5, 0.5),
        (1.5, 1.5, 0.999, 0.9999463316153135),
        (0.5, 2.0, 0.001, 0.04741835351422485),
    ];
    for (p, q, x, v) in cases {
        assert!((incomplete_beta(p, q, x) - v).abs() < 1e-9, "I_{x}({p}, {q})");
    }
}

#[test]
fn analytic_exit_probabilities() {
    for (tp, tm, b, v) in EXIT_TABLE {
        let got = exit_prob_analytic(tp, tm, -1.0, b).unwrap();
        assert!((got - v).abs() < 1e-9, "({tp}, {tm}, {b}): {got} vs {v}");
    }
    assert!((exit_prob_analytic(0.0, 0.0, -1.0, 3.0).unwrap() - 0.75).abs() < 1e-12);
    assert!((exit_prob_analytic(0.5, 0.2, -1.0, 1.0).unwrap() - 0.35930866384055893).abs() < 1e-9);
    assert!(matches!(exit_prob_analytic(1.0, 0.0, -1.0, 1.0), Err(Error::DegenerateParameter(_))));
}

proptest! {
    #[test]
    fn equal_thetas_exit_symmetrically(theta in -3.0f64..0.95) {
        prop_assert!((exit_prob_analytic(theta, theta, -1.0, 1.0).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn mirrored_exit_probabilities_add_to_one(tp in -2.0f64..0.9, tm in -2.0f64..0.9, a in -5.0f64..-0.1, b in 0.1f64..5.0) {
        let p = exit_prob_analytic(tp, tm, a, b).unwrap();
        let q = exit_prob_analytic(tm, tp, -b, -a).unwrap();
        prop_assert!((p + q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn functional_equation_holds_on_the_grid(alpha in -2.0f64..0.9, beta in -2.0f64..0.9, seed in any::<u64>()) {
        let mut rng = Rng64::seed_from_u64(seed);
        let p = bmpe_simulate(BmpeParams::new(alpha, beta).unwrap(), Extrema::ORIGIN, 0.5, 1e-3, &mut rng).unwrap();
        prop_assert_eq!(p.functional_residual(), 0.0);
        for k in 0..p.w.len() {
            prop_assert!(p.lower[k] <= p.w[k] && p.w[k] <= p.upper[k]);
            if k > 0 {
                prop_assert!(p.lower[k] <= p.lower[k - 1] && p.upper[k] >= p.upper[k - 1]);
            }
        }
    }

    #[test]
    fn walk_steps_move_one_unit(alpha in -1.0f64..0.8, beta in -1.0f64..0.8, lo in 0.0f64..2.0, hi in 0.0f64..2.0, seed in any::<u64>()) {
        let mut rng = Rng64::seed_from_u64(seed);
        let p = BmpeParams::new(alpha, beta).unwrap();
        let e = Extrema::new(-lo, 0.0, hi).unwrap();
        let n = bmpe_walk_step(p, e, ExtremumSampler::Exact, &mut rng).unwrap();
        prop_assert!((n.pos.abs() - 1.0).abs() < 1e-12);
        prop_assert!(n.lower <= n.pos && n.pos <= n.upper);
        prop_assert!(n.lower <= e.lower && n.upper >= e.upper);
    }
}

#[test]
fn simulated_exit_frequency_matches_the_formula() {
    let reps = 1_000_000;
    let p = BmpeParams::new(0.5, 0.2).unwrap();
    let lower = lower_exit_frequency(p, Extrema::ORIGIN, -1.0, 1.0, reps, 21);
    let ci = wilson_ci(lower, reps, 0.99).unwrap();
    assert!(ci.contains(0.35930866384055893), "{lower}/{reps}: {ci:?}");
}

#[test]
fn grid_exit_sampler_agrees_with_the_formula() {
    let reps = 20_000;
    let p = BmpeParams::new(0.5, -0.5).unwrap();
    let mut rng = Rng64::seed_from_u64(4);
    let lower = (0..reps)
        .filter(|_| bmpe_exit_grid(p, Extrema::ORIGIN, -1.0, 2.0, 1e-4, &mut rng).unwrap().side == ExitSide::Lower)
        .count() as u64;
    let ci = wilson_ci(lower, reps, 0.999).unwrap();
    assert!(ci.contains(0.3080680092503573), "{lower}/{reps}: {ci:?}");
}

#[test]
#[allow(clippy::approx_constant)]
fn initialized_exit_formulas() {
    let up = |tp, tm, lo, hi, a, b| exit_prob_initialized(tp, tm, lo, hi, a, b).unwrap().upper;
    assert!((up(0.0, 0.3, -2.0, 0.5, -1.0, 3.0) - 0.25).abs() < 1e-12);
    assert!((up(0.7, 0.3, -2.0, 3.0, -1.0, 3.0) - 0.25).abs() < 1e-12);
    assert!((up(0.5, 0.0, -1.0, 0.0, -1.0, 1.0) - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    assert!((up(0.5, 0.0, -1.0, 0.0, -1.0, 1.0) - 0.7071).abs() < 1e-4);
    assert_eq!(exit_prob_initialized(0.0, 0.0, -0.5, 0.5, -1.0, 1.0), Err(Error::UnsupportedOrdering));

    let reps = 1_000_000;
    let p = BmpeParams::new(0.5, 0.0).unwrap();
    let lower = lower_exit_frequency(p, Extrema::new(-1.0, 0.0, 0.0).unwrap(), -1.0, 1.0, reps, 22);
    let ci = wilson_ci(reps - lower, reps, 0.99).unwrap();
    assert!(ci.contains(0.5 * 2f64.sqrt()), "{ci:?}");
}

#[test]
fn both_initialized_orderings_match_simulation() {
    let reps = 200_000;
    let cases = [
        (0.4, -0.3, Extrema::new(-2.0, 0.0, 0.5).unwrap(), -1.0, 1.5),
        (-0.6, 0.2, Extrema::new(-1.5, 0.0, 1.0).unwrap(), -1.0, 2.0),
        (0.3, 0.6, Extrema::new(-0.5, 0.0, 2.0).unwrap(), -1.0, 1.0),
        (0.2, -0.8, Extrema::new(0.0, 0.0, 3.0).unwrap(), -2.0, 1.0),
    ];
    for (k, (tp, tm, e, a, b)) in cases.into_iter().enumerate() {
        let target = exit_prob_initialized(tp, tm, e.lower, e.upper, a, b).unwrap().lower;
        let lower = lower_exit_frequency(BmpeParams::new(tp, tm).unwrap(), e, a, b, reps, 30 + k as u64);
        let ci = wilson_ci(lower, reps, 0.999).unwrap();
        assert!(ci.contains(target), "case {k}: {target} not in {ci:?}");
    }
}

#[test]
fn one_sided_path_has_the_explicit_form() {
    let alpha = 0.6;
    let dt = 1e-4;
    let mut rng = Rng64::seed_from_u64(8);
    for _ in 0..20 {
        let p = bmpe_simulate(BmpeParams::new(alpha, 0.0).unwrap(), Extrema::ORIGIN, 1.0, dt, &mut rng).unwrap();
        let mut running = 0.0f64;
        let mut worst = 0.0f64;
        for k in 0..p.w.len() {
            running = running.max(p.b[k]);
            worst = worst.max((p.w[k] - (p.b[k] + alpha / (1.0 - alpha) * running)).abs());
        }
        assert!(worst < 10.0 * dt.sqrt(), "{worst}");
    }
}

#[test]
fn equal_perturbations_give_a_symmetric_endpoint() {
    let p = BmpeParams::new(0.4, 0.4).unwrap();
    let mut rng = Rng64::seed_from_u64(10);
    let a: Vec<f64> = (0..4_000).map(|_| bmpe_endpoint(p, 1.0, 1e-3, &mut rng).unwrap()).collect();
    let b: Vec<f64> = (0..4_000).map(|_| -bmpe_endpoint(p, 1.0, 1e-3, &mut rng).unwrap()).collect();
    let r = ks_two_sample(&a, &b).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn unperturbed_endpoint_is_standard_normal() {
    let p = BmpeParams::new(0.0, 0.0).unwrap();
    let mut rng = Rng64::seed_from_u64(12);
    let w: Vec<f64> = (0..4_000).map(|_| bmpe_endpoint(p, 1.0, 1e-3, &mut rng).unwrap()).collect();
    let r = erw_core::stats::ks_one_sample(&w, erw_core::stats::normal_cdf).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

fn besq(y0: f64, nu: f64, drift: f64, horizon: f64, dt: f64) -> BesqConfig {
    BesqConfig {
        y0,
        nu,
        drift: DriftSchedule::constant(drift),
        dt,
        horizon,
        absorb_after: None,
        stop_at_absorption: false,
    }
}

#[test]
fn besq_drift_integrates_exactly() {
    let mut rng = Rng64::seed_from_u64(14);
    let zero = besq_simulate(&besq(0.0, 4.0, 0.0, 1.0, 1e-3), &mut rng).unwrap();
    assert!(zero.values.iter().all(|&v| v == 0.0));

    let cfg = besq(0.5, 2.0, 1.5, 1.0, 1e-3);
    let ends: Vec<f64> = (0..20_000).map(|_| besq_simulate(&cfg, &mut rng).unwrap().value_at(1.0)).collect();
    let (mean, se) = mean_se(&ends);
    assert!((mean - 2.0).abs() < 4.0 * se, "{mean} +- {se}");
}

#[test]
fn besq_zero_extinction_probability() {
    // P(sigma_0 <= t) = exp(-y / (2t)) for dY = 2 sqrt(Y) dB.
    let exact = (-0.5f64).exp();
    let cfg = BesqConfig { stop_at_absorption: true, ..besq(1.0, 4.0, 0.0, 1.0, 1e-4) };
    let mut rng = Rng64::seed_from_u64(15);
    let reps = 40_000u64;
    let dead = (0..reps).filter(|_| besq_simulate(&cfg, &mut rng).unwrap().absorbed_at.is_some()).count() as u64;
    let freq = dead as f64 / reps as f64;
    assert!((freq - exact).abs() < 0.01, "{freq} vs {exact}");
}

#[test]
fn rayknight_absorption_law_matches_exit_probabilities() {
    let (tp, tm) = (0.3, -0.2);
    let reps = 20_000u64;
    let mut rng = Rng64::seed_from_u64(16);
    let sigma: Vec<Option<f64>> =
        (0..reps).map(|_| rayknight_absorption(tp, tm, 1.0, 1.0, 1.0, 1e-3, 2.0, &mut rng).unwrap()).collect();
    for b in [1.2, 1.5, 2.0] {
        let hits = sigma.iter().filter(|s| s.is_some_and(|s| s < b)).count() as u64;
        let target = exit_prob_analytic(tp, tm, -1.0, b - 1.0).unwrap();
        let ci = wilson_ci(hits, reps, 0.999).unwrap();
        assert!(ci.contains(target), "b = {b}: {target} not in {ci:?}");
    }
}

#[test]
fn classical_rayknight_profile() {
    // Brownian motion from 1 stopped at 0: BESQ(2) on [0, 1], then BESQ(0).
    let mut rng = Rng64::seed_from_u64(17);
    let reps = 20_000;
    let paths: Vec<_> = (0..reps).map(|_| rayknight_law(0.0, 0.0, 1.0, 1.0, 1.0, 1e-3, 4.0, &mut rng).unwrap()).collect();
    // E[local time at level x] = 2x below the start.
    for x in [0.25, 0.5, 1.0] {
        let v: Vec<f64> = paths.iter().map(|p| p.value_at(x)).collect();
        let (mean, se) = mean_se(&v);
        assert!((mean - 2.0 * x).abs() < 4.0 * se + 0.01, "x = {x}: {mean} +- {se}");
    }
    // The maximum exceeds b with probability 1/b.
    let beyond = paths.iter().filter(|p| p.absorption_time().is_none_or(|s| s >= 2.0)).count() as u64;
    let ci = wilson_ci(beyond, reps, 0.999).unwrap();
    assert!(ci.contains(0.5), "{ci:?}");
}

#[test]
fn basic_walk_step_rules() {
    let mut rng = Rng64::seed_from_u64(18);
    let sampler = ExtremumSampler::RayKnight { dx: 1e-3 };
    let p = BmpeParams::new(0.7, -0.4).unwrap();
    let bulk = Extrema::new(-3.0, 0.0, 2.0).unwrap();
    let mut right = 0u64;
    for _ in 0..20_000 {
        let n = bmpe_walk_step(p, bulk, sampler, &mut rng).unwrap();
        assert_eq!((n.lower, n.upper), (bulk.lower, bulk.upper));
        right += (n.pos > 0.0) as u64;
    }
    assert!(wilson_ci(right, 20_000, 0.999).unwrap().contains(0.5));

    let p = BmpeParams::new(0.0, 0.5).unwrap();
    let at_max = Extrema::new(-3.0, 0.0, 0.0).unwrap();
    let mut right = 0u64;
    for _ in 0..20_000 {
        let n = bmpe_walk_step(p, at_max, sampler, &mut rng).unwrap();
        right += (n.pos > 0.0) as u64;
        if n.pos > 0.0 {
            assert_eq!(n.upper, 1.0);
        } else {
            assert!((0.0..1.0).contains(&n.upper), "{n:?}");
        }
    }
    assert!(wilson_ci(right, 20_000, 0.999).unwrap().contains(0.5));
}

#[test]
fn basic_walk_approximates_the_continuous_endpoint() {
    let theta = 0.3;
    let p = BmpeParams::new(theta, theta).unwrap();
    let sampler = ExtremumSampler::RayKnight { dx: 1e-3 };
    let epsilon: f64 = 0.1;
    let k = (1.0 / (epsilon * epsilon)).floor() as usize;
    let mut rng = Rng64::seed_from_u64(19);
    let reps = 1_000;
    let walk: Vec<f64> = (0..reps)
        .map(|_| {
            let mut e = Extrema::ORIGIN;
            for _ in 0..k {
                e = bmpe_walk_step(p, e, sampler, &mut rng).unwrap();
            }
            // Spread each lattice point over its cell so that KS compares
            // two continuous laws.
            (e.pos + 2.0 * rng.random::<f64>() - 1.0) * epsilon
        })
        .collect();
    let continuous: Vec<f64> = (0..reps).map(|_| bmpe_endpoint(p, 1.0, 1e-4, &mut rng).unwrap()).collect();
    let r = ks_two_sample(&walk, &continuous).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn degenerate_perturbations_are_rejected() {
    assert!(matches!(BmpeParams::new(1.0, 0.0), Err(Error::DegenerateParameter(_))));
    assert!(matches!(BmpeParams::new(0.0, 1.2), Err(Error::DegenerateParameter(_))));
    let mut rng = Rng64::seed_from_u64(0);
    let bad = BmpeParams { alpha: 1.0, beta: 0.0 };
    assert!(bmpe_simulate(bad, Extrema::ORIGIN, 1.0, 1e-3, &mut rng).is_err());
    assert!(rng.random::<u64>() > 0);
}
