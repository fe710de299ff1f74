use movingwall::analytic::Truncation;
use movingwall::observables::weak_momentum;
use movingwall::protocol::{
    bit_error_rate, calibrate, estimator_scaling, loglog_slope, position_estimator, run_protocol,
    simulate_cavity, weak_value_generic, Hypothesis, Operator, PointerModel, PostselectionWindow,
    ProtocolSetup,
};
use movingwall::{AnalyticEvolution, Basis, Error, Evolution, WallMotion, WaveState, WellModel};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn electron() -> WellModel<f64> {
    WellModel::electron(WallMotion::linear(100.0, 0.5).unwrap()).unwrap()
}

fn moving_mode(n: usize, model: &WellModel<f64>) -> AnalyticEvolution<f64> {
    let mut coeffs = vec![Complex::new(0.0, 0.0); n];
    coeffs[n - 1] = Complex::new(1.0, 0.0);
    let s = WaveState::new(Basis::MovingBasis, 0.0, coeffs).unwrap();
    AnalyticEvolution::new(model, &s, Truncation::default()).unwrap()
}

#[test]
fn generic_weak_values() {
    let model = electron();
    let ev = moving_mode(44, &model);
    let pre = ev.state_at(0.3).unwrap();
    let one = weak_value_generic(&Operator::Identity, &pre, &model, 2.27).unwrap();
    assert_eq!(one, Complex::new(1.0, 0.0));
    let x = weak_value_generic(&Operator::Position, &pre, &model, 2.27).unwrap();
    assert_eq!(x, Complex::new(2.27, 0.0));
    let p = weak_value_generic(&Operator::Momentum, &pre, &model, 2.27).unwrap();
    assert_eq!(p, weak_momentum(&pre, &model, 2.27).unwrap());
    let l = model.length(0.3).unwrap();
    assert!((p.re - 0.5 * 2.27 / l).abs() < 1e-10);
    let eye = (0..44)
        .map(|k| (0..44).map(|n| Complex::new(f64::from(u8::from(k == n)), 0.0)).collect())
        .collect();
    let m = weak_value_generic(&Operator::Matrix(eye), &pre, &model, 2.27).unwrap();
    assert!((m - 1.0).norm() < 1e-12);
    assert!(matches!(
        weak_value_generic(&Operator::Identity, &pre, &model, 0.0),
        Err(Error::VanishingPostselection(_))
    ));
}

#[test]
fn estimator_converges_linearly_in_interval() {
    let model = electron();
    let ev = moving_mode(1, &model);
    let exact = weak_momentum(&ev.state_at(0.0).unwrap(), &model, 50.0).unwrap();
    let dts = [1e-2, 1e-3];
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let est = position_estimator(&ev, 50.0, 0.0, dt, 400_000).unwrap();
            (est - exact).norm()
        })
        .collect();
    let slope = loglog_slope(&dts, &errs).unwrap();
    assert!((slope - 1.0).abs() < 0.1, "{errs:?}");
}

#[test]
fn estimator_near_wall_approaches_closed_form() {
    let model = electron();
    let ev = moving_mode(44, &model);
    let est = position_estimator(&ev, 2.27, 0.0, 1e-4, 400_000).unwrap();
    assert!((est.re - 0.011_350).abs() < 1e-4, "{est}");
}

#[test]
fn estimator_for_stationary_state_has_no_real_part() {
    let model = WellModel::electron(WallMotion::fixed(100.0).unwrap()).unwrap();
    let init = WaveState::eigenstate(2, 2, 0.0).unwrap();
    let ev = AnalyticEvolution::new(&model, &init, Truncation::default()).unwrap();
    let coarse = position_estimator(&ev, 30.0, 0.0, 1e-2, 200_000).unwrap();
    let fine = position_estimator(&ev, 30.0, 0.0, 1e-3, 200_000).unwrap();
    let (fine_re, coarse_re): (f64, f64) = (fine.re, coarse.re);
    assert!(fine_re.abs() < coarse_re.abs().max(1e-9));
    assert!(fine_re.abs() < 1e-3 * f64::abs(fine.im));
}

fn setup(p0: f64, p1: f64, ps: f64) -> ProtocolSetup {
    ProtocolSetup {
        window: PostselectionWindow::new(95.0, 0.1).unwrap(),
        t_w: 0.01,
        t_f: 0.02,
        t_s: 5.0 / 137.035999,
        hypotheses: [
            Hypothesis {
                weak: Complex::new(p0, 0.0),
                postselection: ps,
            },
            Hypothesis {
                weak: Complex::new(p1, 0.0),
                postselection: ps,
            },
        ],
    }
}

#[test]
fn pointer_readings_centre_on_weak_value() {
    let pointer = PointerModel::new(1.0, 100.0).unwrap();
    let s = setup(0.0, 2.0, 1.0);
    let run = run_protocol(1, 1_000_000, &pointer, &s, 5).unwrap();
    assert_eq!(run.postselected, 1_000_000);
    let bound = 3.0 * pointer.spread / (run.postselected as f64).sqrt();
    assert!((run.estimate * pointer.coupling - 2.0).abs() < bound);
    let weak = PointerModel::new(1e-9, 100.0).unwrap();
    let run = run_protocol(1, 100_000, &weak, &s, 5).unwrap();
    let mean = run.estimate * weak.coupling;
    assert!(mean.abs() < 3.0 * 100.0 / (run.postselected as f64).sqrt());
    let rest = run_protocol(0, 100_000, &pointer, &s, 9).unwrap();
    assert!(rest.estimate.abs() < 3.0 * 100.0 / (rest.postselected as f64).sqrt());
}

#[test]
fn single_cavity_respects_weakness_and_postselection() {
    let pointer = PointerModel::new(1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let strong = Hypothesis {
        weak: Complex::new(0.0, 0.5),
        postselection: 0.5,
    };
    assert!(matches!(
        simulate_cavity(&pointer, &strong, &mut rng),
        Err(Error::WeaknessViolated { .. })
    ));
    let never = Hypothesis {
        weak: Complex::new(0.01, 0.0),
        postselection: 0.0,
    };
    assert_eq!(simulate_cavity(&pointer, &never, &mut rng).unwrap(), None);
}

#[test]
fn runs_are_reproducible_and_thread_independent() {
    let pointer = PointerModel::new(1.0, 50.0).unwrap();
    let s = setup(0.0, 1.0, 0.01);
    let a = run_protocol(1, 300_000, &pointer, &s, 42).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| run_protocol(1, 300_000, &pointer, &s, 42).unwrap());
    assert_eq!(a, b);
    let c = run_protocol(1, 300_000, &pointer, &s, 43).unwrap();
    assert_ne!(a.estimate, c.estimate);
    assert!(a.before_light_cone);
    assert!(a.records.iter().all(|r| r.acquired_at < s.t_s));
}

#[test]
fn timing_and_postselection_failures() {
    let model = electron();
    let rest_model = model.with_wall(WallMotion::fixed(100.0).unwrap());
    let init = WaveState::eigenstate(11, 11, 0.0).unwrap();
    let rest = AnalyticEvolution::new(&rest_model, &init, Truncation::default()).unwrap();
    let moving = AnalyticEvolution::new(&model, &init, Truncation::default()).unwrap();
    let window = PostselectionWindow::new(95.4545, 0.1).unwrap();
    let late = ProtocolSetup::new(&rest, &moving, window, 0.01, 0.04);
    assert!(matches!(late, Err(Error::Timing { .. })));
    let pointer = PointerModel::new(1.0, 50.0).unwrap();
    let s = setup(0.0, 1.0, 1e-9);
    assert!(matches!(
        run_protocol(0, 10, &pointer, &s, 1),
        Err(Error::NoPostselection(10))
    ));
}

#[test]
fn error_rate_falls_with_ensemble_and_is_symmetric() {
    let pointer = PointerModel::new(1.0, 20.0).unwrap();
    let s = setup(0.0, 1.0, 0.1);
    let rates: Vec<_> = [200, 800, 3200]
        .iter()
        .map(|&n| bit_error_rate(n, 300, &pointer, &s, 3).unwrap())
        .collect();
    for w in rates.windows(2) {
        let slack = 3.0 * (w[0].rate / w[0].trials as f64).sqrt();
        assert!(w[1].rate <= w[0].rate + slack, "{rates:?}");
    }
    let r = &rates[0];
    let spread = 4.0 * ((r.errors as f64) / 2.0).sqrt().max(1.0);
    assert!((r.errors_by_bit[0] as f64 - r.errors_by_bit[1] as f64).abs() < spread, "{r:?}");
}

#[test]
fn calibration_finds_a_passing_size() {
    let pointer = PointerModel::new(1.0, 12.0).unwrap();
    let s = setup(0.0, 1.0, 1.0);
    let cal = calibrate(0.02, 200, &pointer, &s, 8, 100, 1 << 20).unwrap();
    assert!(cal.accepted.upper < 0.02);
    let failing = cal.history.iter().filter(|r| r.upper >= 0.02).map(|r| r.ensemble).max().unwrap();
    assert!(failing < cal.ensemble && cal.ensemble as f64 <= 1.1 * failing as f64 + 1.0);
}

#[test]
fn estimator_error_shrinks_as_inverse_square_root() {
    let pointer = PointerModel::new(1.0, 20.0).unwrap();
    let s = setup(0.0, 1.0, 0.1);
    let points = estimator_scaling(1, &[1_000, 10_000, 100_000], 400, &pointer, &s, 4).unwrap();
    let n: Vec<f64> = points.iter().map(|p| p.mean_postselected).collect();
    let e: Vec<f64> = points.iter().map(|p| p.rms_error).collect();
    let slope = loglog_slope(&n, &e).unwrap();
    assert!((slope + 0.5).abs() < 0.05, "{slope}");
}
