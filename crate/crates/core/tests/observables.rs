use movingwall::analytic::{moving_mode_in_eigenbasis, Truncation};
use movingwall::observables::{
    current_at, current_density, delta_j, light_cone, tail_report, truncated_current, velocity,
    weak_momentum, ObservableField,
};
use movingwall::spectral::SolverConfig;
use movingwall::{
    AnalyticEvolution, Basis, Error, Evolution, SpatialGrid, SpectralEvolution, WallMotion,
    WaveState, WellModel,
};
use num_complex::Complex;
use proptest::prelude::*;
use std::f64::consts::PI;

fn electron() -> WellModel<f64> {
    WellModel::electron(WallMotion::linear(100.0, 0.5).unwrap()).unwrap()
}

fn moving_mode(n: usize) -> WaveState<f64> {
    let mut coeffs = vec![Complex::new(0.0, 0.0); n];
    coeffs[n - 1] = Complex::new(1.0, 0.0);
    WaveState::new(Basis::MovingBasis, 0.0, coeffs).unwrap()
}

fn moving_mode_evolution(n: usize, model: &WellModel<f64>) -> AnalyticEvolution<f64> {
    AnalyticEvolution::new(model, &moving_mode(n), Truncation::default()).unwrap()
}

#[test]
fn moving_mode_current_matches_closed_form() {
    let model = electron();
    for n in [1, 11, 44] {
        let ev = moving_mode_evolution(n, &model);
        for t in [0.0, 3.0, 50.0] {
            let state = ev.state_at(t).unwrap();
            let grid = SpatialGrid::for_model(513, &model, t).unwrap();
            let j = current_density(&state, &model, &grid).unwrap();
            let l = model.length(t).unwrap();
            for (x, got) in grid.points().iter().zip(&j) {
                let want = 2.0 * 0.5 * x * (n as f64 * PI * x / l).sin().powi(2) / (l * l);
                assert!((got - want).abs() < 1e-10, "n={n} t={t} x={x}");
            }
        }
    }
}

#[test]
fn continuity_holds_for_a_superposition() {
    let model = electron();
    let coeffs = vec![
        Complex::new(0.6, 0.0),
        Complex::new(0.0, 0.5),
        Complex::new(0.3, -0.2),
        Complex::new(0.1, 0.4),
    ];
    let mut init = WaveState::new(Basis::MovingBasis, 0.0, coeffs).unwrap();
    init.normalize().unwrap();
    let ev = AnalyticEvolution::new(&model, &init, Truncation::default()).unwrap();
    let t = 7.0;
    let density = |x: f64, t: f64| {
        let s = ev.state_at(t).unwrap();
        movingwall::SpectralView::new(&s, &model).unwrap().value(x).norm_sqr()
    };
    let fd = |x: f64, h: f64| (density(x, t + h) - density(x, t - h)) / (2.0 * h);
    let state = ev.state_at(t).unwrap();
    let l = model.length(t).unwrap();
    let mut worst: f64 = 0.0;
    for i in 1..64 {
        let x = l * i as f64 / 64.0;
        let h = 1e-3;
        let d_rho = (4.0 * fd(x, h / 2.0) - fd(x, h)) / 3.0;
        let dx = 1e-4;
        let d_j = (current_at(&state, &model, x + dx).unwrap()
            - current_at(&state, &model, x - dx).unwrap())
            / (2.0 * dx);
        worst = worst.max((d_rho + d_j).abs());
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn weak_momentum_of_moving_mode() {
    let model = electron();
    let state = moving_mode_evolution(44, &model).state_at(0.0).unwrap();
    let pw = weak_momentum(&state, &model, 2.27).unwrap();
    assert!((pw.re - 0.011_350).abs() < 1e-9, "{}", pw.re);
    let x = 100.0 / 88.0;
    assert!(weak_momentum(&state, &model, x).unwrap().im.abs() < 1e-10);
    let n = 3;
    let state = moving_mode_evolution(n, &model).state_at(10.0).unwrap();
    let l = 105.0;
    let x = 20.0;
    let im = -(PI * n as f64 / l) / (n as f64 * PI * x / l).tan();
    assert!((weak_momentum(&state, &model, x).unwrap().im - im).abs() < 1e-12);
}

#[test]
fn moving_mode_weak_momentum_is_linear_in_x() {
    let model = electron();
    let n = 5;
    let t = 30.0;
    let state = moving_mode_evolution(n, &model).state_at(t).unwrap();
    let l = model.length(t).unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 1..200 {
        let x = l * i as f64 / 200.0;
        if let Ok(pw) = weak_momentum(&state, &model, x) {
            xs.push(x);
            ys.push(pw.re);
        }
    }
    let n_pts = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n_pts, ys.iter().sum::<f64>() / n_pts);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope - 0.5 / l).abs() < 1e-8 * (0.5 / l), "{slope}");
}

#[test]
fn stationary_state_has_no_flow() {
    let model = WellModel::electron(WallMotion::fixed(100.0).unwrap()).unwrap();
    let init = WaveState::eigenstate(3, 3, 0.0).unwrap();
    let ev = AnalyticEvolution::new(&model, &init, Truncation::default()).unwrap();
    for x in [5.0_f64, 17.0, 71.0] {
        let s = ev.state_at(2.0).unwrap();
        assert!(weak_momentum(&s, &model, x).unwrap().re.abs() < 1e-15);
        assert!(delta_j(&ev, x, 0.1).unwrap().abs() < 1e-20);
    }
}

/// `dj/dt` at `t = 0` for `ψ_n`, differentiated by hand from the closed form.
fn current_rate(n: usize, x: f64) -> f64 {
    let (q, l) = (0.5, 100.0);
    let u = n as f64 * PI * x / l;
    -4.0 * q * q * x / l.powi(3) * (u.sin().powi(2) + u * u.sin() * u.cos())
}

#[test]
fn delta_j_slope_matches_exact_rate() {
    let model = electron();
    for (n, x) in [(1, 1.0), (1, 0.5), (5, 2.0)] {
        let ev = moving_mode_evolution(n, &model);
        let f = |eps: f64| delta_j(&ev, x, eps).unwrap() / eps;
        let extrapolated = (10.0 * f(1e-4) - f(1e-3)) / 9.0;
        let exact = current_rate(n, x);
        assert!((extrapolated - exact).abs() < 1e-6 * exact.abs(), "n={n} x={x}");
    }
    let asymptotic = -8.0 * PI * PI * 0.25 / 1e10;
    assert!((asymptotic + 1.97392e-9).abs() < 1e-14);
    assert!((current_rate(1, 1.0) - asymptotic).abs() < 1e-3 * asymptotic.abs());
}

#[test]
fn velocity_is_real_part_over_mass() {
    let model = WellModel::new(2.0, 137.0, WallMotion::linear(10.0, 0.3).unwrap()).unwrap();
    let state = moving_mode_evolution(2, &model).state_at(1.0).unwrap();
    let v = velocity(&state, &model, 3.0).unwrap();
    let pw = weak_momentum(&state, &model, 3.0).unwrap();
    assert_eq!(v, pw.re / 2.0);
    assert!((v - 0.3 * 3.0 / 10.3).abs() < 1e-14);
}

#[test]
fn light_cone_examples() {
    let model = electron();
    let tag = light_cone(100.0 - model.light_speed * 0.1, 0.05, &model).unwrap();
    assert!(!tag.inside && (tag.t_s - 0.1).abs() < 1e-12);
    let tag = light_cone(0.0, 0.0, &model).unwrap();
    assert!((tag.t_s - 0.729_736).abs() < 1e-6);
    assert!(light_cone(0.0, tag.t_s, &model).unwrap().inside);
}

#[test]
fn wall_effect_before_light_cone() {
    let model = electron();
    let init = WaveState::eigenstate(11, 11, 0.0).unwrap();
    let ev = AnalyticEvolution::with_modes(&model, &init, 40_000).unwrap();
    for (x, t) in [(95.4545, 0.03), (86.3636, 0.09), (50.0, 0.33)] {
        assert!(!light_cone(x, t, &model).unwrap().inside);
        let pw = weak_momentum(&ev.state_at(t).unwrap(), &model, x).unwrap();
        assert!(pw.re.abs() > 1e-6, "x={x} t={t}: {}", pw.re);
    }
}

#[test]
fn field_invariants() {
    let model = electron();
    let init = moving_mode_in_eigenbasis(4, 0.0, 200, &model).unwrap();
    let cfg = SolverConfig {
        modes: Some(200),
        leak_threshold: 1.0,
        ..SolverConfig::default()
    };
    let ev = SpectralEvolution::new(&model, &init, 2.0, 1, &cfg).unwrap();
    let state = ev.state_at(2.0).unwrap();
    let grid = SpatialGrid::for_model(2049, &model, 2.0).unwrap();
    let field = ObservableField::compute(&state, &model, &grid).unwrap();
    assert!(field.density.iter().all(|r| *r >= 0.0));
    assert!((field.total_probability() - 1.0).abs() < 1e-6);
    for i in 0..grid.len() {
        if let Some(v) = field.velocity[i] {
            assert!((v * field.density[i] - field.current[i]).abs() < 1e-12);
        }
    }
    assert_eq!(field.velocity[0], None);
}

#[test]
fn tail_cut_at_start_and_after_projection() {
    let model = electron();
    let init = WaveState::eigenstate(11, 11, 0.0).unwrap();
    let start = tail_report(&init, 0.0, 1e-10, &model, 1 << 16).unwrap();
    assert!(!start.projected);
    assert!((617..=683).contains(&start.cut), "{}", start.cut);
    assert!(start.discarded < 1e-10);
    let t_s = 100.0 / model.light_speed;
    let half = tail_report(&init, t_s / 2.0, 1e-10, &model, 1 << 16).unwrap();
    assert!(half.projected);
    assert!((617..=683).contains(&half.cut), "{}", half.cut);
    let v = movingwall::analytic::eigen_velocity(650, t_s, &model).unwrap();
    assert!(v / model.light_speed < 0.15);
}

#[test]
fn tail_report_needs_linear_wall() {
    let model = WellModel::electron(WallMotion::fixed(100.0).unwrap()).unwrap();
    let init = WaveState::eigenstate(1, 1, 0.0).unwrap();
    assert!(matches!(
        tail_report(&init, 0.0, 1e-10, &model, 1000),
        Err(Error::WallVariant(_))
    ));
}

#[test]
fn current_converges_with_tail() {
    let model = electron();
    let init = WaveState::eigenstate(11, 11, 0.0).unwrap();
    let ev = AnalyticEvolution::new(&model, &init, Truncation::new(1e-13, 1 << 16).unwrap()).unwrap();
    let state = ev.state_at(0.2).unwrap();
    let full = current_at(&state, &model, 80.0).unwrap();
    let diffs: Vec<f64> = [100, 400, 1600]
        .iter()
        .map(|&k| (truncated_current(&state, &model, 80.0, k).unwrap() - full).abs())
        .collect();
    assert!(diffs[2] < diffs[0], "{diffs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_momentum_times_density_is_current(
        seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6),
        u in 0.01f64..0.99,
        t in 0.0f64..50.0,
    ) {
        let model = electron();
        let coeffs: Vec<Complex<f64>> = seed.iter().map(|&(a, b)| Complex::new(a, b)).collect();
        let mut state = WaveState::new(Basis::MovingBasis, t, coeffs).unwrap();
        prop_assume!(state.norm_sqr() > 1e-3);
        state.normalize().unwrap();
        let x = u * model.length(t).unwrap();
        let view = movingwall::SpectralView::new(&state, &model).unwrap();
        let rho = view.value(x).norm_sqr();
        match weak_momentum(&state, &model, x) {
            Ok(pw) => {
                let j = current_at(&state, &model, x).unwrap();
                prop_assert!((pw.re * rho / model.mass - j).abs() <= 1e-12 * (1.0 + j.abs()));
            }
            Err(Error::NodeGuard { .. }) => prop_assert!(rho < 1e-12),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn light_cone_tag_is_pure(x in 0.0f64..99.9, t in 0.0f64..2.0) {
        let model = electron();
        let a = light_cone(x, t, &model).unwrap();
        prop_assert_eq!(a, light_cone(x, t, &model).unwrap());
        prop_assert!(a.t_s > 0.0);
        prop_assert_eq!(a.inside, t >= (100.0 - x) / model.light_speed);
    }
}
