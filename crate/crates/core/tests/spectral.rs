use movingwall::analytic::{psi, OverlapTable};
use movingwall::quad::GaussLegendre;
use movingwall::spectral::{auto_modes, evolve, CouplingMatrix, Generated, SolverConfig};
use movingwall::wave::SpectralView;
use movingwall::{Basis, Error, WallMotion, WaveState, WellModel};
use num_complex::Complex;
use proptest::prelude::*;

fn electron() -> WellModel<f64> {
    WellModel::electron(WallMotion::linear(100.0, 0.5).unwrap()).unwrap()
}

/// `⟨φ_n|∂_t φ_k⟩ L/L̇` with `∂_t` by a centred difference in time.
fn coupling_by_quadrature(n: usize, k: usize) -> f64 {
    let model = electron();
    let (t, dt) = (10.0, 1e-4);
    let phi = |m: usize, x: f64, t: f64| {
        let l = model.length(t).unwrap();
        if x > l {
            return 0.0;
        }
        (2.0 / l).sqrt() * (m as f64 * std::f64::consts::PI * x / l).sin()
    };
    let l = model.length(t).unwrap();
    let rule = GaussLegendre::<f64>::new(20);
    let w = rule.integrate_panels(0.0, l, 64, |x| {
        phi(n, x, t) * (phi(k, x, t + dt) - phi(k, x, t - dt)) / (2.0 * dt)
    });
    w * l / model.wall.velocity(t).unwrap()
}

#[test]
fn coupling_entries_match_quadrature() {
    for (n, k) in [(1, 2), (2, 1), (3, 7), (5, 4), (10, 1), (6, 6)] {
        let closed = CouplingMatrix::<f64>::entry(n, k);
        let oracle = coupling_by_quadrature(n, k);
        assert!((closed - oracle).abs() < 1e-6, "G_{n}{k}: {closed} vs {oracle}");
    }
}

fn projected_moving_mode(model: &WellModel<f64>, n: usize, modes: usize) -> WaveState<f64> {
    let table = OverlapTable::new(model, 0.0, modes + n).unwrap();
    let coeffs = (1..=modes).map(|m| table.overlap(n, m).conj()).collect();
    WaveState::new(Basis::InstantaneousEigen, 0.0, coeffs).unwrap()
}

fn sup_error(model: &WellModel<f64>, state: &WaveState<f64>, n: usize) -> f64 {
    let view = SpectralView::new(state, model).unwrap();
    let l = model.length(state.t).unwrap();
    (1..512)
        .map(|i| {
            let x = l * i as f64 / 512.0;
            (view.value(x) - psi(n, x, state.t, model).unwrap()).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn more_modes_never_worse_against_closed_form() {
    let model = electron();
    let mut last = f64::INFINITY;
    for modes in [50, 100, 200, 400] {
        let cfg = SolverConfig {
            modes: Some(modes),
            leak_threshold: 1.0,
            ..SolverConfig::default()
        };
        let init = projected_moving_mode(&model, 2, modes);
        let run = evolve(&model, &init, &[10.0], &cfg).unwrap();
        let err = sup_error(&model, &run.states[0], 2);
        assert!(err <= last, "K = {modes}: {err:e} after {last:e}");
        assert!(run.norm_drift < 1e-9);
        last = err;
    }
    assert!(last < 1e-4, "{last:e}");
}

#[test]
fn auto_truncation_grows_until_leak_is_small() {
    let model = electron();
    let init = Generated {
        min_modes: 8,
        make: |k: usize| Ok(projected_moving_mode(&model, 1, k)),
    };
    let cfg = SolverConfig {
        leak_threshold: 1e-13,
        ..SolverConfig::default()
    };
    let run = evolve(&model, &init, &[2.0], &cfg).unwrap();
    assert!(run.restarts > 0);
    assert!(run.boundary_weight <= 1e-13);
    let capped = SolverConfig {
        max_modes: auto_modes(&model, 2.0, 8).unwrap(),
        ..cfg
    };
    assert!(matches!(
        evolve(&model, &init, &[2.0], &capped),
        Err(Error::BasisExhausted { .. })
    ));
}

#[test]
fn forward_then_backward_returns() {
    let model = electron();
    let init = WaveState::eigenstate(3, 120, 0.0).unwrap();
    let cfg = SolverConfig {
        modes: Some(120),
        leak_threshold: 1.0,
        ..SolverConfig::default()
    };
    let fwd = evolve(&model, &init, &[5.0], &cfg).unwrap();
    let back = evolve(&model, &fwd.states[0], &[0.0], &cfg).unwrap();
    let worst = back.states[0]
        .coeffs
        .iter()
        .zip(&init.coeffs)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(worst < 10.0 * cfg.rtol, "{worst:e}");
}

#[test]
fn smoothed_wall_converges_to_linear_at_least_as_one_over_gamma() {
    let lin = electron();
    let init = WaveState::eigenstate(2, 100, 0.0).unwrap();
    let cfg = SolverConfig {
        modes: Some(100),
        leak_threshold: 1.0,
        ..SolverConfig::default()
    };
    let t = 5.0;
    let reference = evolve(&lin, &init, &[t], &cfg).unwrap().states.remove(0);
    let distance = |gamma: f64| {
        let model = lin.with_wall(WallMotion::smoothed(100.0, 0.5, gamma).unwrap());
        let s = evolve(&model, &init, &[t], &cfg).unwrap().states.remove(0);
        s.coeffs
            .iter()
            .zip(&reference.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let d: Vec<f64> = [10.0, 100.0, 1000.0].into_iter().map(distance).collect();
    for w in d.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 7.0, "{d:?}");
    }
    assert!(d[2] < 1e-4, "{d:?}");
}

#[test]
fn single_precision_evolution() {
    let model = WellModel::<f32>::electron(WallMotion::linear(100.0, 0.5).unwrap()).unwrap();
    let init = WaveState::eigenstate(1, 40, 0.0).unwrap();
    let cfg = SolverConfig {
        modes: Some(40),
        rtol: 1e-5,
        atol: 1e-7,
        norm_alarm: 1e-3,
        leak_threshold: 1.0,
        ..SolverConfig::default()
    };
    let run = evolve(&model, &init, &[1.0], &cfg).unwrap();
    assert!((run.states[0].norm_sqr() - 1.0).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_conserved(seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8), t in 0.1f64..20.0) {
        let model = electron();
        let mut coeffs: Vec<Complex<f64>> = seed.iter().map(|&(r, i)| Complex::new(r, i)).collect();
        coeffs.resize(64, Complex::new(0.0, 0.0));
        let mut init = WaveState::new(Basis::InstantaneousEigen, 0.0, coeffs).unwrap();
        prop_assume!(init.norm_sqr() > 1e-3);
        init.normalize().unwrap();
        let cfg = SolverConfig { modes: Some(64), leak_threshold: 1.0, ..SolverConfig::default() };
        let run = evolve(&model, &init, &[t], &cfg).unwrap();
        prop_assert!((run.states[0].norm_sqr() - 1.0).abs() < 10.0 * cfg.rtol);
    }

    #[test]
    fn fft_and_dense_products_agree(k in 1usize..300, phase in 0.0f64..6.0) {
        let a: Vec<Complex<f64>> = (0..k).map(|i| Complex::from_polar(1.0 / (1.0 + i as f64), phase * i as f64)).collect();
        let mut d = vec![Complex::new(0.0, 0.0); k];
        let mut f = d.clone();
        CouplingMatrix::<f64>::dense(k).apply(&a, &mut d);
        CouplingMatrix::<f64>::fast(k).apply(&a, &mut f);
        let scale = d.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for (x, y) in d.iter().zip(&f) {
            prop_assert!((x - y).norm() < 1e-11 * scale);
        }
    }
}
