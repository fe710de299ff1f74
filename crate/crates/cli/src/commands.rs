use movingwall::bohm::{integrate_trajectory, DensityCdf, PathTolerances};
use movingwall::observables::{
    current_at, delta_j, light_cone, quantum_potential_at, tail_report, weak_momentum,
};
use movingwall::protocol::{calibrate, run_protocol, PostselectionWindow, ProtocolSetup};
use movingwall::{Backend, Error, SpatialGrid, SpectralView, WallMotion, WellModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{Csv, Outputs};
use crate::scenario::{evolution_for, invalid, moving_in_eigenbasis, Scenario};
use crate::Failure;

type Outcome = Result<Outputs, Failure>;

/// Truncation used to carry a moving-basis state over to a fixed wall.
const STATIC_MODES: usize = 4096;

fn tag(x: f64, t: f64, model: &WellModel<f64>) -> &'static str {
    if x >= model.wall.initial_length() {
        return "inside";
    }
    light_cone(x, t, model).map(|c| c.label()).unwrap_or("inside")
}

/// Turns a node-guard refusal into an empty value.
fn guarded<T>(r: movingwall::Result<T>) -> movingwall::Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NodeGuard { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn last(v: &[f64]) -> f64 {
    v.last().copied().unwrap_or(0.0)
}

#[derive(Serialize)]
struct Snapshot<'a> {
    t: f64,
    basis: &'a str,
    modes: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

pub fn evolve(s: &Scenario) -> Outcome {
    let model = s.model()?;
    let times = s.times()?;
    let ev = s.evolution(&model, last(&times))?;
    let snaps = times
        .iter()
        .map(|&t| {
            let st = ev.state_at(t)?;
            Ok(Snapshot {
                t,
                basis: st.basis.name(),
                modes: st.modes(),
                re: st.coeffs.iter().map(|c| c.re).collect(),
                im: st.coeffs.iter().map(|c| c.im).collect(),
            })
        })
        .collect::<movingwall::Result<Vec<_>>>()?;
    let mut out = Outputs::default();
    out.json("evolve.json", &snaps)?;
    Ok(out)
}

pub fn observables(s: &Scenario) -> Outcome {
    let model = s.model()?;
    let times = s.times()?;
    let xs = s.points()?;
    let ev = s.evolution(&model, last(&times))?;
    let mut density = Csv::new("probability density (1/length)");
    let mut current = Csv::new("probability current (1/time)");
    let mut weak_re = Csv::new("Re of the momentum weak value (momentum)");
    let mut weak_im = Csv::new("Im of the momentum weak value (momentum)");
    let mut potential = Csv::new("quantum potential (energy)");
    for &t in &times {
        let st = ev.state_at(t)?;
        let view = SpectralView::new(&st, &model)?;
        for &x in &xs {
            let c = tag(x, t, &model);
            let w = guarded(weak_momentum(&st, &model, x))?;
            density.row(t, x, Some(view.value(x).norm_sqr()), c);
            current.row(t, x, Some(current_at(&st, &model, x)?), c);
            weak_re.row(t, x, w.map(|w| w.re), c);
            weak_im.row(t, x, w.map(|w| w.im), c);
            potential.row(t, x, guarded(quantum_potential_at(&st, &model, x))?, c);
        }
    }
    let mut out = Outputs::default();
    out.add("density.csv", density.finish());
    out.add("current.csv", current.finish());
    out.add("weak_re.csv", weak_re.finish());
    out.add("weak_im.csv", weak_im.finish());
    out.add("quantum_potential.csv", potential.finish());
    Ok(out)
}

pub fn deltaj(s: &Scenario) -> Outcome {
    let Some(cfg) = &s.deltaj else {
        return Err(Failure::Config("scenario has no [deltaj] section".into()));
    };
    let model = s.model()?;
    let xs = s.points()?;
    let ev = s.evolution(&model, last(&cfg.eps))?;
    let mut csv = Csv::new("j(x, t) - j(x, 0) (1/time); t is the step");
    for &eps in &cfg.eps {
        for &x in &xs {
            csv.row(eps, x, Some(delta_j(ev.as_ref(), x, eps)?), tag(x, eps, &model));
        }
    }
    let mut out = Outputs::default();
    out.add("deltaj.csv", csv.finish());
    Ok(out)
}

pub fn tail(s: &Scenario) -> Outcome {
    let Some(cfg) = &s.tail else {
        return Err(Failure::Config("scenario has no [tail] section".into()));
    };
    let model = s.model()?;
    if !matches!(model.wall, WallMotion::Linear { .. }) {
        return Err(Failure::Config("tail needs a linear wall".into()));
    }
    let initial = s.initial_state()?;
    if initial.basis != movingwall::Basis::InstantaneousEigen {
        return Err(Failure::Config("tail needs an eigen-basis initial state".into()));
    }
    let reports = s
        .times()?
        .iter()
        .map(|&t| tail_report(&initial, t, cfg.threshold, &model, cfg.max_terms))
        .collect::<movingwall::Result<Vec<_>>>()?;
    let mut out = Outputs::default();
    out.json("tail.json", &reports)?;
    Ok(out)
}

pub fn bohm(s: &Scenario) -> Outcome {
    let Some(cfg) = &s.bohm else {
        return Err(Failure::Config("scenario has no [bohm] section".into()));
    };
    let model = s.model()?;
    let times = s.times()?;
    let ev = s.evolution(&model, last(&times))?;
    let starts = match (&cfg.starts, cfg.samples) {
        (Some(v), _) => v.clone(),
        (None, Some(n)) => {
            let grid = SpatialGrid::for_model(4097, &model, 0.0)?;
            let cdf = DensityCdf::new(&ev.state_at(0.0)?, &model, &grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let mut v = cdf.sample(n, &mut rng);
            v.sort_by(f64::total_cmp);
            v
        }
        (None, None) => unreachable!("validated"),
    };
    let mut position = Csv::new("particle position (length); x is the start");
    let mut speed = Csv::new("guidance velocity (velocity); x is the start");
    let mut potential = Csv::new("quantum potential (energy); x is the start");
    for &x0 in &starts {
        let path = integrate_trajectory(x0, ev.as_ref(), &times, PathTolerances::default())?;
        for (i, &t) in path.times.iter().enumerate() {
            let c = tag(path.positions[i], t, &model);
            position.row(t, x0, Some(path.positions[i]), c);
            speed.row(t, x0, Some(path.velocities[i]), c);
            potential.row(t, x0, Some(path.quantum_potential[i]), c);
        }
    }
    let mut out = Outputs::default();
    out.add("bohm_position.csv", position.finish());
    out.add("bohm_velocity.csv", speed.finish());
    out.add("bohm_quantum_potential.csv", potential.finish());
    Ok(out)
}

#[derive(Serialize)]
struct ProtocolReport<'a> {
    setup: &'a ProtocolSetup,
    pointer: movingwall::protocol::PointerModel,
    run: &'a movingwall::protocol::ProtocolRun,
    calibration: Option<movingwall::protocol::Calibration>,
}

pub fn protocol(s: &Scenario) -> Outcome {
    let Some(cfg) = &s.protocol else {
        return Err(Failure::Config("scenario has no [protocol] section".into()));
    };
    let model = s.model()?;
    let initial = s.initial_state()?;
    let rest_model = model.with_wall(WallMotion::fixed(model.wall.initial_length()).map_err(invalid)?);
    let rest_initial = match initial.basis {
        movingwall::Basis::MovingBasis => moving_in_eigenbasis(&initial, &model, STATIC_MODES.max(initial.modes()))?,
        movingwall::Basis::InstantaneousEigen => initial.clone(),
    };
    let rest = evolution_for(s.backend, &rest_model, &rest_initial, cfg.t_f, s)?;
    let moving = evolution_for(s.backend, &model, &initial, cfg.t_f, s)?;
    let window = PostselectionWindow::new(cfg.x_f, cfg.half_width).map_err(invalid)?;
    let setup = ProtocolSetup::new(rest.as_ref(), moving.as_ref(), window, cfg.t_w, cfg.t_f)?;
    let mut run = run_protocol(cfg.bit, cfg.ensemble, &cfg.pointer, &setup, s.seed)?;
    let calibration = match &cfg.calibration {
        Some(c) => Some(calibrate(c.target, c.trials, &cfg.pointer, &setup, s.seed, c.start, c.cap)?),
        None => None,
    };
    let mut out = Outputs::default();
    if cfg.keep_records {
        let mut csv = String::from("# units: au\nindex,acquired_at,reading,momentum\n");
        for r in &run.records {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                r.index,
                crate::output::num(r.acquired_at),
                crate::output::num(r.reading),
                crate::output::num(r.momentum)
            ));
        }
        out.add("protocol_records.csv", csv);
    }
    run.records.clear();
    out.json(
        "protocol.json",
        &ProtocolReport {
            setup: &setup,
            pointer: cfg.pointer,
            run: &run,
            calibration,
        },
    )?;
    Ok(out)
}

/// `|Re Pʷ(x, t)|` over the scenario's lattice.
pub fn fig1(s: &Scenario) -> Outcome {
    let model = s.model()?;
    let times = s.times()?;
    let xs = s.points()?;
    let ev = s.evolution(&model, last(&times))?;
    let mut csv = Csv::new("|Re Pw| (momentum)");
    for &t in &times {
        let st = ev.state_at(t)?;
        for &x in &xs {
            let w = guarded(weak_momentum(&st, &model, x))?;
            csv.row(t, x, w.map(|w| w.re.abs()), tag(x, t, &model));
        }
    }
    let mut out = Outputs::default();
    out.add("fig1.csv", csv.finish());
    Ok(out)
}

/// `Re Pʷ(x_f, t)` for `ψ_n(x, 0)` with the wall moving and with it fixed.
pub fn fig2(s: &Scenario) -> Outcome {
    let Some(cfg) = &s.fig2 else {
        return Err(Failure::Config("scenario has no [fig2] section".into()));
    };
    let model = s.model()?;
    if !matches!(model.wall, WallMotion::Linear { .. }) {
        return Err(Failure::Config("fig2 needs a linear wall".into()));
    }
    let times = s.times()?;
    let initial = s.initial_state()?;
    let t_end = last(&times);
    let moving = evolution_for(s.backend, &model, &initial, t_end, s)?;
    let rest_model = model.with_wall(WallMotion::fixed(model.wall.initial_length()).map_err(invalid)?);
    let start = moving_in_eigenbasis(&initial, &model, cfg.static_modes)?;
    let rest = evolution_for(Backend::Spectral, &rest_model, &start, t_end, s)?;
    let mut out = Outputs::default();
    for (name, ev, m) in [("fig2_moving.csv", &moving, &model), ("fig2_static.csv", &rest, &rest_model)] {
        let mut csv = Csv::new("Re Pw (momentum)");
        for &t in &times {
            let st = ev.state_at(t)?;
            let w = guarded(weak_momentum(&st, m, cfg.x_f))?;
            csv.row(t, cfg.x_f, w.map(|w| w.re), tag(cfg.x_f, t, m));
        }
        out.add(name, csv.finish());
    }
    Ok(out)
}
