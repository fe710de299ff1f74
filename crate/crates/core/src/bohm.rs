//! Bohmian mechanics: polar form, quantum potential and trajectories.
//!
//! The polar form here is `ψ = R exp(iσ)` with `R = |ψ|` the *amplitude*;
//! `density` always means `|ψ|² = R²`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::evolution::Evolution;
use crate::model::{SpatialGrid, WellModel};
use crate::observables::{
    hydrodynamic_velocity, quantum_potential_local, weak_momentum_local, LocalObservables,
    NODE_GUARD,
};
use crate::ode::{Dopri5, Tolerances};
use crate::scalar::Real;
use crate::wave::{LocalWave, SpectralView, WaveState};

pub use crate::observables::velocity as bohm_velocity;

/// Trajectories closer than this fraction of `L(t)` to a node are aborted.
pub const NODE_APPROACH: f64 = 1e-3;

/// Ensembles larger than this are advanced in parallel.
const PARALLEL_ENSEMBLE: usize = 1024;

/// Amplitude `R` and phase action `σ` on a grid.
///
/// `σ` is the running integral of `m v` along `x` (trapezoidal rule), so it
/// is continuous everywhere, including through nodes where `arg ψ` would
/// jump by `π`. Guarded nodes take the velocity interpolated from their
/// neighbours. The constant is fixed by `σ = 0` at `reference`, the grid
/// index of the largest amplitude.
#[derive(Debug, Clone)]
pub struct PolarField<T> {
    pub grid: SpatialGrid<T>,
    pub amplitude: Vec<T>,
    pub phase: Vec<T>,
    pub reference: usize,
}

impl<T: Real> PolarField<T> {
    pub fn compute(state: &WaveState<T>, model: &WellModel<T>, grid: &SpatialGrid<T>) -> Result<Self> {
        let locals = locals_on(state, model, grid)?;
        let amplitude: Vec<T> = locals.iter().map(|lw| lw.psi.norm()).collect();
        let reference = amplitude
            .iter()
            .enumerate()
            .fold(0, |best, (i, a)| if *a > amplitude[best] { i } else { best });
        let floor = T::lit(NODE_GUARD) * amplitude[reference] * amplitude[reference];
        let raw: Vec<Option<T>> = locals
            .iter()
            .map(|lw| LocalObservables::from_local(lw, model.mass, floor).velocity(model.mass))
            .collect();
        let v = fill_gaps(&raw)?;
        let h = grid.spacing();
        let half = T::lit(0.5);
        let mut phase = vec![T::zero(); v.len()];
        for i in 1..v.len() {
            phase[i] = phase[i - 1] + half * h * model.mass * (v[i - 1] + v[i]);
        }
        let shift = phase[reference];
        for p in &mut phase {
            *p = *p - shift;
        }
        Ok(Self {
            grid: grid.clone(),
            amplitude,
            phase,
            reference,
        })
    }
}

/// Linear interpolation over `None` entries; ends copy the nearest value.
fn fill_gaps<T: Real>(raw: &[Option<T>]) -> Result<Vec<T>> {
    let known: Vec<(usize, T)> = raw
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if known.is_empty() {
        return Err(invalid("state", "density vanishes on the whole grid"));
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut seg = 0;
    for i in 0..raw.len() {
        while seg + 1 < known.len() && known[seg + 1].0 <= i {
            seg += 1;
        }
        let (i0, v0) = known[seg];
        out.push(match known.get(seg + 1) {
            Some(&(i1, v1)) if i > i0 => {
                let w = T::from_usize_lossy(i - i0) / T::from_usize_lossy(i1 - i0);
                v0 + (v1 - v0) * w
            }
            _ => v0,
        });
    }
    Ok(out)
}

fn locals_on<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    grid: &SpatialGrid<T>,
) -> Result<Vec<LocalWave<T>>> {
    grid.check_matches(model, state.t)?;
    let view = SpectralView::new(state, model)?;
    Ok(grid.points().par_iter().map(|&x| view.local(x)).collect())
}

/// `Q(x)` on a grid; `None` where the density is below the node guard
/// relative to its largest value on the grid.
pub fn quantum_potential<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    grid: &SpatialGrid<T>,
) -> Result<Vec<Option<T>>> {
    let locals = locals_on(state, model, grid)?;
    let peak = locals
        .iter()
        .map(|lw| lw.psi.norm_sqr())
        .fold(T::zero(), T::max);
    let floor = T::lit(NODE_GUARD) * peak;
    Ok(locals
        .iter()
        .map(|lw| LocalObservables::from_local(lw, model.mass, floor).quantum_potential)
        .collect())
}

/// A single Bohmian path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub x0: T,
    pub times: Vec<T>,
    pub positions: Vec<T>,
    pub velocities: Vec<T>,
    pub quantum_potential: Vec<T>,
}

/// Integration accuracy for trajectories; `atol` is relative to `L₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTolerances<T> {
    pub rtol: T,
    pub atol: T,
}

impl<T: Real> Default for PathTolerances<T> {
    fn default() -> Self {
        Self {
            rtol: T::lit(1e-11),
            atol: T::lit(1e-13),
        }
    }
}

impl<T: Real> PathTolerances<T> {
    fn absolute(&self, model: &WellModel<T>) -> Result<Tolerances<T>> {
        Tolerances::new(self.rtol, self.atol * model.wall.initial_length())
    }
}

/// Guidance velocity at `x`, failing outside `(0, L(t))` or on a node.
fn guidance<T: Real>(view: &SpectralView<T>, mass: T, x: T, t: T, x0: T) -> Result<(LocalWave<T>, T)> {
    if !(x > T::zero() && x < view.length()) {
        return Err(Error::LeftDomain {
            x0: x0.to_f64_lossy(),
            t: t.to_f64_lossy(),
        });
    }
    let lw = view.local(x);
    if !(lw.psi.norm_sqr() > T::zero()) {
        return Err(Error::NodeApproach {
            x0: x0.to_f64_lossy(),
            t: t.to_f64_lossy(),
            distance: 0.0,
        });
    }
    Ok((lw, hydrodynamic_velocity(weak_momentum_local(&lw), mass)))
}

/// Distance to the nearest zero of `ρ`, estimated as `2ρ/|ρ'|` (exact to
/// leading order at a simple zero of `ψ`, large elsewhere).
fn node_distance<T: Real>(lw: &LocalWave<T>) -> T {
    let rho = lw.psi.norm_sqr();
    let slope = T::lit(2.0) * (lw.psi.conj() * lw.d1).re;
    T::lit(2.0) * rho / slope.abs()
}

fn check_node<T: Real>(lw: &LocalWave<T>, length: T, x0: T, t: T) -> Result<()> {
    let distance = node_distance(lw);
    if distance < T::lit(NODE_APPROACH) * length {
        return Err(Error::NodeApproach {
            x0: x0.to_f64_lossy(),
            t: t.to_f64_lossy(),
            distance: distance.to_f64_lossy(),
        });
    }
    Ok(())
}

fn check_times<T: Real>(times: &[T], start: T) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("times", "need at least one sample time"));
    }
    if times[0] < start || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("times", "must increase strictly from the start of the evolution"));
    }
    Ok(())
}

/// Integrates `dx/dt = v(x, t)` from `x0` at the start of the evolution's
/// window and samples the path at `times` (strictly increasing).
///
/// Aborts with [`Error::NodeApproach`] once an accepted step lands within
/// [`NODE_APPROACH`]` · L(t)` of a node.
pub fn integrate_trajectory<T: Real, E: Evolution<T> + ?Sized>(
    x0: T,
    evolution: &E,
    times: &[T],
    tol: PathTolerances<T>,
) -> Result<Trajectory<T>> {
    let model = *evolution.model();
    let (t0, _) = evolution.window();
    check_times(times, t0)?;
    let t_end = times[times.len() - 1];
    evolution.check_time(t_end)?;
    let mass = model.mass;
    let rhs = |t: T, y: &[T], dy: &mut [T]| -> Result<()> {
        let view = SpectralView::new(&evolution.state_at(t)?, &model)?;
        dy[0] = guidance(&view, mass, y[0], t, x0)?.1;
        Ok(())
    };
    let sample = |t: T, x: T| -> Result<(T, T)> {
        let view = SpectralView::new(&evolution.state_at(t)?, &model)?;
        let (lw, v) = guidance(&view, mass, x, t, x0)?;
        check_node(&lw, view.length(), x0, t)?;
        Ok((v, quantum_potential_local(&lw, mass)))
    };
    sample(t0, x0)?;
    let mut traj = Trajectory {
        x0,
        times: times.to_vec(),
        positions: Vec::with_capacity(times.len()),
        velocities: Vec::with_capacity(times.len()),
        quantum_potential: Vec::with_capacity(times.len()),
    };
    let record = |t: T, x: T, traj: &mut Trajectory<T>| -> Result<()> {
        let (v, q) = sample(t, x)?;
        traj.positions.push(x);
        traj.velocities.push(v);
        traj.quantum_potential.push(q);
        Ok(())
    };
    let mut next = 0;
    while next < times.len() && times[next] == t0 {
        record(t0, x0, &mut traj)?;
        next += 1;
    }
    if next == times.len() {
        return Ok(traj);
    }
    let mut solver = Dopri5::new(rhs, t0, vec![x0], t_end, tol.absolute(&model)?)?;
    while next < times.len() {
        solver.step(rhs)?;
        let t = solver.t();
        sample(t, solver.y()[0])?;
        while next < times.len() && times[next] <= t {
            let x = if times[next] == t {
                solver.y()[0]
            } else {
                solver.dense(times[next])[0]
            };
            record(times[next], x, &mut traj)?;
            next += 1;
        }
    }
    Ok(traj)
}

/// Transports many starting points at once; returns positions indexed as
/// `[time][particle]`. Node approach is checked at the sample times.
pub fn transport_ensemble<T: Real, E: Evolution<T> + ?Sized>(
    x0: &[T],
    evolution: &E,
    times: &[T],
    tol: PathTolerances<T>,
) -> Result<Vec<Vec<T>>> {
    if x0.is_empty() {
        return Err(invalid("x0", "empty ensemble"));
    }
    let model = *evolution.model();
    let (t0, _) = evolution.window();
    check_times(times, t0)?;
    let t_end = times[times.len() - 1];
    evolution.check_time(t_end)?;
    let mass = model.mass;
    let velocities = |t: T, y: &[T], dy: &mut [T]| -> Result<()> {
        let view = SpectralView::new(&evolution.state_at(t)?, &model)?;
        let eval = |(i, (x, d)): (usize, (&T, &mut T))| -> Result<()> {
            *d = guidance(&view, mass, *x, t, x0[i])?.1;
            Ok(())
        };
        if y.len() > PARALLEL_ENSEMBLE {
            y.par_iter().zip(dy.par_iter_mut()).enumerate().try_for_each(eval)
        } else {
            y.iter().zip(dy.iter_mut()).enumerate().try_for_each(eval)
        }
    };
    let verify = |t: T, y: &[T]| -> Result<()> {
        let view = SpectralView::new(&evolution.state_at(t)?, &model)?;
        y.par_iter().zip(x0).try_for_each(|(&x, &start)| {
            let (lw, _) = guidance(&view, mass, x, t, start)?;
            check_node(&lw, view.length(), start, t)
        })
    };
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] == t0 {
        verify(t0, x0)?;
        out.push(x0.to_vec());
        next += 1;
    }
    if next == times.len() {
        return Ok(out);
    }
    let mut solver = Dopri5::new(velocities, t0, x0.to_vec(), t_end, tol.absolute(&model)?)?;
    while next < times.len() {
        solver.step(velocities)?;
        let t = solver.t();
        while next < times.len() && times[next] <= t {
            let y = if times[next] == t {
                solver.y().to_vec()
            } else {
                solver.dense(times[next])
            };
            verify(times[next], &y)?;
            out.push(y);
            next += 1;
        }
    }
    Ok(out)
}

/// Cumulative distribution of `|ψ|²` on a grid, normalised to end at one.
#[derive(Debug, Clone)]
pub struct DensityCdf<T> {
    points: Vec<T>,
    cdf: Vec<T>,
}

impl<T: Real> DensityCdf<T> {
    /// Each cell is integrated exactly for the quadratic through its two
    /// end points and the next point inward.
    pub fn new(state: &WaveState<T>, model: &WellModel<T>, grid: &SpatialGrid<T>) -> Result<Self> {
        let locals = locals_on(state, model, grid)?;
        let rho: Vec<T> = locals.iter().map(|lw| lw.psi.norm_sqr()).collect();
        let h = grid.spacing();
        let mut cdf = vec![T::zero(); rho.len()];
        for i in 1..rho.len() {
            let (a, b, c) = if i + 1 < rho.len() {
                (rho[i - 1], rho[i], rho[i + 1])
            } else {
                (rho[i], rho[i - 1], rho[i - 2])
            };
            cdf[i] = cdf[i - 1] + h * (T::lit(5.0) * a + T::lit(8.0) * b - c) / T::lit(12.0);
        }
        let total = cdf[cdf.len() - 1];
        if !(total > T::zero()) {
            return Err(invalid("state", "density integrates to zero"));
        }
        for c in &mut cdf {
            *c = *c / total;
        }
        Ok(Self {
            points: grid.points().to_vec(),
            cdf,
        })
    }

    /// Linear interpolation of the CDF; `0` left of the grid, `1` right.
    pub fn eval(&self, x: T) -> T {
        let n = self.points.len();
        if x <= self.points[0] {
            return T::zero();
        }
        if x >= self.points[n - 1] {
            return T::one();
        }
        let i = self.points.partition_point(|&p| p <= x) - 1;
        let w = (x - self.points[i]) / (self.points[i + 1] - self.points[i]);
        self.cdf[i] + (self.cdf[i + 1] - self.cdf[i]) * w
    }

    /// Inverse by linear interpolation, `u ∈ [0, 1]`.
    pub fn quantile(&self, u: T) -> T {
        let n = self.cdf.len();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, n - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { T::zero() };
        self.points[i - 1] + (self.points[i] - self.points[i - 1]) * w
    }

    /// `count` independent draws by inverse transform sampling.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<T> {
        (0..count)
            .map(|_| self.quantile(T::lit(rng.random::<f64>())))
            .collect()
    }
}

/// Kolmogorov–Smirnov distance between samples and a CDF.
pub fn ks_distance<T: Real>(samples: &[T], cdf: &DensityCdf<T>) -> T {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = T::from_usize_lossy(sorted.len());
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf.eval(x);
            let lo = T::from_usize_lossy(i) / n;
            let hi = T::from_usize_lossy(i + 1) / n;
            (f - lo).abs().max((hi - f).abs())
        })
        .fold(T::zero(), T::max)
}
