//! Density, current, weak momentum and the quantities derived from them.
//!
//! Every spatial derivative is taken on the basis functions and summed
//! (see [`SpectralView::local`]). Points where the density falls below
//! [`NODE_GUARD`] times a reference density are treated as nodes: quotients
//! by `|ψ|²` are reported as absent there, or refused with
//! [`Error::NodeGuard`] by the pointwise functions. Grid fields use the
//! largest density on the grid as reference; pointwise functions use the
//! mean density `1/L(t)`, which never exceeds it.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{eigen_velocity, exact_evolve, minimal_cut, project_to_eigen, Truncation};
use crate::error::{invalid, Error, Result};
use crate::evolution::Evolution;
use crate::model::{SpatialGrid, WallMotion, WellModel};
use crate::scalar::Real;
use crate::wave::{Basis, LocalWave, SpectralView, WaveState};

/// Relative density below which a point counts as a node.
pub const NODE_GUARD: f64 = 1e-12;

/// Grids with more `points × modes` than this are evaluated in parallel.
const PARALLEL_WORK: usize = 1 << 16;

/// Everything observable at one point, from `ψ`, `ψ'` and `ψ''`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalObservables<T> {
    pub x: T,
    pub density: T,
    pub current: T,
    /// `None` at guarded nodes.
    pub weak: Option<Complex<T>>,
    /// `None` at guarded nodes.
    pub quantum_potential: Option<T>,
}

impl<T: Real> LocalObservables<T> {
    /// `floor` is the absolute density below which the point is a node.
    pub fn from_local(lw: &LocalWave<T>, mass: T, floor: T) -> Self {
        let density = lw.psi.norm_sqr();
        let guarded = !(density > floor);
        Self {
            x: lw.x,
            density,
            current: current_local(lw, mass),
            weak: (!guarded).then(|| weak_momentum_local(lw)),
            quantum_potential: (!guarded).then(|| quantum_potential_local(lw, mass)),
        }
    }

    pub fn velocity(&self, mass: T) -> Option<T> {
        self.weak.map(|w| hydrodynamic_velocity(w, mass))
    }
}

/// `j = Im(ψ* ψ')/m`.
pub fn current_local<T: Real>(lw: &LocalWave<T>, mass: T) -> T {
    (lw.psi.conj() * lw.d1).im / mass
}

/// `Pʷ = -i ψ'/ψ`, i.e. `m j/|ψ|² - i ∂ₓ|ψ|²/(2|ψ|²)`. Unguarded.
pub fn weak_momentum_local<T: Real>(lw: &LocalWave<T>) -> Complex<T> {
    let rho = lw.psi.norm_sqr();
    let z = lw.psi.conj() * lw.d1;
    Complex::new(z.im / rho, -z.re / rho)
}

/// The hydrodynamic (guidance) velocity `v = Re Pʷ/m`.
pub fn hydrodynamic_velocity<T: Real>(weak: Complex<T>, mass: T) -> T {
    weak.re / mass
}

/// `Q = -(1/2m) R''/R` with `R = |ψ|`, written through `u = |ψ|²` as
/// `R''/R = u''/(2u) - u'²/(4u²)`. Unguarded.
pub fn quantum_potential_local<T: Real>(lw: &LocalWave<T>, mass: T) -> T {
    let two = T::lit(2.0);
    let u = lw.psi.norm_sqr();
    let u1 = two * (lw.psi.conj() * lw.d1).re;
    let u2 = two * (lw.psi.conj() * lw.d2).re + two * lw.d1.norm_sqr();
    let ratio = u2 / (two * u) - u1 * u1 / (T::lit(4.0) * u * u);
    -ratio / (two * mass)
}

fn local_at<T: Real>(state: &WaveState<T>, model: &WellModel<T>, x: T) -> Result<(LocalWave<T>, T)> {
    let l = model.check_inside(x, state.t)?;
    let view = SpectralView::new(state, model)?;
    Ok((view.local(x), l))
}

fn guarded<T: Real>(lw: &LocalWave<T>, length: T) -> Result<()> {
    let density = lw.psi.norm_sqr();
    let floor = T::lit(NODE_GUARD) / length;
    if density > floor {
        Ok(())
    } else {
        Err(Error::NodeGuard {
            x: lw.x.to_f64_lossy(),
            density: density.to_f64_lossy(),
            guard: floor.to_f64_lossy(),
        })
    }
}

/// `j(x)` at a single point.
pub fn current_at<T: Real>(state: &WaveState<T>, model: &WellModel<T>, x: T) -> Result<T> {
    let (lw, _) = local_at(state, model, x)?;
    Ok(current_local(&lw, model.mass))
}

/// `j` on every grid point.
pub fn current_density<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    grid: &SpatialGrid<T>,
) -> Result<Vec<T>> {
    grid.check_matches(model, state.t)?;
    let view = SpectralView::new(state, model)?;
    let eval = |&x: &T| current_local(&view.local(x), model.mass);
    Ok(if grid.len() * state.modes() > PARALLEL_WORK {
        grid.points().par_iter().map(eval).collect()
    } else {
        grid.points().iter().map(eval).collect()
    })
}

/// `j` at `x` from the first `keep` coefficients only.
pub fn truncated_current<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    x: T,
    keep: usize,
) -> Result<T> {
    if keep == 0 || keep > state.modes() {
        return Err(invalid("keep", format!("need 1 <= keep <= {}", state.modes())));
    }
    let cut = WaveState::new(state.basis, state.t, state.coeffs[..keep].to_vec())?;
    current_at(&cut, model, x)
}

/// `Pʷ(x)`; refuses points at or near a node.
pub fn weak_momentum<T: Real>(state: &WaveState<T>, model: &WellModel<T>, x: T) -> Result<Complex<T>> {
    let (lw, l) = local_at(state, model, x)?;
    guarded(&lw, l)?;
    Ok(weak_momentum_local(&lw))
}

/// `v(x) = j/|ψ|² = Re Pʷ/m`; the Bohmian guidance velocity.
pub fn velocity<T: Real>(state: &WaveState<T>, model: &WellModel<T>, x: T) -> Result<T> {
    Ok(hydrodynamic_velocity(weak_momentum(state, model, x)?, model.mass))
}

/// `Q(x)`; refuses points at or near a node.
pub fn quantum_potential_at<T: Real>(state: &WaveState<T>, model: &WellModel<T>, x: T) -> Result<T> {
    let (lw, l) = local_at(state, model, x)?;
    guarded(&lw, l)?;
    Ok(quantum_potential_local(&lw, model.mass))
}

/// `Δj(x) = j(x, ε) - j(x, 0)`.
pub fn delta_j<T: Real, E: Evolution<T> + ?Sized>(evolution: &E, x: T, eps: T) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(invalid("eps", format!("must be > 0, got {eps}")));
    }
    let model = evolution.model();
    let later = current_at(&evolution.state_at(eps)?, model, x)?;
    let start = current_at(&evolution.state_at(T::zero())?, model, x)?;
    Ok(later - start)
}

/// All fields on one grid at one time.
#[derive(Debug, Clone)]
pub struct ObservableField<T> {
    pub t: T,
    pub grid: SpatialGrid<T>,
    pub density: Vec<T>,
    pub current: Vec<T>,
    pub velocity: Vec<Option<T>>,
    pub weak_re: Vec<Option<T>>,
    pub weak_im: Vec<Option<T>>,
    pub quantum_potential: Vec<Option<T>>,
}

impl<T: Real> ObservableField<T> {
    pub fn compute(state: &WaveState<T>, model: &WellModel<T>, grid: &SpatialGrid<T>) -> Result<Self> {
        grid.check_matches(model, state.t)?;
        let view = SpectralView::new(state, model)?;
        let eval = |&x: &T| view.local(x);
        let locals: Vec<LocalWave<T>> = if grid.len() * state.modes() > PARALLEL_WORK {
            grid.points().par_iter().map(eval).collect()
        } else {
            grid.points().iter().map(eval).collect()
        };
        let peak = locals
            .iter()
            .map(|lw| lw.psi.norm_sqr())
            .fold(T::zero(), T::max);
        let floor = T::lit(NODE_GUARD) * peak;
        let points: Vec<LocalObservables<T>> = locals
            .iter()
            .map(|lw| LocalObservables::from_local(lw, model.mass, floor))
            .collect();
        Ok(Self {
            t: state.t,
            grid: grid.clone(),
            density: points.iter().map(|p| p.density).collect(),
            current: points.iter().map(|p| p.current).collect(),
            velocity: points.iter().map(|p| p.velocity(model.mass)).collect(),
            weak_re: points.iter().map(|p| p.weak.map(|w| w.re)).collect(),
            weak_im: points.iter().map(|p| p.weak.map(|w| w.im)).collect(),
            quantum_potential: points.iter().map(|p| p.quantum_potential).collect(),
        })
    }

    /// `∫ρ dx` by the trapezoidal rule.
    pub fn total_probability(&self) -> T {
        let h = self.grid.spacing();
        let n = self.density.len();
        let inner: T = self.density[1..n - 1].iter().copied().sum();
        h * (inner + (self.density[0] + self.density[n - 1]) / T::lit(2.0))
    }
}

/// Position relative to the light cone leaving the wall at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LightConeTag<T> {
    /// `t_S = (L₀ - x)/c`.
    pub t_s: T,
    /// `t >= t_S`.
    pub inside: bool,
}

impl<T> LightConeTag<T> {
    pub fn label(&self) -> &'static str {
        if self.inside {
            "inside"
        } else {
            "outside"
        }
    }
}

pub fn light_cone<T: Real>(x: T, t: T, model: &WellModel<T>) -> Result<LightConeTag<T>> {
    let l0 = model.wall.initial_length();
    if !(x >= T::zero() && x < l0) {
        return Err(invalid("x", format!("light cone needs 0 <= x < {l0}, got {x}")));
    }
    let t_s = (l0 - x) / model.light_speed;
    Ok(LightConeTag { t_s, inside: t >= t_s })
}

/// Where the expansion of a state can be cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailReport<T> {
    pub t: T,
    /// Moving-basis index at `t = 0`, eigen-basis index after projection.
    pub cut: usize,
    pub projected: bool,
    pub threshold: T,
    pub discarded: T,
    /// `v(cut, t) = π cut / (m L(t))`.
    pub velocity: T,
    pub velocity_over_c: T,
}

/// Smallest cut whose discarded norm is below `threshold`.
///
/// `initial` is an eigen-basis state at `t = 0`. At `t = 0` the moving-basis
/// coefficients `c_k` are cut; later, the evolved state is projected back on
/// the eigenstates at `t` and the `a_n(t)` are cut.
pub fn tail_report<T: Real>(
    initial: &WaveState<T>,
    t: T,
    threshold: T,
    model: &WellModel<T>,
    max_terms: usize,
) -> Result<TailReport<T>> {
    if !matches!(model.wall, WallMotion::Linear { .. }) {
        return Err(Error::WallVariant(model.wall.name()));
    }
    initial.require(Basis::InstantaneousEigen)?;
    let thr = threshold.to_f64_lossy();
    if !(thr > 0.0 && thr < 1.0) {
        return Err(invalid("threshold", format!("must lie in (0, 1), got {thr}")));
    }
    let inner = Truncation::new((thr * 1e-3).max(1e-13), max_terms)?;
    let moving = exact_evolve(initial, t, model, inner)?;
    let projected = t > T::zero();
    let weights: Vec<f64> = if projected {
        project_to_eigen(&moving, model, moving.modes())?
            .coeffs
            .iter()
            .map(|a| a.norm_sqr().to_f64_lossy())
            .collect()
    } else {
        moving.coeffs.iter().map(|c| c.norm_sqr().to_f64_lossy()).collect()
    };
    let total = initial.norm_sqr().to_f64_lossy();
    let cut = minimal_cut(&weights, total, thr).ok_or(Error::TruncationUnreachable {
        tolerance: thr,
        max_terms: weights.len(),
        reached: total - weights.iter().sum::<f64>(),
    })?;
    let discarded = total - weights[..cut].iter().sum::<f64>();
    let velocity = eigen_velocity(cut, t, model)?;
    Ok(TailReport {
        t,
        cut,
        projected,
        threshold,
        discarded: T::lit(discarded),
        velocity,
        velocity_over_c: velocity / model.light_speed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> WellModel<f64> {
        WellModel::electron(WallMotion::linear(100.0, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn light_cone_boundary_is_closed() {
        let m = model();
        let x = 100.0 - m.light_speed;
        assert!(light_cone(x.max(0.0), 0.5, &m).is_ok());
        let tag = light_cone(0.0, 0.0, &m).unwrap();
        assert!((tag.t_s - 0.729_736_0).abs() < 1e-6);
        assert!(!tag.inside);
        assert!(light_cone(0.0, tag.t_s, &m).unwrap().inside);
        assert!(light_cone(100.0, 0.0, &m).is_err());
    }

    #[test]
    fn real_state_has_no_current() {
        let m = model();
        let state = WaveState::eigenstate(4, 6, 0.0).unwrap();
        let grid = SpatialGrid::for_model(33, &m, 0.0).unwrap();
        let j = current_density(&state, &m, &grid).unwrap();
        assert!(j.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nodes_are_guarded() {
        let m = model();
        let state = WaveState::eigenstate(2, 2, 0.0).unwrap();
        assert!(matches!(
            weak_momentum(&state, &m, 50.0),
            Err(Error::NodeGuard { .. })
        ));
        let grid = SpatialGrid::for_model(5, &m, 0.0).unwrap();
        let field = ObservableField::compute(&state, &m, &grid).unwrap();
        assert_eq!(field.weak_re[0], None);
        assert_eq!(field.weak_re[2], None);
        assert!(field.weak_re[1].is_some());
    }
}
