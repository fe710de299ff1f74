//! Closed forms: eigenstates, the moving-wall basis, overlaps between the
//! two, and exact evolution by expansion.
//!
//! The overlap `d_kn(t) = ∫ ψ_k*(x,t) φ_n(x,t) dx` is evaluated as
//!
//! ```text
//! d_kn = P exp(i k² Θ) [F(k-n) - F(k+n)],   P = e^{-iπ/4} √π / (2√(2M)),
//! ```
//!
//! with `M = m q L(t)`, `s = √(2M)`, `ω = e^{iπ/4}`, `r± = (π|j| ± M)/s` and
//! the even function
//!
//! ```text
//! F(j) = e^{iπ²j²/(2M)} [erf(ω r₊) - erf(ω r₋)]                  π|j| <= M
//! F(j) = (-1)^j e^{-iM/2} [w(iω r₋) - w(iω r₊)]                  π|j| >  M
//! ```
//!
//! The second line is the first rewritten through the Faddeeva function;
//! the Gaussian phases, which reach 10⁹ rad for large `j`, cancel
//! analytically instead of numerically.

use num_complex::Complex;
use rayon::prelude::*;

use crate::erf::{erf64, faddeeva64};
use crate::error::{invalid, Error, Result};
use crate::model::{WallMotion, WellModel};
use crate::scalar::{cis, Real};
use crate::wave::{Basis, WaveState};

type C64 = Complex<f64>;

/// Tables longer than this are filled in parallel.
const PARALLEL_TABLE: usize = 4096;

/// `φ_n(x,t) = √(2/L) sin(nπx/L)`.
pub fn phi<T: Real>(n: usize, x: T, t: T, model: &WellModel<T>) -> Result<Complex<T>> {
    check_mode(n)?;
    let l = model.check_inside(x, t)?;
    if x == T::zero() || x == l {
        return Ok(Complex::new(T::zero(), T::zero()));
    }
    let amp = (T::lit(2.0) / l).sqrt() * (T::from_usize_lossy(n) * T::PI() * x / l).sin();
    Ok(Complex::new(amp, T::zero()))
}

/// Moving-wall solution
/// `ψ_n = √(2/L) exp(i m q x²/(2L) - i n² Θ(t)) sin(nπx/L)`,
/// `Θ = π² t / (2 m L₀ L(t))`. A static wall gives `φ_n e^{-i E_n t}`.
pub fn psi<T: Real>(n: usize, x: T, t: T, model: &WellModel<T>) -> Result<Complex<T>> {
    check_mode(n)?;
    if let WallMotion::Smoothed { .. } = model.wall {
        return Err(Error::WallVariant(model.wall.name()));
    }
    let l = model.check_inside(x, t)?;
    if x == T::zero() || x == l {
        return Ok(Complex::new(T::zero(), T::zero()));
    }
    let nf = T::from_usize_lossy(n);
    let theta = model.eigenphase(t)?;
    let chirp = model.mass * model.wall.speed() * x * x / (T::lit(2.0) * l);
    let amp = (T::lit(2.0) / l).sqrt() * (nf * T::PI() * x / l).sin();
    Ok(cis(chirp - nf * nf * theta) * amp)
}

/// Speed `πn/(m L(t))` of the eigenstate `φ_n`.
pub fn eigen_velocity<T: Real>(n: usize, t: T, model: &WellModel<T>) -> Result<T> {
    check_mode(n)?;
    mode_velocity(T::from_usize_lossy(n), t, model)
}

/// [`eigen_velocity`] for a real mode number `κ > 0`.
pub fn mode_velocity<T: Real>(kappa: T, t: T, model: &WellModel<T>) -> Result<T> {
    if !(kappa > T::zero()) {
        return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    Ok(T::PI() * kappa / (model.mass * model.length(t)?))
}

/// `k̄ = m q L(t) / π`, the mode whose eigen-velocity equals the wall speed.
pub fn critical_mode<T: Real>(t: T, model: &WellModel<T>) -> Result<T> {
    Ok(model.chirp_scale(t)? / T::PI())
}

fn check_mode(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("n", "mode numbers start at 1"))
    } else {
        Ok(())
    }
}

/// Precomputed `F(j)`, `0 <= j <= j_max`, at one time.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    t: f64,
    scale: f64,
    theta: f64,
    prefactor: C64,
    f: Vec<C64>,
}

impl OverlapTable {
    /// Requires a linearly moving wall: `M = 0` makes the closed form singular.
    pub fn new<T: Real>(model: &WellModel<T>, t: T, j_max: usize) -> Result<Self> {
        if !matches!(model.wall, WallMotion::Linear { .. }) {
            return Err(Error::WallVariant(model.wall.name()));
        }
        let scale = model.chirp_scale(t)?.to_f64_lossy();
        let theta = model.eigenphase(t)?.to_f64_lossy();
        let prefactor = C64::from_polar(
            std::f64::consts::PI.sqrt() / (2.0 * (2.0 * scale).sqrt()),
            -std::f64::consts::FRAC_PI_4,
        );
        let mut table = Self {
            t: t.to_f64_lossy(),
            scale,
            theta,
            prefactor,
            f: Vec::new(),
        };
        table.extend(j_max)?;
        Ok(table)
    }

    /// Grows the table to cover `j_max`.
    pub fn extend(&mut self, j_max: usize) -> Result<()> {
        let start = self.f.len();
        if j_max < start {
            return Ok(());
        }
        let m = self.scale;
        let fresh: Result<Vec<C64>> = if j_max + 1 - start > PARALLEL_TABLE {
            (start..=j_max).into_par_iter().map(|j| f_value(j, m)).collect()
        } else {
            (start..=j_max).map(|j| f_value(j, m)).collect()
        };
        self.f.extend(fresh?);
        Ok(())
    }

    pub fn j_max(&self) -> usize {
        self.f.len() - 1
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// `M = m q L(t)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `d_kn`; needs `k + n <= j_max`.
    pub fn overlap(&self, k: usize, n: usize) -> C64 {
        assert!(k >= 1 && n >= 1, "mode numbers start at 1");
        let kf = k as f64;
        let j = k.abs_diff(n);
        self.prefactor * C64::from_polar(1.0, kf * kf * self.theta) * (self.f[j] - self.f[k + n])
    }

    /// `d_kn` for `k = 1..=rows`.
    pub fn column(&self, n: usize, rows: usize) -> Vec<C64> {
        (1..=rows).map(|k| self.overlap(k, n)).collect()
    }
}

fn f_value(j: usize, m: f64) -> Result<C64> {
    use std::f64::consts::{FRAC_PI_4, PI};
    let s = (2.0 * m).sqrt();
    let omega = C64::from_polar(1.0, FRAC_PI_4);
    let jf = j as f64;
    let rp = (PI * jf + m) / s;
    let rm = (PI * jf - m) / s;
    if rm > 0.0 {
        let i_omega = C64::new(0.0, 1.0) * omega;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let w = faddeeva64(i_omega * rm)? - faddeeva64(i_omega * rp)?;
        Ok(C64::from_polar(sign, -m / 2.0) * w)
    } else {
        let e = erf64(omega * rp)? - erf64(omega * rm)?;
        Ok(C64::from_polar(1.0, PI * PI * jf * jf / (2.0 * m)) * e)
    }
}

/// Closed-form `d_kn(t)` for a single pair.
pub fn overlap_dkn<T: Real>(k: usize, n: usize, t: T, model: &WellModel<T>) -> Result<Complex<T>> {
    check_mode(k)?;
    check_mode(n)?;
    let d = OverlapTable::new(model, t, k + n)?.overlap(k, n);
    Ok(Complex::new(T::lit(d.re), T::lit(d.im)))
}

/// Dense block `d_kn(t)`, `1 <= k <= rows`, `1 <= n <= cols`.
#[derive(Debug, Clone)]
pub struct OverlapMatrix<T> {
    pub t: T,
    /// `M = m q L(t)`.
    pub scale: T,
    rows: usize,
    cols: usize,
    /// Column-major.
    data: Vec<Complex<T>>,
}

impl<T: Real> OverlapMatrix<T> {
    pub fn new(model: &WellModel<T>, t: T, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("overlap matrix", "needs at least one row and column"));
        }
        let table = OverlapTable::new(model, t, rows + cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for n in 1..=cols {
            data.extend(
                table
                    .column(n, rows)
                    .into_iter()
                    .map(|d| Complex::new(T::lit(d.re), T::lit(d.im))),
            );
        }
        Ok(Self {
            t,
            scale: T::lit(table.scale),
            rows,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `d_kn`, one-based.
    pub fn get(&self, k: usize, n: usize) -> Complex<T> {
        self.data[(n - 1) * self.rows + (k - 1)]
    }

    pub fn column(&self, n: usize) -> &[Complex<T>] {
        &self.data[(n - 1) * self.rows..n * self.rows]
    }

    /// `Σ_k |d_kn|²`.
    pub fn column_norm(&self, n: usize) -> T {
        self.column(n).iter().map(|d| d.norm_sqr()).sum()
    }

    /// `Σ_k d_km* d_kn`.
    pub fn column_inner(&self, m: usize, n: usize) -> Complex<T> {
        self.column(m)
            .iter()
            .zip(self.column(n))
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| {
                acc + a.conj() * b
            })
    }
}

/// Truncation policy for expansions in the moving basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Largest acceptable discarded norm.
    pub tolerance: f64,
    /// Hard cap on the number of modes.
    pub max_terms: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_terms: 1 << 20,
        }
    }
}

impl Truncation {
    pub fn new(tolerance: f64, max_terms: usize) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(invalid("tolerance", format!("must lie in (0, 1), got {tolerance}")));
        }
        if max_terms == 0 {
            return Err(invalid("max_terms", "must be positive"));
        }
        Ok(Self {
            tolerance,
            max_terms,
        })
    }
}

/// Cumulative weights `Σ_{k<=K} |c_k|²` and the smallest `K` whose
/// discarded norm `total - Σ` is below `tolerance`.
pub fn minimal_cut(weights: &[f64], total: f64, tolerance: f64) -> Option<usize> {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if total - acc < tolerance {
            return Some(i + 1);
        }
    }
    None
}

/// Expands an eigen-basis state at time `t` in the moving basis at the same
/// time: `c_k = Σ_n a_n d_kn(t)`, `k = 1..=rows`.
pub fn moving_coefficients<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    rows: usize,
) -> Result<Vec<C64>> {
    state.require(Basis::InstantaneousEigen)?;
    let table = OverlapTable::new(model, state.t, rows + state.modes())?;
    Ok(moving_from_table(&table, state, rows))
}

fn moving_from_table<T: Real>(table: &OverlapTable, state: &WaveState<T>, rows: usize) -> Vec<C64> {
    let support: Vec<(usize, C64)> = state
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > T::zero())
        .map(|(i, a)| (i + 1, C64::new(a.re.to_f64_lossy(), a.im.to_f64_lossy())))
        .collect();
    let row = |k: usize| {
        support
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, &(n, a)| acc + a * table.overlap(k, n))
    };
    if rows > PARALLEL_TABLE {
        (1..=rows).into_par_iter().map(row).collect()
    } else {
        (1..=rows).map(row).collect()
    }
}

/// Exact evolution for a wall at constant speed.
///
/// `initial` must be an eigen-basis state at `t = 0`. The result lives in the
/// moving basis with time-independent coefficients
/// `c_k = Σ_n a_n d_kn(0)` (no conjugation, since `d_kn = ⟨ψ_k|φ_n⟩`),
/// truncated at the smallest `K` whose discarded norm is below
/// `trunc.tolerance`. A static wall evolves by phases only.
pub fn exact_evolve<T: Real>(
    initial: &WaveState<T>,
    t: T,
    model: &WellModel<T>,
    trunc: Truncation,
) -> Result<WaveState<T>> {
    initial.require(Basis::InstantaneousEigen)?;
    if initial.t != T::zero() {
        return Err(invalid("initial", "exact evolution starts from t = 0"));
    }
    model.length(t)?;
    match model.wall {
        WallMotion::Static { .. } => WaveState::new(Basis::MovingBasis, t, initial.coeffs.clone()),
        WallMotion::Linear { .. } => {
            let coeffs = expand_truncated(initial, model, trunc)?;
            WaveState::new(Basis::MovingBasis, t, coeffs)
        }
        WallMotion::Smoothed { .. } => Err(Error::WallVariant(model.wall.name())),
    }
}

/// Moving-basis coefficients of an eigen-basis state at its own time,
/// truncated per `trunc`.
pub fn expand_truncated<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    trunc: Truncation,
) -> Result<Vec<Complex<T>>> {
    state.require(Basis::InstantaneousEigen)?;
    let total = state.norm_sqr().to_f64_lossy();
    let mut rows = (4 * state.modes()).max(256).min(trunc.max_terms);
    let mut table = OverlapTable::new(model, state.t, rows + state.modes())?;
    loop {
        table.extend(rows + state.modes())?;
        let c = moving_from_table(&table, state, rows);
        let weights: Vec<f64> = c.iter().map(|v| v.norm_sqr()).collect();
        if let Some(cut) = minimal_cut(&weights, total, trunc.tolerance) {
            return Ok(c[..cut]
                .iter()
                .map(|v| Complex::new(T::lit(v.re), T::lit(v.im)))
                .collect());
        }
        if rows == trunc.max_terms {
            let kept: f64 = weights.iter().sum();
            return Err(Error::TruncationUnreachable {
                tolerance: trunc.tolerance,
                max_terms: trunc.max_terms,
                reached: total - kept,
            });
        }
        rows = (rows * 2).min(trunc.max_terms);
    }
}

/// Projects a moving-basis state onto the eigenstates at the state's time:
/// `a_n = Σ_k c_k d_kn(t)*`, `n = 1..=modes`.
pub fn project_to_eigen<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    modes: usize,
) -> Result<WaveState<T>> {
    state.require(Basis::MovingBasis)?;
    let coeffs: Vec<Complex<T>> = match model.wall {
        WallMotion::Static { .. } => {
            let theta = model.eigenphase(state.t)?;
            (1..=modes)
                .map(|n| match state.coeffs.get(n - 1) {
                    Some(&c) => {
                        let nf = T::from_usize_lossy(n);
                        c * cis(-nf * nf * theta)
                    }
                    None => Complex::new(T::zero(), T::zero()),
                })
                .collect()
        }
        WallMotion::Linear { .. } => {
            let table = OverlapTable::new(model, state.t, state.modes() + modes)?;
            let c: Vec<C64> = state
                .coeffs
                .iter()
                .map(|v| C64::new(v.re.to_f64_lossy(), v.im.to_f64_lossy()))
                .collect();
            let entry = |n: usize| {
                let a = c
                    .iter()
                    .enumerate()
                    .fold(C64::new(0.0, 0.0), |acc, (i, ck)| {
                        acc + ck * table.overlap(i + 1, n).conj()
                    });
                Complex::new(T::lit(a.re), T::lit(a.im))
            };
            if modes * state.modes() > 1 << 20 {
                (1..=modes).into_par_iter().map(entry).collect()
            } else {
                (1..=modes).map(entry).collect()
            }
        }
        WallMotion::Smoothed { .. } => return Err(Error::WallVariant(model.wall.name())),
    };
    WaveState::new(Basis::InstantaneousEigen, state.t, coeffs)
}

/// `ψ_n(·,t)` in the eigenbasis at time `t`: `a_m = ⟨φ_m|ψ_n⟩ = d_nm(t)*`,
/// `m = 1..=modes`. Needs a linear wall.
pub fn moving_mode_in_eigenbasis<T: Real>(
    n: usize,
    t: T,
    modes: usize,
    model: &WellModel<T>,
) -> Result<WaveState<T>> {
    check_mode(n)?;
    let table = OverlapTable::new(model, t, modes + n)?;
    let coeffs = (1..=modes)
        .map(|m| {
            let d = table.overlap(n, m).conj();
            Complex::new(T::lit(d.re), T::lit(d.im))
        })
        .collect();
    WaveState::new(Basis::InstantaneousEigen, t, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn electron() -> WellModel<f64> {
        WellModel::electron(WallMotion::linear(100.0, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn phi_values() {
        let m = electron();
        let peak = phi(1, 55.0, 20.0, &m).unwrap();
        assert!((peak.re - (2.0f64 / 110.0).sqrt()).abs() < 1e-15);
        assert!(phi(2, 55.0, 20.0, &m).unwrap().norm() < 1e-15);
        assert_eq!(phi(3, 110.0, 20.0, &m).unwrap().norm(), 0.0);
        assert!(phi(1, 111.0, 20.0, &m).is_err());
    }

    #[test]
    fn psi_modulus_at_start() {
        let m = electron();
        let v = psi(1, 50.0, 0.0, &m).unwrap();
        assert!((v.norm() - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(psi(7, 0.0, 3.0, &m).unwrap().norm(), 0.0);
    }

    #[test]
    fn critical_mode_moves_at_wall_speed() {
        let m = electron();
        let kbar = critical_mode(3.0, &m).unwrap();
        let v = mode_velocity(kbar, 3.0, &m).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let v1 = eigen_velocity(4, 1.0, &m).unwrap();
        let v2 = eigen_velocity(8, 1.0, &m).unwrap();
        assert_eq!(v2, 2.0 * v1);
    }

    #[test]
    fn overlap_rejects_static_wall() {
        let m = WellModel::electron(WallMotion::fixed(100.0).unwrap()).unwrap();
        assert!(matches!(
            overlap_dkn(1, 1, 0.0, &m),
            Err(Error::WallVariant("static"))
        ));
    }

    #[test]
    fn minimal_cut_is_minimal() {
        let w = [0.5, 0.25, 0.125, 0.125];
        assert_eq!(minimal_cut(&w, 1.0, 0.2), Some(3));
        assert_eq!(minimal_cut(&w, 1.0, 1e-12), Some(4));
        assert_eq!(minimal_cut(&w[..2], 1.0, 0.1), None);
    }

    #[test]
    fn static_round_trip_is_phase_only() {
        let m = WellModel::electron(WallMotion::fixed(100.0).unwrap()).unwrap();
        let init = WaveState::eigenstate(3, 5, 0.0).unwrap();
        let later = exact_evolve(&init, 7.0, &m, Truncation::default()).unwrap();
        let back = project_to_eigen(&later, &m, 5).unwrap();
        let e = m.energy(3, 0.0).unwrap();
        assert!((back.coeffs[2] - cis(-e * 7.0)).norm() < 1e-13);
    }
}
