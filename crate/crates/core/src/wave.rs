//! Wavefunctions as coefficient vectors and their evaluation in space.
//!
//! Two orthonormal bases on `[0, L(t)]` are supported. Index `0` of a
//! coefficient vector is mode `n = 1`.
//!
//! * [`Basis::InstantaneousEigen`]: `φ_n = √(2/L) sin(nπx/L)`.
//! * [`Basis::MovingBasis`]: `ψ_n = φ_n exp(i m q x²/(2L) - i n² Θ(t))`,
//!   exact solutions for a wall moving at constant speed.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{SpatialGrid, WallMotion, WellModel};
use crate::scalar::{cis, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    MovingBasis,
    InstantaneousEigen,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Self::MovingBasis => "moving",
            Self::InstantaneousEigen => "eigen",
        }
    }
}

/// A state at time `t` expanded in one of the bases.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState<T> {
    pub basis: Basis,
    pub t: T,
    pub coeffs: Vec<Complex<T>>,
}

impl<T: Real> WaveState<T> {
    pub fn new(basis: Basis, t: T, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("coeffs", "state needs at least one mode"));
        }
        if !(t.is_finite() && t >= T::zero()) {
            return Err(Error::NegativeTime(t.to_f64_lossy()));
        }
        Ok(Self { basis, t, coeffs })
    }

    /// `φ_n` at time `t`, held in `modes` eigen-coefficients.
    pub fn eigenstate(n: usize, modes: usize, t: T) -> Result<Self> {
        if n == 0 || n > modes {
            return Err(invalid("n", format!("need 1 <= n <= {modes}, got {n}")));
        }
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); modes];
        coeffs[n - 1] = Complex::new(T::one(), T::zero());
        Self::new(Basis::InstantaneousEigen, t, coeffs)
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn norm_sqr(&self) -> T {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > T::zero() && norm.is_finite()) {
            return Err(Error::NotNormalized(norm.to_f64_lossy()));
        }
        let inv = T::one() / norm;
        for c in &mut self.coeffs {
            *c = *c * inv;
        }
        Ok(())
    }

    /// Fails if `|‖ψ‖² - 1| > tol`.
    pub fn check_normalized(&self, tol: T) -> Result<()> {
        let drift = (self.norm_sqr() - T::one()).abs();
        if drift > tol || !drift.is_finite() {
            return Err(Error::NotNormalized(drift.to_f64_lossy()));
        }
        Ok(())
    }

    /// Weight carried by modes `n > keep`.
    pub fn tail_weight(&self, keep: usize) -> T {
        self.coeffs
            .iter()
            .skip(keep)
            .map(|c| c.norm_sqr())
            .sum()
    }

    pub fn require(&self, basis: Basis) -> Result<()> {
        if self.basis != basis {
            return Err(Error::BasisMismatch {
                expected: basis.name(),
                found: self.basis.name(),
            });
        }
        Ok(())
    }
}

/// Wavefunction and its first two spatial derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalWave<T> {
    pub x: T,
    pub psi: Complex<T>,
    pub d1: Complex<T>,
    pub d2: Complex<T>,
}

/// A state reduced to `ψ(x) = exp(i α x²/2) Σ s_n sin(nπx/L)`, ready for
/// pointwise evaluation.
#[derive(Debug, Clone)]
pub struct SpectralView<T> {
    length: T,
    alpha: T,
    amps: Vec<Complex<T>>,
}

/// Rotation steps between exact re-evaluations of `exp(i n θ)`.
const REANCHOR: usize = 1024;

impl<T: Real> SpectralView<T> {
    pub fn new(state: &WaveState<T>, model: &WellModel<T>) -> Result<Self> {
        let length = model.length(state.t)?;
        let norm = (T::lit(2.0) / length).sqrt();
        match state.basis {
            Basis::InstantaneousEigen => Ok(Self {
                length,
                alpha: T::zero(),
                amps: state.coeffs.iter().map(|&c| c * norm).collect(),
            }),
            Basis::MovingBasis => {
                if matches!(model.wall, WallMotion::Smoothed { .. }) {
                    return Err(Error::WallVariant(model.wall.name()));
                }
                let theta = model.eigenphase(state.t)?;
                let alpha = model.mass * model.wall.speed() / length;
                let amps = state
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        let n = T::from_usize_lossy(i + 1);
                        c * cis(-n * n * theta) * norm
                    })
                    .collect();
                Ok(Self {
                    length,
                    alpha,
                    amps,
                })
            }
        }
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// `ψ(x)`. Exactly zero on the walls.
    pub fn value(&self, x: T) -> Complex<T> {
        if x <= T::zero() || x >= self.length {
            return Complex::new(T::zero(), T::zero());
        }
        let mut acc = Complex::new(T::zero(), T::zero());
        self.sweep(x, |_, amp, e| acc = acc + amp * e.im);
        acc * self.chirp(x)
    }

    /// `ψ`, `ψ'` and `ψ''` at `x`; `ψ` is exactly zero on the walls.
    pub fn local(&self, x: T) -> LocalWave<T> {
        let zero = Complex::new(T::zero(), T::zero());
        let (mut s, mut s1, mut s2) = (zero, zero, zero);
        self.sweep(x, |k, amp, e| {
            s = s + amp * e.im;
            s1 = s1 + amp * (k * e.re);
            s2 = s2 - amp * (k * k * e.im);
        });
        if x <= T::zero() || x >= self.length {
            s = zero;
        }
        let chirp = self.chirp(x);
        let i = Complex::new(T::zero(), T::one());
        let c1 = self.alpha * x;
        let psi = chirp * s;
        let d1 = chirp * (s1 + i * s * c1);
        let d2 = chirp * (s2 + i * s1 * (T::lit(2.0) * c1) + s * Complex::new(-c1 * c1, self.alpha));
        LocalWave { x, psi, d1, d2 }
    }

    fn chirp(&self, x: T) -> Complex<T> {
        cis(self.alpha * x * x / T::lit(2.0))
    }

    /// Calls `f(k_n, s_n, exp(i n θ))` with `θ = πx/L`, `k_n = nπ/L`.
    fn sweep<F: FnMut(T, Complex<T>, Complex<T>)>(&self, x: T, mut f: F) {
        let theta = T::PI() * x / self.length;
        let rotor = cis(theta);
        let step = T::PI() / self.length;
        let mut e = rotor;
        for (i, &amp) in self.amps.iter().enumerate() {
            let n = i + 1;
            if n % REANCHOR == 0 {
                e = cis(T::from_usize_lossy(n) * theta);
            }
            f(T::from_usize_lossy(n) * step, amp, e);
            e = e * rotor;
        }
    }
}

/// Samples the state on `grid`, which must span the well at the state's time.
pub fn state_to_grid<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    grid: &SpatialGrid<T>,
) -> Result<Vec<Complex<T>>> {
    grid.check_matches(model, state.t)?;
    let view = SpectralView::new(state, model)?;
    Ok(grid.points().iter().map(|&x| view.value(x)).collect())
}
