//! Physical model of the well: wall laws, particle parameters and grids.
//!
//! Everything is in atomic units with ħ = 1. The left wall sits at `x = 0`
//! and the right wall at `x = L(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::GaussLegendre;
use crate::scalar::Real;

/// Speed of light in atomic units.
pub const LIGHT_SPEED_AU: f64 = 137.035999;

/// Motion law of the right wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WallMotion<T> {
    /// `L(t) = L0`.
    Static { l0: T },
    /// `L(t) = L0 + q t`.
    Linear { l0: T, q: T },
    /// `L(t) = L0 + q t (1 - exp(-γ t))`, starting from rest.
    Smoothed { l0: T, q: T, gamma: T },
}

impl<T: Real> WallMotion<T> {
    pub fn fixed(l0: T) -> Result<Self> {
        let wall = Self::Static { l0 };
        wall.validate()?;
        Ok(wall)
    }

    pub fn linear(l0: T, q: T) -> Result<Self> {
        let wall = Self::Linear { l0, q };
        wall.validate()?;
        Ok(wall)
    }

    pub fn smoothed(l0: T, q: T, gamma: T) -> Result<Self> {
        let wall = Self::Smoothed { l0, q, gamma };
        wall.validate()?;
        Ok(wall)
    }

    /// Checks the invariants; useful for values that came through serde.
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: T| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match *self {
            Self::Static { l0 } => positive("l0", l0),
            Self::Linear { l0, q } => {
                positive("l0", l0)?;
                positive("q", q)
            }
            Self::Smoothed { l0, q, gamma } => {
                positive("l0", l0)?;
                positive("q", q)?;
                positive("gamma", gamma)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Static { .. } => "static",
            Self::Linear { .. } => "linear",
            Self::Smoothed { .. } => "smoothed",
        }
    }

    pub fn initial_length(&self) -> T {
        match *self {
            Self::Static { l0 } | Self::Linear { l0, .. } | Self::Smoothed { l0, .. } => l0,
        }
    }

    /// Asymptotic wall speed `q` (zero for a static wall).
    pub fn speed(&self) -> T {
        match *self {
            Self::Static { .. } => T::zero(),
            Self::Linear { q, .. } | Self::Smoothed { q, .. } => q,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Self::Static { .. })
    }

    /// `L(t)`.
    pub fn length(&self, t: T) -> Result<T> {
        check_time(t)?;
        Ok(self.length_unchecked(t))
    }

    /// `dL/dt`, evaluated analytically.
    pub fn velocity(&self, t: T) -> Result<T> {
        check_time(t)?;
        Ok(self.velocity_unchecked(t))
    }

    pub(crate) fn length_unchecked(&self, t: T) -> T {
        match *self {
            Self::Static { l0 } => l0,
            Self::Linear { l0, q } => l0 + q * t,
            Self::Smoothed { l0, q, gamma } => l0 - q * t * (-gamma * t).exp_m1(),
        }
    }

    pub(crate) fn velocity_unchecked(&self, t: T) -> T {
        match *self {
            Self::Static { .. } => T::zero(),
            Self::Linear { q, .. } => q,
            Self::Smoothed { q, gamma, .. } => {
                let decay = (-gamma * t).exp();
                -q * (-gamma * t).exp_m1() + q * gamma * t * decay
            }
        }
    }

    /// `∫_0^t ds / L(s)^2`, the integral that accumulates eigenphases.
    pub fn inverse_square_integral(&self, t: T) -> Result<T> {
        check_time(t)?;
        Ok(match *self {
            Self::Static { l0 } => t / (l0 * l0),
            Self::Linear { l0, .. } => t / (l0 * self.length_unchecked(t)),
            Self::Smoothed { gamma, .. } => {
                if t == T::zero() {
                    return Ok(T::zero());
                }
                // Panels resolve the exp(-γt) transient; the rest is smooth.
                let panels = (t * gamma).ceil().to_usize().unwrap_or(1).clamp(4, 4096);
                GaussLegendre::new(16).integrate_panels(T::zero(), t, panels, |s| {
                    let l = self.length_unchecked(s);
                    T::one() / (l * l)
                })
            }
        })
    }
}

fn check_time<T: Real>(t: T) -> Result<()> {
    if t < T::zero() || !t.is_finite() {
        Err(Error::NegativeTime(t.to_f64_lossy()))
    } else {
        Ok(())
    }
}

/// Particle and well parameters. ħ is fixed to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellModel<T> {
    pub mass: T,
    pub light_speed: T,
    pub wall: WallMotion<T>,
}

impl<T: Real> WellModel<T> {
    pub fn new(mass: T, light_speed: T, wall: WallMotion<T>) -> Result<Self> {
        let model = Self {
            mass,
            light_speed,
            wall,
        };
        model.validate()?;
        Ok(model)
    }

    /// An electron (`m = 1`) with the physical light speed.
    pub fn electron(wall: WallMotion<T>) -> Result<Self> {
        Self::new(T::one(), T::lit(LIGHT_SPEED_AU), wall)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > T::zero()) {
            return Err(invalid("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.light_speed.is_finite() && self.light_speed > T::zero()) {
            return Err(invalid(
                "light_speed",
                format!("must be > 0, got {}", self.light_speed),
            ));
        }
        self.wall.validate()
    }

    /// Same particle, different wall law.
    pub fn with_wall(&self, wall: WallMotion<T>) -> Self {
        Self { wall, ..*self }
    }

    pub fn length(&self, t: T) -> Result<T> {
        self.wall.length(t)
    }

    /// Instantaneous eigenvalue `E_n(t) = n²π²/(2 m L(t)²)`.
    pub fn energy(&self, n: usize, t: T) -> Result<T> {
        let l = self.length(t)?;
        Ok(self.energy_at_length(n, l))
    }

    pub(crate) fn energy_at_length(&self, n: usize, l: T) -> T {
        let k = T::from_usize_lossy(n) * T::PI() / l;
        k * k / (T::lit(2.0) * self.mass)
    }

    /// `Θ(t) = π²/(2m) ∫_0^t ds / L(s)²`; mode `n` of the moving basis
    /// carries the phase `exp(-i n² Θ)`.
    pub fn eigenphase(&self, t: T) -> Result<T> {
        let pi2 = T::PI() * T::PI();
        Ok(pi2 / (T::lit(2.0) * self.mass) * self.wall.inverse_square_integral(t)?)
    }

    /// `M = m q L(t)`, the scale entering the overlap closed form.
    pub fn chirp_scale(&self, t: T) -> Result<T> {
        Ok(self.mass * self.wall.speed() * self.length(t)?)
    }

    /// Checks `0 <= x <= L(t)` and returns `L(t)`.
    pub fn check_inside(&self, x: T, t: T) -> Result<T> {
        let l = self.length(t)?;
        if x < T::zero() || x > l || !x.is_finite() {
            return Err(Error::OutsideWell {
                x: x.to_f64_lossy(),
                length: l.to_f64_lossy(),
            });
        }
        Ok(l)
    }
}

/// Uniform grid on `[0, L]` with `N >= 3` points.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid<T> {
    length: T,
    points: Vec<T>,
}

impl<T: Real> SpatialGrid<T> {
    pub fn new(n: usize, length: T) -> Result<Self> {
        if n < 3 {
            return Err(invalid("grid points", format!("need at least 3, got {n}")));
        }
        if !(length.is_finite() && length > T::zero()) {
            return Err(invalid("grid length", format!("must be > 0, got {length}")));
        }
        let last = T::from_usize_lossy(n - 1);
        let mut points: Vec<T> = (0..n)
            .map(|i| length * T::from_usize_lossy(i) / last)
            .collect();
        points[0] = T::zero();
        points[n - 1] = length;
        Ok(Self { length, points })
    }

    /// Grid spanning the well at time `t`.
    pub fn for_model(n: usize, model: &WellModel<T>, t: T) -> Result<Self> {
        Self::new(n, model.length(t)?)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn spacing(&self) -> T {
        self.length / T::from_usize_lossy(self.points.len() - 1)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// Fails unless the grid spans `[0, L(t)]` of `model`.
    pub fn check_matches(&self, model: &WellModel<T>, t: T) -> Result<()> {
        let l = model.length(t)?;
        let tol = T::lit(1e3) * T::epsilon() * l;
        if (self.length - l).abs() > tol {
            return Err(Error::GridMismatch {
                grid: self.length.to_f64_lossy(),
                well: l.to_f64_lossy(),
            });
        }
        Ok(())
    }
}
