//! States on demand at arbitrary times, from either backend.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::analytic::{exact_evolve, expand_truncated, moving_coefficients, Truncation};
use crate::error::{invalid, Error, Result};
use crate::model::{WallMotion, WellModel};
use crate::scalar::{cis, Real};
use crate::spectral::{evolve, InitialState, SolverConfig};
use crate::wave::{Basis, WaveState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Analytic,
    Spectral,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::Spectral => "spectral",
        }
    }
}

/// A solved time evolution that can be sampled inside its window.
pub trait Evolution<T: Real>: Sync {
    fn model(&self) -> &WellModel<T>;

    /// Earliest and latest time that [`Evolution::state_at`] accepts.
    fn window(&self) -> (T, T);

    fn state_at(&self, t: T) -> Result<WaveState<T>>;

    /// Applies the evolution operator `U(t, s.t)` to an arbitrary state `s`
    /// (not necessarily normalised), `t >= s.t`, both inside the window.
    fn propagate(&self, state: &WaveState<T>, t: T) -> Result<WaveState<T>>;

    fn check_time(&self, t: T) -> Result<()> {
        let (start, end) = self.window();
        if t >= start && t <= end {
            Ok(())
        } else {
            Err(Error::OutsideTrajectory {
                t: t.to_f64_lossy(),
                start: start.to_f64_lossy(),
                end: end.to_f64_lossy(),
            })
        }
    }
}

/// Closed-form evolution: constant coefficients in the moving basis.
#[derive(Debug, Clone)]
pub struct AnalyticEvolution<T> {
    model: WellModel<T>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> AnalyticEvolution<T> {
    /// `initial` is either a moving-basis state (any time) or an eigen-basis
    /// state at `t = 0`, expanded per `trunc`.
    pub fn new(model: &WellModel<T>, initial: &WaveState<T>, trunc: Truncation) -> Result<Self> {
        if let WallMotion::Smoothed { .. } = model.wall {
            return Err(Error::WallVariant(model.wall.name()));
        }
        let coeffs = match initial.basis {
            Basis::MovingBasis => initial.coeffs.clone(),
            Basis::InstantaneousEigen => exact_evolve(initial, T::zero(), model, trunc)?.coeffs,
        };
        Ok(Self {
            model: *model,
            coeffs,
        })
    }

    /// Eigen-basis `initial` at `t = 0` expanded on exactly `modes` moving
    /// modes, regardless of the discarded norm.
    pub fn with_modes(model: &WellModel<T>, initial: &WaveState<T>, modes: usize) -> Result<Self> {
        if !matches!(model.wall, WallMotion::Linear { .. }) {
            return Err(Error::WallVariant(model.wall.name()));
        }
        initial.require(Basis::InstantaneousEigen)?;
        if initial.t != T::zero() {
            return Err(invalid("initial", "exact evolution starts from t = 0"));
        }
        if modes == 0 {
            return Err(invalid("modes", "must be >= 1"));
        }
        let coeffs = moving_coefficients(initial, model, modes)?
            .into_iter()
            .map(|c| Complex::new(T::lit(c.re), T::lit(c.im)))
            .collect();
        Ok(Self {
            model: *model,
            coeffs,
        })
    }

    /// Moving-basis coefficients `c_k`.
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }
}

impl<T: Real> Evolution<T> for AnalyticEvolution<T> {
    fn model(&self) -> &WellModel<T> {
        &self.model
    }

    fn window(&self) -> (T, T) {
        (T::zero(), T::infinity())
    }

    fn state_at(&self, t: T) -> Result<WaveState<T>> {
        self.check_time(t)?;
        WaveState::new(Basis::MovingBasis, t, self.coeffs.clone())
    }

    fn propagate(&self, state: &WaveState<T>, t: T) -> Result<WaveState<T>> {
        self.check_time(state.t)?;
        self.check_time(t)?;
        let coeffs = match state.basis {
            Basis::MovingBasis => state.coeffs.clone(),
            Basis::InstantaneousEigen if self.model.wall.is_static() => {
                let theta = self.model.eigenphase(state.t)?;
                state
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| {
                        let n = T::from_usize_lossy(i + 1);
                        a * cis(n * n * theta)
                    })
                    .collect()
            }
            Basis::InstantaneousEigen => {
                expand_truncated(state, &self.model, Truncation::default())?
            }
        };
        WaveState::new(Basis::MovingBasis, t, coeffs)
    }
}

/// Numerical evolution with stored checkpoints; intermediate times are
/// integrated from the nearest earlier checkpoint.
#[derive(Debug, Clone)]
pub struct SpectralEvolution<T> {
    model: WellModel<T>,
    cfg: SolverConfig<T>,
    checkpoints: Vec<WaveState<T>>,
}

impl<T: Real> SpectralEvolution<T> {
    /// Integrates from the initial state's time to `t_end`, keeping
    /// `segments + 1` evenly spaced checkpoints.
    pub fn new<I: InitialState<T> + ?Sized>(
        model: &WellModel<T>,
        initial: &I,
        t_end: T,
        segments: usize,
        cfg: &SolverConfig<T>,
    ) -> Result<Self> {
        if segments == 0 {
            return Err(invalid("segments", "must be >= 1"));
        }
        let t0 = initial.with_modes(initial.min_modes())?.t;
        if !(t_end > t0) {
            return Err(invalid("t_end", format!("must exceed the initial time {t0}")));
        }
        let span = t_end - t0;
        let times: Vec<T> = (0..=segments)
            .map(|i| t0 + span * T::from_usize_lossy(i) / T::from_usize_lossy(segments))
            .collect();
        let run = evolve(model, initial, &times, cfg)?;
        let fixed = SolverConfig {
            modes: Some(run.modes),
            ..*cfg
        };
        Ok(Self {
            model: *model,
            cfg: fixed,
            checkpoints: run.states,
        })
    }

    pub fn modes(&self) -> usize {
        self.checkpoints[0].modes()
    }
}

impl<T: Real> Evolution<T> for SpectralEvolution<T> {
    fn model(&self) -> &WellModel<T> {
        &self.model
    }

    fn window(&self) -> (T, T) {
        let last = self.checkpoints.len() - 1;
        (self.checkpoints[0].t, self.checkpoints[last].t)
    }

    fn state_at(&self, t: T) -> Result<WaveState<T>> {
        self.check_time(t)?;
        let base = self
            .checkpoints
            .iter()
            .rev()
            .find(|s| s.t <= t)
            .expect("window starts at the first checkpoint");
        if base.t == t {
            return Ok(base.clone());
        }
        let mut run = evolve(&self.model, base, &[t], &self.cfg)?;
        Ok(run.states.remove(0))
    }

    fn propagate(&self, state: &WaveState<T>, t: T) -> Result<WaveState<T>> {
        self.check_time(state.t)?;
        self.check_time(t)?;
        state.require(Basis::InstantaneousEigen)?;
        let norm = state.norm_sqr().sqrt();
        let mut unit = state.clone();
        unit.normalize()?;
        let cfg = SolverConfig {
            modes: Some(state.modes().max(self.modes())),
            ..self.cfg
        };
        let mut out = evolve(&self.model, &unit, &[t], &cfg)?.states.remove(0);
        for c in &mut out.coeffs {
            *c = *c * norm;
        }
        Ok(out)
    }
}
