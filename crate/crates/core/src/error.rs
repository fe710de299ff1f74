use thiserror::Error;

/// Failures raised by the well model, the solvers and the measurement layer.
///
/// Values are carried as `f64` so the type stays independent of the scalar
/// the computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("negative time t = {0}")]
    NegativeTime(f64),

    #[error("position x = {x} outside the well [0, {length}]")]
    OutsideWell { x: f64, length: f64 },

    #[error("grid domain [0, {grid}] does not match the well length {well}")]
    GridMismatch { grid: f64, well: f64 },

    #[error("operation needs {expected} but the state is in the {found} basis")]
    BasisMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("closed form requires a linearly moving wall, got {0}")]
    WallVariant(&'static str),

    #[error("state is not normalized: |norm^2 - 1| = {0:e}")]
    NotNormalized(f64),

    #[error("error function overflows at z = {re} + {im}i")]
    ErfOverflow { re: f64, im: f64 },

    #[error("continued fraction did not converge at z = {re} + {im}i")]
    ErfNoConvergence { re: f64, im: f64 },

    #[error("truncation cannot reach discarded norm {tolerance:e} within {max_terms} terms (best {reached:e})")]
    TruncationUnreachable {
        tolerance: f64,
        max_terms: usize,
        reached: f64,
    },

    #[error("density {density:e} at x = {x} is below the node guard {guard:e}")]
    NodeGuard { x: f64, density: f64, guard: f64 },

    #[error("norm drift {drift:e} exceeds the alarm threshold {threshold:e} at t = {t}")]
    NormDrift { t: f64, drift: f64, threshold: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("basis exhausted: boundary weight {weight:e} exceeds {threshold:e} at the cap of {cap} modes")]
    BasisExhausted {
        weight: f64,
        threshold: f64,
        cap: usize,
    },

    #[error("requested time {t} outside the integrated window [{start}, {end}]")]
    OutsideTrajectory { t: f64, start: f64, end: f64 },

    #[error("trajectory from x0 = {x0} came within {distance:e} of a node at t = {t}")]
    NodeApproach { x0: f64, t: f64, distance: f64 },

    #[error("trajectory from x0 = {x0} left the well at t = {t}")]
    LeftDomain { x0: f64, t: f64 },

    #[error("weak coupling bound violated: g|Pw|/s = {ratio:e} > {bound:e}")]
    WeaknessViolated { ratio: f64, bound: f64 },

    #[error("postselection overlap vanishes at x = {0}")]
    VanishingPostselection(f64),

    #[error("timing constraint violated: t_f = {t_f} is not before the light-cone time {t_s}")]
    Timing { t_f: f64, t_s: f64 },

    #[error("no cavity was postselected out of {0}")]
    NoPostselection(usize),

    #[error("calibration did not reach error rate {target} below N = {cap}")]
    CalibrationFailed { target: f64, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
