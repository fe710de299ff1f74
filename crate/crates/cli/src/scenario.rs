//! Scenario files: TOML describing the well, the initial state and what to
//! sample.

use movingwall::analytic::{moving_mode_in_eigenbasis, Truncation};
use movingwall::protocol::{PointerModel, PostselectionWindow};
use movingwall::spectral::{Generated, SolverConfig};
use movingwall::{
    AnalyticEvolution, Backend, Basis, Evolution, SpectralEvolution, WallMotion, WaveState,
    WellModel, LIGHT_SPEED_AU,
};
use num_complex::Complex;
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    pub time: GridSpec,
    pub space: GridSpec,
    #[serde(default)]
    pub analytic: AnalyticSpec,
    #[serde(default)]
    pub spectral: SpectralSpec,
    pub deltaj: Option<DeltaJSpec>,
    pub tail: Option<TailSpec>,
    pub bohm: Option<BohmSpec>,
    pub protocol: Option<ProtocolSpec>,
    pub fig2: Option<Fig2Spec>,
}

fn default_backend() -> Backend {
    Backend::Analytic
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "light_speed")]
    pub light_speed: f64,
    pub wall: WallSpec,
}

fn one() -> f64 {
    1.0
}

fn light_speed() -> f64 {
    LIGHT_SPEED_AU
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WallSpec {
    Static { l0: f64 },
    Linear { l0: f64, q: f64 },
    Smoothed { l0: f64, q: f64, gamma: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `φ_n` at `t = 0`.
    Eigen { n: usize },
    /// `ψ_n` at `t = 0`.
    Moving { n: usize },
    Coefficients {
        basis: BasisSpec,
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSpec {
    Eigen,
    Moving,
}

/// Either explicit `values` or `count` evenly spaced points on `[start, stop]`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub count: Option<usize>,
}

/// `modes` fixes the moving-basis truncation of an eigen-basis initial
/// state; without it the expansion stops once the discarded norm is below
/// `1e-12`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSpec {
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    pub modes: Option<usize>,
    #[serde(default = "rtol")]
    pub rtol: f64,
    #[serde(default = "atol")]
    pub atol: f64,
    #[serde(default = "leak")]
    pub leak_threshold: f64,
    #[serde(default = "max_modes")]
    pub max_modes: usize,
    #[serde(default = "segments")]
    pub segments: usize,
}

fn rtol() -> f64 {
    1e-10
}
fn atol() -> f64 {
    1e-13
}
fn leak() -> f64 {
    1e-12
}
fn max_modes() -> usize {
    1 << 14
}
fn segments() -> usize {
    8
}

impl Default for SpectralSpec {
    fn default() -> Self {
        Self {
            modes: None,
            rtol: rtol(),
            atol: atol(),
            leak_threshold: leak(),
            max_modes: max_modes(),
            segments: segments(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaJSpec {
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    #[serde(default = "tail_threshold")]
    pub threshold: f64,
    #[serde(default = "tail_terms")]
    pub max_terms: usize,
}

fn tail_threshold() -> f64 {
    1e-10
}
fn tail_terms() -> usize {
    1 << 20
}

/// Explicit `starts`, or `samples` initial positions drawn from `|ψ(x,0)|²`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BohmSpec {
    pub starts: Option<Vec<f64>>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub x_f: f64,
    pub half_width: f64,
    pub t_w: f64,
    pub t_f: f64,
    pub pointer: PointerModel,
    pub bit: u8,
    pub ensemble: u64,
    #[serde(default)]
    pub keep_records: bool,
    pub calibration: Option<CalibrationSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    pub target: f64,
    pub trials: u64,
    pub start: u64,
    pub cap: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Spec {
    pub x_f: f64,
    /// Truncation of the initial state for the fixed-wall series.
    pub static_modes: usize,
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

/// Lifts a library error raised while building inputs into a config error.
pub fn invalid(e: movingwall::Error) -> Failure {
    Failure::Config(e.to_string())
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let s: Self = toml::from_str(text).map_err(|e| config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let model = self.model()?;
        if self.backend == Backend::Analytic && !matches!(model.wall, WallMotion::Linear { .. }) {
            return Err(config(format!(
                "backend `analytic` requires a linear wall, got `{}`",
                model.wall.name()
            )));
        }
        self.initial_state()?;
        let times = self.times()?;
        if times[0] < 0.0 {
            return Err(config("time grid must start at t >= 0"));
        }
        let l0 = model.wall.initial_length();
        let xs = self.points()?;
        if xs.iter().any(|&x| !(x > 0.0 && x < l0)) {
            return Err(config(format!("space points must lie in (0, {l0})")));
        }
        if self.analytic.modes == Some(0) {
            return Err(config("analytic.modes must be >= 1"));
        }
        if self.spectral.segments == 0 {
            return Err(config("spectral.segments must be >= 1"));
        }
        self.solver().validate().map_err(invalid)?;
        if let Some(d) = &self.deltaj {
            if d.eps.is_empty() || d.eps.iter().any(|e| !(*e > 0.0)) {
                return Err(config("deltaj.eps must be a non-empty list of positive steps"));
            }
        }
        if let Some(b) = &self.bohm {
            match (&b.starts, b.samples) {
                (Some(s), None) if !s.is_empty() => {
                    if s.iter().any(|&x| !(x > 0.0 && x < l0)) {
                        return Err(config(format!("bohm.starts must lie in (0, {l0})")));
                    }
                }
                (None, Some(n)) if n > 0 => {}
                _ => return Err(config("bohm needs exactly one of `starts` or `samples`")),
            }
        }
        if let Some(p) = &self.protocol {
            PostselectionWindow::new(p.x_f, p.half_width).map_err(invalid)?;
            p.pointer.validate().map_err(invalid)?;
            if p.bit > 1 {
                return Err(config("protocol.bit must be 0 or 1"));
            }
            if p.ensemble == 0 {
                return Err(config("protocol.ensemble must be >= 1"));
            }
            if !(p.t_w >= 0.0 && p.t_f > p.t_w) {
                return Err(config("protocol needs 0 <= t_w < t_f"));
            }
        }
        if let Some(f) = &self.fig2 {
            if !(f.x_f > 0.0 && f.x_f < l0) || f.static_modes == 0 {
                return Err(config("fig2 needs 0 < x_f < l0 and static_modes >= 1"));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<WellModel<f64>, Failure> {
        let wall = match self.model.wall {
            WallSpec::Static { l0 } => WallMotion::fixed(l0),
            WallSpec::Linear { l0, q } => WallMotion::linear(l0, q),
            WallSpec::Smoothed { l0, q, gamma } => WallMotion::smoothed(l0, q, gamma),
        }
        .map_err(invalid)?;
        WellModel::new(self.model.mass, self.model.light_speed, wall).map_err(invalid)
    }

    /// The initial state at `t = 0`, normalized.
    pub fn initial_state(&self) -> Result<WaveState<f64>, Failure> {
        let single = |basis, n: usize| -> Result<WaveState<f64>, Failure> {
            if n == 0 {
                return Err(config("initial.n must be >= 1"));
            }
            let mut c = vec![Complex::new(0.0, 0.0); n];
            c[n - 1] = Complex::new(1.0, 0.0);
            WaveState::new(basis, 0.0, c).map_err(invalid)
        };
        match &self.initial {
            InitialSpec::Eigen { n } => single(Basis::InstantaneousEigen, *n),
            InitialSpec::Moving { n } => single(Basis::MovingBasis, *n),
            InitialSpec::Coefficients { basis, re, im } => {
                if !im.is_empty() && im.len() != re.len() {
                    return Err(config("initial.im must be empty or as long as initial.re"));
                }
                let c = re
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| Complex::new(r, im.get(i).copied().unwrap_or(0.0)))
                    .collect();
                let basis = match basis {
                    BasisSpec::Eigen => Basis::InstantaneousEigen,
                    BasisSpec::Moving => Basis::MovingBasis,
                };
                let mut s = WaveState::new(basis, 0.0, c).map_err(invalid)?;
                s.normalize().map_err(invalid)?;
                Ok(s)
            }
        }
    }

    pub fn times(&self) -> Result<Vec<f64>, Failure> {
        grid("time", &self.time)
    }

    pub fn points(&self) -> Result<Vec<f64>, Failure> {
        grid("space", &self.space)
    }

    pub fn solver(&self) -> SolverConfig<f64> {
        SolverConfig {
            modes: self.spectral.modes,
            rtol: self.spectral.rtol,
            atol: self.spectral.atol,
            leak_threshold: self.spectral.leak_threshold,
            max_modes: self.spectral.max_modes,
            ..SolverConfig::default()
        }
    }

    /// Solves the evolution of the initial state on `[0, t_end]`.
    pub fn evolution(
        &self,
        model: &WellModel<f64>,
        t_end: f64,
    ) -> movingwall::Result<Box<dyn Evolution<f64>>> {
        let initial = self.initial_state().map_err(|f| movingwall::Error::InvalidParameter {
            name: "initial",
            reason: f.to_string(),
        })?;
        evolution_for(self.backend, model, &initial, t_end, self)
    }
}

/// Evolution of `initial` under `model` with the given backend.
pub fn evolution_for(
    backend: Backend,
    model: &WellModel<f64>,
    initial: &WaveState<f64>,
    t_end: f64,
    scenario: &Scenario,
) -> movingwall::Result<Box<dyn Evolution<f64>>> {
    match backend {
        Backend::Analytic => match (scenario.analytic.modes, initial.basis) {
            (Some(k), Basis::InstantaneousEigen) if !model.wall.is_static() => {
                Ok(Box::new(AnalyticEvolution::with_modes(model, initial, k)?))
            }
            _ => Ok(Box::new(AnalyticEvolution::new(model, initial, Truncation::default())?)),
        },
        Backend::Spectral => {
            let t_end = if t_end > 0.0 { t_end } else { 1.0 };
            let cfg = scenario.solver();
            let segments = scenario.spectral.segments;
            match initial.basis {
                Basis::InstantaneousEigen => Ok(Box::new(SpectralEvolution::new(
                    model, initial, t_end, segments, &cfg,
                )?)),
                Basis::MovingBasis => {
                    let source = Generated {
                        min_modes: initial.modes(),
                        make: |modes: usize| moving_in_eigenbasis(initial, model, modes),
                    };
                    Ok(Box::new(SpectralEvolution::new(
                        model, &source, t_end, segments, &cfg,
                    )?))
                }
            }
        }
    }
}

/// `Σ c_n ψ_n(·, 0)` in the eigenbasis, truncated to `modes` terms.
pub fn moving_in_eigenbasis(
    state: &WaveState<f64>,
    model: &WellModel<f64>,
    modes: usize,
) -> movingwall::Result<WaveState<f64>> {
    let mut acc = vec![Complex::new(0.0, 0.0); modes];
    for (i, c) in state.coeffs.iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        let mode = moving_mode_in_eigenbasis(i + 1, state.t, modes, model)?;
        for (a, m) in acc.iter_mut().zip(&mode.coeffs) {
            *a += c * m;
        }
    }
    WaveState::new(Basis::InstantaneousEigen, state.t, acc)
}

fn grid(name: &str, g: &GridSpec) -> Result<Vec<f64>, Failure> {
    let pts = match (&g.values, g.start, g.stop, g.count) {
        (Some(v), None, None, None) => v.clone(),
        (None, Some(a), Some(b), Some(n)) => {
            if n == 0 {
                return Err(config(format!("{name}.count must be >= 1")));
            }
            if n == 1 {
                vec![a]
            } else {
                let h = (b - a) / (n - 1) as f64;
                (0..n).map(|i| if i + 1 == n { b } else { a + h * i as f64 }).collect()
            }
        }
        _ => {
            return Err(config(format!(
                "{name} needs either `values` or all of `start`, `stop`, `count`"
            )))
        }
    };
    if pts.is_empty() || pts.iter().any(|v| !v.is_finite()) {
        return Err(config(format!("{name} grid must be non-empty and finite")));
    }
    if pts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config(format!("{name} grid must be strictly increasing")));
    }
    Ok(pts)
}
