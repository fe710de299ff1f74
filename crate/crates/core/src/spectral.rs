//! Galerkin evolution in the instantaneous eigenbasis.
//!
//! Writing `ψ = Σ_k a_k(t) φ_k(x,t)` turns the Schrödinger equation into
//!
//! ```text
//! i ȧ_n = E_n(t) a_n - i (L̇/L) Σ_k G_nk a_k,
//! G_nk = (-1)^{n+k} 2nk / (n² - k²),   G_nn = 0,
//! ```
//!
//! where `(L̇/L) G_nk = ⟨φ_n|∂_t φ_k⟩`. `G` is antisymmetric, so truncation
//! keeps the evolution unitary. Products with `G` split into a Toeplitz and
//! a Hankel part, `2nk/(n²-k²) = k/(n-k) + k/(n+k)`, and run through FFTs.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::model::{WallMotion, WellModel};
use crate::ode::{Dopri5, Stats, Tolerances};
use crate::scalar::{cis, Real};
use crate::wave::{Basis, WaveState};

/// Below this size products with `G` use the dense matrix.
const DENSE_LIMIT: usize = 96;

/// The time-independent coupling factor `G`.
#[derive(Clone)]
pub struct CouplingMatrix<T: Real> {
    modes: usize,
    engine: Engine<T>,
}

#[derive(Clone)]
enum Engine<T: Real> {
    Dense(Vec<T>),
    Fft {
        size: usize,
        forward: Arc<dyn Fft<T>>,
        inverse: Arc<dyn Fft<T>>,
        toeplitz: Vec<Complex<T>>,
        hankel: Vec<Complex<T>>,
    },
}

impl<T: Real> std::fmt::Debug for CouplingMatrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.engine {
            Engine::Dense(_) => "dense",
            Engine::Fft { .. } => "fft",
        };
        f.debug_struct("CouplingMatrix")
            .field("modes", &self.modes)
            .field("engine", &kind)
            .finish()
    }
}

impl<T: Real> CouplingMatrix<T> {
    pub fn new(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(invalid("modes", "need at least one mode"));
        }
        if modes <= DENSE_LIMIT {
            Ok(Self::dense(modes))
        } else {
            Ok(Self::fast(modes))
        }
    }

    /// Dense storage regardless of size.
    pub fn dense(modes: usize) -> Self {
        let mut g = vec![T::zero(); modes * modes];
        for n in 1..=modes {
            for k in 1..=modes {
                g[(n - 1) * modes + (k - 1)] = Self::entry(n, k);
            }
        }
        Self {
            modes,
            engine: Engine::Dense(g),
        }
    }

    /// FFT-based products regardless of size.
    pub fn fast(modes: usize) -> Self {
        let size = smooth_size(2 * modes - 1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let zero = Complex::new(T::zero(), T::zero());
        let mut toeplitz = vec![zero; size];
        let mut hankel = vec![zero; size];
        let big_k = modes as i64;
        for m in -(big_k - 1)..big_k {
            let slot = m.rem_euclid(size as i64) as usize;
            if m != 0 {
                toeplitz[slot] = Complex::new(T::one() / T::lit(m as f64), T::zero());
            }
            hankel[slot] = Complex::new(T::one() / T::lit((m + big_k + 1) as f64), T::zero());
        }
        forward.process(&mut toeplitz);
        forward.process(&mut hankel);
        // The Hankel part acts on the reversed input, whose transform is
        // U[N - q] times this phase; fold the phase into the kernel.
        let unit = -T::lit(2.0) * T::PI() / T::from_usize_lossy(size);
        for (q, h) in hankel.iter_mut().enumerate() {
            let turn = (q * (modes - 1)) % size;
            *h = *h * cis(unit * T::from_usize_lossy(turn));
        }
        Self {
            modes,
            engine: Engine::Fft {
                size,
                forward,
                inverse,
                toeplitz,
                hankel,
            },
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// `G_nk`, one-based.
    pub fn entry(n: usize, k: usize) -> T {
        if n == k {
            return T::zero();
        }
        let (nf, kf) = (T::from_usize_lossy(n), T::from_usize_lossy(k));
        T::parity(n + k) * T::lit(2.0) * nf * kf / ((nf - kf) * (nf + kf))
    }

    /// Scratch buffers for [`Self::apply_with`].
    pub fn workspace(&self) -> Workspace<T> {
        let zero = Complex::new(T::zero(), T::zero());
        match &self.engine {
            Engine::Dense(_) => Workspace {
                u: Vec::new(),
                v: Vec::new(),
                scratch: Vec::new(),
            },
            Engine::Fft {
                size,
                forward,
                inverse,
                ..
            } => Workspace {
                u: vec![zero; *size],
                v: vec![zero; *size],
                scratch: vec![
                    zero;
                    forward
                        .get_inplace_scratch_len()
                        .max(inverse.get_inplace_scratch_len())
                ],
            },
        }
    }

    /// `out = G a`.
    pub fn apply(&self, a: &[Complex<T>], out: &mut [Complex<T>]) {
        let mut ws = self.workspace();
        self.apply_with(a, out, &mut ws);
    }

    /// `out = G a`, reusing `ws` from [`Self::workspace`].
    pub fn apply_with(&self, a: &[Complex<T>], out: &mut [Complex<T>], ws: &mut Workspace<T>) {
        let k = self.modes;
        assert_eq!(a.len(), k, "vector length must equal the number of modes");
        assert_eq!(out.len(), k, "output length must equal the number of modes");
        match &self.engine {
            Engine::Dense(g) => {
                for (n, o) in out.iter_mut().enumerate() {
                    let row = &g[n * k..(n + 1) * k];
                    *o = row
                        .iter()
                        .zip(a)
                        .fold(Complex::new(T::zero(), T::zero()), |acc, (&g, &v)| acc + v * g);
                }
            }
            Engine::Fft {
                size,
                forward,
                inverse,
                toeplitz,
                hankel,
            } => {
                let zero = Complex::new(T::zero(), T::zero());
                let Workspace { u, v, scratch } = ws;
                u.fill(zero);
                let mut weight = T::zero();
                for (i, &c) in a.iter().enumerate() {
                    weight = weight + T::one();
                    // u_k = (-1)^k k a_k
                    u[i] = if i % 2 == 0 { c * (-weight) } else { c * weight };
                }
                forward.process_with_scratch(u, scratch);
                let n = *size;
                v[0] = u[0] * toeplitz[0] + u[0] * hankel[0];
                for q in 1..n {
                    v[q] = u[q] * toeplitz[q] + u[n - q] * hankel[q];
                }
                std::mem::swap(u, v);
                inverse.process_with_scratch(u, scratch);
                let norm = T::one() / T::from_usize_lossy(*size);
                let half = T::lit(0.5);
                for (i, o) in out.iter_mut().enumerate() {
                    // the Hankel part includes the diagonal k = n term u_n/(2n)
                    let diag_free = u[i] * norm;
                    let r = if i % 2 == 0 {
                        -(diag_free + a[i] * half)
                    } else {
                        diag_free - a[i] * half
                    };
                    *o = r;
                }
            }
        }
    }
}

/// Scratch space for FFT-based products with [`CouplingMatrix`].
pub struct Workspace<T> {
    u: Vec<Complex<T>>,
    v: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

/// Smallest `2^a 3^b 5^c >= n`.
fn smooth_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// Integration and basis-growth settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Fixed truncation; `None` selects and grows it automatically.
    pub modes: Option<usize>,
    pub rtol: T,
    pub atol: T,
    pub max_step: T,
    /// Largest tolerated `|‖a‖² - ‖a(t₀)‖²|`.
    pub norm_alarm: T,
    /// Largest tolerated weight `|a_k|²` among the top modes.
    pub leak_threshold: T,
    /// Factor applied to `K` when the leak threshold is exceeded.
    pub growth: T,
    pub max_modes: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            modes: None,
            rtol: T::lit(1e-10),
            atol: T::lit(1e-13),
            max_step: T::infinity(),
            norm_alarm: T::lit(1e-8),
            leak_threshold: T::lit(1e-12),
            growth: T::lit(1.5),
            max_modes: 1 << 14,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step,
            first_step: None,
        }
        .validate()?;
        if matches!(self.modes, Some(0)) {
            return Err(invalid("modes", "must be >= 1"));
        }
        if !(self.norm_alarm > T::zero() && self.leak_threshold > T::zero()) {
            return Err(invalid("thresholds", "norm alarm and leak threshold must be > 0"));
        }
        if !(self.growth > T::one()) {
            return Err(invalid("growth", "must exceed 1"));
        }
        if self.max_modes == 0 {
            return Err(invalid("max_modes", "must be >= 1"));
        }
        Ok(())
    }

    fn tolerances(&self) -> Tolerances<T> {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step,
            first_step: None,
        }
    }
}

/// Initial condition that can be produced at any truncation.
pub trait InitialState<T: Real> {
    /// Smallest truncation that represents the state.
    fn min_modes(&self) -> usize;
    /// The state in the eigenbasis with exactly `modes` coefficients.
    fn with_modes(&self, modes: usize) -> Result<WaveState<T>>;
}

impl<T: Real> InitialState<T> for WaveState<T> {
    fn min_modes(&self) -> usize {
        self.modes()
    }

    fn with_modes(&self, modes: usize) -> Result<WaveState<T>> {
        self.require(Basis::InstantaneousEigen)?;
        if modes < self.modes() {
            return Err(invalid("modes", "cannot truncate a fixed initial state"));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(modes, Complex::new(T::zero(), T::zero()));
        WaveState::new(Basis::InstantaneousEigen, self.t, coeffs)
    }
}

/// Initial condition generated on demand for a given truncation.
pub struct Generated<F> {
    pub min_modes: usize,
    pub make: F,
}

impl<T: Real, F: Fn(usize) -> Result<WaveState<T>>> InitialState<T> for Generated<F> {
    fn min_modes(&self) -> usize {
        self.min_modes
    }

    fn with_modes(&self, modes: usize) -> Result<WaveState<T>> {
        let state = (self.make)(modes)?;
        state.require(Basis::InstantaneousEigen)?;
        if state.modes() != modes {
            return Err(Error::BasisMismatch {
                expected: "requested truncation",
                found: "different length",
            });
        }
        Ok(state)
    }
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct SpectralRun<T> {
    /// One state per requested output time.
    pub states: Vec<WaveState<T>>,
    pub modes: usize,
    pub stats: Stats,
    /// Largest norm drift seen at accepted steps.
    pub norm_drift: T,
    /// Largest top-mode weight seen at accepted steps.
    pub boundary_weight: T,
    /// Truncations abandoned because of basis leakage.
    pub restarts: usize,
}

/// Starting truncation: the initial state's size or `⌈7 M/π⌉` with
/// `M = m q L` at the latest time, whichever is larger.
pub fn auto_modes<T: Real>(model: &WellModel<T>, t_max: T, min_modes: usize) -> Result<usize> {
    let scale = model.mass * model.wall.speed() * model.length(t_max)?;
    let rule = (T::lit(7.0) * scale / T::PI()).ceil().to_usize().unwrap_or(usize::MAX);
    Ok(rule.max(min_modes).max(16))
}

/// Evolves `initial` (eigenbasis, at its own time) and returns the state at
/// every output time. Outputs must be monotone; decreasing times integrate
/// backwards.
pub fn evolve<T: Real, I: InitialState<T> + ?Sized>(
    model: &WellModel<T>,
    initial: &I,
    outputs: &[T],
    cfg: &SolverConfig<T>,
) -> Result<SpectralRun<T>> {
    cfg.validate()?;
    let Some(&t_last) = outputs.last() else {
        return Err(invalid("outputs", "need at least one output time"));
    };
    let t_max = outputs.iter().copied().fold(t_last, T::max);
    let mut modes = match cfg.modes {
        Some(k) => k.max(initial.min_modes()),
        None => auto_modes(model, t_max, initial.min_modes())?,
    };
    if modes > cfg.max_modes {
        return Err(invalid("modes", format!("{modes} exceeds the cap {}", cfg.max_modes)));
    }
    let mut restarts = 0;
    loop {
        let start = initial.with_modes(modes)?;
        match run_fixed(model, &start, outputs, cfg) {
            Err(Error::BasisExhausted { weight, threshold, .. }) => {
                if cfg.modes.is_some() || modes == cfg.max_modes {
                    return Err(Error::BasisExhausted {
                        weight,
                        threshold,
                        cap: modes,
                    });
                }
                let grown = (T::from_usize_lossy(modes) * cfg.growth).ceil();
                modes = grown.to_usize().unwrap_or(usize::MAX).min(cfg.max_modes);
                restarts += 1;
            }
            Ok(mut run) => {
                run.restarts = restarts;
                return Ok(run);
            }
            Err(e) => return Err(e),
        }
    }
}

fn boundary_weight<T: Real>(a: &[Complex<T>]) -> T {
    let width = (a.len() / 100).max(1);
    a[a.len() - width..]
        .iter()
        .map(|c| c.norm_sqr())
        .fold(T::zero(), T::max)
}

fn run_fixed<T: Real>(
    model: &WellModel<T>,
    start: &WaveState<T>,
    outputs: &[T],
    cfg: &SolverConfig<T>,
) -> Result<SpectralRun<T>> {
    let modes = start.modes();
    let t0 = start.t;
    let t_end = *outputs.last().expect("checked by caller");
    let dir = if t_end >= t0 { T::one() } else { -T::one() };
    for w in outputs.windows(2) {
        if dir * (w[1] - w[0]) < T::zero() {
            return Err(invalid("outputs", "times must be monotone"));
        }
    }
    if dir * (outputs[0] - t0) < T::zero() {
        return Err(invalid("outputs", "times must not precede the initial state"));
    }
    for &t in outputs {
        model.length(t)?;
    }
    let norm0 = start.norm_sqr();
    let lead = boundary_weight(&start.coeffs);

    if let WallMotion::Static { .. } = model.wall {
        // L̇ = 0 decouples the modes: the exact solution is a phase per mode.
        let states = outputs
            .iter()
            .map(|&t| {
                let coeffs = start
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| a * cis(-model.energy_at_length(i + 1, model.wall.initial_length()) * (t - t0)))
                    .collect();
                WaveState::new(Basis::InstantaneousEigen, t, coeffs)
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(SpectralRun {
            states,
            modes,
            stats: Stats::default(),
            norm_drift: T::zero(),
            boundary_weight: lead,
            restarts: 0,
        });
    }

    if lead > cfg.leak_threshold {
        return Err(Error::BasisExhausted {
            weight: lead.to_f64_lossy(),
            threshold: cfg.leak_threshold.to_f64_lossy(),
            cap: modes,
        });
    }
    let g = CouplingMatrix::new(modes)?;
    let energies_unit: Vec<T> = (1..=modes)
        .map(|n| model.energy_at_length(n, T::one()))
        .collect();
    let mut ga = vec![Complex::new(T::zero(), T::zero()); modes];
    let mut ws = g.workspace();
    let mut rhs = |t: T, a: &[Complex<T>], da: &mut [Complex<T>]| -> Result<()> {
        let l = model.wall.length_unchecked(t.max(T::zero()));
        let rate = model.wall.velocity_unchecked(t.max(T::zero())) / l;
        let inv_l2 = T::one() / (l * l);
        g.apply_with(a, &mut ga, &mut ws);
        for n in 0..a.len() {
            let e = energies_unit[n] * inv_l2;
            da[n] = Complex::new(a[n].im * e, -a[n].re * e) - ga[n] * rate;
        }
        Ok(())
    };

    let mut solver = Dopri5::new(&mut rhs, t0, start.coeffs.clone(), t_end, cfg.tolerances())?;
    let mut states = Vec::with_capacity(outputs.len());
    let mut next = 0;
    while next < outputs.len() && outputs[next] == t0 {
        states.push(start.clone());
        next += 1;
    }
    let mut drift = T::zero();
    let mut weight = lead;
    while next < outputs.len() {
        solver.step(&mut rhs)?;
        let y = solver.y();
        let norm = y.iter().map(|c| c.norm_sqr()).sum::<T>();
        let d = (norm - norm0).abs();
        drift = drift.max(d);
        if d > cfg.norm_alarm || !d.is_finite() {
            return Err(Error::NormDrift {
                t: solver.t().to_f64_lossy(),
                drift: d.to_f64_lossy(),
                threshold: cfg.norm_alarm.to_f64_lossy(),
            });
        }
        let w = boundary_weight(y);
        weight = weight.max(w);
        if w > cfg.leak_threshold {
            return Err(Error::BasisExhausted {
                weight: w.to_f64_lossy(),
                threshold: cfg.leak_threshold.to_f64_lossy(),
                cap: modes,
            });
        }
        while next < outputs.len() && dir * (outputs[next] - solver.t()) <= T::zero() {
            let t = outputs[next];
            let coeffs = if t == solver.t() {
                solver.y().to_vec()
            } else {
                solver.dense(t)
            };
            states.push(WaveState::new(Basis::InstantaneousEigen, t, coeffs)?);
            next += 1;
        }
    }
    Ok(SpectralRun {
        states,
        modes,
        stats: solver.stats(),
        norm_drift: drift,
        boundary_weight: weight,
        restarts: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_are_antisymmetric() {
        let k = 30;
        let mut worst: f64 = 0.0;
        for n in 1..=k {
            assert_eq!(CouplingMatrix::<f64>::entry(n, n), 0.0);
            for m in 1..=k {
                worst = worst.max(
                    (CouplingMatrix::<f64>::entry(n, m) + CouplingMatrix::<f64>::entry(m, n)).abs(),
                );
            }
        }
        assert!(worst < 1e-12);
        // G_12 = (-1)^3 * 4 / (1 - 4)
        assert!((CouplingMatrix::<f64>::entry(1, 2) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fft_product_matches_dense() {
        for k in [1usize, 2, 7, 50, 129] {
            let a: Vec<Complex<f64>> = (0..k)
                .map(|i| Complex::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos() / (1.0 + i as f64)))
                .collect();
            let mut dense = vec![Complex::new(0.0, 0.0); k];
            let mut fast = dense.clone();
            CouplingMatrix::<f64>::dense(k).apply(&a, &mut dense);
            CouplingMatrix::<f64>::fast(k).apply(&a, &mut fast);
            let scale = dense.iter().map(|c| c.norm()).fold(1.0, f64::max);
            for (d, f) in dense.iter().zip(&fast) {
                assert!((d - f).norm() < 1e-12 * scale, "K = {k}: {d} vs {f}");
            }
        }
    }

    #[test]
    fn static_wall_is_stationary() {
        let model = WellModel::electron(WallMotion::fixed(100.0).unwrap()).unwrap();
        let init = WaveState::eigenstate(4, 8, 0.0).unwrap();
        let run = evolve(&model, &init, &[0.0, 3.0, 10.0], &SolverConfig::default()).unwrap();
        let e = model.energy(4, 0.0).unwrap();
        for s in &run.states {
            assert!((s.coeffs[3] - cis(-e * s.t)).norm() < 1e-14);
            assert!(s.tail_weight(4) == 0.0);
        }
    }

    #[test]
    fn config_is_validated() {
        let cfg = SolverConfig::<f64> {
            growth: 1.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
