//! Weak values with postselection and a Monte Carlo model of the
//! cavity-ensemble signalling protocol.
//!
//! The pointer is treated to first order in the coupling: a postselected
//! cavity yields a Gaussian pointer reading centred on `g Re Pʷ` with the
//! pointer's own spread `s`, and a pointer-momentum reading centred on
//! `g Im Pʷ / (2 s²)` with spread `1/(2s)`. The model is only valid while
//! `g |Pʷ| / s` stays small, which [`PointerModel`] enforces.
//!
//! The Monte Carlo layer is `f64` only. Cavities are simulated in chunks,
//! each with its own ChaCha stream derived from the run seed, so results do
//! not depend on the number of threads.

use num_complex::Complex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::Evolution;
use crate::model::WellModel;
use crate::observables::{light_cone, weak_momentum_local, NODE_GUARD};
use crate::quad::GaussLegendre;
use crate::scalar::{cis, Real};
use crate::wave::{Basis, SpectralView, WaveState};

/// Cavities per random stream.
const CHUNK: u64 = 1 << 16;

/// Terms per partial sum in long, order-independent reductions.
const SUM_CHUNK: usize = 4096;

/// Operator sandwiched between pre- and postselection.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator<T> {
    Identity,
    Position,
    Momentum,
    /// Dense matrix in the basis of the preselected state; row `k` gives
    /// the coefficient of mode `k + 1` of `Aψ`.
    Matrix(Vec<Vec<Complex<T>>>),
}

fn postselected_value<T: Real>(view: &SpectralView<T>, x: T) -> Result<Complex<T>> {
    let value = view.value(x);
    if value.norm_sqr() > T::lit(NODE_GUARD) / view.length() {
        Ok(value)
    } else {
        Err(Error::VanishingPostselection(x.to_f64_lossy()))
    }
}

/// `Aʷ = ⟨x_f|A|ψ⟩ / ⟨x_f|ψ⟩`.
pub fn weak_value_generic<T: Real>(
    op: &Operator<T>,
    pre: &WaveState<T>,
    model: &WellModel<T>,
    x_f: T,
) -> Result<Complex<T>> {
    model.check_inside(x_f, pre.t)?;
    let view = SpectralView::new(pre, model)?;
    let denominator = postselected_value(&view, x_f)?;
    match op {
        Operator::Identity => Ok(denominator / denominator),
        Operator::Position => Ok(Complex::new(x_f, T::zero())),
        Operator::Momentum => Ok(weak_momentum_local(&view.local(x_f))),
        Operator::Matrix(rows) => {
            if rows.iter().any(|r| r.len() != pre.modes()) {
                return Err(invalid("matrix", "row length must equal the number of modes"));
            }
            let coeffs = rows
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(&pre.coeffs)
                        .fold(Complex::new(T::zero(), T::zero()), |acc, (a, c)| acc + a * c)
                })
                .collect();
            let image = WaveState::new(pre.basis, pre.t, coeffs)?;
            Ok(SpectralView::new(&image, model)?.value(x_f) / denominator)
        }
    }
}

/// `⟨φ_k|x|φ_n⟩` for a well of length `L`.
pub fn position_element<T: Real>(k: usize, n: usize, length: T) -> T {
    if k == n {
        return length / T::lit(2.0);
    }
    if (k + n) % 2 == 0 {
        return T::zero();
    }
    let (kf, nf) = (T::from_usize_lossy(k), T::from_usize_lossy(n));
    let gap = kf * kf - nf * nf;
    -T::lit(8.0) * length * kf * nf / (T::PI() * T::PI() * gap * gap)
}

/// `Xψ` expanded in the first `modes` functions of the state's basis.
///
/// In the moving basis the chirps cancel and `⟨ψ_k|x|ψ_n⟩` is the
/// eigen-basis element times `exp(i (k² - n²) Θ)`.
pub fn apply_position<T: Real>(
    state: &WaveState<T>,
    model: &WellModel<T>,
    modes: usize,
) -> Result<WaveState<T>> {
    if modes == 0 {
        return Err(invalid("modes", "must be >= 1"));
    }
    let length = model.length(state.t)?;
    let theta = match state.basis {
        Basis::MovingBasis => model.eigenphase(state.t)?,
        Basis::InstantaneousEigen => T::zero(),
    };
    let support: Vec<(usize, Complex<T>)> = state
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm_sqr() > T::zero())
        .map(|(i, &c)| (i + 1, c))
        .collect();
    let row = |k: usize| {
        let kf = T::from_usize_lossy(k);
        support
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |acc, &(n, c)| {
                let nf = T::from_usize_lossy(n);
                let x = position_element(k, n, length);
                if x == T::zero() {
                    acc
                } else {
                    acc + c * cis((kf * kf - nf * nf) * theta) * x
                }
            })
    };
    let coeffs = (1..=modes).into_par_iter().map(row).collect();
    WaveState::new(state.basis, state.t, coeffs)
}

/// `Σ_k b_k [ψ_k(x,t_f) - ψ_k(x,t_w)]` for moving-basis coefficients `b`,
/// summed term by term so that nothing cancels at the end.
fn moving_increment<T: Real>(b: &[Complex<T>], model: &WellModel<T>, x: T, t_w: T, t_f: T) -> Result<Complex<T>> {
    let frame = |t: T| -> Result<(T, T, T)> {
        let l = model.length(t)?;
        Ok((l, model.eigenphase(t)?, model.mass * model.wall.speed() / l))
    };
    let (lw, thw, aw) = frame(t_w)?;
    let (lf, thf, af) = frame(t_f)?;
    let two = T::lit(2.0);
    let (nw, nf) = ((two / lw).sqrt(), (two / lf).sqrt());
    let (cw, cf) = (cis(aw * x * x / two), cis(af * x * x / two));
    let partials: Vec<Complex<T>> = b
        .par_chunks(SUM_CHUNK)
        .enumerate()
        .map(|(chunk, part)| {
            part.iter()
                .enumerate()
                .fold(Complex::new(T::zero(), T::zero()), |acc, (i, &c)| {
                    let k = T::from_usize_lossy(chunk * SUM_CHUNK + i + 1);
                    let later = cf * cis(-k * k * thf) * (nf * (k * T::PI() * x / lf).sin());
                    let earlier = cw * cis(-k * k * thw) * (nw * (k * T::PI() * x / lw).sin());
                    acc + c * (later - earlier)
                })
        })
        .collect();
    Ok(partials
        .into_iter()
        .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b))
}

/// Weak momentum from a weak position measurement at `t_w` and a strong
/// one at `x_f` at `t_f`: `m (x_f - Xʷ)/(t_f - t_w)` with
/// `Xʷ = ⟨x_f|U(t_f,t_w) X|ψ(t_w)⟩ / ⟨x_f|ψ(t_f)⟩`.
///
/// `X|ψ(t_w)⟩` is kept to `modes` basis functions. The numerator is
/// computed as `x_f ψ(x_f,t_w) + ⟨x_f|(U - 1) Xψ⟩`.
pub fn position_estimator<T: Real, E: Evolution<T> + ?Sized>(
    evolution: &E,
    x_f: T,
    t_w: T,
    t_f: T,
    modes: usize,
) -> Result<Complex<T>> {
    if !(t_f > t_w) {
        return Err(invalid("t_f", "must exceed t_w"));
    }
    let model = *evolution.model();
    model.check_inside(x_f, t_w)?;
    model.check_inside(x_f, t_f)?;
    let pre = evolution.state_at(t_w)?;
    let post = SpectralView::new(&evolution.state_at(t_f)?, &model)?;
    let denominator = postselected_value(&post, x_f)?;
    let image = apply_position(&pre, &model, modes)?;
    let increment = match image.basis {
        Basis::MovingBasis => moving_increment(&image.coeffs, &model, x_f, t_w, t_f)?,
        Basis::InstantaneousEigen => {
            let later = evolution.propagate(&image, t_f)?;
            SpectralView::new(&later, &model)?.value(x_f) - SpectralView::new(&image, &model)?.value(x_f)
        }
    };
    let start = SpectralView::new(&pre, &model)?.value(x_f);
    let weak_x = (start * x_f + increment) / denominator;
    Ok((Complex::new(x_f, T::zero()) - weak_x) * (model.mass / (t_f - t_w)))
}

/// First-order pointer coupled to the particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerModel {
    /// Effective coupling `g = ∫ g(t) dt`.
    pub coupling: f64,
    /// Position spread `s` of the pointer's initial Gaussian.
    pub spread: f64,
    /// Largest accepted `g |Pʷ| / s`.
    #[serde(default = "default_weakness")]
    pub weakness_bound: f64,
}

fn default_weakness() -> f64 {
    0.1
}

impl PointerModel {
    pub fn new(coupling: f64, spread: f64) -> Result<Self> {
        let p = Self {
            coupling,
            spread,
            weakness_bound: default_weakness(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(invalid("coupling", format!("must be > 0, got {}", self.coupling)));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(invalid("spread", format!("must be > 0, got {}", self.spread)));
        }
        if !(self.weakness_bound > 0.0) {
            return Err(invalid("weakness_bound", "must be > 0"));
        }
        Ok(())
    }

    pub fn weakness(&self, weak: Complex<f64>) -> f64 {
        self.coupling * weak.norm() / self.spread
    }

    pub fn check(&self, weak: Complex<f64>) -> Result<()> {
        let ratio = self.weakness(weak);
        if ratio > self.weakness_bound {
            return Err(Error::WeaknessViolated {
                ratio,
                bound: self.weakness_bound,
            });
        }
        Ok(())
    }

    pub fn momentum_spread(&self) -> f64 {
        0.5 / self.spread
    }
}

/// Strong final position measurement accepting `|x - x_f| <= ε_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostselectionWindow {
    pub center: f64,
    pub half_width: f64,
}

impl PostselectionWindow {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && center - half_width > 0.0) {
            return Err(invalid("window", "need 0 < x_f - ε_w and ε_w > 0"));
        }
        Ok(Self { center, half_width })
    }

    /// `∫_window |ψ|² dx`.
    pub fn probability(&self, state: &WaveState<f64>, model: &WellModel<f64>) -> Result<f64> {
        let (a, b) = (self.center - self.half_width, self.center + self.half_width);
        let l = model.length(state.t)?;
        if !(a > 0.0 && b < l) {
            return Err(invalid("window", format!("[{a}, {b}] must lie inside (0, {l})")));
        }
        let view = SpectralView::new(state, model)?;
        let p = GaussLegendre::new(16).integrate_panels(a, b, 8, |x| view.value(x).norm_sqr());
        if !(p > 0.0 && p <= 1.0 + 1e-9) {
            return Err(Error::VanishingPostselection(self.center));
        }
        Ok(p.min(1.0))
    }
}

/// What Bob's cavities look like under one value of Alice's bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hypothesis {
    /// `Pʷ(x_f, t_w)`.
    pub weak: Complex<f64>,
    /// Postselection probability at `t_f`.
    pub postselection: f64,
}

impl Hypothesis {
    pub fn from_evolution<E: Evolution<f64> + ?Sized>(
        evolution: &E,
        window: &PostselectionWindow,
        t_w: f64,
        t_f: f64,
    ) -> Result<Self> {
        let model = evolution.model();
        let pre = evolution.state_at(t_w)?;
        let weak = weak_value_generic(&Operator::Momentum, &pre, model, window.center)?;
        let postselection = window.probability(&evolution.state_at(t_f)?, model)?;
        Ok(Self {
            weak,
            postselection,
        })
    }
}

/// Both hypotheses plus the timing of Bob's measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolSetup {
    pub window: PostselectionWindow,
    pub t_w: f64,
    pub t_f: f64,
    /// Light-cone time `(L₀ - x)/c` at the window edge nearest the wall.
    pub t_s: f64,
    /// Index 0: wall left at rest; index 1: wall set in motion.
    pub hypotheses: [Hypothesis; 2],
}

impl ProtocolSetup {
    pub fn new<E0, E1>(
        rest: &E0,
        moving: &E1,
        window: PostselectionWindow,
        t_w: f64,
        t_f: f64,
    ) -> Result<Self>
    where
        E0: Evolution<f64> + ?Sized,
        E1: Evolution<f64> + ?Sized,
    {
        if !(t_w >= 0.0 && t_f > t_w) {
            return Err(invalid("t_f", "need 0 <= t_w < t_f"));
        }
        let tag = light_cone(window.center + window.half_width, t_f, moving.model())?;
        if tag.inside {
            return Err(Error::Timing {
                t_f,
                t_s: tag.t_s,
            });
        }
        Ok(Self {
            window,
            t_w,
            t_f,
            t_s: tag.t_s,
            hypotheses: [
                Hypothesis::from_evolution(rest, &window, t_w, t_f)?,
                Hypothesis::from_evolution(moving, &window, t_w, t_f)?,
            ],
        })
    }

    /// Midpoint between the two expected values of `Re Pʷ`.
    pub fn threshold(&self) -> f64 {
        0.5 * (self.hypotheses[0].weak.re + self.hypotheses[1].weak.re)
    }

    /// The bit whose expected `Re Pʷ` is nearest to `estimate`.
    pub fn decide(&self, estimate: f64) -> u8 {
        let [p0, p1] = self.hypotheses.map(|h| h.weak.re);
        u8::from((estimate - p1).abs() < (estimate - p0).abs())
    }

    pub fn check_pointer(&self, pointer: &PointerModel) -> Result<()> {
        pointer.validate()?;
        self.hypotheses.iter().try_for_each(|h| pointer.check(h.weak))
    }
}

/// Pointer readings of one postselected cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityRecord {
    pub index: u64,
    /// Time of the final (strong) measurement.
    pub acquired_at: f64,
    pub reading: f64,
    pub momentum: f64,
}

/// One cavity: `None` if the particle is not found in the window,
/// otherwise the position and momentum pointer readings.
pub fn simulate_cavity<R: Rng + ?Sized>(
    pointer: &PointerModel,
    hypothesis: &Hypothesis,
    rng: &mut R,
) -> Result<Option<(f64, f64)>> {
    pointer.check(hypothesis.weak)?;
    Ok(draw_cavity(pointer, hypothesis, rng))
}

fn draw_cavity<R: Rng + ?Sized>(pointer: &PointerModel, h: &Hypothesis, rng: &mut R) -> Option<(f64, f64)> {
    if rng.random::<f64>() >= h.postselection {
        return None;
    }
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let g = pointer.coupling;
    let s = pointer.spread;
    Some((
        g * h.weak.re + s * z1,
        g * h.weak.im / (2.0 * s * s) + pointer.momentum_spread() * z2,
    ))
}

#[derive(Debug, Default)]
struct Tally {
    count: u64,
    sum: f64,
    sum_momentum: f64,
    records: Vec<CavityRecord>,
}

/// Simulates cavities `0..n` with per-chunk streams of `seed`.
fn simulate_ensemble(
    n: u64,
    pointer: &PointerModel,
    h: &Hypothesis,
    seed: u64,
    acquired_at: Option<f64>,
) -> Tally {
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let mut tally = Tally::default();
            for index in c * CHUNK..((c + 1) * CHUNK).min(n) {
                if let Some((reading, momentum)) = draw_cavity(pointer, h, &mut rng) {
                    tally.count += 1;
                    tally.sum += reading;
                    tally.sum_momentum += momentum;
                    if let Some(t) = acquired_at {
                        tally.records.push(CavityRecord {
                            index,
                            acquired_at: t,
                            reading,
                            momentum,
                        });
                    }
                }
            }
            tally
        })
        .collect();
    parts.into_iter().fold(Tally::default(), |mut acc, part| {
        acc.count += part.count;
        acc.sum += part.sum;
        acc.sum_momentum += part.sum_momentum;
        acc.records.extend(part.records);
        acc
    })
}

/// Outcome of one protocol run over an ensemble of cavities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolRun {
    pub bit: u8,
    pub ensemble: u64,
    pub seed: u64,
    pub postselected: u64,
    /// Sample mean of the position readings divided by `g`.
    pub estimate: f64,
    /// Sample mean of the momentum readings times `2 s² / g`.
    pub momentum_estimate: f64,
    pub threshold: f64,
    pub decision: u8,
    pub error: bool,
    pub t_w: f64,
    pub t_f: f64,
    pub t_s: f64,
    /// Every record was acquired strictly before `t_s`.
    pub before_light_cone: bool,
    pub records: Vec<CavityRecord>,
}

fn check_bit(bit: u8) -> Result<usize> {
    match bit {
        0 | 1 => Ok(usize::from(bit)),
        _ => Err(invalid("bit", format!("must be 0 or 1, got {bit}"))),
    }
}

/// Alice sends `bit`; Bob runs `n` cavities and decides.
pub fn run_protocol(
    bit: u8,
    n: u64,
    pointer: &PointerModel,
    setup: &ProtocolSetup,
    seed: u64,
) -> Result<ProtocolRun> {
    let h = setup.hypotheses[check_bit(bit)?];
    setup.check_pointer(pointer)?;
    if !(setup.t_f < setup.t_s) {
        return Err(Error::Timing {
            t_f: setup.t_f,
            t_s: setup.t_s,
        });
    }
    let tally = simulate_ensemble(n, pointer, &h, seed, Some(setup.t_f));
    if tally.count == 0 {
        return Err(Error::NoPostselection(n as usize));
    }
    let count = tally.count as f64;
    let estimate = tally.sum / count / pointer.coupling;
    let decision = setup.decide(estimate);
    Ok(ProtocolRun {
        bit,
        ensemble: n,
        seed,
        postselected: tally.count,
        estimate,
        momentum_estimate: tally.sum_momentum / count * 2.0 * pointer.spread.powi(2)
            / pointer.coupling,
        threshold: setup.threshold(),
        decision,
        error: decision != bit,
        t_w: setup.t_w,
        t_f: setup.t_f,
        t_s: setup.t_s,
        before_light_cone: tally.records.iter().all(|r| r.acquired_at < setup.t_s),
        records: tally.records,
    })
}

/// Seed of repetition `rep` of an experiment keyed by `key`.
fn derived_seed(master: u64, key: u64, rep: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(key);
    rng.set_word_pos(u128::from(rep) * 2);
    rng.next_u64()
}

/// Bit-error statistics for one ensemble size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRate {
    pub ensemble: u64,
    /// Runs per bit times two.
    pub trials: u64,
    pub errors: u64,
    /// Errors when bit 0 and bit 1 were sent.
    pub errors_by_bit: [u64; 2],
    pub rate: f64,
    /// Upper end of the 95% Wilson score interval.
    pub upper: f64,
}

fn wilson_upper(errors: u64, trials: u64) -> f64 {
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    (p + z2 / (2.0 * n) + z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()) / (1.0 + z2 / n)
}

/// Runs `trials` protocols per bit at ensemble size `n`. A run with no
/// postselected cavity counts as an error.
pub fn bit_error_rate(
    n: u64,
    trials: u64,
    pointer: &PointerModel,
    setup: &ProtocolSetup,
    seed: u64,
) -> Result<ErrorRate> {
    setup.check_pointer(pointer)?;
    if trials == 0 {
        return Err(invalid("trials", "must be >= 1"));
    }
    let mut errors_by_bit = [0; 2];
    for bit in 0..2u8 {
        let h = setup.hypotheses[usize::from(bit)];
        for rep in 0..trials {
            let run_seed = derived_seed(seed, (n << 1) | u64::from(bit), rep);
            let tally = simulate_ensemble(n, pointer, &h, run_seed, None);
            let wrong = tally.count == 0
                || setup.decide(tally.sum / tally.count as f64 / pointer.coupling) != bit;
            errors_by_bit[usize::from(bit)] += u64::from(wrong);
        }
    }
    let total = 2 * trials;
    let errors = errors_by_bit[0] + errors_by_bit[1];
    Ok(ErrorRate {
        ensemble: n,
        trials: total,
        errors,
        errors_by_bit,
        rate: errors as f64 / total as f64,
        upper: wilson_upper(errors, total),
    })
}

/// Smallest ensemble size whose bit-error rate is below the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub target: f64,
    pub ensemble: u64,
    pub accepted: ErrorRate,
    /// Every ensemble size evaluated, in order.
    pub history: Vec<ErrorRate>,
}

/// Doubles `N` from `start` until the Wilson upper bound of the error rate
/// is below `target`, then bisects (geometrically) down to a factor
/// `1.1` between the last failing and the first passing size.
pub fn calibrate(
    target: f64,
    trials: u64,
    pointer: &PointerModel,
    setup: &ProtocolSetup,
    seed: u64,
    start: u64,
    cap: u64,
) -> Result<Calibration> {
    if !(target > 0.0 && target < 0.5) {
        return Err(invalid("target", "must lie in (0, 0.5)"));
    }
    let mut history = Vec::new();
    let mut eval = |n: u64| -> Result<ErrorRate> {
        let r = bit_error_rate(n, trials, pointer, setup, seed)?;
        history.push(r);
        Ok(r)
    };
    let mut lo = 0;
    let mut n = start.max(1);
    let mut hi = loop {
        let r = eval(n)?;
        if r.upper < target {
            break r;
        }
        if n >= cap {
            return Err(Error::CalibrationFailed {
                target,
                cap: cap as usize,
            });
        }
        lo = n;
        n = (n * 2).min(cap);
    };
    while lo > 0 && hi.ensemble as f64 > 1.1 * lo as f64 {
        let mid = ((lo as f64 * hi.ensemble as f64).sqrt().round() as u64).clamp(lo + 1, hi.ensemble - 1);
        let r = eval(mid)?;
        if r.upper < target {
            hi = r;
        } else {
            lo = mid;
        }
    }
    Ok(Calibration {
        target,
        ensemble: hi.ensemble,
        accepted: hi,
        history,
    })
}

/// Root-mean-square estimator error at one ensemble size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub ensemble: u64,
    pub mean_postselected: f64,
    pub rms_error: f64,
}

/// Estimator error of `Re Pʷ` against its exact value, over `reps` runs per
/// ensemble size.
pub fn estimator_scaling(
    bit: u8,
    ensembles: &[u64],
    reps: u64,
    pointer: &PointerModel,
    setup: &ProtocolSetup,
    seed: u64,
) -> Result<Vec<ScalingPoint>> {
    let h = setup.hypotheses[check_bit(bit)?];
    setup.check_pointer(pointer)?;
    ensembles
        .iter()
        .map(|&n| {
            let (mut sq, mut kept, mut used) = (0.0, 0.0, 0u64);
            for rep in 0..reps {
                let tally = simulate_ensemble(n, pointer, &h, derived_seed(seed, n, rep), None);
                if tally.count == 0 {
                    continue;
                }
                let est = tally.sum / tally.count as f64 / pointer.coupling;
                sq += (est - h.weak.re).powi(2);
                kept += tally.count as f64;
                used += 1;
            }
            if used == 0 {
                return Err(Error::NoPostselection(n as usize));
            }
            Ok(ScalingPoint {
                ensemble: n,
                mean_postselected: kept / used as f64,
                rms_error: (sq / used as f64).sqrt(),
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("data", "need at least two (x, y) pairs"));
    }
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2))
    });
    if !(sxx > 0.0) {
        return Err(invalid("data", "x values must differ"));
    }
    Ok(sxy / sxx)
}
