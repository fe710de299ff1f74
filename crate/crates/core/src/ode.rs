//! Adaptive Dormand–Prince 5(4) integrator with continuous output.
//!
//! The scheme, its embedded error estimator and the quartic dense-output
//! polynomial follow Dormand & Prince (1980) and Shampine (1986). Error
//! control is the usual RMS of `err_i / (atol + rtol max(|y_i|, |y'_i|))`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Component type of an ODE state vector.
pub trait Element<T: Real>:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<T, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(self) -> T {
        self.magnitude_sqr().sqrt()
    }
    fn magnitude_sqr(self) -> T;
}

impl<T: Real> Element<T> for T {
    fn zero() -> Self {
        T::zero()
    }
    fn magnitude(self) -> T {
        self.abs()
    }
    fn magnitude_sqr(self) -> T {
        self * self
    }
}

impl<T: Real> Element<T> for Complex<T> {
    fn zero() -> Self {
        Complex::new(T::zero(), T::zero())
    }
    fn magnitude_sqr(self) -> T {
        self.norm_sqr()
    }
}

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
    pub max_step: T,
    /// Initial step; chosen automatically when `None`.
    pub first_step: Option<T>,
}

impl<T: Real> Tolerances<T> {
    pub fn new(rtol: T, atol: T) -> Result<Self> {
        let tol = Self {
            rtol,
            atol,
            max_step: T::infinity(),
            first_step: None,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > T::zero() && self.atol > T::zero()) {
            return Err(invalid("tolerance", "rtol and atol must be > 0"));
        }
        if !(self.max_step > T::zero()) {
            return Err(invalid("max_step", "must be > 0"));
        }
        if matches!(self.first_step, Some(h) if !(h > T::zero())) {
            return Err(invalid("first_step", "must be > 0"));
        }
        Ok(())
    }
}

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [&[f64]; 6] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];
/// Dense output: `y(t + θh) = y + h Σ_i k_i Σ_j P[i][j] θ^{j+1}`.
const P: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0, 0.0, 0.0, 0.0],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Counters kept by [`Dopri5`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrator state; advance with [`Dopri5::step`], interpolate within the
/// last step with [`Dopri5::dense`].
///
/// Integration direction follows the sign of `t_bound - t0`.
pub struct Dopri5<T, S> {
    t: T,
    t_old: T,
    t_bound: T,
    direction: T,
    h_abs: T,
    y: Vec<S>,
    y_old: Vec<S>,
    k: [Vec<S>; 7],
    tol: Tolerances<T>,
    stats: Stats,
    scratch: Vec<S>,
    /// `k[6]` holds `f(t, y)` of the last accepted step.
    advanced: bool,
}

impl<T: Real, S: Element<T>> Dopri5<T, S> {
    pub fn new<F>(mut f: F, t0: T, y0: Vec<S>, t_bound: T, tol: Tolerances<T>) -> Result<Self>
    where
        F: FnMut(T, &[S], &mut [S]) -> Result<()>,
    {
        tol.validate()?;
        if y0.is_empty() {
            return Err(invalid("y0", "empty state"));
        }
        let n = y0.len();
        let direction = if t_bound >= t0 { T::one() } else { -T::one() };
        let mut k: [Vec<S>; 7] = std::array::from_fn(|_| vec![S::zero(); n]);
        f(t0, &y0, &mut k[0])?;
        let mut me = Self {
            t: t0,
            t_old: t0,
            t_bound,
            direction,
            h_abs: T::zero(),
            y_old: y0.clone(),
            y: y0,
            k,
            tol,
            stats: Stats {
                evaluations: 1,
                ..Stats::default()
            },
            scratch: vec![S::zero(); n],
            advanced: false,
        };
        me.h_abs = match tol.first_step {
            Some(h) => h,
            None => me.initial_step(&mut f)?,
        }
        .min(tol.max_step);
        Ok(me)
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn y(&self) -> &[S] {
        &self.y
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn finished(&self) -> bool {
        self.t == self.t_bound
    }

    /// `(t_old, t)` of the last accepted step.
    pub fn last_step(&self) -> (T, T) {
        (self.t_old, self.t)
    }

    fn scale(&self, a: S, b: S) -> T {
        self.tol.atol + self.tol.rtol * a.magnitude_sqr().max(b.magnitude_sqr()).sqrt()
    }

    fn rms(&self, v: &[S], reference: &[S]) -> T {
        let sum: T = v
            .iter()
            .zip(reference)
            .map(|(&x, &r)| {
                let s = x.magnitude() / self.scale(r, r);
                s * s
            })
            .sum();
        (sum / T::from_usize_lossy(v.len())).sqrt()
    }

    fn initial_step<F>(&mut self, f: &mut F) -> Result<T>
    where
        F: FnMut(T, &[S], &mut [S]) -> Result<()>,
    {
        let d0 = self.rms(&self.y, &self.y);
        let d1 = self.rms(&self.k[0], &self.y);
        let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * d0 / d1
        };
        let t1 = self.t + self.direction * h0;
        let y1: Vec<S> = self
            .y
            .iter()
            .zip(&self.k[0])
            .map(|(&y, &k)| y + k * (self.direction * h0))
            .collect();
        let mut f1 = vec![S::zero(); y1.len()];
        f(t1, &y1, &mut f1)?;
        self.stats.evaluations += 1;
        let diff: Vec<S> = f1.iter().zip(&self.k[0]).map(|(&a, &b)| a - b).collect();
        let d2 = self.rms(&diff, &self.y) / h0;
        let h1 = if d1.max(d2) <= T::lit(1e-15) {
            (h0 * T::lit(1e-3)).max(T::lit(1e-6))
        } else {
            (T::lit(0.01) / d1.max(d2)).powf(T::lit(0.2))
        };
        Ok((T::lit(100.0) * h0).min(h1))
    }

    /// Takes one accepted step, retrying rejected attempts.
    pub fn step<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(T, &[S], &mut [S]) -> Result<()>,
    {
        if self.finished() {
            return Ok(());
        }
        if self.advanced {
            self.k.swap(0, 6);
            self.advanced = false;
        }
        let n = self.y.len();
        let min_step = T::lit(10.0) * T::epsilon() * self.t.abs().max(T::one());
        let mut h_abs = self.h_abs.min(self.tol.max_step);
        let mut y_new = vec![S::zero(); n];
        loop {
            if h_abs < min_step {
                return Err(Error::StepUnderflow {
                    t: self.t.to_f64_lossy(),
                    h: h_abs.to_f64_lossy(),
                });
            }
            let mut h = h_abs * self.direction;
            let mut t_new = self.t + h;
            if self.direction * (t_new - self.t_bound) > T::zero() {
                t_new = self.t_bound;
            }
            h = t_new - self.t;
            h_abs = h.abs();

            for s in 1..6 {
                let coef: Vec<T> = A[s].iter().map(|&a| T::lit(a) * h).collect();
                self.scratch.copy_from_slice(&self.y);
                for (j, &c) in coef.iter().enumerate() {
                    for (acc, &kj) in self.scratch.iter_mut().zip(&self.k[j]) {
                        *acc = *acc + kj * c;
                    }
                }
                f(self.t + T::lit(C[s]) * h, &self.scratch, &mut self.k[s])?;
            }
            y_new.copy_from_slice(&self.y);
            for (j, &b) in B.iter().enumerate().take(6) {
                if b == 0.0 {
                    continue;
                }
                let c = T::lit(b) * h;
                for (acc, &kj) in y_new.iter_mut().zip(&self.k[j]) {
                    *acc = *acc + kj * c;
                }
            }
            f(t_new, &y_new, &mut self.k[6])?;
            self.stats.evaluations += 6;

            let ecoef: [T; 7] = std::array::from_fn(|j| T::lit(E[j]) * h);
            let mut sum = T::zero();
            for i in 0..n {
                let mut e = S::zero();
                for (j, &c) in ecoef.iter().enumerate() {
                    if j != 1 {
                        e = e + self.k[j][i] * c;
                    }
                }
                let sc = self.scale(self.y[i], y_new[i]);
                sum = sum + e.magnitude_sqr() / (sc * sc);
            }
            let err = (sum / T::from_usize_lossy(n)).sqrt();
            if !err.is_finite() {
                self.stats.rejected += 1;
                h_abs = h_abs * T::lit(MIN_FACTOR);
                continue;
            }
            if err <= T::one() {
                let factor = if err == T::zero() {
                    T::lit(MAX_FACTOR)
                } else {
                    (T::lit(SAFETY) * err.powf(T::lit(-0.2))).min(T::lit(MAX_FACTOR))
                };
                self.t_old = self.t;
                self.t = t_new;
                std::mem::swap(&mut self.y_old, &mut self.y);
                self.y.copy_from_slice(&y_new);
                self.advanced = true;
                self.h_abs = h_abs * factor;
                self.stats.accepted += 1;
                return Ok(());
            }
            self.stats.rejected += 1;
            h_abs = h_abs * (T::lit(SAFETY) * err.powf(T::lit(-0.2))).max(T::lit(MIN_FACTOR));
        }
    }

    /// Interpolates inside the last accepted step, `t_old <= t <= t`.
    pub fn dense(&self, t: T) -> Vec<S> {
        let h = self.t - self.t_old;
        if h == T::zero() {
            return self.y.clone();
        }
        let theta = (t - self.t_old) / h;
        let mut w = [T::zero(); 7];
        for (i, row) in P.iter().enumerate() {
            let mut acc = T::zero();
            let mut pow = theta;
            for &p in row {
                acc = acc + T::lit(p) * pow;
                pow = pow * theta;
            }
            w[i] = acc * h;
        }
        (0..self.y.len())
            .map(|i| {
                let mut acc = self.y_old[i];
                for (j, &wj) in w.iter().enumerate() {
                    acc = acc + self.k[j][i] * wj;
                }
                acc
            })
            .collect()
    }
}

/// Integrates to `t_end` and returns the solution at each of `outputs`,
/// which must be monotone in the integration direction and lie in
/// `[t0, t_end]`.
pub fn solve<T, S, F>(
    mut f: F,
    t0: T,
    y0: Vec<S>,
    t_end: T,
    outputs: &[T],
    tol: Tolerances<T>,
) -> Result<(Vec<Vec<S>>, Stats)>
where
    T: Real,
    S: Element<T>,
    F: FnMut(T, &[S], &mut [S]) -> Result<()>,
{
    let dir = if t_end >= t0 { T::one() } else { -T::one() };
    for w in outputs.windows(2) {
        if dir * (w[1] - w[0]) < T::zero() {
            return Err(invalid("outputs", "times must be monotone"));
        }
    }
    if let (Some(&first), Some(&last)) = (outputs.first(), outputs.last()) {
        if dir * (first - t0) < T::zero() || dir * (last - t_end) > T::zero() {
            return Err(invalid("outputs", "times outside the integration window"));
        }
    }
    let mut solver = Dopri5::new(&mut f, t0, y0, t_end, tol)?;
    let mut out = Vec::with_capacity(outputs.len());
    let mut next = 0;
    while next < outputs.len() && outputs[next] == t0 {
        out.push(solver.y().to_vec());
        next += 1;
    }
    while next < outputs.len() {
        solver.step(&mut f)?;
        while next < outputs.len() && dir * (outputs[next] - solver.t()) <= T::zero() {
            out.push(if outputs[next] == solver.t() {
                solver.y().to_vec()
            } else {
                solver.dense(outputs[next])
            });
            next += 1;
        }
    }
    Ok((out, solver.stats()))
}
