//! Composite Gauss–Legendre quadrature.

use num_complex::Complex;

use crate::scalar::Real;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Rule with `n` nodes, found by Newton iteration in `f64`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = T::lit(-x);
            nodes[n - 1 - i] = T::lit(x);
            weights[i] = T::lit(w);
            weights[n - 1 - i] = T::lit(w);
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `∫_a^b f` with `panels` equal sub-intervals.
    pub fn integrate_panels<F: FnMut(T) -> T>(&self, a: T, b: T, panels: usize, mut f: F) -> T {
        let mut total = T::zero();
        self.visit(a, b, panels, |x, w| total = total + w * f(x));
        total
    }

    /// Complex-valued version of [`Self::integrate_panels`].
    pub fn integrate_complex<F: FnMut(T) -> Complex<T>>(
        &self,
        a: T,
        b: T,
        panels: usize,
        mut f: F,
    ) -> Complex<T> {
        let mut total = Complex::new(T::zero(), T::zero());
        self.visit(a, b, panels, |x, w| total = total + f(x) * w);
        total
    }

    fn visit<G: FnMut(T, T)>(&self, a: T, b: T, panels: usize, mut g: G) {
        let panels = panels.max(1);
        let width = (b - a) / T::from_usize_lossy(panels);
        let half = width / T::lit(2.0);
        for p in 0..panels {
            let mid = a + width * T::from_usize_lossy(p) + half;
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                g(mid + half * x, half * w);
            }
        }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        let rule = GaussLegendre::<f64>::new(8);
        // degree 15 is integrated exactly by 8 nodes
        let v = rule.integrate_panels(0.0, 2.0, 1, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9 * v);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_order_has_centre_node() {
        let rule = GaussLegendre::<f64>::new(5);
        assert!(rule.nodes[2].abs() < 1e-15);
        assert!((rule.weights[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn oscillatory_integral() {
        let rule = GaussLegendre::<f64>::new(16);
        let v = rule.integrate_panels(0.0, std::f64::consts::PI, 8, |x| (20.0 * x).sin().powi(2));
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }
}
