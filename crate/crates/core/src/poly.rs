//! Polynomial dynamics in binary64: joint evaluation, derivative cocycles and
//! forward orbits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

/// Relative tolerance for critical-point refinement (times the coefficient scale).
pub const ROOT_TOLERANCE: f64 = 1e-13;
const ROOT_MAX_ITERATIONS: usize = 500;

/// A polynomial of degree `D >= 2` together with its `D - 1` critical points
/// (with multiplicity), ordered lexicographically by real then imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPolynomial {
    coefficients: Vec<Complex64>,
    derivative: Vec<Complex64>,
    critical_points: Vec<Complex64>,
}

impl MarkedPolynomial {
    /// Build from ascending coefficients `a_0, ..., a_D`.
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() < 3 {
            return Err(Error::InvalidPolynomial(format!(
                "need at least 3 coefficients (degree >= 2), got {}",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidPolynomial("non-finite coefficient".into()));
        }
        let lead = *coefficients.last().unwrap();
        let scale = coefficients.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if lead.norm() <= f64::EPSILON * scale || lead.norm() == 0.0 {
            return Err(Error::InvalidPolynomial("degenerate leading coefficient".into()));
        }
        let derivative = roots::derivative_coefficients(&coefficients);
        let mut critical_points =
            roots::aberth(&derivative, None, ROOT_TOLERANCE, ROOT_MAX_ITERATIONS)?;
        roots::sort_lexicographic(&mut critical_points);
        Ok(Self {
            coefficients,
            derivative,
            critical_points,
        })
    }

    /// `z^2 + c`.
    pub fn quadratic(c: Complex64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self::new(vec![c, zero, one]).expect("z^2 + c is a valid polynomial")
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn critical_points(&self) -> &[Complex64] {
        &self.critical_points
    }

    /// Largest coefficient modulus.
    pub fn scale(&self) -> f64 {
        self.coefficients.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Mean of the critical points, `-a_{D-1} / (D a_D)`.
    pub fn center(&self) -> Complex64 {
        let d = self.degree();
        -self.coefficients[d - 1] / (self.coefficients[d] * d as f64)
    }

    /// Re-run the simultaneous root iteration from the current critical points.
    pub fn refine_critical_points(&self) -> Result<Vec<Complex64>> {
        let mut refined = roots::aberth(
            &self.derivative,
            Some(&self.critical_points),
            ROOT_TOLERANCE,
            ROOT_MAX_ITERATIONS,
        )?;
        roots::sort_lexicographic(&mut refined);
        Ok(refined)
    }

    #[inline]
    pub fn eval(&self, z: Complex64) -> Complex64 {
        roots::horner(&self.coefficients, z)
    }

    #[inline]
    pub fn derivative_at(&self, z: Complex64) -> Complex64 {
        roots::horner(&self.derivative, z)
    }

    /// `(f(z), f'(z))` by joint Horner evaluation.
    #[inline]
    pub fn evaluate_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        roots::horner_with_derivative(&self.coefficients, z)
    }

    /// `(f(z), f'(z), f''(z))`.
    pub fn evaluate_second_order(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let (v, d) = roots::horner_with_derivative(&self.coefficients, z);
        let (_, dd) = roots::horner_with_derivative(&self.derivative, z);
        (v, d, dd)
    }

    /// `(f^n(z), (f^n)'(z))` via the chain rule.
    pub fn iterate_with_derivative(&self, z: Complex64, n: usize) -> (Complex64, Complex64) {
        let mut w = z;
        let mut d = Complex64::new(1.0, 0.0);
        for _ in 0..n {
            let (v, dv) = self.evaluate_with_derivative(w);
            d *= dv;
            w = v;
        }
        (w, d)
    }

    /// `(f^n(z), (f^n)'(z), (f^n)''(z))`.
    pub fn iterate_second_order(
        &self,
        z: Complex64,
        n: usize,
    ) -> (Complex64, Complex64, Complex64) {
        let mut w = z;
        let mut d = Complex64::new(1.0, 0.0);
        let mut s = Complex64::new(0.0, 0.0);
        for _ in 0..n {
            let (v, dv, ddv) = self.evaluate_second_order(w);
            s = ddv * d * d + dv * s;
            d *= dv;
            w = v;
        }
        (w, d, s)
    }

    /// Escape radius `max(2, (1 + sum |a_k|) / |a_D|)`: beyond it `|f(z)| > |z|`
    /// and orbits tend to infinity monotonically.
    pub fn escape_radius(&self) -> f64 {
        let lead = self.coefficients.last().unwrap().norm();
        let total: f64 = self.coefficients.iter().map(|a| a.norm()).sum();
        f64::max(2.0, (1.0 + total) / lead)
    }

    /// All `D` preimages of `w`.
    pub fn preimages(&self, w: Complex64) -> Result<Vec<Complex64>> {
        let d = self.degree();
        if d == 2 {
            let a = self.coefficients[2];
            let b = self.coefficients[1];
            let c = self.coefficients[0] - w;
            let root = (b * b - 4.0 * a * c).sqrt();
            let center = -b / (2.0 * a);
            let offset = root / (2.0 * a);
            return Ok(vec![center + offset, center - offset]);
        }
        let mut shifted = self.coefficients.clone();
        shifted[0] -= w;
        roots::aberth(&shifted, None, ROOT_TOLERANCE, ROOT_MAX_ITERATIONS)
    }

    /// Forward orbit of `z0` for up to `n` points, stopping at the first point
    /// whose modulus exceeds the escape radius (that point is included).
    ///
    /// `escape_radius` is raised to [`Self::escape_radius`] when smaller, so
    /// escape is always monotone.
    pub fn iterate_orbit(&self, z0: Complex64, n: usize, escape_radius: f64) -> OrbitSegment {
        let radius = escape_radius.max(self.escape_radius());
        let mut points = Vec::with_capacity(n);
        let mut log_sum = 0.0;
        let mut hit_critical = false;
        let mut escaped = false;
        let mut z = z0;
        for _ in 0..n {
            points.push(z);
            let (value, derivative) = self.evaluate_with_derivative(z);
            let modulus = derivative.norm();
            if modulus == 0.0 {
                hit_critical = true;
                log_sum = f64::NEG_INFINITY;
            } else if !hit_critical {
                log_sum += modulus.ln();
            }
            if z.norm() > radius || !z.re.is_finite() || !z.im.is_finite() {
                escaped = true;
                break;
            }
            z = value;
        }
        OrbitSegment {
            points,
            log_derivative_sum: log_sum,
            escaped,
            hit_critical,
        }
    }
}

/// A finite forward orbit together with the Birkhoff sum of `log|f'|` along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub points: Vec<Complex64>,
    /// `sum_k log|f'(points[k])|`; `-inf` when the orbit meets a critical point.
    pub log_derivative_sum: f64,
    pub escaped: bool,
    /// Set when some point had `f' = 0` exactly.
    pub hit_critical: bool,
}

impl OrbitSegment {
    /// The Birkhoff sum, or an error when it is non-finite.
    pub fn birkhoff_sum(&self) -> Result<f64> {
        if self.hit_critical || !self.log_derivative_sum.is_finite() {
            let point = self
                .points
                .iter()
                .copied()
                .find(|p| !p.re.is_nan())
                .unwrap_or_default();
            return Err(Error::NonFiniteSum { point });
        }
        Ok(self.log_derivative_sum)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Constructor mirroring [`MarkedPolynomial::new`].
pub fn make_polynomial(coefficients: Vec<Complex64>) -> Result<MarkedPolynomial> {
    MarkedPolynomial::new(coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{LN_2, TAU};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poly(coeffs: &[(f64, f64)]) -> MarkedPolynomial {
        MarkedPolynomial::new(coeffs.iter().map(|&(a, b)| c(a, b)).collect()).unwrap()
    }

    #[test]
    fn critical_points_of_simple_maps() {
        let f = poly(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(f.critical_points().len(), 1);
        assert!(f.critical_points()[0].norm() < 1e-15);

        let f = MarkedPolynomial::quadratic(c(-1.0, 0.0));
        assert!(f.critical_points()[0].norm() < 1e-15);

        // z^3 - 3z: 3z^2 - 3 = 0
        let f = poly(&[(0.0, 0.0), (-3.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let cps = f.critical_points();
        assert!((cps[0] - c(-1.0, 0.0)).norm() < 1e-13);
        assert!((cps[1] - c(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(MarkedPolynomial::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(MarkedPolynomial::new(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn joint_evaluation_examples() {
        let f = MarkedPolynomial::quadratic(c(0.0, 0.0));
        let (v, d) = f.evaluate_with_derivative(c(1.0, 1.0));
        assert!((v - c(0.0, 2.0)).norm() < 1e-15);
        assert!((d - c(2.0, 2.0)).norm() < 1e-15);

        let f = MarkedPolynomial::quadratic(c(0.25, 0.0));
        let (v, d) = f.evaluate_with_derivative(c(0.5, 0.0));
        assert!((v - c(0.5, 0.0)).norm() < 1e-15);
        assert!((d - c(1.0, 0.0)).norm() < 1e-15);

        let f = poly(&[(0.0, 0.0), (-3.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let (v, d) = f.evaluate_with_derivative(c(1.0, 0.0));
        assert!((v - c(-2.0, 0.0)).norm() < 1e-15);
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn orbit_on_unit_circle() {
        let f = MarkedPolynomial::quadratic(c(0.0, 0.0));
        let seg = f.iterate_orbit(Complex64::from_polar(1.0, TAU / 3.0), 2, 2.0);
        assert_eq!(seg.len(), 2);
        assert!(!seg.escaped);
        assert!(seg.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-14));
        assert!((seg.birkhoff_sum().unwrap() - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn orbit_escapes() {
        let f = MarkedPolynomial::quadratic(c(0.0, 0.0));
        assert_eq!(f.escape_radius(), 2.0);
        let seg = f.iterate_orbit(c(3.0, 0.0), 5, 2.0);
        assert!(seg.escaped);
    }

    #[test]
    fn superattracting_orbit_is_flagged() {
        let f = MarkedPolynomial::quadratic(c(-1.0, 0.0));
        let seg = f.iterate_orbit(c(0.0, 0.0), 4, 2.0);
        let expected = [0.0, -1.0, 0.0, -1.0];
        for (p, e) in seg.points.iter().zip(expected) {
            assert!((p - c(e, 0.0)).norm() < 1e-15);
        }
        assert!(seg.hit_critical);
        assert!(seg.birkhoff_sum().is_err());
        // The non-critical part of the cycle carries |f'(-1)| = 2.
        let tail = f.iterate_orbit(c(-1.0, 0.0), 1, 2.0);
        assert!((tail.birkhoff_sum().unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn iterate_second_order_matches_finite_differences() {
        let f = poly(&[(0.1, -0.2), (0.3, 0.0), (0.0, 0.5), (1.0, 0.0)]);
        let z = c(0.3, 0.2);
        let h = 1e-5;
        let (_, d, s) = f.iterate_second_order(z, 3);
        let (_, dp) = f.iterate_with_derivative(z + h, 3);
        let (_, dm) = f.iterate_with_derivative(z - h, 3);
        let fd = (dp - dm) / (2.0 * h);
        assert!((fd - s).norm() < 1e-6 * s.norm().max(1.0));
        let (wp, _) = f.iterate_with_derivative(z + h, 3);
        let (wm, _) = f.iterate_with_derivative(z - h, 3);
        assert!(((wp - wm) / (2.0 * h) - d).norm() < 1e-6 * d.norm().max(1.0));
    }

    #[test]
    fn preimages_map_back() {
        for coeffs in [
            vec![(0.1, 0.2), (0.0, 0.0), (1.0, 0.0)],
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.2, 0.1)],
        ] {
            let f = poly(&coeffs);
            let w = c(0.7, -0.4);
            let pre = f.preimages(w).unwrap();
            assert_eq!(pre.len(), f.degree());
            for z in pre {
                assert!((f.eval(z) - w).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn critical_points_are_stable_under_refinement() {
        let f = poly(&[(0.3, 0.1), (-0.7, 0.2), (0.4, 0.0), (0.0, 1.0), (1.0, 0.0)]);
        let again = f.refine_critical_points().unwrap();
        for (a, b) in f.critical_points().iter().zip(&again) {
            assert!((a - b).norm() < 1e-12);
        }
        for &z in f.critical_points() {
            assert!(f.derivative_at(z).norm() < 1e-12 * f.scale());
        }
    }

    proptest! {
        #[test]
        fn orbit_composition_is_consistent(re in -0.7f64..0.3, im in -0.5f64..0.5,
                                           zr in -1.0f64..1.0, zi in -1.0f64..1.0,
                                           m in 1usize..6, n in 1usize..6) {
            let f = MarkedPolynomial::quadratic(c(re, im));
            let z0 = c(zr, zi);
            let whole = f.iterate_orbit(z0, m + n, 1e6);
            let head = f.iterate_orbit(z0, n, 1e6);
            prop_assume!(!whole.escaped && !head.escaped);
            let next = f.eval(*head.points.last().unwrap());
            let tail = f.iterate_orbit(next, m, 1e6);
            for (a, b) in whole.points.iter().zip(head.points.iter().chain(&tail.points)) {
                prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
            }
            if whole.log_derivative_sum.is_finite() {
                let joined = head.log_derivative_sum + tail.log_derivative_sum;
                prop_assert!((whole.log_derivative_sum - joined).abs() < 1e-10);
            }
        }
    }
}
