//! Simultaneous polynomial root finding (Aberth–Ehrlich) and Horner helpers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Evaluate `p(z)` and `p'(z)` for coefficients in ascending order.
#[inline]
pub fn horner_with_derivative(coefficients: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut value = Complex64::new(0.0, 0.0);
    let mut derivative = Complex64::new(0.0, 0.0);
    for &a in coefficients.iter().rev() {
        derivative = derivative * z + value;
        value = value * z + a;
    }
    (value, derivative)
}

#[inline]
pub fn horner(coefficients: &[Complex64], z: Complex64) -> Complex64 {
    coefficients
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// Coefficients of the derivative polynomial.
pub fn derivative_coefficients(coefficients: &[Complex64]) -> Vec<Complex64> {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * k as f64)
        .collect()
}

/// All roots of a polynomial given in ascending coefficient order.
///
/// Stops when every residual satisfies `|p(z)| <= tol * scale * max(1, |z|)^deg`
/// (scale = max coefficient modulus) or every Aberth correction is at the
/// rounding level. `initial` seeds the iteration when supplied.
pub fn aberth(
    coefficients: &[Complex64],
    initial: Option<&[Complex64]>,
    tol: f64,
    max_iterations: usize,
) -> Result<Vec<Complex64>> {
    let degree = coefficients.len().saturating_sub(1);
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coefficients[degree];
    if lead == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidPolynomial("zero leading coefficient".into()));
    }
    if degree == 1 {
        return Ok(vec![-coefficients[0] / lead]);
    }
    let scale = coefficients.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let derivative = derivative_coefficients(coefficients);

    let mut roots: Vec<Complex64> = match initial {
        Some(seed) if seed.len() == degree => seed.to_vec(),
        _ => initial_guesses(coefficients),
    };

    let residual_ok = |z: Complex64, value: Complex64| {
        value.norm() <= tol * scale * z.norm().max(1.0).powi(degree as i32)
    };

    let mut worst = f64::INFINITY;
    for _ in 0..max_iterations {
        let mut all_small = true;
        let mut all_resolved = true;
        worst = 0.0;
        for i in 0..degree {
            let z = roots[i];
            let value = horner(coefficients, z);
            worst = f64::max(worst, value.norm());
            if residual_ok(z, value) {
                continue;
            }
            all_resolved = false;
            let slope = horner(&derivative, z);
            let ratio = value / slope;
            let repulsion: Complex64 = roots
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &w)| (z - w).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.re.is_finite() || !step.im.is_finite() {
                // Nudge off a degenerate configuration.
                roots[i] = z + Complex64::new(1e-7, 1e-7) * z.norm().max(1.0);
                all_small = false;
                continue;
            }
            roots[i] = z - step;
            if step.norm() > 4.0 * f64::EPSILON * roots[i].norm().max(1e-300) {
                all_small = false;
            }
        }
        if all_resolved || all_small {
            return Ok(roots);
        }
    }
    let final_ok = roots
        .iter()
        .all(|&z| residual_ok(z, horner(coefficients, z)));
    if final_ok {
        Ok(roots)
    } else {
        Err(Error::RootRefinement {
            iterations: max_iterations,
            residual: worst,
        })
    }
}

/// Initial guesses on a circle sized by the geometric mean of the root moduli,
/// rotated off the real axis.
fn initial_guesses(coefficients: &[Complex64]) -> Vec<Complex64> {
    let degree = coefficients.len() - 1;
    let lead = coefficients[degree].norm();
    let constant = coefficients[0].norm();
    let radius = if constant > 0.0 {
        (constant / lead).powf(1.0 / degree as f64)
    } else {
        // Cauchy-type upper bound when zero is a root.
        1.0 + coefficients[..degree]
            .iter()
            .map(|a| a.norm() / lead)
            .fold(0.0, f64::max)
    }
    .max(1e-3);
    (0..degree)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / degree as f64 + 0.4;
            Complex64::from_polar(radius, angle)
        })
        .collect()
}

/// Sort complex numbers lexicographically by (re, im).
pub fn sort_lexicographic(values: &mut [Complex64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}
