//! Estimators checked against independently computed reference values.

use std::f64::consts::{PI, TAU};

use julia_thermo::bowen::{bowen_number_on, DEFAULT_LEVELS};
use julia_thermo::family::QuadraticFamily;
use julia_thermo::metric::{MetricContext, MetricOptions};
use julia_thermo::poly::MarkedPolynomial;
use julia_thermo::thermo::{self, ThermoSystem};
use julia_thermo::Complex64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quad(re: f64, im: f64) -> MarkedPolynomial {
    MarkedPolynomial::quadratic(Complex64::new(re, im))
}

/// `Var(cos 2 pi t)` under doubling, summed from Fourier correlations
/// computed by quadrature on the circle.
fn circle_variance_oracle() -> f64 {
    let m = 1 << 14;
    let corr = |k: u32| -> f64 {
        let mult = (1u64 << k) as f64;
        (0..m)
            .map(|j| {
                let t = j as f64 / m as f64;
                (TAU * t).cos() * (TAU * mult * t).cos()
            })
            .sum::<f64>()
            / m as f64
    };
    corr(0) + 2.0 * (1..12).map(corr).sum::<f64>()
}

#[test]
fn variance_of_real_part_matches_fourier_sum() {
    let oracle = circle_variance_oracle();
    let f = quad(0.0, 0.0);
    let v = thermo::variance(&f, |z| z.re, |z| -f.derivative_at(z).norm().ln(), 12, None).unwrap();
    assert!((v.value - oracle).abs() < 1e-6, "{} vs {oracle}", v.value);
}

/// Birkhoff average of `log|f'|` along a random backward orbit, which
/// equidistributes to the measure of maximal entropy.
fn backward_orbit_lyapunov(c: Complex64, steps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Complex64::new(2.0, 0.0);
    let mut acc = 0.0;
    for k in 0..steps + 1000 {
        let w = (z - c).sqrt();
        z = if rng.gen::<bool>() { w } else { -w };
        if k >= 1000 {
            acc += (2.0 * z.norm()).ln();
        }
    }
    acc / steps as f64
}

#[test]
fn basilica_lyapunov_matches_backward_orbits() {
    let c = Complex64::new(-1.0, 0.0);
    let oracle = backward_orbit_lyapunov(c, 2_000_000, 5);
    let f = MarkedPolynomial::quadratic(c);
    let nu = thermo::equilibrium_measure(&f, |_| 0.0, 10).unwrap();
    let (integral, lyapunov) = thermo::lyapunov_and_integrals(&f, &nu, |_| 1.0).unwrap();
    assert!((integral - 1.0).abs() < 1e-12);
    assert!((lyapunov - oracle).abs() < 5e-3, "{lyapunov} vs {oracle}");
}

#[test]
fn bowen_number_matches_dense_scan() {
    let f = quad(-0.2, 0.0);
    let eta = 0.1;
    let system = ThermoSystem::new(&f, &DEFAULT_LEVELS).unwrap();
    let root = bowen_number_on(&system, eta, 1e-13).unwrap().delta;

    // Scan theta on a fine grid and interpolate the sign change linearly.
    let step = 1e-4;
    let h = |theta: f64| system.pressure_of_log_derivative(theta).value - eta;
    let mut prev = (0.0, h(0.0));
    let mut scanned = None;
    for k in 1..=20_000 {
        let theta = k as f64 * step;
        let value = h(theta);
        if value <= 0.0 {
            scanned = Some(prev.0 + step * prev.1 / (prev.1 - value));
            break;
        }
        prev = (theta, value);
    }
    let scanned = scanned.expect("pressure crosses eta on [0, 2]");
    assert!((root - scanned).abs() < 1e-7, "{root} vs {scanned}");
}

/// Second derivative at 0 of a least-squares quartic through `samples`.
fn quartic_curvature(samples: &[(f64, f64)]) -> f64 {
    let a = DMatrix::from_fn(samples.len(), 5, |i, j| samples[i].0.powi(j as i32));
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let coef = a.svd(true, true).solve(&b, 1e-14).unwrap();
    2.0 * coef[2]
}

#[test]
fn hessian_matches_quartic_fit() {
    let base = [-0.05, 0.05];
    let ctx = MetricContext::new(&QuadraticFamily, &base, 0.3, 8, MetricOptions::default()).unwrap();
    let hessian = ctx.hessian().unwrap();
    for angle in [0.0, 0.3 * PI, 0.7 * PI] {
        let v = [angle.cos(), angle.sin()];
        let samples: Vec<(f64, f64)> = (-10..=10)
            .map(|k| {
                let t = 0.002 * k as f64;
                let g = ctx.g_value(&[base[0] + t * v[0], base[1] + t * v[1]]).unwrap();
                (t, g)
            })
            .collect();
        let fit = quartic_curvature(&samples);
        let form = hessian.quadratic(&v);
        assert!((fit - form).abs() < 1e-4 * form.abs().max(1.0), "{angle}: {fit} vs {form}");
    }
}
