//! Symmetries and scaling laws of the Hessian and pressure forms.

use julia_thermo::family::{AffineSlice, QuadraticFamily};
use julia_thermo::metric::{self, MetricContext, MetricOptions};
use julia_thermo::thermo::coboundary_dispersion;
use julia_thermo::Complex64;

fn origin(n: usize) -> MetricContext<'static> {
    MetricContext::new(&QuadraticFamily, &[0.0, 0.0], 0.3, n, MetricOptions::default()).unwrap()
}

#[test]
fn rotation_and_conjugation_symmetry_at_origin() {
    let h = origin(10).hessian().unwrap();
    let real = h.quadratic(&[1.0, 0.0]);
    let imag = h.quadratic(&[0.0, 1.0]);
    assert!((real - imag).abs() < 1e-6 * real, "{real} {imag}");
    // v and its conjugate.
    let v = h.quadratic(&[0.6, 0.8]);
    let vbar = h.quadratic(&[0.6, -0.8]);
    assert!((v - vbar).abs() < 1e-6 * v);
}

#[test]
fn conjugation_symmetry_on_the_real_axis() {
    let ctx = MetricContext::new(&QuadraticFamily, &[-0.1, 0.0], 0.3, 9, MetricOptions::default()).unwrap();
    let a = ctx.directional_second_derivative(&[0.3, 0.7]).unwrap();
    let b = ctx.directional_second_derivative(&[0.3, -0.7]).unwrap();
    assert!((a - b).abs() < 1e-6 * a, "{a} {b}");
}

#[test]
fn nondegenerate_direction_has_no_coboundary_derivative() {
    let ctx = origin(9);
    let g_dot = ctx.g_dot(&[1.0, 0.0]).unwrap();
    let dispersion = coboundary_dispersion(ctx.atoms(), &g_dot);
    assert!(dispersion > 1e-3, "{dispersion}");
    assert!(ctx.directional_second_derivative(&[1.0, 0.0]).unwrap() > 1e-4);
}

#[test]
fn scaling_laws() {
    let ctx = MetricContext::new(&QuadraticFamily, &[-0.05, 0.03], 0.3, 8, MetricOptions::default()).unwrap();
    let v = [0.8, -0.6];
    let v2 = [1.6, -1.2];
    let k1 = ctx.degeneracy_scan(&v).unwrap();
    let k2 = ctx.degeneracy_scan(&v2).unwrap();
    for (a, b) in k1.per_orbit_k.iter().zip(&k2.per_orbit_k) {
        assert!((b - 2.0 * a).abs() < 1e-9 * a.abs().max(1.0));
    }
    assert!((k2.dispersion - 2.0 * k1.dispersion).abs() < 1e-9 * k2.dispersion);

    // Exactly quadratic: fit t -> |t v|_P^2 by a t^2.
    let ts = [0.5, 1.0, 2.0, 4.0];
    let values: Vec<f64> = ts
        .iter()
        .map(|t| ctx.pressure_form(&[t * v[0], t * v[1]]).unwrap().value)
        .collect();
    let a = ts.iter().zip(&values).map(|(t, y)| t * t * y).sum::<f64>() / ts.iter().map(|t| t.powi(4)).sum::<f64>();
    let residual = ts
        .iter()
        .zip(&values)
        .map(|(t, y)| (y - a * t * t).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(residual < 1e-8 * a, "{residual}");

    let r1 = ctx.conformal_residual(&v).unwrap().residual;
    let r2 = ctx.conformal_residual(&v2).unwrap().residual;
    assert!((r1 - r2).abs() < 1e-6);
}

#[test]
fn frozen_family_has_an_empty_form() {
    let base = vec![Complex64::new(-0.1, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    let frozen = AffineSlice::frozen(base).unwrap();
    let ctx = MetricContext::new(&frozen, &[], 0.3, 7, MetricOptions::default()).unwrap();
    let h = ctx.hessian().unwrap();
    assert!(h.matrix.is_empty() && h.eigenvalues.is_empty());
}

#[test]
fn g_vanishes_as_eta_approaches_entropy() {
    let ctx = MetricContext::new(&QuadraticFamily, &[0.0, 0.0], 0.69, 8, MetricOptions::default()).unwrap();
    let g = ctx.g_value(&[0.0, 0.0]).unwrap();
    // At level 8 there are 255 repelling points, all with |f'| = 2, so
    // P_8(-delta log|f'|) = log(255) / 8 - delta log 2 and G = delta log 2.
    let expected = 255f64.ln() / 8.0 - 0.69;
    assert!((g - expected).abs() < 1e-12, "{g} vs {expected}");
    assert!(g < 3e-3);
}

#[test]
fn segment_length_is_stable_under_quadrature_refinement() {
    let opts = MetricOptions::default();
    let nodes = [vec![0.0, 0.0], vec![0.1, 0.0]];
    let l4 = metric::path_length(&QuadraticFamily, &nodes, 0.3, 8, 4, &opts).unwrap();
    let l8 = metric::path_length(&QuadraticFamily, &nodes, 0.3, 8, 8, &opts).unwrap();
    assert!(l4 > 1e-4);
    assert!((l4 - l8).abs() < 1e-4, "{l4} {l8}");
    let reversed = [vec![0.1, 0.0], vec![0.0, 0.0]];
    let back = metric::path_length(&QuadraticFamily, &reversed, 0.3, 8, 4, &opts).unwrap();
    assert!((back - l4).abs() < 1e-10);
    let constant = [vec![0.05, 0.0], vec![0.05, 0.0]];
    assert_eq!(metric::path_length(&QuadraticFamily, &constant, 0.3, 8, 4, &opts).unwrap(), 0.0);
}
