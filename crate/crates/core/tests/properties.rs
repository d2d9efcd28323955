//! Randomised invariants of the metric and grid layers.

use julia_thermo::bowen::ParameterGrid;
use julia_thermo::family::QuadraticFamily;
use julia_thermo::metric::{MetricContext, MetricOptions};
use julia_thermo::thermo::extrapolate;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn g_has_a_minimum_at_the_base(re in -0.15f64..0.1, im in -0.1f64..0.1, angle in 0.0f64..std::f64::consts::TAU, r in 0.0f64..0.03) {
        let base = [re, im];
        let ctx = MetricContext::new(&QuadraticFamily, &base, 0.3, 7, MetricOptions::default()).unwrap();
        let g0 = ctx.g_value(&base).unwrap();
        let g = ctx.g_value(&[re + r * angle.cos(), im + r * angle.sin()]).unwrap();
        prop_assert!(g >= g0 - 1e-10, "{} < {}", g, g0);
    }

    #[test]
    fn hessian_is_symmetric_and_psd(re in -0.15f64..0.1, im in -0.1f64..0.1) {
        let ctx = MetricContext::new(&QuadraticFamily, &[re, im], 0.3, 7, MetricOptions::default()).unwrap();
        let h = ctx.hessian().unwrap();
        prop_assert_eq!(h.matrix[0][1], h.matrix[1][0]);
        prop_assert!(h.is_psd(1e-6), "{:?}", h.eigenvalues);
    }

    #[test]
    fn pressure_form_scales_quadratically(re in -0.15f64..0.1, im in -0.1f64..0.1, angle in 0.0f64..std::f64::consts::TAU) {
        let ctx = MetricContext::new(&QuadraticFamily, &[re, im], 0.3, 7, MetricOptions::default()).unwrap();
        let v = [angle.cos(), angle.sin()];
        let a = ctx.pressure_form(&v).unwrap().value;
        let b = ctx.pressure_form(&[2.0 * v[0], 2.0 * v[1]]).unwrap().value;
        prop_assert!((b - 4.0 * a).abs() <= 1e-9 * b.abs().max(1.0), "{} {}", a, b);
    }
}

proptest! {
    #[test]
    fn grid_index_round_trips(nx in 1usize..6, ny in 1usize..6, flat in 0usize..36) {
        let grid = ParameterGrid { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0], resolution: vec![nx, ny] };
        let flat = flat % grid.len();
        prop_assert_eq!(grid.flat(&grid.index(flat)), flat);
    }

    #[test]
    fn extrapolating_a_constant_is_exact(value in -3.0f64..3.0, first in 2usize..8, count in 2usize..7) {
        let levels: Vec<(usize, f64)> = (first..first + count).map(|n| (n, value)).collect();
        let (v, e) = extrapolate(&levels);
        prop_assert!((v - value).abs() < 1e-12);
        prop_assert!(e < 1e-12);
    }
}
