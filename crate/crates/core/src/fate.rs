//! Fate of critical orbits: attracted to an attracting or parabolic cycle,
//! escaping to infinity, or undecided within the iteration budget.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::poly::MarkedPolynomial;

/// Longest cycle searched for at the end of a critical orbit.
pub const MAX_CYCLE_PERIOD: usize = 64;
/// Largest root-of-unity order recognised as a parabolic multiplier.
pub const MAX_PARABOLIC_ORDER: usize = 12;
/// Distance to a root of unity below which a multiplier counts as parabolic.
pub const PARABOLIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    AttractingCycleInC,
    ParabolicCycle,
    Escaping,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleData {
    pub period: usize,
    pub point: Complex64,
    pub multiplier: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalFate {
    pub critical_point: Complex64,
    pub fate: Fate,
    pub cycle_data: Option<CycleData>,
}

/// Distance from `m` to the nearest root of unity of order at most
/// [`MAX_PARABOLIC_ORDER`], with that order.
pub fn root_of_unity_distance(m: Complex64) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for q in 1..=MAX_PARABOLIC_ORDER {
        let turns = m.arg() * q as f64 / std::f64::consts::TAU;
        let root = Complex64::from_polar(1.0, std::f64::consts::TAU * turns.round() / q as f64);
        let d = (m - root).norm();
        if d < best.0 - 1e-15 {
            best = (d, q);
        }
    }
    best
}

/// Classify the forward orbit of every critical point of `f` within `budget`
/// iterations.
pub fn critical_fates(f: &MarkedPolynomial, budget: usize) -> Vec<CriticalFate> {
    f.critical_points()
        .iter()
        .map(|&c| classify_point(f, c, budget))
        .collect()
}

fn classify_point(f: &MarkedPolynomial, c: Complex64, budget: usize) -> CriticalFate {
    let radius = f.escape_radius();
    let undecided = CriticalFate {
        critical_point: c,
        fate: Fate::Undecided,
        cycle_data: None,
    };
    let mut z = c;
    for _ in 0..budget.max(1) {
        if z.norm() > radius || !z.re.is_finite() || !z.im.is_finite() {
            return CriticalFate {
                critical_point: c,
                fate: Fate::Escaping,
                cycle_data: None,
            };
        }
        z = f.eval(z);
    }
    if z.norm() > radius {
        return CriticalFate {
            critical_point: c,
            fate: Fate::Escaping,
            cycle_data: None,
        };
    }

    let size = z.norm().max(1.0);
    let Some(period) = (1..=MAX_CYCLE_PERIOD).find(|&p| {
        let (w, _) = f.iterate_with_derivative(z, p);
        (w - z).norm() < 1e-5 * size
    }) else {
        return undecided;
    };

    // Newton on f^p(z) - z; linear convergence at multiple roots is accepted.
    let mut x = z;
    for _ in 0..200 {
        let (w, d) = f.iterate_with_derivative(x, period);
        let denom = d - 1.0;
        if denom.norm() == 0.0 {
            break;
        }
        let step = (w - x) / denom;
        if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 0.1 * size {
            break;
        }
        x -= step;
        if step.norm() <= 1e-16 * size {
            break;
        }
    }
    let (_, multiplier) = f.iterate_with_derivative(x, period);
    let data = Some(CycleData {
        period,
        point: x,
        multiplier,
    });

    let (unity_distance, _) = root_of_unity_distance(multiplier);
    if unity_distance < PARABOLIC_TOLERANCE {
        // Parabolic attraction is polynomial-rate: successive distances to the
        // cycle shrink by a ratio close to one.
        let before = (z - x).norm();
        let (after_point, _) = f.iterate_with_derivative(z, period);
        let after = (after_point - x).norm();
        if before == 0.0 || after / before > 0.5 {
            return CriticalFate {
                critical_point: c,
                fate: Fate::ParabolicCycle,
                cycle_data: data,
            };
        }
    }
    if multiplier.norm() < 1.0 - PARABOLIC_TOLERANCE {
        return CriticalFate {
            critical_point: c,
            fate: Fate::AttractingCycleInC,
            cycle_data: data,
        };
    }
    undecided
}
