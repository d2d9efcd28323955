//! Holomorphic motion of repelling cycles: Newton continuation of
//! `f_lambda^p(z) = z` along a parameter path.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::ParameterFamily;
use crate::orbits::PeriodicOrbit;
use crate::par;
use crate::poly::MarkedPolynomial;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    /// Newton iterations allowed per step before the step is halved.
    pub max_newton: usize,
    /// Bisection depth allowed per path segment.
    pub max_depth: usize,
    /// A point may move at most this fraction of the distance to its nearest
    /// tracked neighbour in one step.
    pub gap_fraction: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            max_newton: 8,
            max_depth: 20,
            gap_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionTrack {
    pub base_parameter: Vec<f64>,
    pub path: Vec<Vec<f64>>,
    /// `orbits[i][k]` is cycle `i` at path node `k`, in the cycle's original
    /// point order.
    pub orbits: Vec<Vec<Vec<Complex64>>>,
    /// `multipliers[i][k]`.
    pub multipliers: Vec<Vec<Complex64>>,
    /// Largest `|f^p(x) - x|` over tracked points at each node.
    pub step_residuals: Vec<f64>,
    /// Largest `|f_lambda(Psi(x_k)) - Psi(x_{k+1})|` over all nodes.
    pub equivariance_residual: f64,
    /// Smallest distance between distinct tracked points over all nodes.
    pub min_gap: f64,
    /// Bisections triggered by rejected steps.
    pub refinements: usize,
    /// Longest parameter step accepted without bisection.
    pub largest_step: f64,
}

impl MotionTrack {
    /// Cycle `i` at the last node (or the base when the path is empty).
    pub fn endpoint(&self, i: usize) -> &[Complex64] {
        self.orbits[i].last().expect("tracks hold at least the base node")
    }
}

/// Smallest distance between two points of `points`.
pub fn min_pairwise_distance(points: &[Complex64]) -> f64 {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut best = f64::INFINITY;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            if sorted[j].re - sorted[i].re >= best {
                break;
            }
            best = best.min((sorted[j] - sorted[i]).norm());
        }
    }
    best
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Newton on `f^p(z) - z` from `z0`, at most `max_iter` iterations.
fn newton(f: &MarkedPolynomial, z0: Complex64, p: usize, max_iter: usize) -> Option<Complex64> {
    let mut z = z0;
    for _ in 0..max_iter {
        let (w, d) = f.iterate_with_derivative(z, p);
        let step = (w - z) / (d - 1.0);
        if !step.re.is_finite() || !step.im.is_finite() {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-12 * z.norm().max(1.0) {
            // One more pass lands on rounding level.
            let (w, d) = f.iterate_with_derivative(z, p);
            let last = (w - z) / (d - 1.0);
            if last.re.is_finite() && last.im.is_finite() {
                z -= last;
            }
            return Some(z);
        }
    }
    None
}

struct StepStats {
    refinements: usize,
    largest_step: f64,
}

/// Distance from each point to its nearest neighbour in `points`.
fn nearest_neighbour_distances(points: &[Complex64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].re.total_cmp(&points[b].re));
    let mut out = vec![f64::INFINITY; points.len()];
    for (k, &i) in order.iter().enumerate() {
        let mut best = f64::INFINITY;
        for &j in &order[k + 1..] {
            if points[j].re - points[i].re >= best {
                break;
            }
            best = best.min((points[j] - points[i]).norm());
        }
        for &j in order[..k].iter().rev() {
            if points[i].re - points[j].re >= best {
                break;
            }
            best = best.min((points[j] - points[i]).norm());
        }
        out[i] = best;
    }
    out
}

/// Moves every cycle from `from` to `to` at once. A step is accepted when
/// each point moves by at most `gap_fraction` of the distance to its nearest
/// neighbour and no two points come closer than half the old gap; otherwise
/// the parameter step is halved.
#[allow(clippy::too_many_arguments)]
fn step_all(
    family: &dyn ParameterFamily,
    current: &[Vec<Complex64>],
    from: &[f64],
    to: &[f64],
    depth: usize,
    cfg: &MotionConfig,
    stats: &mut StepStats,
) -> Result<Vec<(Vec<Complex64>, Complex64)>> {
    let flat: Vec<Complex64> = current.iter().flatten().copied().collect();
    let radii = nearest_neighbour_distances(&flat);
    let old_gap = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let mut starts = Vec::with_capacity(current.len());
    let mut offset = 0;
    for c in current {
        starts.push(offset);
        offset += c.len();
    }

    let f = family.evaluate(to)?;
    let attempt: Vec<Option<(Vec<Complex64>, Complex64)>> = par::map_range(current.len(), |i| {
        let old = &current[i];
        let w = newton(&f, old[0], old.len(), cfg.max_newton)?;
        let (points, multiplier) = rebuild(&f, w, old.len());
        let within = points
            .iter()
            .zip(old)
            .enumerate()
            .all(|(k, (a, b))| (a - b).norm() <= cfg.gap_fraction * radii[starts[i] + k]);
        within.then_some((points, multiplier))
    });
    if attempt.iter().all(Option::is_some) {
        let stepped: Vec<(Vec<Complex64>, Complex64)> = attempt.into_iter().flatten().collect();
        let new_points: Vec<Complex64> = stepped.iter().flat_map(|(p, _)| p.iter().copied()).collect();
        if min_pairwise_distance(&new_points) >= 0.5 * old_gap {
            stats.largest_step = stats.largest_step.max(distance(from, to));
            return Ok(stepped);
        }
    }
    if depth == 0 {
        return Err(Error::Continuation(format!(
            "refinement depth exhausted between {from:?} and {to:?}"
        )));
    }
    stats.refinements += 1;
    let mid: Vec<f64> = from.iter().zip(to).map(|(a, b)| 0.5 * (a + b)).collect();
    let halfway: Vec<Vec<Complex64>> = step_all(family, current, from, &mid, depth - 1, cfg, stats)?
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    step_all(family, &halfway, &mid, to, depth - 1, cfg, stats)
}

/// Cycle through `x0` under `f`, each point polished on `f^p(z) = z`.
fn rebuild(f: &MarkedPolynomial, x0: Complex64, p: usize) -> (Vec<Complex64>, Complex64) {
    let mut points = Vec::with_capacity(p);
    let mut z = x0;
    for _ in 0..p {
        points.push(z);
        z = f.eval(z);
    }
    for x in points.iter_mut().skip(1) {
        if let Some(w) = newton(f, *x, p, 3) {
            if (w - *x).norm() < 1e-8 * x.norm().max(1.0) {
                *x = w;
            }
        }
    }
    let multiplier = points
        .iter()
        .fold(Complex64::new(1.0, 0.0), |m, &x| m * f.derivative_at(x));
    (points, multiplier)
}

/// Track `orbits` (cycles of the map at `lambda0`) along `path`.
pub fn continue_orbits(
    family: &dyn ParameterFamily,
    lambda0: &[f64],
    path: &[Vec<f64>],
    orbits: &[PeriodicOrbit],
) -> Result<MotionTrack> {
    continue_orbits_with(family, lambda0, path, orbits, &MotionConfig::default())
}

pub fn continue_orbits_with(
    family: &dyn ParameterFamily,
    lambda0: &[f64],
    path: &[Vec<f64>],
    orbits: &[PeriodicOrbit],
    cfg: &MotionConfig,
) -> Result<MotionTrack> {
    let dim = family.real_dimension();
    if lambda0.len() != dim || path.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument(format!("parameters must have {dim} coordinates")));
    }
    let mut tracks: Vec<Vec<Vec<Complex64>>> = orbits.iter().map(|o| vec![o.points.clone()]).collect();
    let mut multipliers: Vec<Vec<Complex64>> = orbits.iter().map(|o| vec![o.multiplier]).collect();
    let all_points = |tracks: &[Vec<Vec<Complex64>>]| -> Vec<Complex64> {
        tracks.iter().flat_map(|t| t.last().unwrap().iter().copied()).collect()
    };
    let mut min_gap = min_pairwise_distance(&all_points(&tracks));
    let mut step_residuals = Vec::with_capacity(path.len());
    let mut equivariance_residual: f64 = 0.0;
    let mut previous = lambda0.to_vec();

    let mut stats = StepStats {
        refinements: 0,
        largest_step: 0.0,
    };
    for node in path {
        let f = family.evaluate(node)?;
        let current: Vec<Vec<Complex64>> = tracks.iter().map(|t| t.last().unwrap().clone()).collect();
        let stepped = if previous == *node {
            current
                .into_iter()
                .map(|p| {
                    let m = p.iter().fold(Complex64::new(1.0, 0.0), |m, &x| m * f.derivative_at(x));
                    (p, m)
                })
                .collect()
        } else {
            step_all(family, &current, &previous, node, cfg.max_depth, cfg, &mut stats)?
        };
        let mut node_residual: f64 = 0.0;
        for (i, (points, multiplier)) in stepped.into_iter().enumerate() {
            if multiplier.norm() <= 1.0 {
                return Err(Error::NonRepellingCycle {
                    modulus: multiplier.norm(),
                });
            }
            let p = points.len();
            let (w, _) = f.iterate_with_derivative(points[0], p);
            node_residual = node_residual.max((w - points[0]).norm());
            let equivariance = (0..p)
                .map(|k| (f.eval(points[k]) - points[(k + 1) % p]).norm())
                .fold(0.0, f64::max);
            equivariance_residual = equivariance_residual.max(equivariance);
            tracks[i].push(points);
            multipliers[i].push(multiplier);
        }
        step_residuals.push(node_residual);
        let gap = min_pairwise_distance(&all_points(&tracks));
        if gap <= 1e-10 {
            return Err(Error::Continuation(format!("tracked cycles collide (gap {gap:e})")));
        }
        min_gap = min_gap.min(gap);
        previous = node.clone();
    }
    let StepStats {
        refinements,
        largest_step,
    } = stats;

    Ok(MotionTrack {
        base_parameter: lambda0.to_vec(),
        path: path.to_vec(),
        orbits: tracks,
        multipliers,
        step_residuals,
        equivariance_residual,
        min_gap,
        refinements,
        largest_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::QuadraticFamily;
    use crate::orbits::periodic_points;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn line(from: [f64; 2], to: [f64; 2], steps: usize) -> Vec<Vec<f64>> {
        (1..=steps)
            .map(|k| {
                let t = k as f64 / steps as f64;
                vec![from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])]
            })
            .collect()
    }

    #[test]
    fn constant_path_is_identity() {
        let f = MarkedPolynomial::quadratic(c(-0.1, 0.05));
        let orbits = periodic_points(&f, 5).unwrap();
        let path = vec![vec![-0.1, 0.05]; 3];
        let track = continue_orbits(&QuadraticFamily, &[-0.1, 0.05], &path, &orbits).unwrap();
        for (i, o) in orbits.iter().enumerate() {
            for node in &track.orbits[i] {
                for (a, b) in node.iter().zip(&o.points) {
                    assert!((a - b).norm() < 1e-14);
                }
            }
        }
        assert_eq!(track.refinements, 0);
    }

    #[test]
    fn fixed_point_follows_closed_form() {
        let f = MarkedPolynomial::quadratic(c(0.0, 0.0));
        let orbits: Vec<_> = periodic_points(&f, 1).unwrap();
        let path = line([0.0, 0.0], [0.1, 0.0], 5);
        let track = continue_orbits(&QuadraticFamily, &[0.0, 0.0], &path, &orbits).unwrap();
        for (k, node) in path.iter().enumerate() {
            let cc = node[0];
            let expected = (1.0 + (1.0 - 4.0 * cc).sqrt()) / 2.0;
            assert!((track.orbits[0][k + 1][0] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn two_cycle_follows_its_factor() {
        let f = MarkedPolynomial::quadratic(c(0.0, 0.0));
        let orbits: Vec<_> = periodic_points(&f, 2).unwrap().into_iter().filter(|o| o.period == 2).collect();
        let path = line([0.0, 0.0], [-0.5, 0.0], 4);
        let track = continue_orbits(&QuadraticFamily, &[0.0, 0.0], &path, &orbits).unwrap();
        // Roots of z^2 + z + c + 1 at c = -1/2: (-1 +- i) / 2.
        for &z in track.endpoint(0) {
            assert!((z * z + z + 0.5).norm() < 1e-13);
        }
        assert!(track.equivariance_residual < 1e-9);
    }

    #[test]
    fn path_independence() {
        let base = [-0.05, 0.0];
        let f = MarkedPolynomial::quadratic(c(base[0], base[1]));
        let orbits = periodic_points(&f, 7).unwrap();
        let end = [0.05, 0.08];
        let direct = continue_orbits(&QuadraticFamily, &base, &line(base, end, 3), &orbits).unwrap();
        let mut corner = line(base, [0.05, 0.0], 2);
        corner.extend(line([0.05, 0.0], end, 2));
        let bent = continue_orbits(&QuadraticFamily, &base, &corner, &orbits).unwrap();
        for i in 0..orbits.len() {
            for (a, b) in direct.endpoint(i).iter().zip(bent.endpoint(i)) {
                assert!((a - b).norm() < 1e-9);
            }
        }
        assert!(direct.equivariance_residual < 1e-9 && bent.equivariance_residual < 1e-9);
    }

    #[test]
    fn leaving_the_component_fails() {
        let f = MarkedPolynomial::quadratic(c(0.0, 0.0));
        let orbits = periodic_points(&f, 1).unwrap();
        // The repelling fixed point becomes parabolic at c = 1/4.
        let err = continue_orbits(&QuadraticFamily, &[0.0, 0.0], &[vec![0.25, 0.0]], &orbits);
        assert!(err.is_err());
    }

    #[test]
    fn closest_pair() {
        let pts = [c(0.0, 0.0), c(1.0, 0.0), c(0.3, 0.4), c(1.1, 0.05)];
        let d = min_pairwise_distance(&pts);
        assert!((d - (0.01f64 + 0.0025).sqrt()).abs() < 1e-15);
    }
}
