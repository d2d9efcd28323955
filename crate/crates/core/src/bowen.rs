//! Bowen numbers: the root `delta` of `P(-delta log|f'|) = eta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{self, ParameterFamily};
use crate::par;
use crate::poly::MarkedPolynomial;
use crate::thermo::{PeriodicAtoms, ThermoSystem};

/// Levels used when the caller does not choose them.
pub const DEFAULT_LEVELS: [usize; 6] = [7, 8, 9, 10, 11, 12];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BowenResult {
    pub delta: f64,
    pub eta: f64,
    /// `|P(-delta log|f'|) - eta|`.
    pub residual: f64,
    pub iterations: usize,
}

/// Root of `p(delta) = eta` on `[0, 2]`, where `p` returns the pressure and
/// its derivative in `delta`. Bisection down to a bracket of width 0.1, then
/// Newton safeguarded by the bracket.
pub fn solve<P>(p: P, eta: f64, tol: f64) -> Result<BowenResult>
where
    P: Fn(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    let (p_lo, _) = p(lo);
    let (p_hi, _) = p(hi);
    if !(p_lo - eta > 0.0 && p_hi - eta < 0.0) {
        return Err(Error::BracketFailure { lo, hi, p_lo, p_hi });
    }
    let mut iterations = 0;
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        if p(mid).0 > eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut delta = 0.5 * (lo + hi);
    for _ in 0..200 {
        iterations += 1;
        let (value, slope) = p(delta);
        let r = value - eta;
        if r.abs() <= tol {
            return Ok(BowenResult {
                delta,
                eta,
                residual: r.abs(),
                iterations,
            });
        }
        if r > 0.0 {
            lo = delta;
        } else {
            hi = delta;
        }
        let newton = delta - r / slope;
        delta = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi.max(1e-300) {
            let residual = (p(delta).0 - eta).abs();
            if residual <= tol {
                return Ok(BowenResult {
                    delta,
                    eta,
                    residual,
                    iterations,
                });
            }
            break;
        }
    }
    Err(Error::NoConvergence(format!("Bowen equation for eta = {eta}")))
}

fn check_eta(eta: f64, degree: usize) -> Result<()> {
    let upper = (degree as f64).ln();
    if !(eta > 0.0 && eta < upper) {
        return Err(Error::EtaOutOfRange { eta, upper });
    }
    Ok(())
}

/// Bowen number from the extrapolated pressure over `system`'s levels.
pub fn bowen_number_on(system: &ThermoSystem, eta: f64, tol: f64) -> Result<BowenResult> {
    check_eta(eta, system.polynomial().degree())?;
    solve_on(system, eta, tol)
}

fn solve_on(system: &ThermoSystem, eta: f64, tol: f64) -> Result<BowenResult> {
    let top = system.top();
    let logs = top.log_multipliers();
    solve(
        |delta| {
            let value = system.pressure_of_log_derivative(delta).value;
            (value, -level_lyapunov(top, &logs, delta))
        },
        eta,
        tol,
    )
}

/// `delta_eta(f)` over [`DEFAULT_LEVELS`].
pub fn bowen_number(f: &MarkedPolynomial, eta: f64, tol: f64) -> Result<BowenResult> {
    check_eta(eta, f.degree())?;
    bowen_number_on(&ThermoSystem::new(f, &DEFAULT_LEVELS)?, eta, tol)
}

/// The `eta = 0` root, i.e. the Hausdorff dimension of `J`. Only offered at
/// hyperbolic parameters, where it is a diagnostic; parabolic maps are
/// rejected.
pub fn dimension_root(f: &MarkedPolynomial, levels: &[usize], tol: f64) -> Result<BowenResult> {
    let c = family::classify(f, 20_000);
    if !c.hyperbolic || c.fates.iter().any(|x| x.fate == crate::fate::Fate::ParabolicCycle) {
        return Err(Error::InvalidArgument(
            "eta = 0 is only available at hyperbolic parameters".into(),
        ));
    }
    solve_on(&ThermoSystem::new(f, levels)?, 0.0, tol)
}

/// `L_nu` for the level-`n` Gibbs state of `-delta log|f'|`.
fn level_lyapunov(atoms: &PeriodicAtoms, logs: &[f64], delta: f64) -> f64 {
    let sums: Vec<f64> = logs.iter().map(|l| -delta * l).collect();
    let weights = atoms.gibbs_weights_from_cycle_sums(&sums);
    // Per-point weights are constant on a cycle; per-point log|f'| averages to l / p.
    let per_cycle: Vec<f64> = atoms
        .orbits()
        .iter()
        .enumerate()
        .map(|(i, _)| weights[atoms.offset(i)] * logs[i])
        .collect();
    par::tree_sum(&per_cycle)
}

/// Bowen number at a single level from per-cycle `log|multiplier|` values.
/// The level-`n` pressure is exactly differentiable, so Newton converges to
/// rounding level.
pub fn bowen_at_level(atoms: &PeriodicAtoms, log_multipliers: &[f64], eta: f64, tol: f64) -> Result<BowenResult> {
    solve(
        |delta| {
            let sums: Vec<f64> = log_multipliers.iter().map(|l| -delta * l).collect();
            (
                atoms.pressure_from_cycle_sums(&sums),
                -level_lyapunov(atoms, log_multipliers, delta),
            )
        },
        eta,
        tol,
    )
}

/// Rectangular grid over a real parameter box, `resolution[k]` nodes along
/// coordinate `k` (endpoints included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl ParameterGrid {
    pub fn validate(&self) -> Result<()> {
        let k = self.lower.len();
        if self.upper.len() != k || self.resolution.len() != k {
            return Err(Error::InvalidArgument("grid bounds and resolution differ in length".into()));
        }
        for i in 0..k {
            if self.resolution[i] == 0 {
                return Err(Error::InvalidArgument("zero grid resolution".into()));
            }
            if self.resolution[i] > 1 && !(self.upper[i] >= self.lower[i]) {
                return Err(Error::InvalidArgument("grid upper bound below lower bound".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of node `flat`, first coordinate varying fastest.
    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        self.resolution
            .iter()
            .map(|&r| {
                let i = flat % r;
                flat /= r;
                i
            })
            .collect()
    }

    pub fn flat(&self, index: &[usize]) -> usize {
        let mut flat = 0;
        for (k, &i) in index.iter().enumerate().rev() {
            flat = flat * self.resolution[k] + i;
        }
        flat
    }

    pub fn step(&self, k: usize) -> f64 {
        if self.resolution[k] > 1 {
            (self.upper[k] - self.lower[k]) / (self.resolution[k] - 1) as f64
        } else {
            0.0
        }
    }

    pub fn parameter(&self, index: &[usize]) -> Vec<f64> {
        index
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lower[k] + i as f64 * self.step(k))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Ok,
    NotHyperbolic,
    BracketFailure,
    EnumerationFailure,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldNode {
    pub index: Vec<usize>,
    pub parameter: Vec<f64>,
    pub result: Option<BowenResult>,
    pub status: NodeStatus,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowenField {
    pub grid: ParameterGrid,
    pub eta: f64,
    pub nodes: Vec<FieldNode>,
    /// Largest `|delta_{i+1} - 2 delta_i + delta_{i-1}| / h^2` over
    /// consecutive valid triples along any axis.
    pub max_second_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldOptions {
    pub levels: Vec<usize>,
    pub tol: f64,
    pub fate_budget: usize,
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS.to_vec(),
            tol: 1e-12,
            fate_budget: 20_000,
        }
    }
}

/// `delta_eta` at every node of `grid`. Failing nodes are marked and the
/// rest of the field is still computed.
pub fn bowen_field(
    family: &dyn ParameterFamily,
    eta: f64,
    grid: &ParameterGrid,
    options: &FieldOptions,
) -> Result<BowenField> {
    grid.validate()?;
    if grid.lower.len() != family.real_dimension() {
        return Err(Error::InvalidArgument(format!(
            "grid has {} coordinates, family has {}",
            grid.lower.len(),
            family.real_dimension()
        )));
    }
    if let Ok(f) = family.evaluate(&grid.parameter(&grid.index(0))) {
        check_eta(eta, f.degree())?;
    }
    let nodes = par::map_range(grid.len(), |flat| {
        let index = grid.index(flat);
        let parameter = grid.parameter(&index);
        let (result, status, message) = field_node(family, eta, &parameter, options);
        FieldNode {
            index,
            parameter,
            result,
            status,
            message,
        }
    });
    let max_second_difference = second_differences(grid, &nodes);
    Ok(BowenField {
        grid: grid.clone(),
        eta,
        nodes,
        max_second_difference,
    })
}

fn field_node(
    family: &dyn ParameterFamily,
    eta: f64,
    parameter: &[f64],
    options: &FieldOptions,
) -> (Option<BowenResult>, NodeStatus, Option<String>) {
    let f = match family.evaluate(parameter) {
        Ok(f) => f,
        Err(e) => return (None, NodeStatus::SolverFailure, Some(e.to_string())),
    };
    let classification = family::classify(&f, options.fate_budget);
    if !classification.hyperbolic {
        return (None, NodeStatus::NotHyperbolic, None);
    }
    let system = match ThermoSystem::new(&f, &options.levels) {
        Ok(s) => s,
        Err(e) => return (None, NodeStatus::EnumerationFailure, Some(e.to_string())),
    };
    match bowen_number_on(&system, eta, options.tol) {
        Ok(r) => (Some(r), NodeStatus::Ok, None),
        Err(e @ Error::BracketFailure { .. }) => (None, NodeStatus::BracketFailure, Some(e.to_string())),
        Err(e) => (None, NodeStatus::SolverFailure, Some(e.to_string())),
    }
}

fn second_differences(grid: &ParameterGrid, nodes: &[FieldNode]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for node in nodes {
        let Some(mid) = node.result else { continue };
        for k in 0..grid.resolution.len() {
            let i = node.index[k];
            if i == 0 || i + 1 >= grid.resolution[k] {
                continue;
            }
            let h = grid.step(k);
            if h == 0.0 {
                continue;
            }
            let mut lower = node.index.clone();
            lower[k] -= 1;
            let mut upper = node.index.clone();
            upper[k] += 1;
            let (Some(a), Some(b)) = (nodes[grid.flat(&lower)].result, nodes[grid.flat(&upper)].result) else {
                continue;
            };
            let d2 = (a.delta - 2.0 * mid.delta + b.delta).abs() / (h * h);
            worst = Some(worst.map_or(d2, |w: f64| w.max(d2)));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::QuadraticFamily;
    use num_complex::Complex64;
    use std::f64::consts::LN_2;

    fn quad(re: f64, im: f64) -> MarkedPolynomial {
        MarkedPolynomial::quadratic(Complex64::new(re, im))
    }

    #[test]
    fn doubling_map_closed_form() {
        let f = quad(0.0, 0.0);
        let system = ThermoSystem::new(&f, &[6, 7, 8, 9, 10, 11, 12]).unwrap();
        for k in 1..=6 {
            let eta = 0.1 * k as f64;
            let r = bowen_number_on(&system, eta, 1e-13).unwrap();
            assert!((r.delta - (1.0 - eta / LN_2)).abs() < 1e-9, "eta {eta}: {r:?}");
            assert!(r.residual <= 1e-13);
        }
        let r = bowen_number_on(&system, LN_2 / 2.0, 1e-13).unwrap();
        assert!((r.delta - 0.5).abs() < 1e-9);
        let r = bowen_number_on(&system, LN_2 - 1e-6, 1e-13).unwrap();
        assert!(r.delta > 0.0 && r.delta < 1e-5);
    }

    #[test]
    fn eta_must_be_inside_range() {
        let f = quad(0.0, 0.0);
        for eta in [0.0, -0.1, LN_2, 1.0] {
            assert!(matches!(bowen_number(&f, eta, 1e-12), Err(Error::EtaOutOfRange { .. })));
        }
    }

    #[test]
    fn monotone_in_eta_and_consistent() {
        let f = quad(-0.2, 0.0);
        let system = ThermoSystem::new(&f, &[8, 9, 10]).unwrap();
        let a = bowen_number_on(&system, 0.1, 1e-12).unwrap();
        let b = bowen_number_on(&system, 0.3, 1e-12).unwrap();
        assert!(a.delta > b.delta);
        let p = system.pressure_of_log_derivative(a.delta).value;
        assert!((p - 0.1).abs() <= a.residual + 1e-15);
    }

    #[test]
    fn level_solver_matches_extrapolated_at_doubling_map() {
        let f = quad(0.0, 0.0);
        let atoms = PeriodicAtoms::enumerate(&f, 9).unwrap();
        let r = bowen_at_level(&atoms, &atoms.log_multipliers(), 0.3, 1e-14).unwrap();
        // Single-level pressure of -delta log 2 is log(511)/9 - delta log 2.
        let expected = ((511f64).ln() / 9.0 - 0.3) / LN_2;
        assert!((r.delta - expected).abs() < 1e-13);
    }

    #[test]
    fn dimension_root_of_circle_is_one() {
        let r = dimension_root(&quad(0.0, 0.0), &[6, 7, 8, 9, 10, 11, 12], 1e-12).unwrap();
        assert!((r.delta - 1.0).abs() < 1e-9);
        assert!(dimension_root(&quad(0.25, 0.0), &[6], 1e-12).is_err());
    }

    #[test]
    fn field_marks_nodes_outside_the_cardioid() {
        let grid = ParameterGrid {
            lower: vec![0.15, -0.1],
            upper: vec![0.35, 0.1],
            resolution: vec![3, 3],
        };
        let options = FieldOptions {
            levels: vec![6, 7, 8],
            ..FieldOptions::default()
        };
        let field = bowen_field(&QuadraticFamily, 0.3, &grid, &options).unwrap();
        assert_eq!(field.nodes.len(), 9);
        for node in &field.nodes {
            // Main cardioid: attracting fixed point, multiplier 1 - sqrt(1 - 4c).
            let c = Complex64::new(node.parameter[0], node.parameter[1]);
            let s = (1.0 - 4.0 * c).sqrt();
            let m = (1.0 - s).norm().min((1.0 + s).norm());
            if m < 0.9 {
                assert_eq!(node.status, NodeStatus::Ok, "{node:?}");
            } else if m > 1.0 {
                assert_eq!(node.status, NodeStatus::NotHyperbolic, "{node:?}");
            }
        }
    }

    #[test]
    fn single_node_field_is_a_bowen_number() {
        let grid = ParameterGrid {
            lower: vec![0.0, 0.0],
            upper: vec![0.0, 0.0],
            resolution: vec![1, 1],
        };
        let options = FieldOptions {
            levels: (6..=12).collect(),
            ..FieldOptions::default()
        };
        let field = bowen_field(&QuadraticFamily, 0.3, &grid, &options).unwrap();
        let r = field.nodes[0].result.unwrap();
        assert!((r.delta - (1.0 - 0.3 / LN_2)).abs() < 1e-9);
        assert_eq!(field.max_second_difference, None);
    }

    #[test]
    fn grid_indexing_round_trips() {
        let grid = ParameterGrid {
            lower: vec![0.0, 1.0, 2.0],
            upper: vec![1.0, 2.0, 3.0],
            resolution: vec![2, 3, 4],
        };
        for flat in 0..grid.len() {
            assert_eq!(grid.flat(&grid.index(flat)), flat);
        }
        assert_eq!(grid.parameter(&[1, 2, 3]), vec![1.0, 2.0, 3.0]);
    }
}
