//! The G function, its Hessian form, the pressure form, the conformal
//! identity between them, the K-ratio degeneracy scan, and path lengths.
//!
//! All quantities are computed at one level `n`. The base equilibrium state
//! `nu` is the level-`n` Gibbs state of `-delta_eta(lambda0) log|f'|` on the
//! repelling cycles at `lambda0`; cycles are moved to nearby parameters by
//! continuation and `delta_eta(lambda)` is the level-`n` Bowen root for the
//! moved multipliers. At a fixed level the variational principle is exact,
//! so `G(lambda) >= G(lambda0)` holds up to rounding and the Hessian of `G`
//! equals the level-`n` variance of `g'` exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bowen;
use crate::error::{Error, Result};
use crate::family::{self, ParameterFamily};
use crate::motion::{self, MotionConfig};
use crate::par;
use crate::thermo::{self, PeriodicAtoms, VarianceEstimate, VarianceTolerance};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricOptions {
    /// Parameter step for finite differences (halved once for Richardson).
    pub fd_step: f64,
    pub grad_tol: f64,
    pub psd_tol: f64,
    pub bowen_tol: f64,
    pub variance: VarianceTolerance,
    pub motion: MotionConfig,
    /// Iteration budget for the hyperbolicity check on path nodes.
    pub fate_budget: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-3,
            grad_tol: 1e-4,
            psd_tol: 1e-6,
            bowen_tol: 1e-14,
            variance: VarianceTolerance::default(),
            motion: MotionConfig::default(),
            fate_budget: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianForm {
    pub base_parameter: Vec<f64>,
    /// Row-major symmetric matrix.
    pub matrix: Vec<Vec<f64>>,
    pub eta: f64,
    pub fd_step: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub gradient: Vec<f64>,
}

impl HessianForm {
    /// `v^T H v`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, row) in self.matrix.iter().enumerate() {
            for (j, h) in row.iter().enumerate() {
                acc += v[i] * h * v[j];
            }
        }
        acc
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.eigenvalues.iter().all(|&e| e >= -tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureForm {
    /// `||v||_P^2 = Var(g', nu) / (eta - ∫ g dnu)`.
    pub value: f64,
    pub variance: VarianceEstimate,
    /// `eta - ∫ g(0, .) dnu`.
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCheck {
    pub residual: f64,
    pub pressure_form: f64,
    pub hessian_norm: f64,
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub direction: Vec<f64>,
    /// `(d/dt log|multiplier|) / log|multiplier|`, one per cycle.
    pub per_orbit_k: Vec<f64>,
    /// `max - min` of `per_orbit_k`.
    pub dispersion: f64,
    pub k_mean: f64,
}

/// Cycles at some parameter, in base order.
#[derive(Debug, Clone)]
struct Moved {
    /// `log|multiplier|` per cycle.
    cycle_logs: Vec<f64>,
    /// `log|f'|` per point, flattened like the base atoms.
    point_logs: Vec<f64>,
}

/// Base data at `lambda0` shared by every metric computation.
pub struct MetricContext<'a> {
    family: &'a dyn ParameterFamily,
    lambda0: Vec<f64>,
    eta: f64,
    atoms: PeriodicAtoms,
    base: Moved,
    delta0: f64,
    weights: Vec<f64>,
    lyapunov0: f64,
    options: MetricOptions,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn offset(lambda0: &[f64], v: &[f64], t: f64) -> Vec<f64> {
    lambda0.iter().zip(v).map(|(a, b)| a + t * b).collect()
}

/// Richardson-refined central first difference from samples at `h`, `-h`,
/// `h/2`, `-h/2`.
fn first_difference(s: [f64; 4], h: f64) -> f64 {
    let coarse = (s[0] - s[1]) / (2.0 * h);
    let fine = (s[2] - s[3]) / h;
    (4.0 * fine - coarse) / 3.0
}

/// Richardson-refined central second difference.
fn second_difference(s: [f64; 4], center: f64, h: f64) -> f64 {
    let coarse = (s[0] - 2.0 * center + s[1]) / (h * h);
    let fine = (s[2] - 2.0 * center + s[3]) / (0.25 * h * h);
    (4.0 * fine - coarse) / 3.0
}

impl<'a> MetricContext<'a> {
    pub fn new(
        family: &'a dyn ParameterFamily,
        lambda0: &[f64],
        eta: f64,
        n: usize,
        options: MetricOptions,
    ) -> Result<Self> {
        if lambda0.len() != family.real_dimension() {
            return Err(Error::InvalidArgument(format!(
                "base parameter must have {} coordinates",
                family.real_dimension()
            )));
        }
        if !(options.fd_step > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
        }
        let f0 = family.evaluate(lambda0)?;
        let upper = (f0.degree() as f64).ln();
        if !(eta > 0.0 && eta < upper) {
            return Err(Error::EtaOutOfRange { eta, upper });
        }
        let atoms = PeriodicAtoms::enumerate(&f0, n)?;
        let point_logs = atoms.sample(|z| f0.derivative_at(z).norm().ln())?;
        let cycle_logs = atoms.cycle_sums(&point_logs);
        let base = Moved {
            cycle_logs,
            point_logs,
        };
        let delta0 = bowen::bowen_at_level(&atoms, &base.cycle_logs, eta, options.bowen_tol)?.delta;
        let sums: Vec<f64> = base.cycle_logs.iter().map(|l| -delta0 * l).collect();
        let weights = atoms.gibbs_weights_from_cycle_sums(&sums);
        let lyapunov0 = thermo::weighted_sum(&weights, &base.point_logs);
        Ok(Self {
            family,
            lambda0: lambda0.to_vec(),
            eta,
            atoms,
            base,
            delta0,
            weights,
            lyapunov0,
            options,
        })
    }

    pub fn base_parameter(&self) -> &[f64] {
        &self.lambda0
    }

    pub fn atoms(&self) -> &PeriodicAtoms {
        &self.atoms
    }

    /// Per-point weights of `nu`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `delta_eta(lambda0)` at level `n`.
    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// `L_nu(lambda0) = ∫ log|f'| dnu`.
    pub fn lyapunov0(&self) -> f64 {
        self.lyapunov0
    }

    /// `eta - ∫ g(0, .) dnu = eta + delta0 L_nu`.
    pub fn normalization(&self) -> f64 {
        self.eta + self.delta0 * self.lyapunov0
    }

    fn moved(&self, lambda: &[f64]) -> Result<Moved> {
        if lambda == self.lambda0.as_slice() {
            return Ok(self.base.clone());
        }
        let track = motion::continue_orbits_with(
            self.family,
            &self.lambda0,
            &[lambda.to_vec()],
            self.atoms.orbits(),
            &self.options.motion,
        )?;
        let f = self.family.evaluate(lambda)?;
        let mut point_logs = Vec::with_capacity(self.atoms.num_points());
        let mut cycle_logs = Vec::with_capacity(self.atoms.orbits().len());
        for i in 0..self.atoms.orbits().len() {
            let start = point_logs.len();
            point_logs.extend(track.endpoint(i).iter().map(|&z| f.derivative_at(z).norm().ln()));
            let sum: f64 = point_logs[start..].iter().sum();
            if !(sum > 0.0) {
                return Err(Error::NonRepellingCycle { modulus: sum.exp() });
            }
            cycle_logs.push(sum);
        }
        Ok(Moved {
            cycle_logs,
            point_logs,
        })
    }

    fn delta_for(&self, moved: &Moved) -> Result<f64> {
        Ok(bowen::bowen_at_level(&self.atoms, &moved.cycle_logs, self.eta, self.options.bowen_tol)?.delta)
    }

    /// `G_{lambda0}(lambda) = delta_eta(lambda) ∫ log|f_lambda' ∘ Psi_lambda| dnu`.
    pub fn g_value(&self, lambda: &[f64]) -> Result<f64> {
        let moved = self.moved(lambda)?;
        let delta = self.delta_for(&moved)?;
        Ok(delta * thermo::weighted_sum(&self.weights, &moved.point_logs))
    }

    fn g_values(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        par::try_map(points, |p| self.g_value(p))
    }

    fn stencil(&self, v: &[f64], h: f64) -> Vec<Vec<f64>> {
        [h, -h, 0.5 * h, -0.5 * h]
            .iter()
            .map(|&t| offset(&self.lambda0, v, t))
            .collect()
    }

    /// `d^2/dt^2 G(lambda0 + t v)` at `t = 0`, i.e. `v^T H v`.
    pub fn directional_second_derivative(&self, v: &[f64]) -> Result<f64> {
        let len = norm(v);
        if len == 0.0 {
            return Ok(0.0);
        }
        let h = self.options.fd_step / len;
        let mut points = self.stencil(v, h);
        points.push(self.lambda0.clone());
        let g = self.g_values(&points)?;
        Ok(second_difference([g[0], g[1], g[2], g[3]], g[4], h))
    }

    /// Central-difference gradient of `G` at `lambda0`.
    pub fn gradient(&self) -> Result<Vec<f64>> {
        let dim = self.lambda0.len();
        let h = self.options.fd_step;
        let points: Vec<Vec<f64>> = (0..dim).flat_map(|i| self.stencil(&unit(dim, i), h)).collect();
        let g = self.g_values(&points)?;
        Ok((0..dim)
            .map(|i| first_difference([g[4 * i], g[4 * i + 1], g[4 * i + 2], g[4 * i + 3]], h))
            .collect())
    }

    /// Full Hessian of `G` at `lambda0`, after checking that the gradient
    /// vanishes.
    pub fn hessian(&self) -> Result<HessianForm> {
        let dim = self.lambda0.len();
        let h = self.options.fd_step;
        let mut directions: Vec<Vec<f64>> = (0..dim).map(|i| unit(dim, i)).collect();
        let mut pairs = Vec::new();
        for i in 0..dim {
            for j in i + 1..dim {
                let mut plus = unit(dim, i);
                plus[j] = 1.0;
                let mut minus = unit(dim, i);
                minus[j] = -1.0;
                pairs.push((i, j, directions.len()));
                directions.push(plus);
                directions.push(minus);
            }
        }
        let mut points: Vec<Vec<f64>> = directions.iter().flat_map(|d| self.stencil(d, h)).collect();
        points.push(self.lambda0.clone());
        let g = self.g_values(&points)?;
        let center = *g.last().unwrap();
        let samples = |k: usize| [g[4 * k], g[4 * k + 1], g[4 * k + 2], g[4 * k + 3]];

        let gradient: Vec<f64> = (0..dim).map(|i| first_difference(samples(i), h)).collect();
        let grad_norm = norm(&gradient);
        if grad_norm >= self.options.grad_tol {
            return Err(Error::GradientNotVanishing {
                norm: grad_norm,
                tol: self.options.grad_tol,
            });
        }

        let mut matrix = vec![vec![0.0; dim]; dim];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = second_difference(samples(i), center, h);
        }
        for (i, j, k) in pairs {
            let plus = second_difference(samples(k), center, h);
            let minus = second_difference(samples(k + 1), center, h);
            let value = (plus - minus) / 4.0;
            matrix[i][j] = value;
            matrix[j][i] = value;
        }
        let eigenvalues = if dim == 0 {
            Vec::new()
        } else {
            let m = DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]);
            let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            e.sort_by(f64::total_cmp);
            e
        };
        Ok(HessianForm {
            base_parameter: self.lambda0.clone(),
            matrix,
            eta: self.eta,
            fd_step: h,
            eigenvalues,
            gradient,
        })
    }

    /// Moved cycles and Bowen numbers at `lambda0 + t v` for the stencil
    /// `t = h, -h, h/2, -h/2`, `h = fd_step / |v|`.
    fn directional_samples(&self, v: &[f64]) -> Result<(f64, Vec<(Moved, f64)>)> {
        let h = self.options.fd_step / norm(v);
        let points = self.stencil(v, h);
        let samples = par::try_map(&points, |p| {
            let moved = self.moved(p)?;
            let delta = self.delta_for(&moved)?;
            Ok((moved, delta))
        })?;
        Ok((h, samples))
    }

    /// `g'(x) = d/dt [-delta(t) log|f_t'(Psi_t x)|]` at every base atom.
    pub fn g_dot(&self, v: &[f64]) -> Result<Vec<f64>> {
        if norm(v) == 0.0 {
            return Ok(vec![0.0; self.atoms.num_points()]);
        }
        let (h, s) = self.directional_samples(v)?;
        Ok((0..self.atoms.num_points())
            .map(|x| {
                let at = |k: usize| -s[k].1 * s[k].0.point_logs[x];
                first_difference([at(0), at(1), at(2), at(3)], h)
            })
            .collect())
    }

    /// Squared pressure norm of `v`.
    pub fn pressure_form(&self, v: &[f64]) -> Result<PressureForm> {
        if norm(v) == 0.0 {
            return Err(Error::InvalidArgument("pressure form needs a nonzero direction".into()));
        }
        let g_dot = self.g_dot(v)?;
        let potential: Vec<f64> = self.base.point_logs.iter().map(|l| -self.delta0 * l).collect();
        let variance = thermo::variance_on_atoms(&self.atoms, &g_dot, &potential, None, self.options.variance)?;
        let normalization = self.normalization();
        Ok(PressureForm {
            value: variance.value / normalization,
            variance,
            normalization,
        })
    }

    /// `|‖v‖_P^2 (eta - ∫ g dnu) - ‖v‖_G^2| / max(‖v‖_G^2, eps)`.
    pub fn conformal_residual(&self, v: &[f64]) -> Result<ConformalCheck> {
        let p = self.pressure_form(v)?;
        let g = self.directional_second_derivative(v)?;
        let residual = (p.value * p.normalization - g).abs() / g.max(f64::EPSILON);
        Ok(ConformalCheck {
            residual,
            pressure_form: p.value,
            hessian_norm: g,
            normalization: p.normalization,
        })
    }

    pub fn degeneracy_scan(&self, v: &[f64]) -> Result<DegeneracyReport> {
        let cycles = self.atoms.orbits().len();
        let per_orbit_k: Vec<f64> = if norm(v) == 0.0 {
            vec![0.0; cycles]
        } else {
            let (h, s) = self.directional_samples(v)?;
            (0..cycles)
                .map(|c| {
                    let at = |k: usize| s[k].0.cycle_logs[c];
                    first_difference([at(0), at(1), at(2), at(3)], h) / self.base.cycle_logs[c]
                })
                .collect()
        };
        let max = per_orbit_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = per_orbit_k.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(DegeneracyReport {
            direction: v.to_vec(),
            k_mean: par::tree_sum(&per_orbit_k) / cycles as f64,
            dispersion: max - min,
            per_orbit_k,
        })
    }
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = 1.0;
    e
}

pub fn g_function(
    family: &dyn ParameterFamily,
    lambda0: &[f64],
    lambda: &[f64],
    eta: f64,
    n: usize,
) -> Result<f64> {
    MetricContext::new(family, lambda0, eta, n, MetricOptions::default())?.g_value(lambda)
}

pub fn hessian_form(family: &dyn ParameterFamily, lambda0: &[f64], eta: f64, n: usize, h: f64) -> Result<HessianForm> {
    let options = MetricOptions {
        fd_step: h,
        ..MetricOptions::default()
    };
    MetricContext::new(family, lambda0, eta, n, options)?.hessian()
}

pub fn pressure_form(
    family: &dyn ParameterFamily,
    lambda0: &[f64],
    v: &[f64],
    eta: f64,
    n: usize,
    h: f64,
) -> Result<PressureForm> {
    let options = MetricOptions {
        fd_step: h,
        ..MetricOptions::default()
    };
    MetricContext::new(family, lambda0, eta, n, options)?.pressure_form(v)
}

pub fn conformal_residual(
    family: &dyn ParameterFamily,
    lambda0: &[f64],
    v: &[f64],
    eta: f64,
    n: usize,
) -> Result<ConformalCheck> {
    MetricContext::new(family, lambda0, eta, n, MetricOptions::default())?.conformal_residual(v)
}

pub fn degeneracy_scan(
    family: &dyn ParameterFamily,
    lambda0: &[f64],
    v: &[f64],
    eta: f64,
    n: usize,
) -> Result<DegeneracyReport> {
    MetricContext::new(family, lambda0, eta, n, MetricOptions::default())?.degeneracy_scan(v)
}

/// `sum_segments ∫_0^1 sqrt(d^T H(a + t d) d) dt` with `d = b - a`, by
/// Gauss–Legendre quadrature of `order` nodes per segment. Every polyline
/// node and quadrature node must be hyperbolic.
pub fn path_length(
    family: &dyn ParameterFamily,
    nodes: &[Vec<f64>],
    eta: f64,
    n: usize,
    order: usize,
    options: &MetricOptions,
) -> Result<f64> {
    let order = std::num::NonZeroUsize::new(order)
        .ok_or_else(|| Error::InvalidArgument("quadrature order must be positive".into()))?;
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("path needs at least one node".into()));
    }
    let rule = gauss_quad::legendre::GaussLegendre::new(order);
    let mut jobs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for pair in nodes.windows(2) {
        let d: Vec<f64> = pair[1].iter().zip(&pair[0]).map(|(b, a)| b - a).collect();
        if norm(&d) == 0.0 {
            continue;
        }
        for &(x, w) in rule.as_node_weight_pairs() {
            let t = 0.5 * (x + 1.0);
            jobs.push((offset(&pair[0], &d, t), d.clone(), 0.5 * w));
        }
    }
    let mut checks: Vec<&[f64]> = nodes.iter().map(Vec::as_slice).collect();
    checks.extend(jobs.iter().map(|j| j.0.as_slice()));
    par::try_map(&checks, |p| {
        if family::classify_lambda_hyperbolic(family, p, options.fate_budget)?.hyperbolic {
            Ok(())
        } else {
            Err(Error::NotHyperbolic(p.to_vec()))
        }
    })?;
    let terms = par::try_map(&jobs, |(point, d, w)| {
        let ctx = MetricContext::new(family, point, eta, n, options.clone())?;
        let q = ctx.directional_second_derivative(d)?;
        Ok(w * q.max(0.0).sqrt())
    })?;
    Ok(par::tree_sum(&terms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceOptions {
    /// Path-length evaluations allowed.
    pub budget: usize,
    pub order: usize,
    pub interior_nodes: usize,
    pub metric: MetricOptions,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            budget: 40,
            order: 4,
            interior_nodes: 2,
            metric: MetricOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub upper_bound: f64,
    pub best_path: Vec<Vec<f64>>,
    pub evaluations: usize,
    /// `|length at 2 order - length at order|` on the best path.
    pub quadrature_error: f64,
}

/// Upper bound for the path distance between `x` and `y`: coordinate descent
/// on the interior nodes of a polyline, starting from the straight segment.
/// The endpoints are put in a canonical order first, so the estimate is
/// exactly symmetric.
pub fn distance_estimate(
    family: &dyn ParameterFamily,
    x: &[f64],
    y: &[f64],
    eta: f64,
    n: usize,
    options: &DistanceOptions,
) -> Result<DistanceEstimate> {
    let swapped = y.iter().zip(x).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less);
    let (a, b) = if swapped { (y, x) } else { (x, y) };
    let span: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let span_len = norm(&span);
    if span_len == 0.0 {
        return Ok(DistanceEstimate {
            upper_bound: 0.0,
            best_path: vec![x.to_vec(), y.to_vec()],
            evaluations: 0,
            quadrature_error: 0.0,
        });
    }
    let m = options.interior_nodes;
    let mut path: Vec<Vec<f64>> = (0..=m + 1).map(|k| offset(a, &span, k as f64 / (m + 1) as f64)).collect();
    let length = |p: &[Vec<f64>]| path_length(family, p, eta, n, options.order, &options.metric);

    let mut evaluations = 1;
    let mut best = length(&path).ok();
    let mut step = 0.25 * span_len / (m + 1) as f64;
    'search: while evaluations < options.budget && step > 1e-3 * span_len {
        let mut improved = false;
        for node in 1..=m {
            for coord in 0..a.len() {
                for sign in [1.0, -1.0] {
                    if evaluations >= options.budget {
                        break 'search;
                    }
                    let mut candidate = path.clone();
                    candidate[node][coord] += sign * step;
                    evaluations += 1;
                    if let Ok(l) = length(&candidate) {
                        if best.is_none_or(|b| l < b) {
                            best = Some(l);
                            path = candidate;
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let upper_bound = best.ok_or(Error::SearchExhausted)?;
    let refined = path_length(family, &path, eta, n, 2 * options.order, &options.metric)?;
    if swapped {
        path.reverse();
    }
    Ok(DistanceEstimate {
        upper_bound,
        best_path: path,
        evaluations,
        quadrature_error: (refined - upper_bound).abs(),
    })
}
