//! Pressure, Gibbs measures, Lyapunov exponents, variance, coboundary
//! detection, Hoelder extension, and a discretised transfer operator.
//!
//! The primary pressure estimator works on repelling cycles:
//!
//! ```text
//! P_n(psi) = (1/n) log sum_{x in Fix(f^n) ∩ J} exp(S_n psi(x))
//! ```
//!
//! and the level-`n` equilibrium state puts weight proportional to
//! `exp(S_n psi(x))` on each of those points. Both are exact derivatives of
//! one another at a fixed level: `d/ds P_n(phi + s psi) = sum_x w_x psi(x)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbits::{self, EnumerationConfig, PeriodicOrbit};
use crate::par;
use crate::poly::MarkedPolynomial;

/// Repelling cycles whose period divides `level`.
#[derive(Debug, Clone)]
pub struct PeriodicAtoms {
    level: usize,
    orbits: Vec<PeriodicOrbit>,
    offsets: Vec<usize>,
}

impl PeriodicAtoms {
    /// Keep the repelling cycles among `orbits`; parabolic and indifferent
    /// cycles never enter the estimators.
    pub fn new(level: usize, orbits: Vec<PeriodicOrbit>) -> Result<Self> {
        let orbits: Vec<PeriodicOrbit> = orbits.into_iter().filter(|o| o.is_repelling()).collect();
        if orbits.is_empty() {
            return Err(Error::EmptyOrbitSet { level });
        }
        if let Some(o) = orbits.iter().find(|o| !level.is_multiple_of(o.period)) {
            return Err(Error::InvalidArgument(format!(
                "cycle of period {} does not divide level {level}",
                o.period
            )));
        }
        let mut offsets = Vec::with_capacity(orbits.len() + 1);
        let mut acc = 0;
        for o in &orbits {
            offsets.push(acc);
            acc += o.period;
        }
        offsets.push(acc);
        Ok(Self {
            level,
            orbits,
            offsets,
        })
    }

    pub fn enumerate(f: &MarkedPolynomial, level: usize) -> Result<Self> {
        Self::enumerate_with(f, level, &EnumerationConfig::default())
    }

    pub fn enumerate_with(f: &MarkedPolynomial, level: usize, cfg: &EnumerationConfig) -> Result<Self> {
        Self::new(level, orbits::enumerate(f, level, cfg)?.orbits)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn orbits(&self) -> &[PeriodicOrbit] {
        &self.orbits
    }

    pub fn num_points(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Index of the first point of cycle `i` in the flattened point order.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// All points, cycle by cycle.
    pub fn points(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.orbits.iter().flat_map(|o| o.points.iter().copied())
    }

    /// Evaluate `psi` at every point (flattened order).
    pub fn sample<F>(&self, psi: F) -> Result<Vec<f64>>
    where
        F: Fn(Complex64) -> f64 + Sync + Send,
    {
        let per_orbit = par::try_map(&self.orbits, |o| {
            o.points
                .iter()
                .map(|&z| {
                    let v = psi(z);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::NonFinitePotential { point: z })
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        Ok(per_orbit.into_iter().flatten().collect())
    }

    /// Birkhoff sums over one period, one per cycle.
    pub fn cycle_sums(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.num_points(), "one value per point");
        (0..self.orbits.len())
            .map(|i| values[self.offsets[i]..self.offsets[i + 1]].iter().sum())
            .collect()
    }

    /// `log |multiplier|` of each cycle.
    pub fn log_multipliers(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.log_multiplier()).collect()
    }

    fn log_terms(&self, cycle_sums: &[f64]) -> Vec<f64> {
        let n = self.level as f64;
        self.orbits
            .iter()
            .zip(cycle_sums)
            .map(|(o, &s)| {
                let p = o.period as f64;
                p.ln() + n / p * s
            })
            .collect()
    }

    /// `P_n` from per-cycle Birkhoff sums.
    pub fn pressure_from_cycle_sums(&self, cycle_sums: &[f64]) -> f64 {
        log_sum_exp(&self.log_terms(cycle_sums)) / self.level as f64
    }

    /// `P_n` from per-point potential values.
    pub fn pressure(&self, values: &[f64]) -> f64 {
        self.pressure_from_cycle_sums(&self.cycle_sums(values))
    }

    /// Gibbs weight of each point (flattened order); sums to one.
    pub fn gibbs_weights_from_cycle_sums(&self, cycle_sums: &[f64]) -> Vec<f64> {
        let terms = self.log_terms(cycle_sums);
        let log_z = log_sum_exp(&terms);
        let mut weights = Vec::with_capacity(self.num_points());
        for (o, t) in self.orbits.iter().zip(terms) {
            let per_point = (t - log_z).exp() / o.period as f64;
            weights.extend(std::iter::repeat_n(per_point, o.period));
        }
        weights
    }

    pub fn gibbs_weights(&self, values: &[f64]) -> Vec<f64> {
        self.gibbs_weights_from_cycle_sums(&self.cycle_sums(values))
    }

    /// `S_n psi(x)` for every point.
    pub fn level_sums(&self, values: &[f64]) -> Vec<f64> {
        let n = self.level as f64;
        let sums = self.cycle_sums(values);
        let mut out = Vec::with_capacity(values.len());
        for (o, s) in self.orbits.iter().zip(sums) {
            out.extend(std::iter::repeat_n(n / o.period as f64 * s, o.period));
        }
        out
    }
}

/// `log sum exp(t_i)` with the maximum subtracted, summed in a fixed order.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    max + par::tree_sum(&shifted).ln()
}

/// Weighted sum `sum_i w_i v_i` in a fixed association order.
pub fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    let products: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v).collect();
    par::tree_sum(&products)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub value: f64,
    pub per_level_values: Vec<(usize, f64)>,
    /// Infinite when a single level was used (no extrapolation possible).
    pub extrapolation_error: f64,
}

fn aitken(x0: f64, x1: f64, x2: f64) -> f64 {
    let d1 = x1 - x0;
    let d2 = x2 - x1;
    let denom = d2 - d1;
    let scale = x2.abs().max(1.0);
    if d2.abs() <= 1e-15 * scale || denom.abs() <= 1e-14 * scale || d2.abs() >= d1.abs() {
        return x2;
    }
    x2 - d2 * d2 / denom
}

/// Extrapolate `(n, P_n)` pairs to the limit.
///
/// On consecutive levels the increments `n P_n - (n-1) P_{n-1} =
/// log(Z_n / Z_{n-1})` converge geometrically, while `P_n` itself carries a
/// `1/n` prefactor; the increments are accelerated with up to two rounds of
/// Aitken's delta-squared. Non-consecutive levels fall back to Aitken on
/// `P_n` directly. The error is the spread of the last two extrapolants of
/// the deepest round.
pub fn extrapolate(per_level: &[(usize, f64)]) -> (f64, f64) {
    match per_level.len() {
        0 => return (f64::NAN, f64::INFINITY),
        1 => return (per_level[0].1, f64::INFINITY),
        _ => {}
    }
    let consecutive = per_level.windows(2).all(|w| w[1].0 == w[0].0 + 1);
    let base: Vec<f64> = if consecutive {
        per_level
            .windows(2)
            .map(|w| w[1].0 as f64 * w[1].1 - w[0].0 as f64 * w[0].1)
            .collect()
    } else {
        per_level.iter().map(|&(_, p)| p).collect()
    };
    if base.len() < 3 {
        let last = *base.last().unwrap();
        let previous = if base.len() >= 2 {
            base[base.len() - 2]
        } else {
            per_level.last().unwrap().1
        };
        return (last, (last - previous).abs());
    }
    let mut rows = vec![base];
    while rows.len() < 3 && rows.last().unwrap().len() >= 3 {
        let row = rows.last().unwrap();
        let next: Vec<f64> = row.windows(3).map(|w| aitken(w[0], w[1], w[2])).collect();
        rows.push(next);
    }
    let deepest = rows.last().unwrap();
    let value = *deepest.last().unwrap();
    let error = if deepest.len() >= 2 {
        (value - deepest[deepest.len() - 2]).abs()
    } else {
        (value - rows[rows.len() - 2].last().unwrap()).abs()
    };
    // Acceleration that is less settled than the raw sequence (for instance
    // when an attracting cycle is dropped only at some levels) is discarded
    // in favour of the deepest level.
    let raw = per_level[per_level.len() - 1].1;
    let raw_spread = (raw - per_level[per_level.len() - 2].1).abs();
    if error > raw_spread {
        return (raw, error);
    }
    (value, error)
}

/// Periodic atoms at several levels for one map.
#[derive(Debug, Clone)]
pub struct ThermoSystem {
    f: MarkedPolynomial,
    levels: Vec<PeriodicAtoms>,
}

impl ThermoSystem {
    /// Enumerate cycles at each level of `n_range` (non-empty, increasing).
    pub fn new(f: &MarkedPolynomial, n_range: &[usize]) -> Result<Self> {
        if n_range.is_empty() {
            return Err(Error::InvalidArgument("empty level range".into()));
        }
        if n_range.windows(2).any(|w| w[1] <= w[0]) || n_range[0] == 0 {
            return Err(Error::InvalidArgument("levels must be positive and increasing".into()));
        }
        let levels = n_range
            .iter()
            .map(|&n| PeriodicAtoms::enumerate(f, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            f: f.clone(),
            levels,
        })
    }

    /// Wrap already-enumerated atoms.
    pub fn from_atoms(f: &MarkedPolynomial, levels: Vec<PeriodicAtoms>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("empty level range".into()));
        }
        Ok(Self {
            f: f.clone(),
            levels,
        })
    }

    pub fn polynomial(&self) -> &MarkedPolynomial {
        &self.f
    }

    pub fn levels(&self) -> &[PeriodicAtoms] {
        &self.levels
    }

    /// Atoms of the highest level.
    pub fn top(&self) -> &PeriodicAtoms {
        self.levels.last().unwrap()
    }

    /// Pressure from a per-level cycle-sum rule.
    pub fn pressure_with<G>(&self, cycle_sums: G) -> Result<PressureEstimate>
    where
        G: Fn(&PeriodicAtoms) -> Result<Vec<f64>>,
    {
        let per_level_values = self
            .levels
            .iter()
            .map(|atoms| Ok((atoms.level(), atoms.pressure_from_cycle_sums(&cycle_sums(atoms)?))))
            .collect::<Result<Vec<_>>>()?;
        let (value, extrapolation_error) = extrapolate(&per_level_values);
        Ok(PressureEstimate {
            value,
            per_level_values,
            extrapolation_error,
        })
    }

    pub fn pressure<F>(&self, psi: F) -> Result<PressureEstimate>
    where
        F: Fn(Complex64) -> f64 + Sync + Send,
    {
        self.pressure_with(|atoms| Ok(atoms.cycle_sums(&atoms.sample(&psi)?)))
    }

    /// `P(-theta log|f'|)`, using cycle multipliers directly.
    pub fn pressure_of_log_derivative(&self, theta: f64) -> PressureEstimate {
        self.pressure_with(|atoms| Ok(atoms.log_multipliers().iter().map(|l| -theta * l).collect()))
            .expect("multiplier sums are finite on repelling cycles")
    }

    /// Level-`n` equilibrium state of `psi` at the highest level.
    pub fn equilibrium_measure<F>(&self, psi: F) -> Result<AtomicMeasure>
    where
        F: Fn(Complex64) -> f64 + Sync + Send,
    {
        let atoms = self.top();
        let weights = atoms.gibbs_weights(&atoms.sample(psi)?);
        Ok(AtomicMeasure::from_atoms(atoms, weights))
    }
}

/// `P(psi)` over the levels `n_range`.
pub fn pressure<F>(f: &MarkedPolynomial, psi: F, n_range: &[usize]) -> Result<PressureEstimate>
where
    F: Fn(Complex64) -> f64 + Sync + Send,
{
    ThermoSystem::new(f, n_range)?.pressure(psi)
}

/// Weighted points approximating an equilibrium state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<(Complex64, f64)>,
    pub level: usize,
}

impl AtomicMeasure {
    pub fn from_atoms(atoms: &PeriodicAtoms, weights: Vec<f64>) -> Self {
        Self {
            atoms: atoms.points().zip(weights).collect(),
            level: atoms.level(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|&(_, w)| w).collect()
    }

    pub fn total_mass(&self) -> f64 {
        par::tree_sum(&self.weights())
    }

    /// `sum_x w_x g(x)`.
    pub fn integrate<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(Complex64) -> f64,
    {
        let mut products = Vec::with_capacity(self.atoms.len());
        for &(z, w) in &self.atoms {
            let v = g(z);
            if !v.is_finite() {
                return Err(Error::NonFinitePotential { point: z });
            }
            products.push(w * v);
        }
        Ok(par::tree_sum(&products))
    }
}

/// Gibbs approximant of the equilibrium state of `psi` at level `n`.
pub fn equilibrium_measure<F>(f: &MarkedPolynomial, psi: F, n: usize) -> Result<AtomicMeasure>
where
    F: Fn(Complex64) -> f64 + Sync + Send,
{
    ThermoSystem::new(f, &[n])?.equilibrium_measure(psi)
}

/// `(∫ g dν, ∫ log|f'| dν)`.
pub fn lyapunov_and_integrals<G>(f: &MarkedPolynomial, nu: &AtomicMeasure, g: G) -> Result<(f64, f64)>
where
    G: Fn(Complex64) -> f64,
{
    let integral = nu.integrate(g)?;
    let lyapunov = nu.integrate(|z| f.derivative_at(z).norm().ln())?;
    Ok((integral, lyapunov))
}

/// Default step for second differences: `eps^(1/4)` divided by the sup norm
/// of the direction, so that scaling the direction by a power of two leaves
/// the sampled potentials bit-identical.
pub fn default_second_difference_step(direction_scale: f64) -> f64 {
    let scale = if direction_scale > 0.0 && direction_scale.is_finite() {
        direction_scale
    } else {
        1.0
    };
    f64::EPSILON.powf(0.25) / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// Central second difference of `s -> P_n(phi + s psi_c)`.
    pub value: f64,
    /// Windowed autocovariance sum over the equilibrium atoms.
    pub windowed: f64,
    pub gap: f64,
    /// Size of the last lag kept in the windowed sum.
    pub tail: f64,
    /// `∫ psi dν`, removed before differencing.
    pub mean: f64,
    pub step: f64,
}

/// Allowed disagreement between the two variance estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceTolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for VarianceTolerance {
    fn default() -> Self {
        Self {
            relative: 0.05,
            absolute: 1e-6,
        }
    }
}

/// Dynamical variance of `psi` (per-point values) with respect to the level-`n`
/// equilibrium state of `potential` (per-point values).
pub fn variance_on_atoms(
    atoms: &PeriodicAtoms,
    psi: &[f64],
    potential: &[f64],
    step: Option<f64>,
    tol: VarianceTolerance,
) -> Result<VarianceEstimate> {
    let weights = atoms.gibbs_weights(potential);
    let mean = weighted_sum(&weights, psi);
    let centered: Vec<f64> = psi.iter().map(|v| v - mean).collect();
    let scale = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = step.unwrap_or_else(|| default_second_difference_step(scale));

    let base_sums = atoms.cycle_sums(potential);
    let dir_sums = atoms.cycle_sums(&centered);
    let shifted = |s: f64| -> f64 {
        let sums: Vec<f64> = base_sums.iter().zip(&dir_sums).map(|(b, d)| b + s * d).collect();
        atoms.pressure_from_cycle_sums(&sums)
    };
    let value = (shifted(h) - 2.0 * shifted(0.0) + shifted(-h)) / (h * h);

    // The lag-K term of the windowed sum bounds its truncation error.
    let (windowed, tail) = windowed_autocovariance(atoms, &weights, &centered);
    let gap = (value - windowed).abs();
    if gap > tol.relative * value.abs().max(windowed.abs()) + tol.absolute + tail {
        return Err(Error::EstimatorDisagreement {
            second_difference: value,
            windowed,
        });
    }
    Ok(VarianceEstimate {
        value,
        windowed,
        gap,
        tail,
        mean,
        step: h,
    })
}

/// `c_0 + 2 sum_{k=1}^{K} c_k` with `c_k = sum_x w_x psi(x) psi(f^k x)` and
/// `K = (n - 1) / 2`.
fn windowed_autocovariance(atoms: &PeriodicAtoms, weights: &[f64], centered: &[f64]) -> (f64, f64) {
    let window = (atoms.level() - 1) / 2;
    let per_orbit: Vec<(f64, f64)> = par::map_range(atoms.orbits().len(), |i| {
        let o = &atoms.orbits()[i];
        let p = o.period;
        let start = atoms.offset(i);
        let vals = &centered[start..start + p];
        let w = weights[start];
        let mut acc = 0.0;
        let mut last = 0.0;
        for j in 0..p {
            let mut row = vals[j] * vals[j];
            for k in 1..=window {
                row += 2.0 * vals[j] * vals[(j + k) % p];
            }
            acc += row;
            if window > 0 {
                last += 2.0 * vals[j] * vals[(j + window) % p];
            }
        }
        (w * acc, w * last)
    });
    let sums: Vec<f64> = per_orbit.iter().map(|t| t.0).collect();
    let tails: Vec<f64> = per_orbit.iter().map(|t| t.1).collect();
    (par::tree_sum(&sums), par::tree_sum(&tails).abs())
}

pub fn variance<F, G>(
    f: &MarkedPolynomial,
    psi: F,
    potential: G,
    n: usize,
    step: Option<f64>,
) -> Result<VarianceEstimate>
where
    F: Fn(Complex64) -> f64 + Sync + Send,
    G: Fn(Complex64) -> f64 + Sync + Send,
{
    let atoms = PeriodicAtoms::enumerate(f, n)?;
    let psi = atoms.sample(psi)?;
    let potential = atoms.sample(potential)?;
    variance_on_atoms(&atoms, &psi, &potential, step, VarianceTolerance::default())
}

/// Periodic-orbit coboundary criterion: the largest `|S_n psi| / n` over
/// level-`n` cycles, and whether it is below `tol`.
pub fn coboundary_test<F>(f: &MarkedPolynomial, psi: F, n: usize, tol: f64) -> Result<(bool, f64)>
where
    F: Fn(Complex64) -> f64 + Sync + Send,
{
    let atoms = PeriodicAtoms::enumerate(f, n)?;
    let values = atoms.sample(psi)?;
    let dispersion = coboundary_dispersion(&atoms, &values);
    Ok((dispersion < tol, dispersion))
}

pub fn coboundary_dispersion(atoms: &PeriodicAtoms, values: &[f64]) -> f64 {
    atoms
        .cycle_sums(values)
        .iter()
        .zip(atoms.orbits())
        .map(|(s, o)| (s / o.period as f64).abs())
        .fold(0.0, f64::max)
}

/// McShane–Whitney type extension
/// `psi(q) = max_i (v_i - C |x_i - q|^beta)`.
///
/// Fails when some pair of samples violates the Hoelder bound with constant `c`.
pub fn holder_extend(
    samples: &[(Complex64, f64)],
    beta: f64,
    c: f64,
    queries: &[Complex64],
) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} not in (0, 1]")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let violations = par::map_range(samples.len(), |i| {
        let (a, va) = samples[i];
        samples[i + 1..].iter().find_map(|&(b, vb)| {
            let bound = c * (a - b).norm().powf(beta);
            let diff = (va - vb).abs();
            (diff > bound * (1.0 + 1e-12) + 1e-14).then(|| Error::HolderViolation {
                a,
                b,
                needed: diff / (a - b).norm().powf(beta),
            })
        })
    });
    if let Some(e) = violations.into_iter().flatten().next() {
        return Err(e);
    }
    Ok(par::map(queries, |&q| {
        samples
            .iter()
            .map(|&(x, v)| v - c * (x - q).norm().powf(beta))
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamEstimate {
    /// Log of the leading eigenvalue on the requested grid.
    pub value: f64,
    /// Same quantity on a grid half as fine.
    pub coarse_value: f64,
    /// Largest change over the last two grid halvings.
    pub error: f64,
    pub cells: usize,
    /// Fraction of sampled preimages falling outside the retained cells.
    pub leaked_fraction: f64,
    pub iterations: usize,
}

/// Sparse row entries, preimages sampled, preimages leaked.
type UlamRow = (Vec<(usize, f64)>, usize, usize);

/// Samples per cell side when building the Ulam matrix.
const ULAM_SUBSAMPLES: usize = 3;

/// Pressure as the log of the leading eigenvalue of a cell-to-cell
/// discretisation of the transfer operator `L g(w) = sum_{f(z)=w} e^{psi(z)} g(z)`
/// on the cells within `j_neighborhood` of the Julia set.
pub fn ulam_pressure<F>(
    f: &MarkedPolynomial,
    psi: F,
    grid_size: usize,
    j_neighborhood: f64,
) -> Result<UlamEstimate>
where
    F: Fn(Complex64) -> f64 + Sync + Send,
{
    if grid_size < 8 {
        return Err(Error::InvalidArgument("grid_size must be at least 8".into()));
    }
    let samples = orbits::julia_samples(f, 1 << 14)?;
    let fine = ulam_on_grid(f, &psi, &samples, grid_size, j_neighborhood)?;
    let coarse = ulam_on_grid(f, &psi, &samples, grid_size / 2, j_neighborhood)?;
    let mut error = (fine.0 - coarse.0).abs();
    // Cell geometry makes the refinement sequence noisy rather than
    // monotone, so the previous refinement step counts too.
    if grid_size / 4 >= 8 {
        let coarsest = ulam_on_grid(f, &psi, &samples, grid_size / 4, j_neighborhood)?;
        error = error.max((coarse.0 - coarsest.0).abs());
    }
    Ok(UlamEstimate {
        value: fine.0,
        coarse_value: coarse.0,
        error,
        cells: fine.1,
        leaked_fraction: fine.2,
        iterations: fine.3,
    })
}

fn ulam_on_grid<F>(
    f: &MarkedPolynomial,
    psi: &F,
    samples: &[Complex64],
    grid_size: usize,
    j_neighborhood: f64,
) -> Result<(f64, usize, f64, usize)>
where
    F: Fn(Complex64) -> f64 + Sync + Send,
{
    let margin = 2.0 * j_neighborhood;
    let (mut lo_re, mut hi_re, mut lo_im, mut hi_im) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in samples {
        lo_re = lo_re.min(z.re);
        hi_re = hi_re.max(z.re);
        lo_im = lo_im.min(z.im);
        hi_im = hi_im.max(z.im);
    }
    lo_re -= margin;
    lo_im -= margin;
    hi_re += margin;
    hi_im += margin;
    let h = (hi_re - lo_re).max(hi_im - lo_im) / grid_size as f64;
    let nx = ((hi_re - lo_re) / h).ceil() as usize + 1;
    let ny = ((hi_im - lo_im) / h).ceil() as usize + 1;

    let cell_of = |z: Complex64| -> Option<usize> {
        let i = ((z.re - lo_re) / h).floor();
        let j = ((z.im - lo_im) / h).floor();
        if i < 0.0 || j < 0.0 || i >= nx as f64 || j >= ny as f64 {
            return None;
        }
        Some(j as usize * nx + i as usize)
    };
    let center = |idx: usize| -> Complex64 {
        let (i, j) = (idx % nx, idx / nx);
        Complex64::new(lo_re + (i as f64 + 0.5) * h, lo_im + (j as f64 + 0.5) * h)
    };

    // Cells whose centre lies within j_neighborhood of a sample.
    let mut kept = vec![usize::MAX; nx * ny];
    let reach = (j_neighborhood / h).ceil() as i64 + 1;
    for &z in samples {
        let Some(idx) = cell_of(z) else { continue };
        let (ci, cj) = ((idx % nx) as i64, (idx / nx) as i64);
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                    continue;
                }
                let cell = j as usize * nx + i as usize;
                if kept[cell] == usize::MAX && (center(cell) - z).norm() <= j_neighborhood {
                    kept[cell] = 0;
                }
            }
        }
    }
    let mut cells = Vec::new();
    for (idx, k) in kept.iter_mut().enumerate() {
        if *k != usize::MAX {
            *k = cells.len();
            cells.push(idx);
        }
    }
    if cells.is_empty() {
        return Err(Error::GridMissesJulia);
    }

    // Row r (target cell) collects e^{psi(z)} / k^2 for preimages z of sample
    // points of that cell, in the column of the cell containing z.
    let k = ULAM_SUBSAMPLES;
    let rows = par::try_map(&cells, |&idx| -> Result<UlamRow> {
        let corner = center(idx) - Complex64::new(0.5 * h, 0.5 * h);
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let (mut total, mut leaked) = (0usize, 0usize);
        for a in 0..k {
            for b in 0..k {
                let w = corner
                    + Complex64::new((a as f64 + 0.5) * h / k as f64, (b as f64 + 0.5) * h / k as f64);
                for z in f.preimages(w)? {
                    total += 1;
                    let col = cell_of(z).map(|c| kept[c]).filter(|&c| c != usize::MAX);
                    match col {
                        Some(col) => {
                            let v = psi(z);
                            if !v.is_finite() {
                                return Err(Error::NonFinitePotential { point: z });
                            }
                            entries.push((col, v.exp() / (k * k) as f64));
                        }
                        None => leaked += 1,
                    }
                }
            }
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        Ok((merged, total, leaked))
    })?;
    let total: usize = rows.iter().map(|r| r.1).sum();
    let leaked: usize = rows.iter().map(|r| r.2).sum();
    if rows.iter().all(|r| r.0.is_empty()) {
        return Err(Error::GridMissesJulia);
    }
    let matrix: Vec<Vec<(usize, f64)>> = rows.into_iter().map(|r| r.0).collect();

    let (eigenvalue, iterations) = power_iteration(&matrix)?;
    Ok((eigenvalue.ln(), cells.len(), leaked as f64 / total.max(1) as f64, iterations))
}

/// Leading eigenvalue of a non-negative sparse matrix given by rows.
fn power_iteration(rows: &[Vec<(usize, f64)>]) -> Result<(f64, usize)> {
    let n = rows.len();
    let mut g = vec![1.0 / n as f64; n];
    let mut previous = f64::NAN;
    for it in 1..=50_000 {
        let next: Vec<f64> = par::map(rows, |row| row.iter().map(|&(c, v)| v * g[c]).sum::<f64>());
        let norm = par::tree_sum(&next);
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::NoConvergence("power iteration collapsed".into()));
        }
        // Average with the previous iterate to damp periodic components.
        g = next.iter().zip(&g).map(|(a, b)| 0.5 * (a / norm + b)).collect();
        let lambda = norm;
        if (lambda - previous).abs() <= 1e-13 * lambda {
            return Ok((lambda, it));
        }
        previous = lambda;
    }
    Err(Error::NoConvergence("power iteration did not settle".into()))
}
