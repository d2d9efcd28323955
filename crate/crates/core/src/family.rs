//! Parameter families, parabolic relations `Per_n(eta)`, and certification
//! of hyperbolicity through critical orbits.
//!
//! A family maps a real vector of length `2 l` (real and imaginary parts of
//! `l` complex parameters) to a monic-centred polynomial of fixed degree.
//! Fixing that representative removes the affine-conjugacy gauge exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fate::{self, CriticalFate, Fate};
use crate::orbits;
use crate::poly::MarkedPolynomial;
use crate::roots;

pub trait ParameterFamily: Send + Sync {
    /// Number of complex parameters `l`.
    fn complex_dimension(&self) -> usize;

    fn evaluate(&self, params: &[f64]) -> Result<MarkedPolynomial>;

    /// Declared `(n, eta_root)` relations that hold at every parameter.
    fn parabolic_relations(&self) -> Vec<(usize, Complex64)> {
        Vec::new()
    }

    fn description(&self) -> String;

    fn real_dimension(&self) -> usize {
        2 * self.complex_dimension()
    }
}

fn check_len(params: &[f64], expected: usize) -> Result<()> {
    if params.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "expected {expected} real parameters, got {}",
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("non-finite parameter".into()));
    }
    Ok(())
}

/// Complex parameters from interleaved real and imaginary parts.
pub fn complex_params(params: &[f64]) -> Vec<Complex64> {
    params.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// Conjugate `f` by an affine map to the form `z^D + 0 z^(D-1) + ...`.
///
/// With `z = alpha w + beta`, `alpha = a_D^(-1/(D-1))` on the principal
/// branch and `beta` the centre of `f`, the result is `(f(alpha w + beta) - beta) / alpha`.
pub fn monic_centered(coefficients: &[Complex64]) -> Result<Vec<Complex64>> {
    let d = coefficients.len().checked_sub(1).filter(|&d| d >= 2).ok_or_else(|| {
        Error::InvalidPolynomial("need degree at least 2".into())
    })?;
    let lead = coefficients[d];
    if lead.norm() == 0.0 || !lead.re.is_finite() || !lead.im.is_finite() {
        return Err(Error::InvalidPolynomial("degenerate leading coefficient".into()));
    }
    let alpha = lead.powf(-1.0 / (d as f64 - 1.0));
    let beta = -coefficients[d - 1] / (lead * d as f64);
    // Taylor shift: coefficients of f(beta + u) in u.
    let mut shifted = coefficients.to_vec();
    for i in 0..d {
        for j in (i..d).rev() {
            let next = shifted[j + 1];
            shifted[j] += beta * next;
        }
    }
    shifted[0] -= beta;
    // Substitute u = alpha w and divide by alpha.
    let mut scale = Complex64::new(1.0, 0.0) / alpha;
    let mut out = Vec::with_capacity(d + 1);
    for a in shifted {
        out.push(a * scale);
        scale *= alpha;
    }
    out[d] = Complex64::new(1.0, 0.0);
    out[d - 1] = Complex64::new(0.0, 0.0);
    Ok(out)
}

/// `z^2 + c` with parameters `[Re c, Im c]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadraticFamily;

impl ParameterFamily for QuadraticFamily {
    fn complex_dimension(&self) -> usize {
        1
    }

    fn evaluate(&self, params: &[f64]) -> Result<MarkedPolynomial> {
        check_len(params, 2)?;
        Ok(MarkedPolynomial::quadratic(Complex64::new(params[0], params[1])))
    }

    fn description(&self) -> String {
        "quadratic family z^2 + c".into()
    }
}

/// `z + z^2 + a z^3` with parameters `[Re a, Im a]`, normalised to its
/// monic-centred representative. The fixed point `0` has multiplier one for
/// every `a`, so the slice lies in `Per_1(1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CubicParabolicFamily;

impl CubicParabolicFamily {
    /// Coefficients before normalisation.
    pub fn raw_coefficients(a: Complex64) -> Vec<Complex64> {
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            a,
        ]
    }

    /// Image of the parabolic fixed point `0` in normalised coordinates.
    pub fn parabolic_point(a: Complex64) -> Complex64 {
        let alpha = a.powf(-0.5);
        let beta = -1.0 / (3.0 * a);
        -beta / alpha
    }
}

impl ParameterFamily for CubicParabolicFamily {
    fn complex_dimension(&self) -> usize {
        1
    }

    fn evaluate(&self, params: &[f64]) -> Result<MarkedPolynomial> {
        check_len(params, 2)?;
        let a = Complex64::new(params[0], params[1]);
        if a.norm() == 0.0 {
            return Err(Error::InvalidArgument("cubic slice needs a != 0".into()));
        }
        MarkedPolynomial::new(monic_centered(&Self::raw_coefficients(a))?)
    }

    fn parabolic_relations(&self) -> Vec<(usize, Complex64)> {
        vec![(1, Complex64::new(1.0, 0.0))]
    }

    fn description(&self) -> String {
        "cubic parabolic slice z + z^2 + a z^3".into()
    }
}

/// `base + sum_k t_k directions[k]` on the coefficient vector, normalised to
/// monic-centred form. With no directions the family is frozen at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSlice {
    pub base: Vec<Complex64>,
    pub directions: Vec<Vec<Complex64>>,
    #[serde(default)]
    pub relations: Vec<(usize, Complex64)>,
}

impl AffineSlice {
    pub fn new(base: Vec<Complex64>, directions: Vec<Vec<Complex64>>) -> Result<Self> {
        if base.len() < 3 {
            return Err(Error::InvalidPolynomial("need degree at least 2".into()));
        }
        if directions.iter().any(|d| d.len() != base.len()) {
            return Err(Error::InvalidArgument("direction length differs from base".into()));
        }
        Ok(Self {
            base,
            directions,
            relations: Vec::new(),
        })
    }

    /// A family with a single member.
    pub fn frozen(base: Vec<Complex64>) -> Result<Self> {
        Self::new(base, Vec::new())
    }

    pub fn with_relations(mut self, relations: Vec<(usize, Complex64)>) -> Self {
        self.relations = relations;
        self
    }
}

impl ParameterFamily for AffineSlice {
    fn complex_dimension(&self) -> usize {
        self.directions.len()
    }

    fn evaluate(&self, params: &[f64]) -> Result<MarkedPolynomial> {
        check_len(params, self.real_dimension())?;
        let mut coeffs = self.base.clone();
        for (t, dir) in complex_params(params).into_iter().zip(&self.directions) {
            for (c, d) in coeffs.iter_mut().zip(dir) {
                *c += t * d;
            }
        }
        MarkedPolynomial::new(monic_centered(&coeffs)?)
    }

    fn parabolic_relations(&self) -> Vec<(usize, Complex64)> {
        self.relations.clone()
    }

    fn description(&self) -> String {
        format!(
            "affine coefficient slice of degree {} with {} complex parameter(s)",
            self.base.len() - 1,
            self.directions.len()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSolution {
    pub parameter: Vec<f64>,
    pub point: Complex64,
    /// `|f^n(x) - x|`.
    pub periodic_residual: f64,
    /// `|(f^n)'(x) - eta_root|`.
    pub multiplier_residual: f64,
    pub iterations: usize,
}

fn relation_residual(
    family: &dyn ParameterFamily,
    x: Complex64,
    p: Complex64,
    n: usize,
    eta: Complex64,
) -> Result<(Complex64, Complex64, Complex64, Complex64)> {
    let f = family.evaluate(&[p.re, p.im])?;
    let (w, d, dd) = f.iterate_second_order(x, n);
    Ok((w - x, d - eta, d - 1.0, dd))
}

/// Solve `f_p^n(x) = x`, `(f_p^n)'(x) = eta_root` for `(x, p)` by Newton's
/// method in two complex unknowns, from `seed = (x, p)`. The family must have
/// one complex parameter; its derivative in `p` is taken by central
/// differences, which is exact to the order needed for a convergent
/// quasi-Newton iteration because the residual itself is evaluated exactly.
pub fn solve_per_relation(
    family: &dyn ParameterFamily,
    n: usize,
    eta_root: Complex64,
    seed: (Complex64, Complex64),
) -> Result<PerSolution> {
    if family.complex_dimension() != 1 {
        return Err(Error::InvalidArgument(
            "relation solving needs exactly one complex parameter".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    let (mut x, mut p) = seed;
    let tol = 1e-12;
    for it in 0..100 {
        let (r1, r2, d1x, d2x) = relation_residual(family, x, p, n, eta_root)?;
        let scale = x.norm().max(1.0);
        if r1.norm() < tol * scale && r2.norm() < tol * eta_root.norm().max(1.0) {
            return Ok(PerSolution {
                parameter: vec![p.re, p.im],
                point: x,
                periodic_residual: r1.norm(),
                multiplier_residual: r2.norm(),
                iterations: it,
            });
        }
        let h = 1e-6 * p.norm().max(1.0);
        let plus = relation_residual(family, x, p + h, n, eta_root)?;
        let minus = relation_residual(family, x, p - h, n, eta_root)?;
        let d1p = (plus.0 - minus.0) / (2.0 * h);
        let d2p = (plus.1 - minus.1) / (2.0 * h);
        let det = d1x * d2p - d1p * d2x;
        let jac_scale = (d1x.norm() + d1p.norm()) * (d2x.norm() + d2p.norm());
        if det.norm() <= 1e-13 * jac_scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularJacobian);
        }
        let dx = (r1 * d2p - r2 * d1p) / det;
        let dp = (d1x * r2 - d2x * r1) / det;
        x -= dx;
        p -= dp;
        if !(x.re.is_finite() && x.im.is_finite() && p.re.is_finite() && p.im.is_finite()) {
            return Err(Error::NoConvergence("relation Newton diverged".into()));
        }
    }
    Err(Error::NoConvergence("relation Newton did not settle".into()))
}

/// Whether `f` has a point of period dividing `n` with multiplier `eta_root`,
/// to `tol`. Roots of `f^n(z) - z` seed Newton on `(f^n)'(z) - eta_root`,
/// which stays well conditioned at multiple roots of the former.
pub fn verify_relation(f: &MarkedPolynomial, n: usize, eta_root: Complex64, tol: f64) -> Result<(bool, f64)> {
    let total = f.degree().checked_pow(n as u32).filter(|&t| t <= 4096).ok_or(Error::BudgetExceeded {
        required: usize::MAX,
        budget: 4096,
    })?;
    // Coefficients of f^n(z) - z by repeated composition.
    let mut comp = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    for _ in 0..n {
        comp = compose(f.coefficients(), &comp);
    }
    debug_assert_eq!(comp.len(), total + 1);
    comp[1] -= 1.0;
    let candidates = roots::aberth(&comp, None, 1e-12, 2000)?;
    let mut best = f64::INFINITY;
    for z0 in candidates {
        let mut z = z0;
        for _ in 0..50 {
            let (_, d, dd) = f.iterate_second_order(z, n);
            if dd.norm() == 0.0 {
                break;
            }
            let step = (d - eta_root) / dd;
            z -= step;
            if step.norm() < 1e-15 * z.norm().max(1.0) {
                break;
            }
        }
        let (w, d) = f.iterate_with_derivative(z, n);
        let residual = (w - z).norm().max((d - eta_root).norm());
        if residual.is_finite() {
            best = best.min(residual);
        }
    }
    Ok((best < tol, best))
}

/// Coefficients of `f(g(z))`.
fn compose(f: &[Complex64], g: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0)];
    for &a in f.iter().rev() {
        out = multiply(&out, g);
        out[0] += a;
    }
    while out.len() > 1 && out.last().unwrap().norm() == 0.0 {
        out.pop();
    }
    out
}

fn multiply(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub fates: Vec<CriticalFate>,
    /// Every critical point not committed to a parabolic cycle is attracted
    /// to an attracting cycle in `C`, and none escapes.
    pub hyperbolic: bool,
}

pub fn classify(f: &MarkedPolynomial, budget: usize) -> Classification {
    let fates = fate::critical_fates(f, budget);
    let hyperbolic = fates
        .iter()
        .all(|c| matches!(c.fate, Fate::AttractingCycleInC | Fate::ParabolicCycle));
    Classification { fates, hyperbolic }
}

pub fn classify_lambda_hyperbolic(
    family: &dyn ParameterFamily,
    lambda: &[f64],
    budget: usize,
) -> Result<Classification> {
    Ok(classify(&family.evaluate(lambda)?, budget))
}

/// Average over repelling level-`n` cycles of `log|multiplier| / period`,
/// each cycle counted once. Tends to `log D` at parameters where the
/// critical orbits stay bounded.
pub fn max_entropy_lyapunov(f: &MarkedPolynomial, n: usize) -> Result<f64> {
    let orbits: Vec<_> = orbits::periodic_points(f, n)?
        .into_iter()
        .filter(|o| o.is_repelling())
        .collect();
    if orbits.is_empty() {
        return Err(Error::EmptyOrbitSet { level: n });
    }
    let per_cycle: Vec<f64> = orbits
        .iter()
        .map(|o| o.log_multiplier() / o.period as f64)
        .collect();
    Ok(crate::par::tree_sum(&per_cycle) / per_cycle.len() as f64)
}
