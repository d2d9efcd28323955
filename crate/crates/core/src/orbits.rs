//! Enumeration of periodic cycles on the Julia set.
//!
//! Cycles are indexed by itineraries over `D` symbols, where the symbol of a
//! point is the angular sector of `z - center`, with sector boundaries placed
//! at the preimage directions of a radial cut through the critical value. For every Lyndon word whose length divides `n` the
//! composition of the matching inverse branches is iterated to its fixed
//! point and then polished with Newton on `f^p(z) - z`. A candidate is kept
//! only when its computed itinerary reproduces the word.
//!
//! Where the sector coding is not a Markov partition for `J(f)` some cycles
//! are missed; they are recovered by Newton seeded from the backward tree of
//! a few base points on `J`. The number of period-`n` points on `J` is
//! `D^n` minus the points of attracting cycles, which the critical orbits
//! reveal, so completeness is checked whenever no critical orbit is
//! parabolic or undecided.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fate::{self, Fate};
use crate::par;
use crate::poly::MarkedPolynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Repelling,
    Attracting,
    Parabolic,
    Indifferent,
}

/// One periodic cycle, stored from the point whose itinerary rotation is
/// lexicographically smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: usize,
    pub points: Vec<Complex64>,
    pub itinerary: Vec<u8>,
    /// `(f^period)'` at any point of the cycle.
    pub multiplier: Complex64,
    pub stability: Stability,
}

impl PeriodicOrbit {
    pub fn is_repelling(&self) -> bool {
        self.stability == Stability::Repelling
    }

    /// `log |multiplier|`.
    pub fn log_multiplier(&self) -> f64 {
        self.multiplier.norm().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationConfig {
    /// Point sets closer than this are the same cycle.
    pub dedup_tol: f64,
    pub max_contraction_rounds: usize,
    /// Depth of the backward tree of base points used by the rescue pass.
    pub rescue_depth: usize,
    /// Largest `D^n` accepted.
    pub max_points: usize,
    /// Critical-orbit iterations used to count attracting cycles.
    pub fate_budget: usize,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        Self {
            dedup_tol: 1e-8,
            max_contraction_rounds: 300,
            rescue_depth: 3,
            max_points: 1 << 20,
            fate_budget: 20_000,
        }
    }
}

/// Enumeration output with bookkeeping.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub level: usize,
    pub orbits: Vec<PeriodicOrbit>,
    /// `D^n` minus points of attracting cycles, when certified.
    pub expected_points: Option<usize>,
    /// Points of repelling cycles found.
    pub found_points: usize,
    /// Cycles recovered by the backward-tree pass.
    pub rescued: usize,
    /// Words whose branch contraction did not settle.
    pub unconverged: Vec<Vec<u8>>,
    /// Largest Newton displacement after contraction, relative to point size.
    pub max_polish_shift: f64,
}

/// Repelling (and any parabolic or indifferent) cycles whose period divides
/// `n`, one representative each, sorted by period then itinerary.
pub fn periodic_points(f: &MarkedPolynomial, n: usize) -> Result<Vec<PeriodicOrbit>> {
    Ok(enumerate(f, n, &EnumerationConfig::default())?.orbits)
}

/// Angle of the first sector boundary.
///
/// Sectors are the preimages, to leading order, of the plane cut along the
/// ray from the critical value `f(center)` pointing away from the centre.
/// When the critical value is the centre the cut direction is arbitrary, and
/// a generic one (1 radian) keeps periodic points off the boundaries.
pub fn sector_offset(f: &MarkedPolynomial) -> f64 {
    let center = f.center();
    let v = f.eval(center) - center;
    let theta = if v.norm() > 1e-12 * f.scale() { v.arg() } else { 1.0 };
    let lead = f.coefficients()[f.degree()];
    (theta - lead.arg()) / f.degree() as f64
}

/// Symbol of `z`: the index of the angular sector of `z - center`, counted
/// from [`sector_offset`].
pub fn symbol(f: &MarkedPolynomial, z: Complex64) -> u8 {
    symbol_with_offset(f, z, sector_offset(f))
}

fn symbol_with_offset(f: &MarkedPolynomial, z: Complex64, offset: f64) -> u8 {
    let d = f.degree();
    let w = z - f.center();
    let turns = (w.arg() - offset) / std::f64::consts::TAU * d as f64;
    (turns.floor() as i64).rem_euclid(d as i64) as u8
}

/// Lyndon words over `alphabet` symbols whose length divides `n`, in
/// lexicographic order (Duval's algorithm).
pub fn lyndon_words(alphabet: usize, n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    if n == 0 || alphabet == 0 {
        return out;
    }
    let k = alphabet as u8;
    let mut w: Vec<u8> = vec![0];
    loop {
        if n.is_multiple_of(w.len()) {
            out.push(w.clone());
        }
        let m = w.len();
        while w.len() < n {
            let next = w[w.len() - m];
            w.push(next);
        }
        while let Some(&last) = w.last() {
            if last == k - 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    out
}

/// Lyndon words `u` and their powers `u^m` with length dividing `n`. A cycle
/// may visit the same sequence of sectors more than once per period when the
/// sector cut crosses `J`, so its itinerary is a proper power.
fn cycle_words(alphabet: usize, n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for u in lyndon_words(alphabet, n) {
        for m in 1..=n / u.len() {
            if n.is_multiple_of(m * u.len()) {
                out.push(u.repeat(m));
            }
        }
    }
    out
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

fn classify_multiplier(m: Complex64) -> Stability {
    let r = m.norm();
    if r > 1.0 + 1e-9 {
        Stability::Repelling
    } else if r < 1.0 - 1e-9 {
        Stability::Attracting
    } else if fate::root_of_unity_distance(m).0 < fate::PARABOLIC_TOLERANCE {
        Stability::Parabolic
    } else {
        Stability::Indifferent
    }
}

/// Inverse branch with symbol `s` evaluated at `w`.
fn branch(f: &MarkedPolynomial, s: u8, w: Complex64, offset: f64) -> Complex64 {
    let pre = match f.preimages(w) {
        Ok(p) => p,
        Err(_) => return Complex64::new(f64::NAN, f64::NAN),
    };
    if let Some(&z) = pre.iter().find(|&&z| symbol_with_offset(f, z, offset) == s) {
        return z;
    }
    let d = f.degree() as f64;
    let target = offset + std::f64::consts::TAU * (s as f64 + 0.5) / d;
    let center = f.center();
    *pre.iter()
        .min_by(|a, b| {
            let da = angular_distance((**a - center).arg(), target);
            let db = angular_distance((**b - center).arg(), target);
            da.total_cmp(&db)
        })
        .unwrap()
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Newton on `f^p(z) - z`; returns the root and the total displacement.
fn newton_periodic(f: &MarkedPolynomial, z0: Complex64, p: usize, max_iter: usize) -> Option<(Complex64, f64)> {
    let radius = f.escape_radius();
    let mut z = z0;
    for _ in 0..max_iter {
        let (w, d) = f.iterate_with_derivative(z, p);
        let denom = d - 1.0;
        if denom.norm() == 0.0 || !w.re.is_finite() || !w.im.is_finite() {
            return None;
        }
        let step = (w - z) / denom;
        z -= step;
        if !z.re.is_finite() || !z.im.is_finite() || z.norm() > radius {
            return None;
        }
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
            return Some((z, (z - z0).norm()));
        }
    }
    let (w, d) = f.iterate_with_derivative(z, p);
    let ok = (w - z).norm() <= 1e-10 * z.norm().max(1.0) * d.norm().max(1.0);
    ok.then(|| (z, (z - z0).norm()))
}

/// Build a cycle starting at `x0` with prime period `p`, rotated to canonical
/// form.
fn build_orbit(f: &MarkedPolynomial, x0: Complex64, p: usize) -> PeriodicOrbit {
    let mut points = Vec::with_capacity(p);
    let mut multiplier = Complex64::new(1.0, 0.0);
    let mut z = x0;
    for _ in 0..p {
        points.push(z);
        let (v, d) = f.evaluate_with_derivative(z);
        multiplier *= d;
        z = v;
    }
    let offset = sector_offset(f);
    let itinerary: Vec<u8> = points.iter().map(|&z| symbol_with_offset(f, z, offset)).collect();
    let shift = canonical_shift(&itinerary, &points);
    points.rotate_left(shift);
    let mut itinerary = itinerary;
    itinerary.rotate_left(shift);
    PeriodicOrbit {
        period: p,
        points,
        itinerary,
        multiplier,
        stability: classify_multiplier(multiplier),
    }
}

/// Rotation giving the lexicographically least itinerary; ties broken by the
/// starting point.
fn canonical_shift(itinerary: &[u8], points: &[Complex64]) -> usize {
    let p = itinerary.len();
    (0..p)
        .min_by(|&a, &b| {
            let ra = itinerary[a..].iter().chain(&itinerary[..a]);
            let rb = itinerary[b..].iter().chain(&itinerary[..b]);
            ra.cmp(rb)
                .then(points[a].re.total_cmp(&points[b].re))
                .then(points[a].im.total_cmp(&points[b].im))
        })
        .unwrap_or(0)
}

/// Smallest divisor `d` of `n` with `f^d(x) = x` to tolerance.
fn prime_period(f: &MarkedPolynomial, x: Complex64, n: usize, tol: f64) -> Option<usize> {
    divisors(n).into_iter().find(|&d| {
        let (w, _) = f.iterate_with_derivative(x, d);
        (w - x).norm() <= tol * x.norm().max(1.0)
    })
}

struct PointIndex {
    cell: f64,
    map: HashMap<(i64, i64), Vec<(usize, Complex64)>>,
}

impl PointIndex {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            map: HashMap::new(),
        }
    }

    fn key(&self, z: Complex64) -> (i64, i64) {
        ((z.re / self.cell).floor() as i64, (z.im / self.cell).floor() as i64)
    }

    fn find(&self, z: Complex64, tol: f64) -> Option<usize> {
        let (kx, ky) = self.key(z);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.map.get(&(kx + dx, ky + dy)) {
                    if let Some(&(idx, _)) = bucket.iter().find(|(_, w)| (w - z).norm() <= tol) {
                        return Some(idx);
                    }
                }
            }
        }
        None
    }

    fn insert_orbit(&mut self, idx: usize, orbit: &PeriodicOrbit) {
        for &z in &orbit.points {
            let key = self.key(z);
            self.map.entry(key).or_default().push((idx, z));
        }
    }
}

/// Points of attracting cycles with period dividing `n`, or `None` when some
/// critical orbit is parabolic or undecided.
fn attracting_points(f: &MarkedPolynomial, n: usize, budget: usize) -> Option<usize> {
    let fates = fate::critical_fates(f, budget);
    let mut cycles: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for fate in &fates {
        match fate.fate {
            Fate::Escaping => {}
            Fate::AttractingCycleInC => {
                let data = fate.cycle_data?;
                let mut pts = Vec::with_capacity(data.period);
                let mut z = data.point;
                for _ in 0..data.period {
                    pts.push(z);
                    z = f.eval(z);
                }
                let known = cycles.iter().any(|(_, other)| {
                    other.iter().any(|w| (w - data.point).norm() < 1e-6)
                });
                if !known {
                    cycles.push((data.period, pts));
                }
            }
            Fate::ParabolicCycle | Fate::Undecided => return None,
        }
    }
    Some(
        cycles
            .iter()
            .filter(|(p, _)| n.is_multiple_of(*p))
            .map(|(p, _)| p)
            .sum(),
    )
}

/// A repelling fixed point of largest multiplier modulus, used to seed the
/// contraction and the backward tree.
fn base_point(f: &MarkedPolynomial) -> Result<Complex64> {
    let mut shifted = f.coefficients().to_vec();
    shifted[1] -= 1.0;
    let fixed = crate::roots::aberth(&shifted, None, 1e-14, 500)?;
    fixed
        .into_iter()
        .max_by(|a, b| f.derivative_at(*a).norm().total_cmp(&f.derivative_at(*b).norm()))
        .ok_or_else(|| Error::InvalidArgument("no fixed points".into()))
}

/// Full enumeration with diagnostics.
pub fn enumerate(f: &MarkedPolynomial, n: usize, cfg: &EnumerationConfig) -> Result<Enumeration> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    let d = f.degree();
    let total = (d as f64).powi(n as i32);
    if total > cfg.max_points as f64 {
        return Err(Error::BudgetExceeded {
            required: total as usize,
            budget: cfg.max_points,
        });
    }
    let total = total as usize;
    let start = base_point(f)?;
    let words = cycle_words(d, n);

    // Phase 1: itinerary-indexed branch contraction, then Newton polish.
    let candidates = par::map(&words, |word| contract_word(f, word, start, cfg));

    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    let mut index = PointIndex::new(1e-6);
    let mut unconverged = Vec::new();
    let mut max_polish_shift: f64 = 0.0;
    for (word, candidate) in words.iter().zip(candidates) {
        match candidate {
            Some((orbit, shift)) => {
                if index.find(orbit.points[0], cfg.dedup_tol).is_none() {
                    max_polish_shift = max_polish_shift.max(shift);
                    index.insert_orbit(orbits.len(), &orbit);
                    orbits.push(orbit);
                }
            }
            None => unconverged.push(word.clone()),
        }
    }

    let count = |orbits: &[PeriodicOrbit]| -> usize {
        orbits.iter().filter(|o| o.is_repelling()).map(|o| o.period).sum()
    };
    let expected = attracting_points(f, n, cfg.fate_budget).map(|a| total.saturating_sub(a));

    // Phase 2: backward-tree seeded Newton for anything the coding missed.
    let mut rescued = 0;
    let needs_rescue = match expected {
        Some(e) => count(&orbits) < e,
        None => true,
    };
    if needs_rescue {
        rescued = rescue(f, n, start, cfg, &mut orbits, &mut index)?;
    }

    let found = count(&orbits);
    if let Some(e) = expected {
        if found < e {
            return Err(Error::IncompleteEnumeration {
                level: n,
                found,
                expected: e,
            });
        }
    }

    orbits.retain(|o| o.stability != Stability::Attracting);
    orbits.sort_by(|a, b| {
        a.period
            .cmp(&b.period)
            .then_with(|| a.itinerary.cmp(&b.itinerary))
            .then(a.points[0].re.total_cmp(&b.points[0].re))
            .then(a.points[0].im.total_cmp(&b.points[0].im))
    });
    Ok(Enumeration {
        level: n,
        orbits,
        expected_points: expected,
        found_points: found,
        rescued,
        unconverged,
        max_polish_shift,
    })
}

fn contract_word(
    f: &MarkedPolynomial,
    word: &[u8],
    start: Complex64,
    cfg: &EnumerationConfig,
) -> Option<(PeriodicOrbit, f64)> {
    let p = word.len();
    let offset = sector_offset(f);
    let mut x = start;
    let mut settled = false;
    for _ in 0..cfg.max_contraction_rounds {
        let previous = x;
        for &s in word.iter().rev() {
            x = branch(f, s, x, offset);
        }
        if !x.re.is_finite() || !x.im.is_finite() {
            return None;
        }
        if (x - previous).norm() <= 1e-13 * x.norm().max(1.0) {
            settled = true;
            break;
        }
    }
    let (polished, shift) = newton_periodic(f, x, p, 30)?;
    if !settled && shift > 1e-6 * x.norm().max(1.0) {
        return None;
    }
    if prime_period(f, polished, p, cfg.dedup_tol)? != p {
        return None;
    }
    let orbit = build_orbit(f, polished, p);
    (orbit.itinerary == word).then(|| (orbit, shift / polished.norm().max(1.0)))
}

fn rescue(
    f: &MarkedPolynomial,
    n: usize,
    start: Complex64,
    cfg: &EnumerationConfig,
    orbits: &mut Vec<PeriodicOrbit>,
    index: &mut PointIndex,
) -> Result<usize> {
    let d = f.degree();
    // Base points: the backward tree of `start` up to `rescue_depth`.
    let mut bases = vec![start];
    let mut layer = vec![start];
    for _ in 0..cfg.rescue_depth {
        let next: Vec<Complex64> = par::try_map(&layer, |&w| f.preimages(w))?
            .into_iter()
            .flatten()
            .collect();
        bases.extend_from_slice(&next);
        layer = next;
    }
    let seeds_needed = bases.len() * d.pow(n as u32);
    let budget = cfg.max_points * 16;
    if seeds_needed > budget {
        return Err(Error::BudgetExceeded {
            required: seeds_needed,
            budget,
        });
    }

    let mut added = 0;
    for base in bases {
        let mut leaves = vec![base];
        for _ in 0..n {
            leaves = par::try_map(&leaves, |&w| f.preimages(w))?
                .into_iter()
                .flatten()
                .collect();
        }
        let roots = par::map(&leaves, |&y| newton_periodic(f, y, n, 40).map(|(z, _)| z));
        for z in roots.into_iter().flatten() {
            if index.find(z, cfg.dedup_tol).is_some() {
                continue;
            }
            let Some(p) = prime_period(f, z, n, cfg.dedup_tol) else {
                continue;
            };
            let Some((z, _)) = newton_periodic(f, z, p, 10) else {
                continue;
            };
            if index.find(z, cfg.dedup_tol).is_some() {
                continue;
            }
            let orbit = build_orbit(f, z, p);
            index.insert_orbit(orbits.len(), &orbit);
            orbits.push(orbit);
            added += 1;
        }
    }
    Ok(added)
}

/// At least `min_points` points of `J(f)`: the backward tree of a repelling
/// fixed point, cut at the first full layer that is large enough.
pub fn julia_samples(f: &MarkedPolynomial, min_points: usize) -> Result<Vec<Complex64>> {
    let mut layer = vec![base_point(f)?];
    let mut all = layer.clone();
    while all.len() < min_points {
        layer = par::try_map(&layer, |&w| f.preimages(w))?
            .into_iter()
            .flatten()
            .collect();
        all.extend_from_slice(&layer);
    }
    Ok(all)
}

/// Birkhoff sum of `psi` over one period of the cycle and its average per
/// point.
pub fn orbit_statistics<F>(orbit: &PeriodicOrbit, psi: F) -> Result<(f64, f64)>
where
    F: Fn(Complex64) -> f64,
{
    let mut sum = 0.0;
    for &z in &orbit.points {
        let v = psi(z);
        if !v.is_finite() {
            return Err(Error::NonFinitePotential { point: z });
        }
        sum += v;
    }
    Ok((sum, sum / orbit.period as f64))
}

/// `log|f'|` as a potential.
pub fn log_derivative(f: &MarkedPolynomial) -> impl Fn(Complex64) -> f64 + Sync + '_ {
    move |z| f.derivative_at(z).norm().ln()
}
