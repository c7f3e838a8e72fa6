//! Parabolic maps fixing the origin, fiber families, the Möbius base dynamics
//! and the chart at infinity.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative tolerance used to detect the poles `1 + k t = 0` of the base maps.
pub const POLE_RTOL: f64 = 1e-14;

/// Horner evaluation of `sum_k coeffs[k] x^k`.
#[inline]
pub(crate) fn horner(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    let mut it = coeffs.iter().rev();
    let Some(&top) = it.next() else {
        return ZERO;
    };
    it.fold(top, |acc, &c| acc * x + c)
}

/// Nested Horner for `sum_{k,j} rows[k][j] t^j z^k`: first in `t` for every
/// power of `z`, then in `z`.
#[inline]
pub(crate) fn bivariate(rows: &[Vec<Complex64>], t: Complex64, z: Complex64) -> Complex64 {
    let mut it = rows.iter().rev();
    let Some(top) = it.next() else {
        return ZERO;
    };
    it.fold(horner(top, t), |acc, row| acc * z + horner(row, t))
}

/// Error-free sum: `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free product: `a b = p + e` exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Complex product `a b = p + e`, where `e` is the rounded sum of the
/// individual rounding errors.
#[inline]
fn cmul_split(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    let (p1, e1) = two_prod(a.re, b.re);
    let (p2, e2) = two_prod(a.im, b.im);
    let (p3, e3) = two_prod(a.re, b.im);
    let (p4, e4) = two_prod(a.im, b.re);
    let (re, e5) = two_sum(p1, -p2);
    let (im, e6) = two_sum(p3, p4);
    (
        Complex64::new(re, im),
        Complex64::new(e1 - e2 + e5, e3 + e4 + e6),
    )
}

#[inline]
fn cadd_split(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    let (re, e1) = two_sum(a.re, b.re);
    let (im, e2) = two_sum(a.im, b.im);
    (Complex64::new(re, im), Complex64::new(e1, e2))
}

/// Compensated Horner for `sum_{k < len} (hi_k + lo_k) x^k`, where
/// `coef(k) = (hi_k, lo_k)`; returns the working-precision value and its
/// correction. The result is as accurate as plain Horner carried out in twice
/// the working precision, which matters near points where large terms cancel.
#[inline]
pub(crate) fn comp_horner(
    len: usize,
    coef: impl Fn(usize) -> (Complex64, Complex64),
    x: Complex64,
) -> (Complex64, Complex64) {
    let Some(d) = len.checked_sub(1) else {
        return (ZERO, ZERO);
    };
    let (mut s, mut c) = coef(d);
    for k in (0..d).rev() {
        let (hi, lo) = coef(k);
        let (p, pe) = cmul_split(s, x);
        let (sum, se) = cadd_split(p, hi);
        s = sum;
        c = c * x + (pe + se + lo);
    }
    (s, c)
}

#[inline]
fn comp_horner_plain(coeffs: &[Complex64], x: Complex64) -> (Complex64, Complex64) {
    comp_horner(coeffs.len(), |k| (coeffs[k], ZERO), x)
}

/// `z / (1 - z)` to within about half an ulp: the denominator is kept as an
/// exact sum and the quotient gets one residual correction. Long orbits of
/// this map are used as exact references, so per-step error matters.
fn mobius_quotient(z: Complex64) -> Complex64 {
    let (d_re, d_lo) = two_sum(1.0, -z.re);
    let d = Complex64::new(d_re, -z.im);
    let q = z / d;
    let (p, pe) = cmul_split(q, d);
    let r = (z - p) - pe - q * d_lo;
    q + r / d
}

fn is_pole(denominator: Complex64, scale: f64) -> bool {
    denominator.norm() <= POLE_RTOL * scale.max(1.0)
}

/// `m_n(t) = t / (1 + n t)`, the `n`-th iterate of `t -> t / (1 + t)`.
pub fn mobius_n(t: Complex64, n: u64) -> Result<Complex64> {
    mobius_shift(t, n as f64)
}

/// `t / (1 + k t)` for any real shift `k`; `k = -1` gives `t / (1 - t)`.
pub fn mobius_shift(t: Complex64, k: f64) -> Result<Complex64> {
    let kt = t * k;
    let denominator = ONE + kt;
    if is_pole(denominator, kt.norm()) {
        return Err(Error::Pole(format!("1 + {k} t = 0 at t = {t}")));
    }
    finite(t / denominator, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Polynomial,
    /// The rational map `z / (1 - z)`, whose iterates are `z / (1 - n z)`.
    MobiusSpecial,
}

/// A one-variable map fixing the origin.
///
/// For [`MapKind::Polynomial`], `coeffs[k - 1]` is the coefficient of `z^k`.
/// The coefficient list is empty for [`MapKind::MobiusSpecial`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap {
    coeffs: Vec<Complex64>,
    /// Low-order parts of the coefficients left over by [`BivariateFamily::specialize`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    coeffs_lo: Vec<Complex64>,
    kind: MapKind,
}

impl PolynomialMap {
    pub fn polynomial(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidMap(
                "a polynomial map needs degree >= 1".into(),
            ));
        }
        if coeffs
            .iter()
            .any(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::InvalidMap("non-finite coefficient".into()));
        }
        Ok(Self {
            coeffs,
            coeffs_lo: Vec::new(),
            kind: MapKind::Polynomial,
        })
    }

    /// Real coefficients `a_1, a_2, ...`.
    pub fn from_real(coeffs: &[f64]) -> Result<Self> {
        Self::polynomial(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn mobius_special() -> Self {
        Self {
            coeffs: Vec::new(),
            coeffs_lo: Vec::new(),
            kind: MapKind::MobiusSpecial,
        }
    }

    /// `z + z^2 + z^3`.
    pub fn cubic() -> Self {
        Self::from_real(&[1.0, 1.0, 1.0]).expect("static coefficients")
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of `z^k` (`k >= 1`); zero past the degree.
    pub fn coeff(&self, k: usize) -> Complex64 {
        match self.kind {
            MapKind::MobiusSpecial => ONE,
            MapKind::Polynomial => k
                .checked_sub(1)
                .and_then(|i| self.coeffs.get(i))
                .copied()
                .unwrap_or(ZERO),
        }
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        match self.kind {
            MapKind::Polynomial => {
                // Same layout as a family row list, starting at z^0, so that
                // specialized maps reproduce family values bit for bit.
                let lo = |i: usize| self.coeffs_lo.get(i).copied().unwrap_or(ZERO);
                let coef = |k: usize| match k {
                    0 => (ZERO, ZERO),
                    k => (self.coeffs[k - 1], lo(k - 1)),
                };
                let (s, c) = comp_horner(self.coeffs.len() + 1, coef, z);
                finite(s + c, 0)
            }
            MapKind::MobiusSpecial => {
                let d = ONE - z;
                if d == ZERO {
                    return Err(Error::Pole("z / (1 - z) at z = 1".into()));
                }
                finite(mobius_quotient(z), 0)
            }
        }
    }

    pub fn derivative(&self, z: Complex64) -> Result<Complex64> {
        match self.kind {
            MapKind::Polynomial => {
                let d = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .rev()
                    .fold(ZERO, |acc, (i, &c)| acc * z + c * (i as f64 + 1.0));
                finite(d, 0)
            }
            MapKind::MobiusSpecial => {
                let d = ONE - z;
                if d == ZERO {
                    return Err(Error::Pole("z / (1 - z) at z = 1".into()));
                }
                finite(ONE / (d * d), 0)
            }
        }
    }

    /// `n`-fold composition, reporting the failing iterate on overflow.
    pub fn iterate(&self, mut z: Complex64, n: u64) -> Result<Complex64> {
        for k in 1..=n {
            z = self.eval(z).map_err(|e| reindex(e, k))?;
        }
        Ok(z)
    }

    /// Checks the special shape `z + z^2 + z^3 + O(z^4)` with exact equality.
    pub fn is_special(&self) -> Certificate {
        if self.kind == MapKind::MobiusSpecial {
            return Certificate::pass();
        }
        let violations = (1..=3)
            .filter_map(|k| {
                let found = self.coeff(k);
                (found != ONE).then(|| Violation::new(format!("a{k}"), ONE, found))
            })
            .collect();
        Certificate::from_violations(violations)
    }

    /// Coefficient rows `a_0 .. a_d` in the single-column layout of
    /// [`BivariateFamily`].
    fn rows(&self) -> Vec<Vec<Complex64>> {
        std::iter::once(vec![ZERO])
            .chain(self.coeffs.iter().map(|&c| vec![c]))
            .collect()
    }

    /// Remainder `eta(w) = g(w) - w + 1` of `g = 1 / f(1 / w)`.
    pub fn chart_remainder(&self) -> Result<ChartRemainder> {
        match self.kind {
            MapKind::MobiusSpecial => Ok(ChartRemainder::Zero),
            MapKind::Polynomial => ChartRemainder::from_rows(&self.rows()),
        }
    }

    /// `g(w) = 1 / f(1 / w)`, valid for `|w| >= R`.
    pub fn to_infinity(&self, w: Complex64, chart: &ChartConstants) -> Result<Complex64> {
        if w.norm() < chart.r {
            return Err(Error::Domain(format!(
                "|w| = {} below the chart radius R = {}",
                w.norm(),
                chart.r
            )));
        }
        self.to_infinity_unchecked(w)
    }

    pub(crate) fn to_infinity_unchecked(&self, w: Complex64) -> Result<Complex64> {
        let fz = self.eval(ONE / w)?;
        if fz == ZERO {
            return Err(Error::Pole(format!("f(1/w) = 0 at w = {w}")));
        }
        finite(ONE / fz, 0)
    }
}

pub(crate) fn reindex(e: Error, index: u64) -> Error {
    match e {
        Error::Overflow { .. } => Error::Overflow { index },
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Polynomial,
    /// `f_t(z) = z / (1 - z)` for every `t`.
    MobiusSpecial,
}

/// Fiber family `f_t(z) = sum_{k,j} a_{k,j} t^j z^k`; `coeffs[k][j]` is
/// `a_{k,j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BivariateFamily {
    coeffs: Vec<Vec<Complex64>>,
    kind: FamilyKind,
}

impl BivariateFamily {
    /// Rows are padded with zeros to a common length.
    pub fn new(mut coeffs: Vec<Vec<Complex64>>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidMap(
                "a family needs rows for z^0 and at least z^1".into(),
            ));
        }
        let width = coeffs.iter().map(Vec::len).max().unwrap_or(0).max(1);
        for row in &mut coeffs {
            row.resize(width, ZERO);
        }
        if coeffs
            .iter()
            .flatten()
            .any(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::InvalidMap("non-finite coefficient".into()));
        }
        Ok(Self {
            coeffs,
            kind: FamilyKind::Polynomial,
        })
    }

    pub fn from_real(coeffs: &[&[f64]]) -> Result<Self> {
        Self::new(
            coeffs
                .iter()
                .map(|row| row.iter().map(|&c| Complex64::new(c, 0.0)).collect())
                .collect(),
        )
    }

    pub fn mobius_special() -> Self {
        Self {
            coeffs: Vec::new(),
            kind: FamilyKind::MobiusSpecial,
        }
    }

    /// The `t`-independent family `f_t = map`.
    pub fn constant(map: &PolynomialMap) -> Self {
        match map.kind() {
            MapKind::MobiusSpecial => Self::mobius_special(),
            MapKind::Polynomial => Self {
                coeffs: map.rows(),
                kind: FamilyKind::Polynomial,
            },
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    /// `a_{k,j}`, zero outside the stored matrix.
    pub fn coeff(&self, k: usize, j: usize) -> Complex64 {
        self.coeffs
            .get(k)
            .and_then(|row| row.get(j))
            .copied()
            .unwrap_or(ZERO)
    }

    pub fn degree_z(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn degree_t(&self) -> usize {
        self.coeffs.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    /// Horner in `t` for every power of `z`, then in `z`, both compensated.
    pub fn eval(&self, t: Complex64, z: Complex64) -> Result<Complex64> {
        match self.kind {
            FamilyKind::Polynomial => {
                let coef = |k: usize| comp_horner_plain(&self.coeffs[k], t);
                let (s, c) = comp_horner(self.coeffs.len(), coef, z);
                finite(s + c, 0)
            }
            FamilyKind::MobiusSpecial => PolynomialMap::mobius_special().eval(z),
        }
    }

    /// `a_k(t)` for every `k`, split into value and correction.
    fn row_values(&self, t: Complex64) -> (Vec<Complex64>, Vec<Complex64>) {
        self.coeffs
            .iter()
            .map(|row| comp_horner_plain(row, t))
            .unzip()
    }

    /// The fiber map `z -> f_t(z)`. The constant term `a_0(t)` is dropped;
    /// it vanishes for every family that fixes the zero section.
    pub fn specialize(&self, t: Complex64) -> PolynomialMap {
        match self.kind {
            FamilyKind::MobiusSpecial => PolynomialMap::mobius_special(),
            FamilyKind::Polynomial => {
                let (mut hi, mut lo) = self.row_values(t);
                hi.remove(0);
                lo.remove(0);
                let coeffs_lo = if lo.iter().all(|&c| c == ZERO) {
                    Vec::new()
                } else {
                    lo
                };
                PolynomialMap {
                    coeffs: hi,
                    coeffs_lo,
                    kind: MapKind::Polynomial,
                }
            }
        }
    }

    /// Exact check that every `f_t` fixes 0 and has the shape
    /// `z + z^2 + z^3 + O(z^4)`.
    pub fn is_special(&self) -> Certificate {
        if self.kind == FamilyKind::MobiusSpecial {
            return Certificate::pass();
        }
        let mut violations = Vec::new();
        for j in 0..=self.degree_t() {
            let found = self.coeff(0, j);
            if found != ZERO {
                violations.push(Violation::new(format!("a0,{j}"), ZERO, found));
            }
            for k in 1..=3 {
                let expected = if j == 0 { ONE } else { ZERO };
                let found = self.coeff(k, j);
                if found != expected {
                    violations.push(Violation::new(format!("a{k},{j}"), expected, found));
                }
            }
        }
        Certificate::from_violations(violations)
    }

    pub fn chart_remainder(&self) -> Result<ChartRemainder> {
        match self.kind {
            FamilyKind::MobiusSpecial => Ok(ChartRemainder::Zero),
            FamilyKind::Polynomial => ChartRemainder::from_rows(&self.coeffs),
        }
    }
}

/// The remainder `theta_t(w) = g_t(w) - w + 1` of the fiber map conjugated to
/// infinity, `g_t(w) = 1 / f_t(1 / w)`.
///
/// Writing `f_t(z) = z (1 + q_t(z))`, the remainder is
/// `(1 + q - w q) / (1 + q)` evaluated at `z = 1 / w`. The numerator is
/// stored through coefficient differences `a_{m+1} - a_{m+2}`, so no
/// cancellation happens for large `|w|`.
#[derive(Clone, Debug, PartialEq)]
pub enum ChartRemainder {
    /// Identically zero (the map `z / (1 - z)`).
    Zero,
    Polynomial {
        numerator: Vec<Vec<Complex64>>,
        q: Vec<Vec<Complex64>>,
    },
}

impl ChartRemainder {
    fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let width = rows.first().map_or(1, Vec::len);
        let at = |k: usize, j: usize| rows.get(k).and_then(|r| r.get(j)).copied().unwrap_or(ZERO);
        for j in 0..width {
            let (a0, a1) = (at(0, j), at(1, j));
            let expected_a1 = if j == 0 { ONE } else { ZERO };
            if a0 != ZERO || a1 != expected_a1 {
                return Err(Error::Precondition(
                    "the chart at infinity needs f_t(z) = z + O(z^2) for every t".into(),
                ));
            }
        }
        let d = rows.len() - 1;
        let numerator = (0..d)
            .map(|m| (0..width).map(|j| at(m + 1, j) - at(m + 2, j)).collect())
            .collect();
        let q = (0..d)
            .map(|m| {
                (0..width)
                    .map(|j| if m == 0 { ZERO } else { at(m + 1, j) })
                    .collect()
            })
            .collect();
        Ok(Self::Polynomial { numerator, q })
    }

    #[inline]
    pub fn eval(&self, t: Complex64, w: Complex64) -> Complex64 {
        match self {
            Self::Zero => ZERO,
            Self::Polynomial { numerator, q } => {
                let z = ONE / w;
                bivariate(numerator, t, z) / (ONE + bivariate(q, t, z))
            }
        }
    }

    /// `d theta_t / dw`.
    pub fn derivative(&self, t: Complex64, w: Complex64) -> Complex64 {
        match self {
            Self::Zero => ZERO,
            Self::Polynomial { numerator, q } => {
                let z = ONE / w;
                let (n, dn) = bivariate_with_dz(numerator, t, z);
                let (qv, dq) = bivariate_with_dz(q, t, z);
                let den = ONE + qv;
                let d_dz = (dn * den - n * dq) / (den * den);
                -d_dz * z * z
            }
        }
    }
}

/// Value and `z`-derivative of a bivariate polynomial.
fn bivariate_with_dz(
    rows: &[Vec<Complex64>],
    t: Complex64,
    z: Complex64,
) -> (Complex64, Complex64) {
    rows.iter().rev().fold((ZERO, ZERO), |(p, dp), row| {
        (p * z + horner(row, t), dp * z + p)
    })
}

/// Infinity-chart constants: for `|w| >= r` (and `|u| >= r` for families)
/// the remainder satisfies `|eta| <= a / |w|^2` and `|eta| <= 1/10`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartConstants {
    pub r: f64,
    pub a: f64,
    /// Scale of the domain `V_eps = {|z - eps| < eps}`, `eps = 1 / (2 r)`.
    pub eps: f64,
    /// `r + a / r`.
    pub r_prime: f64,
}

/// Largest radius the constant search will try.
pub const MAX_CHART_RADIUS: f64 = 1e6;
const SAFETY: f64 = 2.0;
const A_FLOOR: f64 = 1e-12;

impl ChartConstants {
    pub fn new(r: f64, a: f64) -> Self {
        Self {
            r,
            a,
            eps: 1.0 / (2.0 * r),
            r_prime: r + a / r,
        }
    }

    /// Constants for a special one-variable map, from 16 circles with 256
    /// samples each on `R <= |w| <= 100 R`, doubling `R` from 1.
    pub fn for_map(map: &PolynomialMap) -> Result<Self> {
        let cert = map.is_special();
        if !cert.passed {
            return Err(Error::Precondition(format!("map is not special: {cert}")));
        }
        let chart = map.chart_remainder()?;
        search(|r| {
            let mut sup = (0.0f64, 0.0f64);
            for w in circle_samples(r, 16, 256) {
                accumulate(&mut sup, chart.eval(ZERO, w), w);
            }
            sup
        })
    }

    /// Joint constants for a special family: suprema over 16 fiber
    /// parameters `u = 1/t` and 256 chart points `w`, all with modulus in
    /// `[R, 100 R]`.
    pub fn for_family(family: &BivariateFamily) -> Result<Self> {
        let cert = family.is_special();
        if !cert.passed {
            return Err(Error::Precondition(format!(
                "family is not special: {cert}"
            )));
        }
        let chart = family.chart_remainder()?;
        search(|r| {
            let ws: Vec<_> = circle_samples(r, 16, 16).collect();
            let mut sup = (0.0f64, 0.0f64);
            for u in circle_samples(r, 4, 4) {
                let t = ONE / u;
                for &w in &ws {
                    accumulate(&mut sup, chart.eval(t, w), w);
                }
            }
            sup
        })
    }
}

fn accumulate(sup: &mut (f64, f64), eta: Complex64, w: Complex64) {
    let m = eta.norm();
    // NaN poisons the maximum so that the radius is rejected.
    let scaled = m * w.norm_sqr();
    sup.0 = if m.is_nan() { f64::NAN } else { sup.0.max(m) };
    sup.1 = if scaled.is_nan() {
        f64::NAN
    } else {
        sup.1.max(scaled)
    };
}

fn search(mut sample: impl FnMut(f64) -> (f64, f64)) -> Result<ChartConstants> {
    let mut r = 1.0;
    while r <= MAX_CHART_RADIUS {
        let (sup_eta, sup_scaled) = sample(r);
        if sup_eta.is_finite() && sup_scaled.is_finite() && SAFETY * sup_eta <= 0.1 {
            return Ok(ChartConstants::new(r, (SAFETY * sup_scaled).max(A_FLOOR)));
        }
        r *= 2.0;
    }
    Err(Error::SearchFailure {
        max_radius: MAX_CHART_RADIUS,
    })
}

/// Points on `radii` geometric circles spanning `[r, 100 r]`, `per_circle`
/// equi-angular samples each, staggered between circles.
fn circle_samples(r: f64, radii: usize, per_circle: usize) -> impl Iterator<Item = Complex64> {
    (0..radii).flat_map(move |i| {
        let rho = r * 100f64.powf(i as f64 / (radii - 1).max(1) as f64);
        let offset = 0.5 * i as f64 / radii as f64;
        (0..per_circle)
            .map(move |k| Complex64::from_polar(rho, TAU * (k as f64 + offset) / per_circle as f64))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub coefficient: String,
    pub expected: Complex64,
    pub found: Complex64,
}

impl Violation {
    pub fn new(coefficient: impl Into<String>, expected: Complex64, found: Complex64) -> Self {
        Self {
            coefficient: coefficient.into(),
            expected,
            found,
        }
    }
}

/// Outcome of a structural check, with every offending coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl Certificate {
    pub fn pass() -> Self {
        Self {
            passed: true,
            violations: Vec::new(),
        }
    }

    pub fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            passed: violations.is_empty(),
            violations,
        }
    }

    pub fn merge(mut self, other: Certificate) -> Self {
        self.violations.extend(other.violations);
        self.passed = self.passed && other.passed;
        self
    }
}

impl std::fmt::Display for Certificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed {
            return f.write_str("ok");
        }
        let names: Vec<_> = self
            .violations
            .iter()
            .map(|v| v.coefficient.as_str())
            .collect();
        write!(f, "violations at {}", names.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn eval_map_examples() {
        let f = PolynomialMap::cubic();
        assert_eq!(f.eval(c(0.0)).unwrap(), c(0.0));
        assert!((f.eval(c(0.1)).unwrap() - c(0.111)).norm() < 1e-15);
        let m = PolynomialMap::mobius_special();
        assert_eq!(m.eval(c(0.5)).unwrap(), c(1.0));
        assert!(matches!(m.eval(c(1.0)), Err(Error::Pole(_))));
        let big = PolynomialMap::from_real(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            big.eval(c(1e200)),
            Err(Error::Overflow { index: 0 })
        ));
    }

    #[test]
    fn mobius_examples() {
        assert_eq!(mobius_n(c(0.1), 0).unwrap(), c(0.1));
        assert!((mobius_n(c(0.1), 10).unwrap() - c(0.05)).norm() < 1e-17);
        assert!(matches!(mobius_n(c(-0.5), 2), Err(Error::Pole(_))));
        assert!((mobius_shift(c(0.5), -1.0).unwrap() - c(1.0)).norm() < 1e-16);
    }

    #[test]
    fn specialness() {
        assert!(PolynomialMap::cubic().is_special().passed);
        assert!(PolynomialMap::mobius_special().is_special().passed);
        let cert = PolynomialMap::from_real(&[1.0, 2.0]).unwrap().is_special();
        assert!(!cert.passed);
        let names: Vec<_> = cert
            .violations
            .iter()
            .map(|v| v.coefficient.clone())
            .collect();
        // a3 is missing as well: z + 2 z^2 has a3 = 0.
        assert_eq!(names, ["a2", "a3"]);

        let constant = BivariateFamily::constant(&PolynomialMap::cubic());
        assert!(constant.is_special().passed);
        let mut rows = constant.coeffs().to_vec();
        rows[0] = vec![c(0.0), c(1.0)];
        let broken = BivariateFamily::new(rows).unwrap();
        let cert = broken.is_special();
        assert!(!cert.passed);
        assert_eq!(cert.violations[0].coefficient, "a0,1");
    }

    #[test]
    fn family_reduces_to_map() {
        let fam = BivariateFamily::constant(&PolynomialMap::cubic());
        let v = fam.eval(c(5.0), c(0.1)).unwrap();
        assert!((v - c(0.111)).norm() < 1e-15);
        assert_eq!(fam.degree_t(), 0);
    }

    #[test]
    fn chart_remainder_matches_closed_form() {
        // g(w) = w - 1 + 1 / (w^2 + w + 1) for z + z^2 + z^3.
        let f = PolynomialMap::cubic();
        let chart = f.chart_remainder().unwrap();
        for w in [c(10.0), Complex64::new(7.0, -3.0), c(1e4)] {
            let closed = ONE / (w * w + w + ONE);
            let got = chart.eval(ZERO, w);
            assert!(
                (got - closed).norm() <= 1e-15 * closed.norm(),
                "{w}: {got} vs {closed}"
            );
        }
        let g = f.to_infinity_unchecked(c(10.0)).unwrap();
        assert!((g - c(9.0 + 1.0 / 111.0)).norm() < 1e-13);
        let m = PolynomialMap::mobius_special();
        assert_eq!(m.to_infinity_unchecked(c(10.0)).unwrap(), c(9.0));
        assert_eq!(m.chart_remainder().unwrap(), ChartRemainder::Zero);
    }

    #[test]
    fn chart_derivative_matches_difference_quotient() {
        let chart = PolynomialMap::from_real(&[1.0, 1.0, 1.0, 14.0, 31.0])
            .unwrap()
            .chart_remainder()
            .unwrap();
        let w = Complex64::new(9.0, 2.0);
        let h = 1e-5;
        let fd = (chart.eval(ZERO, w + h) - chart.eval(ZERO, w - h)) / (2.0 * h);
        let d = chart.derivative(ZERO, w);
        assert!((fd - d).norm() < 1e-9 * d.norm().max(1e-6), "{fd} vs {d}");
    }

    #[test]
    fn chart_needs_tangent_to_identity() {
        let f = PolynomialMap::from_real(&[2.0, 1.0]).unwrap();
        assert!(matches!(f.chart_remainder(), Err(Error::Precondition(_))));
    }

    #[test]
    fn to_infinity_rejects_small_w() {
        let f = PolynomialMap::cubic();
        let k = ChartConstants::for_map(&f).unwrap();
        assert!(matches!(
            f.to_infinity(c(k.r * 0.5), &k),
            Err(Error::Domain(_))
        ));
        assert!(f.to_infinity(c(k.r), &k).is_ok());
    }

    #[test]
    fn cubic_constants() {
        let k = ChartConstants::for_map(&PolynomialMap::cubic()).unwrap();
        // |1/(w^2+w+1)| <= 1/20 needs |w| a little above 4.5.
        assert_eq!(k.r, 8.0);
        assert!(k.a > 2.0 && k.a < 2.5, "A = {}", k.a);
        assert_eq!(k.eps, 1.0 / 16.0);
        assert_eq!(k.r_prime, k.r + k.a / k.r);

        let m = ChartConstants::for_map(&PolynomialMap::mobius_special()).unwrap();
        assert_eq!(m.a, A_FLOOR);
        assert_eq!(m.r, 1.0);
    }

    #[test]
    fn non_special_constants_rejected() {
        let f = PolynomialMap::from_real(&[1.0, 2.0]).unwrap();
        assert!(matches!(
            ChartConstants::for_map(&f),
            Err(Error::Precondition(_))
        ));
    }
}
