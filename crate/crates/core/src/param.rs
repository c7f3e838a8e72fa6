//! One-variable parametrization `phi = lim f^n(z / (1 + n z))` of the
//! repelling direction of a special parabolic map, its extension to the
//! plane, and the chart-at-infinity diagnostics.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};
use crate::fit::{fit_line, log_spaced};
use crate::limit::{Basis, Engine, LimitOptions, Shape};
use crate::maps::{mobius_n, mobius_shift, reindex, ChartConstants, ChartRemainder, PolynomialMap};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Fraction of `eps` defining the inner disk targeted by the extension.
pub const EXTENSION_SHRINK: f64 = 0.9;
/// Residual target of the inverse-branch Newton solve.
pub const NEWTON_TOL: f64 = 1e-13;
pub const NEWTON_MAX_STEPS: usize = 50;

/// The disk `{ |z - eps| < eps }`, equivalently `Re(1/z) > 1 / (2 eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainVEps {
    pub eps: f64,
}

impl DomainVEps {
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.eps).norm() < self.eps
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(self.eps, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffSample {
    pub n: u64,
    pub diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamResult {
    pub value: Complex64,
    pub n_used: u64,
    /// Estimated distance from `value` to the limit. Extended values meet
    /// `tail_bound <= tol * max(1, |value|)`.
    pub tail_bound: f64,
    /// Forward steps `N` of the extension (0 inside the domain).
    pub extension_steps: u64,
    /// Whether `value` is an extrapolant rather than a literal `phi_n`.
    pub extrapolated: bool,
    pub history: Vec<DiffSample>,
}

impl ParamResult {
    pub(crate) fn exact(value: Complex64) -> Self {
        Self {
            value,
            n_used: 0,
            tail_bound: 0.0,
            extension_steps: 0,
            extrapolated: false,
            history: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NRange {
    pub min: u64,
    pub max: u64,
}

impl NRange {
    pub fn new(min: u64, max: u64) -> Result<Self> {
        if min == 0 || min >= max {
            return Err(Error::Domain(format!("invalid n range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }
}

/// Fit of `|phi_{n+1}(z) - phi_n(z)| ~ C |z|^2 / (1 + n |z|)^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub constant: f64,
    pub n_range: NRange,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub z_abs: f64,
    pub samples: Vec<DiffSample>,
}

impl DecayFit {
    pub fn predict(&self, n: u64) -> f64 {
        self.constant * self.z_abs * self.z_abs / (1.0 + n as f64 * self.z_abs).powf(self.exponent)
    }

    /// Largest ratio, in either direction, between model and measurement.
    pub fn worst_ratio(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let r = self.predict(s.n) / s.diff;
                r.max(1.0 / r)
            })
            .fold(1.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        diffs_csv(&self.samples)
    }
}

pub(crate) fn diffs_csv(samples: &[DiffSample]) -> String {
    let mut out = String::from("n,diff\n");
    for s in samples {
        out.push_str(&format!("{},{:e}\n", s.n, s.diff));
    }
    out
}

/// `f^n(z / (1 + n z))` by literal composition.
pub fn phi_n(map: &PolynomialMap, z: Complex64, n: u64) -> Result<Complex64> {
    map.iterate(mobius_n(z, n)?, n)
}

/// Smallest `N` moving `Re(1/t)` past `r / 0.9`.
pub(crate) fn extension_steps(u: Complex64, r: f64, max_n: u64) -> Result<u64> {
    let target = r / EXTENSION_SHRINK;
    if u.re > target {
        return Ok(0);
    }
    let n = (target - u.re).floor() + 1.0;
    if n.is_nan() || n > max_n as f64 {
        return Err(Error::Domain(format!(
            "extension from 1/t = {u} needs {n} steps"
        )));
    }
    Ok(n as u64)
}

/// A special map together with its chart constants.
#[derive(Clone, Debug)]
pub struct Parametrization {
    map: PolynomialMap,
    chart: ChartRemainder,
    constants: ChartConstants,
    options: LimitOptions,
}

impl Parametrization {
    pub fn new(map: PolynomialMap) -> Result<Self> {
        let constants = ChartConstants::for_map(&map)?;
        let chart = map.chart_remainder()?;
        Ok(Self {
            map,
            chart,
            constants,
            options: LimitOptions::default(),
        })
    }

    pub fn with_options(mut self, options: LimitOptions) -> Self {
        self.options = options;
        self
    }

    pub fn map(&self) -> &PolynomialMap {
        &self.map
    }

    pub fn constants(&self) -> &ChartConstants {
        &self.constants
    }

    pub fn options(&self) -> &LimitOptions {
        &self.options
    }

    pub fn domain(&self) -> DomainVEps {
        DomainVEps {
            eps: self.constants.eps,
        }
    }

    pub fn phi_n(&self, z: Complex64, n: u64) -> Result<Complex64> {
        phi_n(&self.map, z, n)
    }

    /// Accumulated remainder `rho_n` with `psi_n(u) = u + rho_n`; the orbit
    /// point after `i` steps is `(u + n - i) + rho_i`.
    fn rho(&self, u: Complex64, n: u64) -> Result<Complex64> {
        if matches!(self.chart, ChartRemainder::Zero) {
            return Ok(ZERO);
        }
        let mut rho = ZERO;
        for i in 1..=n {
            let w = (u + (n - i + 1) as f64) + rho;
            rho += self.chart.eval(ZERO, w);
        }
        finite(rho, n)
    }

    /// `phi_n(z)` evaluated as `1 / (1/z + rho_n)` in the chart at infinity,
    /// which avoids the rounding drift of literal composition.
    pub fn phi_n_chart(&self, z: Complex64, n: u64) -> Result<Complex64> {
        if z == ZERO {
            return Ok(ZERO);
        }
        from_chart(z, self.rho(ONE / z, n)?)
    }

    /// `phi(z)` for `z` in `V_eps`.
    pub fn phi_limit(&self, z: Complex64, tol: f64) -> Result<ParamResult> {
        if z == ZERO {
            return Ok(ParamResult::exact(ZERO));
        }
        let domain = self.domain();
        if !domain.contains(z) {
            return Err(Error::Domain(format!(
                "z = {z} outside V_eps with eps = {}",
                domain.eps
            )));
        }
        let u = ONE / z;
        let engine = Engine {
            options: self.options,
            shape: Shape::OneDim { z_abs: z.norm() },
            basis: Basis::Powers,
        };
        engine.run(tol, |n| self.rho(u, n), |r| from_chart(z, r))
    }

    /// `phi(t) = f^N(phi(t / (1 + N t)))` with the least admissible `N`.
    pub fn phi_extended(&self, t: Complex64, tol: f64) -> Result<ParamResult> {
        if t == ZERO {
            return Ok(ParamResult::exact(ZERO));
        }
        let n_ext = if self.domain().contains(t) {
            0
        } else {
            extension_steps(ONE / t, self.constants.r, self.options.max_n)?
        };
        // Only the endpoint of the chain enters the formula: phi is entire,
        // so poles of intermediate m_k(t) do not matter.
        let s = mobius_n(t, n_ext)?;
        extend(
            n_ext,
            tol,
            |inner_tol| self.phi_limit(s, inner_tol),
            |z| Ok((self.map.eval(z)?, self.map.derivative(z)?)),
        )
    }

    /// `g^n(w + n)` by literal composition of `g(w) = 1 / f(1 / w)`.
    pub fn psi_n(&self, w: Complex64, n: u64) -> Result<Complex64> {
        if w.re.is_nan() || w.re <= self.constants.r {
            return Err(Error::Domain(format!(
                "Re(w) = {} not above R = {}",
                w.re, self.constants.r
            )));
        }
        let mut x = w + n as f64;
        for k in 1..=n {
            x = self
                .map
                .to_infinity_unchecked(x)
                .map_err(|e| reindex(e, k))?;
        }
        Ok(x)
    }

    /// The increment `delta` with `h(x) = x + 1 + delta`, i.e. the root of
    /// `delta + eta(x + 1 + delta) = 0`.
    fn inverse_increment(&self, base: Complex64, offset: Complex64) -> Result<Complex64> {
        if matches!(self.chart, ChartRemainder::Zero) {
            return Ok(ZERO);
        }
        let mut delta = ZERO;
        let mut residual = f64::INFINITY;
        for _ in 0..=NEWTON_MAX_STEPS {
            let x = base + (offset + delta);
            let r = delta + self.chart.eval(ZERO, x);
            residual = r.norm();
            if residual <= NEWTON_TOL {
                return Ok(delta);
            }
            let d = ONE + self.chart.derivative(ZERO, x);
            delta -= r / d;
            if !(delta.re.is_finite() && delta.im.is_finite()) {
                break;
            }
        }
        Err(Error::NewtonFailure { residual })
    }

    /// Local inverse `h` of the chart map near infinity.
    pub fn inverse_step(&self, u: Complex64) -> Result<Complex64> {
        Ok(u + 1.0 + self.inverse_increment(u + 1.0, ZERO)?)
    }

    /// Sum `sigma_n` of the increments, so that `h^n(u) - n = u + sigma_n`.
    fn sigma(&self, u: Complex64, n: u64) -> Result<Complex64> {
        let mut sigma = ZERO;
        for k in 1..=n {
            sigma += self.inverse_increment(u + k as f64, sigma)?;
        }
        finite(sigma, n)
    }

    fn check_abel_domain(&self, u: Complex64) -> Result<()> {
        if u.re.is_nan() || u.re <= self.constants.r_prime {
            return Err(Error::Domain(format!(
                "Re(u) = {} not above R' = {}",
                u.re, self.constants.r_prime
            )));
        }
        Ok(())
    }

    /// `gamma_n(u) = h^n(u) - n`.
    pub fn gamma_n(&self, u: Complex64, n: u64) -> Result<Complex64> {
        self.check_abel_domain(u)?;
        Ok(u + self.sigma(u, n)?)
    }

    /// `|gamma_n(h(u)) - gamma_n(u) - 1|`, with both orbits computed
    /// independently.
    pub fn abel_residual(&self, u: Complex64, n: u64) -> Result<f64> {
        self.check_abel_domain(u)?;
        let delta0 = self.inverse_increment(u + 1.0, ZERO)?;
        let hu = u + 1.0 + delta0;
        Ok((delta0 + self.sigma(hu, n)? - self.sigma(u, n)?).norm())
    }

    /// Fits the decay of one-step differences over log-spaced `n`.
    pub fn fit_decay(&self, z: Complex64, range: NRange) -> Result<DecayFit> {
        if !self.domain().contains(z) {
            return Err(Error::Domain(format!("z = {z} outside V_eps")));
        }
        let z_abs = z.norm();
        let floor = 64.0 * f64::EPSILON * z_abs;
        let ns = log_spaced(range.min, range.max, 24);
        let samples: Vec<DiffSample> = ns
            .par_iter()
            .map(|&n| {
                let d = (self.phi_n_chart(z, n + 1)? - self.phi_n_chart(z, n)?).norm();
                Ok(DiffSample { n, diff: d })
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|s| s.diff > floor)
            .collect();
        if samples.len() < 10 {
            return Err(Error::InsufficientData(format!(
                "only {} of {} differences above the rounding floor",
                samples.len(),
                ns.len()
            )));
        }
        let points: Vec<_> = samples
            .iter()
            .map(|s| ((1.0 + s.n as f64 * z_abs).ln(), s.diff.ln()))
            .collect();
        let line = fit_line(&points)?;
        Ok(DecayFit {
            exponent: -line.slope,
            constant: line.intercept.exp() / (z_abs * z_abs),
            n_range: range,
            residual: line.rms,
            z_abs,
            samples,
        })
    }
}

/// `1 / (1/z + rho)`, written so that `rho = 0` returns `z` unchanged.
#[inline]
pub(crate) fn from_chart(z: Complex64, rho: Complex64) -> Result<Complex64> {
    finite(z / (ONE + z * rho), 0)
}

/// Shared tail of the one-variable and skew extensions: evaluates the inner
/// limit, pushes it forward `n_ext` times, and tightens the inner tolerance
/// by the derivative of the forward map. The target is
/// `tol * max(1, |phi(t)|)`, absolute for small values and relative for the
/// large values reached far out on the extension.
pub(crate) fn extend(
    n_ext: u64,
    tol: f64,
    inner: impl Fn(f64) -> Result<ParamResult>,
    step: impl Fn(Complex64) -> Result<(Complex64, Complex64)>,
) -> Result<ParamResult> {
    let forward = |start: Complex64| -> Result<(Complex64, f64)> {
        let mut z = start;
        let mut gain = 1.0f64;
        for k in 1..=n_ext {
            let (next, d) = step(z).map_err(|e| reindex(e, k))?;
            gain *= d.norm();
            z = next;
        }
        Ok((z, gain))
    };
    let mut res = inner(tol)?;
    let (mut value, mut gain) = forward(res.value)?;
    let needed = tol * value.norm().max(1.0) / gain.max(1.0);
    if res.tail_bound > needed {
        res = inner(needed)?;
        (value, gain) = forward(res.value)?;
    }
    res.value = value;
    res.tail_bound *= gain.max(1.0);
    res.extension_steps = n_ext;
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResidual {
    pub t: Complex64,
    pub residual: Option<f64>,
    pub skipped: Option<String>,
}

/// Per-sample residuals of a functional equation, each scaled by
/// `max(1, |f(phi(t))|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub tol: f64,
    pub passed: bool,
    /// Set when the input did not satisfy the structural precondition.
    pub precondition: Option<String>,
    pub skipped: usize,
    pub samples: Vec<SampleResidual>,
}

impl ResidualReport {
    pub(crate) fn from_samples(samples: Vec<SampleResidual>, tol: f64) -> Self {
        let max_residual = samples
            .iter()
            .filter_map(|s| s.residual)
            .fold(0.0, f64::max);
        let skipped = samples.iter().filter(|s| s.residual.is_none()).count();
        let evaluated = samples.len() - skipped;
        Self {
            max_residual,
            tol,
            passed: evaluated > 0 && max_residual < tol,
            precondition: None,
            skipped,
            samples,
        }
    }

    pub(crate) fn precondition_failed(message: String, tol: f64) -> Self {
        Self {
            max_residual: 0.0,
            tol,
            passed: false,
            precondition: Some(message),
            skipped: 0,
            samples: Vec::new(),
        }
    }
}

pub(crate) fn scaled_residual(lhs: Complex64, rhs: Complex64) -> f64 {
    (lhs - rhs).norm() / rhs.norm().max(1.0)
}

pub(crate) fn residual_sample(t: Complex64, r: Result<f64>) -> SampleResidual {
    match r {
        Ok(r) => SampleResidual {
            t,
            residual: Some(r),
            skipped: None,
        },
        Err(e) => SampleResidual {
            t,
            residual: None,
            skipped: Some(e.to_string()),
        },
    }
}

/// `|phi(t / (1 - t)) - f(phi(t))| / max(1, |f(phi(t))|)` over `samples`,
/// each side computed to `tol / 10`.
pub fn verify_functional_equation(
    map: &PolynomialMap,
    samples: &[Complex64],
    tol: f64,
) -> ResidualReport {
    let param = match Parametrization::new(map.clone()) {
        Ok(p) => p,
        Err(e) => return ResidualReport::precondition_failed(e.to_string(), tol),
    };
    let inner = tol / 10.0;
    let rows = samples
        .par_iter()
        .map(|&t| {
            let r = (|| {
                let lhs = param.phi_extended(mobius_shift(t, -1.0)?, inner)?.value;
                let rhs = map.eval(param.phi_extended(t, inner)?.value)?;
                Ok(scaled_residual(lhs, rhs))
            })();
            residual_sample(t, r)
        })
        .collect();
    ResidualReport::from_samples(rows, tol)
}
