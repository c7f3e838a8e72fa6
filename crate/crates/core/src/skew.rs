//! Skew products `F(t, z) = (t / (1 + t), f_t(z))` over the parabolic
//! Möbius base, the fibered parametrization sequence and its limit.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};
use crate::limit::{Basis, Engine, LimitOptions, Shape};
use crate::maps::{
    mobius_n, mobius_shift, reindex, BivariateFamily, Certificate, ChartConstants, ChartRemainder,
    FamilyKind, PolynomialMap, Violation,
};
use crate::param::{
    extend, extension_steps, from_chart, residual_sample, scaled_residual, DomainVEps, ParamResult,
    ResidualReport,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Absolute tolerance of the coefficient test `f_t(x0) = t`.
pub const X0_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewPoint {
    pub t: Complex64,
    pub z: Complex64,
}

impl SkewPoint {
    pub fn new(t: Complex64, z: Complex64) -> Self {
        Self { t, z }
    }
}

#[derive(Clone, Debug)]
pub struct SkewMap {
    family: BivariateFamily,
    constants: ChartConstants,
    chart: ChartRemainder,
    f0: PolynomialMap,
    options: LimitOptions,
}

impl SkewMap {
    pub fn new(family: BivariateFamily) -> Result<Self> {
        let constants = ChartConstants::for_family(&family)?;
        let chart = family.chart_remainder()?;
        let f0 = family.specialize(ZERO);
        Ok(Self {
            family,
            constants,
            chart,
            f0,
            options: LimitOptions::default(),
        })
    }

    pub fn with_options(mut self, options: LimitOptions) -> Self {
        self.options = options;
        self
    }

    pub fn family(&self) -> &BivariateFamily {
        &self.family
    }

    pub fn constants(&self) -> &ChartConstants {
        &self.constants
    }

    /// The fiber map over the invariant fiber `t = 0`.
    pub fn f0(&self) -> &PolynomialMap {
        &self.f0
    }

    pub fn domain(&self) -> DomainVEps {
        DomainVEps {
            eps: self.constants.eps,
        }
    }

    /// One literal step.
    pub fn step(&self, p: SkewPoint) -> Result<SkewPoint> {
        Ok(SkewPoint {
            t: mobius_n(p.t, 1)?,
            z: self.family.eval(p.t, p.z)?,
        })
    }

    /// Fiber coordinate of `F^steps(m_start(t), z)`: applies
    /// `z -> f_{m_{start + k}(t)}(z)` for `k = 0..steps`, with the base
    /// coordinates taken from the closed form.
    pub fn fiber_image(
        &self,
        t: Complex64,
        start: u64,
        mut z: Complex64,
        steps: u64,
    ) -> Result<Complex64> {
        for k in 0..steps {
            let tk = mobius_n(t, start + k)?;
            z = finite(
                self.family.eval(tk, z).map_err(|e| reindex(e, k + 1))?,
                k + 1,
            )?;
        }
        Ok(z)
    }

    /// `F^n(p)`, base coordinate `m_n(t)`.
    pub fn iterate(&self, p: SkewPoint, n: u64) -> Result<SkewPoint> {
        Ok(SkewPoint {
            t: mobius_n(p.t, n)?,
            z: self.fiber_image(p.t, 0, p.z, n)?,
        })
    }

    /// Full trace `p, F(p), ..., F^n(p)`.
    pub fn orbit(&self, p: SkewPoint, n: u64) -> Result<Vec<SkewPoint>> {
        let mut out = Vec::with_capacity(n as usize + 1);
        out.push(p);
        let mut z = p.z;
        for k in 0..n {
            z = finite(
                self.family
                    .eval(mobius_n(p.t, k)?, z)
                    .map_err(|e| reindex(e, k + 1))?,
                k + 1,
            )?;
            out.push(SkewPoint {
                t: mobius_n(p.t, k + 1)?,
                z,
            });
        }
        Ok(out)
    }

    /// `pi_2 F^n(m_{n+1}(t), m_n(t))`.
    pub fn phi_n(&self, t: Complex64, n: u64) -> Result<Complex64> {
        self.fiber_image(t, n + 1, mobius_n(t, n)?, n)
    }

    /// `pi_2 F^{n+1}(m_n(t), x0)`.
    pub fn phi_via_x0(&self, x0: Complex64, t: Complex64, n: u64) -> Result<Complex64> {
        let cert = self.check_special(x0);
        if !cert.passed {
            return Err(Error::Precondition(format!("x0 = {x0}: {cert}")));
        }
        self.fiber_image(t, n, x0, n + 1)
    }

    /// Checks the family is special and `f_t(x0) = t` coefficientwise.
    pub fn check_special(&self, x0: Complex64) -> Certificate {
        let mut cert = self.family.is_special();
        if x0 == ZERO {
            cert = cert.merge(Certificate::from_violations(vec![Violation::new(
                "x0", ONE, ZERO,
            )]));
        }
        if self.family.kind() == FamilyKind::MobiusSpecial {
            return cert.merge(Certificate::from_violations(vec![Violation::new(
                "f_t(x0) has no t^1 term",
                ONE,
                ZERO,
            )]));
        }
        let degree_t = self.family.degree_t().max(1);
        let violations = (0..=degree_t)
            .filter_map(|j| {
                let mut sum = ZERO;
                let mut power = ONE;
                for k in 0..=self.family.degree_z() {
                    sum += self.family.coeff(k, j) * power;
                    power *= x0;
                }
                let expected = if j == 1 { ONE } else { ZERO };
                ((sum - expected).norm() > X0_TOL)
                    .then(|| Violation::new(format!("f_t(x0) coefficient of t^{j}"), expected, sum))
            })
            .collect();
        cert.merge(Certificate::from_violations(violations))
    }

    /// Chart remainder `rho_n` of the fibered sequence: step `i` applies
    /// `g_v` with `v = u + n + i` to `(u + n - i + 1) + rho`.
    fn rho(&self, u: Complex64, n: u64) -> Result<Complex64> {
        if matches!(self.chart, ChartRemainder::Zero) {
            return Ok(ZERO);
        }
        let mut rho = ZERO;
        for i in 1..=n {
            let w = (u + (n - i + 1) as f64) + rho;
            let t = ONE / (u + (n + i) as f64);
            rho += self.chart.eval(t, w);
        }
        finite(rho, n)
    }

    /// `phi(t)` for `t` in `V_eps`.
    pub fn phi_limit(&self, t: Complex64, tol: f64) -> Result<ParamResult> {
        if t == ZERO {
            return Ok(ParamResult::exact(ZERO));
        }
        let domain = self.domain();
        if !domain.contains(t) {
            return Err(Error::Domain(format!(
                "t = {t} outside V_eps with eps = {}",
                domain.eps
            )));
        }
        let u = ONE / t;
        let engine = Engine {
            options: self.options,
            shape: Shape::Skew { eps: domain.eps },
            basis: Basis::PowersWithLog,
        };
        engine.run(tol, |n| self.rho(u, n), |r| from_chart(t, r))
    }

    /// `phi(t) = f_0^N(phi(t / (1 + N t)))` with the least admissible `N`.
    pub fn phi_extended(&self, t: Complex64, tol: f64) -> Result<ParamResult> {
        if t == ZERO {
            return Ok(ParamResult::exact(ZERO));
        }
        let n_ext = self.extension_steps(t)?;
        let s = mobius_n(t, n_ext)?;
        extend(
            n_ext,
            tol,
            |inner_tol| self.phi_limit(s, inner_tol),
            |z| Ok((self.f0.eval(z)?, self.f0.derivative(z)?)),
        )
    }

    /// The `N` used by [`SkewMap::phi_extended`].
    pub fn extension_steps(&self, t: Complex64) -> Result<u64> {
        if self.domain().contains(t) {
            return Ok(0);
        }
        extension_steps(ONE / t, self.constants.r, self.options.max_n)
    }

    /// Finite-index extension `pi_2 F^N(m_{N+2n+1}(t), phi_n(m_N(t)))`.
    pub fn phi_extended_n(&self, t: Complex64, n_ext: u64, n: u64) -> Result<Complex64> {
        let inner = self.phi_n(mobius_n(t, n_ext)?, n)?;
        self.fiber_image(t, n_ext + 2 * n + 1, inner, n_ext)
    }

    /// `|phi(t / (1 - t)) - f_0(phi(t))|` per sample.
    pub fn verify_functional_equation(&self, samples: &[Complex64], tol: f64) -> ResidualReport {
        let cert = self.family.is_special();
        if !cert.passed {
            return ResidualReport::precondition_failed(cert.to_string(), tol);
        }
        let inner = tol / 10.0;
        let rows = samples
            .par_iter()
            .map(|&t| {
                let r = (|| {
                    let lhs = self.phi_extended(mobius_shift(t, -1.0)?, inner)?.value;
                    let rhs = self.f0.eval(self.phi_extended(t, inner)?.value)?;
                    Ok(scaled_residual(lhs, rhs))
                })();
                residual_sample(t, r)
            })
            .collect();
        ResidualReport::from_samples(rows, tol)
    }

    /// Orbit bounds along `u_{n,i}` in the chart at infinity.
    pub fn diagnose_lemma_bounds(&self, u: Complex64, n: u64) -> Result<OrbitDiagnostics> {
        let ChartConstants { r, a, r_prime, .. } = self.constants;
        if u.re.is_nan() || u.re <= r_prime {
            return Err(Error::Domain(format!(
                "Re(u) = {} not above R' = {r_prime}",
                u.re
            )));
        }
        // rho_i after i steps of the depth-m sequence.
        let trace = |m: u64| -> Vec<Complex64> {
            let mut rho = ZERO;
            let mut out = Vec::with_capacity(m as usize + 1);
            out.push(rho);
            for i in 1..=m {
                let w = (u + (m - i + 1) as f64) + rho;
                rho += self.chart.eval(ONE / (u + (m + i) as f64), w);
                out.push(rho);
            }
            out
        };
        let rho_n = trace(n);
        let rho_next = trace(n + 1);
        let bound = 4.0 * a / (r + n as f64).powi(2);
        let mut rows = Vec::with_capacity(n as usize + 1);
        let mut prev_abs = f64::NAN;
        for i in 0..=n {
            let ui = (u + (n - i) as f64) + rho_n[i as usize];
            if !(ui.re.is_finite() && ui.im.is_finite()) {
                return Err(Error::Overflow { index: i });
            }
            let re_margin = ui.re - (r + (n - i) as f64);
            let gap = (rho_next[i as usize + 1] - rho_n[i as usize]).norm();
            let abs = ui.norm();
            let sandwich_ok = i == 0 || (prev_abs - 1.1 < abs && abs < prev_abs - 0.9);
            prev_abs = abs;
            rows.push(LemmaRow {
                i,
                u: ui,
                re_margin,
                gap,
                bound,
                sandwich_ok,
            });
        }
        Ok(OrbitDiagnostics::new(u, n, r, a, rows))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub i: u64,
    pub u: Complex64,
    /// `Re(u_{n,i}) - (R + n - i)`.
    pub re_margin: f64,
    /// `|u_{n+1,i+1} - u_{n,i}|`.
    pub gap: f64,
    /// `4 A / (R + n)^2`.
    pub bound: f64,
    /// `|w| - 11/10 < |g(w)| < |w| - 9/10` for the step into this index.
    pub sandwich_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitDiagnostics {
    pub u: Complex64,
    pub n: u64,
    pub r: f64,
    pub a: f64,
    pub margin_violations: usize,
    pub gap_violations: usize,
    pub sandwich_violations: usize,
    pub rows: Vec<LemmaRow>,
}

impl OrbitDiagnostics {
    fn new(u: Complex64, n: u64, r: f64, a: f64, rows: Vec<LemmaRow>) -> Self {
        Self {
            u,
            n,
            r,
            a,
            margin_violations: rows
                .iter()
                .filter(|x| x.re_margin.is_nan() || x.re_margin <= 0.0)
                .count(),
            gap_violations: rows
                .iter()
                .filter(|x| x.gap.is_nan() || x.gap > x.bound)
                .count(),
            sandwich_violations: rows.iter().filter(|x| !x.sandwich_ok).count(),
            rows,
        }
    }

    pub fn violations(&self) -> usize {
        self.margin_violations + self.gap_violations + self.sandwich_violations
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,re_margin,gap,bound,sandwich_ok\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                r.i, r.re_margin, r.gap, r.bound, r.sandwich_ok
            ));
        }
        out
    }
}

/// Coefficients of `f_t(z) = (z+1)^4 (z - 3z^2 + 7z^3)
/// + t (1 + (z+1)^4 (-1 + 4z - 10z^2 + 20z^3))`, rows by power of `z`.
pub fn example_family_coefficients() -> BivariateFamily {
    const F0: [f64; 8] = [0.0, 1.0, 1.0, 1.0, 14.0, 31.0, 25.0, 7.0];
    const F1: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 35.0, 84.0, 70.0, 20.0];
    let rows: Vec<[f64; 2]> = F0.iter().zip(F1).map(|(&a, b)| [a, b]).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    BivariateFamily::from_real(&refs).expect("static coefficients")
}

/// The example skew product together with its marked point `x0 = -1`.
pub fn example_family() -> (SkewMap, Complex64) {
    let map = SkewMap::new(example_family_coefficients()).expect("example family is special");
    (map, Complex64::new(-1.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::phi_n as phi_n_1d;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Product of two real polynomials given low order first.
    fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    #[test]
    fn example_coefficients_match_expansion() {
        let p4 = [1.0, 4.0, 6.0, 4.0, 1.0];
        let f0 = mul(&p4, &[0.0, 1.0, -3.0, 7.0]);
        let mut f1 = mul(&p4, &[-1.0, 4.0, -10.0, 20.0]);
        f1[0] += 1.0;
        let fam = example_family_coefficients();
        for k in 0..8 {
            assert_eq!(fam.coeff(k, 0).re, f0[k], "z^{k}");
            assert_eq!(fam.coeff(k, 1).re, f1[k], "t z^{k}");
        }
        assert!(fam.is_special().passed);
        let a4 = |t: f64| fam.specialize(c(t, 0.0)).coeff(4);
        assert_eq!(a4(0.0), c(14.0, 0.0));
        assert_eq!(a4(1.0), c(49.0, 0.0));
    }

    #[test]
    fn example_evaluations() {
        let (f, x0) = example_family();
        let fam = f.family();
        assert_eq!(fam.eval(c(0.2, 0.0), x0).unwrap(), c(0.2, 0.0));
        assert_eq!(fam.eval(c(0.7, 0.0), ZERO).unwrap(), ZERO);
        let t = c(0.3, -0.2);
        let z = c(0.1, 0.05);
        assert_eq!(fam.specialize(t).eval(z).unwrap(), fam.eval(t, z).unwrap());
        // f_0 vanishes to order 4 at -1.
        let f0 = f.f0();
        for h in [1e-2, 1e-3] {
            let v = f0.eval(c(-1.0 + h, 0.0)).unwrap().norm();
            assert!(v < 20.0 * h.powi(4), "{v}");
        }
    }

    #[test]
    fn x0_certificate() {
        let (f, x0) = example_family();
        assert!(f.check_special(x0).passed);
        assert!(!f.check_special(c(1.0, 0.0)).passed);
        assert!(!f.check_special(c(0.5, 0.0)).passed);
        let flat = SkewMap::new(BivariateFamily::constant(&PolynomialMap::cubic())).unwrap();
        assert!(!flat.check_special(x0).passed);
        assert!(matches!(
            f.phi_via_x0(c(0.5, 0.0), c(0.05, 0.0), 3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn step_examples() {
        let (f, x0) = example_family();
        let t = c(0.25, 0.1);
        let p = f.step(SkewPoint::new(t, ZERO)).unwrap();
        assert_eq!(p.z, ZERO);
        assert_eq!(p.t, t / (ONE + t));
        assert_eq!(f.step(SkewPoint::new(t, x0)).unwrap().z, t);
        assert!(matches!(
            f.step(SkewPoint::new(c(-1.0, 0.0), ZERO)),
            Err(Error::Pole(_))
        ));

        let flat = SkewMap::new(BivariateFamily::constant(&PolynomialMap::cubic())).unwrap();
        let q = flat.step(SkewPoint::new(c(0.1, 0.0), c(0.1, 0.0))).unwrap();
        assert!((q.t.re - 0.1 / 1.1).abs() < 1e-17);
        assert!((q.z.re - 0.111).abs() < 1e-16);
    }

    #[test]
    fn orbit_examples() {
        let (f, _) = example_family();
        let p = SkewPoint::new(c(0.3, 0.2), c(0.01, 0.0));
        assert_eq!(f.orbit(p, 0).unwrap(), vec![p]);
        let orbit = f.orbit(p, 20).unwrap();
        for (k, q) in orbit.iter().enumerate() {
            assert_eq!(q.t, mobius_n(p.t, k as u64).unwrap());
        }
        assert_eq!(f.iterate(p, 20).unwrap(), *orbit.last().unwrap());
        let eps = f.domain().eps;
        let zero_fiber = f.orbit(SkewPoint::new(c(eps, 0.0), ZERO), 100).unwrap();
        assert!(zero_fiber.iter().all(|q| q.z == ZERO));
    }

    #[test]
    fn reduction_to_one_variable() {
        let cubic = PolynomialMap::cubic();
        let flat = SkewMap::new(BivariateFamily::constant(&cubic)).unwrap();
        let t = c(0.05, 0.0);
        assert_eq!(flat.phi_n(t, 0).unwrap(), t);
        assert_eq!(
            flat.phi_n(t, 500).unwrap(),
            phi_n_1d(&cubic, t, 500).unwrap()
        );
        let mob = SkewMap::new(BivariateFamily::mobius_special()).unwrap();
        assert!((mob.phi_n(t, 1000).unwrap() - t).norm() < 1e-12);
        let lim = mob.phi_limit(c(0.03, 0.0), 1e-10).unwrap();
        assert_eq!(lim.value, c(0.03, 0.0));
    }

    #[test]
    fn via_x0_matches_phi_n() {
        let (f, x0) = example_family();
        let t = c(0.05, 0.0);
        // F(m_n(t), x0) = (m_{n+1}(t), m_n(t)).
        let p = f.step(SkewPoint::new(mobius_n(t, 7).unwrap(), x0)).unwrap();
        assert!((p.t - mobius_n(t, 8).unwrap()).norm() < 1e-12);
        assert!((p.z - mobius_n(t, 7).unwrap()).norm() < 1e-12);
        let a = f.phi_via_x0(x0, t, 200).unwrap();
        let b = f.phi_n(t, 200).unwrap();
        assert!((a - b).norm() <= 1e-13 * b.norm(), "{a} vs {b}");
        assert!((f.phi_via_x0(x0, t, 0).unwrap() - t).norm() < 1e-15);
    }

    #[test]
    fn skew_limit_agrees_with_f0_limit() {
        let (f, _) = example_family();
        let p0 = crate::param::Parametrization::new(f.f0().clone()).unwrap();
        let t = c(f.domain().eps, 0.1 * f.domain().eps);
        let skew = f.phi_limit(t, 1e-12).unwrap();
        let flat = p0.phi_limit(t, 1e-12).unwrap();
        assert!((skew.value - flat.value).norm() < 1e-10);
    }

    #[test]
    fn skew_extension_recomposes() {
        let (f, _) = example_family();
        let r = f.constants().r;
        // Re(1/t) = r - 0.1 lies just outside V_eps and r / 0.9 - r < 3.9.
        assert!(r / 0.9 - r + 0.1 < 4.0);
        let t = ONE / c(r - 0.1, 1.0);
        assert_eq!(f.extension_steps(t).unwrap(), 4);
        let ext = f.phi_extended(t, 1e-10).unwrap();
        assert_eq!(ext.extension_steps, 4);
        let inner = f.phi_limit(mobius_n(t, 4).unwrap(), 1e-12).unwrap().value;
        let manual = f.f0().iterate(inner, 4).unwrap();
        assert!((ext.value - manual).norm() < 1e-8);
        let finite_n = f.phi_extended_n(t, 4, 4000).unwrap();
        assert!((finite_n - ext.value).norm() < 1e-3);
    }

    #[test]
    fn skew_functional_equation_in_domain() {
        let (f, _) = example_family();
        let eps = f.domain().eps;
        let samples = [
            c(eps, 0.0),
            c(eps * 1.2, eps * 0.5),
            c(eps * 0.3, -eps * 0.2),
        ];
        let rep = f.verify_functional_equation(&samples, 1e-5);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn lemma_diagnostics() {
        let (f, _) = example_family();
        let rp = f.constants().r_prime;
        let d = f.diagnose_lemma_bounds(c(2.0 * rp, 0.0), 50).unwrap();
        assert_eq!(d.rows.len(), 51);
        assert!(d.rows.iter().all(|r| r.re_margin > 0.0));
        assert_eq!(d.violations(), 0);
        let d0 = f.diagnose_lemma_bounds(c(2.0 * rp, 0.0), 0).unwrap();
        assert_eq!(d0.rows[0].u, c(2.0 * rp, 0.0));
        assert!(matches!(
            f.diagnose_lemma_bounds(c(rp, 0.0), 3),
            Err(Error::Domain(_))
        ));
        assert!(d.to_csv().starts_with("i,re_margin"));
    }
}
