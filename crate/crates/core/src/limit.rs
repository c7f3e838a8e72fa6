//! Convergence driver shared by the one-variable and skew parametrizations.
//!
//! Both limits are computed in the chart at infinity as `1 / (U + rho_n)`,
//! where `rho_n` is the accumulated remainder along the orbit. The driver
//! evaluates `rho_n` at doubling checkpoints and stops by either of two
//! rules, whichever is met first:
//!
//! * the measured-constant rule: `C` is estimated from the last ten one-step
//!   differences `|phi_{n+1} - phi_n|` scaled by the known decay shape,
//!   multiplied by a safety factor and summed over the tail;
//! * the extrapolated rule: `rho_n` is fitted by a short asymptotic
//!   expansion in `1/n` over the last checkpoints and the safety factor times
//!   the change between consecutive extrapolants must be below tolerance.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{DiffSample, ParamResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    /// Largest `n` tried before giving up.
    pub max_n: u64,
    /// First checkpoint; later ones double.
    pub start_n: u64,
    /// Enables the extrapolated stopping rule.
    pub accelerate: bool,
    /// Multiplier applied to every measured constant.
    pub safety: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            max_n: 10_000_000,
            start_n: 32,
            accelerate: true,
            safety: 4.0,
        }
    }
}

/// Number of one-step differences feeding the constant estimate.
const WINDOW: usize = 10;
/// Most checkpoints used by one extrapolation.
const MAX_TERMS: usize = 6;
/// Levels without a halving of the extrapolated error before declaring a
/// noise floor.
const STALL_LEVELS: usize = 4;
const STALL_MIN_N: u64 = 4096;

/// Decay shape of the one-step differences.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Shape {
    /// `|phi_{n+1} - phi_n| <= C |z|^2 / (1 + n |z|)^2`.
    OneDim { z_abs: f64 },
    /// `|phi_{n+1} - phi_n| <= C / (1 + n eps)^2`.
    Skew { eps: f64 },
}

impl Shape {
    fn constant(self, diff: f64, n: u64) -> f64 {
        let n = n as f64;
        match self {
            Shape::OneDim { z_abs } => diff * (1.0 + n * z_abs).powi(2) / (z_abs * z_abs),
            Shape::Skew { eps } => diff * (1.0 + n * eps).powi(2),
        }
    }

    /// Sum of the bound over all indices `>= n`.
    fn tail(self, c: f64, n: u64) -> f64 {
        let n = n as f64;
        match self {
            Shape::OneDim { z_abs } => c * z_abs / (1.0 + n * z_abs),
            Shape::Skew { eps } => c / (eps * (1.0 + n * eps)),
        }
    }
}

/// Asymptotic expansion used for extrapolating `rho_n`.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Basis {
    /// `rho + c_1/n + c_2/n^2 + ...`
    Powers,
    /// `rho + c_1/n + c_2 ln n/n^2 + c_3/n^2 + c_4 ln n/n^3 + ...`; the
    /// logarithms come from the drift of the fiber parameter.
    PowersWithLog,
}

impl Basis {
    fn row(self, n: u64, n_ref: u64, terms: usize) -> impl Iterator<Item = f64> {
        let x = n_ref as f64 / n as f64;
        let l = (n as f64).ln() / (n_ref as f64).ln();
        (0..terms).map(move |k| match (self, k) {
            (_, 0) => 1.0,
            (Basis::Powers, k) => x.powi(k as i32),
            (Basis::PowersWithLog, 1) => x,
            (Basis::PowersWithLog, k) => {
                let p = (k / 2 + 1) as i32;
                if k % 2 == 0 {
                    x.powi(p) * l
                } else {
                    x.powi(p)
                }
            }
        })
    }
}

/// Constant term of the expansion fitted exactly through `points`.
fn extrapolate(points: &[(u64, Complex64)], basis: Basis) -> Option<Complex64> {
    let k = points.len();
    let n_ref = points.last()?.0;
    let a = DMatrix::from_row_iterator(
        k,
        k,
        points.iter().flat_map(|&(n, _)| basis.row(n, n_ref, k)),
    );
    let b = DMatrix::from_row_iterator(k, 2, points.iter().flat_map(|&(_, r)| [r.re, r.im]));
    let x = a.lu().solve(&b)?;
    let v = Complex64::new(x[(0, 0)], x[(0, 1)]);
    (v.re.is_finite() && v.im.is_finite()).then_some(v)
}

pub(crate) struct Engine {
    pub options: LimitOptions,
    pub shape: Shape,
    pub basis: Basis,
}

impl Engine {
    /// Runs the driver. `rho(n)` is the chart remainder after `n` steps and
    /// `value(rho)` maps it back to the fiber coordinate.
    pub fn run(
        &self,
        tol: f64,
        rho: impl Fn(u64) -> Result<Complex64>,
        value: impl Fn(Complex64) -> Result<Complex64>,
    ) -> Result<ParamResult> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        let opts = &self.options;
        let mut history: Vec<DiffSample> = Vec::new();
        let mut checkpoints: Vec<(u64, Complex64)> = Vec::new();
        let mut prev_extrapolant: Option<Complex64> = None;
        let mut best = f64::INFINITY;
        let mut since_improvement = 0usize;
        let mut n = opts.start_n.max(1);
        let mut last_n = 0;

        while n <= opts.max_n {
            let r = rho(n)?;
            let v = value(r)?;
            let v_next = value(rho(n + 1)?)?;
            let diff = (v_next - v).norm();
            history.push(DiffSample { n, diff });
            checkpoints.push((n, r));
            last_n = n;

            let c_hat = opts.safety
                * history
                    .iter()
                    .rev()
                    .take(WINDOW)
                    .map(|s| self.shape.constant(s.diff, s.n))
                    .fold(0.0, f64::max);
            let tail = self.shape.tail(c_hat, n);
            best = best.min(tail);
            if tail <= tol {
                return Ok(ParamResult {
                    value: v,
                    n_used: n,
                    tail_bound: tail,
                    extension_steps: 0,
                    extrapolated: false,
                    history,
                });
            }

            if opts.accelerate && checkpoints.len() >= 3 {
                let from = checkpoints.len().saturating_sub(MAX_TERMS);
                if let Some(e) = extrapolate(&checkpoints[from..], self.basis) {
                    let ve = value(e)?;
                    if let Some(prev) = prev_extrapolant {
                        // No estimate is better than the rounding of the value.
                        let err = opts.safety * (ve - prev).norm().max(f64::EPSILON * ve.norm());
                        if err <= tol {
                            return Ok(ParamResult {
                                value: ve,
                                n_used: n,
                                tail_bound: err,
                                extension_steps: 0,
                                extrapolated: true,
                                history,
                            });
                        }
                        if err <= 0.5 * best {
                            since_improvement = 0;
                        } else {
                            since_improvement += 1;
                        }
                        best = best.min(err);
                        // Give up at a noise floor unless the measured rule
                        // alone could still get there.
                        let projected = n as f64 * tail / tol;
                        if since_improvement >= STALL_LEVELS
                            && n >= STALL_MIN_N
                            && projected > opts.max_n as f64
                        {
                            return Err(Error::NoConvergence {
                                n_reached: n,
                                best_estimate: best,
                            });
                        }
                    }
                    prev_extrapolant = Some(ve);
                }
            }
            n = n.saturating_mul(2);
        }
        Err(Error::NoConvergence {
            n_reached: last_n,
            best_estimate: best,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_recovers_polynomial_in_inverse_n() {
        let f = |n: u64| {
            let x = 1.0 / n as f64;
            Complex64::new(2.0 + 3.0 * x - 5.0 * x * x, -1.0 + x * x * x)
        };
        let pts: Vec<_> = [32u64, 64, 128, 256].iter().map(|&n| (n, f(n))).collect();
        let e = extrapolate(&pts, Basis::Powers).unwrap();
        assert!((e - Complex64::new(2.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn log_basis_handles_log_terms() {
        let f = |n: u64| {
            let nf = n as f64;
            Complex64::new(
                1.0 + 2.0 / nf + 3.0 * nf.ln() / (nf * nf) - 1.0 / (nf * nf),
                0.0,
            )
        };
        let pts: Vec<_> = [64u64, 128, 256, 512].iter().map(|&n| (n, f(n))).collect();
        let e = extrapolate(&pts, Basis::PowersWithLog).unwrap();
        assert!((e.re - 1.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn measured_rule_stops_on_geometric_tail() {
        // rho_n = 1/n gives phi_n = 1/(10 + 1/n); both rules must agree.
        let engine = Engine {
            options: LimitOptions {
                accelerate: false,
                ..Default::default()
            },
            shape: Shape::OneDim { z_abs: 0.1 },
            basis: Basis::Powers,
        };
        let res = engine
            .run(
                1e-6,
                |n| Ok(Complex64::new(1.0 / n as f64, 0.0)),
                |r| Ok(1.0 / (Complex64::new(10.0, 0.0) + r)),
            )
            .unwrap();
        assert!(!res.extrapolated);
        assert!((res.value.re - 0.1).abs() <= res.tail_bound);
        assert!(res.tail_bound <= 1e-6);
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let engine = Engine {
            options: LimitOptions::default(),
            shape: Shape::Skew { eps: 0.1 },
            basis: Basis::Powers,
        };
        assert!(engine
            .run(0.0, |_| Ok(Complex64::new(0.0, 0.0)), Ok)
            .is_err());
    }
}
