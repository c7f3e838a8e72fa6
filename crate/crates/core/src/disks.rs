//! Critical parameters and vertical disks on critical fibers.
//!
//! With `phi` the fibered parametrization and `x0` the marked point, a
//! critical parameter is a root `t0` of `phi(t0) = x0`. The disks
//! `D_n = {(m_n(t0), z) : |z - x0| < n^(-3/4)}` sit on the backward base
//! orbit of `t0`; the nesting statement is `F^{n+1}(D_n) ⊂ D_{2n+1}` for all
//! large `n`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_line, log_spaced};
use crate::maps::mobius_n;
use crate::param::{DiffSample, NRange};
use crate::skew::SkewMap;

/// Boundary radii, as fractions of the disk radius, sampled by
/// [`verify_nesting`].
pub const SAMPLE_RADII: [f64; 3] = [0.5, 0.9, 0.999];
/// Relative tolerance between the iterated and the closed-form base.
pub const BASE_RTOL: f64 = 1e-10;

/// Axis-parallel rectangle of parameters, minus a small disk around 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub re_min: f64,
    pub im_min: f64,
    pub re_max: f64,
    pub im_max: f64,
    pub exclude_radius: f64,
}

impl SearchBox {
    pub fn new(re_min: f64, im_min: f64, re_max: f64, im_max: f64) -> Result<Self> {
        let ok = [re_min, im_min, re_max, im_max]
            .iter()
            .all(|x| x.is_finite())
            && re_min < re_max
            && im_min < im_max;
        if !ok {
            return Err(Error::Domain(format!(
                "degenerate box [{re_min}, {re_max}] x [{im_min}, {im_max}]"
            )));
        }
        Ok(Self {
            re_min,
            im_min,
            re_max,
            im_max,
            exclude_radius: 0.05,
        })
    }

    pub fn contains(&self, t: Complex64) -> bool {
        (self.re_min..=self.re_max).contains(&t.re)
            && (self.im_min..=self.im_max).contains(&t.im)
            && t.norm() >= self.exclude_radius
    }

    /// Cell centres of a `k x k` grid, row by row.
    fn grid(&self, k: usize) -> impl Iterator<Item = Complex64> + '_ {
        let dx = (self.re_max - self.re_min) / k as f64;
        let dy = (self.im_max - self.im_min) / k as f64;
        (0..k).flat_map(move |i| {
            (0..k).map(move |j| {
                Complex64::new(
                    self.re_min + (j as f64 + 0.5) * dx,
                    self.im_min + (i as f64 + 0.5) * dy,
                )
            })
        })
    }
}

impl Default for SearchBox {
    fn default() -> Self {
        Self::new(-4.0, -4.0, 4.0, 4.0).expect("static box")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindT0Options {
    /// Cells per side of the scan grid.
    pub grid: usize,
    /// Accuracy of `phi` during the scan.
    pub scan_tol: f64,
    /// Best cells tried as Newton seeds.
    pub candidates: usize,
    pub max_steps: usize,
    /// Whether to insist on the `f_t(x0) = t` certificate.
    pub require_x0: bool,
}

impl Default for FindT0Options {
    fn default() -> Self {
        Self {
            grid: 64,
            scan_tol: 1e-4,
            candidates: 8,
            max_steps: 200,
            require_x0: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootFindResult {
    pub t0: Complex64,
    /// `|phi(t0) - x0|` from the solve.
    pub residual: f64,
    /// The same residual re-evaluated at a hundred times finer accuracy.
    pub certified_residual: f64,
    pub newton_steps: usize,
    pub seed: Complex64,
    pub extension_steps: u64,
}

/// Solves `phi(t) = x0` in `search`: grid scan, then damped Newton with
/// central differences from the best cells.
pub fn find_t0(
    f: &SkewMap,
    x0: Complex64,
    search: &SearchBox,
    tol: f64,
    options: &FindT0Options,
) -> Result<RootFindResult> {
    if options.require_x0 {
        let cert = f.check_special(x0);
        if !cert.passed {
            return Err(Error::Precondition(format!("x0 = {x0}: {cert}")));
        }
    }
    let phi = |t: Complex64, acc: f64| -> Option<Complex64> {
        f.phi_extended(t, acc).ok().map(|r| r.value)
    };

    let cells: Vec<Complex64> = search
        .grid(options.grid)
        .filter(|t| search.contains(*t))
        .collect();
    let mut scored: Vec<(f64, usize)> = cells
        .par_iter()
        .enumerate()
        .filter_map(|(i, &t)| {
            let r = (phi(t, options.scan_tol)? - x0).norm();
            r.is_finite().then_some((r, i))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let acc = tol / 10.0;
    let mut best = (f64::INFINITY, Complex64::new(f64::NAN, f64::NAN));
    for &(_, i) in scored.iter().take(options.candidates) {
        let seed = cells[i];
        let Some((t, residual, steps)) =
            newton(&phi, x0, seed, search, tol, acc, options.max_steps)
        else {
            continue;
        };
        if residual < best.0 {
            best = (residual, t);
        }
        if residual >= tol {
            continue;
        }
        let Some(check) = phi(t, tol / 100.0) else {
            continue;
        };
        let certified_residual = (check - x0).norm();
        if certified_residual < tol {
            return Ok(RootFindResult {
                t0: t,
                residual,
                certified_residual,
                newton_steps: steps,
                seed,
                extension_steps: f.extension_steps(t)?,
            });
        }
    }
    Err(Error::NoRootFound {
        best_residual: best.0,
        best_t: best.1,
    })
}

/// One damped Newton path; returns the final point, its residual and the
/// number of steps taken.
fn newton(
    phi: &impl Fn(Complex64, f64) -> Option<Complex64>,
    x0: Complex64,
    seed: Complex64,
    search: &SearchBox,
    tol: f64,
    acc: f64,
    max_steps: usize,
) -> Option<(Complex64, f64, usize)> {
    let mut t = seed;
    let mut v = phi(t, acc)? - x0;
    let mut residual = v.norm();
    let mut steps = 0;
    while steps < max_steps && residual >= tol {
        steps += 1;
        let h = 1e-6 * t.norm().max(1.0);
        let d = (phi(t + h, acc)? - phi(t - h, acc)?) / (2.0 * h);
        let delta = v / d;
        if !(delta.re.is_finite() && delta.im.is_finite()) {
            break;
        }
        let mut lambda = 1.0;
        let mut moved = false;
        while lambda > 1e-6 {
            let tn = t - delta * lambda;
            if search.contains(tn) {
                if let Some(vn) = phi(tn, acc) {
                    let rn = (vn - x0).norm();
                    if rn < residual {
                        (t, v, residual) = (tn, vn - x0, rn);
                        moved = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Some((t, residual, steps))
}

/// The vertical disk of radius `n^(-3/4)` about `x0` over `m_n(t0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatouDisk {
    pub n: u64,
    pub center_z: Complex64,
    pub radius: f64,
    pub base_t: Complex64,
}

pub fn disk_radius(n: u64) -> f64 {
    (n as f64).powf(-0.75)
}

pub fn make_disk(t0: Complex64, x0: Complex64, n: u64) -> Result<FatouDisk> {
    if n == 0 {
        return Err(Error::Domain("disk index must be positive".into()));
    }
    Ok(FatouDisk {
        n,
        center_z: x0,
        radius: disk_radius(n),
        base_t: mobius_n(t0, n)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestingEntry {
    pub n: u64,
    /// `|pi_2 F^{n+1}(m_n(t0), x0) - x0|`.
    pub center_distance: f64,
    pub max_image_distance: f64,
    /// `(2n + 1)^(-3/4)`.
    pub target_radius: f64,
    pub margin: f64,
    /// Iterated base of the image agrees with `m_{2n+1}(t0)`.
    pub base_ok: bool,
    /// Earliest step at which a sampled orbit overflowed; such an entry has
    /// infinite image distance.
    pub escaped_at: Option<u64>,
    pub error: Option<String>,
}

impl NestingEntry {
    pub fn contained(&self) -> bool {
        self.error.is_none() && self.margin > 0.0
    }

    fn failed(n: u64, e: Error) -> Self {
        Self {
            n,
            center_distance: f64::NAN,
            max_image_distance: f64::NAN,
            target_radius: disk_radius(2 * n + 1),
            margin: f64::NAN,
            base_ok: false,
            escaped_at: None,
            error: Some(e.to_string()),
        }
    }
}

/// Pushes the centre and `3 m_samples` points of `D_n` forward by `n + 1`
/// steps and compares with the radius of `D_{2n+1}`.
pub fn verify_nesting(
    f: &SkewMap,
    t0: Complex64,
    x0: Complex64,
    n: u64,
    m_samples: usize,
) -> NestingEntry {
    match nesting_entry(f, t0, x0, n, m_samples) {
        Ok(e) => e,
        Err(e) => NestingEntry::failed(n, e),
    }
}

fn nesting_entry(
    f: &SkewMap,
    t0: Complex64,
    x0: Complex64,
    n: u64,
    m_samples: usize,
) -> Result<NestingEntry> {
    if m_samples < 16 {
        return Err(Error::Domain(format!(
            "{m_samples} boundary samples, need at least 16"
        )));
    }
    let disk = make_disk(t0, x0, n)?;
    let points: Vec<Complex64> = std::iter::once(x0)
        .chain(SAMPLE_RADII.iter().flat_map(|&s| {
            (0..m_samples).map(move |k| {
                x0 + Complex64::from_polar(s * disk.radius, TAU * k as f64 / m_samples as f64)
            })
        }))
        .collect();
    let images = points
        .par_iter()
        .map(|&z| match f.fiber_image(t0, n, z, n + 1) {
            Ok(w) => Ok(((w - x0).norm(), None)),
            Err(Error::Overflow { index }) => Ok((f64::INFINITY, Some(index))),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<(f64, Option<u64>)>>>()?;
    let escaped_at = images.iter().filter_map(|p| p.1).min();
    let distances: Vec<f64> = images.iter().map(|p| p.0).collect();

    let mut base = disk.base_t;
    for _ in 0..=n {
        base = mobius_n(base, 1)?;
    }
    let expected = mobius_n(t0, 2 * n + 1)?;
    let base_ok = (base - expected).norm() <= BASE_RTOL * expected.norm();

    let target_radius = disk_radius(2 * n + 1);
    let max_image_distance = distances.iter().copied().fold(0.0, f64::max);
    Ok(NestingEntry {
        n,
        center_distance: distances[0],
        max_image_distance,
        target_radius,
        margin: target_radius - max_image_distance,
        base_ok,
        escaped_at,
        error: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestingReport {
    pub entries: Vec<NestingEntry>,
    /// Least tested `n` from which every tested margin is positive.
    pub threshold_n0: Option<u64>,
    /// No negative margin follows a positive one.
    pub persistent: bool,
    /// `margin / target_radius` never decreases from the threshold on.
    pub non_shrinking: bool,
    /// `sup n |phi_n(t0) - x0|` from the threshold on, or over the whole
    /// range when there is none.
    pub center_sup: f64,
    pub samples_per_disk: usize,
    pub error: Option<String>,
}

impl NestingReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.threshold_n0.is_some() && self.persistent && self.non_shrinking
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,max_image_distance,target_radius,margin\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                e.n, e.max_image_distance, e.target_radius, e.margin
            ));
        }
        out
    }
}

pub fn nesting_sweep(
    f: &SkewMap,
    t0: Complex64,
    x0: Complex64,
    n_min: u64,
    n_max: u64,
    m_samples: usize,
) -> NestingReport {
    let samples_per_disk = 1 + SAMPLE_RADII.len() * m_samples;
    if n_min == 0 || n_min > n_max {
        return NestingReport {
            entries: Vec::new(),
            threshold_n0: None,
            persistent: false,
            non_shrinking: false,
            center_sup: f64::NAN,
            samples_per_disk,
            error: Some(format!("empty range [{n_min}, {n_max}]")),
        };
    }
    let entries: Vec<NestingEntry> = (n_min..=n_max)
        .into_par_iter()
        .map(|n| verify_nesting(f, t0, x0, n, m_samples))
        .collect();

    let first_tail = entries
        .iter()
        .rposition(|e| !e.contained())
        .map_or(0, |i| i + 1);
    let threshold_n0 = entries.get(first_tail).map(|e| e.n);
    let first_positive = entries.iter().position(NestingEntry::contained);
    let persistent = first_positive.is_some() && first_positive == Some(first_tail);
    let non_shrinking = threshold_n0.is_some()
        && entries[first_tail..]
            .windows(2)
            .all(|w| w[1].margin / w[1].target_radius >= w[0].margin / w[0].target_radius);
    let center_sup = entries[if threshold_n0.is_some() {
        first_tail
    } else {
        0
    }..]
        .iter()
        .map(|e| e.n as f64 * e.center_distance)
        .fold(0.0, f64::max);
    let error = entries
        .iter()
        .find_map(|e| e.error.as_ref().map(|m| format!("n = {}: {m}", e.n)));
    NestingReport {
        entries,
        threshold_n0,
        persistent,
        non_shrinking,
        center_sup,
        samples_per_disk,
        error,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub link: usize,
    pub fiber_index: u64,
    /// Cumulative iterates `l` applied to the starting centre.
    pub iterates: u64,
    pub base: Complex64,
    pub base_abs: f64,
    pub center: Complex64,
    pub fiber_distance: f64,
    /// Distance of `(base, center)` to `(0, x0)`.
    pub distance: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub links: Vec<ChainLink>,
    /// Link whose image centre overflowed, ending the chain early.
    pub escaped_after: Option<usize>,
    pub base_decreasing: bool,
    /// Every image centre after the first lies in the disk it landed on.
    pub within_radii: bool,
    pub fiber_nonincreasing: bool,
}

impl ChainReport {
    pub fn passed(&self) -> bool {
        self.escaped_after.is_none()
            && self.base_decreasing
            && self.within_radii
            && self.fiber_nonincreasing
    }
}

/// Follows the centre of `D_n` along `n -> 2n + 1 -> 4n + 3 -> ...`.
pub fn disk_orbit_limit(
    f: &SkewMap,
    t0: Complex64,
    x0: Complex64,
    n_start: u64,
    chain_length: usize,
) -> Result<ChainReport> {
    if n_start == 0 {
        return Err(Error::Domain("chain must start at a positive index".into()));
    }
    let mut links = Vec::with_capacity(chain_length + 1);
    let (mut n, mut z, mut l) = (n_start, x0, 0u64);
    let mut escaped_after = None;
    for link in 0..=chain_length {
        let base = mobius_n(t0, n)?;
        let fiber_distance = (z - x0).norm();
        links.push(ChainLink {
            link,
            fiber_index: n,
            iterates: l,
            base,
            base_abs: base.norm(),
            center: z,
            fiber_distance,
            distance: base.norm().hypot(fiber_distance),
            radius: disk_radius(n),
        });
        if link < chain_length {
            z = match f.fiber_image(t0, n, z, n + 1) {
                Ok(w) => w,
                Err(Error::Overflow { .. }) => {
                    escaped_after = Some(link);
                    break;
                }
                Err(e) => return Err(e),
            };
            l += n + 1;
            n = 2 * n + 1;
        }
    }
    let base_decreasing = links.windows(2).all(|w| w[1].base_abs < w[0].base_abs);
    let within_radii = links.iter().skip(1).all(|c| c.fiber_distance < c.radius);
    let fiber_nonincreasing = links
        .iter()
        .skip(1)
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1].fiber_distance <= w[0].fiber_distance);
    Ok(ChainReport {
        links,
        escaped_after,
        base_decreasing,
        within_radii,
        fiber_nonincreasing,
    })
}

/// Growth of `|pi_2 F^n(t, w)|` along the invariant fiber point `z = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionFit {
    /// Fitted `p` in `|pi_2 F^n(t, w)| ~ C n^p |w|`; absent when `w = 0`.
    pub exponent: Option<f64>,
    pub constant: Option<f64>,
    /// `max_n |pi_2 F^n(t, w)| / (n^2 |w|)`.
    pub sup_ratio: f64,
    pub samples: Vec<DiffSample>,
}

pub fn distortion_fit(
    f: &SkewMap,
    t: Complex64,
    w: Complex64,
    range: NRange,
) -> Result<DistortionFit> {
    if !f.domain().contains(t) {
        return Err(Error::Domain(format!("t = {t} outside V_eps")));
    }
    if w.norm() * (range.max as f64).powi(3) >= 1.0 {
        return Err(Error::Precondition(format!(
            "|w| = {} not below n^-3 for n = {}",
            w.norm(),
            range.max
        )));
    }
    let ns = log_spaced(range.min, range.max, 16);
    let samples = ns
        .par_iter()
        .map(|&n| {
            Ok(DiffSample {
                n,
                diff: f.fiber_image(t, 0, w, n)?.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if w.norm() == 0.0 {
        return Ok(DistortionFit {
            exponent: None,
            constant: None,
            sup_ratio: 0.0,
            samples,
        });
    }
    let points: Vec<_> = samples
        .iter()
        .map(|s| ((s.n as f64).ln(), (s.diff / w.norm()).ln()))
        .collect();
    let line = fit_line(&points)?;
    let sup_ratio = samples
        .iter()
        .map(|s| s.diff / ((s.n as f64).powi(2) * w.norm()))
        .fold(0.0, f64::max);
    Ok(DistortionFit {
        exponent: Some(line.slope),
        constant: Some(line.intercept.exp()),
        sup_ratio,
        samples,
    })
}

/// Fit of the centre distance `|phi_n(t0) - x0| ~ C n^(-p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterDecay {
    pub exponent: f64,
    pub constant: f64,
    pub samples: Vec<DiffSample>,
    /// Least `n` at which the fitted centre distance drops below
    /// `(2n + 1)^(-3/4)`; a lower bound for any nesting threshold.
    pub predicted_threshold: Option<f64>,
}

pub fn center_decay(f: &SkewMap, t0: Complex64, x0: Complex64, ns: &[u64]) -> Result<CenterDecay> {
    let samples = ns
        .par_iter()
        .map(|&n| {
            Ok(DiffSample {
                n,
                diff: (f.phi_via_x0(x0, t0, n)? - x0).norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<_> = samples
        .iter()
        .filter(|s| s.diff > 0.0)
        .map(|s| ((s.n as f64).ln(), s.diff.ln()))
        .collect();
    let line = fit_line(&points)?;
    let (p, c) = (-line.slope, line.intercept.exp());
    // C n^-p < (2n+1)^-3/4 has a last crossing only if p > 3/4.
    let gap = |n: f64| c * n.powf(-p) - (2.0 * n + 1.0).powf(-0.75);
    let predicted_threshold = (p > 0.75).then(|| {
        let mut hi = 1.0f64;
        while gap(hi) >= 0.0 && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = hi / 2.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    });
    Ok(CenterDecay {
        exponent: p,
        constant: c,
        samples,
        predicted_threshold,
    })
}

/// Smallest `|phi_n(s) - phi_n(t0)| / |s - t0|` over `samples` points `s`
/// on the circle of radius `delta` about `t0`.
pub fn fattening_lower_bound(
    f: &SkewMap,
    t0: Complex64,
    n: u64,
    delta: f64,
    samples: usize,
) -> Result<f64> {
    let center = f.phi_n(t0, n)?;
    (0..samples.max(1))
        .into_par_iter()
        .map(|k| {
            let s = t0 + Complex64::from_polar(delta, TAU * k as f64 / samples.max(1) as f64);
            Ok((f.phi_n(s, n)? - center).norm() / delta)
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
}
