//! The five subcommands. Each returns the exit code after writing its
//! report files.

use num_complex::Complex64;
use parabolic_core::disks::{
    center_decay, disk_orbit_limit, find_t0, nesting_sweep, CenterDecay, ChainReport,
    FindT0Options, NestingReport, RootFindResult, SearchBox,
};
use parabolic_core::fit::log_spaced;
use parabolic_core::mapfile::{self, MapSpec};
use parabolic_core::maps::mobius_shift;
use parabolic_core::param::ResidualReport;
use parabolic_core::skew::OrbitDiagnostics;
use parabolic_core::{
    BivariateFamily, Certificate, ChartConstants, DecayFit, Error as CoreError, NRange,
    ParamResult, Parametrization, PolynomialMap, SkewMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CheckArgs, DisksArgs, Mode, ParamArgs, RenderArgs, Suite, VerifyArgs};
use crate::error::{CliError, EXIT_FAIL, EXIT_NO_ROOT, EXIT_PASS};
use crate::render::{self, PetalStats};
use crate::report::{sha256_hex, write_atomic, MapSource, Report};

/// Default pass threshold of the functional-equation suite.
pub const FEQ_TOL: f64 = 1e-5;
/// Default pass threshold of the Abel suite.
pub const ABEL_TOL: f64 = 1e-6;
pub const ABEL_N: u64 = 10_000;
pub const LEMMA_N: u64 = 200;
pub const DECAY_RANGE: (u64, u64) = (100, 5000);
/// Accepted band of the fitted decay exponent.
pub const DECAY_EXPONENT: (f64, f64) = (1.8, 2.2);
/// Largest accepted ratio between fitted model and measured difference.
pub const DECAY_RATIO: f64 = 10.0;
/// Rays and points per ray of the param rendering.
pub const RAYS: usize = 15;
pub const RAY_POINTS: usize = 256;

/// Exit code and JSON report of one command.
pub struct Outcome {
    pub code: u8,
    pub json: String,
}

struct Loaded {
    source: MapSource,
    spec: MapSpec,
    x0: Option<Complex64>,
}

fn load(path: &std::path::Path) -> Result<Loaded, CliError> {
    let (source, text) = MapSource::read(path)?;
    let file = mapfile::parse(&text)?;
    Ok(Loaded {
        source,
        spec: file.spec,
        x0: file.x0,
    })
}

/// The one-variable map behind a file: the map itself or the invariant
/// fiber map of a family.
fn fiber_map(spec: &MapSpec) -> Result<PolynomialMap, CliError> {
    match spec {
        MapSpec::Map(m) => Ok(m.clone()),
        MapSpec::Family(fam) => Ok(SkewMap::new(fam.clone())?.f0().clone()),
    }
}

fn skew(spec: &MapSpec) -> Result<SkewMap, CliError> {
    match spec {
        MapSpec::Map(m) => Ok(SkewMap::new(BivariateFamily::constant(m))?),
        MapSpec::Family(fam) => Ok(SkewMap::new(fam.clone())?),
    }
}

fn emit<C: Serialize, R: Serialize>(
    out: &std::path::Path,
    name: &str,
    report: &Report<'_, C, R>,
    extra: &[(String, Vec<u8>)],
) -> Result<String, CliError> {
    let json = report.to_json()?;
    for (file, bytes) in extra {
        write_atomic(out, file, bytes)?;
    }
    write_atomic(out, &format!("{name}.json"), json.as_bytes())?;
    Ok(json)
}

fn code(passed: bool) -> u8 {
    if passed {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

#[derive(Serialize)]
struct CheckResult {
    kind: &'static str,
    special: Certificate,
    x0: Option<Complex64>,
    x0_certificate: Option<Certificate>,
}

pub fn check(args: &CheckArgs) -> Result<Outcome, CliError> {
    let loaded = load(&args.common.map)?;
    let x0 = args.x0.or(loaded.x0);
    let result = match &loaded.spec {
        MapSpec::Map(m) => CheckResult {
            kind: "map",
            special: m.is_special(),
            x0,
            x0_certificate: None,
        },
        MapSpec::Family(fam) => {
            let special = fam.is_special();
            let x0_certificate = match x0 {
                Some(x0) if special.passed => Some(SkewMap::new(fam.clone())?.check_special(x0)),
                _ => None,
            };
            CheckResult {
                kind: "family",
                special,
                x0,
                x0_certificate,
            }
        }
    };
    let passed = result.special.passed && result.x0_certificate.as_ref().is_none_or(|c| c.passed);
    let report = Report {
        command: "check",
        map: &loaded.source,
        config: args,
        passed,
        result,
    };
    let json = emit(&args.common.out, "check", &report, &[])?;
    Ok(Outcome {
        code: code(passed),
        json,
    })
}

#[derive(Serialize)]
struct ParamOutput {
    phi: Complex64,
    n_used: u64,
    tail_bound: f64,
    #[serde(rename = "N")]
    extension_steps: u64,
    extrapolated: bool,
    /// `|phi(t/(1-t)) - f(phi(t))| / max(1, |f(phi(t))|)`.
    feq_residual: Option<f64>,
    constants: ChartConstants,
}

pub fn param(args: &ParamArgs) -> Result<Outcome, CliError> {
    let loaded = load(&args.common.map)?;
    let (t, tol) = (args.t, args.tol);
    let (res, feq_residual, constants) = match &loaded.spec {
        MapSpec::Map(m) => {
            let p = Parametrization::new(m.clone())?;
            let res = p.phi_extended(t, tol)?;
            let feq = feq_residual(t, &res, |s| p.phi_extended(s, tol), |z| m.eval(z));
            (res, feq, *p.constants())
        }
        MapSpec::Family(fam) => {
            let f = SkewMap::new(fam.clone())?;
            let res = f.phi_extended(t, tol)?;
            let feq = feq_residual(t, &res, |s| f.phi_extended(s, tol), |z| f.f0().eval(z));
            (res, feq, *f.constants())
        }
    };
    let result = ParamOutput {
        phi: res.value,
        n_used: res.n_used,
        tail_bound: res.tail_bound,
        extension_steps: res.extension_steps,
        extrapolated: res.extrapolated,
        feq_residual,
        constants,
    };
    let report = Report {
        command: "param",
        map: &loaded.source,
        config: args,
        passed: true,
        result,
    };
    let json = emit(&args.common.out, "param", &report, &[])?;
    Ok(Outcome {
        code: EXIT_PASS,
        json,
    })
}

fn feq_residual(
    t: Complex64,
    at_t: &ParamResult,
    phi: impl Fn(Complex64) -> parabolic_core::Result<ParamResult>,
    f: impl Fn(Complex64) -> parabolic_core::Result<Complex64>,
) -> Option<f64> {
    let lhs = phi(mobius_shift(t, -1.0).ok()?).ok()?.value;
    let rhs = f(at_t.value).ok()?;
    Some((lhs - rhs).norm() / rhs.norm().max(1.0))
}

/// `count` seeded points of `V_eps`, uniform in the disk of radius
/// `0.95 eps` about `eps`.
pub fn domain_samples(eps: f64, count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = 0.95 * eps * rng.random::<f64>().sqrt();
            let a = std::f64::consts::TAU * rng.random::<f64>();
            Complex64::new(eps, 0.0) + Complex64::from_polar(r, a)
        })
        .collect()
}

/// `count` seeded points with `Re(u)` in `(R', 10 R']` and `|Im(u)| <= R'`.
pub fn abel_samples(r_prime: f64, count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let re = r_prime * (1.0 + 9.0 * (1.0 - rng.random::<f64>()));
            let im = r_prime * (2.0 * rng.random::<f64>() - 1.0);
            Complex64::new(re, im)
        })
        .collect()
}

/// Sixteen points with `Re(u)` spread over `[R', 4 R']` and small imaginary
/// parts.
pub fn lemma_grid(r_prime: f64) -> Vec<Complex64> {
    [1.75, 2.5, 3.25, 4.0]
        .iter()
        .flat_map(|&x| {
            [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0]
                .iter()
                .map(move |&y| Complex64::new(x * r_prime, y))
        })
        .collect()
}

#[derive(Serialize)]
#[serde(tag = "suite", rename_all = "lowercase")]
enum VerifyResult {
    Feq(ResidualReport),
    Lemmas {
        n: u64,
        violations: usize,
        orbits: Vec<OrbitDiagnostics>,
    },
    Abel {
        n: u64,
        tol: f64,
        max_residual: f64,
        samples: Vec<AbelSample>,
    },
    Decay {
        status: String,
        z: Complex64,
        worst_ratio: Option<f64>,
        fit: Option<DecayFit>,
    },
}

#[derive(Serialize)]
struct AbelSample {
    u: Complex64,
    residual: Option<f64>,
    error: Option<String>,
}

pub fn verify(args: &VerifyArgs) -> Result<Outcome, CliError> {
    let loaded = load(&args.common.map)?;
    let seed = args.common.seed;
    let mut extra = Vec::new();
    let (passed, result) = match args.suite {
        Suite::Feq => {
            let tol = args.tol.unwrap_or(FEQ_TOL);
            let rep = match &loaded.spec {
                MapSpec::Map(m) => {
                    let eps = Parametrization::new(m.clone())?.domain().eps;
                    parabolic_core::param::verify_functional_equation(
                        m,
                        &domain_samples(eps, args.samples, seed),
                        tol,
                    )
                }
                MapSpec::Family(fam) => {
                    let f = SkewMap::new(fam.clone())?;
                    f.verify_functional_equation(
                        &domain_samples(f.domain().eps, args.samples, seed),
                        tol,
                    )
                }
            };
            (rep.passed, VerifyResult::Feq(rep))
        }
        Suite::Lemmas => {
            let f = skew(&loaded.spec)?;
            let n = args.n_max.unwrap_or(LEMMA_N);
            let orbits = lemma_grid(f.constants().r_prime)
                .par_iter()
                .map(|&u| f.diagnose_lemma_bounds(u, n))
                .collect::<parabolic_core::Result<Vec<_>>>()?;
            let violations = orbits.iter().map(OrbitDiagnostics::violations).sum();
            let mut csv = String::from("u_re,u_im,i,re_margin,gap,bound,sandwich_ok\n");
            for o in &orbits {
                for r in &o.rows {
                    csv.push_str(&format!(
                        "{},{},{},{:e},{:e},{:e},{}\n",
                        o.u.re, o.u.im, r.i, r.re_margin, r.gap, r.bound, r.sandwich_ok
                    ));
                }
            }
            extra.push(("verify-lemmas.csv".to_string(), csv.into_bytes()));
            (
                violations == 0,
                VerifyResult::Lemmas {
                    n,
                    violations,
                    orbits,
                },
            )
        }
        Suite::Abel => {
            let p = Parametrization::new(fiber_map(&loaded.spec)?)?;
            let n = args.n_max.unwrap_or(ABEL_N);
            let tol = args.tol.unwrap_or(ABEL_TOL);
            let samples: Vec<AbelSample> = abel_samples(p.constants().r_prime, args.samples, seed)
                .par_iter()
                .map(|&u| match p.abel_residual(u, n) {
                    Ok(r) => AbelSample {
                        u,
                        residual: Some(r),
                        error: None,
                    },
                    Err(e) => AbelSample {
                        u,
                        residual: None,
                        error: Some(e.to_string()),
                    },
                })
                .collect();
            let max_residual = samples
                .iter()
                .filter_map(|s| s.residual)
                .fold(0.0, f64::max);
            let passed =
                !samples.is_empty() && samples.iter().all(|s| s.residual.is_some_and(|r| r < tol));
            (
                passed,
                VerifyResult::Abel {
                    n,
                    tol,
                    max_residual,
                    samples,
                },
            )
        }
        Suite::Decay => {
            let p = Parametrization::new(fiber_map(&loaded.spec)?)?;
            let z = args.t.unwrap_or(Complex64::new(0.8 * p.domain().eps, 0.0));
            let range = NRange::new(
                args.n_min.unwrap_or(DECAY_RANGE.0),
                args.n_max.unwrap_or(DECAY_RANGE.1),
            )?;
            match p.fit_decay(z, range) {
                Ok(fit) => {
                    let ratio = fit.worst_ratio();
                    let passed = (DECAY_EXPONENT.0..=DECAY_EXPONENT.1).contains(&fit.exponent)
                        && ratio <= DECAY_RATIO;
                    extra.push(("verify-decay.csv".to_string(), fit.to_csv().into_bytes()));
                    let status = if passed { "fitted" } else { "out of band" };
                    (
                        passed,
                        VerifyResult::Decay {
                            status: status.into(),
                            z,
                            worst_ratio: Some(ratio),
                            fit: Some(fit),
                        },
                    )
                }
                Err(CoreError::InsufficientData(msg)) => (
                    true,
                    VerifyResult::Decay {
                        status: format!("degenerate: differences ≈ 0 ({msg})"),
                        z,
                        worst_ratio: None,
                        fit: None,
                    },
                ),
                Err(e) => return Err(e.into()),
            }
        }
    };
    let name = match args.suite {
        Suite::Feq => "verify-feq",
        Suite::Lemmas => "verify-lemmas",
        Suite::Abel => "verify-abel",
        Suite::Decay => "verify-decay",
    };
    let report = Report {
        command: "verify",
        map: &loaded.source,
        config: args,
        passed,
        result,
    };
    let json = emit(&args.common.out, name, &report, &extra)?;
    Ok(Outcome {
        code: code(passed),
        json,
    })
}

#[derive(Serialize)]
struct DisksResult {
    x0: Complex64,
    root: Option<RootFindResult>,
    root_error: Option<String>,
    nesting: Option<NestingReport>,
    center_decay: Option<CenterDecay>,
    chain: Option<ChainReport>,
}

pub fn disks(args: &DisksArgs) -> Result<Outcome, CliError> {
    let loaded = load(&args.common.map)?;
    let MapSpec::Family(fam) = &loaded.spec else {
        return Err(CliError::Input("disks needs a family map file".into()));
    };
    let x0 = args.x0.or(loaded.x0).ok_or_else(|| {
        CliError::Input("no marked point: pass --x0 or add \"x0\" to the map file".into())
    })?;
    if args.n_min == 0 || args.n_min > args.n_max {
        return Err(CliError::Input(format!(
            "empty range [{}, {}]",
            args.n_min, args.n_max
        )));
    }
    if args.samples < 16 {
        return Err(CliError::Input(
            "at least 16 boundary samples are needed".into(),
        ));
    }
    let f = SkewMap::new(fam.clone())?;
    let b = args.search_box;
    let search = SearchBox::new(b.x0, b.y0, b.x1, b.y1)?;
    let mut result = DisksResult {
        x0,
        root: None,
        root_error: None,
        nesting: None,
        center_decay: None,
        chain: None,
    };
    let exit = match find_t0(&f, x0, &search, args.tol, &FindT0Options::default()) {
        Err(e @ CoreError::NoRootFound { .. }) => {
            result.root_error = Some(e.to_string());
            EXIT_NO_ROOT
        }
        Err(e) => return Err(e.into()),
        Ok(root) => {
            let t0 = root.t0;
            let nesting = nesting_sweep(&f, t0, x0, args.n_min, args.n_max, args.samples);
            let ns = log_spaced(16 * args.n_max, 4096 * args.n_max, 8);
            result.center_decay = center_decay(&f, t0, x0, &ns).ok();
            if let Some(n0) = nesting.threshold_n0 {
                result.chain = disk_orbit_limit(&f, t0, x0, n0, args.chain).ok();
            }
            let passed = nesting.passed();
            result.root = Some(root);
            result.nesting = Some(nesting);
            code(passed)
        }
    };
    let mut extra = Vec::new();
    if let Some(n) = &result.nesting {
        extra.push(("disks.csv".to_string(), n.to_csv().into_bytes()));
    }
    let report = Report {
        command: "disks",
        map: &loaded.source,
        config: args,
        passed: exit == EXIT_PASS,
        result,
    };
    let json = emit(&args.common.out, "disks", &report, &extra)?;
    Ok(Outcome { code: exit, json })
}

#[derive(Serialize)]
struct RenderResult {
    width: usize,
    height: usize,
    enter_radius: f64,
    escape_radius: f64,
    max_count: u32,
    petals: PetalStats,
    curve_points: Option<usize>,
    curve_drawn: Option<usize>,
    ppm_sha256: String,
}

pub fn render(args: &RenderArgs) -> Result<Outcome, CliError> {
    let loaded = load(&args.common.map)?;
    let map = fiber_map(&loaded.spec)?;
    let step = |z| map.eval(z).ok();
    let fates = render::petal_fates(&step, &args.viewport, args.res);
    let (mut image, petals) = render::petal_image(&fates, &args.viewport, args.res);

    let (mut curve_points, mut curve_drawn) = (None, None);
    if args.mode == Mode::Param {
        let points: Vec<Complex64> = match &loaded.spec {
            MapSpec::Map(m) => {
                let p = Parametrization::new(m.clone())?;
                render::ray_samples(p.domain().eps, RAYS, RAY_POINTS)
                    .par_iter()
                    .filter_map(|&t| p.phi_limit(t, args.tol).ok().map(|r| r.value))
                    .collect()
            }
            MapSpec::Family(fam) => {
                let f = SkewMap::new(fam.clone())?;
                render::ray_samples(f.domain().eps, RAYS, RAY_POINTS)
                    .par_iter()
                    .filter_map(|&t| f.phi_limit(t, args.tol).ok().map(|r| r.value))
                    .collect()
            }
        };
        curve_drawn = Some(render::overlay(&mut image, &points));
        curve_points = Some(points.len());
    }
    let ppm = image.to_ppm();
    let result = RenderResult {
        width: image.width,
        height: image.height,
        enter_radius: render::ENTER_RADIUS,
        escape_radius: render::ESCAPE_RADIUS,
        max_count: render::MAX_COUNT,
        petals,
        curve_points,
        curve_drawn,
        ppm_sha256: sha256_hex(&ppm),
    };
    let report = Report {
        command: "render",
        map: &loaded.source,
        config: args,
        passed: true,
        result,
    };
    let json = emit(
        &args.common.out,
        "render",
        &report,
        &[("render.ppm".to_string(), ppm)],
    )?;
    Ok(Outcome {
        code: EXIT_PASS,
        json,
    })
}
