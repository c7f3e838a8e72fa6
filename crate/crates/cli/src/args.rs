use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "parabolic",
    version,
    about = "Parametrizations of parabolic maps and Fatou disks of skew products"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify that a map or family is special (and the marked point, if any).
    Check(CheckArgs),
    /// Evaluate the parametrization at one parameter.
    Param(ParamArgs),
    /// Run a verification suite over seeded samples.
    Verify(VerifyArgs),
    /// Locate a critical parameter and sweep the disk nesting.
    Disks(DisksArgs),
    /// Render petals or the parametrized curve to a binary PPM.
    ///
    /// Petal mode colours each pixel by the first iterate entering |z| < 1e-3;
    /// orbits leaving |z| > 1e3 or not arriving within 10^4 steps are dark.
    Render(RenderArgs),
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct Common {
    /// JSON map file.
    #[arg(long)]
    pub map: PathBuf,
    /// Directory receiving the report files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed of the sample generator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Marked point `re,im`; overrides the one in the map file.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    pub x0: Option<Complex64>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ParamArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Parameter `re,im` or `re`.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    pub t: Complex64,
    #[arg(long, default_value_t = 1e-10, value_parser = parse_tol)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Functional equation on samples of the domain.
    Feq,
    /// Orbit bounds in the chart at infinity on a 16-point grid.
    Lemmas,
    /// Abel relation of the Fatou coordinate.
    Abel,
    /// Decay rate of consecutive differences.
    Decay,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(value_enum)]
    pub suite: Suite,
    /// Number of random samples (feq, abel).
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Pass threshold; defaults to 1e-5 for feq and 1e-6 for abel.
    #[arg(long, value_parser = parse_tol)]
    pub tol: Option<f64>,
    /// Base point of the decay fit.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    pub t: Option<Complex64>,
    /// Smallest `n` of the decay fit.
    #[arg(long)]
    pub n_min: Option<u64>,
    /// Largest `n` (decay fit, orbit length for lemmas and abel).
    #[arg(long)]
    pub n_max: Option<u64>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DisksArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Marked point `re,im`; defaults to the one in the map file.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    pub x0: Option<Complex64>,
    /// Search box `x0,y0,x1,y1` for the critical parameter.
    #[arg(long = "box", value_parser = parse_rect, allow_hyphen_values = true, default_value = "-4,-4,4,4")]
    pub search_box: Rect,
    /// Root tolerance.
    #[arg(long, default_value_t = 1e-8, value_parser = parse_tol)]
    pub tol: f64,
    #[arg(long, default_value_t = 4)]
    pub n_min: u64,
    #[arg(long, default_value_t = 256)]
    pub n_max: u64,
    /// Angular samples per boundary circle.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Links of the disk chain followed from the threshold.
    #[arg(long, default_value_t = 4)]
    pub chain: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Attraction counts of the one-variable map.
    Petal,
    /// The image of rays through the domain drawn over the petals.
    Param,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RenderArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "petal")]
    pub mode: Mode,
    /// Viewport `x0,y0,x1,y1`.
    #[arg(long, value_parser = parse_rect, allow_hyphen_values = true, default_value = "-1,-1,1,1")]
    pub viewport: Rect,
    /// Resolution `WxH` or `N` for a square image.
    #[arg(long, value_parser = parse_res, default_value = "256")]
    pub res: Resolution,
    /// Accuracy of the curve points in param mode.
    #[arg(long, default_value_t = 1e-8, value_parser = parse_tol)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            let x: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("not a number: {p:?}"))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("not finite: {p:?}"))
            }
        })
        .collect()
}

pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    match numbers(s)?.as_slice() {
        [re] => Ok(Complex64::new(*re, 0.0)),
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err("expected re or re,im".into()),
    }
}

pub fn parse_rect(s: &str) -> Result<Rect, String> {
    match numbers(s)?.as_slice() {
        &[x0, y0, x1, y1] if x0 < x1 && y0 < y1 => Ok(Rect { x0, y0, x1, y1 }),
        [_, _, _, _] => Err("degenerate rectangle".into()),
        _ => Err("expected x0,y0,x1,y1".into()),
    }
}

pub fn parse_res(s: &str) -> Result<Resolution, String> {
    let dims: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse().map_err(|_| format!("not a size: {p:?}")))
        .collect::<Result<_, _>>()?;
    let (width, height) = match dims.as_slice() {
        [n] => (*n, *n),
        [w, h] => (*w, *h),
        _ => return Err("expected WxH or N".into()),
    };
    if width == 0 || height == 0 || width * height > 1 << 26 {
        return Err(format!("unsupported resolution {width}x{height}"));
    }
    Ok(Resolution { width, height })
}

pub fn parse_tol(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err("tolerance must be positive".into())
    }
}
