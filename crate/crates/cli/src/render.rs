//! Escape-time rasters of the parabolic basin and parametrized curves.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Rect, Resolution};

/// Orbits entering `|z| < ENTER_RADIUS` count as attracted.
pub const ENTER_RADIUS: f64 = 1e-3;
/// Orbits leaving `|z| > ESCAPE_RADIUS` count as escaped.
pub const ESCAPE_RADIUS: f64 = 1e3;
/// Iteration cap.
pub const MAX_COUNT: u32 = 10_000;

/// Fate of one starting point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fate {
    /// First index at which the orbit is inside the small disk.
    Attracted(u32),
    Escaped(u32),
    Undecided,
}

pub fn fate(f: impl Fn(Complex64) -> Option<Complex64>, mut z: Complex64) -> Fate {
    for k in 0..=MAX_COUNT {
        if z.norm() < ENTER_RADIUS {
            return Fate::Attracted(k);
        }
        if z.norm().is_nan() || z.norm() > ESCAPE_RADIUS {
            return Fate::Escaped(k);
        }
        if k == MAX_COUNT {
            break;
        }
        match f(z) {
            Some(w) => z = w,
            None => return Fate::Escaped(k),
        }
    }
    Fate::Undecided
}

pub fn color(fate: Fate) -> [u8; 3] {
    match fate {
        Fate::Attracted(k) => {
            let s = (1.0 + k as f64).ln() / (1.0 + MAX_COUNT as f64).ln();
            let ramp = |x: f64| (255.0 * x.clamp(0.0, 1.0)).round() as u8;
            [ramp(1.0 - s), ramp(1.0 - (2.0 * s - 1.0).abs()), ramp(s)]
        }
        Fate::Escaped(_) => [0, 0, 0],
        Fate::Undecided => [48, 48, 48],
    }
}

pub const CURVE_COLOR: [u8; 3] = [255, 255, 255];

#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub viewport: Rect,
    /// Row-major RGB, top row first.
    pub pixels: Vec<u8>,
}

impl RasterImage {
    /// Point at the centre of pixel `(row, col)`.
    pub fn point(viewport: &Rect, res: Resolution, row: usize, col: usize) -> Complex64 {
        let dx = (viewport.x1 - viewport.x0) / res.width as f64;
        let dy = (viewport.y1 - viewport.y0) / res.height as f64;
        Complex64::new(
            viewport.x0 + (col as f64 + 0.5) * dx,
            viewport.y1 - (row as f64 + 0.5) * dy,
        )
    }

    /// Pixel containing `z`, if inside the viewport.
    pub fn pixel(&self, z: Complex64) -> Option<(usize, usize)> {
        let v = &self.viewport;
        let col = ((z.re - v.x0) / (v.x1 - v.x0) * self.width as f64).floor();
        let row = ((v.y1 - z.im) / (v.y1 - v.y0) * self.height as f64).floor();
        let ok =
            (0.0..self.width as f64).contains(&col) && (0.0..self.height as f64).contains(&row);
        ok.then_some((row as usize, col as usize))
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PetalStats {
    pub attracted: usize,
    pub escaped: usize,
    pub undecided: usize,
    pub min_count: Option<u32>,
    pub max_count: Option<u32>,
}

/// Fates of all pixel centres, row-major.
pub fn petal_fates(
    f: &(impl Fn(Complex64) -> Option<Complex64> + Sync),
    viewport: &Rect,
    res: Resolution,
) -> Vec<Fate> {
    (0..res.width * res.height)
        .into_par_iter()
        .map(|i| {
            fate(
                f,
                RasterImage::point(viewport, res, i / res.width, i % res.width),
            )
        })
        .collect()
}

pub fn petal_image(fates: &[Fate], viewport: &Rect, res: Resolution) -> (RasterImage, PetalStats) {
    let pixels = fates.iter().flat_map(|&f| color(f)).collect();
    let mut stats = PetalStats::default();
    for &f in fates {
        match f {
            Fate::Attracted(k) => {
                stats.attracted += 1;
                stats.min_count = Some(stats.min_count.map_or(k, |m| m.min(k)));
                stats.max_count = Some(stats.max_count.map_or(k, |m| m.max(k)));
            }
            Fate::Escaped(_) => stats.escaped += 1,
            Fate::Undecided => stats.undecided += 1,
        }
    }
    let image = RasterImage {
        width: res.width,
        height: res.height,
        viewport: *viewport,
        pixels,
    };
    (image, stats)
}

/// Parameters on `rays` rays from 0 through `V_eps`, `per_ray` points each.
pub fn ray_samples(eps: f64, rays: usize, per_ray: usize) -> Vec<Complex64> {
    (0..rays)
        .flat_map(|k| {
            let theta = -PI / 2.0 + PI * (k as f64 + 1.0) / (rays as f64 + 1.0);
            let reach = 2.0 * eps * theta.cos();
            (0..per_ray).map(move |j| {
                Complex64::from_polar(reach * (j as f64 + 0.5) / per_ray as f64, theta)
            })
        })
        .collect()
}

/// Draws `points` over `image`; returns how many landed inside.
pub fn overlay(image: &mut RasterImage, points: &[Complex64]) -> usize {
    let mut drawn = 0;
    for &z in points {
        if let Some((row, col)) = image.pixel(z) {
            image.set(row, col, CURVE_COLOR);
            drawn += 1;
        }
    }
    drawn
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Rect {
        Rect {
            x0: -1.0,
            y0: -1.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    #[test]
    fn fates_of_simple_orbits() {
        let cubic = |z: Complex64| Some(z + z * z + z * z * z);
        assert_eq!(fate(cubic, Complex64::new(0.0, 0.0)), Fate::Attracted(0));
        assert!(matches!(fate(cubic, Complex64::new(-0.1, 0.0)), Fate::Attracted(k) if k < 1000));
        assert!(matches!(
            fate(cubic, Complex64::new(0.5, 0.0)),
            Fate::Escaped(_)
        ));
    }

    #[test]
    fn pixel_centres_round_trip() {
        let res = Resolution {
            width: 5,
            height: 3,
        };
        let img = RasterImage {
            width: 5,
            height: 3,
            viewport: square(),
            pixels: vec![0; 45],
        };
        for row in 0..3 {
            for col in 0..5 {
                let z = RasterImage::point(&square(), res, row, col);
                assert_eq!(img.pixel(z), Some((row, col)));
            }
        }
        assert_eq!(img.pixel(Complex64::new(2.0, 0.0)), None);
    }

    #[test]
    fn ppm_header() {
        let res = Resolution {
            width: 2,
            height: 1,
        };
        let (img, stats) = petal_image(&[Fate::Attracted(0), Fate::Escaped(3)], &square(), res);
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(ppm.len(), 11 + 6);
        assert_eq!(stats.attracted, 1);
        assert_eq!(stats.min_count, Some(0));
    }

    #[test]
    fn rays_stay_in_domain() {
        let eps = 1.0 / 16.0;
        for t in ray_samples(eps, 15, 64) {
            assert!((t - eps).norm() < eps);
        }
    }
}
