//! Straight-line least squares, used for log-log rate fits.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

impl LineFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} points, a line needs at least 2",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = points
        .iter()
        .map(|&(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        rms: (ss / n).sqrt(),
    })
}

/// `count` distinct integers spread geometrically over `[lo, hi]`.
pub fn log_spaced(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    let lo = lo.max(1);
    if hi <= lo || count < 2 {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as u64)
        .map(|n| n.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let f = fit_line(&pts).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14);
        assert!((f.intercept - 3.0).abs() < 1e-14);
        assert!(f.rms < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[(1.0, 2.0)]).is_err());
        assert!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn spacing_endpoints() {
        let ns = log_spaced(100, 5000, 20);
        assert_eq!(ns.first(), Some(&100));
        assert_eq!(ns.last(), Some(&5000));
        assert!(ns.windows(2).all(|w| w[0] < w[1]));
    }
}
