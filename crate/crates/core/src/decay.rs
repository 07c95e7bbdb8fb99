//! Log-log decay fits over a ladder of times.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Residual below which the first point is never treated as a transient.
const TRANSIENT_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub t_values: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub log_residuals: Vec<f64>,
    /// Smallest time, if it was dropped as a transient.
    pub dropped: Option<f64>,
}

impl DecayFit {
    /// Whether the exponent is within `tol` of `target`.
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.exponent - target).abs() <= tol
    }
}

struct Line {
    slope: f64,
    intercept: f64,
    stderr: f64,
    residuals: Vec<f64>,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Line {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let stderr = if xs.len() > 2 {
        let ssr: f64 = residuals.iter().map(|r| r * r).sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Line {
        slope,
        intercept,
        stderr,
        residuals,
    }
}

/// Least-squares slope of `log magnitude` against `log t`.
///
/// The smallest time is dropped once if its residual exceeds three times the
/// RMS of the other residuals.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "decay fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for w in points.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidInput("t values must be strictly increasing".into()));
        }
    }
    if let Some(&(t, m)) = points.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "nonpositive point in decay fit: t = {t}, magnitude = {m}"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let full = least_squares(&xs, &ys);

    let first = full.residuals[0].abs();
    let rest = &full.residuals[1..];
    let rms = (rest.iter().map(|r| r * r).sum::<f64>() / rest.len() as f64).sqrt();
    let drop = points.len() > 4 && first > TRANSIENT_FLOOR && first > 3.0 * rms;

    let (line, start, dropped) = if drop {
        (least_squares(&xs[1..], &ys[1..]), 1, Some(points[0].0))
    } else {
        (full, 0, None)
    };
    Ok(DecayFit {
        exponent: line.slope,
        stderr: line.stderr,
        intercept: line.intercept,
        t_values: points[start..].iter().map(|p| p.0).collect(),
        magnitudes: points[start..].iter().map(|p| p.1).collect(),
        log_residuals: line.residuals,
        dropped,
    })
}

/// `start, 2·start, …` up to and including `end`.
pub fn doubling_ladder(start: f64, end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = start;
    while t <= end * (1.0 + 1e-12) {
        out.push(t);
        t *= 2.0;
    }
    out
}

/// Geometric ladder with `per_octave` points per doubling, from `start` to `end`.
pub fn geometric_ladder(start: f64, end: f64, per_octave: usize) -> Vec<f64> {
    let per_octave = per_octave.max(1);
    let octaves = (end / start).log2();
    let steps = (octaves * per_octave as f64).round() as usize;
    (0..=steps)
        .map(|k| start * 2f64.powf(k as f64 / per_octave as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let fit = fit_decay(&[(10.0, 1e-1), (100.0, 1e-2), (1000.0, 1e-3)]).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-12);
        assert!(fit.dropped.is_none());
    }

    #[test]
    fn bounded_multiplicative_noise() {
        let pts: Vec<(f64, f64)> = geometric_ladder(16.0, 4096.0, 2)
            .into_iter()
            .map(|t| (t, t.powf(-0.75) * (1.0 + 0.01 * t.sin())))
            .collect();
        let fit = fit_decay(&pts).unwrap();
        assert!((fit.exponent + 0.75).abs() < 0.01, "{}", fit.exponent);
    }

    #[test]
    fn transient_is_dropped() {
        let mut pts: Vec<(f64, f64)> = doubling_ladder(8.0, 1024.0)
            .into_iter()
            .map(|t| (t, 2.0 * t.powf(-0.5) * (1.0 + 1e-3 * (t * 0.37).cos())))
            .collect();
        pts[0].1 *= 3.0;
        let fit = fit_decay(&pts).unwrap();
        assert_eq!(fit.dropped, Some(8.0));
        assert!((fit.exponent + 0.5).abs() < 1e-3);
        assert_eq!(fit.t_values.len(), pts.len() - 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_decay(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_decay(&[(1.0, 1.0), (1.0, 0.5), (3.0, 1.0)]).is_err());
        assert!(fit_decay(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
    }

    #[test]
    fn ladders() {
        assert_eq!(doubling_ladder(32.0, 512.0), vec![32.0, 64.0, 128.0, 256.0, 512.0]);
        let g = geometric_ladder(64.0, 4096.0, 4);
        assert_eq!(g.len(), 25);
        assert!((g[24] - 4096.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn recovers_any_power_law(p in -3.0f64..1.0, c in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = doubling_ladder(4.0, 4096.0)
                .into_iter()
                .map(|t| (t, c * t.powf(p)))
                .collect();
            let fit = fit_decay(&pts).unwrap();
            prop_assert!((fit.exponent - p).abs() < 1e-10);
            prop_assert!(fit.dropped.is_none());
        }
    }
}
