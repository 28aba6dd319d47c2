//! Waveform comparison: RMS error, Pearson correlation and lag-compensated
//! maximum cross-correlation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("waveforms differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("waveform has zero variance")]
    ZeroVariance,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Agreement between a recovered waveform and a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Meters, after removing both means.
    pub rms_error: f64,
    pub max_xcorr: f64,
    /// Lag of the maximum; positive when the recovered waveform trails.
    pub lag_s: f64,
    pub pcc: f64,
    pub smoothed: bool,
}

/// Default lag search half-width, seconds.
pub const DEFAULT_MAX_LAG_S: f64 = 0.5;

fn check(a: &[f64], b: &[f64], need: usize) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < need {
        return Err(MetricsError::TooShort { need, got: a.len() });
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `sqrt(mean(((a − ā) − (b − b̄))²))`.
pub fn rms_error(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check(a, b, 1)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    Ok((d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d.len() as f64).sqrt())
}

/// Centered correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check(a, b, 2)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of `a[n]` against `b[n + lag]` over their overlap.
fn lagged(a: &[f64], b: &[f64], lag: i64) -> Result<f64, MetricsError> {
    let n = a.len();
    let l = lag.unsigned_abs() as usize;
    if lag >= 0 {
        pearson(&a[..n - l], &b[l..])
    } else {
        pearson(&a[l..], &b[..n - l])
    }
}

/// Best Pearson correlation over integer lags `|ℓ| ≤ max_lag_s · rate`.
/// `b[n] = a[n − ℓ]` is found at `+ℓ / rate`; ties go to the smaller `|ℓ|`,
/// then to the positive lag.
pub fn max_crosscorr(
    a: &[f64],
    b: &[f64],
    max_lag_s: f64,
    rate: f64,
) -> Result<(f64, f64), MetricsError> {
    check(a, b, 2)?;
    if !(rate > 0.0 && rate.is_finite()) || !(max_lag_s >= 0.0 && max_lag_s.is_finite()) {
        return Err(MetricsError::InvalidArgument(
            "rate must be positive and max lag non-negative".into(),
        ));
    }
    // The small offset keeps 0.07 s · 100 Hz = 7.000000000000001 at 7.
    let max_lag = (max_lag_s * rate + 1e-9).floor() as usize;
    if max_lag + 2 > a.len() {
        return Err(MetricsError::InvalidArgument(format!(
            "max lag of {max_lag} samples leaves fewer than two overlapping samples of {}",
            a.len()
        )));
    }
    let mut best = (pearson(a, b)?, 0i64);
    for l in 1..=max_lag as i64 {
        for lag in [l, -l] {
            let c = lagged(a, b, lag)?;
            if c > best.0 {
                best = (c, lag);
            }
        }
    }
    Ok((best.0, best.1 as f64 / rate))
}

impl MetricReport {
    /// Compares `recovered` against `truth`, both sampled at `rate`.
    pub fn compare(
        recovered: &[f64],
        truth: &[f64],
        rate: f64,
        max_lag_s: f64,
        smoothed: bool,
    ) -> Result<Self, MetricsError> {
        let (max_xcorr, lag_s) = max_crosscorr(truth, recovered, max_lag_s, rate)?;
        Ok(MetricReport {
            rms_error: rms_error(recovered, truth)?,
            max_xcorr,
            lag_s,
            pcc: pearson(recovered, truth)?,
            smoothed,
        })
    }

    /// RMS error in millimeters, for reports.
    pub fn rms_error_mm(&self) -> f64 {
        self.rms_error * 1e3
    }
}
