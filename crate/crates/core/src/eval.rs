//! Waveform metrics, pipeline configuration and orchestration.

mod config;
mod metrics;
mod pipeline;

pub use config::{ArrayLayout, EmSettings, Mode, PipelineConfig, RadarSettings};
pub use metrics::{max_crosscorr, pearson, rms_error, MetricReport, MetricsError, DEFAULT_MAX_LAG_S};
pub use pipeline::*;

use crate::cpd::CpdError;
use crate::em_scatter::EmError;
use crate::geometry::GeometryError;
use crate::io::IoError;
use crate::radar_dsp::DspError;
use crate::radar_model::RadarError;
use crate::scene_synth::SceneError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("record covers {cycles:.2} respiration cycles; at least {need} are needed")]
    TooFewCycles { cycles: f64, need: f64 },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Cpd(#[from] CpdError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Compares two `t_s, d_m` CSVs sampled at the same rate.
pub fn compare_csv(
    recovered: &std::path::Path,
    truth: &std::path::Path,
    max_lag_s: f64,
    smoothed: bool,
) -> Result<MetricReport, EvalError> {
    let a = crate::radar_dsp::DisplacementWaveform::read_csv(recovered)?;
    let b = crate::radar_dsp::DisplacementWaveform::read_csv(truth)?;
    if (a.rate - b.rate).abs() > 1e-6 * a.rate {
        return Err(EvalError::InvalidConfig(format!(
            "sample rates differ: {} Hz vs {} Hz",
            a.rate, b.rate
        )));
    }
    Ok(MetricReport::compare(&a.values, &b.values, a.rate, max_lag_s, smoothed)?)
}
