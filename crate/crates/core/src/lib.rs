//! Radar observation simulator for non-rigidly deforming torso surfaces.
//!
//! The crate fuses a dense static surface template with a sparse, noisy
//! depth-frame sequence by coherent point drift registration ([`cpd`]),
//! evaluates per-frame physical-optics scattering ([`em_scatter`]),
//! synthesizes FMCW intermediate-frequency cubes ([`radar_model`]) and runs a
//! conventional array-radar chain to recover the displacement waveform
//! ([`radar_dsp`]). Synthetic scenes with known motion ([`scene_synth`]) close
//! the loop, and [`eval`] holds the metrics and end-to-end pipeline.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

pub mod cpd;
pub mod em_scatter;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod par;
pub mod radar_dsp;
pub mod radar_model;
pub mod scene_synth;

pub use geometry::{Point3, PointCloudFrame, SurfaceSampling};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;
