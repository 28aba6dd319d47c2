//! Pipeline configuration as one JSON document; every field has a default.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cpd::CpdParams;
use crate::em_scatter::EmConstants;
use crate::geometry::Point3;
use crate::radar_dsp::DspConfig;
use crate::radar_model::{build_virtual_array, ChirpParams, Illumination, VirtualArray};
use crate::scene_synth::SceneConfig;

use super::{EvalError, DEFAULT_MAX_LAG_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Conventional,
    Proposed,
    Both,
}

impl Mode {
    pub fn runs_conventional(self) -> bool {
        matches!(self, Mode::Conventional | Mode::Both)
    }

    pub fn runs_proposed(self) -> bool {
        matches!(self, Mode::Proposed | Mode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmSettings {
    /// Eye radius, meters.
    pub a0: f64,
    pub shadowing: bool,
    /// Dipole current-length product, A·m.
    pub moment: f64,
    pub dipole_axis: [f64; 3],
}

impl Default for EmSettings {
    fn default() -> Self {
        EmSettings {
            a0: 0.019,
            shadowing: true,
            moment: 1.0,
            dipole_axis: [0.0, 1.0, 0.0],
        }
    }
}

/// Linear MIMO layout: Tx and Rx rows along `axis` starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayLayout {
    pub n_tx: usize,
    pub tx_pitch: f64,
    pub n_rx: usize,
    pub rx_pitch: f64,
    pub origin: [f64; 3],
    pub axis: [f64; 3],
}

impl Default for ArrayLayout {
    fn default() -> Self {
        ArrayLayout {
            n_tx: 3,
            tx_pitch: 7.6e-3,
            n_rx: 4,
            rx_pitch: 1.9e-3,
            origin: [0.028, -0.034, 0.0],
            axis: [1.0, 0.0, 0.0],
        }
    }
}

impl ArrayLayout {
    pub fn build(&self) -> Result<VirtualArray, EvalError> {
        Ok(build_virtual_array(
            self.n_tx,
            self.tx_pitch,
            self.n_rx,
            self.rx_pitch,
            Point3::from(self.origin),
            Vector3::from(self.axis),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarSettings {
    pub chirp: ChirpParams,
    pub array: ArrayLayout,
    /// Power fraction for conventional center selection.
    pub theta_scat: f64,
    /// Power fraction for the proposed index set.
    pub theta_thresh: f64,
    /// Unit reflection coefficient `[re, im]`.
    pub eta: [f64; 2],
    /// Moving-average window applied to conventional line-of-sight tracks
    /// before synthesis, seconds; 0 disables it.
    pub track_smoothing_s: f64,
}

impl Default for RadarSettings {
    fn default() -> Self {
        RadarSettings {
            chirp: ChirpParams::default(),
            array: ArrayLayout::default(),
            theta_scat: 0.25,
            theta_thresh: 0.25,
            eta: [-1.0, 0.0],
            track_smoothing_s: 1.0,
        }
    }
}

impl RadarSettings {
    pub fn eta(&self) -> Complex64 {
        Complex64::new(self.eta[0], self.eta[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// `duration_s` is replaced by `t_obs_s`.
    pub scene: SceneConfig,
    pub cpd: CpdParams,
    pub em: EmSettings,
    pub radar: RadarSettings,
    pub dsp: DspConfig,
    pub mode: Mode,
    /// Observation duration, seconds.
    pub t_obs_s: f64,
    pub max_lag_s: f64,
    /// Neighbors for PCA normals on registered and averaged clouds.
    pub normal_neighbors: usize,
    /// Template points CPD moves; the fitted field carries the motion to
    /// the rest of the template.
    pub control_points: usize,
    /// Camera points per frame CPD fits against, the same rays every frame.
    pub registration_points: usize,
    /// EM iteration cap for frames warm-started from the previous fit. The
    /// first frame runs up to `cpd.max_iters`.
    pub warm_max_iters: usize,
    /// Per-frame fields, registered clouds, per-frame maps and IF cubes.
    pub write_bulk_artifacts: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scene: SceneConfig::default(),
            cpd: CpdParams::default(),
            em: EmSettings::default(),
            radar: RadarSettings::default(),
            dsp: DspConfig::default(),
            mode: Mode::Both,
            t_obs_s: 20.0,
            max_lag_s: DEFAULT_MAX_LAG_S,
            normal_neighbors: 12,
            control_points: 250,
            registration_points: 800,
            warm_max_iters: 10,
            write_bulk_artifacts: true,
        }
    }
}

impl PipelineConfig {
    /// The scene as generated: `scene` with the observation duration applied.
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            duration_s: self.t_obs_s,
            ..self.scene.clone()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scene.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if !(self.t_obs_s > 0.0 && self.t_obs_s.is_finite()) {
            return bad("t_obs_s must be positive".into());
        }
        self.scene_config().validate()?;
        self.cpd.validate()?;
        self.radar.chirp.validate()?;
        self.radar.array.build()?;
        if !(self.em.a0 > 0.0) || !(self.em.moment > 0.0) {
            return bad("em.a0 and em.moment must be positive".into());
        }
        if !(Vector3::from(self.em.dipole_axis).norm() > 0.0) {
            return bad("em.dipole_axis must be nonzero".into());
        }
        for (name, t) in [
            ("theta_scat", self.radar.theta_scat),
            ("theta_thresh", self.radar.theta_thresh),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("radar.{name} = {t} outside (0, 1]"));
            }
        }
        if !(self.radar.track_smoothing_s >= 0.0 && self.radar.track_smoothing_s.is_finite()) {
            return bad("radar.track_smoothing_s must be non-negative".into());
        }
        if (self.radar.eta().norm() - 1.0).abs() > 1e-12 {
            return bad("radar.eta must have unit magnitude".into());
        }
        let d = &self.dsp;
        if d.pad_factor == 0 || d.theta_count == 0 || !(d.range_max_m > d.range_min_m) {
            return bad("dsp needs a positive pad factor, a theta grid and a range window".into());
        }
        if !(d.theta_max_deg > 0.0 && d.theta_max_deg < 90.0) {
            return bad("dsp.theta_max_deg must lie in (0, 90)".into());
        }
        if !(self.max_lag_s >= 0.0) {
            return bad("max_lag_s must be non-negative".into());
        }
        if self.normal_neighbors < 3 {
            return bad("normal_neighbors must be at least 3".into());
        }
        if self.control_points == 0 || self.registration_points == 0 || self.warm_max_iters == 0 {
            return bad("control_points, registration_points and warm_max_iters must be positive".into());
        }
        Ok(())
    }

    /// Dipole illumination at the chirp's center frequency.
    pub fn illumination(&self) -> Illumination {
        let axis = Vector3::from(self.em.dipole_axis);
        Illumination {
            consts: EmConstants::new(self.radar.chirp.center_frequency()),
            dipole_axis: axis / axis.norm(),
            moment: self.em.moment,
            a0: self.em.a0,
            shadowing: self.em.shadowing,
        }
    }
}
