//! Synthetic breathing-torso scenes with exact ground truth.
//!
//! The torso front is a patch of an ellipsoid facing a depth camera at the
//! origin that looks along +z. Breathing displaces the surface along its
//! outward normal by Gaussian bumps oscillating in time. A dense, noiseless
//! "scanner" template samples the rest shape; the camera samples the moving
//! surface along fixed pixel rays with depth noise along each ray.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{
    load_ply, save_ply, GeometryError, Point3, PointCloudFrame,
};
use crate::io::{self, IoError};
use crate::par;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Ellipsoid `((x-cx)/a)² + ((y-cy)/b)² + ((z-cz)/c)² = 1`, restricted to the
/// camera-facing cap `|α| ≤ alpha_max`, `|β| ≤ beta_max` of the
/// parametrization `(a sin α cos β, b sin β, −c cos α cos β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipsoidPatch {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub alpha_max_deg: f64,
    pub beta_max_deg: f64,
}

impl Default for EllipsoidPatch {
    fn default() -> Self {
        EllipsoidPatch {
            center: [0.0, 0.0, 0.92],
            semi_axes: [0.16, 0.25, 0.12],
            alpha_max_deg: 40.0,
            beta_max_deg: 28.0,
        }
    }
}

impl EllipsoidPatch {
    fn center(&self) -> Point3 {
        Point3::from(self.center)
    }

    fn axes(&self) -> Vector3<f64> {
        Vector3::from(self.semi_axes)
    }

    pub fn point(&self, alpha: f64, beta: f64) -> Point3 {
        let [a, b, c] = self.semi_axes;
        self.center()
            + Vector3::new(
                a * alpha.sin() * beta.cos(),
                b * beta.sin(),
                -c * alpha.cos() * beta.cos(),
            )
    }

    /// Outward unit normal (gradient direction) at a surface point.
    pub fn normal_at(&self, p: &Point3) -> Vector3<f64> {
        let d = p - self.center();
        let ax = self.axes();
        Vector3::new(d.x / (ax.x * ax.x), d.y / (ax.y * ax.y), d.z / (ax.z * ax.z)).normalize()
    }

    /// Parameters `(α, β)` of a surface point on the front half.
    pub fn params_of(&self, p: &Point3) -> (f64, f64) {
        let d = (p - self.center()).component_div(&self.axes());
        let beta = d.y.clamp(-1.0, 1.0).asin();
        let alpha = d.x.atan2(-d.z);
        (alpha, beta)
    }

    pub fn contains_params(&self, alpha: f64, beta: f64) -> bool {
        alpha.abs() <= self.alpha_max_deg.to_radians() && beta.abs() <= self.beta_max_deg.to_radians()
    }

    /// `|∂p/∂α × ∂p/∂β|`.
    fn area_element(&self, alpha: f64, beta: f64) -> f64 {
        let [a, b, c] = self.semi_axes;
        let (sa, ca) = alpha.sin_cos();
        let (sb, cb) = beta.sin_cos();
        let da = Vector3::new(a * ca * cb, 0.0, c * sa * cb);
        let db = Vector3::new(-a * sa * sb, b * cb, c * ca * sb);
        da.cross(&db).norm()
    }

    /// Patch area by a midpoint rule.
    pub fn area(&self) -> f64 {
        let n = 400;
        let (am, bm) = (self.alpha_max_deg.to_radians(), self.beta_max_deg.to_radians());
        let (da, db) = (2.0 * am / n as f64, 2.0 * bm / n as f64);
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let alpha = -am + (i as f64 + 0.5) * da;
                let beta = -bm + (j as f64 + 0.5) * db;
                sum += self.area_element(alpha, beta);
            }
        }
        sum * da * db
    }

    /// Nearest intersection of the ray `s·dir`, `s > 0`, from the origin.
    fn ray_hit(&self, dir: &Vector3<f64>) -> Option<f64> {
        let ax = self.axes();
        let o = -self.center().component_div(&ax);
        let d = dir.component_div(&ax);
        let (qa, qb, qc) = (d.dot(&d), 2.0 * o.dot(&d), o.dot(&o) - 1.0);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let s = (-qb - disc.sqrt()) / (2.0 * qa);
        (s > 0.0).then_some(s)
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.semi_axes.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(SceneError::InvalidConfig("semi-axes must be positive".into()));
        }
        if !(self.alpha_max_deg > 0.0 && self.alpha_max_deg < 90.0)
            || !(self.beta_max_deg > 0.0 && self.beta_max_deg < 90.0)
        {
            return Err(SceneError::InvalidConfig("patch extents must lie in (0°, 90°)".into()));
        }
        if !(self.center[2] - self.semi_axes[2] > 0.0) {
            return Err(SceneError::InvalidConfig("the patch must lie in front of the camera".into()));
        }
        Ok(())
    }
}

/// A Gaussian displacement bump `amplitude · sin(2π·rate·t + phase) ·
/// exp(−|xy − center|² / 2 width²)` along the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bump {
    /// Center in the camera's x-y plane, meters.
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
    pub rate: f64,
    pub phase_rad: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump {
            center: [0.0, 0.0],
            width: 0.04,
            amplitude: 2e-3,
            rate: 0.25,
            phase_rad: 0.0,
        }
    }
}

impl Bump {
    pub fn profile(&self, p: &Point3) -> f64 {
        let dx = p.x - self.center[0];
        let dy = p.y - self.center[1];
        (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp()
    }

    pub fn temporal(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.rate * t + self.phase_rad).sin()
    }

    fn validate(&self, frame_rate: f64) -> Result<(), SceneError> {
        if !(self.width > 0.0) || !(self.amplitude >= 0.0) || !(self.rate > 0.0) {
            return Err(SceneError::InvalidConfig(
                "bump needs positive width and rate and a non-negative amplitude".into(),
            ));
        }
        if !(frame_rate > 2.0 * self.rate) {
            return Err(SceneError::InvalidConfig(format!(
                "frame rate {frame_rate} Hz does not resolve a {} Hz breathing rate",
                self.rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub torso: EllipsoidPatch,
    pub breathing: Bump,
    /// Present for the two-site scene.
    pub second_bump: Option<Bump>,
    /// Template points per m².
    pub template_density: f64,
    /// Camera points per m².
    pub camera_density: f64,
    pub camera_noise_sigma: f64,
    pub duration_s: f64,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            torso: EllipsoidPatch::default(),
            breathing: Bump::default(),
            second_bump: None,
            template_density: 4.0e5,
            camera_density: 1.2e5,
            camera_noise_sigma: 1.5e-3,
            duration_s: 20.0,
            frame_rate: 15.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// The primary bump sits where the default radar's specular return
    /// lands; a second bump beside it breathes a quarter cycle later, so its
    /// flank tilts the surface there and the dominant reflection wanders
    /// over each breath.
    pub fn two_site() -> Self {
        let first = Bump {
            center: [0.005, -0.015],
            width: 0.03,
            ..Bump::default()
        };
        let second = Bump {
            center: [0.005, 0.045],
            width: 0.025,
            phase_rad: PI / 2.0,
            ..Bump::default()
        };
        SceneConfig {
            breathing: first,
            second_bump: Some(second),
            ..SceneConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.torso.validate()?;
        self.breathing.validate(self.frame_rate)?;
        if let Some(b) = &self.second_bump {
            b.validate(self.frame_rate)?;
            check_disjoint(&self.breathing, b)?;
        }
        for (name, v) in [
            ("template_density", self.template_density),
            ("camera_density", self.camera_density),
            ("duration_s", self.duration_s),
            ("frame_rate", self.frame_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SceneError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.camera_noise_sigma >= 0.0) {
            return Err(SceneError::InvalidConfig("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn bumps(&self) -> Vec<Bump> {
        std::iter::once(self.breathing).chain(self.second_bump).collect()
    }

    /// Normal displacement at `p` and time `t`.
    pub fn displacement(&self, p: &Point3, t: f64) -> f64 {
        self.bumps().iter().map(|b| b.temporal(t) * b.profile(p)).sum()
    }

    /// `template` moved exactly to time `t`; normals stay at rest.
    pub fn deform(&self, template: &PointCloudFrame, t: f64) -> Result<PointCloudFrame, SceneError> {
        let normals = template
            .normals
            .as_ref()
            .ok_or_else(|| SceneError::InvalidConfig("template lacks normals".into()))?;
        let points = template
            .points
            .iter()
            .zip(normals)
            .map(|(p, n)| p + n * self.displacement(p, t))
            .collect();
        Ok(PointCloudFrame::with_normals(points, normals.clone(), t)?)
    }

    pub fn frame_times(&self) -> Vec<f64> {
        let n = (self.duration_s * self.frame_rate).round().max(1.0) as usize;
        (0..n).map(|f| f as f64 / self.frame_rate).collect()
    }
}

/// Bumps count as disjoint when each profile is at most e⁻² at the other
/// center, i.e. the centers are at least twice the wider width apart.
fn check_disjoint(a: &Bump, b: &Bump) -> Result<(), SceneError> {
    let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
    let need = 2.0 * a.width.max(b.width);
    if d < need * (1.0 - 1e-9) {
        return Err(SceneError::InvalidConfig(format!(
            "bumps {d:.3} m apart overlap (need ≥ {need:.3} m)"
        )));
    }
    Ok(())
}

/// Truth of one bump: its center on the rest surface and its displacement there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTruth {
    pub center: Point3,
    pub displacement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    /// Normal displacement at the primary bump center, meters.
    pub displacement: Vec<f64>,
    /// One entry per bump, primary first.
    pub sites: Vec<SiteTruth>,
}

/// Dense quasi-uniform template with analytic outward normals: staggered
/// rows of equal arc-length spacing, each point jittered by up to a fifth of
/// the spacing.
pub fn gen_template(cfg: &SceneConfig) -> Result<PointCloudFrame, SceneError> {
    cfg.validate()?;
    let patch = &cfg.torso;
    let [a, b, c] = patch.semi_axes;
    let (am, bm) = (patch.alpha_max_deg.to_radians(), patch.beta_max_deg.to_radians());
    // Hexagonal packing: one point per √3/2·h² of area.
    let h = (2.0 / (3f64.sqrt() * cfg.template_density)).sqrt();
    let row_h = h * 3f64.sqrt() / 2.0;
    let rows = ArcTable::new(-bm, bm, |beta| (b * beta.cos()).hypot(c * beta.sin()));
    let n_rows = (rows.length() / row_h).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points = Vec::new();
    for i in 0..n_rows {
        let s_row = (i as f64 + 0.5) * rows.length() / n_rows as f64;
        let beta0 = rows.param_at(s_row);
        let cols = ArcTable::new(-am, am, |alpha| beta0.cos() * (a * alpha.cos()).hypot(c * alpha.sin()));
        let n_cols = (cols.length() / h).round().max(1.0) as usize;
        let step = cols.length() / n_cols as f64;
        let shift = if i % 2 == 0 { 0.25 } else { 0.75 };
        for j in 0..n_cols {
            let s_col = (j as f64 + shift + rng.random_range(-0.2..=0.2)) * step;
            let s_b = (s_row + rng.random_range(-0.2..=0.2) * row_h).clamp(0.0, rows.length());
            points.push(patch.point(cols.param_at(s_col.clamp(0.0, cols.length())), rows.param_at(s_b)));
        }
    }
    let normals = points.iter().map(|p| patch.normal_at(p)).collect();
    Ok(PointCloudFrame::with_normals(points, normals, 0.0)?)
}

/// Cumulative arc length of a 1-D parametrization, tabulated for inversion.
struct ArcTable {
    params: Vec<f64>,
    arcs: Vec<f64>,
}

impl ArcTable {
    fn new(lo: f64, hi: f64, speed: impl Fn(f64) -> f64) -> Self {
        let n = 2048;
        let dp = (hi - lo) / n as f64;
        let mut params = Vec::with_capacity(n + 1);
        let mut arcs = Vec::with_capacity(n + 1);
        let mut s = 0.0;
        for i in 0..=n {
            let p = lo + i as f64 * dp;
            if i > 0 {
                s += speed(p - 0.5 * dp) * dp;
            }
            params.push(p);
            arcs.push(s);
        }
        ArcTable { params, arcs }
    }

    fn length(&self) -> f64 {
        *self.arcs.last().unwrap()
    }

    fn param_at(&self, s: f64) -> f64 {
        let k = self.arcs.partition_point(|&x| x < s).clamp(1, self.arcs.len() - 1);
        let (s0, s1) = (self.arcs[k - 1], self.arcs[k]);
        let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.params[k - 1] + w * (self.params[k] - self.params[k - 1])
    }
}

/// Fixed camera rays hitting the rest patch, with their rest depths and
/// surface normals. The ray pitch is tuned so the hit count matches
/// `camera_density` times the patch area.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRays {
    pub dirs: Vec<Vector3<f64>>,
    pub depths: Vec<f64>,
    pub normals: Vec<Vector3<f64>>,
}

impl CameraRays {
    pub fn new(cfg: &SceneConfig) -> Result<Self, SceneError> {
        cfg.validate()?;
        let patch = &cfg.torso;
        let target = cfg.camera_density * patch.area();
        let apex = patch.center[2] - patch.semi_axes[2];
        let mut pitch = (1.0 / cfg.camera_density).sqrt() / apex;
        let mut rays = Self::cast(patch, pitch);
        for _ in 0..6 {
            let ratio = rays.dirs.len() as f64 / target;
            if (ratio - 1.0).abs() < 0.01 {
                break;
            }
            pitch *= ratio.sqrt();
            rays = Self::cast(patch, pitch);
        }
        if rays.dirs.is_empty() {
            return Err(SceneError::InvalidConfig("no camera ray hits the patch".into()));
        }
        Ok(rays)
    }

    /// Pinhole grid with `pitch` spacing on the z = 1 image plane.
    fn cast(patch: &EllipsoidPatch, pitch: f64) -> Self {
        let [cx, cy, cz] = patch.center;
        let [a, b, c] = patch.semi_axes;
        let near = cz - c;
        let half_u = ((cx.abs() + a) / near / pitch).ceil() as i64;
        let half_v = ((cy.abs() + b) / near / pitch).ceil() as i64;
        let mut out = CameraRays {
            dirs: Vec::new(),
            depths: Vec::new(),
            normals: Vec::new(),
        };
        for j in -half_v..=half_v {
            for i in -half_u..=half_u {
                let dir = Vector3::new(i as f64 * pitch, j as f64 * pitch, 1.0).normalize();
                let Some(s) = patch.ray_hit(&dir) else { continue };
                let p = dir * s;
                let (alpha, beta) = patch.params_of(&p);
                if patch.contains_params(alpha, beta) {
                    out.dirs.push(dir);
                    out.depths.push(s);
                    out.normals.push(patch.normal_at(&p));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// Noiseless depth along ray `k` when the surface moved `delta` outward.
    /// The local tangent plane is displaced along its normal.
    pub fn depth_after(&self, k: usize, delta: f64) -> f64 {
        let cos_inc = -self.normals[k].dot(&self.dirs[k]);
        self.depths[k] - delta / cos_inc
    }
}

/// Camera frames and ground truth for the scene in `cfg` (one or two bumps).
pub fn gen_frames(cfg: &SceneConfig) -> Result<(Vec<PointCloudFrame>, GroundTruth), SceneError> {
    let template = gen_template(cfg)?;
    gen_frames_with_template(cfg, &template)
}

/// [`gen_frames`] with a second bump added to `cfg`.
pub fn gen_two_site_scene(
    cfg: &SceneConfig,
    second_bump: Bump,
) -> Result<(Vec<PointCloudFrame>, GroundTruth), SceneError> {
    let cfg = SceneConfig {
        second_bump: Some(second_bump),
        ..cfg.clone()
    };
    gen_frames(&cfg)
}

/// Frames and truth for an already generated template.
pub fn gen_frames_with_template(
    cfg: &SceneConfig,
    template: &PointCloudFrame,
) -> Result<(Vec<PointCloudFrame>, GroundTruth), SceneError> {
    cfg.validate()?;
    let rays = CameraRays::new(cfg)?;
    let times = cfg.frame_times();
    if template.normals.is_none() {
        return Err(SceneError::InvalidConfig("template lacks normals".into()));
    }
    let noise = Normal::new(0.0, cfg.camera_noise_sigma)
        .map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
    let rest_points: Vec<Point3> = (0..rays.len()).map(|k| rays.dirs[k] * rays.depths[k]).collect();
    let ray_bumps: Vec<Vec<f64>> = cfg
        .bumps()
        .iter()
        .map(|b| rest_points.iter().map(|p| b.profile(p)).collect())
        .collect();
    let bumps = cfg.bumps();
    let frames: Vec<PointCloudFrame> = par::try_map_range(times.len(), |f| {
        let t = times[f];
        let amps: Vec<f64> = bumps.iter().map(|b| b.temporal(t)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(f as u64 + 1);
        let points = (0..rays.len())
            .map(|k| {
                let delta: f64 = amps.iter().zip(&ray_bumps).map(|(a, pr)| a * pr[k]).sum();
                let depth = rays.depth_after(k, delta) + noise.sample(&mut rng);
                rays.dirs[k] * depth
            })
            .collect();
        PointCloudFrame::new(points, t)
    })?;
    let truth = ground_truth(cfg);
    Ok((frames, truth))
}

/// Noiseless truth at every frame time.
pub fn ground_truth(cfg: &SceneConfig) -> GroundTruth {
    let times = cfg.frame_times();
    let sites: Vec<SiteTruth> = cfg
        .bumps()
        .iter()
        .map(|b| SiteTruth {
            center: site_center(&cfg.torso, b),
            displacement: times.iter().map(|&t| b.temporal(t)).collect(),
        })
        .collect();
    GroundTruth {
        displacement: sites[0].displacement.clone(),
        times,
        sites,
    }
}

/// Rest-surface point under a bump center, found along the camera ray.
fn site_center(patch: &EllipsoidPatch, b: &Bump) -> Point3 {
    // The bump profile is defined in camera x-y, so search the surface point
    // whose x-y matches the center.
    let ax = patch.axes();
    let d = Vector3::new(
        (b.center[0] - patch.center[0]) / ax.x,
        (b.center[1] - patch.center[1]) / ax.y,
        0.0,
    );
    let z = -(1.0 - d.x * d.x - d.y * d.y).max(0.0).sqrt();
    patch.center() + Vector3::new(d.x * ax.x, d.y * ax.y, z * ax.z)
}

/// A generated scene held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub template: PointCloudFrame,
    pub frames: Vec<PointCloudFrame>,
    pub truth: GroundTruth,
}

impl Scene {
    pub fn generate(cfg: &SceneConfig) -> Result<Self, SceneError> {
        let template = gen_template(cfg)?;
        let (frames, truth) = gen_frames_with_template(cfg, &template)?;
        Ok(Scene {
            config: cfg.clone(),
            template,
            frames,
            truth,
        })
    }

    /// Writes `template.ply`, `truth.csv`, `truth_sites.csv`, `scene.json`
    /// and, with `with_frames`, `frames/frame_%04d.ply` under `dir`.
    /// [`Scene::read`] needs the frames.
    pub fn write(&self, dir: &Path, with_frames: bool) -> Result<(), SceneError> {
        save_ply(&self.template, &dir.join("template.ply"))?;
        if with_frames {
            for (i, f) in self.frames.iter().enumerate() {
                save_ply(f, &frame_path(dir, i))?;
            }
        }
        let rows: Vec<Vec<f64>> = self
            .truth
            .times
            .iter()
            .zip(&self.truth.displacement)
            .map(|(t, d)| vec![*t, *d])
            .collect();
        io::write_csv(&dir.join("truth.csv"), &["t_s", "d_m"], &rows)?;
        let mut header = vec!["t_s".to_string()];
        header.extend((0..self.truth.sites.len()).map(|i| format!("site{i}_m")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = (0..self.truth.times.len())
            .map(|f| {
                std::iter::once(self.truth.times[f])
                    .chain(self.truth.sites.iter().map(|s| s.displacement[f]))
                    .collect()
            })
            .collect();
        io::write_csv(&dir.join("truth_sites.csv"), &header, &rows)?;
        io::write_json(&dir.join("scene.json"), &self.config)?;
        Ok(())
    }

    /// Reads a scene directory. Site truth is regenerated from the stored
    /// configuration.
    pub fn read(dir: &Path) -> Result<Self, SceneError> {
        let config: SceneConfig = io::read_json(&dir.join("scene.json"))?;
        let template = load_ply(&dir.join("template.ply"))?;
        let frames = read_frames(dir)?;
        config.validate()?;
        let truth = ground_truth(&config);
        let (_, rows) = io::read_csv(&dir.join("truth.csv"))?;
        if rows.len() != frames.len() {
            return Err(SceneError::InvalidConfig(format!(
                "truth.csv has {} rows for {} frames",
                rows.len(),
                frames.len()
            )));
        }
        Ok(Scene {
            config,
            template,
            frames,
            truth: GroundTruth {
                times: rows.iter().map(|r| r[0]).collect(),
                displacement: rows.iter().map(|r| r[1]).collect(),
                ..truth
            },
        })
    }
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("frames").join(format!("frame_{index:04}.ply"))
}

/// Loads `frames/frame_0000.ply`, `frame_0001.ply`, … until the first gap.
pub fn read_frames(dir: &Path) -> Result<Vec<PointCloudFrame>, SceneError> {
    let mut frames = Vec::new();
    loop {
        let p = frame_path(dir, frames.len());
        if !p.exists() {
            break;
        }
        frames.push(load_ply(&p)?);
    }
    if frames.is_empty() {
        return Err(SceneError::InvalidConfig(format!(
            "no frames under {}",
            dir.join("frames").display()
        )));
    }
    Ok(frames)
}
