//! Stage functions and the end-to-end run: scene, registration, scattering,
//! synthesis, DSP and metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::cpd::{self, CpdParams, FieldInterpolator, Registrar, WarmStart};
use crate::em_scatter::{EyeWindows, ScatteringMap};
use crate::geometry::{
    area_weights, estimate_normals, farthest_point_indices, save_ply, time_average_frames, Point3,
    PointCloudFrame, SurfaceSampling,
};
use crate::io;
use crate::radar_dsp::{
    beam_series, displacement, mean_power_map, moving_average, range_profile, select_peak, smooth_detrend,
    Beamformer, DisplacementWaveform, DspConfig, Pixel, PowerMap,
};
use crate::radar_model::{
    bistatic_range, combine_maps, element_maps, element_maps_with, resample_center,
    resample_center_constant, select_centers_conventional, select_index_set,
    synth_if_conventional, synth_if_proposed, track_centers_conventional, CubicSpline, IFCube,
    SlowGrid, VirtualArray,
};
use crate::scene_synth::{frame_path, Scene};

use super::{EvalError, MetricReport, PipelineConfig};

/// Fewest respiration cycles a record needs before it is scored.
pub const MIN_CYCLES: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Scene,
    Register,
    Scatter,
    Synth,
    Dsp,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Scene => "scene",
            Stage::Register => "register",
            Stage::Scatter => "scatter",
            Stage::Synth => "synth",
            Stage::Dsp => "dsp",
            Stage::Metrics => "metrics",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: EvalError,
}

trait At<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<EvalError>> At<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Fixed inputs of the proposed mode's registration: the template points
/// CPD moves and the camera rays it fits against, both thinned by
/// farthest-point sampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationSetup {
    /// Template indices.
    pub control: Vec<usize>,
    /// Camera point indices, the same in every frame.
    pub rays: Vec<usize>,
}

impl RegistrationSetup {
    pub fn new(template: &PointCloudFrame, first_frame: &PointCloudFrame, cfg: &PipelineConfig) -> Self {
        let seed = cfg.scene.seed;
        let m = cfg.control_points.min(template.len());
        let n = cfg.registration_points.min(first_frame.len());
        let mut control = farthest_point_indices(&template.points, m, seed);
        let mut rays = farthest_point_indices(&first_frame.points, n, seed);
        control.sort_unstable();
        rays.sort_unstable();
        RegistrationSetup { control, rays }
    }

    pub fn control_cloud(&self, template: &PointCloudFrame) -> Result<PointCloudFrame, EvalError> {
        let pts = self.control.iter().map(|&i| template.points[i]).collect();
        Ok(PointCloudFrame::new(pts, template.timestamp)?)
    }

    pub fn observed(&self, frame: &PointCloudFrame) -> Result<PointCloudFrame, EvalError> {
        if let Some(&k) = self.rays.iter().find(|&&k| k >= frame.len()) {
            return Err(EvalError::InvalidConfig(format!(
                "ray {k} missing from a {}-point frame",
                frame.len()
            )));
        }
        let pts = self.rays.iter().map(|&k| frame.points[k]).collect();
        Ok(PointCloudFrame::new(pts, frame.timestamp)?)
    }
}

/// Registers the control points onto each frame in order, warm-starting
/// every frame from the previous fit with at most `warm_max_iters` EM steps. Returns the kernel weights W per
/// frame. With `out`, writes `fields/field_%04d.{csv,json}` and the moved
/// control points as `frames/frame_%04d.ply`.
pub fn register_frames(
    template: &PointCloudFrame,
    frames: &[PointCloudFrame],
    setup: &RegistrationSetup,
    params: &CpdParams,
    warm_max_iters: usize,
    out: Option<&Path>,
) -> Result<Vec<DMatrix<f64>>, EvalError> {
    let control = setup.control_cloud(template)?;
    let cold = Registrar::new(control.clone(), *params)?;
    let tracking = Registrar::new(
        control,
        CpdParams {
            max_iters: warm_max_iters,
            ..*params
        },
    )?;
    let mut warm: Option<WarmStart> = None;
    let mut weights = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let reg = if warm.is_some() { &tracking } else { &cold };
        let field = reg.register(&setup.observed(f)?, warm.as_ref())?;
        if let Some(dir) = out {
            let stem = dir.join("fields").join(format!("field_{i:04}"));
            cpd::write_field(&field, &stem.with_extension("csv"), &stem.with_extension("json"))?;
            save_ply(&cpd::apply_deformation(&field), &frame_path(dir, i))?;
        }
        warm = Some(WarmStart::from(&field));
        weights.push(field.weights);
    }
    Ok(weights)
}

/// Reads the weights [`register_frames`] wrote under `dir`.
pub fn read_fields(dir: &Path) -> Result<Vec<DMatrix<f64>>, EvalError> {
    let mut out = Vec::new();
    loop {
        let p = dir.join("fields").join(format!("field_{:04}.csv", out.len()));
        if !p.exists() {
            break;
        }
        out.push(cpd::read_weights(&p)?);
    }
    if out.is_empty() {
        return Err(EvalError::InvalidConfig(format!("no fields under {}", dir.display())));
    }
    Ok(out)
}

/// Per-element scattering maps of one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMaps {
    pub timestamp: f64,
    pub points: Vec<Point3>,
    pub maps: Vec<ScatteringMap>,
}

impl FrameMaps {
    /// PCA normals facing the camera at the origin, then one map per element.
    pub fn compute(
        cloud: &PointCloudFrame,
        array: &VirtualArray,
        cfg: &PipelineConfig,
    ) -> Result<Self, EvalError> {
        let oriented = estimate_normals(cloud, cfg.normal_neighbors, &Point3::zeros())?;
        let sampling = SurfaceSampling::from_cloud(oriented)?;
        let maps = element_maps(&sampling, array, &cfg.illumination())?;
        Ok(FrameMaps {
            timestamp: cloud.timestamp,
            points: cloud.points.clone(),
            maps,
        })
    }

    pub fn combined(&self) -> Result<ScatteringMap, EvalError> {
        Ok(combine_maps(&self.maps)?)
    }

    /// Columns `index,x,y,z,combined,e0,e1,…`.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let combined = self.combined()?;
        let mut header: Vec<String> = ["index", "x", "y", "z", "combined"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..self.maps.len()).map(|e| format!("e{e}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = self
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                [k as f64, p.x, p.y, p.z, combined.magnitudes[k]]
                    .into_iter()
                    .chain(self.maps.iter().map(|m| m.magnitudes[k]))
                    .collect()
            })
            .collect();
        io::write_csv(path, &header, &rows)?;
        Ok(())
    }
}

/// Per-frame maps of the registered template. Every template point moves
/// with the fitted field and keeps its rest normal and area; windows sit on
/// the control points, so map index `i` is template point `setup.control[i]`.
pub fn scatter_proposed(
    template: &PointCloudFrame,
    setup: &RegistrationSetup,
    weights: &[DMatrix<f64>],
    times: &[f64],
    array: &VirtualArray,
    cfg: &PipelineConfig,
    out: Option<&Path>,
) -> Result<Vec<FrameMaps>, EvalError> {
    if weights.len() != times.len() {
        return Err(EvalError::InvalidConfig(format!(
            "{} fields for {} frames",
            weights.len(),
            times.len()
        )));
    }
    let normals = template
        .normals
        .clone()
        .ok_or_else(|| EvalError::InvalidConfig("template lacks normals".into()))?;
    let areas = area_weights(&template.points)?;
    let control = setup.control_cloud(template)?;
    let interp = FieldInterpolator::new(&template.points, &control, cfg.cpd.beta);
    let illum = cfg.illumination();
    let mut all = Vec::with_capacity(weights.len());
    for (i, (w, &t)) in weights.iter().zip(times).enumerate() {
        let points = interp.apply(w)?;
        let centers: Vec<Point3> = setup.control.iter().map(|&k| points[k]).collect();
        let windows = EyeWindows::at_centers(&points, &centers, illum.a0)?;
        let cloud = PointCloudFrame::with_normals(points, normals.clone(), t)?;
        let sampling = SurfaceSampling::new(cloud, areas.clone())?;
        let fm = FrameMaps {
            timestamp: t,
            points: centers,
            maps: element_maps_with(&sampling, &windows, array, &illum)?,
        };
        if let Some(dir) = out {
            fm.write_csv(&dir.join(format!("frame_{i:04}.csv")))?;
        }
        all.push(fm);
    }
    Ok(all)
}

/// Maps of the time-averaged camera cloud.
pub fn scatter_conventional(
    frames: &[PointCloudFrame],
    array: &VirtualArray,
    cfg: &PipelineConfig,
    out: Option<&Path>,
) -> Result<FrameMaps, EvalError> {
    let averaged = time_average_frames(frames)?;
    let fm = FrameMaps::compute(&averaged, array, cfg)?;
    if let Some(dir) = out {
        save_ply(&averaged, &dir.join("averaged.ply"))?;
        fm.write_csv(&dir.join("averaged.csv"))?;
    }
    Ok(fm)
}

/// An IF cube with the template indices of its scatterers.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub cube: IFCube,
    pub centers: Vec<usize>,
}

impl Synthesis {
    /// `centers.json`, plus `cube.bin` and its sidecar when `with_cube` is set.
    pub fn write(&self, dir: &Path, with_cube: bool) -> Result<(), EvalError> {
        io::write_json(&dir.join("centers.json"), &self.centers)?;
        if with_cube {
            self.cube.write(&dir.join("cube.bin"))?;
        }
        Ok(())
    }
}

fn frame_times(frames: &[PointCloudFrame]) -> Vec<f64> {
    frames.iter().map(|f| f.timestamp).collect()
}

/// Time-varying centers from the per-frame maps: the index set over the
/// element-combined maps, amplitudes from each element's map and ranges
/// from the registered positions. Centers are reported as map indices.
pub fn synth_proposed(
    maps: &[FrameMaps],
    array: &VirtualArray,
    cfg: &PipelineConfig,
    grid: &SlowGrid,
) -> Result<Synthesis, EvalError> {
    let combined = maps.iter().map(FrameMaps::combined).collect::<Result<Vec<_>, _>>()?;
    let set = select_index_set(&combined, cfg.radar.theta_thresh)?;
    let n_elem = array.len();
    let peak = set
        .iter()
        .flat_map(|&k| maps.iter().flat_map(move |fm| fm.maps.iter().map(move |m| m.magnitudes[k])))
        .fold(0.0, f64::max);
    let times: Vec<f64> = maps.iter().map(|fm| fm.timestamp).collect();
    let centers = set
        .iter()
        .map(|&k| {
            let ranges: Vec<Vec<f64>> = (0..n_elem)
                .map(|e| maps.iter().map(|fm| bistatic_range(array, e, &fm.points[k])).collect())
                .collect();
            let amps: Vec<Vec<f64>> = (0..n_elem)
                .map(|e| maps.iter().map(|fm| fm.maps[e].magnitudes[k] / peak).collect())
                .collect();
            resample_center(k, &times, &ranges, &amps, grid, cfg.radar.eta())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cube = synth_if_proposed(&centers, &cfg.radar.chirp, grid, n_elem)?;
    Ok(Synthesis { cube, centers: set })
}

/// Half-width in frames of a centered moving average spanning `window_s`.
fn track_half_width(times: &[f64], window_s: f64) -> usize {
    if times.len() < 2 || window_s <= 0.0 {
        return 0;
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    (0.5 * window_s / dt).round() as usize
}

/// Fixed centers picked on the averaged cloud, tracked along each element's
/// line of sight, with constant amplitudes. The tracks are smoothed over
/// `radar.track_smoothing_s` first, since single depth samples carry the
/// full camera noise.
pub fn synth_conventional(
    frames: &[PointCloudFrame],
    averaged: &FrameMaps,
    array: &VirtualArray,
    cfg: &PipelineConfig,
    grid: &SlowGrid,
) -> Result<Synthesis, EvalError> {
    let combined = averaged.combined()?;
    let picked = select_centers_conventional(&combined, &averaged.points, cfg.radar.theta_scat)?;
    let peak = picked
        .iter()
        .flat_map(|&k| averaged.maps.iter().map(move |m| m.magnitudes[k]))
        .fold(0.0, f64::max);
    // [element][center][frame]
    let tracks = array
        .elements
        .iter()
        .map(|el| track_centers_conventional(frames, &averaged.points, &picked, &el.phase_center))
        .collect::<Result<Vec<_>, _>>()?;
    let times = frame_times(frames);
    let half = track_half_width(&times, cfg.radar.track_smoothing_s);
    let centers = picked
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let ranges: Vec<Vec<f64>> = tracks.iter().map(|t| moving_average(&t[c], half)).collect();
            let amps: Vec<f64> = averaged.maps.iter().map(|m| m.magnitudes[k] / peak).collect();
            resample_center_constant(k, &times, &ranges, &amps, grid, cfg.radar.eta())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cube = synth_if_conventional(&centers, &cfg.radar.chirp, grid, array.len())?;
    Ok(Synthesis {
        cube,
        centers: picked,
    })
}

/// DSP output up to the raw displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub power: PowerMap,
    pub pixel: Pixel,
    pub series: Vec<Complex64>,
    pub raw: DisplacementWaveform,
}

impl Recovered {
    /// `power_map.csv`, `pixel.json`, `iq.csv` and `displacement_raw.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        self.power.write_csv(&dir.join("power_map.csv"))?;
        io::write_json(&dir.join("pixel.json"), &self.pixel)?;
        let rows: Vec<Vec<f64>> = self
            .series
            .iter()
            .enumerate()
            .map(|(i, z)| vec![i as f64 / self.raw.rate, z.re, z.im, z.norm()])
            .collect();
        io::write_csv(&dir.join("iq.csv"), &["t_s", "re", "im", "magnitude"], &rows)?;
        self.raw.write_csv(&dir.join("displacement_raw.csv"))?;
        Ok(())
    }
}

fn beam_at(
    cube: &IFCube,
    array: &VirtualArray,
    dsp: &DspConfig,
    wavelength: f64,
    pixel: Option<Pixel>,
) -> Result<(PowerMap, Pixel, Vec<Complex64>), EvalError> {
    let profiles = range_profile(cube, &dsp.range_options())?;
    let bf = Beamformer::new(array, dsp.thetas(), wavelength, dsp.spacing)?;
    let power = mean_power_map(&profiles, array, &bf)?;
    let pixel = match pixel {
        Some(p) => p,
        None => select_peak(&power)?,
    };
    let series = beam_series(&profiles, array, &bf, &pixel)?;
    Ok((power, pixel, series))
}

/// Range FFT, beamforming, peak pick (unless `pixel` is given) and phase
/// to displacement.
pub fn recover(
    cube: &IFCube,
    array: &VirtualArray,
    dsp: &DspConfig,
    wavelength: f64,
    pixel: Option<Pixel>,
) -> Result<Recovered, EvalError> {
    let (power, pixel, series) = beam_at(cube, array, dsp, wavelength, pixel)?;
    let raw = displacement(&series, wavelength, cube.slow_rate)?;
    Ok(Recovered {
        power,
        pixel,
        series,
        raw,
    })
}

/// Compares `|S(t)|` of two cubes at one pixel: `pixel`, or the peak of
/// `cube_a` when `None`. RMS error is in cube amplitude units.
pub fn iq_magnitude_compare(
    cube_a: &IFCube,
    cube_b: &IFCube,
    array: &VirtualArray,
    dsp: &DspConfig,
    wavelength: f64,
    pixel: Option<Pixel>,
    max_lag_s: f64,
) -> Result<MetricReport, EvalError> {
    if cube_a.header() != cube_b.header() {
        return Err(EvalError::InvalidConfig(format!(
            "cubes differ in grids: {:?} vs {:?}",
            cube_a.header(),
            cube_b.header()
        )));
    }
    let (_, pixel, sa) = beam_at(cube_a, array, dsp, wavelength, pixel)?;
    let (_, _, sb) = beam_at(cube_b, array, dsp, wavelength, Some(pixel))?;
    let ma: Vec<f64> = sa.iter().map(|z| z.norm()).collect();
    let mb: Vec<f64> = sb.iter().map(|z| z.norm()).collect();
    Ok(MetricReport::compare(&mb, &ma, cube_a.slow_rate, max_lag_s, false)?)
}

/// Respiration cycles covered by `seconds` at the fastest configured rate.
pub fn respiration_cycles(cfg: &PipelineConfig, seconds: f64) -> f64 {
    let rate = cfg.scene.bumps().iter().map(|b| b.rate).fold(0.0, f64::max);
    seconds * rate
}

/// The primary site's displacement as range change seen from the radar
/// (outward motion shortens the path), splined onto `grid`.
pub fn analytic_truth(scene: &Scene, grid: &SlowGrid) -> Result<DisplacementWaveform, EvalError> {
    let neg: Vec<f64> = scene.truth.displacement.iter().map(|d| -d).collect();
    let spline = CubicSpline::new(&scene.truth.times, &neg)?;
    let mut values: Vec<f64> = grid.times().iter().map(|&t| spline.eval(t)).collect();
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= m);
    Ok(DisplacementWaveform {
        values,
        rate: grid.rate,
        smoothed: false,
    })
}

pub const MODE_PROPOSED: &str = "proposed";
pub const MODE_CONVENTIONAL: &str = "conventional";
pub const TRUTH: &str = "truth";

/// One scored comparison, RMS in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mode: String,
    pub truth: String,
    pub smoothed: bool,
    pub rms_error_mm: f64,
    pub max_xcorr: f64,
    pub lag_s: f64,
    pub pcc: f64,
}

impl ReportRow {
    pub fn new(mode: &str, truth: &str, r: &MetricReport) -> Self {
        ReportRow {
            mode: mode.to_string(),
            truth: truth.to_string(),
            smoothed: r.smoothed,
            rms_error_mm: r.rms_error_mm(),
            max_xcorr: r.max_xcorr,
            lag_s: r.lag_s,
            pcc: r.pcc,
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub t_obs_s: f64,
    pub template_points: usize,
    pub camera_points: usize,
    pub slow_samples: usize,
    /// Scatterer count per cube.
    pub centers: BTreeMap<String, usize>,
    pub pixels: BTreeMap<String, Pixel>,
    pub rows: Vec<ReportRow>,
    /// `|S(t)|` of the conventional cube against the proposed one, at the
    /// proposed cube's pixel. Present when both modes run.
    pub iq_magnitude: Option<ReportRow>,
    /// Wall-clock seconds per stage, keyed `stage` or `mode/stage`. Kept
    /// out of `report.json` so reruns compare byte for byte; written to
    /// `timing.json` instead.
    #[serde(skip)]
    pub stage_seconds: BTreeMap<String, f64>,
}

impl PipelineReport {
    pub fn row(&self, mode: &str, truth: &str, smoothed: bool) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.truth == truth && r.smoothed == smoothed)
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    stage: Stage,
    message: &'a str,
}

/// Runs every stage, writing artifacts under `out` as it goes. On failure
/// the artifacts written so far stay in place next to `error.json`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineReport, PipelineError> {
    let result = run_stages(cfg, out);
    if let Err(e) = &result {
        let msg = e.source.to_string();
        let _ = io::write_json(
            &out.join("error.json"),
            &ErrorRecord {
                stage: e.stage,
                message: &msg,
            },
        );
    }
    result
}

struct Clock {
    last: Instant,
    laps: BTreeMap<String, f64>,
}

impl Clock {
    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        *self.laps.entry(name.to_string()).or_default() += (now - self.last).as_secs_f64();
        self.last = now;
    }
}

struct ModeOutput {
    name: &'static str,
    synthesis: Synthesis,
    recovered: Recovered,
}

fn run_stages(cfg: &PipelineConfig, out: &Path) -> Result<PipelineReport, PipelineError> {
    use Stage::{Config, Dsp, Metrics, Register, Scatter, Synth};
    cfg.validate().at(Config)?;
    io::write_json(&out.join("config.json"), cfg).at(Config)?;
    let array = cfg.radar.array.build().at(Config)?;
    let wavelength = cfg.radar.chirp.wavelength();
    let bulk = cfg.write_bulk_artifacts;
    let dir = |name: &str| out.join(name);

    let mut clock = Clock {
        last: Instant::now(),
        laps: BTreeMap::new(),
    };
    let scene = Scene::generate(&cfg.scene_config()).at(Stage::Scene)?;
    scene.write(&dir("scene"), bulk).at(Stage::Scene)?;
    clock.lap("scene");
    let grid = SlowGrid::spanning(&scene.truth.times, cfg.radar.chirp.slow_rate).at(Synth)?;

    let mut modes: Vec<ModeOutput> = Vec::new();
    if cfg.mode.runs_proposed() {
        let d = dir(MODE_PROPOSED);
        let reg_dir = d.join("registered");
        let setup = RegistrationSetup::new(&scene.template, &scene.frames[0], cfg);
        io::write_json(&reg_dir.join("setup.json"), &setup).at(Register)?;
        let weights = register_frames(
            &scene.template,
            &scene.frames,
            &setup,
            &cfg.cpd,
            cfg.warm_max_iters,
            bulk.then_some(&*reg_dir),
        )
        .at(Register)?;
        clock.lap("proposed/register");
        let maps_dir = d.join("maps");
        let times = frame_times(&scene.frames);
        let maps = scatter_proposed(
            &scene.template,
            &setup,
            &weights,
            &times,
            &array,
            cfg,
            bulk.then_some(&*maps_dir),
        )
        .at(Scatter)?;
        clock.lap("proposed/scatter");
        let synthesis = synth_proposed(&maps, &array, cfg, &grid).at(Synth)?;
        clock.lap("proposed/synth");
        drop(maps);
        synthesis.write(&d, bulk).at(Synth)?;
        let recovered = recover(&synthesis.cube, &array, &cfg.dsp, wavelength, None).at(Dsp)?;
        recovered.write(&d).at(Dsp)?;
        clock.lap("proposed/dsp");
        modes.push(ModeOutput {
            name: MODE_PROPOSED,
            synthesis,
            recovered,
        });
    }
    if cfg.mode.runs_conventional() {
        let d = dir(MODE_CONVENTIONAL);
        let maps_dir = d.join("maps");
        let averaged =
            scatter_conventional(&scene.frames, &array, cfg, bulk.then_some(&*maps_dir))
                .at(Scatter)?;
        clock.lap("conventional/scatter");
        let synthesis = synth_conventional(&scene.frames, &averaged, &array, cfg, &grid).at(Synth)?;
        clock.lap("conventional/synth");
        synthesis.write(&d, bulk).at(Synth)?;
        let recovered = recover(&synthesis.cube, &array, &cfg.dsp, wavelength, None).at(Dsp)?;
        recovered.write(&d).at(Dsp)?;
        clock.lap("conventional/dsp");
        modes.push(ModeOutput {
            name: MODE_CONVENTIONAL,
            synthesis,
            recovered,
        });
    }

    // Metrics.
    let record_s = scene.frames.len() as f64 / cfg.scene.frame_rate;
    let cycles = respiration_cycles(cfg, record_s);
    if cycles < MIN_CYCLES {
        return Err(EvalError::TooFewCycles {
            cycles,
            need: MIN_CYCLES,
        })
        .at(Metrics);
    }
    let smooth = |w: &DisplacementWaveform| {
        smooth_detrend(w, cfg.dsp.smooth_window_s, cfg.dsp.detrend_window_s)
    };
    let score = |rec: &DisplacementWaveform, truth: &DisplacementWaveform, smoothed: bool| {
        MetricReport::compare(&rec.values, &truth.values, grid.rate, cfg.max_lag_s, smoothed)
    };
    let truth = analytic_truth(&scene, &grid).at(Metrics)?;
    let truth_sm = smooth(&truth).at(Metrics)?;
    truth.write_csv(&dir(TRUTH).join("displacement_raw.csv")).at(Metrics)?;
    truth_sm.write_csv(&dir(TRUTH).join("displacement_smoothed.csv")).at(Metrics)?;

    let mut rows = Vec::new();
    for m in &modes {
        let sm = smooth(&m.recovered.raw).at(Metrics)?;
        sm.write_csv(&dir(m.name).join("displacement_smoothed.csv")).at(Metrics)?;
        let raw = score(&m.recovered.raw, &truth, false).at(Metrics)?;
        rows.push(ReportRow::new(m.name, TRUTH, &raw));
        let sm = score(&sm, &truth_sm, true).at(Metrics)?;
        rows.push(ReportRow::new(m.name, TRUTH, &sm));
    }

    let iq_magnitude = match (
        modes.iter().find(|m| m.name == MODE_PROPOSED),
        modes.iter().find(|m| m.name == MODE_CONVENTIONAL),
    ) {
        (Some(p), Some(c)) => {
            let r = iq_magnitude_compare(
                &p.synthesis.cube,
                &c.synthesis.cube,
                &array,
                &cfg.dsp,
                wavelength,
                Some(p.recovered.pixel),
                cfg.max_lag_s,
            )
            .at(Metrics)?;
            Some(ReportRow::new(MODE_CONVENTIONAL, MODE_PROPOSED, &r))
        }
        _ => None,
    };

    let mut centers = BTreeMap::new();
    let mut pixels = BTreeMap::new();
    for m in &modes {
        centers.insert(m.name.to_string(), m.synthesis.centers.len());
        pixels.insert(m.name.to_string(), m.recovered.pixel);
    }
    clock.lap("metrics");
    let report = PipelineReport {
        seed: cfg.scene.seed,
        t_obs_s: cfg.t_obs_s,
        template_points: scene.template.len(),
        camera_points: scene.frames.first().map_or(0, PointCloudFrame::len),
        slow_samples: grid.n,
        centers,
        pixels,
        rows,
        iq_magnitude,
        stage_seconds: clock.laps,
    };
    io::write_json(&out.join("report.json"), &report).at(Metrics)?;
    io::write_json(&out.join("timing.json"), &report.stage_seconds).at(Metrics)?;
    Ok(report)
}
