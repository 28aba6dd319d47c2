//! FMCW MIMO radar model: virtual array layout, scattering-center selection
//! and tracking, and IF-signal synthesis.
//!
//! Both synthesis modes share one kernel. A scatterer `k` seen by virtual
//! element `i` contributes
//!
//! ```text
//! A_ik(t) · η · exp{ j4π (γ R_ik(t) τ / c + f_min R_ik(t) / c) }
//! ```
//!
//! to the IF sample at fast time `τ` and slow time `t`. The conventional mode
//! holds `A_ik` constant; the proposed mode resamples a per-frame amplitude
//! series onto the slow-time grid.

use std::f64::consts::PI;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::em_scatter::{
    contribution_magnitudes, scattering_map_with, DipoleSource, EmConstants, EmError, EyeWindows, ScatteringMap,
    SurfaceCurrents,
};
use crate::geometry::{Point3, UniformGrid, PointCloudFrame, SurfaceSampling};
use crate::io::{self, IoError};
use crate::{par, SPEED_OF_LIGHT};

#[derive(Debug, thiserror::Error)]
pub enum RadarError {
    #[error("no scattering center reaches threshold {theta}")]
    EmptySelection { theta: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Chirp and sampling parameters. Defaults: 77.2–80.8 GHz sweep (79 GHz
/// center), 64 µs chirps, 256 complex samples at 4 MHz, 100 Hz slow time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChirpParams {
    pub f_min: f64,
    pub bandwidth: f64,
    pub chirp_duration: f64,
    /// Slope `B / T_c`; kept in sync by [`ChirpParams::new`] and checked by
    /// [`ChirpParams::validate`].
    pub gamma: f64,
    pub n_fast: usize,
    pub fs_fast: f64,
    pub slow_rate: f64,
}

impl Default for ChirpParams {
    fn default() -> Self {
        ChirpParams::new(77.2e9, 3.6e9, 64e-6, 256, 4e6, 100.0)
            .expect("default chirp is valid")
    }
}

impl ChirpParams {
    pub fn new(
        f_min: f64,
        bandwidth: f64,
        chirp_duration: f64,
        n_fast: usize,
        fs_fast: f64,
        slow_rate: f64,
    ) -> Result<Self, RadarError> {
        let c = ChirpParams {
            f_min,
            bandwidth,
            chirp_duration,
            gamma: bandwidth / chirp_duration,
            n_fast,
            fs_fast,
            slow_rate,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), RadarError> {
        let positive = [
            self.f_min,
            self.bandwidth,
            self.chirp_duration,
            self.fs_fast,
            self.slow_rate,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.n_fast == 0 {
            return Err(RadarError::InvalidArgument(
                "chirp parameters must be positive and finite".into(),
            ));
        }
        let g = self.bandwidth / self.chirp_duration;
        if ((self.gamma - g) / g).abs() > 1e-12 {
            return Err(RadarError::InvalidArgument(format!(
                "gamma {} inconsistent with B/T_c = {g}",
                self.gamma
            )));
        }
        if self.n_fast as f64 / self.fs_fast > self.chirp_duration * (1.0 + 1e-12) {
            return Err(RadarError::InvalidArgument(
                "fast-time record is longer than the chirp".into(),
            ));
        }
        Ok(())
    }

    pub fn center_frequency(&self) -> f64 {
        self.f_min + 0.5 * self.bandwidth
    }

    /// Wavelength at the center frequency.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    /// Range corresponding to beat frequency `f`.
    pub fn range_of_beat(&self, f: f64) -> f64 {
        f * SPEED_OF_LIGHT / (2.0 * self.gamma)
    }

    /// Largest alias-free range for complex sampling.
    pub fn max_range(&self) -> f64 {
        self.range_of_beat(self.fs_fast)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualElement {
    pub tx_index: usize,
    pub rx_index: usize,
    pub phase_center: Point3,
}

/// Linear MIMO array. Elements are Tx-major (`index = tx · n_rx + rx`), so
/// with `tx_pitch = n_rx · rx_pitch` the phase centers ascend along `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualArray {
    pub tx_positions: Vec<Point3>,
    pub rx_positions: Vec<Point3>,
    pub elements: Vec<VirtualElement>,
    pub axis: Vector3<f64>,
}

pub fn build_virtual_array(
    n_tx: usize,
    tx_pitch: f64,
    n_rx: usize,
    rx_pitch: f64,
    array_origin: Point3,
    axis: Vector3<f64>,
) -> Result<VirtualArray, RadarError> {
    if n_tx == 0 || n_rx == 0 || !(tx_pitch > 0.0) || !(rx_pitch > 0.0) {
        return Err(RadarError::InvalidArgument(
            "array needs at least one Tx and Rx and positive pitches".into(),
        ));
    }
    let norm = axis.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(RadarError::InvalidArgument("array axis must be nonzero".into()));
    }
    let axis = axis / norm;
    let tx: Vec<Point3> = (0..n_tx)
        .map(|i| array_origin + axis * (i as f64 * tx_pitch))
        .collect();
    let rx: Vec<Point3> = (0..n_rx)
        .map(|j| array_origin + axis * (j as f64 * rx_pitch))
        .collect();
    let mut elements = Vec::with_capacity(n_tx * n_rx);
    for (ti, t) in tx.iter().enumerate() {
        for (ri, r) in rx.iter().enumerate() {
            elements.push(VirtualElement {
                tx_index: ti,
                rx_index: ri,
                phase_center: (t + r) * 0.5,
            });
        }
    }
    Ok(VirtualArray {
        tx_positions: tx,
        rx_positions: rx,
        elements,
        axis,
    })
}

impl VirtualArray {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Consecutive phase-center spacings projected on the axis.
    pub fn spacings(&self) -> Vec<f64> {
        self.elements
            .windows(2)
            .map(|w| (w[1].phase_center - w[0].phase_center).dot(&self.axis))
            .collect()
    }

    /// Mean spacing and its variance; a single element has pitch 0.
    pub fn pitch_stats(&self) -> (f64, f64) {
        let s = self.spacings();
        if s.is_empty() {
            return (0.0, 0.0);
        }
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    pub fn aperture(&self) -> f64 {
        match (self.elements.first(), self.elements.last()) {
            (Some(a), Some(b)) => (b.phase_center - a.phase_center).dot(&self.axis),
            _ => 0.0,
        }
    }

    /// Midpoint of the phase centers.
    pub fn center(&self) -> Point3 {
        let n = self.elements.len().max(1) as f64;
        self.elements.iter().map(|e| e.phase_center).sum::<Point3>() / n
    }

    /// Azimuth of `p` as seen from the array center with boresight `boresight`.
    /// Positive angles lie toward decreasing axis coordinate, which is the
    /// direction the beamformer's `exp(-j…i d₀ sin θ)` weights steer to.
    pub fn azimuth_of(&self, p: &Point3, boresight: &Vector3<f64>) -> f64 {
        let d = p - self.center();
        (-d.dot(&self.axis)).atan2(d.dot(boresight))
    }
}

/// Per-element amplitude of a scatterer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Amplitude {
    Constant(f64),
    /// One value per slow-time sample.
    Series(Vec<f64>),
}

impl Amplitude {
    #[inline]
    fn at(&self, t: usize) -> f64 {
        match self {
            Amplitude::Constant(a) => *a,
            Amplitude::Series(s) => s[t],
        }
    }
}

/// A scatterer `k` with its per-element range trajectories on the slow-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterCenter {
    pub index: usize,
    /// `[element][slow]`, meters.
    pub trajectory: Vec<Vec<f64>>,
    /// One per element.
    pub amplitude: Vec<Amplitude>,
    pub eta: Complex64,
}

impl ScatterCenter {
    fn check(&self, n_elem: usize, n_slow: usize) -> Result<(), RadarError> {
        if self.trajectory.len() != n_elem || self.amplitude.len() != n_elem {
            return Err(RadarError::Shape(format!(
                "center {} has {} trajectories and {} amplitudes for {n_elem} elements",
                self.index,
                self.trajectory.len(),
                self.amplitude.len()
            )));
        }
        if ((self.eta.norm() - 1.0).abs()) > 1e-12 {
            return Err(RadarError::InvalidArgument(format!(
                "center {}: |eta| = {} is not 1",
                self.index,
                self.eta.norm()
            )));
        }
        for (tr, amp) in self.trajectory.iter().zip(&self.amplitude) {
            if tr.len() != n_slow {
                return Err(RadarError::Shape(format!(
                    "center {}: trajectory has {} samples, grid has {n_slow}",
                    self.index,
                    tr.len()
                )));
            }
            if tr.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(RadarError::InvalidArgument(format!(
                    "center {}: ranges must be positive",
                    self.index
                )));
            }
            match amp {
                Amplitude::Series(s) if s.len() != n_slow => {
                    return Err(RadarError::Shape(format!(
                        "center {}: amplitude series has {} samples, grid has {n_slow}",
                        self.index,
                        s.len()
                    )))
                }
                Amplitude::Series(s) if s.iter().any(|a| !a.is_finite()) => {
                    return Err(RadarError::InvalidArgument("non-finite amplitude".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Uniform slow-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowGrid {
    pub t0: f64,
    pub rate: f64,
    pub n: usize,
}

impl SlowGrid {
    /// Densest grid at `rate` that stays inside `[first, last]` of `frame_times`.
    pub fn spanning(frame_times: &[f64], rate: f64) -> Result<Self, RadarError> {
        let (Some(&t0), Some(&t1)) = (frame_times.first(), frame_times.last()) else {
            return Err(RadarError::InvalidArgument("no frames".into()));
        };
        if !(rate > 0.0) || !(t1 >= t0) {
            return Err(RadarError::InvalidArgument("bad slow-time span".into()));
        }
        // Small slack so a span that is an exact multiple of 1/rate keeps its end.
        let n = ((t1 - t0) * rate + 1e-9).floor() as usize + 1;
        Ok(SlowGrid { t0, rate, n })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.time(i)).collect()
    }
}

/// Natural cubic spline through `(x, y)` with strictly increasing `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self, RadarError> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(RadarError::Shape(format!("{} knots for {} values", n, y.len())));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RadarError::InvalidArgument("knots must increase".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for j in 0..k {
                let (h0, h1) = (x[j + 1] - x[j], x[j + 2] - x[j + 1]);
                diag[j] = 2.0 * (h0 + h1);
                upper[j] = h1;
                rhs[j] = 6.0 * ((y[j + 2] - y[j + 1]) / h1 - (y[j + 1] - y[j]) / h0);
            }
            for j in 1..k {
                let lower = x[j + 1] - x[j];
                let f = lower / diag[j - 1];
                diag[j] -= f * upper[j - 1];
                rhs[j] -= f * rhs[j - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
            }
        }
        Ok(CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    /// Value at `t`; outside the knots the end segments are extended.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return self.y[0];
        }
        let j = segment(&self.x, t);
        let (x0, x1) = (self.x[j], self.x[j + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - t) / h, (t - x0) / h);
        a * self.y[j]
            + b * self.y[j + 1]
            + ((a * a * a - a) * self.m[j] + (b * b * b - b) * self.m[j + 1]) * h * h / 6.0
    }
}

/// Index `j` with `x[j] <= t < x[j+1]`, clamped to the first/last segment.
fn segment(x: &[f64], t: f64) -> usize {
    let p = x.partition_point(|&v| v <= t);
    p.saturating_sub(1).min(x.len() - 2)
}

/// Piecewise-linear interpolation, extended flat outside the knots.
pub fn interp_linear(x: &[f64], y: &[f64], t: f64) -> f64 {
    if x.len() == 1 || t <= x[0] {
        return y[0];
    }
    if t >= x[x.len() - 1] {
        return y[y.len() - 1];
    }
    let j = segment(x, t);
    let f = (t - x[j]) / (x[j + 1] - x[j]);
    y[j] + (y[j + 1] - y[j]) * f
}

/// Resamples frame-rate ranges (cubic spline) and amplitudes (linear) onto
/// `grid`. `ranges` and `amplitudes` are `[element][frame]`.
pub fn resample_center(
    index: usize,
    frame_times: &[f64],
    ranges: &[Vec<f64>],
    amplitudes: &[Vec<f64>],
    grid: &SlowGrid,
    eta: Complex64,
) -> Result<ScatterCenter, RadarError> {
    if ranges.len() != amplitudes.len() {
        return Err(RadarError::Shape("ranges and amplitudes differ in element count".into()));
    }
    let times = grid.times();
    let mut trajectory = Vec::with_capacity(ranges.len());
    let mut amplitude = Vec::with_capacity(ranges.len());
    for (r, a) in ranges.iter().zip(amplitudes) {
        if r.len() != frame_times.len() || a.len() != frame_times.len() {
            return Err(RadarError::Shape("series length differs from frame count".into()));
        }
        let spline = CubicSpline::new(frame_times, r)?;
        trajectory.push(times.iter().map(|&t| spline.eval(t)).collect());
        amplitude.push(Amplitude::Series(
            times.iter().map(|&t| interp_linear(frame_times, a, t)).collect(),
        ));
    }
    Ok(ScatterCenter {
        index,
        trajectory,
        amplitude,
        eta,
    })
}

/// Resamples ranges only and attaches constant per-element amplitudes.
pub fn resample_center_constant(
    index: usize,
    frame_times: &[f64],
    ranges: &[Vec<f64>],
    amplitudes: &[f64],
    grid: &SlowGrid,
    eta: Complex64,
) -> Result<ScatterCenter, RadarError> {
    if ranges.len() != amplitudes.len() {
        return Err(RadarError::Shape("ranges and amplitudes differ in element count".into()));
    }
    let times = grid.times();
    let mut trajectory = Vec::with_capacity(ranges.len());
    for r in ranges {
        if r.len() != frame_times.len() {
            return Err(RadarError::Shape("series length differs from frame count".into()));
        }
        let spline = CubicSpline::new(frame_times, r)?;
        trajectory.push(times.iter().map(|&t| spline.eval(t)).collect());
    }
    Ok(ScatterCenter {
        index,
        trajectory,
        amplitude: amplitudes.iter().map(|&a| Amplitude::Constant(a)).collect(),
        eta,
    })
}

/// Indices that are strict local maxima within the map's eye radius and
/// whose squared magnitude reaches `theta_scat` of the largest.
pub fn select_centers_conventional(
    map: &ScatteringMap,
    points: &[Point3],
    theta_scat: f64,
) -> Result<Vec<usize>, RadarError> {
    if map.is_empty() || map.len() != points.len() {
        return Err(RadarError::Shape(format!(
            "map of {} values over {} points",
            map.len(),
            points.len()
        )));
    }
    check_theta(theta_scat)?;
    let a0 = map.eye_radius;
    let mags = &map.magnitudes;
    let peak2 = mags.iter().map(|m| m * m).fold(0.0, f64::max);
    let grid = UniformGrid::new(points, a0);
    let picked: Vec<usize> = (0..points.len())
        .filter(|&i| {
            mags[i] * mags[i] >= theta_scat * peak2
                && mags[i] > 0.0
                && grid
                    .within(points, &points[i], a0)
                    .into_iter()
                    .all(|j| j == i || mags[i] > mags[j])
        })
        .collect();
    if picked.is_empty() {
        return Err(RadarError::EmptySelection { theta: theta_scat });
    }
    Ok(picked)
}

fn check_theta(theta: f64) -> Result<(), RadarError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(RadarError::InvalidArgument(format!(
            "threshold {theta} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Line-of-sight tracking: for each frame and center, the frame point whose
/// direction from `phase_center` best matches the direction to the averaged
/// point. Returns `[center][frame]` ranges.
pub fn track_centers_conventional(
    frames: &[PointCloudFrame],
    averaged: &[Point3],
    centers: &[usize],
    phase_center: &Point3,
) -> Result<Vec<Vec<f64>>, RadarError> {
    let mut dirs = Vec::with_capacity(centers.len());
    for &k in centers {
        let p = averaged.get(k).ok_or_else(|| {
            RadarError::Shape(format!("center {k} outside averaged cloud of {}", averaged.len()))
        })?;
        dirs.push(unit(&(p - phase_center))?);
    }
    let per_frame: Vec<Vec<f64>> = par::map_range(frames.len(), |f| {
        dirs.iter()
            .map(|d| {
                let j = best_aligned(&frames[f].points, phase_center, d);
                (frames[f].points[j] - phase_center).norm()
            })
            .collect()
    });
    Ok((0..centers.len())
        .map(|c| per_frame.iter().map(|row| row[c]).collect())
        .collect())
}

fn unit(v: &Vector3<f64>) -> Result<Vector3<f64>, RadarError> {
    let n = v.norm();
    if !(n > 0.0) {
        return Err(RadarError::InvalidArgument("point coincides with the phase center".into()));
    }
    Ok(v / n)
}

/// Index of the point maximizing the cosine to `dir`; ties go to the lower index.
pub fn best_aligned(points: &[Point3], origin: &Point3, dir: &Vector3<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, q) in points.iter().enumerate() {
        let v = q - origin;
        let n = v.norm();
        let cos = if n > 0.0 { v.dot(dir) / n } else { f64::NEG_INFINITY };
        if cos > best.1 {
            best = (j, cos);
        }
    }
    best.0
}

/// Template indices scattering at least `theta_thresh` of the overall peak
/// power in some frame.
pub fn select_index_set(maps: &[ScatteringMap], theta_thresh: f64) -> Result<Vec<usize>, RadarError> {
    check_theta(theta_thresh)?;
    let Some(first) = maps.first() else {
        return Err(RadarError::EmptySelection { theta: theta_thresh });
    };
    let m = first.len();
    if maps.iter().any(|mp| mp.len() != m) {
        return Err(RadarError::Shape("maps differ in length".into()));
    }
    let peak2 = maps
        .iter()
        .flat_map(|mp| mp.magnitudes.iter())
        .map(|v| v * v)
        .fold(0.0, f64::max);
    let best: Vec<f64> = (0..m)
        .map(|k| maps.iter().map(|mp| mp.magnitudes[k].powi(2)).fold(0.0, f64::max))
        .collect();
    let set: Vec<usize> = (0..m)
        .filter(|&k| best[k] > 0.0 && best[k] >= theta_thresh * peak2)
        .collect();
    if set.is_empty() {
        return Err(RadarError::EmptySelection { theta: theta_thresh });
    }
    Ok(set)
}

/// Element-combined map, `sqrt(mean_i |E_i|²)`.
pub fn combine_maps(maps: &[ScatteringMap]) -> Result<ScatteringMap, RadarError> {
    let Some(first) = maps.first() else {
        return Err(RadarError::InvalidArgument("no maps to combine".into()));
    };
    if maps.iter().any(|mp| mp.len() != first.len()) {
        return Err(RadarError::Shape("maps differ in length".into()));
    }
    let n = maps.len() as f64;
    let magnitudes = (0..first.len())
        .map(|k| (maps.iter().map(|mp| mp.magnitudes[k].powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok(ScatteringMap {
        observation_point: first.observation_point,
        magnitudes,
        eye_radius: first.eye_radius,
    })
}

/// Illumination settings shared by every virtual element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illumination {
    pub consts: EmConstants,
    pub dipole_axis: Vector3<f64>,
    pub moment: f64,
    pub a0: f64,
    pub shadowing: bool,
}

/// Scattering map per virtual element: source at the element's Tx, observer
/// at its Rx. Currents are computed once per Tx.
pub fn element_maps(
    sampling: &SurfaceSampling,
    array: &VirtualArray,
    illum: &Illumination,
) -> Result<Vec<ScatteringMap>, RadarError> {
    let windows = EyeWindows::new(&sampling.points.points, illum.a0)?;
    element_maps_with(sampling, &windows, array, illum)
}

/// [`element_maps`] for windows centered anywhere, e.g. on a sparse subset
/// of a dense sampling.
pub fn element_maps_with(
    sampling: &SurfaceSampling,
    windows: &EyeWindows,
    array: &VirtualArray,
    illum: &Illumination,
) -> Result<Vec<ScatteringMap>, RadarError> {
    let mut currents = Vec::with_capacity(array.tx_positions.len());
    for tx in &array.tx_positions {
        let src = DipoleSource::new(*tx, illum.dipole_axis, illum.moment)?;
        currents.push(SurfaceCurrents::compute(sampling, &src, &illum.consts, illum.shadowing)?);
    }
    array
        .elements
        .iter()
        .map(|e| {
            scattering_map_with(
                &currents[e.tx_index],
                windows,
                &illum.consts,
                &array.rx_positions[e.rx_index],
            )
            .map_err(RadarError::from)
        })
        .collect()
}

/// Per-sample contribution magnitudes `[element][sample]`, without eye
/// windowing. Each sample is then a scatterer of its own.
pub fn element_contributions(
    sampling: &SurfaceSampling,
    array: &VirtualArray,
    illum: &Illumination,
) -> Result<Vec<Vec<f64>>, RadarError> {
    let mut currents = Vec::with_capacity(array.tx_positions.len());
    for tx in &array.tx_positions {
        let src = DipoleSource::new(*tx, illum.dipole_axis, illum.moment)?;
        currents.push(SurfaceCurrents::compute(sampling, &src, &illum.consts, illum.shadowing)?);
    }
    array
        .elements
        .iter()
        .map(|e| {
            contribution_magnitudes(
                &currents[e.tx_index],
                &illum.consts,
                &array.rx_positions[e.rx_index],
            )
            .map_err(RadarError::from)
        })
        .collect()
}

/// Half the Tx → `p` → Rx path of element `e`, the one-way-equivalent range.
pub fn bistatic_range(array: &VirtualArray, e: usize, p: &Point3) -> f64 {
    let el = &array.elements[e];
    0.5 * ((p - array.tx_positions[el.tx_index]).norm()
        + (p - array.rx_positions[el.rx_index]).norm())
}

/// Complex IF samples, `[element][slow][fast]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IFCube {
    pub n_elements: usize,
    pub n_fast: usize,
    pub n_slow: usize,
    pub fs_fast: f64,
    pub slow_rate: f64,
    pub f_min: f64,
    pub gamma: f64,
    pub samples: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub n_elements: u64,
    pub n_fast: u64,
    pub n_slow: u64,
    pub fs_fast: f64,
    pub slow_rate: f64,
    pub f_min: f64,
    pub gamma: f64,
}

impl IFCube {
    pub fn zeros(n_elements: usize, n_slow: usize, chirp: &ChirpParams) -> Self {
        IFCube {
            n_elements,
            n_fast: chirp.n_fast,
            n_slow,
            fs_fast: chirp.fs_fast,
            slow_rate: chirp.slow_rate,
            f_min: chirp.f_min,
            gamma: chirp.gamma,
            samples: vec![Complex64::new(0.0, 0.0); n_elements * n_slow * chirp.n_fast],
        }
    }

    /// Fast-time record of element `e` at slow sample `s`.
    pub fn chirp(&self, e: usize, s: usize) -> &[Complex64] {
        let start = (e * self.n_slow + s) * self.n_fast;
        &self.samples[start..start + self.n_fast]
    }

    pub fn get(&self, e: usize, s: usize, f: usize) -> Complex64 {
        self.samples[(e * self.n_slow + s) * self.n_fast + f]
    }

    pub fn fast_axis(&self) -> Vec<f64> {
        (0..self.n_fast).map(|n| n as f64 / self.fs_fast).collect()
    }

    pub fn slow_axis(&self) -> Vec<f64> {
        (0..self.n_slow).map(|n| n as f64 / self.slow_rate).collect()
    }

    pub fn header(&self) -> CubeHeader {
        CubeHeader {
            n_elements: self.n_elements as u64,
            n_fast: self.n_fast as u64,
            n_slow: self.n_slow as u64,
            fs_fast: self.fs_fast,
            slow_rate: self.slow_rate,
            f_min: self.f_min,
            gamma: self.gamma,
        }
    }

    /// Writes the binary cube and a `.json` header sidecar next to it.
    pub fn write(&self, path: &Path) -> Result<(), RadarError> {
        let mut buf = Vec::with_capacity(56 + self.samples.len() * 16);
        for v in [self.n_elements, self.n_fast, self.n_slow] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in [self.fs_fast, self.slow_rate, self.f_min, self.gamma] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for z in &self.samples {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| IoError::fs(parent, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| IoError::fs(path, e))?;
        f.write_all(&buf).map_err(|e| IoError::fs(path, e))?;
        io::write_json(&sidecar_path(path), &self.header())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, RadarError> {
        let mut f = std::fs::File::open(path).map_err(|e| IoError::fs(path, e))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf).map_err(|e| IoError::fs(path, e))?;
        let bad = |msg: String| IoError::Parse {
            path: path.display().to_string(),
            line: 0,
            msg,
        };
        if buf.len() < 56 {
            return Err(bad("truncated header".into()).into());
        }
        let word = |i: usize| <[u8; 8]>::try_from(&buf[8 * i..8 * i + 8]).expect("8 bytes");
        let (n_elements, n_fast, n_slow) = (
            u64::from_le_bytes(word(0)) as usize,
            u64::from_le_bytes(word(1)) as usize,
            u64::from_le_bytes(word(2)) as usize,
        );
        let [fs_fast, slow_rate, f_min, gamma] = [3, 4, 5, 6].map(|i| f64::from_le_bytes(word(i)));
        let count = n_elements
            .checked_mul(n_slow)
            .and_then(|v| v.checked_mul(n_fast))
            .ok_or_else(|| bad("dimensions overflow".into()))?;
        if buf.len() != 56 + 16 * count {
            return Err(bad(format!(
                "expected {} bytes of samples, found {}",
                16 * count,
                buf.len() - 56
            ))
            .into());
        }
        let samples = buf[56..]
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        Ok(IFCube {
            n_elements,
            n_fast,
            n_slow,
            fs_fast,
            slow_rate,
            f_min,
            gamma,
            samples,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// IF synthesis for fixed-amplitude centers (the conventional model).
pub fn synth_if_conventional(
    centers: &[ScatterCenter],
    chirp: &ChirpParams,
    grid: &SlowGrid,
    n_elements: usize,
) -> Result<IFCube, RadarError> {
    if let Some(c) = centers
        .iter()
        .find(|c| c.amplitude.iter().any(|a| matches!(a, Amplitude::Series(_))))
    {
        return Err(RadarError::InvalidArgument(format!(
            "center {} has a time-varying amplitude; use synth_if_proposed",
            c.index
        )));
    }
    synthesize(centers, chirp, grid, n_elements)
}

/// IF synthesis where amplitudes may vary over slow time.
pub fn synth_if_proposed(
    centers: &[ScatterCenter],
    chirp: &ChirpParams,
    grid: &SlowGrid,
    n_elements: usize,
) -> Result<IFCube, RadarError> {
    synthesize(centers, chirp, grid, n_elements)
}

fn synthesize(
    centers: &[ScatterCenter],
    chirp: &ChirpParams,
    grid: &SlowGrid,
    n_elements: usize,
) -> Result<IFCube, RadarError> {
    chirp.validate()?;
    if (grid.rate - chirp.slow_rate).abs() > 1e-12 * chirp.slow_rate {
        return Err(RadarError::InvalidArgument(format!(
            "slow grid at {} Hz, chirp repeats at {} Hz",
            grid.rate, chirp.slow_rate
        )));
    }
    for c in centers {
        c.check(n_elements, grid.n)?;
    }
    let mut cube = IFCube::zeros(n_elements, grid.n, chirp);
    let nf = chirp.n_fast;
    let c0 = SPEED_OF_LIGHT;
    let phase_per_m = 4.0 * PI * chirp.f_min / c0;
    let step_per_m = 4.0 * PI * chirp.gamma / (c0 * chirp.fs_fast);
    par::for_each_chunk_mut(&mut cube.samples, nf, |idx, out| {
        let (e, s) = (idx / grid.n, idx % grid.n);
        for c in centers {
            let a = c.amplitude[e].at(s);
            if a == 0.0 {
                continue;
            }
            let r = c.trajectory[e][s];
            let mut z = c.eta * Complex64::from_polar(a, phase_per_m * r);
            let w = Complex64::from_polar(1.0, step_per_m * r);
            for v in out.iter_mut() {
                *v += z;
                z *= w;
            }
        }
    });
    Ok(cube)
}

#[cfg(test)]
mod tests;
