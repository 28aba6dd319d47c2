//! Array-radar processing of IF cubes: windowed range FFT, delay-and-sum
//! beamforming over the virtual array, peak-pixel selection by time-averaged
//! power, and phase-to-displacement conversion with optional smoothing.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::par;
use crate::radar_model::{IFCube, VirtualArray};
use crate::SPEED_OF_LIGHT;

/// Largest phase-center pitch variance accepted as a uniform array, m².
pub const PITCH_VARIANCE_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("beam sample {index} is exactly zero; phase undefined")]
    ZeroSample { index: usize },
    #[error("virtual array is not uniform (pitch variance {variance:e} m²)")]
    NonuniformArray { variance: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Symmetric taper of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann if n == 1 => vec![1.0],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

/// Range-FFT settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeOptions {
    pub window: Window,
    /// FFT length as a multiple of the fast-time sample count.
    pub pad_factor: usize,
    /// Inclusive range crop in meters; `None` keeps every bin.
    pub crop: Option<(f64, f64)>,
}

impl Default for RangeOptions {
    fn default() -> Self {
        RangeOptions {
            window: Window::Hann,
            pad_factor: 4,
            crop: Some((0.5, 1.5)),
        }
    }
}

/// Range spectra, stored `[element][slow][range]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfileSet {
    pub n_elements: usize,
    pub n_slow: usize,
    pub range_axis: Vec<f64>,
    pub slow_rate: f64,
    pub samples: Vec<Complex64>,
}

impl RangeProfileSet {
    pub fn n_range(&self) -> usize {
        self.range_axis.len()
    }

    pub fn get(&self, e: usize, r: usize, s: usize) -> Complex64 {
        self.samples[(e * self.n_slow + s) * self.n_range() + r]
    }

    /// Range spectrum of element `e` at slow sample `s`.
    pub fn spectrum(&self, e: usize, s: usize) -> &[Complex64] {
        let n = self.n_range();
        let start = (e * self.n_slow + s) * n;
        &self.samples[start..start + n]
    }
}

/// Windowed, zero-padded FFT over fast time, scaled by `1/sqrt(n_fft)` so the
/// transform is unitary. Bin `k` maps to range `k · fs / n_fft · c / (2γ)`.
pub fn range_profile(cube: &IFCube, opts: &RangeOptions) -> Result<RangeProfileSet, DspError> {
    if opts.pad_factor == 0 || cube.n_fast == 0 {
        return Err(DspError::InvalidArgument("pad factor and n_fast must be positive".into()));
    }
    if cube.samples.len() != cube.n_elements * cube.n_slow * cube.n_fast {
        return Err(DspError::Shape("cube sample count disagrees with its header".into()));
    }
    let n_fft = cube.n_fast * opts.pad_factor;
    let bin_range = cube.fs_fast / n_fft as f64 * SPEED_OF_LIGHT / (2.0 * cube.gamma);
    let (lo, hi) = match opts.crop {
        None => (0, n_fft),
        Some((a, b)) => {
            if !(a >= 0.0 && b > a) {
                return Err(DspError::InvalidArgument(format!("bad range crop ({a}, {b})")));
            }
            let lo = (a / bin_range).ceil() as usize;
            let hi = ((b / bin_range).floor() as usize + 1).min(n_fft);
            if lo >= hi {
                return Err(DspError::InvalidArgument(format!(
                    "range crop ({a}, {b}) holds no bins"
                )));
            }
            (lo, hi)
        }
    };
    let range_axis: Vec<f64> = (lo..hi).map(|k| k as f64 * bin_range).collect();
    let n_range = hi - lo;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n_fft);
    let taper = opts.window.coefficients(cube.n_fast);
    let scale = 1.0 / (n_fft as f64).sqrt();
    let mut samples = vec![Complex64::new(0.0, 0.0); cube.n_elements * cube.n_slow * n_range];
    par::for_each_chunk_mut(&mut samples, n_range, |idx, out| {
        let (e, s) = (idx / cube.n_slow, idx % cube.n_slow);
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for ((b, x), w) in buf.iter_mut().zip(cube.chirp(e, s)).zip(&taper) {
            *b = x * w;
        }
        fft.process(&mut buf);
        for (o, v) in out.iter_mut().zip(&buf[lo..hi]) {
            *o = v * scale;
        }
    });
    Ok(RangeProfileSet {
        n_elements: cube.n_elements,
        n_slow: cube.n_slow,
        range_axis,
        slow_rate: cube.slow_rate,
        samples,
    })
}

/// How the beamformer's `d₀` derives from the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementSpacing {
    /// Twice the phase-center pitch: the IF phase carries the two-way path,
    /// so one pitch step advances the phase by `(2π/λ)·2·pitch·sin θ`.
    RoundTrip,
    /// The phase-center pitch itself.
    Pitch,
    /// An explicit spacing in meters.
    Fixed(f64),
}

/// `d₀` for `array`, after checking it is uniform.
pub fn steering_spacing(array: &VirtualArray, spacing: ElementSpacing) -> Result<f64, DspError> {
    let (pitch, variance) = array.pitch_stats();
    if variance > PITCH_VARIANCE_TOL {
        return Err(DspError::NonuniformArray { variance });
    }
    Ok(match spacing {
        ElementSpacing::RoundTrip => 2.0 * pitch,
        ElementSpacing::Pitch => pitch,
        ElementSpacing::Fixed(d) => d,
    })
}

/// `n` angles evenly spaced over `±max_rad`; the middle angle of an odd grid
/// is exactly zero.
pub fn theta_grid(n: usize, max_rad: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    let step = 2.0 * max_rad / (n - 1) as f64;
    let mid = (n - 1) as f64 / 2.0;
    (0..n).map(|i| (i as f64 - mid) * step).collect()
}

/// Steering weights `[theta][element]`.
fn steering_weights(n_elem: usize, thetas: &[f64], d0: f64, wavelength: f64) -> Vec<Vec<Complex64>> {
    thetas
        .iter()
        .map(|th| {
            let s = th.sin();
            (0..n_elem)
                .map(|i| Complex64::from_polar(1.0, -2.0 * PI / wavelength * i as f64 * d0 * s))
                .collect()
        })
        .collect()
}

fn check_thetas(thetas: &[f64]) -> Result<(), DspError> {
    if thetas.is_empty() || thetas.iter().any(|t| !(t.abs() < PI / 2.0)) {
        return Err(DspError::InvalidArgument("theta grid must be non-empty within ±π/2".into()));
    }
    Ok(())
}

fn check_array(profiles: &RangeProfileSet, array: &VirtualArray) -> Result<(), DspError> {
    if array.len() != profiles.n_elements {
        return Err(DspError::Shape(format!(
            "{} profile channels for {} array elements",
            profiles.n_elements,
            array.len()
        )));
    }
    Ok(())
}

/// Beamformer settings shared by the materialized and streaming paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub thetas: Vec<f64>,
    pub d0: f64,
    pub wavelength: f64,
}

impl Beamformer {
    pub fn new(
        array: &VirtualArray,
        thetas: Vec<f64>,
        wavelength: f64,
        spacing: ElementSpacing,
    ) -> Result<Self, DspError> {
        check_thetas(&thetas)?;
        if !(wavelength > 0.0) {
            return Err(DspError::InvalidArgument("wavelength must be positive".into()));
        }
        Ok(Beamformer {
            thetas,
            d0: steering_spacing(array, spacing)?,
            wavelength,
        })
    }
}

/// Complex range-angle samples, stored `[slow][range][theta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAngleMap {
    pub range_axis: Vec<f64>,
    pub theta_axis: Vec<f64>,
    pub n_slow: usize,
    pub samples: Vec<Complex64>,
}

impl RangeAngleMap {
    pub fn get(&self, r: usize, th: usize, s: usize) -> Complex64 {
        self.samples[(s * self.range_axis.len() + r) * self.theta_axis.len() + th]
    }

    /// `(1/T) Σ_t |S|²` per `(range, theta)`.
    pub fn mean_power(&self) -> PowerMap {
        let (nr, nt) = (self.range_axis.len(), self.theta_axis.len());
        let mut power = vec![0.0; nr * nt];
        for s in 0..self.n_slow {
            let slice = &self.samples[s * nr * nt..(s + 1) * nr * nt];
            for (p, v) in power.iter_mut().zip(slice) {
                *p += v.norm_sqr();
            }
        }
        let n = self.n_slow.max(1) as f64;
        power.iter_mut().for_each(|p| *p /= n);
        PowerMap {
            range_axis: self.range_axis.clone(),
            theta_axis: self.theta_axis.clone(),
            power,
        }
    }
}

/// `S(r, θ, t) = Σ_i exp(−j(2π/λ)·i·d₀·sin θ)·s_R,i(r, t)`, materialized.
/// Memory grows as `n_range · n_theta · n_slow`; the pipeline uses
/// [`mean_power_map`] and [`beam_series`] instead.
pub fn beamform(
    profiles: &RangeProfileSet,
    array: &VirtualArray,
    bf: &Beamformer,
) -> Result<RangeAngleMap, DspError> {
    check_array(profiles, array)?;
    let (nr, nt) = (profiles.n_range(), bf.thetas.len());
    let w = steering_weights(profiles.n_elements, &bf.thetas, bf.d0, bf.wavelength);
    let mut samples = vec![Complex64::new(0.0, 0.0); profiles.n_slow * nr * nt];
    par::for_each_chunk_mut(&mut samples, nr * nt, |s, out| {
        for r in 0..nr {
            for (th, wt) in w.iter().enumerate() {
                out[r * nt + th] = (0..profiles.n_elements)
                    .map(|e| wt[e] * profiles.get(e, r, s))
                    .sum();
            }
        }
    });
    Ok(RangeAngleMap {
        range_axis: profiles.range_axis.clone(),
        theta_axis: bf.thetas.clone(),
        n_slow: profiles.n_slow,
        samples,
    })
}

/// Time-averaged beam power, `[range][theta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMap {
    pub range_axis: Vec<f64>,
    pub theta_axis: Vec<f64>,
    pub power: Vec<f64>,
}

impl PowerMap {
    pub fn get(&self, r: usize, th: usize) -> f64 {
        self.power[r * self.theta_axis.len() + th]
    }

    /// Plot-ready CSV with columns `r_m, theta_rad, power`.
    pub fn write_csv(&self, path: &Path) -> Result<(), DspError> {
        let mut rows = Vec::with_capacity(self.power.len());
        for (r, rv) in self.range_axis.iter().enumerate() {
            for (t, tv) in self.theta_axis.iter().enumerate() {
                rows.push(vec![*rv, *tv, self.get(r, t)]);
            }
        }
        io::write_csv(path, &["r_m", "theta_rad", "power"], &rows)?;
        Ok(())
    }
}

/// Same values as `beamform(..).mean_power()` without holding the full map.
pub fn mean_power_map(
    profiles: &RangeProfileSet,
    array: &VirtualArray,
    bf: &Beamformer,
) -> Result<PowerMap, DspError> {
    check_array(profiles, array)?;
    let (nr, nt) = (profiles.n_range(), bf.thetas.len());
    let w = steering_weights(profiles.n_elements, &bf.thetas, bf.d0, bf.wavelength);
    let mut power = vec![0.0; nr * nt];
    par::for_each_chunk_mut(&mut power, nt, |r, out| {
        let mut col = vec![Complex64::new(0.0, 0.0); profiles.n_elements];
        for s in 0..profiles.n_slow {
            for (e, c) in col.iter_mut().enumerate() {
                *c = profiles.get(e, r, s);
            }
            for (p, wt) in out.iter_mut().zip(&w) {
                let v: Complex64 = wt.iter().zip(&col).map(|(a, b)| a * b).sum();
                *p += v.norm_sqr();
            }
        }
        let n = profiles.n_slow.max(1) as f64;
        out.iter_mut().for_each(|p| *p /= n);
    });
    Ok(PowerMap {
        range_axis: profiles.range_axis.clone(),
        theta_axis: bf.thetas.clone(),
        power,
    })
}

/// Selected range-angle cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub range_index: usize,
    pub theta_index: usize,
    pub range_m: f64,
    pub theta_rad: f64,
}

/// Argmax of time-averaged power; ties go to the smaller range, then the
/// smaller `|θ|`.
pub fn select_peak(map: &PowerMap) -> Result<Pixel, DspError> {
    let nt = map.theta_axis.len();
    if map.range_axis.is_empty() || nt == 0 {
        return Err(DspError::InvalidArgument("empty power map".into()));
    }
    let mut order: Vec<usize> = (0..nt).collect();
    order.sort_by(|&a, &b| {
        map.theta_axis[a]
            .abs()
            .total_cmp(&map.theta_axis[b].abs())
            .then(a.cmp(&b))
    });
    let mut best: Option<(usize, usize, f64)> = None;
    for r in 0..map.range_axis.len() {
        for &t in &order {
            let p = map.get(r, t);
            if best.is_none_or(|(_, _, bp)| p > bp) {
                best = Some((r, t, p));
            }
        }
    }
    let (r, t, _) = best.expect("non-empty map");
    Ok(Pixel {
        range_index: r,
        theta_index: t,
        range_m: map.range_axis[r],
        theta_rad: map.theta_axis[t],
    })
}

/// [`select_peak`] on a materialized map.
pub fn select_peak_pixel(map: &RangeAngleMap) -> Result<Pixel, DspError> {
    if map.n_slow == 0 {
        return Err(DspError::InvalidArgument("map has no slow-time samples".into()));
    }
    select_peak(&map.mean_power())
}

/// Beamformed slow-time series at one pixel.
pub fn beam_series(
    profiles: &RangeProfileSet,
    array: &VirtualArray,
    bf: &Beamformer,
    pixel: &Pixel,
) -> Result<Vec<Complex64>, DspError> {
    check_array(profiles, array)?;
    if pixel.range_index >= profiles.n_range() || pixel.theta_index >= bf.thetas.len() {
        return Err(DspError::Shape("pixel outside the map".into()));
    }
    let w = &steering_weights(
        profiles.n_elements,
        &bf.thetas[pixel.theta_index..=pixel.theta_index],
        bf.d0,
        bf.wavelength,
    )[0];
    Ok((0..profiles.n_slow)
        .map(|s| {
            (0..profiles.n_elements)
                .map(|e| w[e] * profiles.get(e, pixel.range_index, s))
                .sum()
        })
        .collect())
}

/// 1-D phase unwrapping: successive differences are mapped into `(−π, π]`.
pub fn unwrap_phase(series: &[Complex64]) -> Result<Vec<f64>, DspError> {
    if let Some(index) = series.iter().position(|z| z.norm_sqr() == 0.0) {
        return Err(DspError::ZeroSample { index });
    }
    let mut out = Vec::with_capacity(series.len());
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (i, z) in series.iter().enumerate() {
        let ph = z.arg();
        if i == 0 {
            acc = ph;
        } else {
            acc += wrap_step(ph - prev);
        }
        prev = ph;
        out.push(acc);
    }
    Ok(out)
}

/// Maps a phase step into `(−π, π]`.
fn wrap_step(d: f64) -> f64 {
    let m = (d + PI).rem_euclid(2.0 * PI) - PI;
    if m <= -PI {
        m + 2.0 * PI
    } else {
        m
    }
}

/// Displacement over slow time, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementWaveform {
    pub values: Vec<f64>,
    pub rate: f64,
    pub smoothed: bool,
}

impl DisplacementWaveform {
    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| i as f64 / self.rate).collect()
    }

    /// CSV with columns `t_s, d_m`.
    pub fn write_csv(&self, path: &Path) -> Result<(), DspError> {
        let rows: Vec<Vec<f64>> = self
            .times()
            .into_iter()
            .zip(&self.values)
            .map(|(t, d)| vec![t, *d])
            .collect();
        io::write_csv(path, &["t_s", "d_m"], &rows)?;
        Ok(())
    }

    /// Reads a `t_s, d_m` CSV; the rate comes from the first time step.
    pub fn read_csv(path: &Path) -> Result<Self, DspError> {
        let (header, rows) = io::read_csv(path)?;
        if header != ["t_s", "d_m"] {
            return Err(DspError::Shape(format!("unexpected columns {header:?}")));
        }
        if rows.len() < 2 {
            return Err(DspError::InvalidArgument("waveform needs at least two rows".into()));
        }
        let dt = rows[1][0] - rows[0][0];
        if !(dt > 0.0) {
            return Err(DspError::InvalidArgument("time column must increase".into()));
        }
        Ok(DisplacementWaveform {
            values: rows.iter().map(|r| r[1]).collect(),
            rate: 1.0 / dt,
            smoothed: false,
        })
    }
}

/// `d(t) = (λ/4π)·unwrap(∠S)`, mean removed.
pub fn displacement(
    series: &[Complex64],
    wavelength: f64,
    rate: f64,
) -> Result<DisplacementWaveform, DspError> {
    if !(wavelength > 0.0 && rate > 0.0) {
        return Err(DspError::InvalidArgument("wavelength and rate must be positive".into()));
    }
    let phase = unwrap_phase(series)?;
    let k = wavelength / (4.0 * PI);
    let mut values: Vec<f64> = phase.iter().map(|p| p * k).collect();
    remove_mean(&mut values);
    Ok(DisplacementWaveform {
        values,
        rate,
        smoothed: false,
    })
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Centered moving average over `2·half + 1` samples, shrinking at the edges.
pub fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().expect("seeded") + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Half-width in samples of a centered window spanning about `seconds`.
fn half_width(seconds: f64, rate: f64) -> usize {
    ((seconds * rate - 1.0) / 2.0).round().max(0.0) as usize
}

/// Zero-phase moving-average smoothing, then subtraction of a moving-average
/// trend.
pub fn smooth_detrend(
    wave: &DisplacementWaveform,
    smooth_window_s: f64,
    detrend_window_s: f64,
) -> Result<DisplacementWaveform, DspError> {
    let record = wave.values.len() as f64 / wave.rate;
    for w in [smooth_window_s, detrend_window_s] {
        if !(w > 0.0 && w < record) {
            return Err(DspError::InvalidArgument(format!(
                "window {w} s must be positive and shorter than the {record} s record"
            )));
        }
    }
    let smooth = moving_average(&wave.values, half_width(smooth_window_s, wave.rate));
    let trend = moving_average(&smooth, half_width(detrend_window_s, wave.rate));
    Ok(DisplacementWaveform {
        values: smooth.iter().zip(&trend).map(|(s, t)| s - t).collect(),
        rate: wave.rate,
        smoothed: true,
    })
}

/// Full chain settings from cube to displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub window: Window,
    pub pad_factor: usize,
    pub range_min_m: f64,
    pub range_max_m: f64,
    pub theta_count: usize,
    pub theta_max_deg: f64,
    pub spacing: ElementSpacing,
    pub smooth_window_s: f64,
    pub detrend_window_s: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            window: Window::Hann,
            pad_factor: 4,
            range_min_m: 0.5,
            range_max_m: 1.5,
            theta_count: 181,
            theta_max_deg: 45.0,
            spacing: ElementSpacing::RoundTrip,
            smooth_window_s: 0.3,
            detrend_window_s: 10.0,
        }
    }
}

impl DspConfig {
    pub fn range_options(&self) -> RangeOptions {
        RangeOptions {
            window: self.window,
            pad_factor: self.pad_factor,
            crop: Some((self.range_min_m, self.range_max_m)),
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        theta_grid(self.theta_count, self.theta_max_deg.to_radians())
    }
}

/// Everything the chain produces for one cube.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub power: PowerMap,
    pub pixel: Pixel,
    pub series: Vec<Complex64>,
    pub raw: DisplacementWaveform,
    pub smoothed: DisplacementWaveform,
}

/// Range FFT, beamforming, peak selection and displacement for one cube.
/// `pixel` overrides the peak search when given.
pub fn process_cube(
    cube: &IFCube,
    array: &VirtualArray,
    cfg: &DspConfig,
    wavelength: f64,
    pixel: Option<Pixel>,
) -> Result<ChainOutput, DspError> {
    let profiles = range_profile(cube, &cfg.range_options())?;
    let bf = Beamformer::new(array, cfg.thetas(), wavelength, cfg.spacing)?;
    let power = mean_power_map(&profiles, array, &bf)?;
    let pixel = match pixel {
        Some(p) => p,
        None => select_peak(&power)?,
    };
    let series = beam_series(&profiles, array, &bf, &pixel)?;
    let raw = displacement(&series, wavelength, cube.slow_rate)?;
    let smoothed = smooth_detrend(&raw, cfg.smooth_window_s, cfg.detrend_window_s)?;
    Ok(ChainOutput {
        power,
        pixel,
        series,
        raw,
        smoothed,
    })
}

#[cfg(test)]
mod tests;
