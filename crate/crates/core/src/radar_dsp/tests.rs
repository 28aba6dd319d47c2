use super::*;
use crate::geometry::Point3;
use crate::radar_model::{
    build_virtual_array, synth_if_conventional, Amplitude, ChirpParams, ScatterCenter, SlowGrid,
};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = SPEED_OF_LIGHT / 79e9;

fn default_array() -> VirtualArray {
    build_virtual_array(3, 7.6e-3, 4, 1.9e-3, Point3::zeros(), Vector3::x()).unwrap()
}

fn eta() -> Complex64 {
    Complex64::new(-1.0, 0.0)
}

/// Cube for one point scatterer whose position follows `path(t)`.
fn point_cube(array: &VirtualArray, n_slow: usize, path: impl Fn(f64) -> Point3) -> IFCube {
    let chirp = ChirpParams::default();
    let grid = SlowGrid { t0: 0.0, rate: chirp.slow_rate, n: n_slow };
    let trajectory = array
        .elements
        .iter()
        .map(|e| (0..n_slow).map(|s| (path(grid.time(s)) - e.phase_center).norm()).collect())
        .collect();
    let c = ScatterCenter {
        index: 0,
        trajectory,
        amplitude: vec![Amplitude::Constant(1.0); array.len()],
        eta: eta(),
    };
    synth_if_conventional(&[c], &chirp, &grid, array.len()).unwrap()
}

fn single_element() -> VirtualArray {
    build_virtual_array(1, 1.0, 1, 1.0, Point3::zeros(), Vector3::x()).unwrap()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        .0
}

#[test]
fn hann_window_values() {
    let w = Window::Hann.coefficients(5);
    let want = [0.0, 0.5, 1.0, 0.5, 0.0];
    for (a, b) in w.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(Window::Rectangular.coefficients(3), vec![1.0; 3]);
}

#[test]
fn static_scatterer_peaks_at_its_range() {
    let cube = point_cube(&single_element(), 2, |_| Point3::new(0.0, 0.0, 0.8));
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    let mags: Vec<f64> = p.spectrum(0, 0).iter().map(|z| z.norm()).collect();
    let k = argmax(&mags);
    let nearest = argmax(&p.range_axis.iter().map(|r| -(r - 0.8).abs()).collect::<Vec<_>>());
    assert_eq!(k, nearest);
    let bin = p.range_axis[1] - p.range_axis[0];
    assert!((p.range_axis[k] - 0.8).abs() <= bin / 2.0);
}

#[test]
fn range_axis_is_uniform_and_cropped() {
    let cube = point_cube(&single_element(), 1, |_| Point3::new(0.0, 0.0, 0.8));
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    assert!(p.range_axis[0] >= 0.5 && *p.range_axis.last().unwrap() <= 1.5);
    let d: Vec<f64> = p.range_axis.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-12 && *x > 0.0));
    // Unpadded bins are c/(2B) apart for a full-chirp record.
    let full = range_profile(
        &cube,
        &RangeOptions { window: Window::Hann, pad_factor: 1, crop: None },
    )
    .unwrap();
    assert!((full.range_axis[1] - SPEED_OF_LIGHT / 7.2e9).abs() < 1e-12);
}

#[test]
fn zero_cube_gives_zero_profiles() {
    let cube = IFCube::zeros(3, 4, &ChirpParams::default());
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    assert!(p.samples.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn rectangular_first_null_spacing() {
    let chirp = ChirpParams::default();
    // Put the scatterer exactly on an unpadded bin so the nulls are exact.
    let bin = chirp.range_of_beat(chirp.fs_fast / chirp.n_fast as f64);
    let r0 = (0.8 / bin).round() * bin;
    let cube = point_cube(&single_element(), 1, |_| Point3::new(0.0, 0.0, r0));
    let pad = 16;
    let p = range_profile(
        &cube,
        &RangeOptions { window: Window::Rectangular, pad_factor: pad, crop: None },
    )
    .unwrap();
    let mags: Vec<f64> = p.spectrum(0, 0).iter().map(|z| z.norm()).collect();
    let k = argmax(&mags);
    let mut j = k + 1;
    while mags[j + 1] < mags[j] {
        j += 1;
    }
    let null = p.range_axis[j] - p.range_axis[k];
    // c/(2B) for the 3.6 GHz sweep is 41.6 mm.
    assert!((SPEED_OF_LIGHT / (2.0 * 3.6e9) - 0.0416).abs() < 1e-4);
    assert!((null - SPEED_OF_LIGHT / (2.0 * 3.6e9)).abs() < 1e-9, "null at {null}");
}

#[test]
fn parseval_for_rectangular_unpadded() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let chirp = ChirpParams::default();
    let mut cube = IFCube::zeros(2, 3, &chirp);
    for z in cube.samples.iter_mut() {
        *z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let p = range_profile(
        &cube,
        &RangeOptions { window: Window::Rectangular, pad_factor: 1, crop: None },
    )
    .unwrap();
    for e in 0..2 {
        for s in 0..3 {
            let time: f64 = cube.chirp(e, s).iter().map(|z| z.norm_sqr()).sum();
            let freq: f64 = p.spectrum(e, s).iter().map(|z| z.norm_sqr()).sum();
            assert!((time - freq).abs() <= 1e-9 * time);
        }
    }
}

fn bf(array: &VirtualArray, thetas: Vec<f64>) -> Beamformer {
    Beamformer::new(array, thetas, LAMBDA, ElementSpacing::RoundTrip).unwrap()
}

#[test]
fn broadside_scatterer_peaks_at_zero() {
    let a = default_array();
    let c = a.center();
    let cube = point_cube(&a, 4, |_| c + Vector3::new(0.0, 0.0, 0.8));
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    let b = bf(&a, theta_grid(181, 45f64.to_radians()));
    let px = select_peak(&mean_power_map(&p, &a, &b).unwrap()).unwrap();
    assert_eq!(px.theta_rad, 0.0);
}

#[test]
fn off_axis_scatterer_is_found_within_one_step() {
    let a = default_array();
    let c = a.center();
    let th = 10f64.to_radians();
    // Positive azimuth lies toward decreasing axis coordinate.
    let target = c + Vector3::new(-0.8 * th.sin(), 0.0, 0.8 * th.cos());
    assert!((a.azimuth_of(&target, &Vector3::z()) - th).abs() < 1e-12);
    let cube = point_cube(&a, 4, |_| target);
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    let grid = theta_grid(181, 45f64.to_radians());
    let step = grid[1] - grid[0];
    let px = select_peak(&mean_power_map(&p, &a, &bf(&a, grid)).unwrap()).unwrap();
    assert!((px.theta_rad - th).abs() <= step, "{} vs {th}", px.theta_rad);
}

#[test]
fn pitch_spacing_misplaces_the_angle() {
    // Sensitivity check for the d₀ choice: steering with the bare pitch
    // doubles sin θ of the reported angle.
    let a = default_array();
    let c = a.center();
    let th = 10f64.to_radians();
    let cube = point_cube(&a, 2, |_| c + Vector3::new(-0.8 * th.sin(), 0.0, 0.8 * th.cos()));
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    let grid = theta_grid(181, 45f64.to_radians());
    let step = grid[1] - grid[0];
    let b = Beamformer::new(&a, grid, LAMBDA, ElementSpacing::Pitch).unwrap();
    let px = select_peak(&mean_power_map(&p, &a, &b).unwrap()).unwrap();
    let want = (2.0 * th.sin()).asin();
    assert!((px.theta_rad - want).abs() <= 1.5 * step, "{} vs {want}", px.theta_rad);
}

#[test]
fn zero_angle_beam_is_the_channel_sum() {
    let a = default_array();
    let cube = point_cube(&a, 3, |t| Point3::new(0.01, 0.0, 0.8 + 1e-3 * t));
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    let m = beamform(&p, &a, &bf(&a, vec![0.0])).unwrap();
    for s in 0..3 {
        for r in 0..p.n_range() {
            let sum: Complex64 = (0..a.len()).map(|e| p.get(e, r, s)).sum();
            assert_eq!(m.get(r, 0, s), sum);
        }
    }
}

#[test]
fn streaming_power_matches_materialized_map() {
    let a = default_array();
    let cube = point_cube(&a, 5, |t| Point3::new(0.02, 0.0, 0.8 + 1e-3 * t));
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    let b = bf(&a, theta_grid(31, 0.5));
    let full = beamform(&p, &a, &b).unwrap().mean_power();
    let stream = mean_power_map(&p, &a, &b).unwrap();
    for (x, y) in full.power.iter().zip(&stream.power) {
        assert!((x - y).abs() <= 1e-12 * x.max(1e-30));
    }
    let px = select_peak(&stream).unwrap();
    let series = beam_series(&p, &a, &b, &px).unwrap();
    let m = beamform(&p, &a, &b).unwrap();
    for (s, v) in series.iter().enumerate() {
        assert!((v - m.get(px.range_index, px.theta_index, s)).norm() <= 1e-12 * v.norm());
    }
}

#[test]
fn nonuniform_array_is_rejected() {
    let a = build_virtual_array(2, 5e-3, 4, 1.9e-3, Point3::zeros(), Vector3::x()).unwrap();
    assert!(matches!(
        Beamformer::new(&a, vec![0.0], LAMBDA, ElementSpacing::RoundTrip),
        Err(DspError::NonuniformArray { .. })
    ));
}

fn power_map(ranges: Vec<f64>, thetas: Vec<f64>, power: Vec<f64>) -> PowerMap {
    PowerMap { range_axis: ranges, theta_axis: thetas, power }
}

#[test]
fn equal_peaks_prefer_nearer_range_then_smaller_angle() {
    let m = power_map(vec![0.7, 0.8, 0.9], vec![-0.1, 0.0, 0.1], vec![
        5.0, 1.0, 1.0, //
        1.0, 1.0, 1.0, //
        1.0, 1.0, 5.0,
    ]);
    let px = select_peak(&m).unwrap();
    assert_eq!((px.range_m, px.theta_rad), (0.7, -0.1));
    let m = power_map(vec![0.7], vec![-0.2, -0.1, 0.1, 0.2], vec![3.0, 1.0, 3.0, 1.0]);
    assert_eq!(select_peak(&m).unwrap().theta_rad, 0.1);
}

#[test]
fn peak_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (nr, nt) = (40, 25);
    let m = power_map(
        (0..nr).map(|i| 0.5 + 0.01 * i as f64).collect(),
        theta_grid(nt, 0.7),
        (0..nr * nt).map(|_| rng.random::<f64>()).collect(),
    );
    let mut best = (0, 0, -1.0);
    for r in 0..nr {
        for t in 0..nt {
            if m.get(r, t) > best.2 {
                best = (r, t, m.get(r, t));
            }
        }
    }
    let px = select_peak(&m).unwrap();
    assert_eq!((px.range_index, px.theta_index), (best.0, best.1));
}

#[test]
fn peak_ignores_slow_time_order() {
    let a = default_array();
    let cube = point_cube(&a, 20, |t| Point3::new(0.03 * t, 0.0, 0.7 + 0.05 * t));
    let p = range_profile(&cube, &RangeOptions::default()).unwrap();
    let b = bf(&a, theta_grid(41, 0.6));
    let m = beamform(&p, &a, &b).unwrap();
    let mut perm: Vec<usize> = (0..20).collect();
    perm.reverse();
    perm.swap(3, 11);
    let (nr, nt) = (m.range_axis.len(), m.theta_axis.len());
    let mut shuffled = m.clone();
    for (dst, &src) in perm.iter().enumerate() {
        shuffled.samples[dst * nr * nt..(dst + 1) * nr * nt]
            .copy_from_slice(&m.samples[src * nr * nt..(src + 1) * nr * nt]);
    }
    assert_eq!(
        select_peak_pixel(&m).unwrap(),
        select_peak_pixel(&shuffled).unwrap()
    );
}

#[test]
fn unwrap_examples() {
    let z = |ph: f64| Complex64::from_polar(1.0, ph);
    let got = unwrap_phase(&[z(0.0), z(PI / 2.0), z(PI), z(-PI / 2.0)]).unwrap();
    let want = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
    assert_eq!(unwrap_phase(&[z(0.3); 5]).unwrap(), vec![0.3; 5]);
    assert!(matches!(
        unwrap_phase(&[z(0.1), Complex64::new(0.0, 0.0)]),
        Err(DspError::ZeroSample { index: 1 })
    ));
    assert_eq!(wrap_step(-PI), PI);
    assert_eq!(wrap_step(PI), PI);
}

#[test]
fn full_cycle_ramp_spans_half_a_wavelength() {
    // A 0 → 2π phase ramp at λ = 3.8 mm is λ/2 = 1.9 mm peak to peak.
    let n = 101;
    let series: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / (n - 1) as f64))
        .collect();
    let d = displacement(&series, 3.8e-3, 100.0).unwrap();
    let hi = d.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = d.values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((hi - lo - 1.9e-3).abs() < 1e-15);
    let flat = displacement(&[Complex64::new(0.0, 2.0); 7], 3.8e-3, 100.0).unwrap();
    assert!(flat.values.iter().all(|v| v.abs() < 1e-18));
}

fn sine_amplitude(x: &[f64], rate: f64, f: f64) -> f64 {
    // Least-squares fit of a sin + b cos at the known frequency.
    let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * f * i as f64 / rate;
        let (s, c) = ph.sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += v * s;
        xc += v * c;
    }
    let det = ss * cc - sc * sc;
    let a = (xs * cc - xc * sc) / det;
    let b = (xc * ss - xs * sc) / det;
    a.hypot(b)
}

#[test]
fn radial_sinusoid_is_recovered() {
    let a = default_array();
    let c = a.center();
    let n = 2000;
    let cube = point_cube(&a, n, |t| {
        c + Vector3::new(0.0, 0.0, 0.8 + 1e-3 * (2.0 * PI * 0.25 * t).sin())
    });
    let out = process_cube(&cube, &a, &DspConfig::default(), LAMBDA, None).unwrap();
    let amp = sine_amplitude(&out.raw.values, 100.0, 0.25);
    assert!((amp - 1e-3).abs() < 0.05e-3, "amplitude {amp}");
    let bin = out.power.range_axis[1] - out.power.range_axis[0];
    assert!((out.pixel.range_m - 0.8).abs() <= bin / 2.0 + 1e-3);
}

#[test]
fn smoothing_constant_and_sine() {
    let flat = DisplacementWaveform { values: vec![2.5; 2000], rate: 100.0, smoothed: false };
    let out = smooth_detrend(&flat, 0.3, 10.0).unwrap();
    assert!(out.smoothed);
    assert!(out.values.iter().all(|v| v.abs() < 1e-12));

    let sine: Vec<f64> = (0..4000).map(|i| (2.0 * PI * 0.25 * i as f64 / 100.0).sin()).collect();
    let half = half_width(0.3, 100.0);
    let sm = moving_average(&sine, half);
    let w = (2 * half + 1) as f64 / 100.0;
    let gain = (PI * 0.25 * w).sin() / (PI * 0.25 * w);
    assert!(1.0 - gain < 0.02);
    let interior = &sm[500..3500];
    let measured = sine_amplitude(interior, 100.0, 0.25);
    assert!((measured - gain).abs() < 1e-3, "{measured} vs {gain}");
}

#[test]
fn smoothing_reduces_white_noise_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values: Vec<f64> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let w = DisplacementWaveform { values: values.clone(), rate: 100.0, smoothed: false };
    let out = smooth_detrend(&w, 0.3, 10.0).unwrap();
    assert!(var(&out.values) < var(&values));
}

#[test]
fn smoothing_windows_must_fit() {
    let w = DisplacementWaveform { values: vec![0.0; 500], rate: 100.0, smoothed: false };
    assert!(smooth_detrend(&w, 0.3, 10.0).is_err());
    assert!(smooth_detrend(&w, 0.0, 1.0).is_err());
}

#[test]
fn waveform_csv_round_trip() {
    let w = DisplacementWaveform {
        values: vec![1e-3, -2.5e-4, 3.14159e-5],
        rate: 100.0,
        smoothed: false,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    w.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t_s,d_m\n"));
    let back = DisplacementWaveform::read_csv(&path).unwrap();
    assert!((back.rate - 100.0).abs() < 1e-6);
    for (a, b) in back.values.iter().zip(&w.values) {
        assert!((a - b).abs() <= 1e-8 * b.abs());
    }
}

#[test]
fn power_map_csv_columns() {
    let m = power_map(vec![0.7, 0.8], vec![-0.1, 0.1], vec![1.0, 2.0, 3.0, 4.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ra.csv");
    m.write_csv(&path).unwrap();
    let (h, rows) = io::read_csv(&path).unwrap();
    assert_eq!(h, vec!["r_m", "theta_rad", "power"]);
    assert_eq!(rows[2], vec![0.8, -0.1, 3.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unwrap_round_trips(steps in proptest::collection::vec(-3.1f64..3.1, 1..60), start in -3.0f64..3.0) {
        let mut path = vec![start];
        for s in &steps {
            path.push(path.last().unwrap() + s);
        }
        let series: Vec<Complex64> = path.iter().map(|p| Complex64::from_polar(1.0, *p)).collect();
        let got = unwrap_phase(&series).unwrap();
        let offset = got[0] - path[0];
        prop_assert!((offset / (2.0 * PI)).round() * 2.0 * PI - offset < 1e-9);
        for (g, p) in got.iter().zip(&path) {
            prop_assert!((g - p - offset).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn displacement_scales_with_motion(alpha in 0.3f64..1.5) {
        // 1 mm at 0.25 Hz moves at most 16 µm per slow sample, far below λ/4.
        let a = single_element();
        let n = 1200;
        let run = |amp: f64| {
            let cube = point_cube(&a, n, |t| Point3::new(0.0, 0.0, 0.8 + amp * (2.0 * PI * 0.25 * t).sin()));
            process_cube(&cube, &a, &DspConfig { theta_count: 1, ..DspConfig::default() }, LAMBDA, None)
                .unwrap()
                .raw
        };
        let base = run(1e-3);
        let scaled = run(alpha * 1e-3);
        let ratio = sine_amplitude(&scaled.values, 100.0, 0.25) / sine_amplitude(&base.values, 100.0, 0.25);
        prop_assert!((ratio - alpha).abs() <= 0.02 * alpha);
    }
}
