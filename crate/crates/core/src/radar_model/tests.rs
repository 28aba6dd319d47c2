use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn default_array() -> VirtualArray {
    build_virtual_array(3, 7.6e-3, 4, 1.9e-3, Point3::zeros(), Vector3::x()).unwrap()
}

fn grid(n: usize) -> SlowGrid {
    SlowGrid { t0: 0.0, rate: 100.0, n }
}

fn map(mags: Vec<f64>, a0: f64) -> ScatteringMap {
    ScatteringMap {
        observation_point: Point3::zeros(),
        magnitudes: mags,
        eye_radius: a0,
    }
}

fn eq7(chirp: &ChirpParams, r: f64, amp: f64, eta: Complex64, tau: f64) -> Complex64 {
    let c = SPEED_OF_LIGHT;
    // Carrier and beat terms evaluated separately to keep the large carrier
    // phase out of the sum.
    eta * Complex64::from_polar(amp, 4.0 * PI * chirp.f_min * r / c)
        * Complex64::from_polar(1.0, 4.0 * PI * chirp.gamma * r * tau / c)
}

#[test]
fn default_chirp_matches_device_table() {
    let c = ChirpParams::default();
    assert!((c.center_frequency() - 79e9).abs() < 1.0);
    assert!((c.gamma - 3.6e9 / 64e-6).abs() <= 1e-12 * c.gamma);
    assert!((c.wavelength() - 3.795e-3).abs() < 1e-5);
    // The 0.5-1.5 m window must be alias-free.
    assert!(c.max_range() > 1.5);
    let mut bad = c;
    bad.gamma *= 1.01;
    assert!(bad.validate().is_err());
    assert!(ChirpParams::new(77e9, 4e9, 10e-6, 256, 4e6, 100.0).is_err());
}

#[test]
fn default_array_layout_matches_device() {
    let a = default_array();
    assert_eq!(a.len(), 12);
    for s in a.spacings() {
        assert!((s - 0.95e-3).abs() < 1e-15);
    }
    assert!((a.aperture() - 10.45e-3).abs() < 1e-15);
    let (mean, var) = a.pitch_stats();
    assert!((mean - 0.95e-3).abs() < 1e-15);
    assert!(var < 1e-12);
    for (i, e) in a.elements.iter().enumerate() {
        assert_eq!(i, 4 * e.tx_index + e.rx_index);
    }
}

#[test]
fn single_pair_sits_at_midpoint() {
    let a = build_virtual_array(1, 1.0, 1, 1.0, Point3::new(0.1, 0.2, 0.3), Vector3::y()).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(a.elements[0].phase_center, Point3::new(0.1, 0.2, 0.3));
    assert_eq!(a.pitch_stats(), (0.0, 0.0));
}

#[test]
fn swapping_tx_and_rx_keeps_phase_centers() {
    let key = |a: &VirtualArray| {
        let mut v: Vec<i64> = a
            .elements
            .iter()
            .map(|e| (e.phase_center.x * 1e9).round() as i64)
            .collect();
        v.sort_unstable();
        v
    };
    let a = default_array();
    let b = build_virtual_array(4, 1.9e-3, 3, 7.6e-3, Point3::zeros(), Vector3::x()).unwrap();
    assert_eq!(key(&a), key(&b));
}

#[test]
fn array_rejects_bad_pitch() {
    assert!(build_virtual_array(3, 0.0, 4, 1.9e-3, Point3::zeros(), Vector3::x()).is_err());
    assert!(build_virtual_array(3, 7.6e-3, 4, 1.9e-3, Point3::zeros(), Vector3::zeros()).is_err());
}

#[test]
fn azimuth_sign_convention() {
    let a = default_array();
    let bore = Vector3::z();
    let c = a.center();
    assert!(a.azimuth_of(&(c + Vector3::new(0.0, 0.0, 1.0)), &bore).abs() < 1e-15);
    let th = a.azimuth_of(&(c + Vector3::new(-(0.1f64.tan()), 0.0, 1.0)), &bore);
    assert!((th - 0.1).abs() < 1e-12);
}

#[test]
fn slow_grid_spans_frames() {
    let frames: Vec<f64> = (0..300).map(|i| i as f64 / 15.0).collect();
    let g = SlowGrid::spanning(&frames, 100.0).unwrap();
    assert_eq!(g.n, 1994);
    assert!(g.time(g.n - 1) <= frames[299]);
    let exact: Vec<f64> = (0..31).map(|i| i as f64 / 15.0).collect();
    assert_eq!(SlowGrid::spanning(&exact, 100.0).unwrap().n, 201);
}

#[test]
fn spline_interpolates_and_is_exact_on_lines() {
    let x = [0.0, 0.5, 1.5, 2.0, 3.7];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
    let s = CubicSpline::new(&x, &y).unwrap();
    for t in [0.0, 0.2, 0.77, 1.9, 3.7, 4.5] {
        assert!((s.eval(t) - (2.0 * t - 1.0)).abs() < 1e-12);
    }
    let y2 = [1.0, -2.0, 0.5, 3.0, 0.0];
    let s2 = CubicSpline::new(&x, &y2).unwrap();
    for (xi, yi) in x.iter().zip(y2) {
        assert!((s2.eval(*xi) - yi).abs() < 1e-12);
    }
}

#[test]
fn spline_three_point_closed_form() {
    // Natural spline through (0,0), (1,1), (2,0): the middle second
    // derivative is -3, so s(0.5) = 0.5 + (0.125 - 0.5)(-3)/6 = 0.6875.
    let s = CubicSpline::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
    assert!((s.eval(0.5) - 0.6875).abs() < 1e-15);
    assert!((s.eval(1.5) - 0.6875).abs() < 1e-15);
}

#[test]
fn spline_tracks_breathing_at_frame_rate() {
    let frames: Vec<f64> = (0..60).map(|i| i as f64 / 15.0).collect();
    let f = |t: f64| 0.8 + 1e-3 * (2.0 * PI * 0.25 * t).sin();
    let ys: Vec<f64> = frames.iter().map(|&t| f(t)).collect();
    let s = CubicSpline::new(&frames, &ys).unwrap();
    // Away from the free ends the natural spline is accurate to well under
    // the 1 µm scale that matters for phase.
    for k in 100..300 {
        let t = k as f64 / 100.0;
        assert!((s.eval(t) - f(t)).abs() < 1e-8, "t={t}");
    }
}

#[test]
fn linear_interp_hits_knots_and_midpoints() {
    let x = [0.0, 1.0, 3.0];
    let y = [1.0, 3.0, -1.0];
    assert_eq!(interp_linear(&x, &y, 0.5), 2.0);
    assert_eq!(interp_linear(&x, &y, 2.0), 1.0);
    assert_eq!(interp_linear(&x, &y, 3.0), -1.0);
    assert_eq!(interp_linear(&x, &y, -1.0), 1.0);
    assert_eq!(interp_linear(&x, &y, 5.0), -1.0);
}

#[test]
fn unique_max_with_full_threshold() {
    let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.8)).collect();
    let m = map(vec![1.0, 2.0, 3.0, 2.0, 1.0, 1.5, 2.5, 2.0, 1.0, 0.5], 0.015);
    assert_eq!(select_centers_conventional(&m, &pts, 1.0).unwrap(), vec![2]);
}

#[test]
fn equal_separated_peaks_are_both_kept() {
    let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.8)).collect();
    let m = map(vec![1.0, 3.0, 1.0, 0.5, 0.2, 0.5, 1.0, 3.0, 1.0, 0.5], 0.025);
    assert_eq!(select_centers_conventional(&m, &pts, 0.5).unwrap(), vec![1, 7]);
    assert!(matches!(
        select_centers_conventional(&map(vec![0.0; 10], 0.025), &pts, 0.5),
        Err(RadarError::EmptySelection { .. })
    ));
}

/// Exhaustive local-maximum scan.
fn brute_local_maxima(pts: &[Point3], mags: &[f64], a0: f64, theta: f64) -> Vec<usize> {
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    (0..pts.len())
        .filter(|&i| {
            mags[i] > 0.0
                && mags[i].powi(2) >= theta * peak * peak
                && (0..pts.len())
                    .all(|j| j == i || (pts[j] - pts[i]).norm() > a0 || mags[i] > mags[j])
        })
        .collect()
}

#[test]
fn two_bump_map_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<Point3> = (0..600)
        .map(|_| Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.8))
        .collect();
    let bump = |p: &Point3, c: (f64, f64), w: f64| {
        (-((p.x - c.0).powi(2) + (p.y - c.1).powi(2)) / (2.0 * w * w)).exp()
    };
    let mags: Vec<f64> = pts
        .iter()
        .map(|p| bump(p, (-0.04, 0.0), 0.02) + 0.7 * bump(p, (0.05, 0.03), 0.015))
        .collect();
    let a0 = 0.019;
    let got = select_centers_conventional(&map(mags.clone(), a0), &pts, 0.3).unwrap();
    assert_eq!(got, brute_local_maxima(&pts, &mags, a0, 0.3));
    assert_eq!(got.len(), 2);
}

#[test]
fn tracking_static_and_radial_motion() {
    let avg: Vec<Point3> = (0..25)
        .map(|i| Point3::new((i % 5) as f64 * 0.02 - 0.04, (i / 5) as f64 * 0.02 - 0.04, 0.8))
        .collect();
    let pc = Point3::new(0.001, 0.0, 0.0);
    let still = PointCloudFrame::new(avg.clone(), 0.0).unwrap();
    let r = track_centers_conventional(&[still.clone(), still], &avg, &[12, 3], &pc).unwrap();
    assert_eq!(r[0], vec![(avg[12] - pc).norm(); 2]);
    assert_eq!(r[1], vec![(avg[3] - pc).norm(); 2]);

    let moved: Vec<Point3> = avg
        .iter()
        .map(|p| p + (p - pc).normalize() * 1e-3)
        .collect();
    let f = PointCloudFrame::new(moved, 0.1).unwrap();
    let r = track_centers_conventional(&[f], &avg, &[12], &pc).unwrap();
    assert!((r[0][0] - (avg[12] - pc).norm() - 1e-3).abs() < 1e-12);
}

#[test]
fn tracking_matches_cosine_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let avg: Vec<Point3> = (0..200)
        .map(|_| Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.8))
        .collect();
    let frames: Vec<PointCloudFrame> = (0..4)
        .map(|t| {
            let pts = avg
                .iter()
                .map(|p| {
                    p + Vector3::new(
                        rng.random_range(-2e-3..2e-3),
                        rng.random_range(-2e-3..2e-3),
                        rng.random_range(-2e-3..2e-3),
                    )
                })
                .collect();
            PointCloudFrame::new(pts, t as f64).unwrap()
        })
        .collect();
    let pc = Point3::new(0.01, -0.02, 0.0);
    let centers = [5, 77, 150];
    let got = track_centers_conventional(&frames, &avg, &centers, &pc).unwrap();
    for (ci, &k) in centers.iter().enumerate() {
        let target = (avg[k] - pc).normalize();
        for (t, fr) in frames.iter().enumerate() {
            let (mut best, mut bc) = (0, -2.0);
            for (j, q) in fr.points.iter().enumerate() {
                let cos = (q - pc).normalize().dot(&target);
                if cos > bc {
                    bc = cos;
                    best = j;
                }
            }
            assert_eq!(got[ci][t], (fr.points[best] - pc).norm());
        }
    }
}

#[test]
fn index_set_limits() {
    let maps = vec![map(vec![1.0, 2.0, 0.0, 4.0], 0.01), map(vec![4.0, 0.5, 0.0, 1.0], 0.01)];
    assert_eq!(select_index_set(&maps, 1.0).unwrap(), vec![0, 3]);
    assert_eq!(select_index_set(&maps, 1e-300).unwrap(), vec![0, 1, 3]);
    assert!(select_index_set(&[], 0.5).is_err());
    assert!(select_index_set(&maps, 0.0).is_err());
}

#[test]
fn index_set_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let maps: Vec<ScatteringMap> = (0..3)
        .map(|_| map((0..50).map(|_| rng.random_range(0.0..1.0)).collect(), 0.01))
        .collect();
    let theta = 0.4;
    let mut peak = 0.0f64;
    for m in &maps {
        for v in &m.magnitudes {
            peak = peak.max(v * v);
        }
    }
    let mut want = Vec::new();
    for k in 0..50 {
        let mut hit = false;
        for m in &maps {
            if m.magnitudes[k] * m.magnitudes[k] / peak >= theta {
                hit = true;
            }
        }
        if hit {
            want.push(k);
        }
    }
    assert_eq!(select_index_set(&maps, theta).unwrap(), want);
}

#[test]
fn combined_map_is_rms_over_elements() {
    let m = combine_maps(&[map(vec![3.0, 0.0], 0.01), map(vec![4.0, 2.0], 0.01)]).unwrap();
    assert!((m.magnitudes[0] - 12.5f64.sqrt()).abs() < 1e-15);
    assert!((m.magnitudes[1] - 2.0f64.sqrt()).abs() < 1e-15);
}

fn constant_center(index: usize, r: Vec<f64>, amp: f64, n_elem: usize) -> ScatterCenter {
    ScatterCenter {
        index,
        trajectory: vec![r; n_elem],
        amplitude: vec![Amplitude::Constant(amp); n_elem],
        eta: Complex64::new(-1.0, 0.0),
    }
}

#[test]
fn static_scatterer_repeats_every_chirp() {
    let chirp = ChirpParams::default();
    let g = grid(8);
    let c = constant_center(0, vec![0.8; 8], 1.0, 2);
    let cube = synth_if_conventional(&[c], &chirp, &g, 2).unwrap();
    for e in 0..2 {
        for s in 1..8 {
            assert_eq!(cube.chirp(e, s), cube.chirp(e, 0));
        }
    }
    // Fast-time DC phase equals 4π f_min R / c + π modulo 2π.
    let want = (4.0 * PI * chirp.f_min * 0.8 / SPEED_OF_LIGHT + PI).rem_euclid(2.0 * PI);
    let got = cube.get(0, 0, 0).arg().rem_euclid(2.0 * PI);
    let diff = (got - want).abs();
    assert!(diff.min(2.0 * PI - diff) < 1e-6, "{got} vs {want}");
}

#[test]
fn no_scatterers_give_zero_cube() {
    let cube = synth_if_conventional(&[], &ChirpParams::default(), &grid(4), 12).unwrap();
    assert_eq!(cube.samples.len(), 12 * 4 * 256);
    assert!(cube.samples.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn moving_scatterer_matches_direct_evaluation() {
    let chirp = ChirpParams::default();
    let n = 400;
    let g = grid(n);
    let r: Vec<f64> = (0..n)
        .map(|s| 0.8 + 0.001 * (2.0 * PI * 0.25 * g.time(s)).sin())
        .collect();
    let c = constant_center(0, r.clone(), 0.7, 3);
    let cube = synth_if_conventional(&[c], &chirp, &g, 3).unwrap();
    for (e, s, f) in [(0, 0, 0), (1, 37, 255), (2, 100, 128), (0, 250, 17), (2, 399, 200)] {
        let tau = f as f64 / chirp.fs_fast;
        let want = eq7(&chirp, r[s], 0.7, Complex64::new(-1.0, 0.0), tau);
        let got = cube.get(e, s, f);
        assert!((got - want).norm() <= 1e-12 * want.norm(), "{got} vs {want}");
    }
    // Fast-time mean phase follows the carrier term.
    let mean = |s: usize| cube.chirp(0, s).iter().sum::<Complex64>();
    let dphi = (mean(100) / mean(0)).arg();
    let carrier = 4.0 * PI * chirp.f_min * (r[100] - r[0]) / SPEED_OF_LIGHT;
    let beat = 2.0 * PI * chirp.gamma * (r[100] - r[0]) / SPEED_OF_LIGHT * 255.0 / chirp.fs_fast;
    let want = (carrier + beat + PI).rem_euclid(2.0 * PI) - PI;
    assert!((dphi - want).abs() < 1e-6, "{dphi} vs {want}");
}

#[test]
fn conventional_rejects_series_amplitudes() {
    let c = ScatterCenter {
        index: 3,
        trajectory: vec![vec![0.8; 2]],
        amplitude: vec![Amplitude::Series(vec![1.0, 1.0])],
        eta: Complex64::new(-1.0, 0.0),
    };
    assert!(synth_if_conventional(&[c.clone()], &ChirpParams::default(), &grid(2), 1).is_err());
    assert!(synth_if_proposed(&[c], &ChirpParams::default(), &grid(2), 1).is_ok());
}

#[test]
fn synth_checks_shapes_and_eta() {
    let chirp = ChirpParams::default();
    let mut c = constant_center(0, vec![0.8; 3], 1.0, 2);
    assert!(synth_if_proposed(&[c.clone()], &chirp, &grid(4), 2).is_err());
    c.eta = Complex64::new(0.5, 0.0);
    assert!(synth_if_proposed(&[c], &chirp, &grid(3), 2).is_err());
    let neg = constant_center(0, vec![-0.1; 3], 1.0, 1);
    assert!(synth_if_proposed(&[neg], &chirp, &grid(3), 1).is_err());
    let slow = SlowGrid { t0: 0.0, rate: 50.0, n: 3 };
    let ok = constant_center(0, vec![0.8; 3], 1.0, 1);
    assert!(synth_if_proposed(&[ok], &chirp, &slow, 1).is_err());
}

#[test]
fn constant_series_reduces_bit_identically() {
    let chirp = ChirpParams::default();
    let frames: Vec<f64> = (0..40).map(|i| i as f64 / 15.0).collect();
    let g = SlowGrid::spanning(&frames, 100.0).unwrap();
    let ranges: Vec<Vec<f64>> = (0..4)
        .map(|e| {
            frames
                .iter()
                .map(|t| 0.8 + 1e-4 * e as f64 + 1e-3 * (2.0 * PI * 0.25 * t).sin())
                .collect()
        })
        .collect();
    let amps = [0.3, 0.9, 1.7, 0.01];
    let series: Vec<Vec<f64>> = amps.iter().map(|&a| vec![a; frames.len()]).collect();
    let eta = Complex64::new(-1.0, 0.0);
    let conv = resample_center_constant(0, &frames, &ranges, &amps, &g, eta).unwrap();
    let prop = resample_center(0, &frames, &ranges, &series, &g, eta).unwrap();
    assert_eq!(conv.trajectory, prop.trajectory);
    let a = synth_if_conventional(&[conv], &chirp, &g, 4).unwrap();
    let b = synth_if_proposed(&[prop], &chirp, &g, 4).unwrap();
    assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.re.to_bits() == y.re.to_bits()
        && x.im.to_bits() == y.im.to_bits()));
}

#[test]
fn doubling_one_slice_doubles_its_magnitude() {
    let chirp = ChirpParams::default();
    let mut amp = vec![1.0; 5];
    amp[2] = 2.0;
    let c = ScatterCenter {
        index: 0,
        trajectory: vec![vec![0.8; 5]],
        amplitude: vec![Amplitude::Series(amp)],
        eta: Complex64::new(-1.0, 0.0),
    };
    let cube = synth_if_proposed(&[c], &chirp, &grid(5), 1).unwrap();
    for f in 0..chirp.n_fast {
        let ratio = cube.get(0, 2, f).norm() / cube.get(0, 1, f).norm();
        assert!((ratio - 2.0).abs() < 1e-12);
        assert_eq!(cube.get(0, 1, f), cube.get(0, 3, f));
    }
}

#[test]
fn two_scatterers_match_direct_summation() {
    let chirp = ChirpParams::default();
    let n = 50;
    let g = grid(n);
    let r1: Vec<f64> = (0..n).map(|s| 0.75 + 2e-3 * (0.3 * g.time(s)).sin()).collect();
    let r2: Vec<f64> = (0..n).map(|s| 0.92 - 1e-3 * g.time(s)).collect();
    let a1: Vec<f64> = (0..n).map(|s| 1.0 + 0.2 * (s as f64 * 0.1).cos()).collect();
    let a2: Vec<f64> = (0..n).map(|s| 0.4 + 0.01 * s as f64).collect();
    let eta = Complex64::new(-1.0, 0.0);
    let mk = |r: &Vec<f64>, a: &Vec<f64>| ScatterCenter {
        index: 0,
        trajectory: vec![r.clone(); 2],
        amplitude: vec![Amplitude::Series(a.clone()); 2],
        eta,
    };
    let cube = synth_if_proposed(&[mk(&r1, &a1), mk(&r2, &a2)], &chirp, &g, 2).unwrap();
    for e in 0..2 {
        for s in 0..n {
            for f in 0..chirp.n_fast {
                let tau = f as f64 / chirp.fs_fast;
                let want = eq7(&chirp, r1[s], a1[s], eta, tau) + eq7(&chirp, r2[s], a2[s], eta, tau);
                let got = cube.get(e, s, f);
                let scale = a1[s] + a2[s];
                assert!((got - want).norm() <= 1e-12 * scale, "e{e} s{s} f{f}");
            }
        }
    }
}

#[test]
fn cube_binary_round_trip() {
    let chirp = ChirpParams::default();
    let c = constant_center(0, vec![0.8, 0.81, 0.82], 1.3, 2);
    let cube = synth_if_conventional(&[c], &chirp, &grid(3), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cube.bin");
    cube.write(&path).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    assert_eq!(bytes, 56 + 16 * 2 * 3 * 256);
    assert_eq!(IFCube::read(&path).unwrap(), cube);
    let header: CubeHeader = io::read_json(&sidecar_path(&path)).unwrap();
    assert_eq!(header, cube.header());

    let raw = std::fs::read(&path).unwrap();
    std::fs::write(&path, &raw[..raw.len() - 8]).unwrap();
    assert!(IFCube::read(&path).is_err());
}

#[test]
fn element_maps_use_tx_source_and_rx_observer() {
    use crate::em_scatter::scattering_map;
    let spacing = 0.005;
    let mut pts = Vec::new();
    for i in 0..=16 {
        for j in 0..=16 {
            pts.push(Point3::new(i as f64 * spacing - 0.04, j as f64 * spacing - 0.04, 0.8));
        }
    }
    let normals = vec![-Vector3::z(); pts.len()];
    let s = SurfaceSampling::from_cloud(PointCloudFrame::with_normals(pts, normals, 0.0).unwrap())
        .unwrap();
    let array = default_array();
    let illum = Illumination {
        consts: EmConstants::new(79e9),
        dipole_axis: Vector3::y(),
        moment: 1.0,
        a0: 0.019,
        shadowing: true,
    };
    let maps = element_maps(&s, &array, &illum).unwrap();
    assert_eq!(maps.len(), 12);
    for (e, m) in array.elements.iter().zip(&maps) {
        let src = DipoleSource::new(array.tx_positions[e.tx_index], Vector3::y(), 1.0).unwrap();
        let want = scattering_map(&s, &src, &illum.consts, &array.rx_positions[e.rx_index], 0.019, true)
            .unwrap();
        assert_eq!(m.magnitudes, want.magnitudes);
    }
}

#[test]
fn point_contributions_match_a_vanishing_eye() {
    // With a0 below the sample spacing each window holds only its center
    // at weight 1.
    let spacing = 0.005;
    let mut pts = Vec::new();
    for i in 0..=10 {
        for j in 0..=10 {
            let (x, y) = (i as f64 * spacing - 0.025, j as f64 * spacing - 0.025);
            pts.push(Point3::new(x, y, 0.8 + 0.5 * (x * x + y * y)));
        }
    }
    let cloud = PointCloudFrame::new(pts, 0.0).unwrap();
    let cloud = crate::geometry::estimate_normals(&cloud, 8, &Point3::zeros()).unwrap();
    let s = SurfaceSampling::from_cloud(cloud).unwrap();
    let array = default_array();
    let illum = Illumination {
        consts: EmConstants::new(79e9),
        dipole_axis: Vector3::y(),
        moment: 1.0,
        a0: 0.4 * spacing,
        shadowing: true,
    };
    let maps = element_maps(&s, &array, &illum).unwrap();
    let contrib = element_contributions(&s, &array, &illum).unwrap();
    assert_eq!(contrib.len(), array.len());
    for (m, c) in maps.iter().zip(&contrib) {
        for (a, b) in m.magnitudes.iter().zip(c) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }
}

#[test]
fn bistatic_range_is_half_the_path() {
    let array = default_array();
    let p = Point3::new(0.01, -0.02, 0.75);
    for (e, el) in array.elements.iter().enumerate() {
        let want = 0.5
            * ((p - array.tx_positions[el.tx_index]).norm()
                + (p - array.rx_positions[el.rx_index]).norm());
        assert_eq!(bistatic_range(&array, e, &p), want);
    }
    // Tx 0 and Rx 0 coincide, so element 0 sees the plain distance.
    assert!((bistatic_range(&array, 0, &p) - p.norm()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesis_is_linear_and_additive(
        a in 0.1f64..3.0,
        b in 0.1f64..3.0,
        r1 in 0.6f64..1.2,
        r2 in 0.6f64..1.2,
    ) {
        let chirp = ChirpParams::default();
        let g = grid(3);
        let c1 = constant_center(0, vec![r1; 3], 1.0, 1);
        let c2 = constant_center(1, vec![r2; 3], 1.0, 1);
        let s1 = synth_if_conventional(&[c1], &chirp, &g, 1).unwrap();
        let s2 = synth_if_conventional(&[c2], &chirp, &g, 1).unwrap();
        let both = synth_if_conventional(
            &[constant_center(0, vec![r1; 3], a, 1), constant_center(1, vec![r2; 3], b, 1)],
            &chirp, &g, 1,
        ).unwrap();
        for i in 0..both.samples.len() {
            let want = s1.samples[i] * a + s2.samples[i] * b;
            prop_assert!((both.samples[i] - want).norm() <= 1e-12 * (a + b));
        }
    }

    #[test]
    fn uniform_array_for_matched_pitches(n_tx in 1usize..5, n_rx in 1usize..6, p in 1e-4f64..5e-3) {
        let a = build_virtual_array(n_tx, n_rx as f64 * p, n_rx, p, Point3::zeros(), Vector3::x()).unwrap();
        let (mean, var) = a.pitch_stats();
        prop_assert!(var < 1e-12);
        if a.len() > 1 {
            prop_assert!((mean - p / 2.0).abs() < 1e-12);
        }
    }
}
