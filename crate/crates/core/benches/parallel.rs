//! Rayon against the sequential fallback on the two hot loops: one cold CPD
//! registration and one frame of per-element scattering maps.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mmresp::cpd::{CpdParams, Registrar};
use mmresp::eval::PipelineConfig;
use mmresp::geometry::{farthest_point_indices, PointCloudFrame, SurfaceSampling};
use mmresp::par;
use mmresp::radar_model::element_maps;
use mmresp::scene_synth::{gen_frames_with_template, gen_template, SceneConfig};

fn subset(cloud: &PointCloudFrame, n: usize) -> PointCloudFrame {
    let idx = farthest_point_indices(&cloud.points, n, 0);
    PointCloudFrame::new(idx.iter().map(|&i| cloud.points[i]).collect(), cloud.timestamp).unwrap()
}

fn cpd(c: &mut Criterion) {
    let scene = SceneConfig {
        duration_s: 1.0,
        breathing: mmresp::scene_synth::Bump {
            amplitude: 5e-3,
            ..Default::default()
        },
        ..SceneConfig::default()
    };
    let template = gen_template(&scene).unwrap();
    let (frames, _) = gen_frames_with_template(&scene, &template).unwrap();
    let y = subset(&template, 250);
    let x = subset(&frames[7], 800);
    let reg = Registrar::new(
        y,
        CpdParams {
            max_iters: 20,
            ..CpdParams::default()
        },
    )
    .unwrap();
    let mut g = c.benchmark_group("cpd_register_250x800");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| black_box(reg.register(&x, None).unwrap())));
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| black_box(reg.register(&x, None).unwrap())))
    });
    g.finish();
}

fn scattering(c: &mut Criterion) {
    let cfg = PipelineConfig::default();
    let mut scene = cfg.scene_config();
    scene.template_density = 1.0e5;
    let template = gen_template(&scene).unwrap();
    let sampling = SurfaceSampling::from_cloud(template).unwrap();
    let array = cfg.radar.array.build().unwrap();
    let illum = cfg.illumination();
    let mut g = c.benchmark_group("element_maps");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| black_box(element_maps(&sampling, &array, &illum).unwrap()))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| black_box(element_maps(&sampling, &array, &illum).unwrap())))
    });
    g.finish();
}

criterion_group!(benches, cpd, scattering);
criterion_main!(benches);
