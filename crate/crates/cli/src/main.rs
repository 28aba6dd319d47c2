//! `mmresp`: run the simulator stage by stage or end to end.
//!
//! Stage commands share a working directory (`--out`): each reads what the
//! previous stage wrote there and adds its own artifacts.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mmresp::eval::{self, PipelineConfig};
use mmresp::geometry::PointCloudFrame;
use mmresp::radar_dsp::smooth_detrend;
use mmresp::radar_model::{IFCube, SlowGrid, VirtualArray};
use mmresp::scene_synth::Scene;

#[derive(Parser)]
#[command(name = "mmresp", version, about = "mmWave respiration radar simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration JSON; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Working directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    Conventional,
    Proposed,
}

impl SynthMode {
    fn dir(self) -> &'static str {
        match self {
            SynthMode::Conventional => eval::MODE_CONVENTIONAL,
            SynthMode::Proposed => eval::MODE_PROPOSED,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scene: template, camera frames and ground truth.
    Scene(Common),
    /// Register the template onto every camera frame.
    Register(Common),
    /// Scattering maps: per registered frame, or of the averaged cloud.
    Scatter {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "proposed")]
        mode: SynthMode,
    },
    /// Synthesize an IF cube.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: SynthMode,
    },
    /// Cube to range-angle map, selected pixel and displacement CSVs.
    Dsp {
        #[command(flatten)]
        common: Common,
        /// Cube file; defaults to `<out>/<mode>/cube.bin`.
        #[arg(long)]
        cube: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "proposed")]
        mode: SynthMode,
    },
    /// Compare two `t_s,d_m` CSVs and write report.json.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        recovered: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Mark the waveforms as smoothed in the report.
        #[arg(long)]
        smoothed: bool,
    },
    /// Every stage end to end.
    Pipeline(Common),
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    let cfg = match c.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn scene_dir(out: &Path) -> PathBuf {
    out.join("scene")
}

fn registered_dir(out: &Path) -> PathBuf {
    out.join(eval::MODE_PROPOSED).join("registered")
}

/// Proposed-mode maps from the stored registration.
fn proposed_maps(
    cfg: &PipelineConfig,
    scene: &Scene,
    array: &VirtualArray,
    out: Option<&Path>,
    work: &Path,
) -> Result<Vec<eval::FrameMaps>> {
    let dir = registered_dir(work);
    let setup: eval::RegistrationSetup =
        mmresp::io::read_json(&dir.join("setup.json")).context("run `mmresp register` first")?;
    let weights = eval::read_fields(&dir)?;
    let times: Vec<f64> = scene.frames.iter().map(|f| f.timestamp).collect();
    Ok(eval::scatter_proposed(&scene.template, &setup, &weights, &times, array, cfg, out)?)
}

fn slow_grid(cfg: &PipelineConfig, frames: &[PointCloudFrame]) -> Result<SlowGrid> {
    let times: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    Ok(SlowGrid::spanning(&times, cfg.radar.chirp.slow_rate)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scene(c) => {
            let cfg = load_config(&c)?;
            let scene = Scene::generate(&cfg.scene_config())?;
            scene.write(&scene_dir(&c.out), true)?;
            println!(
                "scene: {} frames, {} template points, {} camera points",
                scene.frames.len(),
                scene.template.len(),
                scene.frames[0].len()
            );
        }
        Command::Register(c) => {
            let cfg = load_config(&c)?;
            let scene = Scene::read(&scene_dir(&c.out)).context("run `mmresp scene` first")?;
            let dir = registered_dir(&c.out);
            let setup = eval::RegistrationSetup::new(&scene.template, &scene.frames[0], &cfg);
            mmresp::io::write_json(&dir.join("setup.json"), &setup)?;
            let w = eval::register_frames(
                &scene.template,
                &scene.frames,
                &setup,
                &cfg.cpd,
                cfg.warm_max_iters,
                Some(&dir),
            )?;
            println!(
                "register: {} frames, {} control points -> {}",
                w.len(),
                setup.control.len(),
                dir.display()
            );
        }
        Command::Scatter { common: c, mode } => {
            let cfg = load_config(&c)?;
            let array = cfg.radar.array.build()?;
            let dir = c.out.join(mode.dir()).join("maps");
            let scene = Scene::read(&scene_dir(&c.out)).context("run `mmresp scene` first")?;
            match mode {
                SynthMode::Proposed => {
                    proposed_maps(&cfg, &scene, &array, Some(&dir), &c.out)?;
                }
                SynthMode::Conventional => {
                    eval::scatter_conventional(&scene.frames, &array, &cfg, Some(&dir))?;
                }
            }
            println!("scatter: maps -> {}", dir.display());
        }
        Command::Synth { common: c, mode } => {
            let cfg = load_config(&c)?;
            let array = cfg.radar.array.build()?;
            let scene = Scene::read(&scene_dir(&c.out)).context("run `mmresp scene` first")?;
            let grid = slow_grid(&cfg, &scene.frames)?;
            let synthesis = match mode {
                SynthMode::Proposed => {
                    let maps = proposed_maps(&cfg, &scene, &array, None, &c.out)?;
                    eval::synth_proposed(&maps, &array, &cfg, &grid)?
                }
                SynthMode::Conventional => {
                    let avg = eval::scatter_conventional(&scene.frames, &array, &cfg, None)?;
                    eval::synth_conventional(&scene.frames, &avg, &array, &cfg, &grid)?
                }
            };
            let dir = c.out.join(mode.dir());
            synthesis.write(&dir, true)?;
            println!(
                "synth: {} centers, {} slow samples -> {}",
                synthesis.centers.len(),
                synthesis.cube.n_slow,
                dir.join("cube.bin").display()
            );
        }
        Command::Dsp { common: c, cube, mode } => {
            let cfg = load_config(&c)?;
            let array = cfg.radar.array.build()?;
            let path = cube.unwrap_or_else(|| c.out.join(mode.dir()).join("cube.bin"));
            let cube = IFCube::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let rec = eval::recover(&cube, &array, &cfg.dsp, cfg.radar.chirp.wavelength(), None)?;
            rec.write(&dir)?;
            let sm = smooth_detrend(&rec.raw, cfg.dsp.smooth_window_s, cfg.dsp.detrend_window_s)?;
            sm.write_csv(&dir.join("displacement_smoothed.csv"))?;
            println!(
                "dsp: pixel r = {:.4} m, theta = {:.2} deg -> {}",
                rec.pixel.range_m,
                rec.pixel.theta_rad.to_degrees(),
                dir.display()
            );
        }
        Command::Metrics {
            common: c,
            recovered,
            truth,
            smoothed,
        } => {
            let cfg = load_config(&c)?;
            let r = eval::compare_csv(&recovered, &truth, cfg.max_lag_s, smoothed)?;
            let row = eval::ReportRow::new("recovered", "truth", &r);
            let path = c.out.join("report.json");
            mmresp::io::write_json(&path, &row)?;
            println!("{}", serde_json::to_string_pretty(&row)?);
        }
        Command::Pipeline(c) => {
            let cfg = load_config(&c)?;
            let report = eval::run_pipeline(&cfg, &c.out)?;
            for r in &report.rows {
                println!(
                    "{:<12} vs {:<9} {:<8} pcc {:.4}  max_xcorr {:.4} @ {:+.2} s  rms {:.3} mm",
                    r.mode,
                    r.truth,
                    if r.smoothed { "smoothed" } else { "raw" },
                    r.pcc,
                    r.max_xcorr,
                    r.lag_s,
                    r.rms_error_mm
                );
            }
            if let Some(iq) = &report.iq_magnitude {
                println!("|S(t)| conventional vs proposed: pcc {:.4}", iq.pcc);
            }
            let timing: Vec<String> = report
                .stage_seconds
                .iter()
                .map(|(k, v)| format!("{k} {v:.1}s"))
                .collect();
            println!("timing: {}", timing.join(", "));
            println!("report -> {}", c.out.join("report.json").display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
