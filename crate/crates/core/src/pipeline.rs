//! Stage drivers behind the command-line tool. Every stage reads its inputs
//! from disk, writes its outputs into one directory and drops a
//! `stage_manifest.txt` next to them.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::{DenoiserTarget, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::{self, FramePointClouds};
use crate::guidance::{GenerationContext, ToyDenoiserBank};
use crate::image::Mask;
use crate::kv::KeyValues;
use crate::metrics::MetricsReport;
use crate::projection::{load_trajectory, make_trajectory, render_grid, Camera, Provenance, ViewGrid};
use crate::scene::{self, DynamicSceneBundle};
use crate::splat4d::{self, render, SplatScene};
use crate::ten1;

pub const STAGE_MANIFEST: &str = "stage_manifest.txt";
pub const RUN_MANIFEST: &str = "run_manifest.txt";
pub const CONFIG_FILE: &str = "config.txt";

/// Directory layout of a `run` output tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn bundle(&self) -> PathBuf {
        self.root.join("bundle")
    }
    pub fn truth(&self) -> PathBuf {
        self.bundle().join(scene::GT_GRID_DIR)
    }
    pub fn geometry(&self) -> PathBuf {
        self.root.join("geometry")
    }
    pub fn coarse_grid(&self) -> PathBuf {
        self.geometry().join("coarse")
    }
    pub fn generated(&self) -> PathBuf {
        self.root.join("generated")
    }
    pub fn fit(&self) -> PathBuf {
        self.root.join("fit")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.fit().join("checkpoint")
    }
    pub fn coarse_checkpoint(&self) -> PathBuf {
        self.fit().join("coarse_checkpoint")
    }
    pub fn renders(&self) -> PathBuf {
        self.root.join("renders")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics")
    }
}

/// What a finished stage reports back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageRecord {
    pub stage: String,
    pub output_hash: String,
    pub wall_clock_ms: u128,
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput(path.to_path_buf()))
    }
}

fn collect_files(dir: &Path, rel: &str, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        let path = e.path();
        let rel_name = if rel.is_empty() { name.clone() } else { format!("{rel}/{name}") };
        if path.is_dir() {
            collect_files(&path, &rel_name, out)?;
        } else if name != STAGE_MANIFEST && name != RUN_MANIFEST {
            out.push((rel_name, path));
        }
    }
    Ok(())
}

/// SHA-256 over relative paths and contents of every file below `path`
/// (manifests excluded). A single file hashes its bytes alone.
pub fn tree_hash(path: &Path) -> Result<String> {
    require(path)?;
    let mut h = Sha256::new();
    if path.is_file() {
        h.update(fs::read(path)?);
    } else {
        let mut files = Vec::new();
        collect_files(path, "", &mut files)?;
        for (rel, p) in files {
            let bytes = fs::read(&p)?;
            h.update(rel.as_bytes());
            h.update([0]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn finish_stage(cfg: &RunConfig, stage: &str, out: &Path, inputs: &[(&str, &Path)], started: Instant) -> Result<StageRecord> {
    let mut kv = KeyValues::new();
    kv.insert("stage", stage);
    kv.insert("config_hash", cfg.hash());
    kv.insert("seed", cfg.seed);
    for (name, p) in inputs {
        kv.insert(format!("input_hash.{name}"), tree_hash(p)?);
    }
    let output_hash = tree_hash(out)?;
    kv.insert("output_hash", &output_hash);
    let wall_clock_ms = started.elapsed().as_millis();
    kv.insert("wall_clock_ms", wall_clock_ms);
    kv.save(&out.join(STAGE_MANIFEST))?;
    log::info!("{stage}: done in {wall_clock_ms} ms -> {}", out.display());
    Ok(StageRecord { stage: stage.to_string(), output_hash, wall_clock_ms })
}

/// The trajectory for `cfg` under the given intrinsics.
pub fn trajectory_for(cfg: &RunConfig, intr: crate::projection::Intrinsics) -> Result<Vec<Camera<f64>>> {
    make_trajectory(cfg.trajectory, cfg.views, &cfg.trajectory_params, intr)
}

/// Synthesizes the analytic scene with its ground-truth grid.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<StageRecord> {
    let started = Instant::now();
    let cams = trajectory_for(cfg, cfg.intrinsics())?;
    let bundle = scene::synth_scene(&cfg.scene_spec(), Some(&cams))?;
    scene::save_bundle(&bundle, out)?;
    finish_stage(cfg, "synth", out, &[], started)
}

fn load_bundle(path: &Path) -> Result<DynamicSceneBundle> {
    require(path)?;
    let (bundle, warnings) = scene::load_bundle_with_warnings(path)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(bundle)
}

/// Aggregates the bundle into per-frame clouds (written as PLY) and renders
/// the coarse grid into `out/coarse`.
pub fn cmd_geometry(cfg: &RunConfig, bundle_dir: &Path, out: &Path) -> Result<StageRecord> {
    let started = Instant::now();
    let bundle = load_bundle(bundle_dir)?;
    let fpc = geometry::aggregate(&bundle)?;
    fs::create_dir_all(out)?;
    geometry::write_ply(&out.join("static.ply"), &fpc.static_points)?;
    for (t, pts) in fpc.dynamic_points.iter().enumerate() {
        geometry::write_ply(&out.join(format!("dynamic_t{t:02}.ply")), pts)?;
    }
    let cams = trajectory_for(cfg, bundle.intrinsics)?;
    let coarse = render_grid(&fpc, &bundle.frames, &cams, bundle.height, bundle.width, cfg.footprint)?;
    coarse.save(&out.join("coarse"))?;
    finish_stage(cfg, "geometry", out, &[("bundle", bundle_dir)], started)
}

/// Toy denoisers per cell, aimed at the ground-truth grid or the coarse renders.
pub fn denoiser_bank(cfg: &RunConfig, bundle: &DynamicSceneBundle, coarse: &ViewGrid) -> Result<ToyDenoiserBank<f64>> {
    let schedule = cfg.schedule()?;
    let targets = match cfg.denoiser_target {
        DenoiserTarget::Coarse => coarse,
        DenoiserTarget::GroundTruth => {
            let gt = bundle.gt_grid.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "denoiser.target = ground_truth needs a bundle with a gt_grid; use denoiser.target = coarse".into(),
                )
            })?;
            if (gt.frames, gt.views, gt.height, gt.width) != (coarse.frames, coarse.views, coarse.height, coarse.width) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{} grid of {}x{}", coarse.frames, coarse.views, coarse.height, coarse.width),
                    actual: format!("gt_grid {}x{} of {}x{}", gt.frames, gt.views, gt.height, gt.width),
                });
            }
            gt
        }
    };
    ToyDenoiserBank::from_grid(targets, cfg.codec, cfg.denoiser_noise, &schedule)
}

fn load_grid(path: &Path) -> Result<ViewGrid> {
    require(path)?;
    ViewGrid::load(path)
}

/// Runs guided generation over the coarse grid.
pub fn cmd_generate(cfg: &RunConfig, bundle_dir: &Path, coarse_dir: &Path, out: &Path) -> Result<StageRecord> {
    let started = Instant::now();
    let coarse = load_grid(coarse_dir)?;
    let bundle = load_bundle(bundle_dir)?;
    let bank = denoiser_bank(cfg, &bundle, &coarse)?;
    let schedule = cfg.schedule()?;
    let policy = cfg.policy();
    let ctx = GenerationContext { coarse: &coarse, denoiser: &bank, policy: &policy, schedule: &schedule, codec: cfg.codec };
    ctx.generate_grid()?.save(out)?;
    finish_stage(cfg, "generate", out, &[("bundle", bundle_dir), ("coarse", coarse_dir)], started)
}

fn tail_mean(v: &[f64]) -> Option<f64> {
    let n = v.len().min(100);
    (n > 0).then(|| v[v.len() - n..].iter().sum::<f64>() / n as f64)
}

fn write_curve(path: &Path, v: &[f64]) -> Result<()> {
    let data: Vec<f32> = v.iter().map(|&x| x as f32).collect();
    ten1::write(path, &[data.len()], &data)
}

/// Initializes splats from the bundle, runs the coarse stage on the anchor
/// cells and then the fine stage. Writes `checkpoint/`, `coarse_checkpoint/`
/// and the loss curves.
pub fn cmd_fit(cfg: &RunConfig, bundle_dir: &Path, coarse_dir: &Path, grid_dir: &Path, out: &Path) -> Result<StageRecord> {
    let started = Instant::now();
    let bundle = load_bundle(bundle_dir)?;
    let coarse = load_grid(coarse_dir)?;
    let grid = load_grid(grid_dir)?;
    let fpc = geometry::aggregate(&bundle)?;
    let mut scene: SplatScene<f64> = splat4d::init_scene(&fpc, cfg.max_splats)?;
    fs::create_dir_all(out)?;
    log::info!("fit: {} splats, {} coarse iterations", scene.len(), cfg.coarse_iters);
    let coarse_log = splat4d::train_coarse(&mut scene, &grid, &cfg.coarse_train())?;
    splat4d::save_checkpoint(&scene, &out.join("coarse_checkpoint"))?;
    let fine_cfg = cfg.fine_train();
    let fine_log = if fine_cfg.iters > 0 {
        log::info!("fit: {} fine iterations", fine_cfg.iters);
        let bank = denoiser_bank(cfg, &bundle, &coarse)?;
        splat4d::train_fine(&mut scene, &grid, &bank, &cfg.schedule()?, cfg.codec, &fine_cfg)?
    } else {
        Default::default()
    };
    splat4d::save_checkpoint(&scene, &out.join("checkpoint"))?;

    let mut kv = KeyValues::new();
    let opt = |v: Option<f64>| v.map_or("absent".to_string(), |x| format!("{x:.6}"));
    kv.insert("splats", scene.len());
    kv.insert("coarse_iters", coarse_log.anchor_l1.len());
    kv.insert("coarse_anchor_l1_tail", opt(tail_mean(&coarse_log.anchor_l1)));
    kv.insert("fine_iters", fine_log.anchor_l1.len());
    kv.insert("fine_anchor_l1_tail", opt(tail_mean(&fine_log.anchor_l1)));
    kv.insert("fine_perceptual_tail", opt(tail_mean(&fine_log.perceptual)));
    kv.save(&out.join("train_log.txt"))?;
    write_curve(&out.join("coarse_anchor_l1.ten"), &coarse_log.anchor_l1)?;
    write_curve(&out.join("fine_anchor_l1.ten"), &fine_log.anchor_l1)?;
    write_curve(&out.join("fine_perceptual.ten"), &fine_log.perceptual)?;
    finish_stage(cfg, "fit", out, &[("bundle", bundle_dir), ("coarse", coarse_dir), ("grid", grid_dir)], started)
}

/// Renders a checkpoint from every camera of `trajectory` at each time in
/// `times`, as a grid directory (row `i` holds time `times[i]`) plus `times.txt`.
pub fn cmd_render(cfg: &RunConfig, checkpoint: &Path, trajectory: &Path, times: &[f64], out: &Path) -> Result<StageRecord> {
    let started = Instant::now();
    require(checkpoint)?;
    require(trajectory)?;
    if times.is_empty() {
        return Err(Error::InvalidArgument("render needs at least one time".into()));
    }
    let scene: SplatScene<f64> = splat4d::load_checkpoint(checkpoint)?;
    let cams = load_trajectory(trajectory)?;
    if let Some(t) = times.iter().find(|t| !t.is_finite() || **t < 0.0 || **t > (scene.frames - 1) as f64) {
        return Err(Error::InvalidArgument(format!("render time {t} outside [0, {}]", scene.frames - 1)));
    }
    let grid = render_checkpoint(&scene, &cams, times, cfg.height, cfg.width);
    grid.save(out)?;
    let mut kv = KeyValues::new();
    for (i, t) in times.iter().enumerate() {
        kv.insert(format!("t{i:02}"), t);
    }
    kv.save(&out.join("times.txt"))?;
    finish_stage(cfg, "render", out, &[("checkpoint", checkpoint), ("trajectory", trajectory)], started)
}

/// Grid of splat renders; masks are all visible.
pub fn render_checkpoint(scene: &SplatScene<f64>, cams: &[Camera<f64>], times: &[f64], height: usize, width: usize) -> ViewGrid {
    use rayon::prelude::*;
    let views = cams.len();
    let mut grid = ViewGrid::empty(times.len(), views, height, width, cams.to_vec());
    grid.images = (0..times.len() * views)
        .into_par_iter()
        .map(|c| render(scene, &cams[c % views], times[c / views], height, width).image())
        .collect();
    grid.masks = vec![Mask::new(height, width, true); grid.images.len()];
    grid.provenance = vec![Provenance::Rendered; grid.images.len()];
    grid
}

/// Compares each labelled grid with the truth grid. With `masks_from`, the
/// evaluated grids take their visibility masks (used by the flicker metric)
/// from that grid. With a bundle, cross-view consistency is reported too.
/// Writes `metrics.txt` (keys prefixed by label) and `report.txt`.
pub fn cmd_metrics(
    cfg: &RunConfig,
    grids: &[(&str, &Path)],
    truth_dir: &Path,
    masks_from: Option<&Path>,
    bundle_dir: Option<&Path>,
    out: &Path,
) -> Result<(StageRecord, Vec<(String, MetricsReport)>)> {
    let started = Instant::now();
    let truth = load_grid(truth_dir)?;
    let masks = masks_from.map(load_grid).transpose()?;
    let fpc: Option<FramePointClouds> = bundle_dir.map(|b| geometry::aggregate(&load_bundle(b)?)).transpose()?;
    let mut reports = Vec::new();
    let mut kv = KeyValues::new();
    let mut text = String::new();
    for (label, dir) in grids {
        let mut grid = load_grid(dir)?;
        if let Some(m) = &masks {
            if m.masks.len() != grid.masks.len() || m.height != grid.height || m.width != grid.width {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{} grid of {}x{}", grid.frames, grid.views, grid.height, grid.width),
                    actual: format!("mask grid {}x{} of {}x{}", m.frames, m.views, m.height, m.width),
                });
            }
            grid.masks = m.masks.clone();
        }
        let report = MetricsReport::compute(&grid, &truth, fpc.as_ref())?;
        for (k, v) in report.to_kv().iter() {
            kv.insert(format!("{label}.{k}"), v);
        }
        text.push_str(&format!("{label}: {}\n", report.summary()));
        reports.push((label.to_string(), report));
    }
    fs::create_dir_all(out)?;
    kv.save(&out.join("metrics.txt"))?;
    fs::write(out.join("report.txt"), text)?;
    let mut inputs: Vec<(&str, &Path)> = grids.to_vec();
    inputs.push(("truth", truth_dir));
    if let Some(m) = masks_from {
        inputs.push(("masks", m));
    }
    if let Some(b) = bundle_dir {
        inputs.push(("bundle", b));
    }
    Ok((finish_stage(cfg, "metrics", out, &inputs, started)?, reports))
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub layout: RunLayout,
    pub stages: Vec<StageRecord>,
    /// Empty when the bundle has no ground truth.
    pub metrics: Vec<(String, MetricsReport)>,
}

impl RunSummary {
    pub fn report(&self, label: &str) -> Option<&MetricsReport> {
        self.metrics.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }
}

fn reset_dir(p: &Path) -> Result<()> {
    if p.exists() {
        fs::remove_dir_all(p)?;
    }
    Ok(())
}

/// The whole chain: synth (unless a bundle is configured), geometry,
/// generate, fit, render (fine and coarse checkpoints), metrics.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let layout = RunLayout::new(&cfg.output);
    fs::create_dir_all(&layout.root)?;
    for d in [layout.bundle(), layout.geometry(), layout.generated(), layout.fit(), layout.renders(), layout.metrics()] {
        reset_dir(&d)?;
    }
    cfg.canonical_kv().save(&layout.root.join(CONFIG_FILE))?;

    let mut stages = Vec::new();
    let bundle_dir = match &cfg.bundle {
        Some(b) => {
            require(b)?;
            b.clone()
        }
        None => {
            stages.push(cmd_synth(cfg, &layout.bundle())?);
            layout.bundle()
        }
    };
    stages.push(cmd_geometry(cfg, &bundle_dir, &layout.geometry())?);
    let coarse = layout.coarse_grid();
    stages.push(cmd_generate(cfg, &bundle_dir, &coarse, &layout.generated())?);
    stages.push(cmd_fit(cfg, &bundle_dir, &coarse, &layout.generated(), &layout.fit())?);
    let times: Vec<f64> = (0..cfg.frames).map(|t| t as f64).collect();
    let traj = coarse.join(crate::projection::TRAJECTORY_FILE);
    let fine_dir = layout.renders().join("fine");
    let coarse_render_dir = layout.renders().join("coarse");
    stages.push(cmd_render(cfg, &layout.checkpoint(), &traj, &times, &fine_dir)?);
    let mut r = cmd_render(cfg, &layout.coarse_checkpoint(), &traj, &times, &coarse_render_dir)?;
    r.stage = "render_coarse".into();
    stages.push(r);

    let mut metrics = Vec::new();
    if let Some(truth) = scene::truth_dir(&bundle_dir)? {
        let grids: [(&str, &Path); 4] =
            [("coarse", &coarse), ("generated", &layout.generated()), ("render_coarse", &coarse_render_dir), ("render", &fine_dir)];
        let (rec, mut reports) = cmd_metrics(cfg, &grids, &truth, Some(&coarse), Some(&bundle_dir), &layout.metrics())?;
        stages.push(rec);
        for (_, rep) in &mut reports {
            rep.wall_clock_ms = stages.iter().map(|s| (s.stage.clone(), s.wall_clock_ms)).collect();
        }
        metrics = reports;
    } else {
        log::warn!("bundle {} has no ground-truth grid; skipping metrics", bundle_dir.display());
    }

    let mut kv = KeyValues::new();
    kv.insert("config_hash", cfg.hash());
    kv.insert("seed", cfg.seed);
    for (k, v) in cfg.canonical_kv().iter() {
        kv.insert(format!("config.{k}"), v);
    }
    for s in &stages {
        kv.insert(format!("stage.{}.output_hash", s.stage), &s.output_hash);
        kv.insert(format!("stage.{}.wall_clock_ms", s.stage), s.wall_clock_ms);
    }
    kv.insert("wall_clock_ms", stages.iter().map(|s| s.wall_clock_ms).sum::<u128>());
    kv.save(&layout.root.join(RUN_MANIFEST))?;
    Ok(RunSummary { layout, stages, metrics })
}
