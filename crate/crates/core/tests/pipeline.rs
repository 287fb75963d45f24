use std::fs;
use std::path::Path;

use dynscene::config::RunConfig;
use dynscene::error::Error;
use dynscene::kv::KeyValues;
use dynscene::pipeline::*;

fn tiny(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::standard();
    cfg.output = out.to_path_buf();
    cfg.height = 32;
    cfg.width = 32;
    cfg.frames = 3;
    cfg.views = 3;
    cfg.max_splats = 600;
    cfg.coarse_iters = 40;
    cfg.fine_iters = 6;
    cfg.refresh = 3;
    cfg
}

#[test]
fn config_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path()).with_overrides(&["guidance.rlr=false".into(), "seed=17".into()]).unwrap();
    let path = dir.path().join("cfg.txt");
    cfg.to_kv().save(&path).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);

    fs::write(&path, "preset = standard\nscene.frames = 5\n").unwrap();
    let partial = RunConfig::load(&path).unwrap();
    assert_eq!(partial, RunConfig { frames: 5, ..RunConfig::standard() });
}

#[test]
fn config_errors_name_every_key() {
    let base = RunConfig::standard();
    let bad = ["scene.height=7", "guidance.cfg_scale=0.5", "bogus.key=1", "train.fine=maybe", "no_equals_sign"];
    let err = base.with_overrides(&bad.map(String::from)).unwrap_err();
    let Error::Config(msgs) = &err else { panic!("{err}") };
    for key in ["scene.height", "guidance.cfg_scale", "bogus.key", "train.fine", "no_equals_sign"] {
        assert!(msgs.iter().any(|m| m.contains(key)), "{key} missing from {msgs:?}");
    }
    assert_eq!(msgs.len(), 5, "{msgs:?}");
}

#[test]
fn config_hash_ignores_output_only() {
    let a = tiny(Path::new("/tmp/a"));
    let b = tiny(Path::new("/tmp/b"));
    assert_eq!(a.hash(), b.hash());
    let c = RunConfig { seed: 1, ..a.clone() };
    assert_ne!(a.hash(), c.hash());
}

fn manifest(dir: &Path) -> KeyValues {
    KeyValues::load(&dir.join(STAGE_MANIFEST)).unwrap()
}

#[test]
fn stages_reproduce_the_full_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = tiny(a.path());
    let run = cmd_run(&cfg).unwrap();
    let la = &run.layout;
    let names: Vec<&str> = run.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["synth", "geometry", "generate", "fit", "render", "render_coarse", "metrics"]);
    assert!(la.metrics().join("metrics.txt").exists());
    assert!(la.root.join(RUN_MANIFEST).exists());
    assert!(la.root.join(CONFIG_FILE).exists());

    for dir in [la.bundle(), la.geometry(), la.generated(), la.fit(), la.metrics()] {
        let m = manifest(&dir);
        assert_eq!(m.get("config_hash"), Some(cfg.hash().as_str()));
        assert_eq!(m.get("output_hash").unwrap(), tree_hash(&dir).unwrap());
        assert!(m.get("wall_clock_ms").is_some());
    }
    assert!(manifest(&la.generated()).get("input_hash.coarse").is_some());

    let lb = RunLayout::new(b.path());
    cmd_geometry(&cfg, &la.bundle(), &lb.geometry()).unwrap();
    assert_eq!(tree_hash(&lb.geometry()).unwrap(), tree_hash(&la.geometry()).unwrap());
    cmd_generate(&cfg, &la.bundle(), &lb.coarse_grid(), &lb.generated()).unwrap();
    assert_eq!(tree_hash(&lb.generated()).unwrap(), tree_hash(&la.generated()).unwrap());
    cmd_fit(&cfg, &la.bundle(), &lb.coarse_grid(), &lb.generated(), &lb.fit()).unwrap();
    assert_eq!(tree_hash(&lb.fit()).unwrap(), tree_hash(&la.fit()).unwrap());
    let traj = lb.coarse_grid().join(dynscene::projection::TRAJECTORY_FILE);
    let times: Vec<f64> = (0..cfg.frames).map(|t| t as f64).collect();
    let out = lb.renders().join("fine");
    cmd_render(&cfg, &lb.checkpoint(), &traj, &times, &out).unwrap();
    assert_eq!(tree_hash(&out).unwrap(), tree_hash(&la.renders().join("fine")).unwrap());
}

#[test]
fn self_comparison_is_infinite_and_static_scene_does_not_flicker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path()).with_overrides(&["scene.motion=none".into()]).unwrap();
    let layout = RunLayout::new(dir.path());
    cmd_synth(&cfg, &layout.bundle()).unwrap();
    cmd_geometry(&cfg, &layout.bundle(), &layout.geometry()).unwrap();
    let truth = layout.truth();
    let (_, reports) =
        cmd_metrics(&cfg, &[("self", &truth)], &truth, Some(&layout.coarse_grid()), None, &layout.metrics()).unwrap();
    let r = &reports[0].1;
    assert!(r.cell_psnr.iter().all(|p| p.is_infinite()));
    assert_eq!(r.psnr_all, Some(f64::INFINITY));
    assert_eq!(r.temporal_flicker, Some(0.0));
    let kv = KeyValues::load(&layout.metrics().join("metrics.txt")).unwrap();
    assert_eq!(kv.get("self.psnr_all"), Some("inf"));
    assert!(fs::read_to_string(layout.metrics().join("report.txt")).unwrap().starts_with("self:"));
}

#[test]
fn missing_inputs_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let nowhere = dir.path().join("no_such_bundle");
    let err = cmd_geometry(&cfg, &nowhere, &dir.path().join("g")).unwrap_err().to_string();
    assert!(err.contains("no_such_bundle"), "{err}");
    let err = cmd_render(&cfg, &dir.path().join("no_ckpt"), &dir.path().join("traj.txt"), &[0.0], &dir.path().join("r"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("no_ckpt") || err.contains("traj.txt"), "{err}");
    let bad = RunConfig { bundle: Some(nowhere.clone()), ..cfg };
    let err = cmd_run(&bad).unwrap_err().to_string();
    assert!(err.contains("no_such_bundle"), "{err}");
}

#[test]
fn invalid_config_is_rejected_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { height: 15, refresh: 0, ..tiny(&dir.path().join("run")) };
    let Err(Error::Config(msgs)) = cmd_run(&cfg) else { panic!("expected config error") };
    assert_eq!(msgs.len(), 2, "{msgs:?}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn disabling_rlr_raises_flicker() {
    let flicker = |rlr: bool| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.denoiser_noise = 0.1;
        cfg.rlr = rlr;
        cfg.coarse_iters = 1;
        cfg.fine = false;
        let run = cmd_run(&cfg).unwrap();
        run.report("generated").unwrap().temporal_flicker.unwrap()
    };
    let (with, without) = (flicker(true), flicker(false));
    assert!(with < without, "flicker with RLR {with}, without {without}");
}
