use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 14] = [
    "--set", "scene.height=32",
    "--set", "scene.width=32",
    "--set", "scene.frames=3",
    "--set", "scene.views=3",
    "--set", "train.max_splats=400",
    "--set", "train.coarse_iters=20",
    "--set", "train.fine_iters=4",
];

fn dynscene(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynscene")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dynscene(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tiny(extra: &[&str]) -> Vec<String> {
    TINY.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn ok_tiny(extra: &[&str]) -> String {
    let args = tiny(extra);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn help_lists_every_subcommand() {
    let help = ok(&["--help"]);
    for cmd in ["run", "synth", "geometry", "generate", "fit", "render", "metrics", "config"] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
    for flag in ["--no-adaptive-cfg", "--no-pcgd", "--no-rlr", "--no-fine", "--no-modulation", "--threads", "--set"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn bad_config_lists_every_key_and_fails() {
    let out = dynscene(&["config", "--set", "scene.height=7", "--set", "nope=1", "--set", "guidance.rlr=perhaps"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["scene.height", "nope", "guidance.rlr"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
}

#[test]
fn ablation_flags_show_in_resolved_config() {
    let base = ok(&["config"]);
    assert!(base.contains("guidance.rlr = true"));
    assert!(base.contains("scene.frames = 8"));
    let off = ok(&["config", "--no-adaptive-cfg", "--no-pcgd", "--no-rlr", "--no-fine", "--no-modulation"]);
    for line in ["guidance.adaptive_cfg = false", "guidance.pcgd_fraction = 0", "guidance.rlr = false", "train.fine = false", "refine.modulation = false"] {
        assert!(off.contains(line), "{line} missing from\n{off}");
    }
    let full = ok(&["config", "--preset", "full"]);
    assert!(full.contains("scene.frames = 16") && full.contains("scene.views = 25"));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.txt");
    fs::write(&path, "scene.views = 5\nseed = 3\n").unwrap();
    let out = ok(&["config", "--config", path.to_str().unwrap(), "--set", "seed=4"]);
    assert!(out.contains("scene.views = 5"));
    assert!(out.contains("seed = 4"));
}

#[test]
fn subcommand_chain_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    let run = d("run");
    let stdout = ok_tiny(&["run", "--out", &run]);
    assert!(stdout.contains("render:"), "{stdout}");

    ok_tiny(&["synth", "--out", &d("bundle")]);
    ok_tiny(&["geometry", "--bundle", &d("bundle"), "--out", &d("geometry")]);
    let coarse = d("geometry/coarse");
    ok_tiny(&["generate", "--bundle", &d("bundle"), "--coarse", &coarse, "--out", &d("generated")]);
    ok_tiny(&["fit", "--bundle", &d("bundle"), "--coarse", &coarse, "--grid", &d("generated"), "--out", &d("fit")]);
    let traj = d("geometry/coarse/trajectory.txt");
    ok_tiny(&["render", "--checkpoint", &d("fit/checkpoint"), "--trajectory", &traj, "--out", &d("render")]);
    ok_tiny(&["render", "--checkpoint", &d("fit/checkpoint"), "--trajectory", &traj, "--times", "0,0.5,2", "--out", &d("interp")]);
    let truth = d("bundle/gt_grid");
    let render_arg = format!("render={}", d("render"));
    let m = ok_tiny(&["metrics", "--grid", &render_arg, "--truth", &truth, "--masks", &coarse, "--out", &d("metrics")]);
    assert!(m.contains("render:"), "{m}");

    for sub in ["bundle", "geometry", "generated", "fit"] {
        assert_same_tree(&dir.path().join("run").join(sub), &dir.path().join(sub));
    }
    assert_same_tree(&dir.path().join("run/renders/fine"), &dir.path().join("render"));
    let times = fs::read_to_string(dir.path().join("interp/times.txt")).unwrap();
    assert_eq!(times.lines().filter(|l| !l.trim().is_empty()).count(), 3, "{times}");
    let kv = fs::read_to_string(dir.path().join("metrics/metrics.txt")).unwrap();
    assert!(kv.contains("render.psnr_held_out"));
}

#[test]
fn missing_input_is_named_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent_bundle");
    let out = dynscene(&["geometry", "--bundle", missing.to_str().unwrap(), "--out", dir.path().join("g").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent_bundle"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    ok_tiny(&["--threads", "1", "run", "--out", one.to_str().unwrap()]);
    ok_tiny(&["--threads", "4", "run", "--out", four.to_str().unwrap()]);
    assert_same_tree(&one, &four);
}

fn assert_same_tree(a: &Path, b: &Path) {
    let ha = dynscene::pipeline::tree_hash(a).unwrap();
    let hb = dynscene::pipeline::tree_hash(b).unwrap();
    assert_eq!(ha, hb, "{} differs from {}", a.display(), b.display());
}
