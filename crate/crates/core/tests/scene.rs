use dynscene::image::Mask;
use dynscene::projection::{make_trajectory, TrajectoryKind, TrajectoryParams};
use dynscene::scene::{load_bundle, load_bundle_with_warnings, save_bundle, synth_scene, MotionKind, PrimitiveSpec, SceneSpec, Shape};
use dynscene::{ten1, Error};

fn spec(motion: MotionKind) -> SceneSpec {
    SceneSpec { motion, ..SceneSpec::new(32, 48, 4, 3) }
}

#[test]
fn still_scene_is_entirely_static() {
    let b = synth_scene(&spec(MotionKind::None), None).unwrap();
    assert!(b.static_masks.iter().all(Mask::all));
}

#[test]
fn same_seed_same_bundle() {
    let a = synth_scene(&spec(MotionKind::Linear), None).unwrap();
    let b = synth_scene(&spec(MotionKind::Linear), None).unwrap();
    assert_eq!(a, b);
    let other = synth_scene(&SceneSpec { seed: 4, ..spec(MotionKind::Linear) }, None).unwrap();
    assert_ne!(a.frames, other.frames);
}

fn centroid_x(m: &Mask) -> f64 {
    let (mut s, mut c) = (0.0, 0usize);
    for y in 0..m.height {
        for x in 0..m.width {
            if !m.get(y, x) {
                s += x as f64 + 0.5;
                c += 1;
            }
        }
    }
    s / c as f64
}

#[test]
fn one_pixel_per_frame_sphere_moves_one_pixel() {
    let s = SceneSpec {
        motion_px_per_frame: 1.0,
        primitives: Some(vec![PrimitiveSpec { shape: Shape::Sphere { radius: 0.3 }, center: [0.0, 0.0, 2.5], direction: [1.0, 0.0], moving: true }]),
        ..SceneSpec::new(64, 64, 6, 0)
    };
    let b = synth_scene(&s, None).unwrap();
    let xs: Vec<f64> = b.static_masks.iter().map(centroid_x).collect();
    for w in xs.windows(2) {
        let d = w[1] - w[0];
        assert!((d - 1.0).abs() < 0.25, "centroid step {d}");
    }
}

#[test]
fn pointmaps_reproject_within_half_a_pixel() {
    let b = synth_scene(&spec(MotionKind::Linear), None).unwrap();
    let cam = b.reference_camera();
    let n = b.height * b.width;
    for pm in &b.pointmaps {
        for p in 0..n {
            let q = [pm.data[p] as f64, pm.data[n + p] as f64, pm.data[2 * n + p] as f64];
            let pr = cam.project(q).unwrap();
            let (x, y) = ((p % b.width) as f64 + 0.5, (p / b.width) as f64 + 0.5);
            assert!((pr.u - x).abs() <= 0.5 && (pr.v - y).abs() <= 0.5, "pixel {p}: ({}, {})", pr.u, pr.v);
        }
    }
}

#[test]
fn truth_grid_reference_column_is_the_video() {
    let s = spec(MotionKind::Linear);
    let cams = make_trajectory::<f64>(TrajectoryKind::Orbit, 3, &TrajectoryParams::default(), s.intrinsics()).unwrap();
    let b = synth_scene(&s, Some(&cams)).unwrap();
    let g = b.gt_grid.as_ref().unwrap();
    for t in 0..4 {
        assert_eq!(g.image(t, 0), &b.frames[t]);
    }
}

#[test]
fn degenerate_specs_rejected() {
    assert!(synth_scene(&SceneSpec::new(15, 32, 4, 0), None).is_err());
    assert!(synth_scene(&SceneSpec::new(32, 32, 1, 0), None).is_err());
    let zero = SceneSpec {
        primitives: Some(vec![PrimitiveSpec { shape: Shape::Sphere { radius: 0.0 }, center: [0.0, 0.0, 2.5], direction: [1.0, 0.0], moving: true }]),
        ..SceneSpec::new(32, 32, 4, 0)
    };
    assert!(synth_scene(&zero, None).is_err());
}

#[test]
fn bundle_roundtrip_is_exact() {
    let s = spec(MotionKind::Circular);
    let cams = make_trajectory::<f64>(TrajectoryKind::Arc, 3, &TrajectoryParams::default(), s.intrinsics()).unwrap();
    let b = synth_scene(&s, Some(&cams)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&b, dir.path()).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    for key in ["T = 4", "H = 32", "W = 48", "fx = ", "cy = ", "frame_pattern = frame_%03d.ten", "pointmap_pattern = pointmap_%03d.ten", "smask_pattern = smask_%03d.ten"] {
        assert!(manifest.contains(key), "{key} missing from\n{manifest}");
    }
    assert_eq!(load_bundle(dir.path()).unwrap(), b);
}

#[test]
fn missing_pointmap_is_a_frame_count_mismatch() {
    let b = synth_scene(&spec(MotionKind::Linear), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&b, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("pointmap_003.ten")).unwrap();
    let err = load_bundle(dir.path()).unwrap_err();
    assert!(matches!(err, Error::FrameCountMismatch(_)));
    assert!(err.to_string().contains("frame count mismatch"), "{err}");
}

#[test]
fn soft_mask_values_are_thresholded_with_a_warning() {
    let b = synth_scene(&spec(MotionKind::None), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&b, dir.path()).unwrap();
    let p = dir.path().join("smask_001.ten");
    let mut m = ten1::read(&p).unwrap();
    m.data[0] = 0.3;
    m.data[1] = 0.7;
    ten1::write(&p, &m.dims, &m.data).unwrap();
    let (loaded, warnings) = load_bundle_with_warnings(dir.path()).unwrap();
    assert!(!loaded.static_masks[1].data[0]);
    assert!(loaded.static_masks[1].data[1]);
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("smask_001.ten"));
}

#[test]
fn missing_manifest_named() {
    let dir = tempfile::tempdir().unwrap();
    match load_bundle(dir.path()) {
        Err(Error::MissingInput(p)) => assert!(p.ends_with("manifest.txt")),
        other => panic!("unexpected {other:?}"),
    }
}
