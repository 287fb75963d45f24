//! Progressive static aggregation and per-frame point clouds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::image::Mask;
use crate::linalg::Vec3;
use crate::scene::DynamicSceneBundle;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenePoint {
    pub position: Vec3<f64>,
    pub color: [f32; 3],
    /// `(frame, pixel index y * W + x)`.
    pub source: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FramePointClouds {
    pub static_points: Vec<ScenePoint>,
    pub dynamic_points: Vec<Vec<ScenePoint>>,
}

/// `m_s_t ∧ ¬union_prev`: static pixels not yet covered by earlier frames.
pub fn new_static_mask(m_s_t: &Mask, union_prev: &Mask) -> Result<Mask> {
    if m_s_t.shape() != union_prev.shape() {
        return Err(shape_err(m_s_t.shape(), union_prev.shape()));
    }
    m_s_t.and_not(union_prev)
}

fn point_at(bundle: &DynamicSceneBundle, t: usize, p: usize) -> ScenePoint {
    let n = bundle.height * bundle.width;
    let pm = &bundle.pointmaps[t].data;
    ScenePoint {
        position: [pm[p] as f64, pm[n + p] as f64, pm[2 * n + p] as f64],
        color: bundle.frames[t].rgb_at(p),
        source: (t, p),
    }
}

/// Builds the static cloud frame by frame, adding only pixels that no earlier
/// frame marked static, and collects each frame's dynamic pixels.
pub fn aggregate(bundle: &DynamicSceneBundle) -> Result<FramePointClouds> {
    bundle.validate()?;
    let (h, w) = (bundle.height, bundle.width);
    let mut union = Mask::new(h, w, false);
    let mut static_points = Vec::new();
    let mut dynamic_points = Vec::with_capacity(bundle.num_frames());
    for t in 0..bundle.num_frames() {
        let fresh = new_static_mask(&bundle.static_masks[t], &union)?;
        static_points.extend(fresh.data.iter().enumerate().filter(|(_, &b)| b).map(|(p, _)| point_at(bundle, t, p)));
        union = union.or(&bundle.static_masks[t])?;
        let dynamic = bundle.static_masks[t].data.iter().enumerate().filter(|(_, &s)| !s);
        dynamic_points.push(dynamic.map(|(p, _)| point_at(bundle, t, p)).collect());
    }
    Ok(FramePointClouds { static_points, dynamic_points })
}

impl FramePointClouds {
    pub fn num_frames(&self) -> usize {
        self.dynamic_points.len()
    }

    /// Final static set followed by frame `t`'s dynamic points.
    pub fn frame_cloud(&self, t: usize) -> Result<Vec<ScenePoint>> {
        let dynamic = self
            .dynamic_points
            .get(t)
            .ok_or_else(|| Error::InvalidArgument(format!("frame {t} out of range for {} frames", self.num_frames())))?;
        Ok(self.static_points.iter().chain(dynamic).copied().collect())
    }
}

/// ASCII PLY with `x y z` floats and `red green blue` bytes.
pub fn write_ply(path: &Path, points: &[ScenePoint]) -> Result<()> {
    let mut s = String::with_capacity(64 + points.len() * 40);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", points.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n");
    for p in points {
        let c = p.color.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
        let _ = writeln!(s, "{} {} {} {} {} {}", p.position[0], p.position[1], p.position[2], c[0], c[1], c[2]);
    }
    fs::write(path, s)?;
    Ok(())
}
