use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};
use crate::scalar::Real;

/// Pinhole camera with a world→camera rigid transform. Camera axes: x right,
/// y down, z forward. Pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub rotation: Mat3<S>,
    pub translation: Vec3<S>,
}

/// Depth below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected<S> {
    pub u: S,
    pub v: S,
    pub depth: S,
}

impl<S: Real> Camera<S> {
    pub fn identity(fx: S, fy: S, cx: S, cy: S) -> Self {
        Self { fx, fy, cx, cy, rotation: linalg::identity(), translation: [S::zero(); 3] }
    }

    /// Camera at `position` looking at `target`, image y axis pointing towards world +y.
    pub fn look_at(fx: S, fy: S, cx: S, cy: S, position: Vec3<S>, target: Vec3<S>) -> Self {
        let forward = linalg::normalize(linalg::sub(target, position));
        let down = [S::zero(), S::one(), S::zero()];
        let right = linalg::normalize(linalg::cross(down, forward));
        let cam_down = linalg::cross(forward, right);
        // rows of world→camera rotation are the camera axes in world coordinates
        let rotation = [right, cam_down, forward];
        let translation = linalg::scale(linalg::mat_vec(&rotation, position), -S::one());
        Self { fx, fy, cx, cy, rotation, translation }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > S::zero() && self.fy > S::zero()) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if linalg::orthonormality_error(&self.rotation) > S::lit(1e-9).max(S::epsilon() * S::lit(64.0)) {
            return Err(Error::InvalidArgument("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn to_camera(&self, p: Vec3<S>) -> Vec3<S> {
        linalg::add(linalg::mat_vec(&self.rotation, p), self.translation)
    }

    /// World-space camera center.
    pub fn center(&self) -> Vec3<S> {
        linalg::scale(linalg::mat_t_vec(&self.rotation, self.translation), -S::one())
    }

    /// Pinhole projection `u = fx·qx/qz + cx`, `v = fy·qy/qz + cy`.
    pub fn project(&self, p: Vec3<S>) -> Result<Projected<S>> {
        let q = self.to_camera(p);
        if q[2] <= S::lit(MIN_DEPTH) {
            return Err(Error::BehindCamera { depth: q[2].to_f64_lossy() });
        }
        Ok(Projected { u: self.fx * q[0] / q[2] + self.cx, v: self.fy * q[1] / q[2] + self.cy, depth: q[2] })
    }

    /// Unit-depth ray direction through pixel `(x, y)` center, camera frame.
    pub fn pixel_ray_camera(&self, x: usize, y: usize) -> Vec3<S> {
        let half = S::lit(0.5);
        [
            (S::from_usize(x).unwrap() + half - self.cx) / self.fx,
            (S::from_usize(y).unwrap() + half - self.cy) / self.fy,
            S::one(),
        ]
    }

    /// World-space ray `(origin, direction)` through pixel `(x, y)` center; the
    /// direction has unit camera depth.
    pub fn pixel_ray_world(&self, x: usize, y: usize) -> (Vec3<S>, Vec3<S>) {
        let d = linalg::mat_t_vec(&self.rotation, self.pixel_ray_camera(x, y));
        (self.center(), d)
    }

    pub fn cast<T: Real>(&self) -> Camera<T> {
        let c = |v: S| T::lit(v.to_f64_lossy());
        Camera {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            rotation: self.rotation.map(|r| r.map(c)),
            translation: self.translation.map(c),
        }
    }
}

/// Writes cameras as a trajectory file: header `fx fy cx cy`, then one line
/// per camera with 12 reals (row-major rotation, then translation). All cameras
/// share the header intrinsics.
pub fn save_trajectory(path: &Path, cameras: &[Camera<f64>]) -> Result<()> {
    let first = cameras
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot save an empty trajectory".into()))?;
    let mut s = format!("{} {} {} {}\n", first.fx, first.fy, first.cx, first.cy);
    for cam in cameras {
        let vals: Vec<String> = cam
            .rotation
            .iter()
            .flatten()
            .chain(cam.translation.iter())
            .map(|v| v.to_string())
            .collect();
        writeln!(s, "{}", vals.join(" ")).unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn load_trajectory(path: &Path) -> Result<Vec<Camera<f64>>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let bad = |reason: String| Error::Malformed { path: path.to_path_buf(), reason };
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let parse_line = |line: &str, n: usize, lineno: usize| -> Result<Vec<f64>> {
        let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| bad(format!("line {lineno}: {e}")))?;
        if vals.len() != n {
            return Err(bad(format!("line {lineno}: expected {n} numbers, got {}", vals.len())));
        }
        Ok(vals)
    };
    let header = parse_line(lines.next().ok_or_else(|| bad("empty trajectory file".into()))?, 4, 1)?;
    let mut cams = Vec::new();
    for (i, line) in lines.enumerate() {
        let v = parse_line(line, 12, i + 2)?;
        let cam = Camera {
            fx: header[0],
            fy: header[1],
            cx: header[2],
            cy: header[3],
            rotation: [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]],
            translation: [v[9], v[10], v[11]],
        };
        cam.validate().map_err(|e| bad(format!("camera {i}: {e}")))?;
        cams.push(cam);
    }
    if cams.is_empty() {
        return Err(bad("no cameras listed".into()));
    }
    Ok(cams)
}
