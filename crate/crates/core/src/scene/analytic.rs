//! Ray-cast analytic scene: a textured sloped ground plane plus rigid primitives
//! with closed-form trajectories.

use crate::image::{Image, Mask};
use crate::linalg::{self, Vec3};
use crate::projection::Camera;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned box.
    Cuboid { half_extents: [f64; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MotionKind {
    /// Every primitive is static.
    None,
    /// Constant velocity.
    #[default]
    Linear,
    /// Constant-speed circle in the image plane.
    Circular,
}

impl MotionKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Linear => "linear",
            Self::Circular => "circular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "linear" => Some(Self::Linear),
            "circular" => Some(Self::Circular),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    /// Center at frame 0 (world = reference camera frame, meters).
    pub center: Vec3<f64>,
    /// Motion direction in the x/y plane (unit), used for linear motion and as
    /// the initial tangent for circular motion.
    pub direction: [f64; 2],
    /// World speed (m per frame).
    pub speed: f64,
    pub moving: bool,
    pub color: [f32; 3],
    pub stripe_phase: f64,
}

/// Plane `z - slope * y = offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundPlane {
    pub offset: f64,
    pub slope: f64,
    pub phase: [f64; 3],
    pub tint: [f32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene {
    pub ground: GroundPlane,
    pub primitives: Vec<Primitive>,
    pub motion: MotionKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub point: Vec3<f64>,
    pub color: [f32; 3],
    pub dynamic: bool,
}

/// One camera's view of the scene at a frame.
#[derive(Clone, Debug)]
pub struct SceneView {
    pub image: Image,
    /// World positions, planar `[3, h, w]`.
    pub points: Image,
    /// True where a moving primitive is the first hit.
    pub dynamic: Mask,
}

fn ray_sphere(origin: Vec3<f64>, dir: Vec3<f64>, center: Vec3<f64>, radius: f64) -> Option<f64> {
    let oc = linalg::sub(origin, center);
    let a = linalg::dot(dir, dir);
    let b = linalg::dot(oc, dir);
    let c = linalg::dot(oc, oc) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / a;
    let t1 = (-b + sq) / a;
    if t0 > 1e-9 {
        Some(t0)
    } else if t1 > 1e-9 {
        Some(t1)
    } else {
        None
    }
}

fn ray_box(origin: Vec3<f64>, dir: Vec3<f64>, center: Vec3<f64>, half: [f64; 3]) -> Option<(f64, usize)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for i in 0..3 {
        let lo = center[i] - half[i];
        let hi = center[i] + half[i];
        if dir[i].abs() < 1e-15 {
            if origin[i] < lo || origin[i] > hi {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo - origin[i]) / dir[i], (hi - origin[i]) / dir[i]);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        if a > t_near {
            t_near = a;
            axis = i;
        }
        t_far = t_far.min(b);
    }
    if t_near > t_far || t_far <= 1e-9 {
        return None;
    }
    Some((if t_near > 1e-9 { t_near } else { t_far }, axis))
}

impl Primitive {
    pub fn center_at(&self, frame: f64, motion: MotionKind) -> Vec3<f64> {
        if !self.moving {
            return self.center;
        }
        let [dx, dy] = self.direction;
        match motion {
            MotionKind::None => self.center,
            MotionKind::Linear => {
                let s = self.speed * frame;
                [self.center[0] + dx * s, self.center[1] + dy * s, self.center[2]]
            }
            MotionKind::Circular => {
                // circle through the frame-0 center, a quarter turn every 8 frames
                let omega = std::f64::consts::FRAC_PI_2 / 8.0;
                let r = self.speed / omega;
                let ang = omega * frame;
                // tangent (dx, dy) at frame 0, circle center on the left normal
                let (nx, ny) = (-dy, dx);
                let off_t = ang.sin() * r;
                let off_n = (1.0 - ang.cos()) * r;
                [
                    self.center[0] + dx * off_t + nx * off_n,
                    self.center[1] + dy * off_t + ny * off_n,
                    self.center[2],
                ]
            }
        }
    }

    fn color_at(&self, point: Vec3<f64>, center: Vec3<f64>, normal: Vec3<f64>) -> [f32; 3] {
        let light = linalg::normalize([-0.4, -0.6, -0.7]);
        let shade = 0.55 + 0.45 * linalg::dot(normal, light).max(0.0);
        let local = linalg::sub(point, center);
        let stripe = 0.85 + 0.15 * (local[1] * 14.0 + self.stripe_phase).sin();
        self.color.map(|c| (c as f64 * shade * stripe).clamp(0.0, 1.0) as f32)
    }
}

impl GroundPlane {
    fn normal(&self) -> Vec3<f64> {
        [0.0, -self.slope, 1.0]
    }

    fn intersect(&self, origin: Vec3<f64>, dir: Vec3<f64>) -> Option<f64> {
        let n = self.normal();
        let denom = linalg::dot(n, dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.offset - linalg::dot(n, origin)) / denom;
        (t > 1e-9).then_some(t)
    }

    fn color_at(&self, p: Vec3<f64>) -> [f32; 3] {
        // in-plane coordinates: world x and distance along the slope
        let u = p[0];
        let v = p[1] * (1.0 + self.slope * self.slope).sqrt();
        let tau = std::f64::consts::TAU;
        let w1 = (tau * u / 0.9 + self.phase[0]).sin() * (tau * v / 0.9 + self.phase[1]).sin();
        let w2 = (tau * (u + v) / 1.7 + self.phase[2]).sin();
        let base = [0.45, 0.5, 0.42];
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let val = base[c] + 0.18 * w1 * [1.0, 0.6, 0.3][c] + 0.12 * w2 * [0.2, 0.5, 1.0][c];
            out[c] = (val * self.tint[c] as f64).clamp(0.0, 1.0) as f32;
        }
        out
    }
}

impl AnalyticScene {
    /// Nearest surface along `origin + s·dir` at `frame` (real-valued).
    pub fn cast(&self, origin: Vec3<f64>, dir: Vec3<f64>, frame: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let consider = |best: &mut Option<Hit>, hit: Hit| {
            if best.is_none_or(|b| hit.distance < b.distance) {
                *best = Some(hit);
            }
        };
        if let Some(t) = self.ground.intersect(origin, dir) {
            let p = linalg::add(origin, linalg::scale(dir, t));
            consider(&mut best, Hit { distance: t, point: p, color: self.ground.color_at(p), dynamic: false });
        }
        for prim in &self.primitives {
            let center = prim.center_at(frame, self.motion);
            let dynamic = prim.moving && self.motion != MotionKind::None;
            match prim.shape {
                Shape::Sphere { radius } => {
                    if let Some(t) = ray_sphere(origin, dir, center, radius) {
                        let p = linalg::add(origin, linalg::scale(dir, t));
                        let n = linalg::normalize(linalg::sub(p, center));
                        consider(&mut best, Hit { distance: t, point: p, color: prim.color_at(p, center, n), dynamic });
                    }
                }
                Shape::Cuboid { half_extents } => {
                    if let Some((t, axis)) = ray_box(origin, dir, center, half_extents) {
                        let p = linalg::add(origin, linalg::scale(dir, t));
                        let mut n = [0.0; 3];
                        n[axis] = if p[axis] > center[axis] { 1.0 } else { -1.0 };
                        consider(&mut best, Hit { distance: t, point: p, color: prim.color_at(p, center, n), dynamic });
                    }
                }
            }
        }
        best
    }

    /// Renders color, world points and the dynamic mask for one camera.
    pub fn render(&self, cam: &Camera<f64>, frame: f64, height: usize, width: usize) -> SceneView {
        let mut image = Image::rgb(height, width);
        let mut points = Image::rgb(height, width);
        let mut dynamic = Mask::new(height, width, false);
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                let (origin, dir) = cam.pixel_ray_world(x, y);
                if let Some(hit) = self.cast(origin, dir, frame) {
                    image.set_rgb(p, hit.color);
                    points.set_rgb(p, hit.point.map(|v| v as f32));
                    dynamic.data[p] = hit.dynamic;
                }
            }
        }
        SceneView { image, points, dynamic }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_sphere_front_hit() {
        let t = ray_sphere([0.0; 3], [0.0, 0.0, 1.0], [0.0, 0.0, 5.0], 1.0).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert!(ray_sphere([0.0; 3], [0.0, 1.0, 0.0], [0.0, 0.0, 5.0], 1.0).is_none());
    }

    #[test]
    fn ray_box_face() {
        let (t, axis) = ray_box([0.0; 3], [0.0, 0.0, 1.0], [0.0, 0.0, 3.0], [0.5, 0.5, 0.5]).unwrap();
        assert!((t - 2.5).abs() < 1e-12);
        assert_eq!(axis, 2);
    }

    #[test]
    fn circular_motion_keeps_speed() {
        let prim = Primitive {
            shape: Shape::Sphere { radius: 0.2 },
            center: [0.0, 0.0, 2.0],
            direction: [1.0, 0.0],
            speed: 0.05,
            moving: true,
            color: [1.0, 0.0, 0.0],
            stripe_phase: 0.0,
        };
        let a = prim.center_at(3.0, MotionKind::Circular);
        let b = prim.center_at(3.001, MotionKind::Circular);
        let v = linalg::norm(linalg::sub(b, a)) / 0.001;
        assert!((v - 0.05).abs() < 1e-4);
        assert_eq!(prim.center_at(3.0, MotionKind::None), prim.center);
    }
}
