use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

use super::Camera;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TrajectoryKind {
    /// Pure yaw about the scene center.
    #[default]
    Orbit,
    /// Yaw about the center with a half-sine elevation bump of a third of the yaw range.
    Arc,
    /// Sideways translation, always looking at the center.
    Lateral,
}

impl TrajectoryKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Orbit => "orbit",
            Self::Arc => "arc",
            Self::Lateral => "lateral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "orbit" => Some(Self::Orbit),
            "arc" => Some(Self::Arc),
            "lateral" => Some(Self::Lateral),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryParams {
    /// Distance from the reference camera to the look-at center on its optical axis (m).
    pub radius: f64,
    pub max_yaw_deg: f64,
    /// Half-width of the lateral sweep (m).
    pub lateral_extent: f64,
    /// Sample `[-max, max]` instead of `[0, max]` for the non-reference poses.
    pub symmetric: bool,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self { radius: 3.0, max_yaw_deg: 30.0, lateral_extent: 0.6, symmetric: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square pixels, principal point at the image center.
    pub fn centered(height: usize, width: usize, focal: f64) -> Self {
        Self { fx: focal, fy: focal, cx: width as f64 / 2.0, cy: height as f64 / 2.0 }
    }
}

/// Path parameter for pose `k` (k ≥ 1) in `[0, 1]`, or `[-1, 1]` when symmetric.
fn path_param(k: usize, count: usize, symmetric: bool) -> f64 {
    if symmetric {
        if count == 2 {
            1.0
        } else {
            -1.0 + 2.0 * (k - 1) as f64 / (count - 2) as f64
        }
    } else {
        k as f64 / (count - 1) as f64
    }
}

/// `count` cameras; `cameras[0]` is the identity (reference) pose and every pose
/// looks at `(0, 0, radius)`.
pub fn make_trajectory<S: Real>(
    kind: TrajectoryKind,
    count: usize,
    params: &TrajectoryParams,
    intr: Intrinsics,
) -> Result<Vec<Camera<S>>> {
    if count == 0 {
        return Err(Error::InvalidArgument("trajectory needs at least one camera".into()));
    }
    if !(params.radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {}", params.radius)));
    }
    let l = |v: f64| S::lit(v);
    let (fx, fy, cx, cy) = (l(intr.fx), l(intr.fy), l(intr.cx), l(intr.cy));
    let center = [0.0, 0.0, params.radius];
    let max_yaw = params.max_yaw_deg.to_radians();
    let mut cams = vec![Camera::identity(fx, fy, cx, cy)];
    for k in 1..count {
        let s = path_param(k, count, params.symmetric);
        let position = match kind {
            TrajectoryKind::Orbit | TrajectoryKind::Arc => {
                let yaw = max_yaw * s;
                let pitch = if kind == TrajectoryKind::Arc {
                    -(max_yaw / 3.0) * (std::f64::consts::PI * s.abs()).sin()
                } else {
                    0.0
                };
                let rot = linalg::rotation_yaw_pitch(yaw, pitch);
                linalg::add(center, linalg::mat_vec(&rot, [0.0, 0.0, -params.radius]))
            }
            TrajectoryKind::Lateral => [params.lateral_extent * s, 0.0, 0.0],
        };
        cams.push(Camera::look_at(fx, fy, cx, cy, position.map(l), center.map(l)));
    }
    Ok(cams)
}

/// Signed yaw (radians) of a camera's viewing direction about the world y axis.
pub fn camera_yaw<S: Real>(cam: &Camera<S>) -> S {
    let f = cam.rotation[2];
    f[0].atan2(f[2])
}
