//! Cameras, trajectories, coarse point splatting and the view grid.

mod camera;
mod grid;
mod splat;
mod trajectory;

pub use camera::{load_trajectory, save_trajectory, Camera, Projected, MIN_DEPTH};
pub use grid::{Provenance, ViewGrid, TRAJECTORY_FILE};
pub use splat::{render_grid, splat_coarse, CoarseRender, Footprint};
pub use trajectory::{camera_yaw, make_trajectory, Intrinsics, TrajectoryKind, TrajectoryParams};
