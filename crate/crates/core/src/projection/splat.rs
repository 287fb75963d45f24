use rayon::prelude::*;

use super::{Camera, Provenance, ViewGrid};
use crate::error::{Error, Result};
use crate::geometry::{FramePointClouds, ScenePoint};
use crate::image::{Image, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Footprint {
    #[default]
    Pixel,
    /// 3×3 patch around the nearest pixel.
    Patch3,
}

impl Footprint {
    pub fn from_size(size: usize) -> Result<Self> {
        match size {
            1 => Ok(Self::Pixel),
            3 => Ok(Self::Patch3),
            _ => Err(Error::InvalidArgument(format!("footprint must be 1 or 3, got {size}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Pixel => 1,
            Self::Patch3 => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseRender {
    pub image: Image,
    pub mask: Mask,
    /// Winning depth per pixel, `+inf` where nothing landed.
    pub depth: Vec<f64>,
    /// Index of the winning point per pixel.
    pub winner: Vec<Option<usize>>,
}

/// Z-buffered point splat. Depth ties go to the lower point index.
pub fn splat_coarse(cloud: &[ScenePoint], cam: &Camera<f64>, height: usize, width: usize, footprint: Footprint) -> CoarseRender {
    let n = height * width;
    let mut depth = vec![f64::INFINITY; n];
    let mut winner = vec![None; n];
    let r = (footprint.size() / 2) as i64;
    for (idx, p) in cloud.iter().enumerate() {
        let Ok(pr) = cam.project(p.position) else { continue };
        if !(pr.u.is_finite() && pr.v.is_finite()) {
            continue;
        }
        let (px, py) = (pr.u.floor(), pr.v.floor());
        if px < -(r as f64) - 1.0 || py < -(r as f64) - 1.0 || px > (width as i64 + r) as f64 || py > (height as i64 + r) as f64 {
            continue;
        }
        let (px, py) = (px as i64, py as i64);
        for y in py - r..=py + r {
            for x in px - r..=px + r {
                if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                    continue;
                }
                let q = y as usize * width + x as usize;
                if pr.depth < depth[q] {
                    depth[q] = pr.depth;
                    winner[q] = Some(idx);
                }
            }
        }
    }
    let mut image = Image::rgb(height, width);
    for (q, w) in winner.iter().enumerate() {
        if let Some(i) = w {
            image.set_rgb(q, cloud[*i].color);
        }
    }
    let mask = Mask { height, width, data: winner.iter().map(Option::is_some).collect() };
    CoarseRender { image, mask, depth, winner }
}

/// Coarse grid: every cell splats `frame_cloud(t)` through `cameras[k]`,
/// except column 0, which is the reference video with a full mask.
pub fn render_grid(
    fpc: &FramePointClouds,
    reference: &[Image],
    cameras: &[Camera<f64>],
    height: usize,
    width: usize,
    footprint: Footprint,
) -> Result<ViewGrid> {
    let frames = fpc.num_frames();
    if reference.len() != frames {
        return Err(Error::FrameCountMismatch(format!("{} reference frames for {frames} point clouds", reference.len())));
    }
    if cameras.is_empty() {
        return Err(Error::InvalidArgument("no cameras".into()));
    }
    for cam in cameras {
        cam.validate()?;
    }
    let views = cameras.len();
    let clouds = (0..frames).map(|t| fpc.frame_cloud(t)).collect::<Result<Vec<_>>>()?;
    let cells: Vec<(Image, Mask, Provenance)> = (0..frames * views)
        .into_par_iter()
        .map(|cell| {
            let (t, k) = (cell / views, cell % views);
            if k == 0 {
                (reference[t].clone(), Mask::new(height, width, true), Provenance::Reference)
            } else {
                let r = splat_coarse(&clouds[t], &cameras[k], height, width, footprint);
                (r.image, r.mask, Provenance::Coarse)
            }
        })
        .collect();
    let mut grid = ViewGrid::empty(frames, views, height, width, cameras.to_vec());
    for (cell, (img, mask, prov)) in cells.into_iter().enumerate() {
        grid.images[cell] = img;
        grid.masks[cell] = mask;
        grid.provenance[cell] = prov;
    }
    grid.validate()?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(position: [f64; 3], color: [f32; 3]) -> ScenePoint {
        ScenePoint { position, color, source: (0, 0) }
    }

    #[test]
    fn empty_cloud_is_blank() {
        let cam = Camera::identity(8.0, 8.0, 4.0, 4.0);
        let r = splat_coarse(&[], &cam, 8, 8, Footprint::Pixel);
        assert!(r.mask.none());
        assert!(r.image.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nearer_point_wins() {
        let cam = Camera::identity(8.0, 8.0, 4.0, 4.0);
        let far = pt([0.0, 0.0, 2.0], [0.0, 0.0, 1.0]);
        let near = pt([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        for cloud in [[far, near], [near, far]] {
            let r = splat_coarse(&cloud, &cam, 8, 8, Footprint::Pixel);
            assert_eq!(r.image.rgb_at(4 * 8 + 4), [1.0, 0.0, 0.0]);
            assert_eq!(r.mask.count(), 1);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cam = Camera::identity(8.0, 8.0, 4.0, 4.0);
        let a = pt([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        let b = pt([0.0, 0.0, 1.0], [0.0, 1.0, 0.0]);
        let r = splat_coarse(&[a, b], &cam, 8, 8, Footprint::Patch3);
        assert_eq!(r.winner[4 * 8 + 4], Some(0));
        assert_eq!(r.mask.count(), 9);
    }
}
