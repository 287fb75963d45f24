use std::fs;
use std::path::Path;

use super::{load_trajectory, save_trajectory, Camera};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::kv::KeyValues;

pub const TRAJECTORY_FILE: &str = "trajectory.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Coarse,
    Generated,
    Reference,
    /// Rendered by the scene oracle.
    GroundTruth,
    /// Rendered from a fitted splat scene.
    Rendered,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Self::Coarse => "coarse",
            Self::Generated => "generated",
            Self::Reference => "reference",
            Self::GroundTruth => "ground_truth",
            Self::Rendered => "rendered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coarse" => Some(Self::Coarse),
            "generated" => Some(Self::Generated),
            "reference" => Some(Self::Reference),
            "ground_truth" => Some(Self::GroundTruth),
            "rendered" => Some(Self::Rendered),
            _ => None,
        }
    }
}

/// `frames × views` lattice of images with visibility masks, stored row-major
/// (`cell = t * views + k`). Column 0 is the reference camera.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewGrid {
    pub frames: usize,
    pub views: usize,
    pub height: usize,
    pub width: usize,
    pub images: Vec<Image>,
    pub masks: Vec<Mask>,
    pub cameras: Vec<Camera<f64>>,
    pub provenance: Vec<Provenance>,
}

fn cell_stem(t: usize, k: usize) -> String {
    format!("t{t:02}_k{k:02}")
}

impl ViewGrid {
    /// Black images, empty masks, coarse provenance.
    pub fn empty(frames: usize, views: usize, height: usize, width: usize, cameras: Vec<Camera<f64>>) -> Self {
        let n = frames * views;
        Self {
            frames,
            views,
            height,
            width,
            images: vec![Image::rgb(height, width); n],
            masks: vec![Mask::new(height, width, false); n],
            cameras,
            provenance: vec![Provenance::Coarse; n],
        }
    }

    #[inline]
    pub fn cell(&self, t: usize, k: usize) -> usize {
        debug_assert!(t < self.frames && k < self.views);
        t * self.views + k
    }

    pub fn image(&self, t: usize, k: usize) -> &Image {
        &self.images[self.cell(t, k)]
    }

    pub fn mask(&self, t: usize, k: usize) -> &Mask {
        &self.masks[self.cell(t, k)]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames * self.views;
        if self.frames == 0 || self.views == 0 {
            return Err(Error::InvalidArgument("grid must have at least one frame and one view".into()));
        }
        if self.images.len() != n || self.masks.len() != n || self.provenance.len() != n || self.cameras.len() != self.views {
            return Err(Error::InvalidArgument(format!(
                "grid {}x{} has {} images, {} masks, {} provenance tags, {} cameras",
                self.frames,
                self.views,
                self.images.len(),
                self.masks.len(),
                self.provenance.len(),
                self.cameras.len()
            )));
        }
        for (c, (img, m)) in self.images.iter().zip(&self.masks).enumerate() {
            if img.shape() != [3, self.height, self.width] || m.shape() != [self.height, self.width] {
                return Err(Error::ShapeMismatch {
                    expected: format!("[3, {}, {}]", self.height, self.width),
                    actual: format!("cell {c}: image {:?}, mask {:?}", img.shape(), m.shape()),
                });
            }
        }
        Ok(())
    }

    /// Writes `view_tTT_kKK.png` (preview), `view_tTT_kKK.ten` (exact values),
    /// `mask_tTT_kKK.ten`, `trajectory.txt` and `manifest.txt` with per-cell provenance.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        let mut kv = KeyValues::new();
        kv.insert("T", self.frames);
        kv.insert("K", self.views);
        kv.insert("H", self.height);
        kv.insert("W", self.width);
        for t in 0..self.frames {
            for k in 0..self.views {
                let c = self.cell(t, k);
                let stem = cell_stem(t, k);
                self.images[c].save_png(&dir.join(format!("view_{stem}.png")))?;
                self.images[c].save_ten1(&dir.join(format!("view_{stem}.ten")))?;
                self.masks[c].save_ten1(&dir.join(format!("mask_{stem}.ten")))?;
                kv.insert(format!("provenance_{stem}"), self.provenance[c].name());
            }
        }
        save_trajectory(&dir.join(TRAJECTORY_FILE), &self.cameras)?;
        kv.save(&dir.join("manifest.txt"))
    }

    /// Reads a grid directory. Images come from the TEN1 copies when present,
    /// otherwise from the PNGs.
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.txt");
        let kv = KeyValues::load(&mpath)?;
        let frames: usize = kv.require_parse("T", &mpath)?;
        let views: usize = kv.require_parse("K", &mpath)?;
        let height: usize = kv.require_parse("H", &mpath)?;
        let width: usize = kv.require_parse("W", &mpath)?;
        let tpath = dir.join(TRAJECTORY_FILE);
        if !tpath.exists() {
            return Err(Error::MissingInput(tpath));
        }
        let cameras = load_trajectory(&tpath)?;
        let mut grid = Self::empty(frames, views, height, width, cameras);
        for t in 0..frames {
            for k in 0..views {
                let c = grid.cell(t, k);
                let stem = cell_stem(t, k);
                let ten = dir.join(format!("view_{stem}.ten"));
                let png = dir.join(format!("view_{stem}.png"));
                grid.images[c] = if ten.exists() {
                    Image::load_ten1(&ten, Some([3, height, width]))?
                } else if png.exists() {
                    let img = Image::load_png(&png)?;
                    if img.shape() != [3, height, width] {
                        return Err(Error::ShapeMismatch { expected: format!("[3, {height}, {width}]"), actual: format!("{}: {:?}", png.display(), img.shape()) });
                    }
                    img
                } else {
                    return Err(Error::MissingInput(ten));
                };
                let mpath_cell = dir.join(format!("mask_{stem}.ten"));
                if !mpath_cell.exists() {
                    return Err(Error::MissingInput(mpath_cell));
                }
                let (mask, soft) = Mask::load_ten1(&mpath_cell, Some([height, width]))?;
                if soft > 0 {
                    log::warn!("{}: {soft} non-binary mask values thresholded at 0.5", mpath_cell.display());
                }
                grid.masks[c] = mask;
                let key = format!("provenance_{stem}");
                let raw = kv.require(&key, &mpath)?;
                grid.provenance[c] = Provenance::parse(raw).ok_or_else(|| Error::Malformed {
                    path: mpath.clone(),
                    reason: format!("unknown provenance `{raw}` for {key}"),
                })?;
            }
        }
        grid.validate()?;
        Ok(grid)
    }
}
