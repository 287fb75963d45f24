//! Bundle directories: TEN1 arrays plus `manifest.txt`.

use std::fs;
use std::path::Path;

use super::DynamicSceneBundle;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::kv::KeyValues;
use crate::projection::{Intrinsics, ViewGrid};

const MANIFEST: &str = "manifest.txt";
/// Default subdirectory for the ground-truth grid.
pub const GT_GRID_DIR: &str = "gt_grid";

fn expand(pattern: &str, index: usize) -> String {
    pattern.replace("%03d", &format!("{index:03}"))
}

/// Ground-truth grid directory named by a bundle manifest, if any.
pub fn truth_dir(dir: &Path) -> Result<Option<std::path::PathBuf>> {
    let kv = KeyValues::load(&dir.join(MANIFEST))?;
    Ok(kv.get("gt_grid").map(|sub| dir.join(sub)))
}

pub fn save_bundle(bundle: &DynamicSceneBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir)?;
    let i = bundle.intrinsics;
    let mut kv = KeyValues::new();
    kv.insert("T", bundle.num_frames());
    kv.insert("H", bundle.height);
    kv.insert("W", bundle.width);
    kv.insert("fx", i.fx);
    kv.insert("fy", i.fy);
    kv.insert("cx", i.cx);
    kv.insert("cy", i.cy);
    kv.insert("frame_pattern", "frame_%03d.ten");
    kv.insert("pointmap_pattern", "pointmap_%03d.ten");
    kv.insert("smask_pattern", "smask_%03d.ten");
    for t in 0..bundle.num_frames() {
        bundle.frames[t].save_ten1(&dir.join(expand("frame_%03d.ten", t)))?;
        bundle.pointmaps[t].save_ten1(&dir.join(expand("pointmap_%03d.ten", t)))?;
        bundle.static_masks[t].save_ten1(&dir.join(expand("smask_%03d.ten", t)))?;
    }
    if let Some(grid) = &bundle.gt_grid {
        kv.insert("gt_grid", GT_GRID_DIR);
        grid.save(&dir.join(GT_GRID_DIR))?;
    }
    kv.save(&dir.join(MANIFEST))
}

pub fn load_bundle(dir: &Path) -> Result<DynamicSceneBundle> {
    load_bundle_with_warnings(dir).map(|(b, _)| b)
}

/// Loads a bundle and returns the warnings raised while binarizing soft masks.
pub fn load_bundle_with_warnings(dir: &Path) -> Result<(DynamicSceneBundle, Vec<String>)> {
    let mpath = dir.join(MANIFEST);
    let kv = KeyValues::load(&mpath)?;
    let t: usize = kv.require_parse("T", &mpath)?;
    let h: usize = kv.require_parse("H", &mpath)?;
    let w: usize = kv.require_parse("W", &mpath)?;
    let intrinsics = Intrinsics {
        fx: kv.require_parse("fx", &mpath)?,
        fy: kv.require_parse("fy", &mpath)?,
        cx: kv.require_parse("cx", &mpath)?,
        cy: kv.require_parse("cy", &mpath)?,
    };
    let patterns = ["frame_pattern", "pointmap_pattern", "smask_pattern"]
        .map(|k| kv.get(k).unwrap_or(default_pattern(k)).to_string());

    // Count what is actually on disk before reading anything.
    for pattern in &patterns {
        let present = (0..).take_while(|&i| dir.join(expand(pattern, i)).exists()).count();
        if present != t {
            return Err(Error::FrameCountMismatch(format!(
                "manifest declares T={t} but found {present} files matching {pattern}"
            )));
        }
    }

    let mut frames = Vec::with_capacity(t);
    let mut pointmaps = Vec::with_capacity(t);
    let mut static_masks = Vec::with_capacity(t);
    let mut warnings = Vec::new();
    for i in 0..t {
        frames.push(Image::load_ten1(&dir.join(expand(&patterns[0], i)), Some([3, h, w]))?);
        pointmaps.push(Image::load_ten1(&dir.join(expand(&patterns[1], i)), Some([3, h, w]))?);
        let mask_path = dir.join(expand(&patterns[2], i));
        let (mask, soft) = Mask::load_ten1(&mask_path, Some([h, w]))?;
        if soft > 0 {
            let msg = format!("{}: {soft} non-binary mask values thresholded at 0.5", mask_path.display());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        static_masks.push(mask);
    }
    let gt_grid = match kv.get("gt_grid") {
        Some(sub) => Some(ViewGrid::load(&dir.join(sub))?),
        None => None,
    };
    let bundle = DynamicSceneBundle { height: h, width: w, intrinsics, frames, pointmaps, static_masks, gt_grid };
    bundle.validate()?;
    Ok((bundle, warnings))
}

fn default_pattern(key: &str) -> &'static str {
    match key {
        "frame_pattern" => "frame_%03d.ten",
        "pointmap_pattern" => "pointmap_%03d.ten",
        _ => "smask_%03d.ten",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synth_scene, SceneSpec};

    #[test]
    fn expand_pattern() {
        assert_eq!(expand("frame_%03d.ten", 7), "frame_007.ten");
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let b = synth_scene(&SceneSpec::new(16, 16, 2, 3), None).unwrap();
        save_bundle(&b, dir.path()).unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), b);
    }
}
