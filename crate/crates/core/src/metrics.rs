//! Image-quality and consistency metrics over view grids.

use crate::error::{Error, Result};
use crate::geometry::FramePointClouds;
use crate::guidance::co_missing;
use crate::image::{Image, Mask};
use crate::kv::KeyValues;
use crate::projection::{splat_coarse, Footprint, ViewGrid};

/// Squared-error sum and sample count, so regional errors can be pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSum {
    pub sum: f64,
    pub count: usize,
}

impl ErrorSum {
    pub fn add(&mut self, other: ErrorSum) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    a.ensure_same_shape(b)
}

pub fn squared_error(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<ErrorSum> {
    check_pair(a, b)?;
    let plane = a.pixels();
    if let Some(m) = mask {
        if m.shape() != [a.height, a.width] {
            return Err(crate::error::shape_err([a.height, a.width], m.shape()));
        }
    }
    let mut acc = ErrorSum::default();
    for (i, (&x, &y)) in a.data.iter().zip(&b.data).enumerate() {
        if mask.is_none_or(|m| m.data[i % plane]) {
            let d = x as f64 - y as f64;
            acc.sum += d * d;
            acc.count += 1;
        }
    }
    Ok(acc)
}

/// PSNR with peak 1 from a mean squared error; `inf` for identical inputs.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(squared_error(a, b, None)?.mean().unwrap_or(0.0)))
}

/// PSNR restricted to `mask`; `None` if the mask is empty.
pub fn psnr_masked(a: &Image, b: &Image, mask: &Mask) -> Result<Option<f64>> {
    Ok(squared_error(a, b, Some(mask))?.mean().map(psnr_from_mse))
}

/// Mean absolute difference over masked pixels and all channels.
pub fn mean_abs_masked(a: &Image, b: &Image, mask: &Mask) -> Result<Option<f64>> {
    Ok(abs_error(a, b, mask)?.mean())
}

fn abs_error(a: &Image, b: &Image, mask: &Mask) -> Result<ErrorSum> {
    check_pair(a, b)?;
    if mask.shape() != [a.height, a.width] {
        return Err(crate::error::shape_err([a.height, a.width], mask.shape()));
    }
    let plane = a.pixels();
    let mut acc = ErrorSum::default();
    for (i, (&x, &y)) in a.data.iter().zip(&b.data).enumerate() {
        if mask.data[i % plane] {
            acc.sum += (x as f64 - y as f64).abs();
            acc.count += 1;
        }
    }
    Ok(acc)
}

fn check_grids(a: &ViewGrid, b: &ViewGrid) -> Result<()> {
    if (a.frames, a.views, a.height, a.width) != (b.frames, b.views, b.height, b.width) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} grid of {}x{}", a.frames, a.views, a.height, a.width),
            actual: format!("{}x{} grid of {}x{}", b.frames, b.views, b.height, b.width),
        });
    }
    Ok(())
}

/// PSNR for every cell of `grid` against `truth`, row-major.
pub fn cell_psnr(grid: &ViewGrid, truth: &ViewGrid) -> Result<Vec<f64>> {
    check_grids(grid, truth)?;
    grid.images.iter().zip(&truth.images).map(|(a, b)| psnr(a, b)).collect()
}

/// PSNR of the pooled squared error over the cells selected by `select(t, k)`.
pub fn pooled_psnr(grid: &ViewGrid, truth: &ViewGrid, select: impl Fn(usize, usize) -> bool) -> Result<Option<f64>> {
    check_grids(grid, truth)?;
    let mut acc = ErrorSum::default();
    for t in 0..grid.frames {
        for k in 0..grid.views {
            if select(t, k) {
                acc.add(squared_error(grid.image(t, k), truth.image(t, k), None)?);
            }
        }
    }
    Ok(acc.mean().map(psnr_from_mse))
}

/// Mean `|I(t,k) − I(t−1,k)|` over the co-missing region of each cell
/// (`t ≥ 1`, `k ≥ 1`), pooled. `None` when every region is empty.
pub fn temporal_flicker(grid: &ViewGrid) -> Result<Option<f64>> {
    let mut acc = ErrorSum::default();
    for t in 1..grid.frames {
        for k in 1..grid.views {
            let m_hat = co_missing(grid.mask(t, k), grid.mask(0, k))?;
            acc.add(abs_error(grid.image(t, k), grid.image(t - 1, k), &m_hat)?);
        }
    }
    Ok(acc.mean())
}

/// Population std over views of each view's mean intensity at frame `t`.
pub fn color_drift(grid: &ViewGrid, t: usize) -> Result<f64> {
    if t >= grid.frames {
        return Err(Error::InvalidArgument(format!("frame {t} outside grid")));
    }
    let means: Vec<f64> = (0..grid.views).map(|k| grid.image(t, k).mean()).collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    Ok((means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / means.len() as f64).sqrt())
}

/// Mean absolute deviation of `grid` from `coarse` over visible pixels of
/// non-reference cells, pooled.
pub fn visible_deviation(grid: &ViewGrid, coarse: &ViewGrid) -> Result<Option<f64>> {
    check_grids(grid, coarse)?;
    let mut acc = ErrorSum::default();
    for t in 0..grid.frames {
        for k in 1..grid.views {
            acc.add(abs_error(grid.image(t, k), coarse.image(t, k), coarse.mask(t, k))?);
        }
    }
    Ok(acc.mean())
}

/// Mean L1 between the pixels that the same scene point lands on in adjacent
/// views, over points visible (z-buffer winners) in both views.
pub fn cross_view_consistency(grid: &ViewGrid, fpc: &FramePointClouds) -> Result<Option<f64>> {
    if fpc.num_frames() != grid.frames {
        return Err(Error::FrameCountMismatch(format!("{} point-cloud frames for a {}-frame grid", fpc.num_frames(), grid.frames)));
    }
    let (h, w) = (grid.height, grid.width);
    let mut acc = ErrorSum::default();
    for t in 0..grid.frames {
        let cloud = fpc.frame_cloud(t)?;
        let pixel_of = |k: usize| -> Vec<Option<usize>> {
            let r = splat_coarse(&cloud, &grid.cameras[k], h, w, Footprint::Pixel);
            let mut at = vec![None; cloud.len()];
            for (p, win) in r.winner.iter().enumerate() {
                if let Some(i) = win {
                    at[*i] = Some(p);
                }
            }
            at
        };
        let mut prev = pixel_of(0);
        for k in 1..grid.views {
            let cur = pixel_of(k);
            for (a, b) in prev.iter().zip(&cur) {
                if let (Some(pa), Some(pb)) = (a, b) {
                    let ca = grid.image(t, k - 1).rgb_at(*pa);
                    let cb = grid.image(t, k).rgb_at(*pb);
                    for c in 0..3 {
                        acc.sum += (ca[c] as f64 - cb[c] as f64).abs();
                        acc.count += 1;
                    }
                }
            }
            prev = cur;
        }
    }
    Ok(acc.mean())
}

/// Formats a PSNR, writing `inf` for identical images.
pub fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub frames: usize,
    pub views: usize,
    /// Row-major per-cell PSNR against ground truth.
    pub cell_psnr: Vec<f64>,
    pub psnr_all: Option<f64>,
    pub psnr_first_row: Option<f64>,
    pub psnr_reference_column: Option<f64>,
    pub psnr_held_out: Option<f64>,
    pub cross_view_l1: Option<f64>,
    pub temporal_flicker: Option<f64>,
    pub color_drift_first_row: f64,
    /// `(stage, milliseconds)`.
    pub wall_clock_ms: Vec<(String, u128)>,
}

impl MetricsReport {
    pub fn compute(grid: &ViewGrid, truth: &ViewGrid, fpc: Option<&FramePointClouds>) -> Result<Self> {
        Ok(Self {
            frames: grid.frames,
            views: grid.views,
            cell_psnr: cell_psnr(grid, truth)?,
            psnr_all: pooled_psnr(grid, truth, |_, _| true)?,
            psnr_first_row: pooled_psnr(grid, truth, |t, _| t == 0)?,
            psnr_reference_column: pooled_psnr(grid, truth, |_, k| k == 0)?,
            psnr_held_out: pooled_psnr(grid, truth, |t, k| t > 0 && k > 0)?,
            cross_view_l1: fpc.map(|f| cross_view_consistency(grid, f)).transpose()?.flatten(),
            temporal_flicker: temporal_flicker(grid)?,
            color_drift_first_row: color_drift(grid, 0)?,
            wall_clock_ms: Vec::new(),
        })
    }

    /// Key-value form; absent metrics are written as `absent`.
    pub fn to_kv(&self) -> KeyValues {
        let opt = |v: Option<f64>, psnr: bool| match v {
            None => "absent".to_string(),
            Some(x) if psnr => fmt_psnr(x),
            Some(x) => format!("{x:.6}"),
        };
        let mut kv = KeyValues::new();
        kv.insert("frames", self.frames);
        kv.insert("views", self.views);
        for (c, v) in self.cell_psnr.iter().enumerate() {
            kv.insert(format!("psnr_t{:02}_k{:02}", c / self.views, c % self.views), fmt_psnr(*v));
        }
        kv.insert("psnr_all", opt(self.psnr_all, true));
        kv.insert("psnr_first_row", opt(self.psnr_first_row, true));
        kv.insert("psnr_reference_column", opt(self.psnr_reference_column, true));
        kv.insert("psnr_held_out", opt(self.psnr_held_out, true));
        kv.insert("cross_view_l1", opt(self.cross_view_l1, false));
        kv.insert("temporal_flicker", opt(self.temporal_flicker, false));
        kv.insert("color_drift_first_row", format!("{:.6}", self.color_drift_first_row));
        for (stage, ms) in &self.wall_clock_ms {
            kv.insert(format!("wall_clock_ms_{stage}"), ms);
        }
        kv
    }

    pub fn summary(&self) -> String {
        let f = |v: Option<f64>| v.map_or("absent".to_string(), fmt_psnr);
        format!(
            "PSNR all {} | first row {} | reference column {} | held-out {} | cross-view L1 {} | flicker {} | drift {:.6}",
            f(self.psnr_all),
            f(self.psnr_first_row),
            f(self.psnr_reference_column),
            f(self.psnr_held_out),
            self.cross_view_l1.map_or("absent".into(), |v| format!("{v:.6}")),
            self.temporal_flicker.map_or("absent".into(), |v| format!("{v:.6}")),
            self.color_drift_first_row
        )
    }
}
