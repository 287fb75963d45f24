//! Independent reference implementations. Nothing here calls the library's
//! own math; only its data types are used to build inputs.

use dynscene::image::{Image, Mask};
use dynscene::projection::{Camera, Intrinsics};
use dynscene::scene::DynamicSceneBundle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sequential cumulative product of `1 − β`.
pub fn alpha_bars(betas: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    betas
        .iter()
        .map(|b| {
            acc *= 1.0 - b;
            acc
        })
        .collect()
}

pub fn linear_betas(n: usize, start: f64, end: f64) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n).map(|i| start + (end - start) * i as f64 / (n - 1) as f64).collect()
}

fn clean_estimate(z: f64, eps: f64, ab: f64) -> f64 {
    (z - (1.0 - ab).sqrt() * eps) / ab.sqrt()
}

/// `sqrt(ᾱ_{i−1}) x̂ + sqrt(1 − ᾱ_{i−1}) ε̂`
pub fn ddim_direction_form(z: f64, eps: f64, ab: f64, ab_prev: f64) -> f64 {
    ab_prev.sqrt() * clean_estimate(z, eps, ab) + (1.0 - ab_prev).sqrt() * eps
}

/// `a z + b x̂` with the interpolation coefficients.
pub fn ddim_interp_form(z: f64, eps: f64, ab: f64, ab_prev: f64) -> f64 {
    let a = ((1.0 - ab_prev) / (1.0 - ab)).sqrt();
    let b = ab_prev.sqrt() - ab.sqrt() * a;
    a * z + b * clean_estimate(z, eps, ab)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OraclePoint {
    pub position: [f64; 3],
    pub color: [f32; 3],
    pub source: (usize, usize),
}

fn oracle_point(b: &DynamicSceneBundle, t: usize, p: usize) -> OraclePoint {
    let n = b.height * b.width;
    let pm = &b.pointmaps[t].data;
    let fr = &b.frames[t].data;
    OraclePoint {
        position: [pm[p] as f64, pm[n + p] as f64, pm[2 * n + p] as f64],
        color: [fr[p], fr[n + p], fr[2 * n + p]],
        source: (t, p),
    }
}

/// Concatenate every static pixel of every frame in frame order and keep the
/// first occurrence per pixel location. Dynamic lists are the raw per-frame
/// non-static pixels.
pub fn aggregate(b: &DynamicSceneBundle) -> (Vec<OraclePoint>, Vec<Vec<OraclePoint>>) {
    let n = b.height * b.width;
    let mut all = Vec::new();
    for t in 0..b.frames.len() {
        for p in 0..n {
            if b.static_masks[t].data[p] {
                all.push(oracle_point(b, t, p));
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    let statics = all.into_iter().filter(|pt| seen.insert(pt.source.1)).collect();
    let dynamics = (0..b.frames.len())
        .map(|t| (0..n).filter(|&p| !b.static_masks[t].data[p]).map(|p| oracle_point(b, t, p)).collect())
        .collect();
    (statics, dynamics)
}

/// Bundle with random colors, positive-depth pointmaps and random static
/// masks; `static_rate` is the probability a pixel is static.
pub fn random_bundle(seed: u64, h: usize, w: usize, frames: usize, static_rate: f64) -> DynamicSceneBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = h * w;
    let mut fr = Vec::new();
    let mut pms = Vec::new();
    let mut masks = Vec::new();
    for _ in 0..frames {
        fr.push(Image::from_vec(3, h, w, (0..3 * n).map(|_| rng.random::<f32>()).collect()).unwrap());
        let mut pm: Vec<f32> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        pm.extend((0..n).map(|_| rng.random_range(0.5f32..4.0)));
        pms.push(Image::from_vec(3, h, w, pm).unwrap());
        masks.push(Mask::from_vec(h, w, (0..n).map(|_| rng.random_bool(static_rate)).collect()).unwrap());
    }
    DynamicSceneBundle {
        height: h,
        width: w,
        intrinsics: Intrinsics::centered(h, w, w as f64),
        frames: fr,
        pointmaps: pms,
        static_masks: masks,
        gt_grid: None,
    }
}

/// Per pixel, the `(point index, depth)` of the nearest point whose footprint
/// covers it, scanning points in index order so equal depths keep the first.
pub fn zbuffer(points: &[[f64; 3]], cam: &Camera<f64>, h: usize, w: usize, footprint: usize) -> Vec<Option<(usize, f64)>> {
    let r = (footprint / 2) as i64;
    let mut out = vec![None; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                let rm = &cam.rotation;
                let q: [f64; 3] = std::array::from_fn(|row| rm[row][0] * p[0] + rm[row][1] * p[1] + rm[row][2] * p[2] + cam.translation[row]);
                if q[2] <= 1e-6 {
                    continue;
                }
                let px = (cam.fx * q[0] / q[2] + cam.cx).floor() as i64;
                let py = (cam.fy * q[1] / q[2] + cam.cy).floor() as i64;
                if (x - px).abs() <= r && (y - py).abs() <= r && best.is_none_or(|(_, d)| q[2] < d) {
                    best = Some((i, q[2]));
                }
            }
            out[y as usize * w + x as usize] = best;
        }
    }
    out
}

/// `(1/|m|) Σ_m |a − b|` over channels and masked pixels.
pub fn masked_l1(a: &Image, b: &Image, m: &Mask) -> Option<f64> {
    let n = a.height * a.width;
    let mut s = 0.0;
    let mut c = 0usize;
    for p in 0..n {
        if m.data[p] {
            for ch in 0..3 {
                s += (a.data[ch * n + p] as f64 - b.data[ch * n + p] as f64).abs();
                c += 1;
            }
        }
    }
    (c > 0).then(|| s / c as f64)
}

/// PSNR with peak 1 from pooled squared error over a set of image pairs.
pub fn pooled_psnr(pairs: &[(&Image, &Image)]) -> f64 {
    let (mut se, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        for (x, y) in a.data.iter().zip(&b.data) {
            se += (*x as f64 - *y as f64).powi(2);
            n += 1;
        }
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Population standard deviation over the per-view mean intensity of row `t`.
pub fn view_mean_std(images: &[&Image]) -> f64 {
    let means: Vec<f64> = images.iter().map(|im| im.data.iter().map(|&v| v as f64).sum::<f64>() / im.data.len() as f64).collect();
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64).sqrt()
}
