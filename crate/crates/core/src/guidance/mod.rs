//! Masked classifier-free guidance, point-cloud-guided denoising and
//! reference latent replacement, composed into multi-view generation.

mod denoiser;
mod noise;

pub use denoiser::{gaussian_blur, CellId, Condition, Denoiser, ExactToyDenoiser, ToyDenoiserBank, UNCOND_BLUR_SIGMA};
pub use noise::{NoiseOp, NoiseStream};

use rayon::prelude::*;

use crate::diffusion::{ddim_step, forward_noise, Latent, LatentCodec, NoiseSchedule};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::projection::{Provenance, ViewGrid};
use crate::scalar::Real;

pub const DEFAULT_CFG_SCALE: f64 = 7.5;
pub const DEFAULT_PCGD_FRACTION: f64 = 0.4;
pub const CONDITION_TAG: &str = "default";

#[derive(Clone, Debug, PartialEq)]
pub struct GuidancePolicy {
    pub cfg_scale: f64,
    /// Off means plain CFG over the whole frame.
    pub adaptive_cfg: bool,
    /// Fraction ρ of steps (counted from pure noise) that get PCGD.
    pub pcgd_fraction: f64,
    pub rlr: bool,
    /// Keep CFG on for frames after the first.
    pub cfg_for_later_frames: bool,
    pub seed: u64,
}

impl Default for GuidancePolicy {
    fn default() -> Self {
        Self {
            cfg_scale: DEFAULT_CFG_SCALE,
            adaptive_cfg: true,
            pcgd_fraction: DEFAULT_PCGD_FRACTION,
            rlr: true,
            cfg_for_later_frames: false,
            seed: 0,
        }
    }
}

impl GuidancePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfg_scale >= 1.0) {
            return Err(Error::InvalidArgument(format!("cfg scale must be ≥ 1, got {}", self.cfg_scale)));
        }
        if !(0.0..=1.0).contains(&self.pcgd_fraction) {
            return Err(Error::InvalidArgument(format!("pcgd fraction must lie in [0, 1], got {}", self.pcgd_fraction)));
        }
        Ok(())
    }

    /// Whether step `i` of an `n`-step run lies in the early (PCGD) window `i > (1 − ρ) n`.
    pub fn in_pcgd_window(&self, i: usize, n: usize) -> bool {
        i as f64 > (1.0 - self.pcgd_fraction) * n as f64
    }
}

/// `M·ε_c + (1 − M)·(ε_u + s (ε_c − ε_u))`, mask broadcast over channels.
pub fn adaptive_cfg_eps<S: Real, D: Denoiser<S> + ?Sized>(
    denoiser: &D,
    cell: CellId,
    z_i: &Latent<S>,
    i: usize,
    cond: &Condition,
    mask: &Mask,
    s: f64,
) -> Result<Latent<S>> {
    z_i.ensure_mask_shape(mask)?;
    if !(s >= 1.0) {
        return Err(Error::InvalidArgument(format!("cfg scale must be ≥ 1, got {s}")));
    }
    let eps_c = denoiser.predict_eps(cell, z_i, i, Some(cond))?;
    eps_c.ensure_same_shape(z_i)?;
    if mask.all() || s == 1.0 {
        return Ok(eps_c);
    }
    let eps_u = denoiser.predict_eps(cell, z_i, i, None)?;
    eps_u.ensure_same_shape(z_i)?;
    let s = S::lit(s);
    let guided = eps_u.zip_map(&eps_c, |u, c| u + s * (c - u));
    eps_c.select(&mask.invert(), &guided)
}

/// `m·z′_i + (1 − m)·z_i` where `z′_i` is the coarse latent noised to step `i`.
pub fn pcgd_fuse<S: Real>(
    z_i: &Latent<S>,
    coarse: &Latent<S>,
    i: usize,
    mask: &Mask,
    schedule: &NoiseSchedule<S>,
    eps: &Latent<S>,
) -> Result<Latent<S>> {
    z_i.ensure_same_shape(coarse)?;
    z_i.ensure_mask_shape(mask)?;
    let noised = forward_noise(coarse, i, eps, schedule)?;
    Ok(z_i.select(mask, &noised)?.with_step(z_i.step))
}

/// Co-missing mask `(1 − M_cur)(1 − M_ref)`.
pub fn co_missing(m_cur: &Mask, m_ref: &Mask) -> Result<Mask> {
    m_cur.invert().and_not(m_ref)
}

/// `m̂·z_ref_i + (1 − m̂)·z_i` with `m̂` the co-missing mask.
pub fn rlr_fuse<S: Real>(
    z_i: &Latent<S>,
    reference: &Latent<S>,
    i: usize,
    m_cur: &Mask,
    m_ref: &Mask,
    schedule: &NoiseSchedule<S>,
    eps: &Latent<S>,
) -> Result<Latent<S>> {
    z_i.ensure_same_shape(reference)?;
    z_i.ensure_mask_shape(m_cur)?;
    z_i.ensure_mask_shape(m_ref)?;
    let m_hat = co_missing(m_cur, m_ref)?;
    let noised = forward_noise(reference, i, eps, schedule)?;
    Ok(z_i.select(&m_hat, &noised)?.with_step(z_i.step))
}

/// Everything a single view generation reads.
pub struct GenerationContext<'a, S, D: ?Sized> {
    pub coarse: &'a ViewGrid,
    pub denoiser: &'a D,
    pub policy: &'a GuidancePolicy,
    pub schedule: &'a NoiseSchedule<S>,
    pub codec: LatentCodec,
}

impl<S: Real, D: Denoiser<S> + ?Sized> GenerationContext<'_, S, D> {
    /// Full DDIM run for cell `(t, k)`. Per step: PCGD in the early window,
    /// then RLR for `t > 0`, then the noise estimate (masked CFG on the first
    /// frame, plain conditional afterwards), then the DDIM update.
    /// `references` is the generated first row, required when `t > 0` and RLR is on.
    pub fn generate_view(&self, t: usize, k: usize, references: Option<&[Image]>) -> Result<Image> {
        let grid = self.coarse;
        if t >= grid.frames || k >= grid.views {
            return Err(Error::InvalidArgument(format!("cell ({t}, {k}) outside {}x{} grid", grid.frames, grid.views)));
        }
        let reference_image = grid.image(t, 0);
        if k == 0 {
            return Ok(reference_image.clone());
        }
        self.policy.validate()?;
        let n = self.schedule.num_steps();
        let cell = CellId { t, k };
        let noise = NoiseStream::new(self.policy.seed);
        let cond = Condition { image: reference_image, tag: CONDITION_TAG };

        let coarse_latent: Latent<S> = self.codec.encode(grid.image(t, k))?;
        let shape = coarse_latent.shape();
        let visible = self.codec.encode_mask(grid.mask(t, k))?;
        self.codec.check_mask_for(&visible, shape)?;

        let use_rlr = t > 0 && self.policy.rlr;
        let rlr_inputs = if use_rlr {
            let refs = references.ok_or_else(|| Error::InvalidArgument(format!("frame {t} needs the generated first row for RLR")))?;
            let ref_img = refs.get(k).ok_or_else(|| Error::InvalidArgument(format!("missing first-row reference for view {k}")))?;
            let ref_latent: Latent<S> = self.codec.encode(ref_img)?;
            ref_latent.ensure_same_shape(&coarse_latent)?;
            Some((ref_latent, self.codec.encode_mask(grid.mask(0, k))?))
        } else {
            None
        };
        let use_cfg = t == 0 || self.policy.cfg_for_later_frames;
        let cfg_mask = if self.policy.adaptive_cfg { visible.clone() } else { Mask::new(visible.height, visible.width, false) };

        let mut z = noise.draw::<S>(t, k, n, NoiseOp::Init, shape).with_step(n);
        for i in (1..=n).rev() {
            if self.policy.in_pcgd_window(i, n) {
                let eps = noise.draw(t, k, i, NoiseOp::Pcgd, shape);
                z = pcgd_fuse(&z, &coarse_latent, i, &visible, self.schedule, &eps)?;
            }
            if let Some((ref_latent, ref_mask)) = &rlr_inputs {
                let eps = noise.draw(t, k, i, NoiseOp::Rlr, shape);
                z = rlr_fuse(&z, ref_latent, i, &visible, ref_mask, self.schedule, &eps)?;
            }
            let eps_hat = if use_cfg {
                adaptive_cfg_eps(self.denoiser, cell, &z, i, &cond, &cfg_mask, self.policy.cfg_scale)?
            } else {
                self.denoiser.predict_eps(cell, &z, i, Some(&cond))?
            };
            eps_hat.ensure_same_shape(&z)?;
            z = ddim_step(&z, &eps_hat, i, self.schedule)?.0;
        }
        z.require_finite()?;
        Ok(self.codec.decode(&z))
    }

    /// First row across all views, then every later frame (with the first row
    /// frozen as the RLR reference). Column 0 keeps the reference video.
    pub fn generate_grid(&self) -> Result<ViewGrid> {
        let grid = self.coarse;
        grid.validate()?;
        self.policy.validate()?;
        let views = grid.views;
        let first_row: Vec<Image> =
            (0..views).into_par_iter().map(|k| self.generate_view(0, k, None)).collect::<Result<_>>()?;
        let later: Vec<Image> = (views..grid.frames * views)
            .into_par_iter()
            .map(|cell| self.generate_view(cell / views, cell % views, Some(&first_row)))
            .collect::<Result<_>>()?;
        let mut out = grid.clone();
        for (cell, img) in first_row.into_iter().chain(later).enumerate() {
            out.images[cell] = img;
            out.provenance[cell] = if cell % views == 0 { Provenance::Reference } else { Provenance::Generated };
        }
        Ok(out)
    }
}
