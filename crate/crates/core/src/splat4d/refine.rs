//! Short noise-then-denoise pass that steers a render toward a generated view.

use crate::diffusion::{ddim_update, forward_noise, predict_clean, Latent, LatentCodec, NoiseSchedule};
use crate::error::{Error, Result};
use crate::guidance::{CellId, Condition, Denoiser, NoiseOp, NoiseStream};
use crate::image::Image;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    /// Noising depth T̄ (in schedule steps).
    pub steps: usize,
    /// Modulation weight at the first denoising step (i = T̄).
    pub w_start: f64,
    /// Modulation weight at the last denoising step (i = 1).
    pub w_end: f64,
    /// Floor on `std(z0_gen)`; below it γ is 1.
    pub std_eps: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { steps: 5, w_start: 0.5, w_end: 0.0, std_eps: 1e-8 }
    }
}

impl RefineConfig {
    /// Constant weight `w` at every step.
    pub fn constant(steps: usize, w: f64) -> Self {
        Self { steps, w_start: w, w_end: w, ..Self::default() }
    }

    /// Weight for denoising step `i` (`steps ≥ i ≥ 1`), linear from `w_start` at
    /// `i = steps` to `w_end` at `i = 1`.
    pub fn weight(&self, i: usize) -> f64 {
        if self.steps <= 1 {
            return self.w_start;
        }
        let frac = (i - 1) as f64 / (self.steps - 1) as f64;
        self.w_end + (self.w_start - self.w_end) * frac
    }

    pub fn validate(&self, num_steps: usize) -> Result<()> {
        if self.steps == 0 || self.steps > num_steps {
            return Err(Error::InvalidArgument(format!("refine steps must lie in 1..={num_steps}, got {}", self.steps)));
        }
        for w in [self.w_start, self.w_end] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidArgument(format!("modulation weights must lie in [0, 1], got {w}")));
            }
        }
        if !(self.std_eps > 0.0) {
            return Err(Error::InvalidArgument("std guard must be positive".into()));
        }
        Ok(())
    }
}

/// Inputs shared by [`modulation_refine`] and [`sdedit`].
pub struct RefineRequest<'a, S, D: ?Sized> {
    pub denoiser: &'a D,
    pub schedule: &'a NoiseSchedule<S>,
    pub codec: LatentCodec,
    pub config: &'a RefineConfig,
    pub cell: CellId,
    pub condition: Condition<'a>,
    pub seed: u64,
    /// Distinguishes repeated refinements of the same cell.
    pub round: usize,
}

fn refine_loop<S: Real, D: Denoiser<S> + ?Sized>(
    rendered: &Image,
    generated: Option<&Image>,
    req: &RefineRequest<'_, S, D>,
) -> Result<Image> {
    let cfg = req.config;
    cfg.validate(req.schedule.num_steps())?;
    let z_r: Latent<S> = req.codec.encode(rendered)?;
    let z_gen: Option<Latent<S>> = match generated {
        Some(g) => {
            rendered.ensure_same_shape(g)?;
            Some(req.codec.encode(g)?)
        }
        None => None,
    };
    let gen_std = z_gen.as_ref().map(|z| z.std());
    let noise = NoiseStream::new(req.seed).draw(req.cell.t, req.cell.k, req.round, NoiseOp::Refine, z_r.shape());
    let mut z = forward_noise(&z_r, cfg.steps, &noise, req.schedule)?;
    for i in (1..=cfg.steps).rev() {
        let eps = req.denoiser.predict_eps(req.cell, &z, i, Some(&req.condition))?;
        let z0 = predict_clean(&z, &eps, i, req.schedule)?;
        let w = cfg.weight(i);
        let steer = match (&z_gen, gen_std) {
            (Some(zg), Some(sg)) if w != 0.0 => {
                let gamma = if sg < S::lit(cfg.std_eps) { S::one() } else { z0.std() / sg.max(S::lit(cfg.std_eps)) };
                let (wg, w0) = (S::lit(w) * gamma, S::one() - S::lit(w));
                z0.zip_map(zg, |a, g| wg * g + w0 * a)
            }
            _ => z0,
        };
        z = ddim_update(&z, &steer, i, req.schedule)?;
    }
    z.require_finite()?;
    Ok(req.codec.decode(&z))
}

/// Noises `rendered` to step T̄ and denoises it, replacing each clean
/// estimate by `w γ z_gen + (1 − w) z_{0←i}` with `γ = std(z_{0←i}) / std(z_gen)`.
pub fn modulation_refine<S: Real, D: Denoiser<S> + ?Sized>(
    rendered: &Image,
    generated: &Image,
    req: &RefineRequest<'_, S, D>,
) -> Result<Image> {
    refine_loop(rendered, Some(generated), req)
}

/// The unmodulated baseline: noise to T̄, then plain DDIM back to step 0.
pub fn sdedit<S: Real, D: Denoiser<S> + ?Sized>(rendered: &Image, req: &RefineRequest<'_, S, D>) -> Result<Image> {
    refine_loop(rendered, None, req)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_run_from_start_to_end() {
        let c = RefineConfig::default();
        assert_eq!(c.weight(5), 0.5);
        assert_eq!(c.weight(1), 0.0);
        assert!((c.weight(3) - 0.25).abs() < 1e-15);
        assert!(c.validate(50).is_ok());
        assert!(RefineConfig { steps: 51, ..c }.validate(50).is_err());
    }
}
