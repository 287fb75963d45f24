use crate::diffusion::{Latent, LatentCodec, NoiseSchedule};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::projection::ViewGrid;
use crate::scalar::Real;

/// Grid cell a prediction is made for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellId {
    pub t: usize,
    pub k: usize,
}

/// Conditioning signal: the reference image plus an opaque text tag.
#[derive(Clone, Copy, Debug)]
pub struct Condition<'a> {
    pub image: &'a Image,
    pub tag: &'a str,
}

/// Noise predictor `ε(z_i, i, c)`; `cond = None` is the unconditional branch.
pub trait Denoiser<S: Real>: Send + Sync {
    fn predict_eps(&self, cell: CellId, z: &Latent<S>, step: usize, cond: Option<&Condition>) -> Result<Latent<S>>;

    /// Predicts a whole sweep at once. The default treats frames independently.
    fn predict_eps_sweep(
        &self,
        cells: &[CellId],
        zs: &[Latent<S>],
        step: usize,
        cond: Option<&Condition>,
    ) -> Result<Vec<Latent<S>>> {
        cells.iter().zip(zs).map(|(&c, z)| self.predict_eps(c, z, step, cond)).collect()
    }
}

/// Separable Gaussian blur of every plane, edges clamped.
pub fn gaussian_blur<S: Real>(z: &Latent<S>, sigma: f64) -> Latent<S> {
    if sigma <= 0.0 {
        return z.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<S> = weights.iter().map(|w| S::lit(w / total)).collect();
    let (h, w) = (z.height as isize, z.width as isize);
    let mut tmp = z.clone();
    let mut out = z.clone();
    for c in 0..z.channels {
        let base = c * z.plane();
        for y in 0..h {
            for x in 0..w {
                let mut acc = S::zero();
                for (j, d) in (-radius..=radius).enumerate() {
                    let xx = (x + d).clamp(0, w - 1);
                    acc += weights[j] * z.data[base + (y * w + xx) as usize];
                }
                tmp.data[base + (y * w + x) as usize] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = S::zero();
                for (j, d) in (-radius..=radius).enumerate() {
                    let yy = (y + d).clamp(0, h - 1);
                    acc += weights[j] * tmp.data[base + (yy * w + x) as usize];
                }
                out.data[base + (y * w + x) as usize] = acc;
            }
        }
    }
    out
}

/// Blur applied to the target to form the unconditional branch (latent pixels).
pub const UNCOND_BLUR_SIGMA: f64 = 4.0;

/// Analytic denoiser for a single known clean latent.
///
/// With `noise_level = 0` the conditional prediction is the exact noise
/// `(z − sqrt(ᾱ_i) z*) / sqrt(1 − ᾱ_i)`. With `noise_level = σ > 0` the data
/// are modeled as `N(z*, σ² I)` and the prediction is the posterior-mean
/// noise, so the sampled output scatters around `z*` with spread `σ` and the
/// scatter is fixed by the sampler's seeded initial noise.
#[derive(Clone, Debug)]
pub struct ExactToyDenoiser<S> {
    pub target: Latent<S>,
    pub uncond_target: Latent<S>,
    pub noise_level: f64,
    pub schedule: NoiseSchedule<S>,
}

impl<S: Real> ExactToyDenoiser<S> {
    pub fn new(target: Latent<S>, noise_level: f64, schedule: NoiseSchedule<S>) -> Result<Self> {
        if !(noise_level >= 0.0) || !noise_level.is_finite() {
            return Err(Error::InvalidArgument(format!("noise level must be finite and ≥ 0, got {noise_level}")));
        }
        target.require_finite()?;
        let target = target.with_step(0);
        let uncond_target = gaussian_blur(&target, UNCOND_BLUR_SIGMA);
        Ok(Self { target, uncond_target, noise_level, schedule })
    }

    fn eps_toward(&self, mu: &Latent<S>, z: &Latent<S>, step: usize) -> Result<Latent<S>> {
        if step == 0 || step > self.schedule.num_steps() {
            return Err(Error::StepOutOfRange { index: step, max: self.schedule.num_steps() });
        }
        z.ensure_same_shape(mu)?;
        let ab = self.schedule.alpha_bar(step);
        let (sa, sn) = (ab.sqrt(), (S::one() - ab).sqrt());
        let var = S::lit(self.noise_level * self.noise_level);
        if var == S::zero() {
            return Ok(z.zip_map(mu, |z, m| (z - sa * m) / sn).with_step(step));
        }
        // posterior mean of x given z = sa·x + sn·ε, x ~ N(μ, σ²)
        let kappa = sa * var / (ab * var + S::one() - ab);
        Ok(z.zip_map(mu, |z, m| {
            let x_hat = m + kappa * (z - sa * m);
            (z - sa * x_hat) / sn
        })
        .with_step(step))
    }
}

impl<S: Real> Denoiser<S> for ExactToyDenoiser<S> {
    fn predict_eps(&self, _cell: CellId, z: &Latent<S>, step: usize, cond: Option<&Condition>) -> Result<Latent<S>> {
        match cond {
            Some(_) => self.eps_toward(&self.target, z, step),
            None => self.eps_toward(&self.uncond_target, z, step),
        }
    }
}

/// One toy denoiser per grid cell, dispatched on [`CellId`].
#[derive(Clone, Debug)]
pub struct ToyDenoiserBank<S> {
    pub frames: usize,
    pub views: usize,
    cells: Vec<ExactToyDenoiser<S>>,
}

impl<S: Real> ToyDenoiserBank<S> {
    /// Per-cell toys whose targets are the encoded images of `targets`.
    pub fn from_grid(targets: &ViewGrid, codec: LatentCodec, noise_level: f64, schedule: &NoiseSchedule<S>) -> Result<Self> {
        let cells = targets
            .images
            .iter()
            .map(|img| ExactToyDenoiser::new(codec.encode(img)?, noise_level, schedule.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { frames: targets.frames, views: targets.views, cells })
    }

    pub fn cell(&self, cell: CellId) -> Result<&ExactToyDenoiser<S>> {
        if cell.t >= self.frames || cell.k >= self.views {
            return Err(Error::InvalidArgument(format!(
                "cell ({}, {}) outside the {}x{} denoiser bank",
                cell.t, cell.k, self.frames, self.views
            )));
        }
        Ok(&self.cells[cell.t * self.views + cell.k])
    }
}

impl<S: Real> Denoiser<S> for ToyDenoiserBank<S> {
    fn predict_eps(&self, cell: CellId, z: &Latent<S>, step: usize, cond: Option<&Condition>) -> Result<Latent<S>> {
        self.cell(cell)?.predict_eps(cell, z, step, cond)
    }
}
