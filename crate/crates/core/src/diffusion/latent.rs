use crate::error::{shape_err, Error, Result};
use crate::image::Mask;
use crate::scalar::Real;

/// Latent tensor `[channels, height, width]` tagged with its noise level
/// (`step == 0` is clean).
#[derive(Clone, Debug, PartialEq)]
pub struct Latent<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
    pub step: usize,
}

impl<S: Real> Latent<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![S::zero(); channels * height * width], step: 0 }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(shape_err([channels, height, width], data.len()));
        }
        Ok(Self { channels, height, width, data, step: 0 })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn ensure_same_shape(&self, other: &Latent<S>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn ensure_mask_shape(&self, mask: &Mask) -> Result<()> {
        if mask.shape() != [self.height, self.width] {
            return Err(shape_err([self.height, self.width], mask.shape()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone_shape() }
    }

    /// Elementwise combination; caller checks shapes. Keeps `self.step`.
    pub(crate) fn zip_map(&self, other: &Latent<S>, f: impl Fn(S, S) -> S) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone_shape()
        }
    }

    fn clone_shape(&self) -> Self {
        Self { channels: self.channels, height: self.height, width: self.width, data: Vec::new(), step: self.step }
    }

    /// Per-position select broadcast over channels: `mask ? other : self`.
    pub fn select(&self, mask: &Mask, other: &Latent<S>) -> Result<Self> {
        self.ensure_same_shape(other)?;
        self.ensure_mask_shape(mask)?;
        let plane = self.plane();
        let mut out = self.clone();
        for (idx, v) in out.data.iter_mut().enumerate() {
            if mask.data[idx % plane] {
                *v = other.data[idx];
            }
        }
        Ok(out)
    }

    pub fn mean(&self) -> S {
        if self.data.is_empty() {
            return S::zero();
        }
        self.data.iter().copied().sum::<S>() / S::from_usize(self.data.len()).unwrap()
    }

    /// Population standard deviation over all elements.
    pub fn std(&self) -> S {
        if self.data.is_empty() {
            return S::zero();
        }
        let m = self.mean();
        let var = self.data.iter().map(|&v| (v - m) * (v - m)).sum::<S>()
            / S::from_usize(self.data.len()).unwrap();
        var.sqrt()
    }

    pub fn max_abs_diff(&self, other: &Latent<S>) -> Result<S> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn with_step(mut self, step: usize) -> Self {
        self.step = step;
        self
    }

    pub fn require_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("latent contains non-finite values".into()))
        }
    }
}
