use crate::error::{shape_err, Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Real;

use super::Latent;

/// Pixel/latent codec. `AvgPool2` halves the spatial resolution by 2×2 mean
/// pooling and decodes with bilinear upsampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LatentCodec {
    #[default]
    Identity,
    AvgPool2,
}

impl LatentCodec {
    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::AvgPool2 => "avgpool2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Self::Identity),
            "avgpool2" => Some(Self::AvgPool2),
            _ => None,
        }
    }

    pub fn latent_dims(self, height: usize, width: usize) -> Result<(usize, usize)> {
        match self {
            Self::Identity => Ok((height, width)),
            Self::AvgPool2 => {
                if !height.is_multiple_of(2) || !width.is_multiple_of(2) {
                    return Err(Error::InvalidArgument(format!(
                        "avgpool2 codec needs even dimensions, got {height}x{width}"
                    )));
                }
                Ok((height / 2, width / 2))
            }
        }
    }

    pub fn encode<S: Real>(self, image: &Image) -> Result<Latent<S>> {
        let (lh, lw) = self.latent_dims(image.height, image.width)?;
        match self {
            Self::Identity => Latent::from_vec(
                image.channels,
                lh,
                lw,
                image.data.iter().map(|&v| S::from_f32_lossless(v)).collect(),
            ),
            Self::AvgPool2 => {
                let mut out = Latent::zeros(image.channels, lh, lw);
                let quarter = S::lit(0.25);
                for c in 0..image.channels {
                    for y in 0..lh {
                        for x in 0..lw {
                            let s = [(0, 0), (0, 1), (1, 0), (1, 1)]
                                .iter()
                                .map(|&(dy, dx)| S::from_f32_lossless(image.get(c, 2 * y + dy, 2 * x + dx)))
                                .sum::<S>();
                            out.data[(c * lh + y) * lw + x] = s * quarter;
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Decodes to image space and clamps to `[0, 1]`.
    pub fn decode<S: Real>(self, latent: &Latent<S>) -> Image {
        let clamp = |v: S| v.to_f32_lossy().clamp(0.0, 1.0);
        match self {
            Self::Identity => Image {
                channels: latent.channels,
                height: latent.height,
                width: latent.width,
                data: latent.data.iter().map(|&v| clamp(v)).collect(),
            },
            Self::AvgPool2 => {
                let (lh, lw) = (latent.height, latent.width);
                let (h, w) = (2 * lh, 2 * lw);
                let mut out = Image::new(latent.channels, h, w);
                let half = S::lit(0.5);
                let sample = |c: usize, y: usize, x: usize| latent.data[(c * lh + y) * lw + x];
                // half-pixel centers, edges clamped
                let coord = |o: usize, n: usize| -> (usize, usize, S) {
                    let f = (S::from_usize(o).unwrap() + half) * half - half;
                    let f = f.max(S::zero()).min(S::from_usize(n - 1).unwrap());
                    let i0 = f.floor().to_usize().unwrap();
                    let i1 = (i0 + 1).min(n - 1);
                    (i0, i1, f - S::from_usize(i0).unwrap())
                };
                for c in 0..latent.channels {
                    for y in 0..h {
                        let (y0, y1, fy) = coord(y, lh);
                        for x in 0..w {
                            let (x0, x1, fx) = coord(x, lw);
                            let top = sample(c, y0, x0) * (S::one() - fx) + sample(c, y0, x1) * fx;
                            let bot = sample(c, y1, x0) * (S::one() - fx) + sample(c, y1, x1) * fx;
                            out.set(c, y, x, clamp(top * (S::one() - fy) + bot * fy));
                        }
                    }
                }
                out
            }
        }
    }

    /// Visibility at latent resolution: a latent cell is visible iff at least
    /// half of the pixels it covers are visible.
    pub fn encode_mask(self, mask: &Mask) -> Result<Mask> {
        let (lh, lw) = self.latent_dims(mask.height, mask.width)?;
        match self {
            Self::Identity => Ok(mask.clone()),
            Self::AvgPool2 => {
                let mut data = Vec::with_capacity(lh * lw);
                for y in 0..lh {
                    for x in 0..lw {
                        let n = [(0, 0), (0, 1), (1, 0), (1, 1)]
                            .iter()
                            .filter(|&&(dy, dx)| mask.get(2 * y + dy, 2 * x + dx))
                            .count();
                        data.push(n >= 2);
                    }
                }
                Mask::from_vec(lh, lw, data)
            }
        }
    }

    pub fn check_mask_for(self, mask: &Mask, latent_shape: [usize; 3]) -> Result<()> {
        if mask.shape() != [latent_shape[1], latent_shape[2]] {
            return Err(shape_err([latent_shape[1], latent_shape[2]], mask.shape()));
        }
        Ok(())
    }
}
