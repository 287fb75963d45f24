//! Planar `[channels, height, width]` images and binary masks.

use std::path::Path;

use crate::error::{shape_err, Error, Result};

/// Planar single-precision image, channel-major (`[c, h, w]`, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn rgb(height: usize, width: usize) -> Self {
        Self::new(3, height, width)
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(shape_err([channels, height, width], data.len()));
        }
        Ok(Self { channels, height, width, data })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// RGB triple at flat pixel index `p = y * width + x`.
    #[inline]
    pub fn rgb_at(&self, p: usize) -> [f32; 3] {
        let hw = self.pixels();
        [self.data[p], self.data[hw + p], self.data[2 * hw + p]]
    }

    #[inline]
    pub fn set_rgb(&mut self, p: usize, rgb: [f32; 3]) {
        let hw = self.pixels();
        self.data[p] = rgb[0];
        self.data[hw + p] = rgb[1];
        self.data[2 * hw + p] = rgb[2];
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Writes an 8-bit RGB (or grayscale) PNG. Values are clamped and rounded.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            3 => {
                let mut buf = Vec::with_capacity(self.pixels() * 3);
                for p in 0..self.pixels() {
                    let [r, g, b] = self.rgb_at(p);
                    buf.extend_from_slice(&[to_u8(r), to_u8(g), to_u8(b)]);
                }
                let img = image::RgbImage::from_raw(w, h, buf).expect("buffer sized");
                img.save(path)?;
            }
            1 => {
                let buf = self.data.iter().map(|&v| to_u8(v)).collect();
                let img = image::GrayImage::from_raw(w, h, buf).expect("buffer sized");
                img.save(path)?;
            }
            c => {
                return Err(Error::InvalidArgument(format!("cannot write {c}-channel image as PNG")))
            }
        }
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::rgb(h, w);
        for (p, px) in img.pixels().enumerate() {
            out.set_rgb(p, px.0.map(|v| v as f32 / 255.0));
        }
        Ok(out)
    }

    pub fn save_ten1(&self, path: &Path) -> Result<()> {
        crate::ten1::write(path, &[self.channels, self.height, self.width], &self.data)
    }

    /// Reads a rank-3 TEN1 array; the dims must equal `expect` when given.
    pub fn load_ten1(path: &Path, expect: Option<[usize; 3]>) -> Result<Self> {
        let t = crate::ten1::read(path)?;
        let [c, h, w] = t.dims[..] else {
            return Err(Error::Malformed { path: path.to_path_buf(), reason: format!("expected rank 3, got dims {:?}", t.dims) });
        };
        if let Some(e) = expect {
            if e != [c, h, w] {
                return Err(Error::ShapeMismatch { expected: format!("{e:?} in {}", path.display()), actual: format!("{:?}", t.dims) });
            }
        }
        Image::from_vec(c, h, w, t.data)
    }
}

/// Binary `[height, width]` mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, value: bool) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape_err([height, width], data.len()));
        }
        Ok(Self { height, width, data })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        [self.height, self.width]
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.data.len() as f64
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn none(&self) -> bool {
        self.data.iter().all(|&b| !b)
    }

    pub fn invert(&self) -> Mask {
        Mask { height: self.height, width: self.width, data: self.data.iter().map(|b| !b).collect() }
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        if self.shape() != other.shape() {
            return Err(shape_err(self.shape(), other.shape()));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Mask { height: self.height, width: self.width, data })
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_image(&self) -> Image {
        Image { channels: 1, height: self.height, width: self.width, data: self.to_f32() }
    }

    /// Stored as a `[h, w]` TEN1 array of 0/1.
    pub fn save_ten1(&self, path: &Path) -> Result<()> {
        crate::ten1::write(path, &[self.height, self.width], &self.to_f32())
    }

    /// Thresholds at 0.5. Returns the mask and how many entries were not
    /// exactly 0 or 1.
    pub fn load_ten1(path: &Path, expect: Option<[usize; 2]>) -> Result<(Self, usize)> {
        let t = crate::ten1::read(path)?;
        let [h, w] = t.dims[..] else {
            return Err(Error::Malformed { path: path.to_path_buf(), reason: format!("expected rank 2, got dims {:?}", t.dims) });
        };
        if let Some(e) = expect {
            if e != [h, w] {
                return Err(Error::ShapeMismatch { expected: format!("{e:?} in {}", path.display()), actual: format!("{:?}", t.dims) });
            }
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed { path: path.to_path_buf(), reason: "non-finite mask value".into() });
        }
        let soft = t.data.iter().filter(|&&v| v != 0.0 && v != 1.0).count();
        let data = t.data.iter().map(|&v| v >= 0.5).collect();
        Ok((Mask { height: h, width: w, data }, soft))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_set_ops() {
        let a = Mask::from_vec(1, 4, vec![true, true, false, false]).unwrap();
        let b = Mask::from_vec(1, 4, vec![true, false, false, true]).unwrap();
        assert_eq!(a.and_not(&b).unwrap().data, vec![false, true, false, false]);
        assert_eq!(a.or(&b).unwrap().count(), 3);
        assert!(a.and(&Mask::new(2, 2, true)).is_err());
    }

    #[test]
    fn png_roundtrip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::rgb(2, 3);
        img.set_rgb(4, [1.0, 0.5, 0.0]);
        let path = dir.path().join("x.png");
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        assert_eq!(back.shape(), [3, 2, 3]);
        assert!((back.rgb_at(4)[1] - 0.5).abs() <= 1.0 / 255.0);
    }
}
