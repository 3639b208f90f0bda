//! Backward warping with border-clamped bilinear sampling.

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use super::FlowField;
use crate::error::{Error, Result};
use crate::scalar::{lerp, Real};

/// Interleaved multi-channel image with scalar samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<S>,
}

impl<S: Real> Image<S> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<S>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::dim(format!(
                "image data has {} samples, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> S) -> Self {
        let data = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> S {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            channels: 3,
            data: img.as_raw().iter().map(|&b| S::lit(b as f64)).collect(),
        }
    }

    /// Rounds and clamps to 8-bit RGB. Requires three channels.
    pub fn to_rgb8(&self) -> Result<RgbImage> {
        if self.channels != 3 {
            return Err(Error::dim(format!("expected 3 channels, have {}", self.channels)));
        }
        let mut out = RgbImage::new(self.width as u32, self.height as u32);
        for (px, c) in out.pixels_mut().zip(self.data.chunks_exact(3)) {
            *px = Rgb([0, 1, 2].map(|k| c[k].as_f64().round().clamp(0.0, 255.0) as u8));
        }
        Ok(out)
    }
}

/// Neighbour indices and fractions for one clamped bilinear lookup.
pub(crate) struct BilinearSite<S> {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub fx: S,
    pub fy: S,
}

impl<S: Real> BilinearSite<S> {
    pub fn new(x: S, y: S, width: usize, height: usize) -> Self {
        let (x0, x1, fx) = axis(x, width);
        let (y0, y1, fy) = axis(y, height);
        Self {
            x0,
            x1,
            y0,
            y1,
            fx,
            fy,
        }
    }
}

fn axis<S: Real>(c: S, n: usize) -> (usize, usize, S) {
    let hi = S::from_usize_lossy(n - 1);
    let c = c.max(S::zero()).min(hi);
    let f = c.floor();
    let i0 = f.to_usize().unwrap_or(0).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - f)
}

/// `out(p) = image(p + F(p))`, bilinear, sample coordinates clamped to the border.
pub fn warp_backward<S: Real>(image: &Image<S>, field: &FlowField<S>) -> Result<Image<S>> {
    if (image.width, image.height) != field.dims() {
        return Err(Error::dim(format!(
            "image is {}x{}, flow is {}x{}",
            image.width,
            image.height,
            field.width(),
            field.height()
        )));
    }
    let (w, h, ch) = (image.width, image.height, image.channels);
    let mut data = vec![S::zero(); image.data.len()];
    data.par_chunks_mut(w * ch).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let [u, v] = field.get(x, y);
            let s = BilinearSite::new(
                S::from_usize_lossy(x) + u,
                S::from_usize_lossy(y) + v,
                w,
                h,
            );
            for c in 0..ch {
                let top = lerp(image.at(s.x0, s.y0, c), image.at(s.x1, s.y0, c), s.fx);
                let bot = lerp(image.at(s.x0, s.y1, c), image.at(s.x1, s.y1, c), s.fx);
                row[x * ch + c] = lerp(top, bot, s.fy);
            }
        }
    });
    Image::new(w, h, ch, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clamped_nearest_oracle(img: &Image<f64>, x: f64, y: f64) -> f64 {
        let cx = x.clamp(0.0, (img.width - 1) as f64);
        let cy = y.clamp(0.0, (img.height - 1) as f64);
        assert_eq!(cx.fract(), 0.0);
        assert_eq!(cy.fract(), 0.0);
        img.at(cx as usize, cy as usize, 0)
    }

    #[test]
    fn zero_flow_is_identity() {
        let img = Image::from_fn(7, 5, |x, y| (x * 3 + y * 11) as f64 * 0.37);
        let out = warp_backward(&img, &FlowField::zeros(7, 5)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn unit_shift_on_ramp() {
        let img = Image::from_fn(10, 4, |x, _| x as f64);
        let out = warp_backward(&img, &FlowField::constant(10, 4, 1.0, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..9 {
                assert_eq!(out.at(x, y, 0), x as f64 + 1.0);
            }
            assert_eq!(out.at(9, y, 0), 9.0);
        }
    }

    #[test]
    fn fractional_shift_on_ramp() {
        let img = Image::from_fn(10, 2, |x, _| 2.0 * x as f64);
        let out = warp_backward(&img, &FlowField::constant(10, 2, 0.25, 0.0)).unwrap();
        assert!((out.at(3, 1, 0) - 6.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_clamps() {
        let img = Image::from_fn(6, 6, |x, y| (x * 10 + y) as f64);
        for (u, v) in [(100.0, 0.0), (-50.0, 3.0), (20.0, -20.0), (-7.0, 9.0)] {
            let out = warp_backward(&img, &FlowField::constant(6, 6, u, v)).unwrap();
            for y in 0..6 {
                for x in 0..6 {
                    let want = clamped_nearest_oracle(&img, x as f64 + u, y as f64 + v);
                    assert_eq!(out.at(x, y, 0), want);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let img = Image::from_fn(3, 3, |_, _| 0.0f64);
        assert!(warp_backward(&img, &FlowField::zeros(3, 4)).is_err());
    }

    #[test]
    fn rgb_round_trip() {
        let rgb = RgbImage::from_fn(3, 2, |x, y| Rgb([x as u8 * 40, y as u8 * 90, 7]));
        let img = Image::<f32>::from_rgb8(&rgb);
        assert_eq!(img.to_rgb8().unwrap(), rgb);
    }
}
