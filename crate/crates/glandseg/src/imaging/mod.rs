//! Core raster types, bit-exact file I/O and the rescaling steps applied
//! around classification.

mod io;
mod resample;

pub use io::{load_image, save_image, FMAP_MAGIC};
pub use resample::{downsample_half, upsample_bilinear};

use crate::error::{Error, Result};

/// Dense 2-D raster with one or more channels of real-valued samples,
/// stored row-major and channel-interleaved.
///
/// `value_range` is the declared nominal range of the samples (e.g.
/// `[0,255]` for 8-bit sources, `[0,1]` for probability maps); it drives
/// histogram binning and export scaling but is not enforced per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    value_range: (f32, f32),
}

/// Column/row index pair into an [`Image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelCoord {
    pub u: usize,
    pub v: usize,
}

impl Image {
    /// All-zero image with the given geometry.
    pub fn new(width: usize, height: usize, channels: usize, value_range: (f32, f32)) -> Self {
        assert!(width > 0 && height > 0 && channels > 0, "degenerate image");
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            value_range,
        }
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
        value_range: (f32, f32),
    ) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimMismatch(format!(
                "image data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
            value_range,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn value_range(&self) -> (f32, f32) {
        self.value_range
    }

    pub fn set_value_range(&mut self, range: (f32, f32)) {
        self.value_range = range;
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, u: usize, v: usize, c: usize) -> usize {
        (v * self.width + u) * self.channels + c
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f32 {
        self.data[self.idx(u, v, c)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, c: usize, value: f32) {
        let i = self.idx(u, v, c);
        self.data[i] = value;
    }

    /// Extract a single channel as a new one-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels);
        let mut out = Image::new(self.width, self.height, 1, self.value_range);
        for v in 0..self.height {
            for u in 0..self.width {
                let s = self.get(u, v, c);
                out.set(u, v, 0, s);
            }
        }
        out
    }

    /// Bilinear sample at a real-valued position, clamped at the borders.
    /// Coordinates are corner-aligned: integer positions hit samples exactly.
    pub fn sample_bilinear_clamped(&self, x: f64, y: f64, c: usize) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let a = self.get(x0, y0, c) as f64;
        let b = self.get(x1, y0, c) as f64;
        let d = self.get(x0, y1, c) as f64;
        let e = self.get(x1, y1, c) as f64;
        ((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (d * (1.0 - fx) + e * fx) * fy) as f32
    }

    /// Bilinear sample with mirror (reflect-101) extension outside the
    /// domain, so arbitrarily large border offsets remain defined.
    pub fn sample_bilinear_reflect(&self, x: f64, y: f64, c: usize) -> f32 {
        let x0 = x.floor() as i64;
        let y0 = y.floor() as i64;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let g = |xi: i64, yi: i64| -> f64 {
            self.get(reflect101(xi, self.width), reflect101(yi, self.height), c) as f64
        };
        let a = g(x0, y0);
        let b = g(x0 + 1, y0);
        let d = g(x0, y0 + 1);
        let e = g(x0 + 1, y0 + 1);
        ((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (d * (1.0 - fx) + e * fx) * fy) as f32
    }
}

/// Fold an arbitrary integer coordinate into `[0, n)` by mirror reflection
/// without repeating the edge sample (reflect-101). `n = 1` clamps.
#[inline]
pub fn reflect101(i: i64, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut r = i.rem_euclid(period);
    if r >= n as i64 {
        r = period - r;
    }
    r as usize
}

/// Extract a square single-channel patch centered at `(cu, cv)` with
/// reflect-101 border extension, normalized to `[0,1]` by the image's
/// declared value range. This is the patch path shared by training
/// sampling and sliding-window inference.
pub fn extract_patch_reflect(img: &Image, cu: i64, cv: i64, size: usize) -> Vec<f64> {
    assert_eq!(img.channels(), 1, "patch extraction expects one channel");
    let (lo, hi) = img.value_range();
    let span = (hi - lo) as f64;
    let inv = if span > 0.0 { 1.0 / span } else { 1.0 };
    let half = (size / 2) as i64;
    let mut out = Vec::with_capacity(size * size);
    for dy in -half..=(size as i64 - 1 - half) {
        let v = reflect101(cv + dy, img.height());
        for dx in -half..=(size as i64 - 1 - half) {
            let u = reflect101(cu + dx, img.width());
            out.push(((img.get(u, v, 0) - lo) as f64) * inv);
        }
    }
    out
}
