//! Combine Object-Net and Separator-Net outputs into foreground/background
//! probability maps and the signed logit weight map for the TV data term.

use crate::error::{Error, Result};
use crate::imaging::Image;

/// Separator influence, confidence threshold and logit clamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionParams {
    pub rho: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            rho: 1.0,
            tau: 0.65,
            epsilon: 1e-6,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParam(format!("rho {} outside [0,1]", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParam(format!("tau {} outside [0,1]", self.tau)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidParam(format!(
                "epsilon {} outside (0, 0.5)",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-pixel real weights for the TV data term: negative pulls toward
/// foreground, positive toward background, zero where neither map is
/// confident.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl WeightMap {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != width * height {
            return Err(Error::DimMismatch("weight map size mismatch".into()));
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Data("weight map contains non-finite values".into()));
        }
        Ok(WeightMap {
            width,
            height,
            weights,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Narrow to an FMAP-compatible image.
    pub fn to_image(&self) -> Image {
        let data: Vec<f32> = self.weights.iter().map(|&w| w as f32).collect();
        Image::from_data(self.width, self.height, 1, data, (0.0, 1.0)).expect("sizes agree")
    }
}

/// Foreground fusion at one pixel: `max(c1 + c3 - rho*s, 0)`.
#[inline]
pub fn fuse_foreground_px(c1: f64, c3: f64, s: f64, rho: f64) -> f64 {
    (c1 + c3 - rho * s).max(0.0)
}

/// Background fusion at one pixel: `min(c0 + c2 + rho*s, 1)`.
#[inline]
pub fn fuse_background_px(c0: f64, c2: f64, s: f64, rho: f64) -> f64 {
    (c0 + c2 + rho * s).min(1.0)
}

/// Signed weight at one pixel. The winning confidence `max(p_fg, p_bg)`
/// must reach `tau`, otherwise the weight is zero; the logit runs on
/// probabilities clamped to `[eps, 1-eps]`. Ties route to the background
/// branch.
#[inline]
pub fn weight_px(p_fg: f64, p_bg: f64, tau: f64, eps: f64) -> f64 {
    let p = p_fg.max(p_bg);
    if p < tau {
        return 0.0;
    }
    if p_fg > p_bg {
        -logit(p_fg, eps)
    } else {
        logit(p_bg, eps)
    }
}

#[inline]
fn logit(p: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    p.ln() - (1.0 - p).ln()
}

fn check_dims(maps: &[&Image]) -> Result<(usize, usize)> {
    let (w, h) = (maps[0].width(), maps[0].height());
    for m in maps {
        if m.width() != w || m.height() != h || m.channels() != 1 {
            return Err(Error::DimMismatch(format!(
                "fusion inputs disagree: {}x{}x{} vs {w}x{h}x1",
                m.width(),
                m.height(),
                m.channels()
            )));
        }
    }
    Ok((w, h))
}

/// Foreground probability map from the gland-class maps and the separator
/// map.
pub fn fuse_foreground(i_c1: &Image, i_c3: &Image, s: &Image, rho: f64) -> Result<Image> {
    let (w, h) = check_dims(&[i_c1, i_c3, s])?;
    let mut out = Image::new(w, h, 1, (0.0, 1.0));
    for i in 0..w * h {
        out.data_mut()[i] = fuse_foreground_px(
            i_c1.data()[i] as f64,
            i_c3.data()[i] as f64,
            s.data()[i] as f64,
            rho,
        ) as f32;
    }
    Ok(out)
}

/// Background probability map from the background-class maps and the
/// separator map.
pub fn fuse_background(i_c0: &Image, i_c2: &Image, s: &Image, rho: f64) -> Result<Image> {
    let (w, h) = check_dims(&[i_c0, i_c2, s])?;
    let mut out = Image::new(w, h, 1, (0.0, 1.0));
    for i in 0..w * h {
        out.data_mut()[i] = fuse_background_px(
            i_c0.data()[i] as f64,
            i_c2.data()[i] as f64,
            s.data()[i] as f64,
            rho,
        ) as f32;
    }
    Ok(out)
}

/// Signed weight map from the fused foreground/background maps.
pub fn weight_map(p_fg: &Image, p_bg: &Image, params: &FusionParams) -> Result<WeightMap> {
    params.validate()?;
    let (w, h) = check_dims(&[p_fg, p_bg])?;
    let weights = p_fg
        .data()
        .iter()
        .zip(p_bg.data().iter())
        .map(|(&f, &b)| weight_px(f as f64, b as f64, params.tau, params.epsilon))
        .collect();
    WeightMap::new(w, h, weights)
}
