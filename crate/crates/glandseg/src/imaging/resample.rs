//! Bilinear rescaling used before and after classification.
//!
//! Both directions use corner-aligned coordinates with border clamping; a
//! target dimension of 1 samples the source midpoint. Half-resolution
//! output dimensions are `floor(dim/2)`, which maps 775x522 onto 387x261.

use crate::error::{Error, Result};
use crate::imaging::Image;

fn resample(src: &Image, tw: usize, th: usize) -> Image {
    let mut out = Image::new(tw, th, src.channels(), src.value_range());
    let sx = if tw > 1 {
        (src.width() - 1) as f64 / (tw - 1) as f64
    } else {
        0.0
    };
    let sy = if th > 1 {
        (src.height() - 1) as f64 / (th - 1) as f64
    } else {
        0.0
    };
    let mid_x = (src.width() - 1) as f64 / 2.0;
    let mid_y = (src.height() - 1) as f64 / 2.0;
    for v in 0..th {
        let y = if th > 1 { v as f64 * sy } else { mid_y };
        for u in 0..tw {
            let x = if tw > 1 { u as f64 * sx } else { mid_x };
            for c in 0..src.channels() {
                let s = src.sample_bilinear_clamped(x, y, c);
                out.set(u, v, c, s);
            }
        }
    }
    out
}

/// Rescale to half resolution: output is `floor(w/2) x floor(h/2)`.
pub fn downsample_half(img: &Image) -> Result<Image> {
    if img.width() < 2 || img.height() < 2 {
        return Err(Error::InvalidParam(format!(
            "cannot halve a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(resample(img, img.width() / 2, img.height() / 2))
}

/// Bilinear upsampling to the given target dimensions.
pub fn upsample_bilinear(img: &Image, target_w: usize, target_h: usize) -> Result<Image> {
    if target_w < img.width() || target_h < img.height() {
        return Err(Error::InvalidParam(format!(
            "upsample target {}x{} smaller than source {}x{}",
            target_w,
            target_h,
            img.width(),
            img.height()
        )));
    }
    Ok(resample(img, target_w, target_h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, v: f32) -> Image {
        Image::from_data(w, h, 1, vec![v; w * h], (0.0, 255.0)).unwrap()
    }

    #[test]
    fn half_resolution_dims_match_floor_convention() {
        let img = constant(775, 522, 1.0);
        let half = downsample_half(&img).unwrap();
        assert_eq!((half.width(), half.height()), (387, 261));
    }

    #[test]
    fn constant_images_stay_constant() {
        let img = constant(4, 4, 7.0);
        let half = downsample_half(&img).unwrap();
        assert_eq!((half.width(), half.height()), (2, 2));
        assert!(half.data().iter().all(|&v| v == 7.0));
        let up = upsample_bilinear(&half, 9, 5).unwrap();
        assert!(up.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn two_by_two_halves_to_grid_center_average() {
        let img = Image::from_data(2, 2, 1, vec![0.0, 2.0, 4.0, 6.0], (0.0, 255.0)).unwrap();
        let half = downsample_half(&img).unwrap();
        assert_eq!((half.width(), half.height()), (1, 1));
        assert_eq!(half.data()[0], 3.0);
    }

    #[test]
    fn upsample_interpolates_linearly() {
        let img = Image::from_data(2, 1, 1, vec![0.0, 1.0], (0.0, 1.0)).unwrap();
        let up = upsample_bilinear(&img, 3, 1).unwrap();
        assert_eq!(up.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn down_then_up_restores_original_dims() {
        let img = constant(775, 522, 3.0);
        let half = downsample_half(&img).unwrap();
        let up = upsample_bilinear(&half, 775, 522).unwrap();
        assert_eq!((up.width(), up.height()), (775, 522));
    }

    #[test]
    fn degenerate_input_is_rejected() {
        let img = constant(1, 5, 0.0);
        assert!(downsample_half(&img).is_err());
        let img2 = constant(4, 4, 0.0);
        assert!(upsample_bilinear(&img2, 3, 8).is_err());
    }

    #[test]
    fn bilinear_respects_source_extrema() {
        let img = Image::from_data(3, 3, 1, vec![0., 5., 1., 9., 2., 7., 3., 8., 4.], (0.0, 9.0))
            .unwrap();
        let up = upsample_bilinear(&img, 7, 7).unwrap();
        for &v in up.data() {
            assert!((0.0..=9.0).contains(&v));
        }
    }
}
