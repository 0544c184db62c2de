//! Sliding-window inference: classify the center pixel of a mirror-padded
//! patch at every image position.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cnn::network::{forward, ModelParams, NetworkSpec};
use crate::cnn::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imaging::{extract_patch_reflect, Image};

/// Per-class probability maps with the same dimensions as the classified
/// image; channel `l` holds the probability of class `l` at each pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMaps {
    img: Image,
}

impl ProbabilityMaps {
    /// Wrap an L-channel image, checking that every pixel's distribution
    /// sums to one within 1e-5 and lies in [0,1].
    pub fn new(img: Image) -> Result<Self> {
        for px in img.data().chunks_exact(img.channels()) {
            let mut sum = 0.0f64;
            for &p in px {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Data(format!("probability {p} outside [0,1]")));
                }
                sum += p as f64;
            }
            if (sum - 1.0).abs() > 1e-5 {
                return Err(Error::Data(format!("pixel distribution sums to {sum}")));
            }
        }
        Ok(ProbabilityMaps { img })
    }

    pub fn classes(&self) -> usize {
        self.img.channels()
    }

    pub fn width(&self) -> usize {
        self.img.width()
    }

    pub fn height(&self) -> usize {
        self.img.height()
    }

    #[inline]
    pub fn prob(&self, u: usize, v: usize, class: usize) -> f32 {
        self.img.get(u, v, class)
    }

    /// Single-class map as an image in [0,1].
    pub fn class_map(&self, class: usize) -> Image {
        let mut out = self.img.channel(class);
        out.set_value_range((0.0, 1.0));
        out
    }

    pub fn as_image(&self) -> &Image {
        &self.img
    }
}

/// Classify every pixel of a single-channel image by sliding the network
/// over mirror-padded patches. Output has the image's dimensions and one
/// channel per class.
pub fn predict_map(spec: &NetworkSpec, params: &ModelParams, image: &Image) -> Result<ProbabilityMaps> {
    if image.channels() != 1 {
        return Err(Error::DimMismatch(
            "predict_map expects a single-channel image".into(),
        ));
    }
    let (w, h) = (image.width(), image.height());
    let classes = spec.classes;
    let size = spec.input_size;
    let mut out = Image::new(w, h, classes, (0.0, 1.0));

    out.data_mut()
        .par_chunks_mut(w * classes)
        .enumerate()
        .try_for_each(|(v, row_out)| -> Result<()> {
            let mut batch_data = Vec::with_capacity(w * size * size);
            for u in 0..w {
                batch_data.extend_from_slice(&extract_patch_reflect(
                    image, u as i64, v as i64, size,
                ));
            }
            let batch = Tensor::from_vec(w, 1, size, size, batch_data);
            let mut rng = ChaCha8Rng::seed_from_u64(0); // inference: never drawn
            let cache = forward(spec, params, &batch, false, &mut rng)?;
            for (dst, src) in row_out
                .chunks_exact_mut(classes)
                .zip(cache.output.data.chunks_exact(classes))
            {
                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                    *d = s as f32;
                }
            }
            Ok(())
        })?;

    ProbabilityMaps::new(out)
}
