//! Whole-image benign/malignant decision from the Object-Net's four-class
//! maps: average the benign-class mass and the malignant-class mass over
//! the image and take the larger.

use crate::cnn::ProbabilityMaps;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Malignancy {
    Benign,
    Malignant,
}

impl std::fmt::Display for Malignancy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Malignancy::Benign => write!(f, "benign"),
            Malignancy::Malignant => write!(f, "malignant"),
        }
    }
}

/// Decision plus the winning average probability. Ties resolve to benign
/// with confidence 0.5 and `tie` set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MalignancyDecision {
    pub class: Malignancy,
    pub confidence: f64,
    pub tie: bool,
}

/// Mean benign mass (classes 0 and 1) vs. mean malignant mass (classes 2
/// and 3) over all pixels.
pub fn classify_malignancy(maps: &ProbabilityMaps) -> Result<MalignancyDecision> {
    if maps.classes() != 4 {
        return Err(Error::DimMismatch(format!(
            "malignancy decision needs 4 class maps, got {}",
            maps.classes()
        )));
    }
    let mut benign = 0.0f64;
    let mut malignant = 0.0f64;
    let data = maps.as_image().data();
    for px in data.chunks_exact(4) {
        benign += px[0] as f64 + px[1] as f64;
        malignant += px[2] as f64 + px[3] as f64;
    }
    let n = (maps.width() * maps.height()) as f64;
    benign /= n;
    malignant /= n;
    let decision = if benign == malignant {
        MalignancyDecision {
            class: Malignancy::Benign,
            confidence: benign,
            tie: true,
        }
    } else if benign > malignant {
        MalignancyDecision {
            class: Malignancy::Benign,
            confidence: benign,
            tie: false,
        }
    } else {
        MalignancyDecision {
            class: Malignancy::Malignant,
            confidence: malignant,
            tie: false,
        }
    };
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;

    fn maps_from_pixels(pixels: &[[f32; 4]]) -> ProbabilityMaps {
        let data = pixels.iter().flatten().copied().collect();
        let img = Image::from_data(pixels.len(), 1, 4, data, (0.0, 1.0)).unwrap();
        ProbabilityMaps::new(img).unwrap()
    }

    #[test]
    fn all_benign_mass_gives_full_confidence() {
        let maps = maps_from_pixels(&[[0.7, 0.3, 0.0, 0.0]; 6]);
        let d = classify_malignancy(&maps).unwrap();
        assert_eq!(d.class, Malignancy::Benign);
        assert!((d.confidence - 1.0).abs() < 1e-6);
        assert!(!d.tie);
    }

    #[test]
    fn uniform_distribution_ties_to_benign() {
        let maps = maps_from_pixels(&[[0.25; 4]; 5]);
        let d = classify_malignancy(&maps).unwrap();
        assert_eq!(d.class, Malignancy::Benign);
        assert!((d.confidence - 0.5).abs() < 1e-6);
        assert!(d.tie);
    }

    #[test]
    fn mixed_pixels_average_to_a_tie() {
        let maps = maps_from_pixels(&[[0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1]]);
        let d = classify_malignancy(&maps).unwrap();
        assert_eq!(d.class, Malignancy::Benign);
        assert!(d.tie);
        assert!((d.confidence - 0.5).abs() < 1e-7);
    }

    #[test]
    fn decision_is_pixel_permutation_invariant_and_swap_flips() {
        let px = [[0.5, 0.2, 0.2, 0.1], [0.1, 0.1, 0.5, 0.3], [0.4, 0.3, 0.2, 0.1]];
        let a = classify_malignancy(&maps_from_pixels(&px)).unwrap();
        let mut shuffled = px;
        shuffled.swap(0, 2);
        let b = classify_malignancy(&maps_from_pixels(&shuffled)).unwrap();
        assert_eq!(a, b);
        // swap channel pairs (C0,C1) <-> (C2,C3): decision flips, the
        // winning value is unchanged
        let swapped: Vec<[f32; 4]> = px.iter().map(|p| [p[2], p[3], p[0], p[1]]).collect();
        let c = classify_malignancy(&maps_from_pixels(&swapped)).unwrap();
        assert_ne!(a.class, c.class);
        assert!((a.confidence - c.confidence).abs() < 1e-6);
    }

    #[test]
    fn confidence_is_one_minus_loser() {
        let maps = maps_from_pixels(&[[0.6, 0.1, 0.2, 0.1]; 3]);
        let d = classify_malignancy(&maps).unwrap();
        assert!((d.confidence - 0.7).abs() < 1e-6);
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let img = Image::from_data(2, 1, 2, vec![0.5, 0.5, 0.5, 0.5], (0.0, 1.0)).unwrap();
        let maps = ProbabilityMaps::new(img).unwrap();
        assert!(classify_malignancy(&maps).is_err());
    }
}
