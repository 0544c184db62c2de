//! Output renderers following the figure conventions: segmentation
//! outlines in blue, ground truth in green; difference images mark false
//! negatives cyan and false positives yellow.

use crate::imaging::Image;
use crate::postmetrics::LabelMap;

const PRED_OUTLINE: [f32; 3] = [40.0, 70.0, 255.0];
const GT_OUTLINE: [f32; 3] = [40.0, 220.0, 60.0];
const FALSE_NEGATIVE: [f32; 3] = [0.0, 255.0, 255.0];
const FALSE_POSITIVE: [f32; 3] = [255.0, 255.0, 0.0];

fn to_rgb(base: &Image) -> Image {
    let (w, h) = (base.width(), base.height());
    let mut out = Image::new(w, h, 3, (0.0, 255.0));
    for v in 0..h {
        for u in 0..w {
            for c in 0..3 {
                let s = base.get(u, v, if base.channels() == 3 { c } else { 0 });
                out.set(u, v, c, s);
            }
        }
    }
    out
}

fn paint_boundaries(img: &mut Image, labels: &LabelMap, color: [f32; 3]) {
    for id in 1..=labels.count() as u32 {
        for (u, v) in labels.boundary_pixels(id) {
            for c in 0..3 {
                img.set(u, v, c, color[c]);
            }
        }
    }
}

/// Source image with the prediction outlined in blue and, when ground
/// truth is given, its outline in green.
pub fn overlay_image(base: &Image, pred: &LabelMap, gt: Option<&LabelMap>) -> Image {
    let mut out = to_rgb(base);
    if let Some(gt) = gt {
        paint_boundaries(&mut out, gt, GT_OUTLINE);
    }
    paint_boundaries(&mut out, pred, PRED_OUTLINE);
    out
}

/// Grayscale source with false negatives colored cyan and false positives
/// yellow.
pub fn difference_image(base: &Image, pred: &LabelMap, gt: &LabelMap) -> Image {
    let mut out = to_rgb(base);
    let (w, h) = (out.width(), out.height());
    for v in 0..h {
        for u in 0..w {
            let p = pred.label(u, v) > 0;
            let g = gt.label(u, v) > 0;
            let color = match (p, g) {
                (false, true) => Some(FALSE_NEGATIVE),
                (true, false) => Some(FALSE_POSITIVE),
                _ => None,
            };
            if let Some(color) = color {
                for c in 0..3 {
                    out.set(u, v, c, color[c]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_marks_fn_cyan_and_fp_yellow() {
        let base = Image::new(3, 1, 1, (0.0, 255.0));
        let pred = LabelMap::new(3, 1, vec![1, 0, 0]).unwrap();
        let gt = LabelMap::new(3, 1, vec![0, 1, 0]).unwrap();
        let diff = difference_image(&base, &pred, &gt);
        assert_eq!(
            [diff.get(0, 0, 0), diff.get(0, 0, 1), diff.get(0, 0, 2)],
            FALSE_POSITIVE
        );
        assert_eq!(
            [diff.get(1, 0, 0), diff.get(1, 0, 1), diff.get(1, 0, 2)],
            FALSE_NEGATIVE
        );
        assert_eq!(diff.get(2, 0, 0), 0.0);
    }

    #[test]
    fn overlay_without_gt_has_no_green() {
        let base = Image::new(4, 4, 1, (0.0, 255.0));
        let pred = LabelMap::new(4, 4, vec![0; 16]).unwrap();
        let img = overlay_image(&base, &pred, None);
        for px in img.data().chunks(3) {
            assert_ne!(px, GT_OUTLINE);
        }
    }
}
