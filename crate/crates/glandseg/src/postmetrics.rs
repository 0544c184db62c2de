//! Post-processing of binary masks into labeled objects and the
//! object-level detection, segmentation and shape metrics.
//!
//! Matching conventions (the challenge scripts are not public here, so
//! these definitions are normative for this artifact):
//! - a predicted object is a true positive iff it covers more than half of
//!   some ground-truth object's area, matched one-to-one greedily by
//!   overlap;
//! - object-Dice and object-Hausdorff pair every object with the
//!   maximal-overlap object of the other map, falling back to the nearest
//!   object (by boundary distance) when nothing overlaps, and weight by
//!   relative object area;
//! - boundaries are foreground pixels with a 4-neighbor outside the
//!   object or on the image border.

use crate::edt::squared_edt;
use crate::error::{Error, Result};
use crate::imaging::Image;

/// Per-pixel instance ids, contiguous from 1; 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimMismatch("label map size mismatch".into()));
        }
        let count = labels.iter().copied().max().unwrap_or(0) as usize;
        Ok(LabelMap {
            width,
            height,
            labels,
            count,
        })
    }

    pub fn from_instances(inst: &crate::dataset::InstanceLabelImage) -> Self {
        LabelMap {
            width: inst.width(),
            height: inst.height(),
            labels: inst.labels().to_vec(),
            count: inst.instances(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of objects.
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn label(&self, u: usize, v: usize) -> u32 {
        self.labels[v * self.width + u]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.count];
        for &l in &self.labels {
            if l > 0 {
                areas[(l - 1) as usize] += 1;
            }
        }
        areas
    }

    /// Boundary pixels of one object: foreground with a 4-neighbor outside
    /// the object or at the image border.
    pub fn boundary_pixels(&self, id: u32) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if self.label(u, v) != id {
                    continue;
                }
                let edge = u == 0
                    || v == 0
                    || u == self.width - 1
                    || v == self.height - 1
                    || self.label(u - 1, v) != id
                    || self.label(u + 1, v) != id
                    || self.label(u, v - 1) != id
                    || self.label(u, v + 1) != id;
                if edge {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

/// 8-connected component labeling of a binary mask with ids assigned in
/// raster-scan first-pixel order (two-pass union-find).
pub fn connected_components(mask: &Image) -> Result<LabelMap> {
    if mask.channels() != 1 {
        return Err(Error::DimMismatch("component labeling expects one channel".into()));
    }
    let (w, h) = (mask.width(), mask.height());
    let fg: Vec<bool> = mask.data().iter().map(|&v| v > 0.0).collect();

    // union-find over provisional labels
    let mut parent: Vec<u32> = Vec::new();
    fn find(parent: &mut Vec<u32>, mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    let mut provisional = vec![0u32; w * h]; // 0 = background, ids start at 1

    for v in 0..h {
        for u in 0..w {
            if !fg[v * w + u] {
                continue;
            }
            // scan the four already-visited 8-neighbors
            let mut neighbor_roots: [u32; 4] = [0; 4];
            let mut n = 0;
            let mut push = |p: u32, parent: &mut Vec<u32>| {
                if p > 0 {
                    // provisional ids are 1-based, parent indices 0-based
                    neighbor_roots[n] = find(parent, p - 1);
                    n += 1;
                }
            };
            if u > 0 {
                push(provisional[v * w + u - 1], &mut parent);
            }
            if v > 0 {
                push(provisional[(v - 1) * w + u], &mut parent);
                if u > 0 {
                    push(provisional[(v - 1) * w + u - 1], &mut parent);
                }
                if u + 1 < w {
                    push(provisional[(v - 1) * w + u + 1], &mut parent);
                }
            }
            if n == 0 {
                let id = parent.len() as u32 + 1;
                parent.push(id - 1); // parent indices are id-1
                provisional[v * w + u] = id;
            } else {
                let mut root = neighbor_roots[0];
                for &r in &neighbor_roots[1..n] {
                    if r < root {
                        root = r;
                    }
                }
                provisional[v * w + u] = root + 1;
                for &r in &neighbor_roots[..n] {
                    parent[r as usize] = root;
                }
            }
        }
    }

    // second pass: compress and renumber roots in first-pixel order
    let mut remap: Vec<u32> = vec![0; parent.len()];
    let mut next = 0u32;
    let mut labels = vec![0u32; w * h];
    for i in 0..w * h {
        let p = provisional[i];
        if p == 0 {
            continue;
        }
        let root = find(&mut parent, p - 1) as usize;
        if remap[root] == 0 {
            next += 1;
            remap[root] = next;
        }
        labels[i] = remap[root];
    }
    LabelMap::new(w, h, labels)
}

/// Drop objects smaller than `min_area` pixels and renumber the survivors
/// contiguously (id order preserved).
pub fn remove_small_blobs(labels: &LabelMap, min_area: usize) -> LabelMap {
    let areas = labels.areas();
    let mut remap = vec![0u32; labels.count + 1];
    let mut next = 0u32;
    for (i, &a) in areas.iter().enumerate() {
        if a >= min_area {
            next += 1;
            remap[i + 1] = next;
        }
    }
    let data = labels.labels.iter().map(|&l| remap[l as usize]).collect();
    LabelMap {
        width: labels.width,
        height: labels.height,
        labels: data,
        count: next as usize,
    }
}

/// Pixel-overlap counts between every (gt, pred) object pair, plus the
/// object areas.
struct OverlapTable {
    overlaps: Vec<Vec<usize>>, // [gt][pred]
    gt_areas: Vec<usize>,
    pred_areas: Vec<usize>,
}

fn overlap_table(pred: &LabelMap, gt: &LabelMap) -> Result<OverlapTable> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimMismatch(format!(
            "label maps disagree: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut overlaps = vec![vec![0usize; pred.count]; gt.count];
    for (&p, &g) in pred.labels.iter().zip(gt.labels.iter()) {
        if p > 0 && g > 0 {
            overlaps[(g - 1) as usize][(p - 1) as usize] += 1;
        }
    }
    Ok(OverlapTable {
        overlaps,
        gt_areas: gt.areas(),
        pred_areas: pred.areas(),
    })
}

/// Detection scores. A prediction is a true positive iff it overlaps a
/// ground-truth object by more than 50% of that object's area; matching is
/// one-to-one, greedy by overlap (ties broken by lower ids).
pub fn object_f1(pred: &LabelMap, gt: &LabelMap) -> Result<(f64, f64, f64)> {
    let table = overlap_table(pred, gt)?;
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new(); // (overlap, gt, pred)
    for (gi, row) in table.overlaps.iter().enumerate() {
        for (pi, &o) in row.iter().enumerate() {
            if 2 * o > table.gt_areas[gi] {
                candidates.push((o, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gt.count];
    let mut pred_used = vec![false; pred.count];
    let mut tp = 0usize;
    for (_, gi, pi) in candidates {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            tp += 1;
        }
    }
    let precision = if pred.count == 0 {
        0.0
    } else {
        tp as f64 / pred.count as f64
    };
    let recall = if gt.count == 0 {
        0.0
    } else {
        tp as f64 / gt.count as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

fn dice(a_area: usize, b_area: usize, overlap: usize) -> f64 {
    if a_area + b_area == 0 {
        return 0.0;
    }
    2.0 * overlap as f64 / (a_area + b_area) as f64
}

/// Index of the maximal-overlap partner for object `i` of one side, or
/// None if nothing overlaps. Ties break toward the lower id.
fn best_overlap(row_overlaps: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (j, o) in row_overlaps.enumerate() {
        if o > 0 && best.map_or(true, |(_, bo)| o > bo) {
            best = Some((j, o));
        }
    }
    best.map(|(j, _)| j)
}

/// Area-weighted symmetric object-level Dice. Empty-vs-empty scores 1.
pub fn object_dice(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let table = overlap_table(pred, gt)?;
    if gt.count == 0 && pred.count == 0 {
        return Ok(1.0);
    }
    let gt_total: usize = table.gt_areas.iter().sum();
    let pred_total: usize = table.pred_areas.iter().sum();

    let mut gt_sum = 0.0;
    for gi in 0..gt.count {
        let d = match best_overlap(table.overlaps[gi].iter().copied()) {
            Some(pi) => dice(
                table.gt_areas[gi],
                table.pred_areas[pi],
                table.overlaps[gi][pi],
            ),
            None => 0.0,
        };
        gt_sum += table.gt_areas[gi] as f64 / gt_total.max(1) as f64 * d;
    }
    let mut pred_sum = 0.0;
    for pi in 0..pred.count {
        let d = match best_overlap(table.overlaps.iter().map(|row| row[pi])) {
            Some(gi) => dice(
                table.gt_areas[gi],
                table.pred_areas[pi],
                table.overlaps[gi][pi],
            ),
            None => 0.0,
        };
        pred_sum += table.pred_areas[pi] as f64 / pred_total.max(1) as f64 * d;
    }
    Ok(0.5 * (gt_sum + pred_sum))
}

/// Symmetric Hausdorff distance between two boundary pixel sets, via an
/// exact distance transform over each set.
fn hausdorff_sets(
    a: &[(usize, usize)],
    b: &[(usize, usize)],
    width: usize,
    height: usize,
) -> f64 {
    let to_mask = |pts: &[(usize, usize)]| {
        let mut m = vec![false; width * height];
        for &(u, v) in pts {
            m[v * width + u] = true;
        }
        m
    };
    let da = squared_edt(&to_mask(a), width, height);
    let db = squared_edt(&to_mask(b), width, height);
    let mut worst = 0.0f64;
    for &(u, v) in a {
        worst = worst.max(db[v * width + u]);
    }
    for &(u, v) in b {
        worst = worst.max(da[v * width + u]);
    }
    worst.sqrt()
}

/// Nearest object of the other map by minimal boundary-to-boundary
/// distance (ties toward the lower id).
fn nearest_object(
    own: &[(usize, usize)],
    others: &[Vec<(usize, usize)>],
    width: usize,
    height: usize,
) -> Option<usize> {
    let mut mask = vec![false; width * height];
    for &(u, v) in own {
        mask[v * width + u] = true;
    }
    let d = squared_edt(&mask, width, height);
    let mut best: Option<(usize, f64)> = None;
    for (j, pts) in others.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let mut dist = f64::INFINITY;
        for &(u, v) in pts {
            dist = dist.min(d[v * width + u]);
        }
        if best.map_or(true, |(_, bd)| dist < bd) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

/// Area-weighted symmetric object-level Hausdorff distance. Objects pair
/// with their maximal-overlap partner, falling back to the nearest object;
/// if the other map is entirely empty the image diagonal is charged.
/// Empty-vs-empty scores 0.
pub fn object_hausdorff(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let table = overlap_table(pred, gt)?;
    if gt.count == 0 && pred.count == 0 {
        return Ok(0.0);
    }
    let (w, h) = (pred.width, pred.height);
    let diagonal = (((w * w + h * h) as f64)).sqrt();
    let gt_bounds: Vec<Vec<(usize, usize)>> =
        (1..=gt.count as u32).map(|id| gt.boundary_pixels(id)).collect();
    let pred_bounds: Vec<Vec<(usize, usize)>> =
        (1..=pred.count as u32).map(|id| pred.boundary_pixels(id)).collect();
    let gt_total: usize = table.gt_areas.iter().sum();
    let pred_total: usize = table.pred_areas.iter().sum();

    let mut gt_sum = 0.0;
    for gi in 0..gt.count {
        let partner = best_overlap(table.overlaps[gi].iter().copied())
            .or_else(|| nearest_object(&gt_bounds[gi], &pred_bounds, w, h));
        let d = match partner {
            Some(pi) => hausdorff_sets(&gt_bounds[gi], &pred_bounds[pi], w, h),
            None => diagonal,
        };
        gt_sum += table.gt_areas[gi] as f64 / gt_total.max(1) as f64 * d;
    }
    let mut pred_sum = 0.0;
    for pi in 0..pred.count {
        let partner = best_overlap(table.overlaps.iter().map(|r| r[pi]))
            .or_else(|| nearest_object(&pred_bounds[pi], &gt_bounds, w, h));
        let d = match partner {
            Some(gi) => hausdorff_sets(&gt_bounds[gi], &pred_bounds[pi], w, h),
            None => diagonal,
        };
        pred_sum += table.pred_areas[pi] as f64 / pred_total.max(1) as f64 * d;
    }
    Ok(0.5 * (gt_sum + pred_sum))
}

/// Scores of one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub object_dice: f64,
    pub object_hausdorff: f64,
}

/// All five metrics for one predicted/ground-truth pair.
pub fn image_metrics(pred: &LabelMap, gt: &LabelMap) -> Result<ImageMetrics> {
    let (precision, recall, f1) = object_f1(pred, gt)?;
    Ok(ImageMetrics {
        precision,
        recall,
        f1,
        object_dice: object_dice(pred, gt)?,
        object_hausdorff: object_hausdorff(pred, gt)?,
    })
}

/// Per-image rows plus mean and standard deviation aggregates.
#[derive(Clone, Debug, Default)]
pub struct MetricsReport {
    pub rows: Vec<(String, ImageMetrics)>,
}

impl MetricsReport {
    pub fn push(&mut self, name: impl Into<String>, m: ImageMetrics) {
        self.rows.push((name.into(), m));
    }

    /// Welford one-pass mean and sample standard deviation per column
    /// (SD is 0 for a single row).
    pub fn aggregate(&self) -> (ImageMetrics, ImageMetrics) {
        let mut mean = [0.0f64; 5];
        let mut m2 = [0.0f64; 5];
        let mut n = 0.0f64;
        for (_, m) in &self.rows {
            n += 1.0;
            let vals = [m.precision, m.recall, m.f1, m.object_dice, m.object_hausdorff];
            for k in 0..5 {
                let delta = vals[k] - mean[k];
                mean[k] += delta / n;
                m2[k] += delta * (vals[k] - mean[k]);
            }
        }
        let sd = |k: usize| if n > 1.0 { (m2[k] / (n - 1.0)).sqrt() } else { 0.0 };
        (
            ImageMetrics {
                precision: mean[0],
                recall: mean[1],
                f1: mean[2],
                object_dice: mean[3],
                object_hausdorff: mean[4],
            },
            ImageMetrics {
                precision: sd(0),
                recall: sd(1),
                f1: sd(2),
                object_dice: sd(3),
                object_hausdorff: sd(4),
            },
        )
    }

    /// Tab-separated table with per-image rows and mean/SD aggregates.
    pub fn to_table(&self) -> String {
        let mut out = String::from("image\tprecision\trecall\tf1\tobject_dice\thausdorff\n");
        let fmt = |m: &ImageMetrics| {
            format!(
                "{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                m.precision, m.recall, m.f1, m.object_dice, m.object_hausdorff
            )
        };
        for (name, m) in &self.rows {
            out.push_str(&format!("{name}\t{}\n", fmt(m)));
        }
        let (mean, sd) = self.aggregate();
        out.push_str(&format!("mean\t{}\n", fmt(&mean)));
        out.push_str(&format!("sd\t{}\n", fmt(&sd)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> Image {
        let h = rows.len();
        let w = rows[0].len();
        let data = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| if c == '#' { 1.0f32 } else { 0.0 }))
            .collect();
        Image::from_data(w, h, 1, data, (0.0, 1.0)).unwrap()
    }

    fn labels_from(rows: &[&str]) -> LabelMap {
        let h = rows.len();
        let w = rows[0].len();
        let data = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c.to_digit(10).unwrap_or(0)))
            .collect();
        LabelMap::new(w, h, data).unwrap()
    }

    #[test]
    fn empty_mask_labels_nothing() {
        let lm = connected_components(&mask_from(&["....", "...."])).unwrap();
        assert_eq!(lm.count(), 0);
        assert!(lm.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let lm = connected_components(&mask_from(&["#.", ".#"])).unwrap();
        assert_eq!(lm.count(), 1);
    }

    #[test]
    fn components_match_flood_fill_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (w, h) = (rng.gen_range(2..16), rng.gen_range(2..16));
            let data: Vec<f32> = (0..w * h).map(|_| f32::from(rng.gen_bool(0.45))).collect();
            let mask = Image::from_data(w, h, 1, data.clone(), (0.0, 1.0)).unwrap();
            let lm = connected_components(&mask).unwrap();

            // oracle: BFS flood fill, 8-connectivity
            let mut oracle = vec![0u32; w * h];
            let mut next = 0u32;
            for start in 0..w * h {
                if data[start] == 0.0 || oracle[start] != 0 {
                    continue;
                }
                next += 1;
                let mut stack = vec![start];
                oracle[start] = next;
                while let Some(i) = stack.pop() {
                    let (u, v) = (i % w, i / w);
                    for dv in -1i64..=1 {
                        for du in -1i64..=1 {
                            let (nu, nv) = (u as i64 + du, v as i64 + dv);
                            if nu < 0 || nv < 0 || nu >= w as i64 || nv >= h as i64 {
                                continue;
                            }
                            let j = nv as usize * w + nu as usize;
                            if data[j] > 0.0 && oracle[j] == 0 {
                                oracle[j] = next;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
            assert_eq!(lm.labels(), &oracle[..], "partition differs from flood fill");
        }
    }

    #[test]
    fn blob_removal_thresholds_at_500() {
        // 499 = 20x25 minus one pixel, 500 = 20x25
        let mut labels = vec![0u32; 40 * 30];
        for v in 0..25 {
            for u in 0..20 {
                if !(v == 0 && u == 0) {
                    labels[v * 40 + u] = 1;
                }
                labels[v * 40 + u + 20] = 2;
            }
        }
        let lm = LabelMap::new(40, 30, labels).unwrap();
        let cleaned = remove_small_blobs(&lm, 500);
        assert_eq!(cleaned.count(), 1);
        assert_eq!(cleaned.label(20, 0), 1, "surviving blob is renumbered to 1");
        assert_eq!(cleaned.label(1, 0), 0, "499-px blob removed");
        // idempotent
        let again = remove_small_blobs(&cleaned, 500);
        assert_eq!(again.labels(), cleaned.labels());
    }

    #[test]
    fn f1_hand_example_60_percent_overlap() {
        // 10x10: gt object 1 is rows 0..4 x cols 0..5 (20 px), gt 2 in the
        // bottom right; pred covers 60% of gt-1 and none of gt-2
        let gt = labels_from(&[
            "1111100000",
            "1111100000",
            "1111100000",
            "1111100000",
            "0000000000",
            "0000000000",
            "0000002222",
            "0000002222",
            "0000002222",
            "0000000000",
        ]);
        let pred = labels_from(&[
            "1111100000",
            "1111100000",
            "1111100000",
            "0000000000",
            "0000000000",
            "0000000000",
            "0000000000",
            "0000000000",
            "0000000000",
            "0000000000",
        ]);
        let (p, r, f1) = object_f1(&pred, &gt).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(r, 0.5);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_maps_score_perfectly() {
        let gt = labels_from(&["1100", "1100", "0022", "0022"]);
        let (p, r, f1) = object_f1(&gt, &gt).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
        assert_eq!(object_dice(&gt, &gt).unwrap(), 1.0);
        assert_eq!(object_hausdorff(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gt = labels_from(&["11", "11"]);
        let empty = labels_from(&["00", "00"]);
        assert_eq!(object_f1(&empty, &gt).unwrap(), (0.0, 0.0, 0.0));
        assert_eq!(object_dice(&empty, &gt).unwrap(), 0.0);
        let empty2 = labels_from(&["00", "00"]);
        assert_eq!(object_dice(&empty, &empty2).unwrap(), 1.0);
        assert_eq!(object_hausdorff(&empty, &empty2).unwrap(), 0.0);
    }

    #[test]
    fn shifted_square_gives_half_dice() {
        // 6x6 gt square at (0,0); pred shifted right by 3: overlap 18 px
        let mut gt = vec![0u32; 12 * 6];
        let mut pred = vec![0u32; 12 * 6];
        for v in 0..6 {
            for u in 0..6 {
                gt[v * 12 + u] = 1;
                pred[v * 12 + u + 3] = 1;
            }
        }
        let gt = LabelMap::new(12, 6, gt).unwrap();
        let pred = LabelMap::new(12, 6, pred).unwrap();
        assert!((object_dice(&pred, &gt).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_objects_at_3_4_5_distance() {
        let mut gt = vec![0u32; 10 * 10];
        let mut pred = vec![0u32; 10 * 10];
        gt[0] = 1; // (0,0)
        pred[4 * 10 + 3] = 1; // (3,4): distance 5
        let gt = LabelMap::new(10, 10, gt).unwrap();
        let pred = LabelMap::new(10, 10, pred).unwrap();
        assert!((object_hausdorff(&pred, &gt).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn object_dice_is_symmetric_and_id_permutation_invariant() {
        let a = labels_from(&["1110", "1110", "0022", "0022"]);
        let b = labels_from(&["2200", "2210", "0011", "0011"]);
        let ab = object_dice(&a, &b).unwrap();
        let ba = object_dice(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-15);
        // permute ids of a: 1<->2
        let a2 = labels_from(&["2220", "2220", "0011", "0011"]);
        assert!((object_dice(&a2, &b).unwrap() - ab).abs() < 1e-15);
        let (p1, r1, f1a) = object_f1(&a, &b).unwrap();
        let (p2, r2, f1b) = object_f1(&a2, &b).unwrap();
        assert_eq!((p1, r1, f1a), (p2, r2, f1b));
        assert!(
            (object_hausdorff(&a, &b).unwrap() - object_hausdorff(&a2, &b).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn report_aggregates_mean_and_sd() {
        let mut report = MetricsReport::default();
        let m = |x: f64| ImageMetrics {
            precision: x,
            recall: x,
            f1: x,
            object_dice: x,
            object_hausdorff: 10.0 * x,
        };
        report.push("a", m(0.4));
        report.push("b", m(0.8));
        let (mean, sd) = report.aggregate();
        assert!((mean.precision - 0.6).abs() < 1e-12);
        assert!((mean.object_hausdorff - 6.0).abs() < 1e-12);
        let expect_sd = ((0.2f64 * 0.2 + 0.2 * 0.2) / 1.0).sqrt();
        assert!((sd.f1 - expect_sd).abs() < 1e-12);
        let table = report.to_table();
        assert!(table.lines().count() == 5);
        assert!(table.contains("mean\t"));
    }
}
