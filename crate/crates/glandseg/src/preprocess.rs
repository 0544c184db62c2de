//! Preprocessing of H&E RGB images: color deconvolution into stain
//! concentrations followed by contrast-limited adaptive histogram
//! equalization of the structure-carrying first channel.

use crate::error::{Error, Result};
use crate::imaging::Image;

/// Maximum optical density this pipeline can observe: `-log10(1/256)`.
pub const OD_MAX: f64 = 2.408_239_965_311_849_6;

/// Three unit-length stain vectors in optical-density space (rows are
/// stains, columns R/G/B absorption).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StainMatrix {
    rows: [[f64; 3]; 3],
}

impl StainMatrix {
    /// Build a stain matrix from three OD-space stain vectors; each row is
    /// normalized to unit length. Fails if the matrix is singular.
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self> {
        let mut norm_rows = [[0.0; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            let n = (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
            if n < 1e-12 {
                return Err(Error::InvalidParam(format!("stain vector {i} is zero")));
            }
            for k in 0..3 {
                norm_rows[i][k] = row[k] / n;
            }
        }
        let m = StainMatrix { rows: norm_rows };
        m.inverse_transposed()?;
        Ok(m)
    }

    /// Classic Ruifrok-Johnston hematoxylin/eosin vectors; the residual
    /// third stain is the normalized cross product of the first two.
    pub fn ruifrok_johnston_he() -> Self {
        let h = [0.644_211, 0.716_556, 0.266_844];
        let e = [0.092_789, 0.954_111, 0.283_111];
        let r = cross(h, e);
        StainMatrix::new([h, e, r]).expect("reference stain vectors are well conditioned")
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.rows
    }

    /// Inverse of the transposed matrix, i.e. the map from an OD vector to
    /// stain concentrations in `OD = M^T c`.
    fn inverse_transposed(&self) -> Result<[[f64; 3]; 3]> {
        // M^T has the stain vectors as columns.
        let m = &self.rows;
        let t = [
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ];
        invert3(&t).ok_or_else(|| Error::InvalidParam("singular stain matrix".into()))
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = match r {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c1, c2) = match c {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let cof = m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            // adjugate transposes the cofactor matrix
            inv[c][r] = sign * cof * inv_det;
        }
    }
    Some(inv)
}

/// Optical density of an 8-bit intensity; the `+1` guards `log(0)` and is
/// part of the pipeline definition, so tests can be exact.
#[inline]
pub fn optical_density(v: f64) -> f64 {
    -((v + 1.0) / 256.0).log10()
}

/// Inverse of [`optical_density`].
#[inline]
pub fn od_to_intensity(od: f64) -> f64 {
    256.0 * 10f64.powf(-od) - 1.0
}

/// Separate an RGB image into per-stain concentration channels. Channel 0
/// is the first stain of the matrix (hematoxylin for the shipped default)
/// and is the channel kept by the rest of the pipeline.
pub fn color_deconvolve(rgb: &Image, stains: &StainMatrix) -> Result<Image> {
    if rgb.channels() != 3 {
        return Err(Error::DimMismatch(format!(
            "color deconvolution expects 3 channels, got {}",
            rgb.channels()
        )));
    }
    let inv = stains.inverse_transposed()?;
    let mut out = Image::new(rgb.width(), rgb.height(), 3, (0.0, OD_MAX as f32));
    let src = rgb.data();
    let dst = out.data_mut();
    for (px, qx) in src.chunks_exact(3).zip(dst.chunks_exact_mut(3)) {
        let od = [
            optical_density(px[0] as f64),
            optical_density(px[1] as f64),
            optical_density(px[2] as f64),
        ];
        for s in 0..3 {
            let c = inv[s][0] * od[0] + inv[s][1] * od[1] + inv[s][2] * od[2];
            qx[s] = c as f32;
        }
    }
    Ok(out)
}

/// Mix stain concentrations back into RGB intensities; the forward model
/// used by the deconvolution round-trip checks.
pub fn reconstruct_rgb(concentrations: &[f64; 3], stains: &StainMatrix) -> [f64; 3] {
    let m = stains.rows();
    let mut rgb = [0.0; 3];
    for ch in 0..3 {
        let od = concentrations[0] * m[0][ch]
            + concentrations[1] * m[1][ch]
            + concentrations[2] * m[2][ch];
        rgb[ch] = od_to_intensity(od);
    }
    rgb
}

/// CLAHE parameters: tile grid, clip limit as a fraction of the tile pixel
/// count, and histogram bin count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaheParams {
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tile_rows: 8,
            tile_cols: 8,
            clip_limit: 0.01,
            bins: 256,
        }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return Err(Error::InvalidParam("CLAHE tile grid must be >= 1".into()));
        }
        if !(self.clip_limit > 0.0 && self.clip_limit <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "CLAHE clip limit {} outside (0,1]",
                self.clip_limit
            )));
        }
        if self.bins < 2 {
            return Err(Error::InvalidParam("CLAHE needs at least 2 bins".into()));
        }
        Ok(())
    }
}

/// Clip a histogram at `limit` counts per bin and spread the excess
/// uniformly over all bins. Counts are real-valued so the redistribution
/// carries no positional bias. Returns the total clipped excess.
pub(crate) fn clip_histogram(hist: &mut [f64], limit: f64) -> f64 {
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let per_bin = excess / hist.len() as f64;
    for h in hist.iter_mut() {
        *h += per_bin;
    }
    excess
}

struct TileGrid {
    /// inclusive start per tile along one axis, plus a final end sentinel
    starts: Vec<usize>,
    centers: Vec<f64>,
}

fn tile_grid(extent: usize, tiles: usize) -> TileGrid {
    let mut starts = Vec::with_capacity(tiles + 1);
    for t in 0..=tiles {
        starts.push(t * extent / tiles);
    }
    let centers = (0..tiles)
        .map(|t| (starts[t] + starts[t + 1] - 1) as f64 / 2.0)
        .collect();
    TileGrid { starts, centers }
}

/// Contrast-limited adaptive histogram equalization on a single-channel
/// image. Per-tile clipped histograms are equalized and the tile transfer
/// functions are blended bilinearly between tile centers; the output keeps
/// the input's nominal range.
pub fn clahe(gray: &Image, params: &ClaheParams) -> Result<Image> {
    params.validate()?;
    if gray.channels() != 1 {
        return Err(Error::DimMismatch("CLAHE expects a single channel".into()));
    }
    if gray.width() < params.tile_cols || gray.height() < params.tile_rows {
        return Err(Error::InvalidParam(format!(
            "image {}x{} smaller than {}x{} tile grid",
            gray.width(),
            gray.height(),
            params.tile_cols,
            params.tile_rows
        )));
    }

    let (lo, hi) = gray.value_range();
    let (lo, hi) = (lo as f64, hi as f64);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let bins = params.bins;
    let bin_of = |v: f32| -> usize {
        let t = ((v as f64 - lo) / span * bins as f64).floor();
        (t.max(0.0) as usize).min(bins - 1)
    };

    let gx = tile_grid(gray.width(), params.tile_cols);
    let gy = tile_grid(gray.height(), params.tile_rows);

    // per-tile transfer functions: bin index -> output value
    let mut luts = vec![vec![0.0f64; bins]; params.tile_rows * params.tile_cols];
    for tr in 0..params.tile_rows {
        for tc in 0..params.tile_cols {
            let (x0, x1) = (gx.starts[tc], gx.starts[tc + 1]);
            let (y0, y1) = (gy.starts[tr], gy.starts[tr + 1]);
            let tile_px = ((x1 - x0) * (y1 - y0)) as f64;
            let mut hist = vec![0.0f64; bins];
            for v in y0..y1 {
                for u in x0..x1 {
                    hist[bin_of(gray.get(u, v, 0))] += 1.0;
                }
            }
            let limit = (params.clip_limit * tile_px).max(1.0);
            clip_histogram(&mut hist, limit);
            let lut = &mut luts[tr * params.tile_cols + tc];
            let mut cdf = 0.0;
            for (b, &h) in hist.iter().enumerate() {
                cdf += h;
                lut[b] = lo + span * cdf / tile_px;
            }
        }
    }

    let mut out = Image::new(gray.width(), gray.height(), 1, gray.value_range());
    // bilinear blend between the four surrounding tile mappings
    let locate = |centers: &[f64], pos: f64| -> (usize, usize, f64) {
        if pos <= centers[0] {
            return (0, 0, 0.0);
        }
        if pos >= *centers.last().unwrap() {
            let last = centers.len() - 1;
            return (last, last, 0.0);
        }
        let mut i = 0;
        while centers[i + 1] < pos {
            i += 1;
        }
        let f = (pos - centers[i]) / (centers[i + 1] - centers[i]);
        (i, i + 1, f)
    };
    for v in 0..gray.height() {
        let (r0, r1, fy) = locate(&gy.centers, v as f64);
        for u in 0..gray.width() {
            let (c0, c1, fx) = locate(&gx.centers, u as f64);
            let b = bin_of(gray.get(u, v, 0));
            let l00 = luts[r0 * params.tile_cols + c0][b];
            let l01 = luts[r0 * params.tile_cols + c1][b];
            let l10 = luts[r1 * params.tile_cols + c0][b];
            let l11 = luts[r1 * params.tile_cols + c1][b];
            let top = l00 * (1.0 - fx) + l01 * fx;
            let bot = l10 * (1.0 - fx) + l11 * fx;
            out.set(u, v, 0, (top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    Ok(out)
}

/// Full preprocessing: deconvolve, keep the first stain channel, equalize.
/// The result is the single-channel input the pixel classifiers consume.
pub fn preprocess_pipeline(
    rgb: &Image,
    stains: &StainMatrix,
    clahe_params: &ClaheParams,
) -> Result<Image> {
    let stains_img = color_deconvolve(rgb, stains)?;
    let first = stains_img.channel(0);
    clahe(&first, clahe_params)
}
