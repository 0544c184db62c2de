//! Ground-truth label transformation, balanced patch sampling, rotation
//! augmentation and the dataset manifest.

mod synthetic;

pub use synthetic::{generate_synthetic_dataset, SynthImage, SynthParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::Tensor;
use crate::error::{Error, Result};
use crate::imaging::{extract_patch_reflect, Image, PixelCoord};

/// Per-pixel instance labels: 0 is background, k > 0 is gland instance k.
/// Instance ids are kept contiguous; gaps are renumbered on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceLabelImage {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    instances: usize,
}

impl InstanceLabelImage {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "label data length {} != {width}x{height}",
                labels.len()
            )));
        }
        let mut img = InstanceLabelImage {
            width,
            height,
            labels,
            instances: 0,
        };
        img.normalize();
        Ok(img)
    }

    /// Round an image's samples to instance ids.
    pub fn from_image(img: &Image) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::DimMismatch("label images are single-channel".into()));
        }
        let labels = img.data().iter().map(|&v| v.round().max(0.0) as u32).collect();
        InstanceLabelImage::new(img.width(), img.height(), labels)
    }

    /// Renumber labels into a contiguous {0..max} set, keeping first-seen
    /// order.
    fn normalize(&mut self) {
        let mut remap: Vec<Option<u32>> = Vec::new();
        let mut next = 1u32;
        for l in self.labels.iter_mut() {
            if *l == 0 {
                continue;
            }
            let idx = *l as usize;
            if remap.len() <= idx {
                remap.resize(idx + 1, None);
            }
            let target = remap[idx].get_or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            *l = *target;
        }
        self.instances = (next - 1) as usize;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn instances(&self) -> usize {
        self.instances
    }

    #[inline]
    pub fn label(&self, u: usize, v: usize) -> u32 {
        self.labels[v * self.width + u]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Nearest-neighbor rescale to half resolution (corner-aligned), for
    /// use beside bilinearly halved intensity images.
    pub fn downsample_half_nearest(&self) -> Result<InstanceLabelImage> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidParam("cannot halve a 1-pixel label image".into()));
        }
        let (tw, th) = (self.width / 2, self.height / 2);
        let sx = if tw > 1 { (self.width - 1) as f64 / (tw - 1) as f64 } else { 0.0 };
        let sy = if th > 1 { (self.height - 1) as f64 / (th - 1) as f64 } else { 0.0 };
        let mut labels = Vec::with_capacity(tw * th);
        for v in 0..th {
            let y = (v as f64 * sy).round() as usize;
            for u in 0..tw {
                let x = (u as f64 * sx).round() as usize;
                labels.push(self.label(x.min(self.width - 1), y.min(self.height - 1)));
            }
        }
        InstanceLabelImage::new(tw, th, labels)
    }

    /// Export as a single-channel image holding raw instance ids.
    pub fn to_image(&self) -> Image {
        let data = self.labels.iter().map(|&l| l as f32).collect();
        let max = self.instances as f32;
        Image::from_data(self.width, self.height, 1, data, (0.0, max.max(1.0)))
            .expect("sizes agree")
    }
}

/// Per-pixel class ids: background benign (0), gland benign (1),
/// background malignant (2), gland malignant (3). The separator task uses
/// the same container with classes {0, 1}.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMap {
    width: usize,
    height: usize,
    classes: Vec<u8>,
    class_count: usize,
}

impl ClassMap {
    pub fn new(width: usize, height: usize, classes: Vec<u8>, class_count: usize) -> Result<Self> {
        if classes.len() != width * height {
            return Err(Error::DimMismatch("class map size mismatch".into()));
        }
        if let Some(&c) = classes.iter().find(|&&c| c as usize >= class_count) {
            return Err(Error::Data(format!("class id {c} outside 0..{class_count}")));
        }
        Ok(ClassMap {
            width,
            height,
            classes,
            class_count,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn class(&self, u: usize, v: usize) -> u8 {
        self.classes[v * self.width + u]
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }
}

/// Map instance labels to the four-class scheme: benign images use
/// {background 0, gland 1}, malignant images {background 2, gland 3}.
pub fn transform_labels(instances: &InstanceLabelImage, malignant: bool) -> ClassMap {
    let (bg, fg) = if malignant { (2u8, 3u8) } else { (0u8, 1u8) };
    let classes = instances
        .labels()
        .iter()
        .map(|&l| if l == 0 { bg } else { fg })
        .collect();
    ClassMap::new(instances.width(), instances.height(), classes, 4).expect("sizes agree")
}

/// Binary class map for the separator task from a separator mask image
/// (any sample > 0 counts as separator).
pub fn separator_class_map(mask: &Image) -> Result<ClassMap> {
    if mask.channels() != 1 {
        return Err(Error::DimMismatch("separator masks are single-channel".into()));
    }
    let classes = mask.data().iter().map(|&v| u8::from(v > 0.0)).collect();
    ClassMap::new(mask.width(), mask.height(), classes, 2)
}

/// Training/held-out split tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    HeldOut,
}

/// Where a patch came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchProvenance {
    pub image_id: usize,
    pub center: PixelCoord,
    pub rotation_deg: f64,
}

/// A balanced set of training patches with labels, split tags and
/// provenance.
pub struct PatchSet {
    pub patches: Tensor,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub provenance: Vec<PatchProvenance>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Concatenate two sets with identical patch geometry.
    pub fn merge(mut self, other: PatchSet) -> PatchSet {
        assert_eq!(self.patches.c, other.patches.c);
        assert_eq!(self.patches.h, other.patches.h);
        assert_eq!(self.patches.w, other.patches.w);
        self.patches.data.extend_from_slice(&other.patches.data);
        self.patches.n += other.patches.n;
        self.labels.extend(other.labels);
        self.splits.extend(other.splits);
        self.provenance.extend(other.provenance);
        self
    }
}

/// One source image for sampling: preprocessed single-channel intensities
/// plus its class map.
pub struct SampleSource<'a> {
    pub image_id: usize,
    pub image: &'a Image,
    pub classes: &'a ClassMap,
}

/// Draw exactly `per_class` patches per class, centers at least
/// `patch/2` away from the borders, without replacement over
/// (image, center) pairs. Deterministic in `seed`.
pub fn sample_patches(
    sources: &[SampleSource<'_>],
    per_class: usize,
    patch: usize,
    seed: u64,
    split: Split,
) -> Result<PatchSet> {
    let class_count = sources
        .iter()
        .map(|s| s.classes.class_count())
        .max()
        .ok_or_else(|| Error::Data("no sample sources".into()))?;
    sample_patches_with_counts(sources, &vec![per_class; class_count], patch, seed, split)
}

/// [`sample_patches`] with an explicit target count per class; used where
/// one class is later multiplied by augmentation.
pub fn sample_patches_with_counts(
    sources: &[SampleSource<'_>],
    per_class: &[usize],
    patch: usize,
    seed: u64,
    split: Split,
) -> Result<PatchSet> {
    let class_count = per_class.len();
    let margin = patch / 2;

    // eligible centers per class, in deterministic raster order
    let mut pools: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); class_count];
    for (si, s) in sources.iter().enumerate() {
        debug_assert_eq!(s.image.width(), s.classes.width());
        debug_assert_eq!(s.image.height(), s.classes.height());
        let (w, h) = (s.classes.width(), s.classes.height());
        if w <= 2 * margin || h <= 2 * margin {
            continue;
        }
        for v in margin..h - margin {
            for u in margin..w - margin {
                pools[s.classes.class(u, v) as usize].push((si, u, v));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = patch * patch;
    let total: usize = per_class.iter().sum();
    let mut data = Vec::with_capacity(total * size);
    let mut labels = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    for (class, pool) in pools.iter_mut().enumerate() {
        let wanted = per_class[class];
        if pool.len() < wanted {
            return Err(Error::ClassExhausted {
                class,
                requested: wanted,
                available: pool.len(),
            });
        }
        // partial Fisher-Yates: the first `wanted` entries become a
        // uniform sample without replacement
        for i in 0..wanted {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(wanted);
        for &(si, u, v) in pool.iter() {
            let s = &sources[si];
            data.extend_from_slice(&extract_patch_reflect(s.image, u as i64, v as i64, patch));
            labels.push(class);
            provenance.push(PatchProvenance {
                image_id: s.image_id,
                center: PixelCoord { u, v },
                rotation_deg: 0.0,
            });
        }
    }
    let n = labels.len();
    Ok(PatchSet {
        patches: Tensor::from_vec(n, 1, patch, patch, data),
        labels,
        splits: vec![split; n],
        provenance,
    })
}

/// Rotate a square patch about its center by `degrees` using bilinear
/// resampling; samples falling outside the patch mirror back in.
fn rotate_patch(patch: &[f64], size: usize, degrees: f64) -> Vec<f64> {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let c = (size as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            // sample the source at the inverse rotation
            let sx = c + cos * dx + sin * dy;
            let sy = c - sin * dx + cos * dy;
            out.push(bilinear_reflect(patch, size, sx, sy));
        }
    }
    out
}

fn bilinear_reflect(patch: &[f64], size: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let g = |xi: i64, yi: i64| -> f64 {
        let u = crate::imaging::reflect101(xi, size);
        let v = crate::imaging::reflect101(yi, size);
        patch[v * size + u]
    };
    let a = g(x0, y0);
    let b = g(x0 + 1, y0);
    let d = g(x0, y0 + 1);
    let e = g(x0 + 1, y0 + 1);
    (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (d * (1.0 - fx) + e * fx) * fy
}

/// Original patch plus `copies` rotated versions at multiples of
/// `360/(copies+1)` degrees (every 36 degrees for the default 9 copies).
pub fn augment_rotations(patch: &Tensor, copies: usize) -> Result<Tensor> {
    if patch.h != patch.w {
        return Err(Error::InvalidParam(format!(
            "rotation augmentation needs square patches, got {}x{}",
            patch.h, patch.w
        )));
    }
    if patch.n != 1 || patch.c != 1 {
        return Err(Error::InvalidParam(
            "rotation augmentation expects a single one-channel patch".into(),
        ));
    }
    let size = patch.h;
    let step = 360.0 / (copies + 1) as f64;
    let mut data = Vec::with_capacity((copies + 1) * size * size);
    data.extend_from_slice(&patch.data);
    for k in 1..=copies {
        data.extend_from_slice(&rotate_patch(&patch.data, size, step * k as f64));
    }
    Ok(Tensor::from_vec(copies + 1, 1, size, size, data))
}

/// Rotation angles matching [`augment_rotations`] output order.
pub fn rotation_angles(copies: usize) -> Vec<f64> {
    let step = 360.0 / (copies + 1) as f64;
    (0..=copies).map(|k| step * k as f64).collect()
}

// ---------------------------------------------------------------------------
// dataset manifest
// ---------------------------------------------------------------------------

/// One record of the dataset manifest: image path, instance label path,
/// optional separator mask path, malignancy flag.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image: std::path::PathBuf,
    pub labels: std::path::PathBuf,
    pub separator: Option<std::path::PathBuf>,
    pub malignant: bool,
}

/// Read a manifest: one tab-separated record per line,
/// `image<TAB>labels<TAB>separator-or-dash<TAB>benign|malignant`.
/// Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<std::path::Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    let mut entries = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |msg: String| Error::Manifest {
            path: path.to_path_buf(),
            line: ln + 1,
            msg,
        };
        if fields.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let malignant = match fields[3] {
            "benign" => false,
            "malignant" => true,
            other => return Err(err(format!("unknown malignancy flag {other:?}"))),
        };
        let resolve = |p: &str| {
            let pb = std::path::PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        entries.push(ManifestEntry {
            image: resolve(fields[0]),
            labels: resolve(fields[1]),
            separator: if fields[2] == "-" {
                None
            } else {
                Some(resolve(fields[2]))
            },
            malignant,
        });
    }
    if entries.is_empty() {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            msg: "manifest lists no images".into(),
        });
    }
    Ok(entries)
}

/// Write a manifest with paths relative to its directory where possible.
pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    let rel = |p: &std::path::Path| {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            rel(&e.image),
            rel(&e.labels),
            e.separator.as_deref().map_or("-".to_string(), |s| rel(s)),
            if e.malignant { "malignant" } else { "benign" }
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard_classmap(w: usize, h: usize) -> ClassMap {
        let classes = (0..w * h)
            .map(|i| {
                let (u, v) = (i % w, i / w);
                (((u / 4) + (v / 4)) % 4) as u8
            })
            .collect();
        ClassMap::new(w, h, classes, 4).unwrap()
    }

    #[test]
    fn transform_labels_maps_the_four_classes() {
        let inst = InstanceLabelImage::new(2, 2, vec![0, 5, 0, 2]).unwrap();
        let benign = transform_labels(&inst, false);
        assert_eq!(benign.classes(), &[0, 1, 0, 1]);
        let malignant = transform_labels(&inst, true);
        assert_eq!(malignant.classes(), &[2, 3, 2, 3]);
    }

    #[test]
    fn transform_labels_inverse_consistency() {
        let inst = InstanceLabelImage::new(3, 1, vec![0, 7, 7]).unwrap();
        let cm = transform_labels(&inst, true);
        let recovered: Vec<bool> = cm.classes().iter().map(|&c| c == 1 || c == 3).collect();
        let binarized: Vec<bool> = inst.labels().iter().map(|&l| l > 0).collect();
        assert_eq!(recovered, binarized);
    }

    #[test]
    fn instance_labels_are_renumbered_contiguously() {
        let inst = InstanceLabelImage::new(4, 1, vec![0, 9, 3, 9]).unwrap();
        assert_eq!(inst.labels(), &[0, 1, 2, 1]);
        assert_eq!(inst.instances(), 2);
    }

    #[test]
    fn sampling_is_balanced_margin_respecting_and_deterministic() {
        let img = Image::new(32, 32, 1, (0.0, 1.0));
        let cm = checkerboard_classmap(32, 32);
        let sources = [SampleSource {
            image_id: 0,
            image: &img,
            classes: &cm,
        }];
        let a = sample_patches(&sources, 10, 9, 99, Split::Train).unwrap();
        assert_eq!(a.len(), 40);
        for class in 0..4 {
            assert_eq!(a.labels.iter().filter(|&&l| l == class).count(), 10);
        }
        for p in &a.provenance {
            assert!(p.center.u >= 4 && p.center.u < 28);
            assert!(p.center.v >= 4 && p.center.v < 28);
        }
        let b = sample_patches(&sources, 10, 9, 99, Split::Train).unwrap();
        assert_eq!(a.patches.data, b.patches.data);
        assert_eq!(a.provenance, b.provenance);

        // no duplicate (image, center, rotation) triples
        let mut seen: Vec<(usize, usize, usize, u64)> = a
            .provenance
            .iter()
            .map(|p| (p.image_id, p.center.u, p.center.v, p.rotation_deg.to_bits()))
            .collect();
        seen.sort_unstable();
        let before = seen.len();
        seen.dedup();
        assert_eq!(seen.len(), before);
    }

    #[test]
    fn exhausted_class_is_an_error() {
        let img = Image::new(16, 16, 1, (0.0, 1.0));
        let cm = ClassMap::new(16, 16, vec![0; 256], 4).unwrap();
        let sources = [SampleSource {
            image_id: 0,
            image: &img,
            classes: &cm,
        }];
        match sample_patches(&sources, 5, 9, 1, Split::Train) {
            Err(Error::ClassExhausted { class: 1, .. }) => {}
            other => panic!("expected class-exhausted, got {:?}", other.map(|s| s.len())),
        }
    }

    #[test]
    fn rotation_count_and_identity() {
        let patch = Tensor::from_vec(1, 1, 5, 5, (0..25).map(f64::from).collect());
        let batch = augment_rotations(&patch, 9).unwrap();
        assert_eq!(batch.n, 10);
        assert_eq!(&batch.data[..25], &patch.data[..], "0-degree copy is exact");
        assert_eq!(rotation_angles(9)[1], 36.0);
    }

    #[test]
    fn radially_symmetric_patch_is_rotation_invariant() {
        // Gaussian bump, compared on the inscribed disk where rotation
        // never samples through the mirror extension (reflection is not
        // rotation-equivariant, so corners cannot match for any
        // non-constant radial profile). Bilinear resampling error scales
        // with amplitude; at this amplitude it sits 4x under the
        // tolerance while an off-by-one center would exceed it 5x.
        let size = 33usize;
        let c = (size as f64 - 1.0) / 2.0;
        let amp = 1e-4;
        let sigma = 10.0;
        let data: Vec<f64> = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f64, (i / size) as f64);
                let r2 = (x - c).powi(2) + (y - c).powi(2);
                amp * (-r2 / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let patch = Tensor::from_vec(1, 1, size, size, data);
        let batch = augment_rotations(&patch, 9).unwrap();
        let mut worst = 0.0f64;
        for k in 0..10 {
            for (i, &orig) in patch.data.iter().enumerate() {
                let (x, y) = ((i % size) as f64, (i / size) as f64);
                if ((x - c).powi(2) + (y - c).powi(2)).sqrt() > c {
                    continue;
                }
                worst = worst.max((batch.data[k * size * size + i] - orig).abs());
            }
        }
        assert!(worst < 1e-6, "rotation deviation {worst}");
    }

    #[test]
    fn smooth_patch_mean_is_preserved_within_two_percent() {
        let size = 21usize;
        let data: Vec<f64> = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f64, (i / size) as f64);
                0.5 + 0.3 * ((x / size as f64) * std::f64::consts::PI).sin()
                    * ((y / size as f64) * std::f64::consts::PI).cos()
            })
            .collect();
        let mean0: f64 = data.iter().sum::<f64>() / data.len() as f64;
        let patch = Tensor::from_vec(1, 1, size, size, data);
        let batch = augment_rotations(&patch, 9).unwrap();
        for k in 0..10 {
            let m: f64 =
                batch.data[k * size * size..(k + 1) * size * size].iter().sum::<f64>()
                    / (size * size) as f64;
            assert!((m - mean0).abs() / mean0.abs() < 0.02, "copy {k}: mean {m} vs {mean0}");
        }
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let entries = vec![
            ManifestEntry {
                image: dir.path().join("img0.png"),
                labels: dir.path().join("lab0.png"),
                separator: Some(dir.path().join("sep0.png")),
                malignant: false,
            },
            ManifestEntry {
                image: dir.path().join("img1.png"),
                labels: dir.path().join("lab1.png"),
                separator: None,
                malignant: true,
            },
        ];
        write_manifest(&entries, &path).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, entries);

        std::fs::write(&path, "a.png\tb.png\t-\tsideways\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Manifest { line: 1, .. })));
    }
}
