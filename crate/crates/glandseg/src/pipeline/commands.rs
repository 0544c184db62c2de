//! The five batch commands. Every run writes a `run_manifest_<cmd>.txt`
//! with the fully resolved configuration and seed so outputs can be
//! reproduced byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::classify::{classify_malignancy, MalignancyDecision};
use crate::cnn::{
    load_checkpoint, predict_map, save_checkpoint, train, ModelParams, NetworkSpec,
    ProbabilityMaps, Tensor, TrainOutcome,
};
use crate::dataset::{
    augment_rotations, generate_synthetic_dataset, read_manifest, rotation_angles,
    sample_patches, separator_class_map, transform_labels, write_manifest, ClassMap,
    InstanceLabelImage, ManifestEntry, PatchProvenance, PatchSet, SampleSource, Split,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse_background, fuse_foreground, weight_map};
use crate::imaging::{downsample_half, load_image, save_image, upsample_bilinear, Image};
use crate::pipeline::config::{GridSearchSpec, PipelineConfig};
use crate::pipeline::render::{difference_image, overlay_image};
use crate::postmetrics::{
    connected_components, image_metrics, remove_small_blobs, LabelMap, MetricsReport,
};
use crate::preprocess::preprocess_pipeline;
use crate::tvseg::{edge_function, solve_tv, threshold_segmentation, TvProblem, TvState};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_run_manifest(config: &PipelineConfig, command: &str) -> Result<()> {
    ensure_dir(&config.out_dir)?;
    let text = format!("command = {command}\n{}", config.resolved_text());
    write_text(&config.out_dir.join(format!("run_manifest_{command}.txt")), &text)
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Generate the synthetic dataset into `out_dir` and return the manifest
/// path.
pub fn cmd_synth(config: &PipelineConfig) -> Result<PathBuf> {
    ensure_dir(&config.out_dir)?;
    let set = generate_synthetic_dataset(config.seed, &config.synth.params);
    let mut entries = Vec::with_capacity(set.len());
    for (i, s) in set.iter().enumerate() {
        let image = config.out_dir.join(format!("img_{i:03}.png"));
        let labels = config.out_dir.join(format!("lab_{i:03}.png"));
        let separator = config.out_dir.join(format!("sep_{i:03}.png"));
        save_image(&s.rgb, &image)?;
        save_image(&s.labels.to_image(), &labels)?;
        save_image(&s.separator, &separator)?;
        entries.push(ManifestEntry {
            image,
            labels,
            separator: Some(separator),
            malignant: s.malignant,
        });
    }
    let manifest = config.out_dir.join("manifest.txt");
    write_manifest(&entries, &manifest)?;
    write_run_manifest(config, "synth")?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// shared preparation
// ---------------------------------------------------------------------------

struct PreparedEntry {
    entry: ManifestEntry,
    /// preprocessed, half-resolution classifier input
    proc_half: Image,
    /// four-class map at half resolution
    class_half: ClassMap,
    /// binary separator map at half resolution, when annotated
    sep_half: Option<ClassMap>,
}

fn prepare_entry(entry: &ManifestEntry, config: &PipelineConfig) -> Result<PreparedEntry> {
    let rgb = load_image(&entry.image)?;
    let proc = preprocess_pipeline(&rgb, &config.stains()?, &config.clahe)?;
    let proc_half = downsample_half(&proc)?;

    let labels = InstanceLabelImage::from_image(&load_image(&entry.labels)?)?;
    if labels.width() != rgb.width() || labels.height() != rgb.height() {
        return Err(Error::Data(format!(
            "{}: labels are {}x{} but the image is {}x{}",
            entry.labels.display(),
            labels.width(),
            labels.height(),
            rgb.width(),
            rgb.height()
        )));
    }
    let labels_half = labels.downsample_half_nearest()?;
    let class_half = transform_labels(&labels_half, entry.malignant);

    let sep_half = match &entry.separator {
        Some(path) => {
            let sep = InstanceLabelImage::from_image(&load_image(path)?)?;
            let sep_half = sep.downsample_half_nearest()?;
            let as_mask = sep_half
                .labels()
                .iter()
                .map(|&l| if l > 0 { 255.0f32 } else { 0.0 })
                .collect();
            let img = Image::from_data(sep_half.width(), sep_half.height(), 1, as_mask, (0.0, 255.0))?;
            Some(separator_class_map(&img)?)
        }
        None => None,
    };

    Ok(PreparedEntry {
        entry: entry.clone(),
        proc_half,
        class_half,
        sep_half,
    })
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainArtifacts {
    pub object_checkpoint: PathBuf,
    pub separator_checkpoint: PathBuf,
}

fn curve_table(outcome: &TrainOutcome) -> String {
    let mut s = String::from("epoch\tmean_loss\ttrain_error\theldout_error\n");
    for e in &outcome.curve {
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6}",
            e.epoch, e.mean_loss, e.train_error, e.heldout_error
        );
    }
    let _ = writeln!(s, "# best_epoch = {}", outcome.best_epoch);
    s
}

/// Split entries into train/held-out by source image, stratified over the
/// malignancy flag, keeping separator-annotated images in both splits
/// when any exist.
fn split_entries(
    prepared: &[PreparedEntry],
    heldout_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x59_1177);
    let mut heldout = Vec::new();
    let mut train = Vec::new();
    for malignant in [false, true] {
        let mut group: Vec<usize> = (0..prepared.len())
            .filter(|&i| prepared[i].entry.malignant == malignant)
            .collect();
        if group.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 {} images to split train/held-out, found {}",
                if malignant { "malignant" } else { "benign" },
                group.len()
            )));
        }
        group.shuffle(&mut rng);
        let k = ((group.len() as f64 * heldout_fraction).round() as usize)
            .clamp(1, group.len() - 1);
        heldout.extend_from_slice(&group[..k]);
        train.extend_from_slice(&group[k..]);
    }

    // keep at least one separator-positive image on each side
    let has_pos = |i: &usize| {
        prepared[*i]
            .sep_half
            .as_ref()
            .is_some_and(|c| c.classes().iter().any(|&v| v == 1))
    };
    let any_pos = prepared.iter().enumerate().any(|(i, _)| has_pos(&i));
    if any_pos {
        if !heldout.iter().any(has_pos) {
            if let (Some(ti), Some(hi)) = (
                train.iter().position(has_pos),
                heldout.iter().position(|i| !has_pos(i)),
            ) {
                std::mem::swap(&mut train[ti], &mut heldout[hi]);
            }
        }
        if !train.iter().any(has_pos) {
            if let (Some(hi), Some(ti)) = (
                heldout.iter().position(has_pos),
                train.iter().position(|i| !has_pos(i)),
            ) {
                std::mem::swap(&mut heldout[hi], &mut train[ti]);
            }
        }
    }
    train.sort_unstable();
    heldout.sort_unstable();
    Ok((train, heldout))
}

fn object_sources<'a>(prepared: &'a [PreparedEntry], idx: &[usize]) -> Vec<SampleSource<'a>> {
    idx.iter()
        .map(|&i| SampleSource {
            image_id: i,
            image: &prepared[i].proc_half,
            classes: &prepared[i].class_half,
        })
        .collect()
}

fn separator_sources<'a>(prepared: &'a [PreparedEntry], idx: &[usize]) -> Vec<SampleSource<'a>> {
    idx.iter()
        .map(|&i| SampleSource {
            image_id: i,
            image: &prepared[i].proc_half,
            classes: prepared[i].sep_half.as_ref().expect("checked by cmd_train"),
        })
        .collect()
}

/// Expand the separator-class patches with rotated copies; negatives stay
/// as sampled. Keeps per-class balance when negatives were oversampled by
/// `copies + 1`.
fn augment_separator_positives(set: PatchSet, copies: usize) -> Result<PatchSet> {
    if copies == 0 {
        return Ok(set);
    }
    let size = set.patches.h;
    let angles = rotation_angles(copies);
    let mut data = set.patches.data.clone();
    let mut labels = set.labels.clone();
    let mut splits = set.splits.clone();
    let mut provenance = set.provenance.clone();
    for i in 0..set.len() {
        if set.labels[i] != 1 {
            continue;
        }
        let patch = Tensor::from_vec(1, 1, size, size, set.patches.item(i).to_vec());
        let rotated = augment_rotations(&patch, copies)?;
        for k in 1..=copies {
            data.extend_from_slice(&rotated.data[k * size * size..(k + 1) * size * size]);
            labels.push(1);
            splits.push(set.splits[i]);
            provenance.push(PatchProvenance {
                rotation_deg: angles[k],
                ..set.provenance[i].clone()
            });
        }
    }
    let n = labels.len();
    Ok(PatchSet {
        patches: Tensor::from_vec(n, 1, size, size, data),
        labels,
        splits,
        provenance,
    })
}

/// Train both classifiers from the manifest and write checkpoints plus
/// per-epoch error curves.
pub fn cmd_train(config: &PipelineConfig) -> Result<TrainArtifacts> {
    let manifest_path = config
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Data("training requires paths.manifest".into()))?;
    let entries = read_manifest(manifest_path)?;
    for e in &entries {
        if e.separator.is_none() {
            return Err(Error::Data(format!(
                "{}: missing separator labels (required to train the separator classifier)",
                e.image.display()
            )));
        }
    }
    ensure_dir(&config.out_dir)?;

    let prepared: Vec<PreparedEntry> = entries
        .par_iter()
        .map(|e| prepare_entry(e, config))
        .collect::<Result<_>>()?;

    let (train_idx, heldout_idx) =
        split_entries(&prepared, config.sampling.heldout_fraction, config.seed)?;

    let patch = config.variant.object_spec().input_size;
    let s = &config.sampling;

    // object task: four balanced classes from each split
    let object_set = sample_patches(
        &object_sources(&prepared, &train_idx),
        s.per_class_object,
        patch,
        config.seed ^ 0x0b_1ec7,
        Split::Train,
    )?
    .merge(sample_patches(
        &object_sources(&prepared, &heldout_idx),
        s.heldout_per_class_object,
        patch,
        config.seed ^ 0x0b_1ec8,
        Split::HeldOut,
    )?);

    // separator task: positives are rotation-augmented, negatives are
    // oversampled to keep the final set balanced
    let copies = s.separator_rotations;
    let sep_train = crate::dataset::sample_patches_with_counts(
        &separator_sources(&prepared, &train_idx),
        &[s.per_class_separator * (copies + 1), s.per_class_separator],
        patch,
        config.seed ^ 0x5e_9a17,
        Split::Train,
    )?;
    let sep_train = augment_separator_positives(sep_train, copies)?;
    let sep_heldout = crate::dataset::sample_patches_with_counts(
        &separator_sources(&prepared, &heldout_idx),
        &[s.heldout_per_class_separator, s.heldout_per_class_separator],
        patch,
        config.seed ^ 0x5e_9a18,
        Split::HeldOut,
    )?;
    let separator_set = sep_train.merge(sep_heldout);

    let mut object_trainer = config.trainer.clone();
    object_trainer.rng_seed = config.seed ^ 0x0b6a_0001;
    let object_outcome = train(&config.variant.object_spec(), &object_set, &object_trainer)?;

    let mut sep_trainer = config.trainer.clone();
    sep_trainer.rng_seed = config.seed ^ 0x5e70_0002;
    let sep_outcome = train(&config.variant.separator_spec(), &separator_set, &sep_trainer)?;

    let object_checkpoint = config.out_dir.join("object_net.ckpt");
    let separator_checkpoint = config.out_dir.join("separator_net.ckpt");
    save_checkpoint(&config.variant.object_spec(), &object_outcome.params, &object_checkpoint)?;
    save_checkpoint(
        &config.variant.separator_spec(),
        &sep_outcome.params,
        &separator_checkpoint,
    )?;
    write_text(
        &config.out_dir.join("object_net_curve.tsv"),
        &curve_table(&object_outcome),
    )?;
    write_text(
        &config.out_dir.join("separator_net_curve.tsv"),
        &curve_table(&sep_outcome),
    )?;
    write_run_manifest(config, "train")?;
    Ok(TrainArtifacts {
        object_checkpoint,
        separator_checkpoint,
    })
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

pub struct SegmentedImage {
    pub name: String,
    pub labels: LabelMap,
    pub decision: MalignancyDecision,
    pub mask_path: PathBuf,
    pub labels_path: PathBuf,
    pub had_ground_truth: bool,
}

pub struct SegmentOutcome {
    pub images: Vec<SegmentedImage>,
    pub decisions_path: PathBuf,
}

struct LoadedModels {
    object_spec: NetworkSpec,
    object_params: ModelParams,
    separator_spec: NetworkSpec,
    separator_params: ModelParams,
}

fn load_models(config: &PipelineConfig) -> Result<LoadedModels> {
    let object_path = config
        .object_checkpoint
        .clone()
        .unwrap_or_else(|| config.out_dir.join("object_net.ckpt"));
    let separator_path = config
        .separator_checkpoint
        .clone()
        .unwrap_or_else(|| config.out_dir.join("separator_net.ckpt"));
    let (object_spec, object_params) = load_checkpoint(&object_path)?;
    let (separator_spec, separator_params) = load_checkpoint(&separator_path)?;
    Ok(LoadedModels {
        object_spec,
        object_params,
        separator_spec,
        separator_params,
    })
}

fn solver_log(state: &TvState) -> String {
    let mut s = String::new();
    for c in &state.checks {
        let _ = writeln!(
            s,
            "iter={} primal={:.9e} dual={:.9e} gap={:.3e}",
            c.iteration, c.primal_energy, c.dual_energy, c.relative_gap
        );
    }
    let _ = writeln!(
        s,
        "converged={} iterations={}",
        state.converged, state.iterations
    );
    s
}

/// Probability maps for one image, classifier side only (no fusion): the
/// cached quantity the grid search reuses across grid points.
pub struct ClassifierMaps {
    pub object: ProbabilityMaps,
    pub separator: ProbabilityMaps,
}

fn classify_image(models: &LoadedModels, proc_half: &Image) -> Result<ClassifierMaps> {
    Ok(ClassifierMaps {
        object: predict_map(&models.object_spec, &models.object_params, proc_half)?,
        separator: predict_map(&models.separator_spec, &models.separator_params, proc_half)?,
    })
}

struct SegmentedMaps {
    state: TvState,
    mask_full: Image,
    labels: LabelMap,
}

fn segment_from_maps(
    maps: &ClassifierMaps,
    proc_half: &Image,
    full_dims: (usize, usize),
    config: &PipelineConfig,
    edge: &crate::tvseg::EdgeParams,
    lambda: f64,
) -> Result<SegmentedMaps> {
    let s_map = maps.separator.class_map(1);
    let p_fg = fuse_foreground(
        &maps.object.class_map(1),
        &maps.object.class_map(3),
        &s_map,
        config.fusion.rho,
    )?;
    let p_bg = fuse_background(
        &maps.object.class_map(0),
        &maps.object.class_map(2),
        &s_map,
        config.fusion.rho,
    )?;
    let w = weight_map(&p_fg, &p_bg, &config.fusion)?;
    let g = edge_function(proc_half, edge)?;
    let problem = TvProblem::new(&g, &w, lambda)?;
    let state = solve_tv(&problem, &config.pd)?;
    let mask_half = threshold_segmentation(&state);
    let up = upsample_bilinear(&mask_half, full_dims.0, full_dims.1)?;
    let mut mask_full = Image::new(full_dims.0, full_dims.1, 1, (0.0, 1.0));
    for (dst, &v) in mask_full.data_mut().iter_mut().zip(up.data().iter()) {
        *dst = f32::from(v > 0.5);
    }
    let labels = remove_small_blobs(&connected_components(&mask_full)?, config.min_area);
    Ok(SegmentedMaps {
        state,
        mask_full,
        labels,
    })
}

/// Segment images end to end and write masks, label maps, overlays,
/// difference images and the decision table. With an empty `images` list,
/// every manifest entry is segmented; ground truth is looked up in the
/// manifest by file stem.
pub fn cmd_segment(config: &PipelineConfig, images: &[PathBuf]) -> Result<SegmentOutcome> {
    let models = load_models(config)?;
    let manifest_entries = match &config.manifest {
        Some(m) => read_manifest(m)?,
        None => Vec::new(),
    };
    let by_stem: BTreeMap<String, &ManifestEntry> = manifest_entries
        .iter()
        .map(|e| (stem_of(&e.image), e))
        .collect();

    let targets: Vec<PathBuf> = if images.is_empty() {
        manifest_entries.iter().map(|e| e.image.clone()).collect()
    } else {
        images.to_vec()
    };
    if targets.is_empty() {
        return Err(Error::Data(
            "no images to segment: pass paths or set paths.manifest".into(),
        ));
    }
    ensure_dir(&config.out_dir)?;

    let results: Vec<SegmentedImage> = targets
        .par_iter()
        .map(|path| -> Result<SegmentedImage> {
            let name = stem_of(path);
            let rgb = load_image(path)?;
            let proc = preprocess_pipeline(&rgb, &config.stains()?, &config.clahe)?;
            let proc_half = downsample_half(&proc)?;
            let maps = classify_image(&models, &proc_half)?;
            let seg = segment_from_maps(
                &maps,
                &proc_half,
                (rgb.width(), rgb.height()),
                config,
                &config.edge,
                config.lambda,
            )?;
            let decision = classify_malignancy(&maps.object)?;

            let gt = by_stem
                .get(&name)
                .map(|e| -> Result<LabelMap> {
                    let inst = InstanceLabelImage::from_image(&load_image(&e.labels)?)?;
                    Ok(LabelMap::from_instances(&inst))
                })
                .transpose()?;

            let mask_path = config.out_dir.join(format!("{name}_mask.png"));
            let mut mask255 = seg.mask_full.clone();
            mask255.data_mut().iter_mut().for_each(|v| *v *= 255.0);
            mask255.set_value_range((0.0, 255.0));
            save_image(&mask255, &mask_path)?;

            if seg.labels.count() > 255 {
                return Err(Error::Data(format!(
                    "{name}: {} objects exceed the 8-bit label map limit",
                    seg.labels.count()
                )));
            }
            let labels_path = config.out_dir.join(format!("{name}_labels.png"));
            let labels_img = Image::from_data(
                seg.labels.width(),
                seg.labels.height(),
                1,
                seg.labels.labels().iter().map(|&l| l as f32).collect(),
                (0.0, 255.0),
            )?;
            save_image(&labels_img, &labels_path)?;

            let overlay = overlay_image(&rgb, &seg.labels, gt.as_ref());
            save_image(&overlay, &config.out_dir.join(format!("{name}_overlay.png")))?;
            if let Some(gt) = &gt {
                let diff = difference_image(&rgb, &seg.labels, gt);
                save_image(&diff, &config.out_dir.join(format!("{name}_diff.png")))?;
            }
            write_text(
                &config.out_dir.join(format!("{name}_solver.log")),
                &solver_log(&seg.state),
            )?;

            Ok(SegmentedImage {
                name,
                labels: seg.labels,
                decision,
                mask_path,
                labels_path,
                had_ground_truth: gt.is_some(),
            })
        })
        .collect::<Result<_>>()?;

    let mut table = String::from("image\tclass\tconfidence\ttie\n");
    for r in &results {
        let _ = writeln!(
            table,
            "{}\t{}\t{:.4}\t{}",
            r.name, r.decision.class, r.decision.confidence, r.decision.tie
        );
    }
    let decisions_path = config.out_dir.join("decisions.tsv");
    write_text(&decisions_path, &table)?;
    write_run_manifest(config, "segment")?;
    Ok(SegmentOutcome {
        images: results,
        decisions_path,
    })
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Score predicted label maps in `pred_dir` against the ground truth in
/// the manifest. Predictions are matched by file stem
/// (`<stem>_labels.png`); unmatched entries abort with the full list.
pub fn cmd_evaluate(pred_dir: &Path, manifest_path: &Path) -> Result<MetricsReport> {
    let entries = read_manifest(manifest_path)?;
    let mut missing = Vec::new();
    let mut pairs = Vec::new();
    for e in &entries {
        let name = stem_of(&e.image);
        let pred_path = pred_dir.join(format!("{name}_labels.png"));
        if pred_path.exists() {
            pairs.push((name, pred_path, e.labels.clone()));
        } else {
            missing.push(pred_path.display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "missing predictions for {} image(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let rows: Vec<(String, crate::postmetrics::ImageMetrics)> = pairs
        .par_iter()
        .map(|(name, pred_path, gt_path)| {
            let pred = LabelMap::from_instances(&InstanceLabelImage::from_image(&load_image(
                pred_path,
            )?)?);
            let gt = LabelMap::from_instances(&InstanceLabelImage::from_image(&load_image(
                gt_path,
            )?)?);
            Ok((name.clone(), image_metrics(&pred, &gt)?))
        })
        .collect::<Result<_>>()?;
    let mut report = MetricsReport::default();
    for (name, m) in rows {
        report.push(name, m);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// grid search
// ---------------------------------------------------------------------------

pub struct GridSearchResult {
    pub best_alpha: f64,
    pub best_beta: f64,
    pub best_lambda: f64,
    pub best_dice: f64,
    /// (alpha, beta, lambda, mean dice) per grid point, in grid order.
    pub table: Vec<(f64, f64, f64, f64)>,
}

impl GridSearchResult {
    pub fn to_table(&self) -> String {
        let mut s = String::from("alpha\tbeta\tlambda\tmean_object_dice\n");
        for (a, b, l, d) in &self.table {
            let _ = writeln!(s, "{a}\t{b}\t{l}\t{d:.6}");
        }
        let _ = writeln!(
            s,
            "# best: alpha={} beta={} lambda={} dice={:.6}",
            self.best_alpha, self.best_beta, self.best_lambda, self.best_dice
        );
        s
    }
}

/// Exhaustive search over the (alpha, beta, lambda) grid, maximizing mean
/// object-level Dice over the manifest images. Classifier maps are
/// computed once per image and shared across grid points. Ties prefer
/// smaller lambda, then smaller alpha, then smaller beta.
pub fn cmd_gridsearch(config: &PipelineConfig, spec: &GridSearchSpec) -> Result<GridSearchResult> {
    spec.validate()?;
    let manifest_path = config
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Data("grid search requires paths.manifest".into()))?;
    let models = load_models(config)?;
    let entries = read_manifest(manifest_path)?;

    struct Tuning {
        proc_half: Image,
        maps: ClassifierMaps,
        gt: LabelMap,
        dims: (usize, usize),
    }
    let tuning: Vec<Tuning> = entries
        .par_iter()
        .map(|e| -> Result<Tuning> {
            let rgb = load_image(&e.image)?;
            let proc = preprocess_pipeline(&rgb, &config.stains()?, &config.clahe)?;
            let proc_half = downsample_half(&proc)?;
            let maps = classify_image(&models, &proc_half)?;
            let gt = LabelMap::from_instances(&InstanceLabelImage::from_image(&load_image(
                &e.labels,
            )?)?);
            Ok(Tuning {
                proc_half,
                maps,
                gt,
                dims: (rgb.width(), rgb.height()),
            })
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(spec.points());
    for &a in &spec.alpha {
        for &b in &spec.beta {
            for &l in &spec.lambda {
                points.push((a, b, l));
            }
        }
    }
    let table: Vec<(f64, f64, f64, f64)> = points
        .par_iter()
        .map(|&(a, b, l)| -> Result<(f64, f64, f64, f64)> {
            let edge = crate::tvseg::EdgeParams { alpha: a, beta: b };
            let mut sum = 0.0;
            for t in &tuning {
                let seg = segment_from_maps(&t.maps, &t.proc_half, t.dims, config, &edge, l)?;
                sum += crate::postmetrics::object_dice(&seg.labels, &t.gt)?;
            }
            Ok((a, b, l, sum / tuning.len() as f64))
        })
        .collect::<Result<_>>()?;

    let mut best = table[0];
    for &cand in &table[1..] {
        let better = cand.3 > best.3
            || (cand.3 == best.3
                && (cand.2, cand.0, cand.1) < (best.2, best.0, best.1));
        if better {
            best = cand;
        }
    }
    ensure_dir(&config.out_dir)?;
    let result = GridSearchResult {
        best_alpha: best.0,
        best_beta: best.1,
        best_lambda: best.2,
        best_dice: best.3,
        table,
    };
    write_text(&config.out_dir.join("gridsearch.tsv"), &result.to_table())?;
    write_run_manifest(config, "gridsearch")?;
    Ok(result)
}
