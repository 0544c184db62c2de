//! Command-level integration tests that do not need trained models:
//! zero-weight checkpoints give uniform classifier maps, which exercise
//! every interface (fusion collapses to a zero weight map and the solver
//! converges immediately).

use std::path::{Path, PathBuf};

use glandseg::cnn::{save_checkpoint, ModelParams, NetworkSpec};
use glandseg::dataset::{read_manifest, write_manifest, ManifestEntry};
use glandseg::error::Error;
use glandseg::imaging::{load_image, save_image, Image};
use glandseg::pipeline::{cmd_evaluate, cmd_gridsearch, cmd_segment, cmd_synth, cmd_train, PipelineConfig};

fn small_synth(root: &Path, images: usize, benign: usize, seed: u64) -> PathBuf {
    let mut cfg = PipelineConfig::default();
    cfg.out_dir = root.to_path_buf();
    cfg.synth.params.images = images;
    cfg.synth.params.benign = benign;
    cfg.synth.params.min_size = 96;
    cfg.synth.params.max_size = 112;
    cfg.seed = seed;
    cmd_synth(&cfg).unwrap()
}

fn zero_checkpoints(dir: &Path) -> (PathBuf, PathBuf) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut write = |spec: NetworkSpec, name: &str| -> PathBuf {
        let params = ModelParams::init(&spec, &mut rng).unwrap().zeros_like();
        let path = dir.join(name);
        save_checkpoint(&spec, &params, &path).unwrap();
        path
    };
    (
        write(glandseg::cnn::tiny_object_net_spec(), "object.ckpt"),
        write(glandseg::cnn::tiny_separator_net_spec(), "separator.ckpt"),
    )
}

#[test]
fn train_reports_missing_separator_labels_by_image() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = small_synth(&dir.path().join("data"), 4, 2, 3);
    // rewrite the manifest without separator paths
    let entries: Vec<ManifestEntry> = read_manifest(&manifest_path)
        .unwrap()
        .into_iter()
        .map(|mut e| {
            e.separator = None;
            e
        })
        .collect();
    write_manifest(&entries, &manifest_path).unwrap();

    let mut cfg = PipelineConfig::default();
    cfg.out_dir = dir.path().join("model");
    cfg.manifest = Some(manifest_path);
    let msg = match cmd_train(&cfg) {
        Err(e) => e.to_string(),
        Ok(_) => panic!("training succeeded without separator labels"),
    };
    assert!(
        msg.contains("img_000") && msg.contains("separator"),
        "unhelpful error: {msg}"
    );
}

#[test]
fn segment_without_ground_truth_writes_no_difference_image() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_synth(&data, 2, 1, 5);
    let (obj, sep) = zero_checkpoints(dir.path());

    let mut cfg = PipelineConfig::default();
    cfg.out_dir = dir.path().join("seg");
    cfg.object_checkpoint = Some(obj);
    cfg.separator_checkpoint = Some(sep);
    // no manifest: the image is passed explicitly and has no ground truth
    let outcome = cmd_segment(&cfg, &[data.join("img_000.png")]).unwrap();
    assert_eq!(outcome.images.len(), 1);
    assert!(!outcome.images[0].had_ground_truth);
    assert!(cfg.out_dir.join("img_000_mask.png").exists());
    assert!(cfg.out_dir.join("img_000_overlay.png").exists());
    assert!(cfg.out_dir.join("img_000_labels.png").exists());
    assert!(cfg.out_dir.join("img_000_solver.log").exists());
    assert!(!cfg.out_dir.join("img_000_diff.png").exists());
    // uniform maps are below the confidence threshold everywhere: no objects
    assert_eq!(outcome.images[0].labels.count(), 0);

    // mask dimensions equal the input dimensions
    let mask = load_image(cfg.out_dir.join("img_000_mask.png")).unwrap();
    let input = load_image(data.join("img_000.png")).unwrap();
    assert_eq!((mask.width(), mask.height()), (input.width(), input.height()));
}

#[test]
fn segment_with_manifest_emits_difference_images() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = small_synth(&data, 2, 1, 6);
    let (obj, sep) = zero_checkpoints(dir.path());

    let mut cfg = PipelineConfig::default();
    cfg.out_dir = dir.path().join("seg");
    cfg.manifest = Some(manifest);
    cfg.object_checkpoint = Some(obj);
    cfg.separator_checkpoint = Some(sep);
    let outcome = cmd_segment(&cfg, &[]).unwrap();
    assert_eq!(outcome.images.len(), 2);
    for img in &outcome.images {
        assert!(img.had_ground_truth);
    }
    assert!(cfg.out_dir.join("img_000_diff.png").exists());
    assert!(cfg.out_dir.join("img_001_diff.png").exists());
    let decisions = std::fs::read_to_string(&outcome.decisions_path).unwrap();
    assert_eq!(decisions.lines().count(), 3, "header + 2 rows");
}

fn shift_labels(img: &Image, dx: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::new(w, h, 1, img.value_range());
    for v in 0..h {
        for u in 0..w {
            let s = img.get((u + dx) % w, v, 0);
            out.set(u, v, 0, s);
        }
    }
    out
}

#[test]
fn evaluate_object_dice_is_symmetric_under_swapped_directories() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = small_synth(&data, 3, 2, 11);
    let entries = read_manifest(&manifest).unwrap();

    // predictions = ground truth shifted right by 7 px
    let pred = dir.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    for e in &entries {
        let stem = e.image.file_stem().unwrap().to_string_lossy();
        let gt = load_image(&e.labels).unwrap();
        save_image(&shift_labels(&gt, 7), pred.join(format!("{stem}_labels.png"))).unwrap();
    }
    let forward = cmd_evaluate(&pred, &manifest).unwrap();

    // swapped: the shifted maps become ground truth, the originals become
    // predictions
    let swapped_root = dir.path().join("swapped");
    std::fs::create_dir_all(&swapped_root).unwrap();
    let pred2 = dir.path().join("pred2");
    std::fs::create_dir_all(&pred2).unwrap();
    let mut swapped_entries = Vec::new();
    for e in &entries {
        let stem = e.image.file_stem().unwrap().to_string_lossy().into_owned();
        let shifted = swapped_root.join(format!("{stem}_gt.png"));
        std::fs::copy(pred.join(format!("{stem}_labels.png")), &shifted).unwrap();
        std::fs::copy(&e.labels, pred2.join(format!("{stem}_labels.png"))).unwrap();
        swapped_entries.push(ManifestEntry {
            image: e.image.clone(),
            labels: shifted,
            separator: None,
            malignant: e.malignant,
        });
    }
    let swapped_manifest = swapped_root.join("manifest.txt");
    write_manifest(&swapped_entries, &swapped_manifest).unwrap();
    let backward = cmd_evaluate(&pred2, &swapped_manifest).unwrap();

    for ((_, a), (_, b)) in forward.rows.iter().zip(backward.rows.iter()) {
        assert!((a.object_dice - b.object_dice).abs() < 1e-12, "dice not symmetric");
        // precision and recall swap roles
        assert!((a.precision - b.recall).abs() < 1e-12);
        assert!((a.recall - b.precision).abs() < 1e-12);
        assert!((a.object_hausdorff - b.object_hausdorff).abs() < 1e-9);
    }
}

#[test]
fn gridsearch_covers_the_grid_and_breaks_ties_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = small_synth(&data, 2, 1, 21);
    let (obj, sep) = zero_checkpoints(dir.path());

    let mut cfg = PipelineConfig::default();
    cfg.out_dir = dir.path().join("grid");
    cfg.manifest = Some(manifest);
    cfg.object_checkpoint = Some(obj);
    cfg.separator_checkpoint = Some(sep);

    // single point: returned verbatim
    cfg.grid.alpha = vec![3.0];
    cfg.grid.beta = vec![0.5];
    cfg.grid.lambda = vec![0.2];
    let single = cmd_gridsearch(&cfg, &cfg.grid.clone()).unwrap();
    assert_eq!(single.table.len(), 1);
    assert_eq!(
        (single.best_alpha, single.best_beta, single.best_lambda),
        (3.0, 0.5, 0.2)
    );

    // uniform maps give identical (zero) dice everywhere: ties resolve to
    // the smallest lambda, then alpha, then beta
    cfg.grid.alpha = vec![2.0, 1.0];
    cfg.grid.beta = vec![0.9, 0.4];
    cfg.grid.lambda = vec![0.5, 0.05, 5.0];
    let tied = cmd_gridsearch(&cfg, &cfg.grid.clone()).unwrap();
    assert_eq!(tied.table.len(), 12, "row count is |alpha|*|beta|*|lambda|");
    assert_eq!(
        (tied.best_alpha, tied.best_beta, tied.best_lambda),
        (1.0, 0.4, 0.05)
    );

    // deterministic across runs
    let again = cmd_gridsearch(&cfg, &cfg.grid.clone()).unwrap();
    assert_eq!(tied.table, again.table);
    assert!(cfg.out_dir.join("gridsearch.tsv").exists());
}

#[test]
fn gridsearch_rejects_an_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.out_dir = dir.path().to_path_buf();
    cfg.grid.alpha = vec![];
    match cmd_gridsearch(&cfg, &cfg.grid.clone()) {
        Err(Error::InvalidParam(_)) => {}
        other => panic!("expected invalid-param, got {:?}", other.err().map(|e| e.to_string())),
    }
}

#[test]
fn run_manifests_record_the_resolved_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_synth(&data, 2, 1, 9);
    let manifest_text = std::fs::read_to_string(data.join("run_manifest_synth.txt")).unwrap();
    assert!(manifest_text.contains("command = synth"));
    assert!(manifest_text.contains("seed = 9"));
    assert!(manifest_text.contains("fusion.rho = 1"));
    assert!(manifest_text.contains("tv.lambda = 0.1"));
    assert!(manifest_text.contains("post.min_area = 500"));
}
