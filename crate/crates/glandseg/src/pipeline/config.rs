//! Declarative run configuration: flat `key = value` text with dotted
//! section prefixes. Unknown keys are errors; omitted keys fall back to
//! the published defaults (rho=1, tau=0.65, alpha=10, beta=0.95,
//! lambda=0.1, min_area=500 and the training protocol of the paper).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::cnn::{
    object_net_spec, separator_net_spec, tiny_object_net_spec, tiny_separator_net_spec,
    NetworkSpec, TrainerConfig,
};
use crate::dataset::SynthParams;
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::preprocess::{ClaheParams, StainMatrix};
use crate::tvseg::{EdgeParams, PdParams};

/// Which architecture pair to instantiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetVariant {
    /// Full 101x101 networks from the paper.
    Full,
    /// Desk-scale 33x33 networks with one-eighth filter counts.
    Tiny,
}

impl NetVariant {
    pub fn object_spec(&self) -> NetworkSpec {
        match self {
            NetVariant::Full => object_net_spec(),
            NetVariant::Tiny => tiny_object_net_spec(),
        }
    }

    pub fn separator_spec(&self) -> NetworkSpec {
        match self {
            NetVariant::Full => separator_net_spec(),
            NetVariant::Tiny => tiny_separator_net_spec(),
        }
    }
}

/// Patch sampling counts for training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub per_class_object: usize,
    pub per_class_separator: usize,
    pub heldout_per_class_object: usize,
    pub heldout_per_class_separator: usize,
    pub heldout_fraction: f64,
    pub separator_rotations: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            per_class_object: 1200,
            per_class_separator: 100,
            heldout_per_class_object: 200,
            heldout_per_class_separator: 16,
            heldout_fraction: 0.25,
            separator_rotations: 9,
        }
    }
}

/// Synthetic dataset knobs (see [`SynthParams`]).
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub params: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            params: SynthParams {
                images: 32,
                benign: 16,
                ..SynthParams::default()
            },
        }
    }
}

/// Grid-search value lists; the objective is mean object-level Dice.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for GridSearchSpec {
    fn default() -> Self {
        GridSearchSpec {
            alpha: log_spaced(0.5, 15.0, 5),
            beta: lin_spaced(0.35, 0.95, 4),
            lambda: log_spaced(0.01, 10.0, 5),
        }
    }
}

impl GridSearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.beta.is_empty() || self.lambda.is_empty() {
            return Err(Error::InvalidParam("grid search lists must be non-empty".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.alpha.len() * self.beta.len() * self.lambda.len()
    }
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn lin_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Everything a command needs: paths, preprocessing, fusion, TV and
/// trainer parameters, post-processing and seeds.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub object_checkpoint: Option<PathBuf>,
    pub separator_checkpoint: Option<PathBuf>,
    pub stain_rows: [[f64; 3]; 3],
    pub clahe: ClaheParams,
    pub fusion: FusionParams,
    pub edge: EdgeParams,
    pub lambda: f64,
    pub pd: PdParams,
    pub trainer: TrainerConfig,
    pub sampling: SamplingConfig,
    pub min_area: usize,
    pub variant: NetVariant,
    pub synth: SynthConfig,
    pub grid: GridSearchSpec,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let stains = StainMatrix::ruifrok_johnston_he();
        PipelineConfig {
            manifest: None,
            out_dir: PathBuf::from("runs/out"),
            object_checkpoint: None,
            separator_checkpoint: None,
            stain_rows: *stains.rows(),
            clahe: ClaheParams::default(),
            fusion: FusionParams::default(),
            edge: EdgeParams::default(),
            lambda: 0.1,
            pd: PdParams::default(),
            trainer: TrainerConfig::default(),
            sampling: SamplingConfig::default(),
            min_area: 500,
            variant: NetVariant::Tiny,
            synth: SynthConfig::default(),
            grid: GridSearchSpec::default(),
            seed: 42,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn stains(&self) -> Result<StainMatrix> {
        StainMatrix::new(self.stain_rows)
    }

    /// Parse a config file over the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config = PipelineConfig::default();
        config.apply_text(&text, path)?;
        Ok(config)
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config {
                path: path.to_path_buf(),
                line: ln + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidParam(format!("cannot parse {what} from {value:?}"));
        macro_rules! num {
            ($t:ty) => {
                value.parse::<$t>().map_err(|_| bad(stringify!($t)))?
            };
        }
        let list = |value: &str| -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad("number list")))
                .collect()
        };
        match key {
            "paths.manifest" => self.manifest = Some(PathBuf::from(value)),
            "paths.out_dir" => self.out_dir = PathBuf::from(value),
            "paths.object_checkpoint" => self.object_checkpoint = Some(PathBuf::from(value)),
            "paths.separator_checkpoint" => self.separator_checkpoint = Some(PathBuf::from(value)),
            "preprocess.stain_matrix" => {
                let v = list(value)?;
                if v.len() != 9 {
                    return Err(Error::InvalidParam(format!(
                        "stain matrix needs 9 numbers, got {}",
                        v.len()
                    )));
                }
                self.stain_rows = [
                    [v[0], v[1], v[2]],
                    [v[3], v[4], v[5]],
                    [v[6], v[7], v[8]],
                ];
                self.stains()?; // fail early on singular input
            }
            "preprocess.clahe.tile_rows" => self.clahe.tile_rows = num!(usize),
            "preprocess.clahe.tile_cols" => self.clahe.tile_cols = num!(usize),
            "preprocess.clahe.clip_limit" => self.clahe.clip_limit = num!(f64),
            "preprocess.clahe.bins" => self.clahe.bins = num!(usize),
            "fusion.rho" => self.fusion.rho = num!(f64),
            "fusion.tau" => self.fusion.tau = num!(f64),
            "fusion.epsilon" => self.fusion.epsilon = num!(f64),
            "edge.alpha" => self.edge.alpha = num!(f64),
            "edge.beta" => self.edge.beta = num!(f64),
            "tv.lambda" => self.lambda = num!(f64),
            "tv.max_iters" => self.pd.max_iters = num!(usize),
            "tv.check_interval" => self.pd.check_interval = num!(usize),
            "tv.gap_tolerance" => self.pd.gap_tolerance = num!(f64),
            "post.min_area" => self.min_area = num!(usize),
            "cnn.variant" => {
                self.variant = match value {
                    "tiny" => NetVariant::Tiny,
                    "full" => NetVariant::Full,
                    other => {
                        return Err(Error::InvalidParam(format!(
                            "cnn.variant must be tiny or full, got {other:?}"
                        )))
                    }
                }
            }
            "trainer.minibatch_size" => self.trainer.minibatch_size = num!(usize),
            "trainer.eta0" => self.trainer.eta0 = num!(f64),
            "trainer.lr_floor_fraction" => self.trainer.lr_floor_fraction = num!(f64),
            "trainer.lr_saturation_epoch" => self.trainer.lr_saturation_epoch = num!(usize),
            "trainer.weight_decay" => self.trainer.weight_decay = num!(f64),
            "trainer.dropout_rate" => self.trainer.dropout_rate = num!(f64),
            "trainer.momentum_start" => self.trainer.momentum_start = num!(f64),
            "trainer.momentum_end" => self.trainer.momentum_end = num!(f64),
            "trainer.momentum_saturation_epoch" => {
                self.trainer.momentum_saturation_epoch = num!(usize)
            }
            "trainer.patience_epochs" => self.trainer.patience_epochs = num!(usize),
            "trainer.max_epochs" => self.trainer.max_epochs = num!(usize),
            "trainer.per_class_object" => self.sampling.per_class_object = num!(usize),
            "trainer.per_class_separator" => self.sampling.per_class_separator = num!(usize),
            "trainer.heldout_per_class_object" => {
                self.sampling.heldout_per_class_object = num!(usize)
            }
            "trainer.heldout_per_class_separator" => {
                self.sampling.heldout_per_class_separator = num!(usize)
            }
            "trainer.heldout_fraction" => self.sampling.heldout_fraction = num!(f64),
            "trainer.separator_rotations" => self.sampling.separator_rotations = num!(usize),
            "synth.images" => self.synth.params.images = num!(usize),
            "synth.benign" => self.synth.params.benign = num!(usize),
            "synth.min_size" => self.synth.params.min_size = num!(usize),
            "synth.max_size" => self.synth.params.max_size = num!(usize),
            "synth.min_glands" => self.synth.params.min_glands = num!(usize),
            "synth.max_glands" => self.synth.params.max_glands = num!(usize),
            "synth.min_radius" => self.synth.params.min_radius = num!(f64),
            "synth.max_radius" => self.synth.params.max_radius = num!(f64),
            "synth.touching_fraction" => self.synth.params.touching_fraction = num!(f64),
            "synth.separator_distance" => self.synth.params.separator_distance = num!(f64),
            "synth.malignant_speckle" => self.synth.params.malignant_speckle = num!(f64),
            "gridsearch.alpha" => self.grid.alpha = list(value)?,
            "gridsearch.beta" => self.grid.beta = list(value)?,
            "gridsearch.lambda" => self.grid.lambda = list(value)?,
            "seed" => self.seed = num!(u64),
            "jobs" => self.jobs = num!(usize),
            other => {
                return Err(Error::InvalidParam(format!("unknown configuration key {other:?}")))
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, one per line; written into the
    /// run manifest so an identical run can be reproduced byte for byte.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into())
        };
        kv("paths.manifest", path(&self.manifest));
        kv("paths.out_dir", self.out_dir.display().to_string());
        kv("paths.object_checkpoint", path(&self.object_checkpoint));
        kv("paths.separator_checkpoint", path(&self.separator_checkpoint));
        kv(
            "preprocess.stain_matrix",
            self.stain_rows
                .iter()
                .flatten()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("preprocess.clahe.tile_rows", self.clahe.tile_rows.to_string());
        kv("preprocess.clahe.tile_cols", self.clahe.tile_cols.to_string());
        kv("preprocess.clahe.clip_limit", self.clahe.clip_limit.to_string());
        kv("preprocess.clahe.bins", self.clahe.bins.to_string());
        kv("fusion.rho", self.fusion.rho.to_string());
        kv("fusion.tau", self.fusion.tau.to_string());
        kv("fusion.epsilon", self.fusion.epsilon.to_string());
        kv("edge.alpha", self.edge.alpha.to_string());
        kv("edge.beta", self.edge.beta.to_string());
        kv("tv.lambda", self.lambda.to_string());
        kv("tv.max_iters", self.pd.max_iters.to_string());
        kv("tv.check_interval", self.pd.check_interval.to_string());
        kv("tv.gap_tolerance", self.pd.gap_tolerance.to_string());
        kv("post.min_area", self.min_area.to_string());
        kv(
            "cnn.variant",
            match self.variant {
                NetVariant::Tiny => "tiny".into(),
                NetVariant::Full => "full".into(),
            },
        );
        kv("trainer.minibatch_size", self.trainer.minibatch_size.to_string());
        kv("trainer.eta0", self.trainer.eta0.to_string());
        kv("trainer.lr_floor_fraction", self.trainer.lr_floor_fraction.to_string());
        kv(
            "trainer.lr_saturation_epoch",
            self.trainer.lr_saturation_epoch.to_string(),
        );
        kv("trainer.weight_decay", self.trainer.weight_decay.to_string());
        kv("trainer.dropout_rate", self.trainer.dropout_rate.to_string());
        kv("trainer.momentum_start", self.trainer.momentum_start.to_string());
        kv("trainer.momentum_end", self.trainer.momentum_end.to_string());
        kv(
            "trainer.momentum_saturation_epoch",
            self.trainer.momentum_saturation_epoch.to_string(),
        );
        kv("trainer.patience_epochs", self.trainer.patience_epochs.to_string());
        kv("trainer.max_epochs", self.trainer.max_epochs.to_string());
        kv("trainer.per_class_object", self.sampling.per_class_object.to_string());
        kv(
            "trainer.per_class_separator",
            self.sampling.per_class_separator.to_string(),
        );
        kv(
            "trainer.heldout_per_class_object",
            self.sampling.heldout_per_class_object.to_string(),
        );
        kv(
            "trainer.heldout_per_class_separator",
            self.sampling.heldout_per_class_separator.to_string(),
        );
        kv("trainer.heldout_fraction", self.sampling.heldout_fraction.to_string());
        kv(
            "trainer.separator_rotations",
            self.sampling.separator_rotations.to_string(),
        );
        kv("synth.images", self.synth.params.images.to_string());
        kv("synth.benign", self.synth.params.benign.to_string());
        kv("synth.min_size", self.synth.params.min_size.to_string());
        kv("synth.max_size", self.synth.params.max_size.to_string());
        kv("synth.min_glands", self.synth.params.min_glands.to_string());
        kv("synth.max_glands", self.synth.params.max_glands.to_string());
        kv("synth.min_radius", self.synth.params.min_radius.to_string());
        kv("synth.max_radius", self.synth.params.max_radius.to_string());
        kv(
            "synth.touching_fraction",
            self.synth.params.touching_fraction.to_string(),
        );
        kv(
            "synth.separator_distance",
            self.synth.params.separator_distance.to_string(),
        );
        kv(
            "synth.malignant_speckle",
            self.synth.params.malignant_speckle.to_string(),
        );
        let fmt_list =
            |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        kv("gridsearch.alpha", fmt_list(&self.grid.alpha));
        kv("gridsearch.beta", fmt_list(&self.grid.beta));
        kv("gridsearch.lambda", fmt_list(&self.grid.lambda));
        kv("seed", self.seed.to_string());
        kv("jobs", self.jobs.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_published_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.fusion.rho, 1.0);
        assert_eq!(c.fusion.tau, 0.65);
        assert_eq!(c.edge.alpha, 10.0);
        assert_eq!(c.edge.beta, 0.95);
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.min_area, 500);
        assert_eq!(c.trainer.eta0, 0.0025);
        assert_eq!(c.trainer.minibatch_size, 200);
    }

    #[test]
    fn text_round_trips_through_the_parser() {
        let mut c = PipelineConfig::default();
        c.fusion.rho = 0.25;
        c.grid.alpha = vec![1.0, 2.0];
        let text = c.resolved_text();
        let mut parsed = PipelineConfig::default();
        // resolved text writes "-" for unset paths, which the parser reads
        // literally; strip those lines first
        let text: String = text
            .lines()
            .filter(|l| !l.ends_with("= -"))
            .map(|l| format!("{l}\n"))
            .collect();
        parsed.apply_text(&text, Path::new("inline")).unwrap();
        assert_eq!(parsed.fusion.rho, 0.25);
        assert_eq!(parsed.grid.alpha, vec![1.0, 2.0]);
        assert_eq!(parsed.trainer, c.trainer);
    }

    #[test]
    fn unknown_keys_are_errors_with_line_numbers() {
        let mut c = PipelineConfig::default();
        let err = c
            .apply_text("fusion.rho = 0.5\nnot.a.key = 1\n", Path::new("x.conf"))
            .unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 2),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn default_grid_is_5_by_4_by_5_within_ranges() {
        let g = GridSearchSpec::default();
        assert_eq!((g.alpha.len(), g.beta.len(), g.lambda.len()), (5, 4, 5));
        assert!((g.alpha[0] - 0.5).abs() < 1e-12 && (g.alpha[4] - 15.0).abs() < 1e-9);
        assert!((g.beta[0] - 0.35).abs() < 1e-12 && (g.beta[3] - 0.95).abs() < 1e-12);
        assert!((g.lambda[0] - 0.01).abs() < 1e-12 && (g.lambda[4] - 10.0).abs() < 1e-9);
    }
}
