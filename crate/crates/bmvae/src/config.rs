//! Run configuration: one TOML file drives a whole experiment.
//!
//! Every section except `seed`, `output_dir`, `dataset`, and `graph` has
//! defaults. Unknown keys are rejected everywhere, so typos fail the parse
//! instead of silently running with defaults. A run's only randomness
//! source is the single `seed`; per-purpose generators are derived from it.
//!
//! ```toml
//! seed = 42
//! output_dir = "runs/demo"
//!
//! [dataset]
//! source = "synth"        # or "idx" with images/labels paths
//! num_images = 2000
//! side = 16
//!
//! [graph]
//! kind = "random_regular" # complete | grid | random_regular
//! num_spins = 16
//! degree = 3
//!
//! [model]
//! hidden = [64]
//!
//! [training]
//! mode = "boltzmann_prior" # or "gaussian_prior"
//! epochs = 30
//!
//! [mode1]                  # equilibrium sampler
//! beta = 1.0
//!
//! [mode2]                  # annealed sampler
//! steps = 20
//!
//! [mode3]                  # annealed + conditioning
//! gamma = 1.0
//! ```

use crate::dataset::{load_idx, synth_dataset, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::sampler::{geometric_schedule, SamplerSpec};
use crate::training::{ModelSpec, TrainMode, TrainingConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Lowercase hex SHA-256, used to fingerprint config files in manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").unwrap();
    }
    hex
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub graph: GraphSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub mode1: Mode1Section,
    #[serde(default)]
    pub mode2: ScheduleSection,
    #[serde(default)]
    pub mode3: Mode3Section,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// `synth` or `idx`.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_images: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `complete`, `grid`, or `random_regular`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_spins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden: default_hidden() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// `boltzmann_prior` or `gaussian_prior`.
    pub mode: String,
    pub lambda: f64,
    pub learning_rate: f64,
    pub prior_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negative_samples_per_step: usize,
    pub negative_burn_in_sweeps: usize,
    pub negative_thinning_sweeps: usize,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let base = TrainingConfig::new(0);
        Self {
            mode: "boltzmann_prior".into(),
            lambda: base.lambda,
            learning_rate: base.learning_rate,
            prior_learning_rate: base.prior_learning_rate,
            adam_beta1: base.adam_betas.0,
            adam_beta2: base.adam_betas.1,
            batch_size: base.batch_size,
            epochs: base.epochs,
            negative_samples_per_step: base.negative_samples_per_step,
            negative_burn_in_sweeps: base.prior_sampler.burn_in_sweeps,
            negative_thinning_sweeps: base.prior_sampler.thinning_sweeps,
            checkpoint_every: 0,
        }
    }
}

/// Settings of the equilibrium sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mode1Section {
    pub beta: f64,
    pub burn_in_sweeps: usize,
    pub thinning_sweeps: usize,
}

impl Default for Mode1Section {
    fn default() -> Self {
        let base = SamplerSpec::mode1(1, 0);
        Self {
            beta: base.beta,
            burn_in_sweeps: base.burn_in_sweeps,
            thinning_sweeps: base.thinning_sweeps,
        }
    }
}

/// Settings of the annealed sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: usize,
    pub sweeps_per_step: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { beta_start: 0.2, beta_end: 5.0, steps: 20, sweeps_per_step: 10 }
    }
}

/// Annealed sampler plus the default conditioning strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mode3Section {
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: usize,
    pub sweeps_per_step: usize,
    pub gamma: f64,
}

impl Default for Mode3Section {
    fn default() -> Self {
        let s = ScheduleSection::default();
        Self {
            beta_start: s.beta_start,
            beta_end: s.beta_end,
            steps: s.steps,
            sweeps_per_step: s.sweeps_per_step,
            gamma: 1.0,
        }
    }
}

fn required<T: Copy>(value: Option<T>, key: &str, context: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{context} requires `{key}`")))
}

fn forbidden<T>(value: &Option<T>, key: &str, context: &str) -> Result<()> {
    match value {
        Some(_) => Err(Error::Config(format!("`{key}` is not a setting of {context}"))),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        // fail early on structurally valid but semantically broken sections
        config.graph_spec()?;
        config.train_mode()?;
        config.dataset_spec()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("a config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_at(path, e))?;
        Self::from_toml(&text)
    }

    pub fn graph_spec(&self) -> Result<GraphSpec> {
        let g = &self.graph;
        let context = format!("graph kind {:?}", g.kind);
        match g.kind.as_str() {
            "complete" => {
                forbidden(&g.rows, "rows", &context)?;
                forbidden(&g.cols, "cols", &context)?;
                forbidden(&g.degree, "degree", &context)?;
                Ok(GraphSpec::Complete { num_spins: required(g.num_spins, "num_spins", &context)? })
            }
            "grid" => {
                forbidden(&g.num_spins, "num_spins", &context)?;
                forbidden(&g.degree, "degree", &context)?;
                Ok(GraphSpec::Grid {
                    rows: required(g.rows, "rows", &context)?,
                    cols: required(g.cols, "cols", &context)?,
                })
            }
            "random_regular" => {
                forbidden(&g.rows, "rows", &context)?;
                forbidden(&g.cols, "cols", &context)?;
                Ok(GraphSpec::RandomRegular {
                    num_spins: required(g.num_spins, "num_spins", &context)?,
                    degree: required(g.degree, "degree", &context)?,
                    seed: self.seed,
                })
            }
            other => Err(Error::Config(format!(
                "unknown graph kind {other:?} (choose complete, grid, or random_regular)"
            ))),
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(ModelSpec { graph: self.graph_spec()?, hidden: self.model.hidden.clone() })
    }

    pub fn train_mode(&self) -> Result<TrainMode> {
        match self.training.mode.as_str() {
            "boltzmann_prior" => Ok(TrainMode::BoltzmannPrior),
            "gaussian_prior" => Ok(TrainMode::GaussianPrior),
            other => Err(Error::Config(format!(
                "unknown training mode {other:?} (choose boltzmann_prior or gaussian_prior)"
            ))),
        }
    }

    fn dataset_spec(&self) -> Result<Option<SynthSpec>> {
        let d = &self.dataset;
        let context = format!("dataset source {:?}", d.source);
        match d.source.as_str() {
            "synth" => {
                forbidden(&d.images, "images", &context)?;
                forbidden(&d.labels, "labels", &context)?;
                let mut spec = SynthSpec::new(
                    required(d.num_images, "num_images", &context)?,
                    required(d.side, "side", &context)?,
                    self.seed,
                );
                if let Some(p) = d.attr_probability {
                    spec.attr_probability = p;
                }
                Ok(Some(spec))
            }
            "idx" => {
                forbidden(&d.num_images, "num_images", &context)?;
                forbidden(&d.side, "side", &context)?;
                forbidden(&d.attr_probability, "attr_probability", &context)?;
                if d.images.is_none() || d.labels.is_none() {
                    return Err(Error::Config(format!("{context} requires `images` and `labels`")));
                }
                Ok(None)
            }
            other => {
                Err(Error::Config(format!("unknown dataset source {other:?} (choose synth or idx)")))
            }
        }
    }

    /// Builds or loads the dataset this config describes.
    pub fn dataset(&self) -> Result<Dataset> {
        match self.dataset_spec()? {
            Some(synth) => synth_dataset(&synth),
            None => load_idx(
                self.dataset.images.as_ref().unwrap(),
                self.dataset.labels.as_ref().unwrap(),
            ),
        }
    }

    /// Training settings with the run seed threaded through.
    pub fn training_config(&self) -> Result<TrainingConfig> {
        let t = &self.training;
        let mut negatives = SamplerSpec::mode1(t.negative_samples_per_step, self.seed);
        negatives.beta = self.mode1.beta;
        negatives.burn_in_sweeps = t.negative_burn_in_sweeps;
        negatives.thinning_sweeps = t.negative_thinning_sweeps;
        Ok(TrainingConfig {
            lambda: t.lambda,
            learning_rate: t.learning_rate,
            prior_learning_rate: t.prior_learning_rate,
            adam_betas: (t.adam_beta1, t.adam_beta2),
            batch_size: t.batch_size,
            epochs: t.epochs,
            prior_sampler: negatives,
            negative_samples_per_step: t.negative_samples_per_step,
            seed: self.seed,
        })
    }

    /// Equilibrium sampler (burn-in then thinned draws at fixed beta).
    pub fn mode1_spec(&self, num_samples: usize, seed: u64) -> SamplerSpec {
        let mut spec = SamplerSpec::mode1(num_samples, seed);
        spec.beta = self.mode1.beta;
        spec.burn_in_sweeps = self.mode1.burn_in_sweeps;
        spec.thinning_sweeps = self.mode1.thinning_sweeps;
        spec
    }

    /// Annealed sampler following the configured geometric schedule.
    pub fn mode2_spec(&self, num_samples: usize, seed: u64) -> SamplerSpec {
        let s = &self.mode2;
        annealed_spec(s.beta_start, s.beta_end, s.steps, s.sweeps_per_step, num_samples, seed)
    }

    /// Annealed sampler for conditioned generation; the bias field is
    /// attached later, once attribute profiles are known.
    pub fn mode3_spec(&self, num_samples: usize, seed: u64) -> SamplerSpec {
        let s = &self.mode3;
        annealed_spec(s.beta_start, s.beta_end, s.steps, s.sweeps_per_step, num_samples, seed)
    }
}

fn annealed_spec(
    beta_start: f64,
    beta_end: f64,
    steps: usize,
    sweeps_per_step: usize,
    num_samples: usize,
    seed: u64,
) -> SamplerSpec {
    let schedule = geometric_schedule(beta_start, beta_end, steps);
    let mut spec = SamplerSpec::mode2(num_samples, seed);
    spec.beta = *schedule.last().unwrap();
    spec.schedule = Some(schedule);
    spec.sweeps_per_step = sweeps_per_step;
    spec
}
