//! Experiment description read from a TOML file.
//!
//! ```toml
//! seed = 7
//! epochs = 10
//! batch_size = 64
//! out = "results"
//!
//! [model]
//! kind = "cnn"            # quadratic | rosenbrock | softmax | mlp | cnn
//!
//! [data]
//! source = "cifar"        # cifar | synth-images | blobs
//! dir = "data/cifar-10-batches-bin"
//! variant = "c10"
//! per_class = 500
//!
//! [lr]
//! eta0 = 0.001
//!
//! [opt]
//! kind = ["sgd", "momentum", "adam", "rmsprop", "nrsgd", "iagd"]
//! w = 0.9
//! ```

use std::path::{Path, PathBuf};

use gradlab::data::CifarVariant;
use gradlab::models::CnnConfig;
use gradlab::optim::{AdamParams, MomentumParams, RmspropParams};
use gradlab::{Error, GuardPolicy, LrSchedule, OptimizerConfig, OptimizerKind, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Stop a run after this many epochs without a validation-accuracy
    /// improvement. Off when absent.
    #[serde(default)]
    pub early_stopping: Option<usize>,
    /// Train the optimizers on separate threads.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub lr: LrSchedule,
    #[serde(default)]
    pub guard: GuardPolicy,
    #[serde(default)]
    pub iagd: IagdSpec,
    #[serde(default)]
    pub opt: OptSpec,
}

fn default_seed() -> u64 {
    7
}

fn default_epochs() -> usize {
    10
}

fn default_batch_size() -> usize {
    64
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Quadratic,
    Rosenbrock,
    Softmax,
    Mlp,
    Cnn,
}

impl ModelKind {
    pub fn is_analytic(self) -> bool {
        matches!(self, ModelKind::Quadratic | ModelKind::Rosenbrock)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Quadratic bowl dimension.
    pub dim: usize,
    /// Full-gradient steps per epoch for the analytic functions.
    pub steps_per_epoch: usize,
    /// Hidden layer widths of the MLP.
    pub hidden: Vec<usize>,
    /// CNN layer sizes; `input` and `classes` are taken from the data.
    pub cnn: CnnConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Cnn,
            dim: 2,
            steps_per_epoch: 10,
            hidden: vec![64],
            cnn: CnnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Cifar,
    SynthImages,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub source: DataSource,
    pub dir: PathBuf,
    pub variant: CifarVariant,
    /// Training samples kept per class (before the validation split).
    /// `None` keeps everything; synthetic sources require it.
    pub per_class: Option<usize>,
    /// Test samples per class. `None` keeps the whole CIFAR test set; the
    /// synthetic sources default to 100.
    pub test_per_class: Option<usize>,
    pub val_ratio: f64,
    /// Class count of the synthetic sources.
    pub classes: usize,
    /// Feature count of `blobs`.
    pub dim: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            source: DataSource::Cifar,
            dir: PathBuf::from("data/cifar-10-batches-bin"),
            variant: CifarVariant::C10,
            per_class: Some(500),
            test_per_class: None,
            val_ratio: 0.1,
            classes: 10,
            dim: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IagdSpec {
    pub every_other: bool,
}

/// One optimizer kind or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KindList {
    One(OptimizerKind),
    Many(Vec<OptimizerKind>),
}

impl KindList {
    pub fn kinds(&self) -> Vec<OptimizerKind> {
        match self {
            KindList::One(k) => vec![*k],
            KindList::Many(ks) => ks.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptSpec {
    pub kind: KindList,
    pub w: f64,
    /// NRSGD noise seed; the run seed when absent.
    pub seed: Option<u64>,
    pub momentum: MomentumParams,
    pub adam: AdamParams,
    pub rmsprop: RmspropParams,
}

impl Default for OptSpec {
    fn default() -> Self {
        OptSpec {
            kind: KindList::Many(OptimizerKind::ALL.to_vec()),
            w: 0.9,
            seed: None,
            momentum: MomentumParams::default(),
            adam: AdamParams::default(),
            rmsprop: RmspropParams::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn kinds(&self) -> Vec<OptimizerKind> {
        self.opt.kind.kinds()
    }

    pub fn optimizer_config(&self, kind: OptimizerKind) -> OptimizerConfig {
        OptimizerConfig {
            kind,
            w: self.opt.w,
            seed: self.opt.seed.unwrap_or(self.seed),
            schedule: self.lr,
            guard: self.guard,
            every_other: self.iagd.every_other,
            momentum: self.opt.momentum,
            adam: self.opt.adam,
            rmsprop: self.opt.rmsprop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        let kinds = self.kinds();
        if kinds.is_empty() {
            return bad("at least one optimizer is required");
        }
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(Error::Config(format!("optimizer {k} listed twice")));
            }
            self.optimizer_config(*k).validate()?;
        }
        if self.early_stopping == Some(0) {
            return bad("early_stopping patience must be >= 1");
        }
        if self.model.kind.is_analytic() {
            if self.model.steps_per_epoch == 0 {
                return bad("model.steps_per_epoch must be >= 1");
            }
            if self.model.kind == ModelKind::Quadratic && self.model.dim == 0 {
                return bad("model.dim must be >= 1");
            }
            return Ok(());
        }
        if !(self.data.val_ratio > 0.0 && self.data.val_ratio < 1.0) {
            return bad("data.val_ratio must lie in (0, 1)");
        }
        if self.data.per_class == Some(0) || self.data.test_per_class == Some(0) {
            return bad("per-class counts must be >= 1");
        }
        match self.data.source {
            DataSource::Cifar => {}
            DataSource::SynthImages | DataSource::Blobs => {
                if self.data.per_class.is_none() {
                    return bad("synthetic data needs data.per_class");
                }
                if self.data.classes < 2 {
                    return bad("data.classes must be >= 2");
                }
            }
        }
        if self.data.source == DataSource::Blobs && self.model.kind == ModelKind::Cnn {
            return bad("the cnn model needs image data (cifar or synth-images)");
        }
        Ok(())
    }
}
