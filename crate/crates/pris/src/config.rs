//! TOML run configuration.
//!
//! ```toml
//! [seeds]
//! init = 1          # parameter initialisation
//! train = 2         # data order, crops, latents, attack noise
//! eval = 3          # evaluation latents and noise
//!
//! [model]
//! blocks = 8
//! pre_enhance = true
//! post_enhance = true
//! domain = "spatial"             # or "frequency"
//! subnet = { growth = 32, hidden_layers = 4 }
//! enhancer = { growth = 32, hidden_layers = 4 }
//!
//! [train]
//! three_step = true              # false: one joint step
//! epochs = [50, 50, 50]
//! lr = [3.16e-5, 3.16e-5, 3.16e-6]
//! lr_half_period = 200
//! batch_size = 4
//! lambda_c = 1.0
//! lambda_s = 1.0
//! grad_mode = "gaf"              # "zero", "one" or "gaf"
//! per_attack_enhancers = false   # level 3: fine-tune one enhancer set per attack
//! per_attack_models = false      # levels 1-2: one full model per attack
//!
//! [data]
//! train_dir = "data/train"
//! test_dir = "data/test"
//! crop = 64
//!
//! [attacks]
//! train = ["identity", "round"]  # labels, or tables like { kind = "gaussian", sigma = 10 }
//! eval = ["identity", "gauss10", "round"]
//!
//! [output]
//! dir = "runs/example"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use pris_core::distortion::{DistortionSpec, GradMode, STANDARD_LABELS};
use pris_core::model::ModelConfig;
use pris_core::optim::AdamConfig;
use pris_core::training::{LossWeights, Schedule, TrainPlan};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "PRIS_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    pub data: DataSection,
    #[serde(default)]
    pub attacks: AttackSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub init: u64,
    pub train: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { init: 1, train: 2, eval: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub three_step: bool,
    pub epochs: [usize; 3],
    pub lr: [f64; 3],
    pub lr_half_period: usize,
    pub batch_size: usize,
    pub adam_betas: [f64; 2],
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_z: f64,
    /// Backward rule for every rounding in attacks given by label.
    pub grad_mode: GradMode,
    pub per_attack_enhancers: bool,
    /// Epochs of per-attack enhancer fine-tuning; defaults to `epochs[1]`.
    pub finetune_epochs: Option<usize>,
    pub per_attack_models: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let s = Schedule::default();
        let w = LossWeights::default();
        Self {
            three_step: true,
            epochs: s.epochs,
            lr: [10f64.powf(-4.5), 10f64.powf(-4.5), 10f64.powf(-5.5)],
            lr_half_period: s.lr_half_period,
            batch_size: 4,
            adam_betas: [0.9, 0.99],
            lambda_c: w.lambda_c.into(),
            lambda_s: w.lambda_s.into(),
            lambda_z: w.lambda_z.into(),
            grad_mode: GradMode::Gaf,
            per_attack_enhancers: false,
            finetune_epochs: None,
            per_attack_models: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train_dir: PathBuf,
    #[serde(default)]
    pub test_dir: Option<PathBuf>,
    #[serde(default = "default_crop")]
    pub crop: usize,
}

fn default_crop() -> usize {
    64
}

/// An attack given by label (`"gauss10"`) or spelled out as a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttackEntry {
    Label(String),
    Spec(DistortionSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub train: Vec<AttackEntry>,
    pub eval: Vec<String>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            train: vec![AttackEntry::Label("identity".into()), AttackEntry::Label("round".into())],
            eval: STANDARD_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/default") }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read, resolve relative paths against the file's directory, apply the
    /// seed override from the environment and validate.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = std::path::absolute(base).map_err(|e| CliError::io(base, e))?;
        cfg.resolve_paths(&base);
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.override_seed(&v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.train_dir);
        if let Some(t) = self.data.test_dir.as_mut() {
            fix(t);
        }
        fix(&mut self.output.dir);
    }

    /// Replace every seed with the value of `PRIS_SEED`.
    pub fn override_seed(&mut self, value: &str) -> CliResult<()> {
        let seed: u64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={value:?} is not an unsigned integer")))?;
        self.seeds = Seeds { init: seed, train: seed, eval: seed };
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        if self.seeds.init > i64::MAX as u64 || self.seeds.train > i64::MAX as u64 || self.seeds.eval > i64::MAX as u64 {
            return Err(CliError::Config("seeds must fit in a signed 64-bit integer".into()));
        }
        self.train_attacks()?;
        self.eval_attacks()?;
        let t = &self.train;
        if t.lr_half_period == 0 {
            return Err(CliError::Config("train.lr_half_period must be at least 1".into()));
        }
        if t.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(CliError::Config(format!("train.adam_betas must lie in [0, 1), got {:?}", t.adam_betas)));
        }
        if t.per_attack_enhancers && t.per_attack_models {
            return Err(CliError::Config(
                "per_attack_enhancers and per_attack_models are mutually exclusive".into(),
            ));
        }
        if t.per_attack_enhancers && !self.model.has_enhancers() {
            return Err(CliError::Config("per_attack_enhancers needs enhancers enabled in [model]".into()));
        }
        if !self.data.crop.is_multiple_of(imageio_multiple()) {
            return Err(CliError::Config(format!(
                "data.crop must be a multiple of {}, got {}",
                imageio_multiple(),
                self.data.crop
            )));
        }
        self.plan_for(self.train_attacks()?)?.validate()?;
        Ok(())
    }

    pub fn train_attacks(&self) -> CliResult<Vec<DistortionSpec>> {
        if self.attacks.train.is_empty() {
            return Err(CliError::Config("attacks.train is empty".into()));
        }
        self.attacks
            .train
            .iter()
            .map(|a| match a {
                AttackEntry::Label(l) => Ok(DistortionSpec::from_label(l)?.with_grad_mode(self.train.grad_mode)),
                AttackEntry::Spec(s) => {
                    s.validate().map_err(|e| CliError::Config(format!("attack {s}: {e}")))?;
                    Ok(*s)
                }
            })
            .collect()
    }

    pub fn eval_attacks(&self) -> CliResult<Vec<DistortionSpec>> {
        parse_labels(&self.attacks.eval)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            epochs: self.train.epochs,
            lr: self.train.lr.map(|v| v as f32),
            lr_half_period: self.train.lr_half_period,
        }
    }

    /// Main training plan over `attacks`.
    pub fn plan_for(&self, attacks: Vec<DistortionSpec>) -> CliResult<TrainPlan> {
        let t = &self.train;
        let mut plan = if t.three_step {
            TrainPlan::three_step(self.schedule(), attacks)
        } else {
            TrainPlan::joint(self.schedule(), attacks)
        };
        plan.weights = LossWeights {
            lambda_c: t.lambda_c as f32,
            lambda_s: t.lambda_s as f32,
            lambda_z: t.lambda_z as f32,
        };
        plan.adam = AdamConfig {
            beta1: t.adam_betas[0] as f32,
            beta2: t.adam_betas[1] as f32,
            ..AdamConfig::default()
        };
        plan.batch_size = t.batch_size;
        plan.crop = self.data.crop;
        plan.seed = self.seeds.train;
        Ok(plan)
    }

    /// Enhancer fine-tuning plan for one attack's set.
    pub fn finetune_plan(&self, attack: DistortionSpec) -> CliResult<TrainPlan> {
        let mut schedule = self.schedule();
        schedule.epochs[1] = self.train.finetune_epochs.unwrap_or(schedule.epochs[1]);
        let base = self.plan_for(vec![attack])?;
        let label = attack.label();
        let mut plan = TrainPlan::enhancers_only(schedule, attack, &label);
        plan.weights = base.weights;
        plan.adam = base.adam;
        plan.batch_size = base.batch_size;
        plan.crop = base.crop;
        plan.seed = base.seed;
        Ok(plan)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialise config: {e}")))
    }
}

fn imageio_multiple() -> usize {
    crate::imageio::SIZE_MULTIPLE
}

/// Parse attack labels, rejecting unknown ones.
pub fn parse_labels<S: AsRef<str>>(labels: &[S]) -> CliResult<Vec<DistortionSpec>> {
    if labels.is_empty() {
        return Err(CliError::Config("no attack labels given".into()));
    }
    labels
        .iter()
        .map(|l| Ok(DistortionSpec::from_label(l.as_ref().trim())?))
        .collect()
}
