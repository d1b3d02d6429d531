//! Experiment configuration files.
//!
//! A config is TOML, so nested keys can be written either as tables or as
//! dotted keys (`select.k = 300`). Everything has a default except the
//! environment, the mode and the master seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Env, ENV_IDS};
use crate::finetune::FinetuneConfig;
use crate::offline::{Arch, DataConfig, OfflineConfig};
use crate::scoring::{ScoreParams, DEFAULT_TAU};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Candidates, UCB selection and the baselines.
    Select,
    /// Candidates and fine-tuning of the worst one.
    Finetune,
    /// Candidates and a fixed number of evaluation episodes per candidate.
    Eval,
    /// All of the above.
    Full,
}

impl Mode {
    pub fn selects(self) -> bool {
        matches!(self, Mode::Select | Mode::Full)
    }

    pub fn finetunes(self) -> bool {
        matches!(self, Mode::Finetune | Mode::Full)
    }

    pub fn evaluates(self) -> bool {
        matches!(self, Mode::Eval | Mode::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchName {
    Tabular,
    Mlp,
}

/// Overrides of the per-environment score parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub tau: Option<f64>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub epsilon: f64,
    pub steps: usize,
    /// Train on this dataset file instead of collecting one.
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DataConfig::default();
        Self {
            epsilon: d.epsilon,
            steps: d.n_steps,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambdas: Vec<f64>,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub target_refresh: u64,
    /// Defaults to tabular on finite environments and MLP otherwise.
    pub arch: Option<ArchName>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let o = OfflineConfig::default();
        Self {
            lambdas: vec![0.0, 1.0, 5.0, 10.0, 100.0],
            epochs: o.epochs,
            minibatch: o.minibatch,
            lr: o.lr,
            target_refresh: o.target_refresh,
            arch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub k: u64,
    pub beta: f64,
    /// Window for the "last iterations" summary.
    pub last: usize,
}

impl Default for SelectSection {
    fn default() -> Self {
        Self {
            k: 100,
            beta: 1.0,
            last: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub k: u64,
    pub tau: f64,
    pub delta: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub bc_weight: f64,
    pub replay: bool,
    /// Window for the first/last comparison in the summary.
    pub window: usize,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let f = FinetuneConfig::default();
        Self {
            k: f.k_iters,
            tau: f.tau,
            delta: f.delta,
            epochs: f.epochs,
            minibatch: f.minibatch,
            lr: f.lr,
            bc_weight: f.bc_weight,
            replay: f.replay,
            window: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub save_models: bool,
    pub save_datasets: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            save_models: false,
            save_datasets: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u64,
    #[serde(default)]
    pub score: ScoreSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainSection,
    pub select: Option<SelectSection>,
    pub finetune: Option<FinetuneSection>,
    pub eval: Option<EvalSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_repetitions() -> u64 {
    5
}

impl ExperimentConfig {
    /// Defaults for `env` in `mode`, with the blocks that mode uses filled in.
    pub fn new(env: &str, mode: Mode, seed: u64) -> Self {
        Self {
            env: env.to_string(),
            mode,
            seed,
            repetitions: default_repetitions(),
            score: ScoreSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            select: mode.selects().then(SelectSection::default),
            finetune: mode.finetunes().then(FinetuneSection::default),
            eval: mode.evaluates().then(EvalSection::default),
            output: OutputSection::default(),
        }
    }

    /// Parses and validates. Blocks the mode uses but the text leaves out get
    /// their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.mode.selects() {
            cfg.select.get_or_insert_with(SelectSection::default);
        }
        if cfg.mode.finetunes() {
            cfg.finetune.get_or_insert_with(FinetuneSection::default);
        }
        if cfg.mode.evaluates() {
            cfg.eval.get_or_insert_with(EvalSection::default);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::persist::read_text(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    /// SHA-256 of the canonical TOML, leaving out where the run is written.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output.dir = OutputSection::default().dir;
        Ok(hex(&Sha256::digest(c.to_toml_string()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !ENV_IDS.contains(&self.env.as_str()) {
            return bad(format!("unknown env `{}` (expected one of {})", self.env, ENV_IDS.join(", ")));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if i64::try_from(self.seed).is_err() {
            return bad(format!("seed {} does not fit a TOML integer (max {})", self.seed, i64::MAX));
        }
        let blocks = [
            ("select", self.select.is_some(), self.mode.selects()),
            ("finetune", self.finetune.is_some(), self.mode.finetunes()),
            ("eval", self.eval.is_some(), self.mode.evaluates()),
        ];
        for (name, present, used) in blocks {
            if present && !used {
                return bad(format!("[{name}] block does not apply to mode `{}`", self.mode_name()));
            }
        }
        if self.train.lambdas.is_empty() || self.train.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("train.lambdas must be a nonempty list of finite values >= 0".into());
        }
        if let Some(p) = &self.data.path {
            if !p.exists() {
                return bad(format!("data.path {} does not exist", p.display()));
            }
        }
        let env = Env::from_id(&self.env)?;
        if self.train.arch == Some(ArchName::Tabular) && !env.is_discrete() {
            return bad(format!("`{}` has continuous actions and needs train.arch = \"mlp\"", self.env));
        }
        self.score_params(&env)?;
        self.offline_template(&env)?;
        if let Some(s) = &self.select {
            if s.k == 0 || !(s.beta >= 0.0) || s.last == 0 {
                return bad("select needs k >= 1, beta >= 0 and last >= 1".into());
            }
        }
        if let Some(f) = &self.finetune {
            self.finetune_config_from(f).validate()?;
            if f.k == 0 || f.window == 0 {
                return bad("finetune needs k >= 1 and window >= 1".into());
            }
        }
        if let Some(e) = &self.eval {
            if e.episodes == 0 {
                return bad("eval.episodes must be at least 1".into());
            }
        }
        Ok(())
    }

    fn mode_name(&self) -> &'static str {
        match self.mode {
            Mode::Select => "select",
            Mode::Finetune => "finetune",
            Mode::Eval => "eval",
            Mode::Full => "full",
        }
    }

    pub fn score_params(&self, env: &Env) -> Result<ScoreParams> {
        let d = ScoreParams::for_env(env);
        ScoreParams::new(
            self.score.alpha1.unwrap_or(d.alpha1),
            self.score.alpha2.unwrap_or(d.alpha2),
            self.score.tau.unwrap_or(DEFAULT_TAU),
            self.score.horizon.unwrap_or(d.horizon),
        )
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            epsilon: self.data.epsilon,
            n_steps: self.data.steps,
        }
    }

    pub fn offline_template(&self, env: &Env) -> Result<OfflineConfig> {
        let arch = match self.train.arch {
            Some(ArchName::Tabular) => Arch::Tabular,
            Some(ArchName::Mlp) => Arch::Mlp,
            None if env.is_discrete() => Arch::Tabular,
            None => Arch::Mlp,
        };
        if !(0.0..=1.0).contains(&self.data.epsilon) || self.data.steps == 0 {
            return Err(Error::Config("data needs 0 <= epsilon <= 1 and steps >= 1".into()));
        }
        if self.train.epochs == 0 || self.train.minibatch == 0 || self.train.target_refresh == 0 || !(self.train.lr >= 0.0) {
            return Err(Error::Config(
                "train needs positive epochs, minibatch and target_refresh, and lr >= 0".into(),
            ));
        }
        Ok(OfflineConfig {
            lambda: 0.0,
            epochs: self.train.epochs,
            minibatch: self.train.minibatch,
            lr: self.train.lr,
            target_refresh: self.train.target_refresh,
            arch,
            seed: 0,
        })
    }

    fn finetune_config_from(&self, f: &FinetuneSection) -> FinetuneConfig {
        FinetuneConfig {
            tau: f.tau,
            delta: f.delta,
            epochs: f.epochs,
            minibatch: f.minibatch,
            lr: f.lr,
            k_iters: f.k,
            bc_weight: f.bc_weight,
            replay: f.replay,
            ..FinetuneConfig::default()
        }
    }

    pub fn finetune_config(&self) -> Option<FinetuneConfig> {
        self.finetune.as_ref().map(|f| self.finetune_config_from(f))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
