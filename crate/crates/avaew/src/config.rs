//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default, unknown keys are rejected, and [`ExperimentConfig::to_text`]
//! writes every key so a config file (or a metrics header) fully describes
//! a run. Relative paths are taken relative to the working directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use avaew_core::avaew::LossWeights;
use avaew_core::backbones::BackboneKind;

use crate::data::DatasetFormat;
use crate::{Error, Result};

/// When warm-up embeddings are written into the item table during the warm
/// phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regenerate {
    /// Once, before warm-a.
    First,
    /// At the start of every phase, overwriting what the previous phase
    /// learned for new items.
    Every,
}

impl Regenerate {
    pub fn as_str(self) -> &'static str {
        match self {
            Regenerate::First => "first",
            Regenerate::Every => "every",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    Mean,
    Sample,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::Mean => "mean",
            SamplingMode::Sample => "sample",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub format: DatasetFormat,
    pub data_dir: PathBuf,
    pub cache: PathBuf,
    pub n: usize,
    pub k: usize,

    pub backbone: BackboneKind,
    pub embedding_dim: usize,
    pub hidden_units: usize,
    pub latent_dim: usize,

    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub pretrain_epochs: usize,
    pub warmup_epochs: usize,
    pub phase_epochs: usize,
    pub disc_steps: usize,

    /// Loss weights; the enable flags come from the `ablation.*` keys.
    pub weights: LossWeights,
    pub regenerate: Regenerate,
    pub sampling: SamplingMode,
    /// Keep training the generator on warm-phase data.
    pub finetune_generator: bool,
    /// Keep training the discriminator on warm-phase data.
    pub finetune_discriminator: bool,

    pub ablation_backbones: Vec<BackboneKind>,

    pub out_dir: PathBuf,
    pub run_id: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format: DatasetFormat::Ml1m,
            data_dir: PathBuf::from("data/ml-1m"),
            cache: PathBuf::from("data/ml-1m.cache"),
            n: 200,
            k: 20,
            backbone: BackboneKind::DeepFm,
            embedding_dim: 16,
            hidden_units: 16,
            latent_dim: 16,
            seed: 42,
            lr: 0.001,
            batch_size: 2048,
            eval_batch_size: 8192,
            pretrain_epochs: 2,
            warmup_epochs: 2,
            phase_epochs: 1,
            disc_steps: 1,
            weights: LossWeights::default(),
            regenerate: Regenerate::Every,
            sampling: SamplingMode::Mean,
            finetune_generator: true,
            finetune_discriminator: false,
            ablation_backbones: vec![BackboneKind::DeepFm],
            out_dir: PathBuf::from("runs/default"),
            run_id: "default".into(),
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("`{key}`: expected {want}, got `{value}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "a number"))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

fn backbone(key: &str, value: &str) -> Result<BackboneKind> {
    value.parse().map_err(|_| bad(key, value, "fm, deepfm or ipnn"))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "dataset.format" => {
                self.format = DatasetFormat::parse(v).ok_or_else(|| bad(key, v, "ml1m, ml25m or taobao"))?
            }
            "dataset.path" => self.data_dir = PathBuf::from(v),
            "dataset.cache" => self.cache = PathBuf::from(v),
            "dataset.n" => self.n = num(key, v)?,
            "dataset.k" => self.k = num(key, v)?,
            "model.backbone" => self.backbone = backbone(key, v)?,
            "model.embedding_dim" => self.embedding_dim = num(key, v)?,
            "model.hidden_units" => self.hidden_units = num(key, v)?,
            "model.latent_dim" => self.latent_dim = num(key, v)?,
            "train.seed" => self.seed = num(key, v)?,
            "train.lr" => self.lr = num(key, v)?,
            "train.batch_size" => self.batch_size = num(key, v)?,
            "train.eval_batch_size" => self.eval_batch_size = num(key, v)?,
            "train.pretrain_epochs" => self.pretrain_epochs = num(key, v)?,
            "train.warmup_epochs" => self.warmup_epochs = num(key, v)?,
            "train.phase_epochs" => self.phase_epochs = num(key, v)?,
            "train.disc_steps_per_gen_step" => self.disc_steps = num(key, v)?,
            "warmup.alpha" => self.weights.alpha = num(key, v)?,
            "warmup.beta" => self.weights.beta = num(key, v)?,
            "warmup.xi" => self.weights.xi = num(key, v)?,
            "warmup.xi_pair" => self.weights.xi_pair = num(key, v)?,
            "warmup.regenerate" => {
                self.regenerate = match v {
                    "first" => Regenerate::First,
                    "every" => Regenerate::Every,
                    _ => return Err(bad(key, v, "first or every")),
                }
            }
            "warmup.sampling" => {
                self.sampling = match v {
                    "mean" => SamplingMode::Mean,
                    "sample" => SamplingMode::Sample,
                    _ => return Err(bad(key, v, "mean or sample")),
                }
            }
            "warmup.finetune_generator" => self.finetune_generator = flag(key, v)?,
            "warmup.finetune_discriminator" => self.finetune_discriminator = flag(key, v)?,
            "ablation.recon" => self.weights.reconstruction = flag(key, v)?,
            "ablation.wd" => self.weights.wasserstein = flag(key, v)?,
            "ablation.gd" => self.weights.group_matching = flag(key, v)?,
            "ablation.gd_pair" => self.weights.pair_matching = flag(key, v)?,
            "ablation.backbones" => {
                self.ablation_backbones = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| backbone(key, s))
                    .collect::<Result<_>>()?
            }
            "output.dir" => self.out_dir = PathBuf::from(v),
            "output.run_id" => {
                if v.is_empty() || v.contains(char::is_whitespace) {
                    return Err(bad(key, v, "a non-empty identifier without whitespace"));
                }
                self.run_id = v.to_string()
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            self.set(k, v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// `key=value` override, as given on the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dataset.n", self.n),
            ("dataset.k", self.k),
            ("model.embedding_dim", self.embedding_dim),
            ("model.hidden_units", self.hidden_units),
            ("model.latent_dim", self.latent_dim),
            ("train.batch_size", self.batch_size),
            ("train.eval_batch_size", self.eval_batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be >= 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("`train.lr` must be positive, got {}", self.lr)));
        }
        if self.ablation_backbones.is_empty() {
            return Err(Error::Config("`ablation.backbones` is empty".into()));
        }
        self.weights.validate()?;
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let w = &self.weights;
        let b = |x: bool| x.to_string();
        vec![
            ("dataset.format", self.format.as_str().into()),
            ("dataset.path", self.data_dir.display().to_string()),
            ("dataset.cache", self.cache.display().to_string()),
            ("dataset.n", self.n.to_string()),
            ("dataset.k", self.k.to_string()),
            ("model.backbone", self.backbone.as_str().into()),
            ("model.embedding_dim", self.embedding_dim.to_string()),
            ("model.hidden_units", self.hidden_units.to_string()),
            ("model.latent_dim", self.latent_dim.to_string()),
            ("train.seed", self.seed.to_string()),
            ("train.lr", self.lr.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.eval_batch_size", self.eval_batch_size.to_string()),
            ("train.pretrain_epochs", self.pretrain_epochs.to_string()),
            ("train.warmup_epochs", self.warmup_epochs.to_string()),
            ("train.phase_epochs", self.phase_epochs.to_string()),
            ("train.disc_steps_per_gen_step", self.disc_steps.to_string()),
            ("warmup.alpha", w.alpha.to_string()),
            ("warmup.beta", w.beta.to_string()),
            ("warmup.xi", w.xi.to_string()),
            ("warmup.xi_pair", w.xi_pair.to_string()),
            ("warmup.regenerate", self.regenerate.as_str().into()),
            ("warmup.sampling", self.sampling.as_str().into()),
            ("warmup.finetune_generator", b(self.finetune_generator)),
            ("warmup.finetune_discriminator", b(self.finetune_discriminator)),
            ("ablation.recon", b(w.reconstruction)),
            ("ablation.wd", b(w.wasserstein)),
            ("ablation.gd", b(w.group_matching)),
            ("ablation.gd_pair", b(w.pair_matching)),
            (
                "ablation.backbones",
                self.ablation_backbones.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","),
            ),
            ("output.dir", self.out_dir.display().to_string()),
            ("output.run_id", self.run_id.clone()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_overrides_and_errors() {
        let c = ExperimentConfig::parse("# run\nmodel.backbone = ipnn\n\ntrain.lr=0.01\n").unwrap();
        assert_eq!(c.backbone, BackboneKind::Ipnn);
        assert_eq!(c.lr, 0.01);
        assert!(ExperimentConfig::parse("model.depth = 3").is_err());
        assert!(ExperimentConfig::parse("train.lr = 0.1\ntrain.lr = 0.2").is_err());
        assert!(ExperimentConfig::parse("warmup.beta = -1").is_err());
        assert!(ExperimentConfig::parse("dataset.k = 0").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        let mut c = ExperimentConfig::default();
        c.apply_override("ablation.gd=false").unwrap();
        assert!(!c.weights.group_matching);
        assert!(matches!(c.apply_override("ablation.gd"), Err(Error::Config(_))));
    }
}
