//! Experiment configuration: a TOML file plus dotted `key=value` overrides,
//! both checked against the schema before any work starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Difficulty, SourceDistribution, TransductionKind};
use crate::error::{Error, Result};
use crate::eval::Decoding;
use crate::grpo::GrpoConfig;
use crate::policy::{LoraConfig, ModelDims};
use crate::sft::{PretrainConfig, SftConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub lora: LoraConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dims: ModelDims::default(),
            lora: LoraConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub distribution: SourceDistribution,
    pub train: usize,
    pub eval: usize,
    pub devtest: usize,
    /// Pairs per task reserved for base pretraining, disjoint from the
    /// other splits.
    pub pretrain_pool: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            distribution: SourceDistribution::default(),
            train: 200,
            eval: 100,
            devtest: 200,
            pretrain_pool: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: String,
    pub kind: TransductionKind,
    #[serde(default)]
    pub difficulty: Difficulty,
    /// Mapping seed; derived from the experiment seed and the id when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Share of the pretraining mixture: the headroom lever.
    #[serde(default = "one")]
    pub pretrain_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl TaskConfig {
    pub fn cipher(id: &str) -> Self {
        TaskConfig {
            id: id.into(),
            kind: TransductionKind::SubstitutionCipher,
            difficulty: Difficulty::default(),
            seed: None,
            pretrain_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub embedding: f64,
    pub qe_proxy: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            embedding: 0.5,
            qe_proxy: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmsConfig {
    pub baseline: bool,
    /// One SFT arm per entry.
    pub sft_epochs: Vec<usize>,
    pub grpo: bool,
}

impl Default for ArmsConfig {
    fn default() -> Self {
        ArmsConfig {
            baseline: true,
            sft_epochs: vec![1, 3],
            grpo: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub betas: Vec<f64>,
    pub sizes: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            betas: vec![0.0, 0.001, 0.01, 0.05],
            sizes: vec![50, 100, 200],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodingConfig {
    pub regimes: Vec<Decoding>,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            regimes: vec![
                Decoding::Beam { width: 4 },
                Decoding::Greedy,
                Decoding::Sample {
                    temperature: 1.2,
                    seed: 1,
                },
            ],
        }
    }
}

/// Out-of-domain GRPO sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBConfig {
    pub distribution: SourceDistribution,
    pub pool_size: usize,
}

impl Default for ExperimentBConfig {
    fn default() -> Self {
        ExperimentBConfig {
            distribution: SourceDistribution {
                sentence_words: (3, 8),
                seed: 0xbeef,
                ..SourceDistribution::default()
            },
            pool_size: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadroomConfig {
    /// Task ids left out of the secondary correlation.
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgettingConfig {
    /// Task the adapters are trained on; the first task when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_task: Option<String>,
    pub threshold: f64,
}

impl Default for ForgettingConfig {
    fn default() -> Self {
        ForgettingConfig {
            train_task: None,
            threshold: crate::metrics::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub alpha: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            bootstrap_resamples: 1000,
            bootstrap_seed: 12345,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Drives corpus generation, task mappings and model initialisation.
    pub seed: u64,
    pub model: ModelConfig,
    pub corpus: CorpusConfig,
    pub tasks: Vec<TaskConfig>,
    pub pretrain: PretrainConfig,
    pub grpo: GrpoConfig,
    pub sft: SftConfig,
    pub reward: RewardConfig,
    pub arms: ArmsConfig,
    pub ablation: AblationConfig,
    pub decoding: DecodingConfig,
    pub experiment_b: ExperimentBConfig,
    pub headroom: HeadroomConfig,
    pub forgetting: ForgettingConfig,
    pub stats: StatsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            model: ModelConfig::default(),
            corpus: CorpusConfig::default(),
            tasks: vec![TaskConfig::cipher("cipher")],
            pretrain: PretrainConfig {
                steps: 300,
                ..PretrainConfig::default()
            },
            grpo: GrpoConfig::default(),
            sft: SftConfig::default(),
            reward: RewardConfig::default(),
            arms: ArmsConfig::default(),
            ablation: AblationConfig::default(),
            decoding: DecodingConfig::default(),
            experiment_b: ExperimentBConfig::default(),
            headroom: HeadroomConfig::default(),
            forgetting: ForgettingConfig::default(),
            stats: StatsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or the defaults when `None`) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let mut cfg = Self::from_toml(&text)?;
        for o in overrides {
            cfg = cfg.with_override(o)?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Applies one `dotted.key=value` override. The key must name a field of
    /// the schema (array elements by index) and the value must keep its
    /// type; integers are accepted where floats are expected.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        let mut tree = toml::Value::try_from(self).map_err(|e| Error::Serde(e.to_string()))?;
        let path: Vec<&str> = key.split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("malformed override key `{key}`")));
        }
        set_path(&mut tree, &path, value, key)?;
        let cfg: ExperimentConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override `{key}`: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = |m: String| Err(Error::Config(m));
        self.model.dims.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.grpo.validate()?;
        self.sft.validate()?;
        if self.tasks.is_empty() {
            return c("at least one task is required".into());
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].iter().any(|u| u.id == t.id) {
                return c(format!("duplicate task id `{}`", t.id));
            }
            if t.id.is_empty() || t.id.contains(['/', '\\', '.', ' ']) {
                return c(format!("task id `{}` must be a plain name", t.id));
            }
            if !(0.0..=1.0).contains(&t.difficulty.level) || !(0.0..=1.0).contains(&t.difficulty.noise_rate) {
                return c(format!("task `{}`: level and noise_rate must lie in [0, 1]", t.id));
            }
            if !(t.pretrain_weight.is_finite() && t.pretrain_weight >= 0.0) {
                return c(format!("task `{}`: pretrain_weight must be non-negative", t.id));
            }
        }
        if self.corpus.train == 0 || self.corpus.eval == 0 || self.corpus.devtest < 2 {
            return c("corpus needs train >= 1, eval >= 1 and devtest >= 2".into());
        }
        let w = self.reward.embedding + self.reward.qe_proxy;
        if (w - 1.0).abs() > 1e-12 || self.reward.embedding < 0.0 || self.reward.qe_proxy < 0.0 {
            return c(format!("reward weights must be non-negative and sum to 1, got {w}"));
        }
        if self.ablation.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return c("ablation betas must be non-negative".into());
        }
        if self.ablation.sizes.contains(&0) {
            return c("ablation sizes must be positive".into());
        }
        if self.stats.bootstrap_resamples == 0 || !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return c("bootstrap_resamples must be positive and alpha in (0, 1)".into());
        }
        if let Some(t) = &self.forgetting.train_task {
            if !self.tasks.iter().any(|u| &u.id == t) {
                return c(format!("forgetting.train_task `{t}` is not a configured task"));
            }
        }
        if self.experiment_b.pool_size == 0 {
            return c("experiment_b.pool_size must be positive".into());
        }
        Ok(())
    }
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn same_kind(old: &toml::Value, new: &toml::Value) -> bool {
    use toml::Value::*;
    matches!(
        (old, new),
        (String(_), String(_))
            | (Integer(_), Integer(_))
            | (Float(_), Float(_) | Integer(_))
            | (Boolean(_), Boolean(_))
            | (Array(_), Array(_))
            | (Table(_), Table(_))
            | (Datetime(_), Datetime(_))
    )
}

fn set_path(node: &mut toml::Value, path: &[&str], value: toml::Value, key: &str) -> Result<()> {
    let unknown = || Error::Config(format!("unknown config key `{key}`"));
    let head = path[0];
    let child = match node {
        toml::Value::Table(t) => {
            if path.len() == 1 && !t.contains_key(head) {
                // optional fields are absent when unset
                t.insert(head.to_string(), value);
                return Ok(());
            }
            t.get_mut(head).ok_or_else(unknown)?
        }
        toml::Value::Array(a) => {
            let i: usize = head.parse().map_err(|_| unknown())?;
            a.get_mut(i).ok_or_else(unknown)?
        }
        _ => return Err(unknown()),
    };
    if path.len() > 1 {
        return set_path(child, &path[1..], value, key);
    }
    if !same_kind(child, &value) {
        return Err(Error::Config(format!(
            "override `{key}` expects {}, got {}",
            child.type_str(),
            value.type_str()
        )));
    }
    *child = match (&*child, value) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn overrides_are_type_checked() {
        let c = ExperimentConfig::default();
        let d = c.with_override("grpo.beta=0").unwrap();
        assert_eq!(d.grpo.beta, 0.0);
        let d = c.with_override("tasks.0.difficulty.level=0.5").unwrap();
        assert_eq!(d.tasks[0].difficulty.level, 0.5);
        let d = c.with_override("tasks.0.kind=reversal").unwrap();
        assert_eq!(d.tasks[0].kind, TransductionKind::Reversal);
        assert!(matches!(c.with_override("grpo.k=\"many\""), Err(Error::Config(_))));
        assert!(matches!(c.with_override("grpo.nope=1"), Err(Error::Config(_))));
        assert!(matches!(c.with_override("grpo.k=1"), Err(Error::GroupTooSmall(1))));
        assert!(matches!(c.with_override("no_equals"), Err(Error::Config(_))));
        assert!(c.with_override("forgetting.train_task=cipher").is_ok());
        assert!(c.with_override("forgetting.train_task=zzz").is_err());
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[grpo]\nkk = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[[tasks]]\nid = \"a\"\nkind = \"reversal\"\n").is_ok());
    }
}
