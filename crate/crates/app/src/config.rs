//! Engine configuration file: one `key = value` pair per line, `#` starts a
//! comment. Every key is optional; missing keys keep their defaults.
//!
//! ```text
//! dim = 32
//! epochs = 500
//! alpha = 0.7
//! store = data/store.kg
//! ```

use std::path::{Path, PathBuf};

use bubblekg_core::{RecommendConfig, TrainConfig, UpdatePolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Malformed { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {value:?}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub dim: usize,
    pub train: TrainConfig,
    pub policy: UpdatePolicy,
    pub recommend: RecommendConfig,
    pub store: PathBuf,
    pub embeddings: PathBuf,
    pub lexicon: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            dim: 32,
            train: TrainConfig::default(),
            policy: UpdatePolicy::default(),
            recommend: RecommendConfig::default(),
            store: PathBuf::from("store.kg"),
            embeddings: PathBuf::from("embeddings.emb"),
            lexicon: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_owned(),
        value: value.to_owned(),
    })
}

impl EngineConfig {
    pub fn parse(input: &str) -> Result<Self, ConfigError> {
        let mut cfg = EngineConfig::default();
        for (idx, raw) in input.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Malformed { line })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dim" => cfg.dim = parse_value(line, key, value)?,
                "epochs" => cfg.train.epochs = parse_value(line, key, value)?,
                "learning_rate" => cfg.train.learning_rate = parse_value(line, key, value)?,
                "margin" => cfg.train.margin = parse_value(line, key, value)?,
                "negatives_per_positive" => cfg.train.negatives_per_positive = parse_value(line, key, value)?,
                "batch_size" => cfg.train.batch_size = parse_value(line, key, value)?,
                "seed" => cfg.train.seed = parse_value(line, key, value)?,
                "relation_threshold" => cfg.policy.relation_threshold = parse_value(line, key, value)?,
                "bubble_refresh_fraction" => cfg.policy.bubble_refresh_fraction = parse_value(line, key, value)?,
                "refresh_epochs" => cfg.policy.refresh_epochs = parse_value(line, key, value)?,
                "k" => cfg.recommend.k = parse_value(line, key, value)?,
                "alpha" => cfg.recommend.alpha = parse_value(line, key, value)?,
                "tau_summary" | "tau1" => cfg.recommend.tau_summary = parse_value(line, key, value)?,
                "tau_member" | "tau2" => cfg.recommend.tau_member = parse_value(line, key, value)?,
                "character" => cfg.recommend.character = (!value.is_empty()).then(|| value.to_owned()),
                "store" => cfg.store = PathBuf::from(value),
                "embeddings" => cfg.embeddings = PathBuf::from(value),
                "lexicon" => cfg.lexicon = (!value.is_empty()).then(|| PathBuf::from(value)),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_owned(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            let anchor = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            anchor(&mut cfg.store);
            anchor(&mut cfg.embeddings);
            if let Some(lex) = cfg.lexicon.as_mut() {
                anchor(lex);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim < 2 {
            return Err(ConfigError::Invalid(format!("dim must be at least 2, got {}", self.dim)));
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.recommend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
