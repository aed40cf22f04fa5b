//! Model profiles: per-model tokenizer and run facts that the rest of the
//! pipeline must not hardcode.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frequency::CaseMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid profile file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("profile '{model}': {message}")]
    Invalid { model: String, message: String },
}

/// How the gendered pronoun pair is spelled for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PronounCasing {
    /// `he` / `she`
    Lower,
    /// `He` / `She`
    Capitalized,
}

impl PronounCasing {
    pub fn he(self) -> &'static str {
        match self {
            PronounCasing::Lower => "he",
            PronounCasing::Capitalized => "He",
        }
    }

    pub fn she(self) -> &'static str {
        match self {
            PronounCasing::Lower => "she",
            PronounCasing::Capitalized => "She",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub mask_token: String,
    pub pronoun_casing: PronounCasing,
    /// Number of sampled checkpoints per seed run.
    pub expected_steps: Option<usize>,
    /// Row index where the loss plateau starts.
    pub plateau_k: usize,
    /// Later plateau start used as a robustness check.
    #[serde(default)]
    pub alt_plateau_k: Option<usize>,
    /// Casing policy for corpus frequency lookups.
    pub case_mode: CaseMode,
    /// Seed runs with intermediate checkpoints.
    #[serde(default)]
    pub seeds: Vec<i32>,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            model: self.name.clone(),
            message,
        };
        if self.mask_token.is_empty() {
            return Err(invalid("mask token is empty".into()));
        }
        if let Some(b) = self.expected_steps {
            for k in std::iter::once(self.plateau_k).chain(self.alt_plateau_k) {
                if k >= b {
                    return Err(invalid(format!(
                        "plateau index {k} must be < {b} checkpoints"
                    )));
                }
            }
        }
        for s in &self.seeds {
            if !(-1..=4).contains(s) {
                return Err(invalid(format!("seed index {s} outside -1..=4")));
            }
        }
        Ok(())
    }

    /// Plateau starts analysed for this model: the default and, if set, the
    /// alternate one.
    pub fn plateau_starts(&self) -> Vec<usize> {
        let mut ks = vec![self.plateau_k];
        ks.extend(self.alt_plateau_k.filter(|&k| k != self.plateau_k));
        ks
    }
}

/// Model profiles keyed by model name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileRegistry {
    #[serde(rename = "model")]
    models: Vec<ModelProfile>,
}

const DEFAULT_PROFILES: &str = include_str!("../data/model_profiles.toml");

impl ProfileRegistry {
    pub fn new(models: Vec<ModelProfile>) -> Result<Self, ConfigError> {
        for m in &models {
            m.validate()?;
        }
        Ok(Self { models })
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let reg: ProfileRegistry = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_owned(),
            source,
        })?;
        Self::new(reg.models)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `bert-base-uncased` and `roberta-base` with their published run facts.
    pub fn paper_defaults() -> Self {
        Self::parse(DEFAULT_PROFILES, "built-in profiles").expect("built-in profiles are valid")
    }

    pub fn get(&self, model: &str) -> Option<&ModelProfile> {
        self.models.iter().find(|m| m.name == model)
    }

    pub fn models(&self) -> &[ModelProfile] {
        &self.models
    }

    pub fn by_name(&self) -> BTreeMap<&str, &ModelProfile> {
        self.models.iter().map(|m| (m.name.as_str(), m)).collect()
    }
}
