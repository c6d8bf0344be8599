//! TOML run configuration. Command-line flags override file values; the
//! merged result is written next to every command's outputs.

use std::fs;
use std::path::Path;

use codemix::embeddings::SkipGramConfig;
use codemix::evaluation::{Aggregation, DEFAULT_THRESHOLD};
use codemix::models::{Architecture, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub jobs: Option<usize>,
    pub skipgram: SkipGramConfig,
    pub model: ModelConfig,
    pub evaluation: EvaluationConfig,
}

/// Model hyperparameters shared by all architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Must match the embedding file when set; taken from it otherwise.
    pub embedding_dim: Option<usize>,
    pub filter_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub lstm_units: usize,
    pub dropout_rate: f64,
    pub recurrent_dropout_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_len: usize,
    pub embeddings_trainable: bool,
    pub learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let s = ModelSpec::new(Architecture::Cnn1d);
        ModelConfig {
            embedding_dim: None,
            filter_sizes: s.filter_sizes,
            filters_per_size: s.filters_per_size,
            lstm_units: s.lstm_units,
            dropout_rate: s.dropout_rate,
            recurrent_dropout_rate: s.recurrent_dropout_rate,
            batch_size: s.batch_size,
            epochs: s.epochs,
            max_len: s.max_len,
            embeddings_trainable: s.embeddings_trainable,
            learning_rate: s.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub threshold: f64,
    /// `mean` of fold metrics or `pooled` confusion matrix.
    pub aggregation: Aggregation,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            threshold: DEFAULT_THRESHOLD,
            aggregation: Aggregation::Mean,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| codemix::Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Fills every optional top-level value so the written file is complete.
    pub fn resolved(mut self) -> Self {
        self.seed = Some(self.seed());
        self.k = Some(self.k.unwrap_or(DEFAULT_K));
        self.jobs = Some(self.jobs.unwrap_or(1));
        self.skipgram.seed = self.seed();
        self
    }

    pub fn model_spec(&self, architecture: Architecture, embedding_dim: usize) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        if let Some(d) = m.embedding_dim {
            if d != embedding_dim {
                return Err(CliError::Usage(format!(
                    "config sets model.embedding_dim = {d} but the embedding file has dimension {embedding_dim}"
                )));
            }
        }
        let spec = ModelSpec {
            architecture,
            embedding_dim,
            filter_sizes: m.filter_sizes.clone(),
            filters_per_size: m.filters_per_size,
            lstm_units: m.lstm_units,
            dropout_rate: m.dropout_rate,
            recurrent_dropout_rate: m.recurrent_dropout_rate,
            batch_size: m.batch_size,
            epochs: m.epochs,
            max_len: m.max_len,
            embeddings_trainable: m.embeddings_trainable,
            learning_rate: m.learning_rate,
            seed: self.seed(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
