//! Pipeline configuration: one TOML file drives every stage.
//!
//! Every default is the published hyperparameter, so running the four stages
//! with no overrides reproduces the reference pipeline. Relative paths are
//! resolved against the directory holding the config file.
//!
//! Each stage records a fingerprint of exactly the settings (and input file
//! contents) it depends on; a later stage refuses to consume outputs whose
//! fingerprint differs from the one the current config implies.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CorpusParams;
use crate::error::{Error, Result};
use crate::graph::GraphOptions;
use crate::model::ModelConfig;
use crate::selector::SelectionConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// JSON-lines review file.
    pub reviews: PathBuf,
    /// Attribute lexicon, one attribute per line.
    pub lexicon: PathBuf,
    pub attribute_vectors: Option<PathBuf>,
    pub sentence_vectors: Option<PathBuf>,
    /// Needed for the average-word ablation and as a fallback.
    pub word_vectors: Option<PathBuf>,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            reviews: PathBuf::from("reviews.jsonl"),
            lexicon: PathBuf::from("attributes.txt"),
            attribute_vectors: None,
            sentence_vectors: None,
            word_vectors: None,
            workdir: PathBuf::from("work"),
        }
    }
}

/// The four ablation switches. Each turns one component off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub disable_gat: bool,
    pub disable_dcn: bool,
    pub disable_ilp: bool,
    pub use_avg_word_embeddings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds parameter initialization, shuffling and pair sampling. The
    /// split has its own seed under `[corpus]`.
    pub seed: u64,
    pub paths: Paths,
    pub corpus: CorpusParams,
    pub graph: GraphOptions,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub selection: SelectionConfig,
    pub ablations: Ablations,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 2023,
            paths: Paths::default(),
            corpus: CorpusParams::default(),
            graph: GraphOptions::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            selection: SelectionConfig::default(),
            ablations: Ablations::default(),
        }
    }
}

fn prefixed(section: &str, result: Result<()>) -> Result<()> {
    result.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("[{section}] {m}")),
        other => other,
    })
}

fn hash_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(field: &str, path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("{field}: cannot read {}: {e}", path.display())))?;
    Ok(hash_hex(&bytes))
}

impl PipelineConfig {
    /// Parses a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Makes every relative path absolute under `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.reviews);
        fix(&mut paths.lexicon);
        fix(&mut paths.workdir);
        for p in [
            &mut paths.attribute_vectors,
            &mut paths.sentence_vectors,
            &mut paths.word_vectors,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Checks every section; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if !c.rating_threshold.is_finite() {
            return Err(Error::Config(
                "[corpus] rating_threshold must be a number".into(),
            ));
        }
        if c.vocab_size == 0 {
            return Err(Error::Config("[corpus] vocab_size must be positive".into()));
        }
        let r = c.split_ratios;
        if r.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "[corpus] split_ratios must be non-negative and sum to 1, got {r:?}"
            )));
        }
        prefixed("model", self.model_config().validate())?;
        prefixed("training", self.training.validate())?;
        prefixed("selection", self.selection.validate())?;
        let a = &self.ablations;
        if a.use_avg_word_embeddings && self.paths.word_vectors.is_none() {
            return Err(Error::Config(
                "[paths] word_vectors is required when ablations.use_avg_word_embeddings is set"
                    .into(),
            ));
        }
        if self.paths.sentence_vectors.is_none() && self.paths.word_vectors.is_none() {
            return Err(Error::Config(
                "[paths] sentence_vectors or word_vectors must be given".into(),
            ));
        }
        if self.paths.attribute_vectors.is_none() && self.paths.word_vectors.is_none() {
            return Err(Error::Config(
                "[paths] attribute_vectors or word_vectors must be given".into(),
            ));
        }
        Ok(())
    }

    /// Checks that the files each stage reads exist.
    pub fn check_inputs(&self) -> Result<()> {
        let p = &self.paths;
        let required = [
            ("paths.reviews", Some(&p.reviews)),
            ("paths.lexicon", Some(&p.lexicon)),
        ];
        let optional = [
            ("paths.attribute_vectors", p.attribute_vectors.as_ref()),
            ("paths.sentence_vectors", p.sentence_vectors.as_ref()),
            ("paths.word_vectors", p.word_vectors.as_ref()),
        ];
        for (field, path) in required.into_iter().chain(optional) {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(Error::Config(format!(
                        "{field}: file {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Model settings with the graph and interaction ablations applied.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            use_gat: self.model.use_gat && !self.ablations.disable_gat,
            use_dcn: self.model.use_dcn && !self.ablations.disable_dcn,
            ..self.model.clone()
        }
    }

    /// Selection settings with the ILP ablation applied.
    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            use_ilp: self.selection.use_ilp && !self.ablations.disable_ilp,
            ..self.selection.clone()
        }
    }

    /// Hash of everything the processed corpus depends on.
    pub fn preprocess_fingerprint(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            reviews: String,
            lexicon: String,
            corpus: &'a CorpusParams,
        }
        let key = Key {
            reviews: file_digest("paths.reviews", &self.paths.reviews)?,
            lexicon: file_digest("paths.lexicon", &self.paths.lexicon)?,
            corpus: &self.corpus,
        };
        Ok(hash_hex(serde_json::to_string(&key)?.as_bytes()))
    }

    /// Hash of everything a trained model depends on.
    pub fn train_fingerprint(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            preprocess: String,
            attribute_vectors: Option<String>,
            sentence_vectors: Option<String>,
            word_vectors: Option<String>,
            average_words: bool,
            seed: u64,
            graph: &'a GraphOptions,
            model: ModelConfig,
            training: &'a TrainConfig,
        }
        let digest = |field: &str, p: &Option<PathBuf>| -> Result<Option<String>> {
            p.as_ref().map(|p| file_digest(field, p)).transpose()
        };
        let key = Key {
            preprocess: self.preprocess_fingerprint()?,
            attribute_vectors: digest("paths.attribute_vectors", &self.paths.attribute_vectors)?,
            sentence_vectors: digest("paths.sentence_vectors", &self.paths.sentence_vectors)?,
            word_vectors: digest("paths.word_vectors", &self.paths.word_vectors)?,
            average_words: self.ablations.use_avg_word_embeddings,
            seed: self.seed,
            graph: &self.graph,
            model: self.model_config(),
            training: &self.training,
        };
        Ok(hash_hex(serde_json::to_string(&key)?.as_bytes()))
    }

    /// Hash of everything the selections depend on.
    pub fn select_fingerprint(&self) -> Result<String> {
        let key = (self.train_fingerprint()?, self.selection_config());
        Ok(hash_hex(serde_json::to_string(&key)?.as_bytes()))
    }
}
