//! The four stages over a work directory:
//!
//! ```text
//! <workdir>/corpus/   processed corpus, stats.json, stage.json
//! <workdir>/train/    epoch_<n>.ckpt, metrics.tsv, best.json, stage.json
//! <workdir>/select/   selections.jsonl, stage.json
//! <workdir>/eval/     report.json, report.txt
//! ```
//!
//! Each stage writes `stage.json` holding its fingerprint and a snapshot of
//! the config; the next stage checks it before reading anything.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::corpus::{ingest_reviews, AttributeLexicon, Corpus, CorpusStats, Partition, UNK_ID};
use crate::error::{Error, Result};
use crate::features::{load_vector_file, FeatureStore};
use crate::metrics::{evaluate as score_pairs, EvalPair, EvalReport};
use crate::model::{forward, ModelParams, ModelShape};
use crate::selector::{select_for_pair, IdfTable, SolverKind};
use crate::training::{self, held_out_pairs, BestManifest, TrainOutcome, TrainSetup};

pub const STAGE_MANIFEST: &str = "stage.json";
pub const SELECTIONS: &str = "selections.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub fingerprint: String,
    pub config: PipelineConfig,
}

/// Directory of each stage under the work directory.
pub fn stage_dir(config: &PipelineConfig, stage: &str) -> PathBuf {
    config.paths.workdir.join(stage)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_manifest(
    dir: &Path,
    stage: &str,
    fingerprint: &str,
    config: &PipelineConfig,
) -> Result<()> {
    let manifest = StageManifest {
        stage: stage.to_string(),
        fingerprint: fingerprint.to_string(),
        config: config.clone(),
    };
    write_file(
        &dir.join(STAGE_MANIFEST),
        serde_json::to_string_pretty(&manifest)?,
    )
}

/// Fails unless `stage` has completed under the expected fingerprint.
fn require_stage(config: &PipelineConfig, stage: &str, expected: &str) -> Result<PathBuf> {
    let dir = stage_dir(config, stage);
    let path = dir.join(STAGE_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|_| {
        Error::Stale(format!(
            "stage '{stage}' has not been run ({} missing)",
            path.display()
        ))
    })?;
    let manifest: StageManifest = serde_json::from_str(&text)?;
    if manifest.fingerprint != expected {
        return Err(Error::Stale(format!(
            "stage '{stage}' output was produced with a different configuration or inputs \
             (fingerprint {} != {expected}); rerun it",
            manifest.fingerprint
        )));
    }
    Ok(dir)
}

/// Ingests, filters, splits and saves the corpus.
pub fn preprocess(config: &PipelineConfig) -> Result<CorpusStats> {
    config.validate()?;
    config.check_inputs()?;
    let set = ingest_reviews(&config.paths.reviews, config.corpus.rating_threshold)?;
    for e in &set.errors {
        log::warn!(
            "{}:{}: {}",
            config.paths.reviews.display(),
            e.line,
            e.message
        );
    }
    let lexicon = AttributeLexicon::load(&config.paths.lexicon, config.corpus.match_mode)?;
    let corpus = Corpus::build(&set.reviews, lexicon, &config.corpus)?;
    let dir = stage_dir(config, "corpus");
    corpus.save(&dir)?;
    write_manifest(&dir, "corpus", &config.preprocess_fingerprint()?, config)?;
    let stats = corpus.stats();
    log::info!(
        "corpus: {} users, {} items, {} reviews, {} sentences, {} attributes ({} malformed records)",
        stats.users,
        stats.items,
        stats.reviews,
        stats.sentences,
        stats.attributes,
        set.errors.len()
    );
    Ok(stats)
}

/// Loads the processed corpus after checking it matches the config.
pub fn load_corpus(config: &PipelineConfig) -> Result<Corpus> {
    let dir = require_stage(config, "corpus", &config.preprocess_fingerprint()?)?;
    Corpus::load(&dir, config.corpus.match_mode)
}

/// Resolves node input vectors from the configured files.
pub fn load_features(config: &PipelineConfig, corpus: &Corpus) -> Result<FeatureStore> {
    let load = |p: &Option<PathBuf>| p.as_deref().map(load_vector_file).transpose();
    let attributes = load(&config.paths.attribute_vectors)?;
    let words = load(&config.paths.word_vectors)?;
    let sentences = if config.ablations.use_avg_word_embeddings {
        None
    } else {
        load(&config.paths.sentence_vectors)?
    };
    let store = FeatureStore::build(
        corpus,
        attributes.as_ref(),
        sentences.as_ref(),
        words.as_ref(),
        config.ablations.use_avg_word_embeddings,
    )?;
    if store.missing_attributes > 0 || store.missing_sentences > 0 {
        log::warn!(
            "{} attributes and {} sentences lacked vectors",
            store.missing_attributes,
            store.missing_sentences
        );
    }
    Ok(store)
}

fn shape(corpus: &Corpus, features: &FeatureStore) -> ModelShape {
    ModelShape {
        users: corpus.users.len(),
        items: corpus.items.len(),
        attribute_dim: features.attribute_dim(),
        sentence_dim: features.sentence_dim(),
    }
}

/// Trains the model; with `resume`, continues from the latest checkpoint.
pub fn train(config: &PipelineConfig, resume: bool) -> Result<TrainOutcome> {
    config.validate()?;
    let corpus = load_corpus(config)?;
    let features = load_features(config, &corpus)?;
    let fingerprint = config.train_fingerprint()?;
    let model = config.model_config();
    let dir = stage_dir(config, "train");
    if !resume && dir.exists() {
        // a fresh run must not leave checkpoints of an earlier one behind
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    // written first so a resumed run can tell which config it belongs to
    write_manifest(&dir, "train", &fingerprint, config)?;
    let setup = TrainSetup {
        corpus: &corpus,
        features: &features,
        model: &model,
        graph: config.graph,
        train: &config.training,
        seed: config.seed,
        fingerprint: &fingerprint,
    };
    training::train(&setup, Some(&dir), resume)
}

/// One selected sentence in a selection record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSentence {
    pub key: String,
    pub score: f64,
    pub text: String,
}

/// Selection for one test review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub review: String,
    pub user: String,
    pub item: String,
    pub candidates: usize,
    pub objective: f64,
    pub solver: SolverKind,
    /// Descending score order.
    pub sentences: Vec<SelectedSentence>,
}

/// Loads a checkpoint of the current training configuration: `checkpoint`
/// if given, otherwise the best one.
pub fn load_trained(
    config: &PipelineConfig,
    corpus: &Corpus,
    features: &FeatureStore,
    checkpoint: Option<&Path>,
) -> Result<ModelParams> {
    let fingerprint = config.train_fingerprint()?;
    let train_dir = require_stage(config, "train", &fingerprint)?;
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => train_dir.join(BestManifest::load(&train_dir)?.checkpoint),
    };
    training::load_params(
        &path,
        &fingerprint,
        &config.model_config(),
        &shape(corpus, features),
    )
}

/// Scores the candidates of every review in `part` and selects its
/// explanation. Reviews with empty candidate pools are skipped.
pub fn select_partition(
    config: &PipelineConfig,
    corpus: &Corpus,
    features: &FeatureStore,
    params: &ModelParams,
    part: Partition,
) -> Result<Vec<SelectionRecord>> {
    let model = config.model_config();
    let selection = config.selection_config();
    let train_sentences: Vec<&[u32]> = corpus
        .reviews_in(Partition::Train)
        .flat_map(|r| r.sentences.iter().map(|&s| corpus.tokens(s)))
        .collect();
    let idf = IdfTable::build(train_sentences, &[UNK_ID]);

    let (pairs, skipped) = held_out_pairs(corpus, part, config.graph);
    if skipped > 0 {
        log::warn!("{skipped} held-out reviews have empty candidate pools and are skipped");
    }
    pairs
        .par_iter()
        .map(|p| {
            let trace = forward(&p.graph, features, params, &model)?;
            let ids = &p.graph.sentences;
            let tokens: Vec<&[u32]> = ids.iter().map(|&s| corpus.tokens(s)).collect();
            let scores = trace.scores.to_vec();
            let chosen = select_for_pair(ids, &scores, &tokens, &idf, &selection)?;
            let score_of = |s| scores[ids.iter().position(|&x| x == s).unwrap()];
            Ok(SelectionRecord {
                review: corpus.review(p.review).key.clone(),
                user: corpus.users[p.graph.user.index()].clone(),
                item: corpus.items[p.graph.item.index()].clone(),
                candidates: ids.len(),
                objective: chosen.objective,
                solver: chosen.solver,
                sentences: chosen
                    .sentences
                    .iter()
                    .map(|&s| SelectedSentence {
                        key: corpus.sentence(s).key.clone(),
                        score: score_of(s),
                        text: corpus.sentence(s).text.clone(),
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Selects explanations for every test review with a checkpoint (the best
/// one by default) and writes them to the select stage directory.
pub fn select(config: &PipelineConfig, checkpoint: Option<&Path>) -> Result<Vec<SelectionRecord>> {
    config.validate()?;
    let corpus = load_corpus(config)?;
    let features = load_features(config, &corpus)?;
    let params = load_trained(config, &corpus, &features, checkpoint)?;
    let records = select_partition(config, &corpus, &features, &params, Partition::Test)?;

    let dir = stage_dir(config, "select");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_file(&dir.join(SELECTIONS), text)?;
    write_manifest(&dir, "select", &config.select_fingerprint()?, config)?;
    log::info!("selected explanations for {} test reviews", records.len());
    Ok(records)
}

/// Reads a selections file.
pub fn read_selections(path: &Path) -> Result<Vec<SelectionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Scores selections against the reviews of `part`. Reviews without a
/// record are counted as missing; records naming any other review are an
/// error.
pub fn evaluate_selections(
    corpus: &Corpus,
    records: &[SelectionRecord],
    part: Partition,
) -> Result<EvalReport> {
    let test: BTreeMap<&str, _> = corpus
        .reviews_in(part)
        .map(|r| (r.key.as_str(), r))
        .collect();
    let split_words = |text: &str| {
        text.split_whitespace()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let mut seen = BTreeMap::new();
    let mut pairs = Vec::with_capacity(records.len());
    for rec in records {
        let review = test.get(rec.review.as_str()).ok_or_else(|| {
            Error::Config(format!(
                "selection names {}, which is not a {part:?} review",
                rec.review
            ))
        })?;
        if seen.insert(rec.review.as_str(), ()).is_some() {
            return Err(Error::Config(format!(
                "duplicate selection for review {}",
                rec.review
            )));
        }
        pairs.push(EvalPair {
            user: rec.user.clone(),
            item: rec.item.clone(),
            predicted: rec.sentences.iter().map(|s| split_words(&s.text)).collect(),
            truth: review
                .sentences
                .iter()
                .map(|&s| split_words(&corpus.sentence(s).text))
                .collect(),
        });
    }
    let missing = test.len() - pairs.len();
    if missing > 0 {
        log::warn!("{missing} reviews have no selection and are excluded");
    }
    Ok(score_pairs(&pairs, &corpus.lexicon, missing))
}

/// Evaluates the selections file (the select stage's output by default)
/// and writes `report.json` and `report.txt`.
pub fn evaluate(config: &PipelineConfig, selections: Option<&Path>) -> Result<EvalReport> {
    config.validate()?;
    let corpus = load_corpus(config)?;
    let path = match selections {
        Some(p) => p.to_path_buf(),
        None => require_stage(config, "select", &config.select_fingerprint()?)?.join(SELECTIONS),
    };
    let records = read_selections(&path)?;
    let report = evaluate_selections(&corpus, &records, Partition::Test)?;
    let dir = stage_dir(config, "eval");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_file(
        &dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_file(&dir.join("report.txt"), report.to_table())?;
    Ok(report)
}
