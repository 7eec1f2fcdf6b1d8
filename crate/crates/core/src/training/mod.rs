//! Relevance targets, the two-part loss, Adam, and the epoch loop with
//! validation-based checkpoint selection.
//!
//! Randomness is derived, never carried: the epoch shuffle depends on
//! `(seed, epoch)` and pair sampling on `(seed, epoch, example)`. A run
//! resumed from an epoch checkpoint therefore replays exactly.

mod adam;
mod loss;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    attribute_loss, combined_loss, neg_log_sigmoid, pairwise_rank_loss, relevance_targets,
    sample_pairs, PROB_FLOOR,
};

use crate::corpus::{Corpus, ItemId, Partition, ReviewId, SentenceId, UserId};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::graph::{build_pair_graph, GraphOptions, Mode, PairGraph};
use crate::metrics::{corpus_bleu, BleuPair};
use crate::model::{
    backward, forward, load_archive, save_archive, ModelConfig, ModelParams, ModelShape,
    NamedTensor, TensorArchive,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the ranking loss; the attribute loss gets `1 - lambda`.
    pub lambda: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Ranking pairs sampled per graph per epoch.
    pub pair_budget: usize,
    /// Use every non-tied pair instead of sampling.
    pub all_pairs: bool,
    /// Add the negative-class term to the attribute loss.
    pub balanced_bce: bool,
    /// Targets closer than this count as tied.
    pub tie_tolerance: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Sentences taken per pair when validating.
    pub validation_top_k: usize,
    /// Keep every epoch checkpoint rather than only the latest and the best.
    pub keep_all_checkpoints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.5,
            batch_size: 16,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            pair_budget: 200,
            all_pairs: false,
            balanced_bce: true,
            tie_tolerance: 1e-6,
            patience: 10,
            validation_top_k: 5,
            keep_all_checkpoints: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 || self.validation_top_k == 0 {
            return Err(Error::Config(
                "batch_size and validation_top_k must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !self.all_pairs && self.pair_budget == 0 {
            return Err(Error::Config(
                "pair_budget must be positive unless all_pairs is set".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Derives an independent seed from a base seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

/// Surface tokens of a sentence.
pub fn words(corpus: &Corpus, id: SentenceId) -> Vec<&str> {
    corpus.sentence(id).text.split_whitespace().collect()
}

/// A training graph with its precomputed supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub graph: PairGraph,
    /// `r_i` per sentence node.
    pub targets: Vec<f64>,
}

/// Distinct (user, item) pairs with a review in `part`, ascending.
pub fn pairs_in(corpus: &Corpus, part: Partition) -> Vec<(UserId, ItemId)> {
    corpus
        .reviews_in(part)
        .map(|r| (r.user, r.item))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Builds every training graph and its relevance targets in parallel.
/// Pairs whose graph cannot be built are skipped with a warning.
pub fn prepare_examples(corpus: &Corpus, options: GraphOptions) -> Vec<TrainingExample> {
    let pairs = pairs_in(corpus, Partition::Train);
    let built: Vec<Option<TrainingExample>> = pairs
        .par_iter()
        .map(|&(u, c)| {
            let graph = match build_pair_graph(u, c, corpus, Mode::Train, options) {
                Ok(g) => g,
                Err(e) => {
                    log::warn!("skipping training pair: {e}");
                    return None;
                }
            };
            let cand: Vec<Vec<&str>> = graph.sentences.iter().map(|&s| words(corpus, s)).collect();
            let truth: Vec<Vec<&str>> = graph.positives.iter().map(|&s| words(corpus, s)).collect();
            let cand_refs: Vec<&[&str]> = cand.iter().map(Vec::as_slice).collect();
            let truth_refs: Vec<&[&str]> = truth.iter().map(Vec::as_slice).collect();
            let targets = relevance_targets(&cand_refs, &truth_refs).ok()?;
            Some(TrainingExample { graph, targets })
        })
        .collect();
    built.into_iter().flatten().collect()
}

/// A held-out review paired with the graph built from training data.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutPair {
    pub review: ReviewId,
    pub graph: PairGraph,
    /// Sentences of the held-out review.
    pub truth: Vec<SentenceId>,
}

/// One entry per review in `part` whose pair has a non-empty candidate pool.
pub fn held_out_pairs(
    corpus: &Corpus,
    part: Partition,
    options: GraphOptions,
) -> (Vec<HeldOutPair>, usize) {
    let reviews: Vec<_> = corpus.reviews_in(part).collect();
    let built: Vec<Option<HeldOutPair>> = reviews
        .par_iter()
        .map(
            |r| match build_pair_graph(r.user, r.item, corpus, Mode::Eval, options) {
                Ok(graph) => Some(HeldOutPair {
                    review: r.id,
                    graph,
                    truth: r.sentences.clone(),
                }),
                Err(e) => {
                    log::warn!("skipping held-out review {}: {e}", r.key);
                    None
                }
            },
        )
        .collect();
    let skipped = built.iter().filter(|b| b.is_none()).count();
    (built.into_iter().flatten().collect(), skipped)
}

/// Indices of the `k` highest scores, ties to the lower index, best first.
pub fn top_indices(scores: &Array1<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationScores {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_4: f64,
    pub pairs: usize,
}

/// Corpus BLEU of the plain top-k sentences (by score) against each
/// held-out review, both sides concatenated.
pub fn validate(
    corpus: &Corpus,
    features: &FeatureStore,
    params: &ModelParams,
    config: &ModelConfig,
    pairs: &[HeldOutPair],
    top_k: usize,
) -> Result<ValidationScores> {
    let picks: Vec<Vec<SentenceId>> = pairs
        .par_iter()
        .map(|p| {
            let trace = forward(&p.graph, features, params, config)?;
            Ok(top_indices(&trace.scores, top_k)
                .into_iter()
                .map(|i| p.graph.sentences[i])
                .collect())
        })
        .collect::<Result<_>>()?;
    let concat =
        |ids: &[SentenceId]| -> Vec<&str> { ids.iter().flat_map(|&s| words(corpus, s)).collect() };
    let cands: Vec<Vec<&str>> = picks.iter().map(|p| concat(p)).collect();
    let truths: Vec<Vec<&str>> = pairs.iter().map(|p| concat(&p.truth)).collect();
    let bleu_pairs: Vec<BleuPair<'_, &str>> = cands
        .iter()
        .zip(&truths)
        .map(|(c, t)| (&c[..], vec![&t[..]]))
        .collect();
    Ok(ValidationScores {
        bleu_1: corpus_bleu(&bleu_pairs, 1),
        bleu_2: corpus_bleu(&bleu_pairs, 2),
        bleu_4: corpus_bleu(&bleu_pairs, 4),
        pairs: pairs.len(),
    })
}

/// Loss terms and parameter gradient for one example.
#[derive(Debug, Clone)]
pub struct ExampleGradient {
    pub loss: f64,
    pub rank_loss: f64,
    pub attribute_loss: f64,
    pub grad: ModelParams,
}

/// Forward, loss and backward for one example with the given ranking pairs.
pub fn example_gradient(
    example: &TrainingExample,
    pairs: &[(usize, usize)],
    features: &FeatureStore,
    params: &ModelParams,
    model: &ModelConfig,
    train: &TrainConfig,
) -> Result<ExampleGradient> {
    let trace = forward(&example.graph, features, params, model)?;
    let (ls, d_scores) =
        pairwise_rank_loss(&trace.scores, &example.targets, pairs, train.tie_tolerance);
    let labels = example
        .graph
        .attribute_labels
        .as_deref()
        .ok_or_else(|| Error::Graph("training graph without attribute labels".into()))?;
    let (lf, d_probs) = attribute_loss(&trace.attribute_probs, labels, train.balanced_bce)?;
    let lambda = train.lambda;
    let grad = backward(
        &trace,
        params,
        model,
        &(d_scores * lambda),
        &(d_probs * (1.0 - lambda)),
    )?;
    Ok(ExampleGradient {
        loss: combined_loss(ls, lf, lambda),
        rank_loss: ls,
        attribute_loss: lf,
        grad,
    })
}

/// Ranking pairs for `example` in `epoch`.
pub fn epoch_pairs(
    example: &TrainingExample,
    index: usize,
    epoch: usize,
    seed: u64,
    train: &TrainConfig,
) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, epoch as u64, index as u64]));
    let budget = (!train.all_pairs).then_some(train.pair_budget);
    sample_pairs(&example.targets, budget, train.tie_tolerance, &mut rng)
}

/// Example visiting order for `epoch`.
pub fn epoch_order(n: usize, epoch: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0, epoch as u64]));
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub rank_loss: f64,
    pub attribute_loss: f64,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_4: f64,
}

impl EpochRecord {
    fn log_line(&self) -> String {
        format!(
            "{}\t{:.10}\t{:.10}\t{:.10}\t{:.10}\t{:.10}\t{:.10}",
            self.epoch,
            self.loss,
            self.rank_loss,
            self.attribute_loss,
            self.bleu_1,
            self.bleu_2,
            self.bleu_4
        )
    }
}

const LOG_HEADER: &str =
    "# validation: corpus BLEU of the top-k sentences by score (no redundancy \
                          selection); model selection on bleu_4\n\
                          epoch\tloss\trank_loss\tattribute_loss\tbleu_1\tbleu_2\tbleu_4\n";

pub const METRICS_LOG: &str = "metrics.tsv";
pub const BEST_MANIFEST: &str = "best.json";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch}.ckpt")
}

/// Points at the selected checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestManifest {
    pub epoch: usize,
    pub checkpoint: String,
    pub bleu_4: f64,
    pub fingerprint: String,
}

impl BestManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(BEST_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Everything the loop needs.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a> {
    pub corpus: &'a Corpus,
    pub features: &'a FeatureStore,
    pub model: &'a ModelConfig,
    pub graph: GraphOptions,
    pub train: &'a TrainConfig,
    pub seed: u64,
    /// Written into every checkpoint; resume refuses a different one.
    pub fingerprint: &'a str,
}

impl TrainSetup<'_> {
    pub fn shape(&self) -> ModelShape {
        ModelShape {
            users: self.corpus.users.len(),
            items: self.corpus.items.len(),
            attribute_dim: self.features.attribute_dim(),
            sentence_dim: self.features.sentence_dim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_bleu_4: f64,
    pub best_params: ModelParams,
    pub final_params: ModelParams,
    pub stopped_early: bool,
    pub training_pairs: usize,
    pub validation_pairs: usize,
}

/// Loop state persisted in each checkpoint.
#[derive(Debug, Clone)]
struct LoopState {
    params: ModelParams,
    adam: AdamState,
    /// Epochs completed.
    epoch: usize,
    best_epoch: usize,
    best_bleu_4: f64,
    since_best: usize,
    history: Vec<EpochRecord>,
}

fn meta_f64(archive: &TensorArchive, key: &str) -> Result<f64> {
    let bits = archive
        .metadata
        .get(key)
        .and_then(|v| u64::from_str_radix(v, 16).ok())
        .ok_or_else(|| Error::Checkpoint(format!("missing metadata {key}")))?;
    Ok(f64::from_bits(bits))
}

fn meta_usize(archive: &TensorArchive, key: &str) -> Result<usize> {
    archive
        .metadata
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("missing metadata {key}")))
}

impl LoopState {
    fn to_archive(&self, fingerprint: &str) -> Result<TensorArchive> {
        let mut archive = self.params.to_archive(fingerprint);
        for (prefix, moments) in [("adam.m.", &self.adam.m), ("adam.v.", &self.adam.v)] {
            for t in moments.to_archive(fingerprint).tensors {
                archive.tensors.push(NamedTensor {
                    name: format!("{prefix}{}", t.name),
                    ..t
                });
            }
        }
        let meta = &mut archive.metadata;
        meta.insert("epoch".into(), self.epoch.to_string());
        meta.insert("adam_step".into(), self.adam.step.to_string());
        meta.insert("best_epoch".into(), self.best_epoch.to_string());
        meta.insert(
            "best_bleu_4".into(),
            format!("{:016x}", self.best_bleu_4.to_bits()),
        );
        meta.insert("since_best".into(), self.since_best.to_string());
        meta.insert("history".into(), serde_json::to_string(&self.history)?);
        Ok(archive)
    }

    fn from_archive(
        archive: &TensorArchive,
        model: &ModelConfig,
        shape: &ModelShape,
    ) -> Result<Self> {
        let split = |prefix: &str| TensorArchive {
            config_hash: archive.config_hash.clone(),
            metadata: Default::default(),
            tensors: archive
                .tensors
                .iter()
                .filter_map(|t| {
                    let rest = t.name.strip_prefix(prefix)?;
                    Some(NamedTensor {
                        name: rest.to_string(),
                        ..t.clone()
                    })
                })
                .collect(),
        };
        let plain = TensorArchive {
            tensors: archive
                .tensors
                .iter()
                .filter(|t| !t.name.starts_with("adam."))
                .cloned()
                .collect(),
            ..archive.clone()
        };
        let params = ModelParams::from_archive(&plain, model, shape)?;
        let m = ModelParams::from_archive(&split("adam.m."), model, shape)?;
        let v = ModelParams::from_archive(&split("adam.v."), model, shape)?;
        let history = archive
            .metadata
            .get("history")
            .ok_or_else(|| Error::Checkpoint("missing metadata history".into()))?;
        Ok(LoopState {
            params,
            adam: AdamState {
                m,
                v,
                step: meta_usize(archive, "adam_step")? as u64,
            },
            epoch: meta_usize(archive, "epoch")?,
            best_epoch: meta_usize(archive, "best_epoch")?,
            best_bleu_4: meta_f64(archive, "best_bleu_4")?,
            since_best: meta_usize(archive, "since_best")?,
            history: serde_json::from_str(history)?,
        })
    }
}

/// Latest `epoch_<n>.ckpt` in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Option<(usize, PathBuf)> {
    fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let n = name
                .strip_prefix("epoch_")?
                .strip_suffix(".ckpt")?
                .parse()
                .ok()?;
            Some((n, e.path()))
        })
        .max_by_key(|(n, _)| *n)
}

/// Loads parameters from a checkpoint written by [`train`], checking its
/// fingerprint.
pub fn load_params(
    path: &Path,
    fingerprint: &str,
    model: &ModelConfig,
    shape: &ModelShape,
) -> Result<ModelParams> {
    let archive = load_archive(path)?;
    if archive.config_hash != fingerprint {
        return Err(Error::Stale(format!(
            "checkpoint {} was trained with fingerprint {}, current is {fingerprint}",
            path.display(),
            archive.config_hash
        )));
    }
    Ok(LoopState::from_archive(&archive, model, shape)?.params)
}

fn write_log(dir: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::from(LOG_HEADER);
    for r in history {
        writeln!(text, "{}", r.log_line()).unwrap();
    }
    let path = dir.join(METRICS_LOG);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn append_log(dir: &Path, record: &EpochRecord) -> Result<()> {
    use std::io::Write;
    let path = dir.join(METRICS_LOG);
    let mut f = fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{}", record.log_line()).map_err(|e| Error::io(&path, e))
}

/// Runs one epoch of minibatch updates; returns mean losses over examples.
fn run_epoch(
    setup: &TrainSetup<'_>,
    examples: &[TrainingExample],
    state: &mut LoopState,
    epoch: usize,
) -> Result<(f64, f64, f64)> {
    let order = epoch_order(examples.len(), epoch, setup.seed);
    let adam = setup.train.adam();
    let (mut total, mut total_s, mut total_f) = (0.0, 0.0, 0.0);
    for batch in order.chunks(setup.train.batch_size) {
        let params = &state.params;
        let results: Vec<ExampleGradient> = batch
            .par_iter()
            .map(|&i| {
                let pairs = epoch_pairs(&examples[i], i, epoch, setup.seed, setup.train);
                example_gradient(
                    &examples[i],
                    &pairs,
                    setup.features,
                    params,
                    setup.model,
                    setup.train,
                )
            })
            .collect::<Result<_>>()?;
        let mut grad = params.zeros_like();
        for r in &results {
            grad.add_assign(&r.grad);
            total += r.loss;
            total_s += r.rank_loss;
            total_f += r.attribute_loss;
        }
        grad.scale(1.0 / results.len() as f64);
        adam_step(&mut state.params, &grad, &mut state.adam, &adam)?;
    }
    let n = examples.len().max(1) as f64;
    Ok((total / n, total_s / n, total_f / n))
}

/// Trains, validating after every epoch. With `out_dir`, writes the
/// metrics log, epoch checkpoints and the best-checkpoint manifest there;
/// with `resume`, continues from the latest checkpoint in it.
pub fn train(setup: &TrainSetup<'_>, out_dir: Option<&Path>, resume: bool) -> Result<TrainOutcome> {
    setup.train.validate()?;
    setup.model.validate()?;
    let shape = setup.shape();
    let examples = prepare_examples(setup.corpus, setup.graph);
    if examples.is_empty() {
        return Err(Error::Config("no trainable (user, item) pairs".into()));
    }
    let (valid, skipped) = held_out_pairs(setup.corpus, Partition::Valid, setup.graph);
    if skipped > 0 {
        log::warn!("{skipped} validation reviews have no candidates and are skipped");
    }
    log::info!(
        "training on {} pairs, validating on {} reviews",
        examples.len(),
        valid.len()
    );

    let mut state = None;
    if let (Some(dir), true) = (out_dir, resume) {
        if let Some((n, path)) = latest_checkpoint(dir) {
            let archive = load_archive(&path)?;
            if archive.config_hash != setup.fingerprint {
                return Err(Error::Stale(format!(
                    "{} belongs to a different configuration",
                    path.display()
                )));
            }
            log::info!("resuming after epoch {n}");
            let s = LoopState::from_archive(&archive, setup.model, &shape)?;
            write_log(dir, &s.history)?;
            state = Some(s);
        }
    }
    let mut state = match state {
        Some(s) => s,
        None => {
            let params = ModelParams::init(setup.model, &shape, derive_seed(setup.seed, &[2]))?;
            if let Some(dir) = out_dir {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                if let Some((_, path)) = latest_checkpoint(dir) {
                    log::warn!(
                        "starting fresh; existing checkpoints such as {} will be replaced",
                        path.display()
                    );
                }
                write_log(dir, &[])?;
            }
            LoopState {
                adam: AdamState::new(&params),
                params,
                epoch: 0,
                best_epoch: 0,
                best_bleu_4: f64::NEG_INFINITY,
                since_best: 0,
                history: Vec::new(),
            }
        }
    };
    let mut best_params = state.params.clone();
    if let (Some(dir), true) = (out_dir, state.epoch > 0) {
        best_params = load_params(
            &dir.join(checkpoint_name(state.best_epoch)),
            setup.fingerprint,
            setup.model,
            &shape,
        )?;
    }

    let mut stopped_early = false;
    while state.epoch < setup.train.epochs {
        if state.epoch > 0 && state.since_best >= setup.train.patience {
            stopped_early = true;
            break;
        }
        let epoch = state.epoch + 1;
        let (loss, ls, lf) = run_epoch(setup, &examples, &mut state, epoch)?;
        let v = validate(
            setup.corpus,
            setup.features,
            &state.params,
            setup.model,
            &valid,
            setup.train.validation_top_k,
        )?;
        if v.bleu_4.is_nan() || !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {epoch}: loss {loss}, validation BLEU-4 {}",
                v.bleu_4
            )));
        }
        let record = EpochRecord {
            epoch,
            loss,
            rank_loss: ls,
            attribute_loss: lf,
            bleu_1: v.bleu_1,
            bleu_2: v.bleu_2,
            bleu_4: v.bleu_4,
        };
        log::info!(
            "epoch {epoch}: loss {loss:.6} (rank {ls:.6}, attribute {lf:.6}), valid BLEU-4 {:.4}",
            v.bleu_4
        );
        state.history.push(record);
        state.epoch = epoch;
        let previous_best = state.best_epoch;
        if v.bleu_4 > state.best_bleu_4 {
            state.best_bleu_4 = v.bleu_4;
            state.best_epoch = epoch;
            state.since_best = 0;
            best_params = state.params.clone();
        } else {
            state.since_best += 1;
        }
        if let Some(dir) = out_dir {
            append_log(dir, &record)?;
            save_archive(
                &dir.join(checkpoint_name(epoch)),
                &state.to_archive(setup.fingerprint)?,
            )?;
            let manifest = BestManifest {
                epoch: state.best_epoch,
                checkpoint: checkpoint_name(state.best_epoch),
                bleu_4: state.best_bleu_4,
                fingerprint: setup.fingerprint.to_string(),
            };
            let path = dir.join(BEST_MANIFEST);
            fs::write(&path, serde_json::to_string_pretty(&manifest)?)
                .map_err(|e| Error::io(&path, e))?;
            if !setup.train.keep_all_checkpoints {
                for old in [epoch - 1, previous_best] {
                    if old > 0 && old != state.best_epoch && old != epoch {
                        let _ = fs::remove_file(dir.join(checkpoint_name(old)));
                    }
                }
            }
        }
    }
    Ok(TrainOutcome {
        history: state.history,
        best_epoch: state.best_epoch,
        best_bleu_4: state.best_bleu_4,
        best_params,
        final_params: state.params,
        stopped_early,
        training_pairs: examples.len(),
        validation_pairs: valid.len(),
    })
}
