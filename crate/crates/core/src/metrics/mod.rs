//! Text-overlap and attribute metrics: sentence and corpus BLEU, ROUGE-N
//! and ROUGE-L F1, and set precision/recall/F1 over tagged attributes.
//!
//! All functions work on token slices of any hashable type.

mod bleu;
mod ngram;
mod rouge;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bleu::{corpus_bleu, sentence_bleu, BleuPair};
pub use ngram::NgramProfile;
pub use rouge::{lcs_len, rouge_l_f1, rouge_n_f1};

use crate::corpus::{AttributeId, AttributeLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set precision/recall/F1. Precision is 0 for an empty prediction; `None`
/// when the truth set is empty.
pub fn set_prf<T: Ord>(predicted: &BTreeSet<T>, truth: &BTreeSet<T>) -> Option<Prf> {
    if truth.is_empty() {
        return None;
    }
    let hit = predicted.intersection(truth).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hit / predicted.len() as f64
    };
    let recall = hit / truth.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Some(Prf {
        precision,
        recall,
        f1,
    })
}

fn tag_all<S: AsRef<str>>(
    sentences: &[Vec<S>],
    lexicon: &AttributeLexicon,
) -> BTreeSet<AttributeId> {
    sentences.iter().flat_map(|s| lexicon.tag(s)).collect()
}

/// Attribute P/R/F1 of selected sentences against a ground-truth review,
/// each side tagged sentence by sentence. `None` when the truth mentions no
/// attribute.
pub fn attribute_prf<S: AsRef<str>>(
    predicted_sentences: &[Vec<S>],
    ground_truth: &[Vec<S>],
    lexicon: &AttributeLexicon,
) -> Option<Prf> {
    set_prf(
        &tag_all(predicted_sentences, lexicon),
        &tag_all(ground_truth, lexicon),
    )
}

/// Selected and ground-truth sentences for one (user, item) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub user: String,
    pub item: String,
    pub predicted: Vec<Vec<String>>,
    pub truth: Vec<Vec<String>>,
}

/// Aggregate report; every value lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_4: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub attribute_precision: f64,
    pub attribute_recall: f64,
    pub attribute_f1: f64,
    /// Pairs contributing to the attribute averages.
    pub attribute_pairs: usize,
    /// Pairs whose ground truth has no attribute.
    pub attribute_pairs_excluded: usize,
    /// Test pairs with no selection record.
    pub missing_pairs: usize,
    pub aggregation: String,
}

const AGGREGATION: &str = "each side's sentences concatenated per pair; BLEU pooled over pairs \
     (corpus level, uniform weights, no smoothing); ROUGE and attribute P/R/F1 macro-averaged \
     over pairs";

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn concat(side: &[Vec<String>]) -> Vec<&str> {
    side.iter().flatten().map(String::as_str).collect()
}

/// Scores every pair and aggregates. Per-pair work runs in parallel; the
/// reduction order is fixed, so results do not depend on thread count.
pub fn evaluate(
    pairs: &[EvalPair],
    lexicon: &AttributeLexicon,
    missing_pairs: usize,
) -> EvalReport {
    let flat: Vec<(Vec<&str>, Vec<&str>)> = pairs
        .iter()
        .map(|p| (concat(&p.predicted), concat(&p.truth)))
        .collect();
    let per_pair: Vec<(f64, f64, f64, Option<Prf>)> = flat
        .par_iter()
        .zip(pairs)
        .map(|((cand, truth), pair)| {
            let refs = [&truth[..]];
            (
                rouge_n_f1(cand, &refs, 1),
                rouge_n_f1(cand, &refs, 2),
                rouge_l_f1(cand, &refs),
                attribute_prf(&pair.predicted, &pair.truth, lexicon),
            )
        })
        .collect();
    let bleu_pairs: Vec<BleuPair<'_, &str>> =
        flat.iter().map(|(c, t)| (&c[..], vec![&t[..]])).collect();
    let attrs: Vec<Prf> = per_pair.iter().filter_map(|p| p.3).collect();
    EvalReport {
        pairs: pairs.len(),
        bleu_1: corpus_bleu(&bleu_pairs, 1),
        bleu_2: corpus_bleu(&bleu_pairs, 2),
        bleu_4: corpus_bleu(&bleu_pairs, 4),
        rouge_1: mean(per_pair.iter().map(|p| p.0)),
        rouge_2: mean(per_pair.iter().map(|p| p.1)),
        rouge_l: mean(per_pair.iter().map(|p| p.2)),
        attribute_precision: mean(attrs.iter().map(|p| p.precision)),
        attribute_recall: mean(attrs.iter().map(|p| p.recall)),
        attribute_f1: mean(attrs.iter().map(|p| p.f1)),
        attribute_pairs: attrs.len(),
        attribute_pairs_excluded: pairs.len() - attrs.len(),
        missing_pairs,
        aggregation: AGGREGATION.to_string(),
    }
}

impl EvalReport {
    /// Human-readable table, values in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        writeln!(
            out,
            "pairs evaluated: {} (missing: {})",
            self.pairs, self.missing_pairs
        )
        .unwrap();
        writeln!(out).unwrap();
        writeln!(out, "{:<10}{:>10}{:>10}{:>10}", "", "1", "2", "4/L").unwrap();
        writeln!(
            out,
            "{:<10}{:>10}{:>10}{:>10}",
            "BLEU(%)",
            pct(self.bleu_1),
            pct(self.bleu_2),
            pct(self.bleu_4)
        )
        .unwrap();
        writeln!(
            out,
            "{:<10}{:>10}{:>10}{:>10}",
            "ROUGE(%)",
            pct(self.rouge_1),
            pct(self.rouge_2),
            pct(self.rouge_l)
        )
        .unwrap();
        writeln!(out).unwrap();
        writeln!(
            out,
            "attributes (%): P {}  R {}  F1 {}  over {} pairs ({} without attributes excluded)",
            pct(self.attribute_precision),
            pct(self.attribute_recall),
            pct(self.attribute_f1),
            self.attribute_pairs,
            self.attribute_pairs_excluded
        )
        .unwrap();
        writeln!(out, "aggregation: {}", self.aggregation).unwrap();
        out
    }
}
