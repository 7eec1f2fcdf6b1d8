//! Synthetic review corpus with a known answer.
//!
//! Planted attributes come in groups; every item carries one attribute from
//! each group and every user cares about one group. The review of user `u`
//! for item `c` contains the *relevant* sentence built from a fixed template
//! around `f*`, the attribute of `c` in `u`'s group, plus distractor
//! sentences about generic attributes with randomized wording.
//!
//! Word vectors are random; sentence vectors (standing in for a sentence
//! encoder) are idf-weighted averages of word vectors, so they differ from
//! the plain average used by the average-word ablation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::segment_and_tokenize;
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;

const PLANTED_ATTRIBUTES: [&str; 24] = [
    "room",
    "bed",
    "bathroom",
    "view",
    "shower",
    "balcony",
    "carpet",
    "pillow", //
    "staff",
    "service",
    "reception",
    "concierge",
    "housekeeping",
    "manager",
    "porter",
    "valet", //
    "breakfast",
    "coffee",
    "bar",
    "restaurant",
    "buffet",
    "wine",
    "dessert",
    "menu",
];
const GENERIC_ATTRIBUTES: [&str; 10] = [
    "price", "location", "parking", "wifi", "noise", "pool", "decor", "elevator", "lobby", "gym",
];
const OPENERS: [&str; 6] = ["sadly", "overall", "also", "oddly", "frankly", "still"];
const VERBS: [&str; 4] = ["was", "seemed", "felt", "looked"];
const ADJECTIVES: [&str; 8] = [
    "fine", "average", "loud", "dated", "okay", "small", "pricey", "plain",
];
const TAILS: [&str; 6] = [
    "for a weekday",
    "during our trip",
    "compared to others",
    "on arrival",
    "most evenings",
    "at that time",
];
const FILLER: [&str; 3] = [
    "We stayed two nights.",
    "Booked through a friend.",
    "Arrived late on friday.",
];

/// Template of the relevant sentence; `{}` is the planted attribute.
pub fn relevant_sentence(attribute: &str) -> String {
    format!("Honestly the {attribute} here was superb and worth every penny.")
}

fn distractor(attribute: &str, rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} the {attribute} {} {} {}.",
        OPENERS.choose(rng).unwrap(),
        VERBS.choose(rng).unwrap(),
        ADJECTIVES.choose(rng).unwrap(),
        TAILS.choose(rng).unwrap(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub groups: usize,
    pub attributes_per_group: usize,
    /// Sentences about generic attributes per review.
    pub distractors: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            users: 8,
            items: 8,
            groups: 3,
            attributes_per_group: 2,
            distractors: 3,
            dim: 32,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub config: PlantedConfig,
    /// One JSON record per line.
    pub reviews_jsonl: String,
    pub lexicon: Vec<String>,
    pub word_vectors: EmbeddingTable,
    /// Keyed by sentence key `r<line>.<position>`.
    pub sentence_vectors: EmbeddingTable,
    /// Review key → tokenized relevant sentence, space-joined.
    pub relevant: BTreeMap<String, String>,
    /// Review key → planted attribute of that review.
    pub planted_attribute: BTreeMap<String, String>,
}

/// Paths written by [`PlantedCorpus::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFiles {
    pub reviews: PathBuf,
    pub lexicon: PathBuf,
    pub word_vectors: PathBuf,
    pub sentence_vectors: PathBuf,
}

#[derive(Serialize)]
struct Record<'a> {
    user_id: String,
    item_id: String,
    rating: f64,
    text: &'a str,
}

impl PlantedCorpus {
    pub fn generate(config: &PlantedConfig) -> Result<Self> {
        let planted_needed = config.groups * config.attributes_per_group;
        if planted_needed > PLANTED_ATTRIBUTES.len()
            || config.groups == 0
            || config.attributes_per_group == 0
        {
            return Err(Error::Config(format!(
                "planted corpus supports up to {} planted attributes",
                PLANTED_ATTRIBUTES.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let group = |g: usize| {
            &PLANTED_ATTRIBUTES
                [g * config.attributes_per_group..(g + 1) * config.attributes_per_group]
        };
        let item_attribute = |c: usize, g: usize| group(g)[(c + g) % config.attributes_per_group];

        let mut lines = Vec::new();
        let mut texts = Vec::new();
        let mut relevant = BTreeMap::new();
        let mut planted_attribute = BTreeMap::new();
        for u in 0..config.users {
            for c in 0..config.items {
                let f = item_attribute(c, u % config.groups);
                let mut sentences = vec![relevant_sentence(f)];
                for _ in 0..config.distractors {
                    let attribute = GENERIC_ATTRIBUTES.choose(&mut rng).unwrap();
                    sentences.push(distractor(attribute, &mut rng));
                }
                sentences.push(FILLER.choose(&mut rng).unwrap().to_string());
                sentences.shuffle(&mut rng);
                let text = sentences.join(" ");
                let key = format!("r{}", lines.len() + 1);
                relevant.insert(
                    key.clone(),
                    segment_and_tokenize(&relevant_sentence(f))[0].join(" "),
                );
                planted_attribute.insert(key, f.to_string());
                lines.push(
                    serde_json::to_string(&Record {
                        user_id: format!("u{u}"),
                        item_id: format!("c{c}"),
                        rating: 5.0,
                        text: &text,
                    })
                    .expect("record serializes"),
                );
                texts.push(text);
            }
        }

        let mut lexicon: Vec<String> = PLANTED_ATTRIBUTES[..planted_needed]
            .iter()
            .chain(&GENERIC_ATTRIBUTES)
            .map(|s| s.to_string())
            .collect();
        lexicon.sort();

        // every tokenized sentence, keyed as the corpus will key it
        let mut sentences: Vec<(String, Vec<String>)> = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            for (pos, tokens) in segment_and_tokenize(text).into_iter().enumerate() {
                sentences.push((format!("r{}.{pos}", i + 1), tokens));
            }
        }
        let mut vocab: Vec<&str> = sentences
            .iter()
            .flat_map(|(_, t)| t.iter().map(String::as_str))
            .collect();
        vocab.sort_unstable();
        vocab.dedup();
        let scale = (3.0 / config.dim as f64).sqrt();
        let word_data = Array2::from_shape_simple_fn((vocab.len(), config.dim), || {
            rng.random_range(-scale..=scale)
        });
        let word_index: HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, w)| (*w, i)).collect();

        let mut df: HashMap<&str, usize> = HashMap::new();
        for (_, tokens) in &sentences {
            let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let n = sentences.len() as f64;
        let mut sentence_data = Array2::zeros((sentences.len(), config.dim));
        for (row, (_, tokens)) in sentences.iter().enumerate() {
            let mut acc = Array1::<f64>::zeros(config.dim);
            let mut total = 0.0;
            for t in tokens {
                let w = (1.0 + n / df[t.as_str()] as f64).ln();
                acc.scaled_add(w, &word_data.row(word_index[t.as_str()]));
                total += w;
            }
            if total > 0.0 {
                sentence_data.row_mut(row).assign(&(acc / total));
            }
        }

        Ok(PlantedCorpus {
            config: config.clone(),
            reviews_jsonl: lines.join("\n") + "\n",
            lexicon,
            word_vectors: EmbeddingTable::new(
                vocab.iter().map(|w| w.to_string()).collect(),
                word_data,
                false,
            )?,
            sentence_vectors: EmbeddingTable::new(
                sentences.into_iter().map(|(k, _)| k).collect(),
                sentence_data,
                false,
            )?,
            relevant,
            planted_attribute,
        })
    }

    /// Writes reviews, lexicon and both vector files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PlantedFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = PlantedFiles {
            reviews: dir.join("reviews.jsonl"),
            lexicon: dir.join("attributes.txt"),
            word_vectors: dir.join("words.vec"),
            sentence_vectors: dir.join("sentences.vec"),
        };
        fs::write(&files.reviews, &self.reviews_jsonl).map_err(|e| Error::io(&files.reviews, e))?;
        fs::write(&files.lexicon, self.lexicon.join("\n") + "\n")
            .map_err(|e| Error::io(&files.lexicon, e))?;
        self.word_vectors.save(&files.word_vectors)?;
        self.sentence_vectors.save(&files.sentence_vectors)?;
        Ok(files)
    }

    /// Whether `text` (space-joined tokens) is the relevant sentence of the
    /// review `review_key`.
    pub fn is_relevant(&self, review_key: &str, text: &str) -> bool {
        self.relevant.get(review_key).is_some_and(|r| r == text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_reviews, AttributeLexicon, Corpus, CorpusParams, MatchMode};

    #[test]
    fn structure() {
        let p = PlantedCorpus::generate(&PlantedConfig::default()).unwrap();
        assert_eq!(p.reviews_jsonl.lines().count(), 64);
        assert_eq!(p.lexicon.len(), 6 + GENERIC_ATTRIBUTES.len());
        // each item carries one planted attribute per group
        let set = parse_reviews(&p.reviews_jsonl, 3.0);
        assert_eq!(set.reviews.len(), 64);
        for r in &set.reviews {
            assert!(r
                .text
                .contains(&relevant_sentence(&p.planted_attribute[&r.key])));
        }
        assert!(p.sentence_vectors.get("r1.0").is_some());
    }

    #[test]
    fn deterministic() {
        let a = PlantedCorpus::generate(&PlantedConfig::default()).unwrap();
        let b = PlantedCorpus::generate(&PlantedConfig::default()).unwrap();
        assert_eq!(a.reviews_jsonl, b.reviews_jsonl);
        assert_eq!(a.sentence_vectors, b.sentence_vectors);
    }

    #[test]
    fn corpus_keys_have_vectors() {
        let p = PlantedCorpus::generate(&PlantedConfig::default()).unwrap();
        let set = parse_reviews(&p.reviews_jsonl, 3.0);
        let params = CorpusParams {
            min_activity: 1,
            ..CorpusParams::default()
        };
        let corpus = Corpus::build(
            &set.reviews,
            AttributeLexicon::new(p.lexicon.iter(), MatchMode::Lowercase),
            &params,
        )
        .unwrap();
        assert_eq!(corpus.reviews.len(), 64);
        for s in &corpus.sentences {
            assert!(p.sentence_vectors.get(&s.key).is_some(), "{}", s.key);
        }
        // filler sentences carry no attribute and are dropped
        assert_eq!(corpus.sentences.len(), 64 * 4);
        let relevant = corpus
            .sentences
            .iter()
            .filter(|s| p.is_relevant(&corpus.review(s.review).key, &s.text))
            .count();
        assert_eq!(relevant, 64);
    }
}
