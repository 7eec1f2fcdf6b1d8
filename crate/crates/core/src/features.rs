//! Input node representations: precomputed vector files, trainable
//! user/item tables, and the average-word fallback for sentences.
//!
//! Vector files are whitespace separated: a `<count> <dim>` header, then one
//! `<id> <v1> ... <vdim>` row per vector.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, UNK_ID, UNK_TOKEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Array2<f64>,
    trainable: bool,
}

impl EmbeddingTable {
    pub fn new(keys: Vec<String>, data: Array2<f64>, trainable: bool) -> Result<Self> {
        if keys.len() != data.nrows() {
            return Err(Error::Shape(format!(
                "{} keys for {} rows",
                keys.len(),
                data.nrows()
            )));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vector id {k:?}")));
            }
        }
        Ok(EmbeddingTable {
            keys,
            index,
            data,
            trainable,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, key: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(key).map(|&i| self.data.row(i))
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (key, row) in self.keys.iter().zip(self.data.rows()) {
            out.push_str(key);
            for v in row {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a vector file into a read-only table.
pub fn load_vector_file(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vectors(&text, path)
}

pub fn parse_vectors(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        log::warn!("{}: empty vector file", path.display());
        return EmbeddingTable::new(Vec::new(), Array2::zeros((0, 0)), false);
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(1, format!("header: {e}")))?;
    let [count, dim] = dims[..] else {
        return Err(bad(1, "header must be `<count> <dim>`".into()));
    };
    let mut keys = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * dim);
    for (row, (i, line)) in lines.enumerate() {
        let mut fields = line.split_whitespace();
        let key = fields.next().unwrap_or_default().to_string();
        let before = values.len();
        for f in fields {
            values.push(
                f.parse::<f64>()
                    .map_err(|e| bad(i + 1, format!("row {row} ({key}): {e}")))?,
            );
        }
        let got = values.len() - before;
        if got != dim {
            return Err(bad(
                i + 1,
                format!("row {row} ({key}) has {got} values, expected {dim}"),
            ));
        }
        keys.push(key);
    }
    if keys.len() != count {
        return Err(bad(
            1,
            format!("header declares {count} rows, file has {}", keys.len()),
        ));
    }
    let data = Array2::from_shape_vec((count, dim), values).expect("row lengths checked");
    EmbeddingTable::new(keys, data, false).map_err(|e| match e {
        Error::Config(m) => bad(1, m),
        other => other,
    })
}

/// Seeded Uniform(-scale, scale) table.
pub fn init_trainable_table(count: usize, dim: usize, seed: u64, scale: f64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = if scale == 0.0 {
        Array2::zeros((count, dim))
    } else {
        Array2::from_shape_simple_fn((count, dim), || rng.random_range(-scale..=scale))
    };
    let keys = (0..count).map(|i| i.to_string()).collect();
    EmbeddingTable::new(keys, data, true).expect("keys are distinct")
}

/// Mean of the tokens' word vectors. Tokens missing from the table use the
/// `<unk>` row (zero when the table has none).
pub fn sentence_fallback_embedding<S: AsRef<str>>(
    tokens: &[S],
    words: &EmbeddingTable,
) -> Array1<f64> {
    let mut acc = Array1::zeros(words.dim());
    if tokens.is_empty() {
        log::warn!("empty sentence: zero fallback embedding");
        return acc;
    }
    let unk = words.get(UNK_TOKEN);
    for t in tokens {
        if let Some(v) = words.get(t.as_ref()).or(unk) {
            acc += &v;
        }
    }
    acc / tokens.len() as f64
}

/// Where sentence node inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceSource {
    Encoder,
    AverageWords,
}

/// Resolved input vectors for every attribute and sentence in a corpus.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub attributes: Array2<f64>,
    pub sentences: Array2<f64>,
    pub source: SentenceSource,
    pub missing_attributes: usize,
    pub missing_sentences: usize,
}

/// Vector-file key of an attribute: words joined by `_`.
pub fn attribute_key(surface: &str) -> String {
    surface.split_whitespace().collect::<Vec<_>>().join("_")
}

impl FeatureStore {
    /// Looks up every attribute and sentence vector, applying fallbacks:
    /// missing attribute vectors become zero, missing sentence vectors become
    /// the average word embedding.
    pub fn build(
        corpus: &Corpus,
        attribute_vectors: Option<&EmbeddingTable>,
        sentence_vectors: Option<&EmbeddingTable>,
        word_vectors: Option<&EmbeddingTable>,
        average_words: bool,
    ) -> Result<Self> {
        let source = if average_words || sentence_vectors.is_none() {
            SentenceSource::AverageWords
        } else {
            SentenceSource::Encoder
        };
        if source == SentenceSource::AverageWords && word_vectors.is_none() {
            return Err(Error::Config(
                "average-word sentence inputs need a word vector file".into(),
            ));
        }
        let attr_dim = attribute_vectors
            .map(EmbeddingTable::dim)
            .or(word_vectors.map(EmbeddingTable::dim))
            .ok_or_else(|| Error::Config("no attribute or word vectors supplied".into()))?;

        let mut missing_attributes = 0;
        let mut attributes = Array2::zeros((corpus.lexicon.len(), attr_dim));
        for (i, surface) in corpus.lexicon.surfaces().iter().enumerate() {
            let direct = attribute_vectors.and_then(|t| t.get(&attribute_key(surface)));
            match direct {
                Some(v) => attributes.row_mut(i).assign(&v),
                None if attribute_vectors.is_none() => {
                    let words: Vec<&str> = surface.split_whitespace().collect();
                    attributes
                        .row_mut(i)
                        .assign(&sentence_fallback_embedding(&words, word_vectors.unwrap()));
                }
                None => missing_attributes += 1,
            }
        }
        if missing_attributes > 0 {
            log::warn!("{missing_attributes} attributes without vectors, using zeros");
        }

        let word_tokens = |tokens: &[u32]| -> Vec<String> {
            tokens
                .iter()
                .map(|&t| {
                    if t == UNK_ID {
                        UNK_TOKEN.to_string()
                    } else {
                        corpus.vocab.token(t).to_string()
                    }
                })
                .collect()
        };
        let mut missing_sentences = 0;
        let sentences = match source {
            SentenceSource::AverageWords => {
                let words = word_vectors.unwrap();
                let mut out = Array2::zeros((corpus.sentences.len(), words.dim()));
                for (i, s) in corpus.sentences.iter().enumerate() {
                    out.row_mut(i)
                        .assign(&sentence_fallback_embedding(&word_tokens(&s.tokens), words));
                }
                out
            }
            SentenceSource::Encoder => {
                let table = sentence_vectors.unwrap();
                if let Some(words) = word_vectors {
                    if words.dim() != table.dim() {
                        log::warn!(
                            "word vectors ({}) and sentence vectors ({}) differ in dimension; \
                             missing sentences will be zero",
                            words.dim(),
                            table.dim()
                        );
                    }
                }
                let mut out = Array2::zeros((corpus.sentences.len(), table.dim()));
                for (i, s) in corpus.sentences.iter().enumerate() {
                    match table.get(&s.key) {
                        Some(v) => out.row_mut(i).assign(&v),
                        None => {
                            missing_sentences += 1;
                            if let Some(words) = word_vectors.filter(|w| w.dim() == table.dim()) {
                                out.row_mut(i).assign(&sentence_fallback_embedding(
                                    &word_tokens(&s.tokens),
                                    words,
                                ));
                            }
                        }
                    }
                }
                out
            }
        };
        if missing_sentences > 0 {
            log::warn!("{missing_sentences} sentences without encoder vectors, using fallback");
        }
        Ok(FeatureStore {
            attributes,
            sentences,
            source,
            missing_attributes,
            missing_sentences,
        })
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn sentence_dim(&self) -> usize {
        self.sentences.ncols()
    }
}
