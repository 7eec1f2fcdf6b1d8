//! On-disk layout of a processed corpus:
//!
//! ```text
//! vocab.tsv       token<TAB>id<TAB>count
//! attributes.txt  one attribute per line, in id order
//! reviews.tsv     key<TAB>user<TAB>item<TAB>rating<TAB>sentence keys
//! sentences.tsv   key<TAB>review key<TAB>attribute ids<TAB>token ids<TAB>text
//! split.json      partition manifest with the seed
//! stats.json      users / items / reviews / sentences / attributes
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AttributeId, AttributeLexicon, Corpus, CorpusSplit, ItemId, MatchMode, Review, ReviewId,
    Sentence, SentenceId, UserId, Vocabulary,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub items: usize,
    pub reviews: usize,
    pub sentences: usize,
    pub attributes: usize,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>, sep: &str) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

impl Corpus {
    pub fn stats(&self) -> CorpusStats {
        let attributes: BTreeSet<AttributeId> = self
            .sentences
            .iter()
            .flat_map(|s| s.attributes.iter().copied())
            .collect();
        CorpusStats {
            users: self.users.len(),
            items: self.items.len(),
            reviews: self.reviews.len(),
            sentences: self.sentences.len(),
            attributes: attributes.len(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.vocab.save(&dir.join("vocab.tsv"))?;

        let mut attrs = String::new();
        for s in self.lexicon.surfaces() {
            writeln!(attrs, "{s}").unwrap();
        }
        write(&dir.join("attributes.txt"), attrs)?;

        let mut reviews = String::new();
        for r in &self.reviews {
            let keys = join(r.sentences.iter().map(|&s| &self.sentence(s).key), " ");
            writeln!(
                reviews,
                "{}\t{}\t{}\t{}\t{}",
                r.key,
                self.users[r.user.index()],
                self.items[r.item.index()],
                r.rating,
                keys
            )
            .unwrap();
        }
        write(&dir.join("reviews.tsv"), reviews)?;

        let mut sentences = String::new();
        for s in &self.sentences {
            writeln!(
                sentences,
                "{}\t{}\t{}\t{}\t{}",
                s.key,
                self.review(s.review).key,
                join(s.attributes.iter().map(|a| a.0), ","),
                join(&s.tokens, " "),
                s.text
            )
            .unwrap();
        }
        write(&dir.join("sentences.tsv"), sentences)?;

        write(
            &dir.join("split.json"),
            serde_json::to_string_pretty(&self.split)?,
        )?;
        write(
            &dir.join("stats.json"),
            serde_json::to_string_pretty(&self.stats())?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, match_mode: MatchMode) -> Result<Self> {
        let vocab = Vocabulary::load(&dir.join("vocab.tsv"))?;
        let lexicon = AttributeLexicon::new(read(&dir.join("attributes.txt"))?.lines(), match_mode);
        let split: CorpusSplit = serde_json::from_str(&read(&dir.join("split.json"))?)?;

        let spath = dir.join("sentences.tsv");
        let mut sentence_rows = Vec::new();
        for (i, line) in read(&spath)?.lines().enumerate() {
            let bad = |message: String| Error::Parse {
                path: spath.clone(),
                line: i + 1,
                message,
            };
            let f: Vec<&str> = line.splitn(5, '\t').collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", f.len())));
            }
            let attributes = f[2]
                .split(',')
                .map(|a| a.parse().map(AttributeId))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("attribute ids: {e}")))?;
            if attributes.is_empty() || attributes.iter().any(|a| a.index() >= lexicon.len()) {
                return Err(bad("attribute id out of range".into()));
            }
            let tokens = if f[3].is_empty() {
                Vec::new()
            } else {
                f[3].split(' ')
                    .map(|t| t.parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("token ids: {e}")))?
            };
            if tokens.iter().any(|&t| t as usize >= vocab.len()) {
                return Err(bad("token id out of vocabulary range".into()));
            }
            sentence_rows.push((
                f[0].to_string(),
                f[1].to_string(),
                attributes,
                tokens,
                f[4].to_string(),
            ));
        }

        let rpath = dir.join("reviews.tsv");
        let mut users: Vec<String> = Vec::new();
        let mut items: Vec<String> = Vec::new();
        let mut user_index: HashMap<String, UserId> = HashMap::new();
        let mut item_index: HashMap<String, ItemId> = HashMap::new();
        let mut reviews = Vec::new();
        let mut review_index: HashMap<String, ReviewId> = HashMap::new();
        let mut sentence_keys: Vec<Vec<String>> = Vec::new();
        for (i, line) in read(&rpath)?.lines().enumerate() {
            let bad = |message: String| Error::Parse {
                path: rpath.clone(),
                line: i + 1,
                message,
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", f.len())));
            }
            let user = *user_index.entry(f[1].to_string()).or_insert_with(|| {
                users.push(f[1].to_string());
                UserId(users.len() as u32 - 1)
            });
            let item = *item_index.entry(f[2].to_string()).or_insert_with(|| {
                items.push(f[2].to_string());
                ItemId(items.len() as u32 - 1)
            });
            let rating: f64 = f[3].parse().map_err(|e| bad(format!("rating: {e}")))?;
            let id = ReviewId(reviews.len() as u32);
            review_index.insert(f[0].to_string(), id);
            sentence_keys.push(f[4].split(' ').map(str::to_string).collect());
            reviews.push(Review {
                id,
                key: f[0].to_string(),
                user,
                item,
                rating,
                sentences: Vec::new(),
            });
        }

        let mut sentences = Vec::with_capacity(sentence_rows.len());
        let mut sentence_index: HashMap<String, SentenceId> = HashMap::new();
        for (i, (key, review_key, attributes, tokens, text)) in
            sentence_rows.into_iter().enumerate()
        {
            let review = *review_index.get(&review_key).ok_or_else(|| Error::Parse {
                path: spath.clone(),
                line: i + 1,
                message: format!("unknown review {review_key}"),
            })?;
            let id = SentenceId(i as u32);
            sentence_index.insert(key.clone(), id);
            sentences.push(Sentence {
                id,
                key,
                review,
                tokens,
                attributes,
                text,
            });
        }
        for (review, keys) in reviews.iter_mut().zip(sentence_keys) {
            review.sentences = keys
                .iter()
                .map(|k| {
                    sentence_index.get(k).copied().ok_or_else(|| Error::Parse {
                        path: rpath.clone(),
                        line: review.id.index() + 1,
                        message: format!("unknown sentence {k}"),
                    })
                })
                .collect::<Result<_>>()?;
        }
        Corpus::assemble(users, items, lexicon, vocab, reviews, sentences, split)
    }
}
