//! Review corpus: ingestion, segmentation, attribute tagging, activity
//! filtering, vocabulary, splits and per-pair candidate pools.

mod filter;
mod ingest;
mod lexicon;
mod split;
mod store;
mod text;
mod vocab;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use filter::{filter_min_activity, Interaction};
pub use ingest::{ingest_reviews, parse_reviews, RawReview, RecordError, ReviewSet};
pub use lexicon::{tag_attributes, AttributeId, AttributeLexicon, MatchMode};
pub use split::{split_corpus, CorpusSplit, Partition};
pub use store::CorpusStats;
pub use text::{segment, segment_and_tokenize, tokenize};
pub use vocab::{Vocabulary, UNK_ID, UNK_TOKEN};

use crate::error::{Error, Result};

macro_rules! dense_id {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

dense_id!(UserId);
dense_id!(ItemId);
dense_id!(ReviewId);
dense_id!(SentenceId);

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub id: ReviewId,
    pub key: String,
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    pub sentences: Vec<SentenceId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub id: SentenceId,
    /// `<review key>.<position>`; position counts every segmented sentence,
    /// including ones later dropped for lacking attributes.
    pub key: String,
    pub review: ReviewId,
    pub tokens: Vec<u32>,
    /// Sorted, non-empty.
    pub attributes: Vec<AttributeId>,
    /// Space-joined surface tokens, for external sentence encoders.
    pub text: String,
}

/// Corpus construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusParams {
    pub rating_threshold: f64,
    pub min_activity: usize,
    pub vocab_size: usize,
    pub split_ratios: [f64; 3],
    pub seed: u64,
    pub match_mode: MatchMode,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            rating_threshold: 3.0,
            min_activity: 15,
            vocab_size: 20_000,
            split_ratios: [0.70, 0.15, 0.15],
            seed: 42,
            match_mode: MatchMode::Lowercase,
        }
    }
}

/// A review after segmentation and attribute tagging, before id interning.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedReview {
    pub key: String,
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub sentences: Vec<TaggedSentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSentence {
    pub key: String,
    pub tokens: Vec<String>,
    pub attributes: BTreeSet<AttributeId>,
}

impl Interaction for TaggedReview {
    fn user(&self) -> &str {
        &self.user
    }
    fn item(&self) -> &str {
        &self.item
    }
}

impl Interaction for RawReview {
    fn user(&self) -> &str {
        &self.user
    }
    fn item(&self) -> &str {
        &self.item
    }
}

/// Segments a review and keeps only sentences mentioning an attribute.
/// Returns `None` when nothing survives.
pub fn tag_review(raw: &RawReview, lexicon: &AttributeLexicon) -> Option<TaggedReview> {
    let sentences: Vec<TaggedSentence> = segment_and_tokenize(&raw.text)
        .into_iter()
        .enumerate()
        .filter_map(|(pos, tokens)| {
            let attributes = lexicon.tag(&tokens);
            (!attributes.is_empty()).then(|| TaggedSentence {
                key: format!("{}.{}", raw.key, pos),
                tokens,
                attributes,
            })
        })
        .collect();
    (!sentences.is_empty()).then(|| TaggedReview {
        key: raw.key.clone(),
        user: raw.user.clone(),
        item: raw.item.clone(),
        rating: raw.rating,
        sentences,
    })
}

/// Processed corpus with dense ids and a fixed split.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub lexicon: AttributeLexicon,
    pub vocab: Vocabulary,
    pub reviews: Vec<Review>,
    pub sentences: Vec<Sentence>,
    pub split: CorpusSplit,
    partition: Vec<Partition>,
    user_train: Vec<Vec<ReviewId>>,
    item_train: Vec<Vec<ReviewId>>,
    user_index: HashMap<String, UserId>,
    item_index: HashMap<String, ItemId>,
}

impl Corpus {
    /// Tags, filters, splits and indexes raw reviews.
    pub fn build(
        raw: &[RawReview],
        lexicon: AttributeLexicon,
        params: &CorpusParams,
    ) -> Result<Self> {
        let tagged: Vec<TaggedReview> =
            raw.iter().filter_map(|r| tag_review(r, &lexicon)).collect();
        let kept = filter_min_activity(tagged, params.min_activity);
        let split = split_corpus(kept.len(), params.split_ratios, params.seed)?;
        let vocab = Vocabulary::build(
            split
                .train
                .iter()
                .flat_map(|&r| kept[r].sentences.iter().map(|s| s.tokens.as_slice())),
            params.vocab_size,
        );

        let mut users: Vec<String> = Vec::new();
        let mut items: Vec<String> = Vec::new();
        let mut user_index: HashMap<String, UserId> = HashMap::new();
        let mut item_index: HashMap<String, ItemId> = HashMap::new();
        let mut reviews = Vec::with_capacity(kept.len());
        let mut sentences = Vec::new();
        for (r, tr) in kept.iter().enumerate() {
            let user = *user_index.entry(tr.user.clone()).or_insert_with(|| {
                users.push(tr.user.clone());
                UserId(users.len() as u32 - 1)
            });
            let item = *item_index.entry(tr.item.clone()).or_insert_with(|| {
                items.push(tr.item.clone());
                ItemId(items.len() as u32 - 1)
            });
            let review = ReviewId(r as u32);
            let mut ids = Vec::with_capacity(tr.sentences.len());
            for ts in &tr.sentences {
                let id = SentenceId(sentences.len() as u32);
                sentences.push(Sentence {
                    id,
                    key: ts.key.clone(),
                    review,
                    tokens: vocab.encode(&ts.tokens),
                    attributes: ts.attributes.iter().copied().collect(),
                    text: ts.tokens.join(" "),
                });
                ids.push(id);
            }
            reviews.push(Review {
                id: review,
                key: tr.key.clone(),
                user,
                item,
                rating: tr.rating,
                sentences: ids,
            });
        }
        Self::assemble(users, items, lexicon, vocab, reviews, sentences, split)
    }

    pub(crate) fn assemble(
        users: Vec<String>,
        items: Vec<String>,
        lexicon: AttributeLexicon,
        vocab: Vocabulary,
        reviews: Vec<Review>,
        sentences: Vec<Sentence>,
        split: CorpusSplit,
    ) -> Result<Self> {
        if split.len() != reviews.len() {
            return Err(Error::Config(format!(
                "split covers {} reviews, corpus has {}",
                split.len(),
                reviews.len()
            )));
        }
        let partition = split.assignment(reviews.len());
        let mut user_train = vec![Vec::new(); users.len()];
        let mut item_train = vec![Vec::new(); items.len()];
        for &r in &split.train {
            let review = &reviews[r];
            user_train[review.user.index()].push(review.id);
            item_train[review.item.index()].push(review.id);
        }
        let user_index = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), UserId(i as u32)))
            .collect();
        let item_index = items
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), ItemId(i as u32)))
            .collect();
        Ok(Corpus {
            users,
            items,
            lexicon,
            vocab,
            reviews,
            sentences,
            split,
            partition,
            user_train,
            item_train,
            user_index,
            item_index,
        })
    }

    pub fn review(&self, id: ReviewId) -> &Review {
        &self.reviews[id.index()]
    }

    pub fn sentence(&self, id: SentenceId) -> &Sentence {
        &self.sentences[id.index()]
    }

    pub fn partition(&self, id: ReviewId) -> Partition {
        self.partition[id.index()]
    }

    pub fn user_id(&self, key: &str) -> Option<UserId> {
        self.user_index.get(key).copied()
    }

    pub fn item_id(&self, key: &str) -> Option<ItemId> {
        self.item_index.get(key).copied()
    }

    pub fn review_by_key(&self, key: &str) -> Option<&Review> {
        self.reviews.iter().find(|r| r.key == key)
    }

    pub fn reviews_in(&self, part: Partition) -> impl Iterator<Item = &Review> {
        let ids = match part {
            Partition::Train => &self.split.train,
            Partition::Valid => &self.split.valid,
            Partition::Test => &self.split.test,
        };
        ids.iter().map(move |&r| &self.reviews[r])
    }

    /// Training reviews written by `user`.
    pub fn user_train_reviews(&self, user: UserId) -> &[ReviewId] {
        &self.user_train[user.index()]
    }

    /// Training reviews about `item`.
    pub fn item_train_reviews(&self, item: ItemId) -> &[ReviewId] {
        &self.item_train[item.index()]
    }

    /// Attributes used anywhere in the user's training reviews.
    pub fn user_attributes(&self, user: UserId) -> BTreeSet<AttributeId> {
        self.attributes_of(self.user_train_reviews(user))
    }

    /// Attributes used anywhere in the item's training reviews.
    pub fn item_attributes(&self, item: ItemId) -> BTreeSet<AttributeId> {
        self.attributes_of(self.item_train_reviews(item))
    }

    fn attributes_of(&self, reviews: &[ReviewId]) -> BTreeSet<AttributeId> {
        reviews
            .iter()
            .flat_map(|&r| &self.review(r).sentences)
            .flat_map(|&s| self.sentence(s).attributes.iter().copied())
            .collect()
    }

    /// Union of the sentences of the user's and the item's training reviews,
    /// sorted by id. Held-out reviews can never contribute.
    pub fn candidate_pool(&self, user: UserId, item: ItemId) -> Result<Vec<SentenceId>> {
        let pool: BTreeSet<SentenceId> = self
            .user_train_reviews(user)
            .iter()
            .chain(self.item_train_reviews(item))
            .flat_map(|&r| self.review(r).sentences.iter().copied())
            .collect();
        if pool.is_empty() {
            log::warn!(
                "empty candidate pool for ({}, {})",
                self.users[user.index()],
                self.items[item.index()]
            );
            return Err(Error::EmptyPool {
                user: self.users[user.index()].clone(),
                item: self.items[item.index()].clone(),
            });
        }
        Ok(pool.into_iter().collect())
    }

    /// Sentences of training reviews by `user` about `item`.
    pub fn train_pair_sentences(&self, user: UserId, item: ItemId) -> Vec<SentenceId> {
        self.user_train_reviews(user)
            .iter()
            .map(|&r| self.review(r))
            .filter(|r| r.item == item)
            .flat_map(|r| r.sentences.iter().copied())
            .collect()
    }

    /// Tokens of a sentence as vocabulary ids.
    pub fn tokens(&self, id: SentenceId) -> &[u32] {
        &self.sentence(id).tokens
    }

    /// All of a review's sentence tokens, concatenated.
    pub fn review_tokens(&self, id: ReviewId) -> Vec<u32> {
        self.review(id)
            .sentences
            .iter()
            .flat_map(|&s| self.tokens(s).iter().copied())
            .collect()
    }
}
