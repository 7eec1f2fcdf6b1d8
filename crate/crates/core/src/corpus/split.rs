use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Valid,
    Test,
}

/// Review-level partition. Indices refer to positions in the corpus review list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl CorpusSplit {
    /// Partition of every review, indexed by review position.
    pub fn assignment(&self, n_reviews: usize) -> Vec<Partition> {
        let mut out = vec![Partition::Train; n_reviews];
        for &i in &self.valid {
            out[i] = Partition::Valid;
        }
        for &i in &self.test {
            out[i] = Partition::Test;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn floor_share(n: usize, ratio: f64) -> usize {
    ((n as f64) * ratio + 1e-9).floor() as usize
}

/// Seeded random partition of `n_reviews` reviews. Validation and test sizes
/// are floored; the remainder goes to training.
pub fn split_corpus(n_reviews: usize, ratios: [f64; 3], seed: u64) -> Result<CorpusSplit> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} out of [0, 1]"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} sum to {total}, expected 1"
        )));
    }
    let mut order: Vec<usize> = (0..n_reviews).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_valid = floor_share(n_reviews, ratios[1]);
    let n_test = floor_share(n_reviews, ratios[2]);
    let n_train = n_reviews - n_valid - n_test;

    let mut train = order[..n_train].to_vec();
    let mut valid = order[n_train..n_train + n_valid].to_vec();
    let mut test = order[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(CorpusSplit {
        seed,
        train,
        valid,
        test,
    })
}
