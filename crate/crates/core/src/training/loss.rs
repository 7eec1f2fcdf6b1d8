use std::hash::Hash;

use ndarray::Array1;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::sentence_bleu;

/// `r_i = max_j BLEU-4(s_i, gt_j)`, each ground-truth sentence taken as a
/// separate single reference. A candidate that is itself a ground-truth
/// sentence gets 1.
pub fn relevance_targets<T: Hash + Eq>(
    candidates: &[&[T]],
    ground_truth: &[&[T]],
) -> Result<Vec<f64>> {
    if ground_truth.is_empty() {
        return Err(Error::Config(
            "relevance targets need at least one ground-truth sentence".into(),
        ));
    }
    Ok(candidates
        .iter()
        .map(|c| {
            ground_truth
                .iter()
                .map(|g| sentence_bleu(c, &[*g], 4))
                .fold(0.0, f64::max)
        })
        .collect())
}

/// `-ln sigmoid(x)`, stable for large |x|.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    crate::model::sigmoid(x)
}

fn sign(d: f64, tolerance: f64) -> f64 {
    if d > tolerance {
        1.0
    } else if d < -tolerance {
        -1.0
    } else {
        0.0
    }
}

/// Pairwise ranking loss averaged over the non-tied pairs in `pairs`:
/// each pair contributes `-ln sigmoid(sign(r_i - r_j) (g_i - g_j))`, which is
/// the same for `(i, j)` and `(j, i)`. Pairs whose targets differ by at most
/// `tolerance` contribute nothing. Returns the loss and its gradient on `g`.
pub fn pairwise_rank_loss(
    scores: &Array1<f64>,
    targets: &[f64],
    pairs: &[(usize, usize)],
    tolerance: f64,
) -> (f64, Array1<f64>) {
    let mut grad = Array1::zeros(scores.len());
    let mut loss = 0.0;
    let mut used = 0usize;
    for &(i, j) in pairs {
        let s = sign(targets[i] - targets[j], tolerance);
        if s == 0.0 {
            continue;
        }
        let x = s * (scores[i] - scores[j]);
        loss += neg_log_sigmoid(x);
        // d/dx -ln sigmoid(x) = -sigmoid(-x)
        let dx = -sigmoid(-x);
        grad[i] += dx * s;
        grad[j] -= dx * s;
        used += 1;
    }
    if used == 0 {
        return (0.0, grad);
    }
    let n = used as f64;
    (loss / n, grad / n)
}

/// Unordered index pairs whose targets differ by more than `tolerance`.
/// With `budget = None` every such pair is returned; otherwise at most
/// `budget` of them, drawn uniformly without replacement.
pub fn sample_pairs<R: Rng>(
    targets: &[f64],
    budget: Option<usize>,
    tolerance: f64,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut valid = Vec::new();
    for i in 0..targets.len() {
        for j in i + 1..targets.len() {
            if (targets[i] - targets[j]).abs() > tolerance {
                valid.push((i, j));
            }
        }
    }
    match budget {
        Some(b) if b < valid.len() => {
            let mut picked = index::sample(rng, valid.len(), b).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|k| valid[k]).collect()
        }
        _ => valid,
    }
}

/// Clamp for logarithms of probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Attribute loss averaged over attributes: `-y ln p`, plus
/// `-(1 - y) ln(1 - p)` when `balanced`. Logs are floored at
/// [`PROB_FLOOR`], where the gradient is zero.
pub fn attribute_loss(
    probs: &Array1<f64>,
    labels: &[f64],
    balanced: bool,
) -> Result<(f64, Array1<f64>)> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let m = probs.len();
    let mut grad = Array1::zeros(m);
    if m == 0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    for (f, (&p, &y)) in probs.iter().zip(labels).enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::NonFinite(format!(
                "attribute probability {p} outside [0, 1]"
            )));
        }
        if p > PROB_FLOOR {
            loss -= y * p.ln();
            grad[f] -= y / p;
        } else {
            loss -= y * PROB_FLOOR.ln();
        }
        if balanced {
            let q = 1.0 - p;
            if q > PROB_FLOOR {
                loss -= (1.0 - y) * q.ln();
                grad[f] += (1.0 - y) / q;
            } else {
                loss -= (1.0 - y) * PROB_FLOOR.ln();
            }
        }
    }
    Ok((loss / m as f64, grad / m as f64))
}

/// `lambda * l_s + (1 - lambda) * l_f`.
pub fn combined_loss(rank: f64, attribute: f64, lambda: f64) -> f64 {
    lambda * rank + (1.0 - lambda) * attribute
}
