use std::hash::Hash;

use super::ngram::NgramProfile;

/// Length of the reference closest to `cand_len`, shorter on ties.
fn closest_ref_len<T>(cand_len: usize, refs: &[&[T]]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&r| (r.abs_diff(cand_len), r))
        .unwrap_or(0)
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        0.0
    } else if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

/// Smoothed sentence BLEU with uniform weights over orders `1..=max_n`.
///
/// Smoothing: an order `n >= 2` with no clipped match uses `1 / (c_n + 1)`
/// in place of `0 / c_n`, where `c_n` is the number of candidate n-grams
/// (so an order the candidate is too short to have contributes 1). Unigram
/// precision is never smoothed: a candidate sharing no token with any
/// reference scores 0. Brevity uses the closest reference length.
pub fn sentence_bleu<T: Hash + Eq>(candidate: &[T], references: &[&[T]], max_n: usize) -> f64 {
    if candidate.is_empty() {
        log::warn!("sentence BLEU of an empty candidate is 0");
        return 0.0;
    }
    if references.is_empty() || max_n == 0 {
        return 0.0;
    }
    let cand = NgramProfile::new(candidate, max_n);
    let refs: Vec<_> = references
        .iter()
        .map(|r| NgramProfile::new(r, max_n))
        .collect();
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let total = cand.total(n);
        let matches = cand.clipped_matches(&refs, n);
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let bp = brevity_penalty(
        candidate.len(),
        closest_ref_len(candidate.len(), references),
    );
    bp * (log_sum / max_n as f64).exp()
}

/// One candidate with its references.
pub type BleuPair<'a, T> = (&'a [T], Vec<&'a [T]>);

/// Corpus BLEU with uniform weights over orders `1..=max_n`: clipped
/// matches and candidate n-gram totals are pooled over all pairs, the
/// brevity penalty compares total candidate length with the summed closest
/// reference lengths. No smoothing; any order with zero pooled matches
/// gives 0.
pub fn corpus_bleu<T: Hash + Eq>(pairs: &[BleuPair<'_, T>], max_n: usize) -> f64 {
    if pairs.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let mut cand_len = 0;
    let mut ref_len = 0;
    for (cand, refs) in pairs {
        let cp = NgramProfile::new(cand, max_n);
        let rps: Vec<_> = refs.iter().map(|r| NgramProfile::new(r, max_n)).collect();
        for n in 1..=max_n {
            matches[n - 1] += cp.clipped_matches(&rps, n);
            totals[n - 1] += cp.total(n);
        }
        cand_len += cand.len();
        ref_len += closest_ref_len(cand.len(), refs);
    }
    if matches.contains(&0) {
        return 0.0;
    }
    let log_sum: f64 = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum();
    brevity_penalty(cand_len, ref_len) * (log_sum / max_n as f64).exp()
}
