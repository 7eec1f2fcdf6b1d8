use std::hash::Hash;

use super::ngram::NgramProfile;

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1 with clipped n-gram overlap; best F1 over references.
/// References with fewer than `n` tokens are skipped.
pub fn rouge_n_f1<T: Hash + Eq>(candidate: &[T], references: &[&[T]], n: usize) -> f64 {
    assert!(n >= 1, "ROUGE order must be at least 1");
    let cand = NgramProfile::new(candidate, n);
    references
        .iter()
        .filter(|r| r.len() >= n)
        .map(|r| {
            let rp = NgramProfile::new(r, n);
            f1(cand.overlap(&rp, n), cand.total(n), rp.total(n))
        })
        .fold(0.0, f64::max)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1; best over references.
pub fn rouge_l_f1<T: Eq>(candidate: &[T], references: &[&[T]]) -> f64 {
    references
        .iter()
        .map(|r| f1(lcs_len(candidate, r), candidate.len(), r.len()))
        .fold(0.0, f64::max)
}
