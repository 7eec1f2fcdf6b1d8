//! Final top-K sentence extraction for a pair: keep the highest-scoring
//! candidates, measure pairwise redundancy with tf-idf cosine similarity,
//! and pick the K-subset maximizing
//!
//! ```text
//! sum_{i in S} g_i  -  alpha * sum_{i != j in S} sim(i, j)
//! ```
//!
//! The pair sum runs over ordered pairs, so each unordered pair is counted
//! twice. Ties between subsets go to the lexicographically smallest index set.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceId;
use crate::error::{Error, Result};

/// Inverse document frequencies over a reference collection of sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    idf: BTreeMap<u32, f64>,
    documents: usize,
}

impl IdfTable {
    /// `idf(t) = max(0, ln(N / (1 + df(t))))`. Tokens never seen, and the
    /// ids in `ignore` (e.g. the unknown-word id), get weight 0.
    pub fn build<'a, I>(documents: I, ignore: &[u32]) -> Self
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        let mut df: BTreeMap<u32, usize> = BTreeMap::new();
        let mut n = 0usize;
        for doc in documents {
            n += 1;
            let mut seen: Vec<u32> = doc.to_vec();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let idf = df
            .into_iter()
            .filter(|(t, _)| !ignore.contains(t))
            .map(|(t, d)| (t, (n as f64 / (1.0 + d as f64)).ln().max(0.0)))
            .collect();
        IdfTable { idf, documents: n }
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn weight(&self, token: u32) -> f64 {
        self.idf.get(&token).copied().unwrap_or(0.0)
    }

    /// Sparse tf-idf vector, sorted by token, zero weights dropped.
    pub fn vector(&self, tokens: &[u32]) -> Vec<(u32, f64)> {
        let mut tf: BTreeMap<u32, usize> = BTreeMap::new();
        for &t in tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        tf.into_iter()
            .map(|(t, c)| (t, c as f64 * self.weight(t)))
            .filter(|&(_, w)| w > 0.0)
            .collect()
    }
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Symmetric cosine-similarity matrix of tf-idf vectors, clamped to
/// `[0, 1]`, with a zero diagonal. A sentence whose vector is zero (every
/// token unseen) is dissimilar to everything.
pub fn tfidf_cosine_matrix(sentences: &[&[u32]], idf: &IdfTable) -> Array2<f64> {
    let vectors: Vec<Vec<(u32, f64)>> = sentences.iter().map(|s| idf.vector(s)).collect();
    let norms: Vec<f64> = vectors.iter().map(|v| sparse_dot(v, v).sqrt()).collect();
    let zero = norms.iter().filter(|&&n| n == 0.0).count();
    if zero > 0 {
        log::warn!("{zero} sentences have an all-zero tf-idf vector; similarity 0");
    }
    let n = sentences.len();
    let mut sim = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let c = (sparse_dot(&vectors[i], &vectors[j]) / (norms[i] * norms[j])).clamp(0.0, 1.0);
            sim[[i, j]] = c;
            sim[[j, i]] = c;
        }
    }
    sim
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Greedy,
    /// Descending score, no redundancy term.
    TopK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProblem {
    pub scores: Vec<f64>,
    pub sim: Array2<f64>,
    pub k: usize,
    pub alpha: f64,
}

impl SelectionProblem {
    pub fn new(scores: Vec<f64>, sim: Array2<f64>, k: usize, alpha: f64) -> Result<Self> {
        let n = scores.len();
        if sim.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "similarity matrix {:?} for {n} candidates",
                sim.dim()
            )));
        }
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be a non-negative number, got {alpha}"
            )));
        }
        if let Some(g) = scores.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("candidate score {g}")));
        }
        for i in 0..n {
            if sim[[i, i]] != 0.0 {
                return Err(Error::Config(format!(
                    "similarity diagonal at {i} is not zero"
                )));
            }
            for j in 0..i {
                let v = sim[[i, j]];
                if v != sim[[j, i]] || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!(
                        "similarity ({i}, {j}) must be symmetric and within [0, 1]"
                    )));
                }
            }
        }
        Ok(SelectionProblem {
            scores,
            sim,
            k,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Number of sentences a feasible solution holds.
    pub fn target_size(&self) -> usize {
        self.k.min(self.len())
    }

    /// Objective of `chosen`, summing similarity over ordered pairs.
    pub fn objective(&self, chosen: &[usize]) -> f64 {
        let gain: f64 = chosen.iter().map(|&i| self.scores[i]).sum();
        let mut penalty = 0.0;
        for &i in chosen {
            for &j in chosen {
                if i != j {
                    penalty += self.sim[[i, j]];
                }
            }
        }
        gain - self.alpha * penalty
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Ascending candidate indices.
    pub chosen: Vec<usize>,
    pub objective: f64,
    pub solver: SolverKind,
}

impl Selection {
    fn new(problem: &SelectionProblem, mut chosen: Vec<usize>, solver: SolverKind) -> Self {
        chosen.sort_unstable();
        Selection {
            objective: problem.objective(&chosen),
            chosen,
            solver,
        }
    }
}

/// Enumerates every subset of the target size in lexicographic order.
/// Exponential; the reference oracle for small instances.
pub fn solve_exhaustive(problem: &SelectionProblem) -> Selection {
    let n = problem.len();
    let k = problem.target_size();
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best = combo.clone();
    let mut best_value = problem.objective(&combo);
    if k == 0 {
        return Selection::new(problem, best, SolverKind::Exact);
    }
    loop {
        // advance to the next combination
        let mut i = k;
        while i > 0 && combo[i - 1] == n - k + (i - 1) {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..k {
            combo[j] = combo[j - 1] + 1;
        }
        let v = problem.objective(&combo);
        if v > best_value {
            best_value = v;
            best = combo.clone();
        }
    }
    Selection::new(problem, best, SolverKind::Exact)
}

struct Search<'a> {
    p: &'a SelectionProblem,
    k: usize,
    chosen: Vec<usize>,
    /// `sum_{i in chosen} sim(i, j)` for every j.
    penalty: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
    scratch: Vec<f64>,
}

impl Search<'_> {
    fn marginal(&self, j: usize) -> f64 {
        self.p.scores[j] - 2.0 * self.p.alpha * self.penalty[j]
    }

    /// Current value plus the best `r` marginal gains among `start..n`; new
    /// pairs among the additions only lower the value, so this bounds every
    /// completion.
    fn bound(&mut self, value: f64, start: usize, r: usize) -> f64 {
        self.scratch.clear();
        for j in start..self.p.len() {
            self.scratch.push(self.marginal(j));
        }
        let top = &mut self.scratch;
        top.sort_unstable_by(|a, b| b.total_cmp(a));
        value + top[..r].iter().sum::<f64>()
    }

    fn dfs(&mut self, start: usize, value: f64) {
        let r = self.k - self.chosen.len();
        if r == 0 {
            if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                self.best = Some((value, self.chosen.clone()));
            }
            return;
        }
        let n = self.p.len();
        if n - start < r {
            return;
        }
        if let Some((b, _)) = &self.best {
            let b = *b;
            if self.bound(value, start, r) <= b {
                return;
            }
        }
        for j in start..=n - r {
            let gain = self.marginal(j);
            self.chosen.push(j);
            for (t, pen) in self.penalty.iter_mut().enumerate() {
                *pen += self.p.sim[[j, t]];
            }
            self.dfs(j + 1, value + gain);
            for (t, pen) in self.penalty.iter_mut().enumerate() {
                *pen -= self.p.sim[[j, t]];
            }
            self.chosen.pop();
        }
    }
}

/// Branch-and-bound over subsets, including candidates in index order.
/// Subsets are reached in lexicographic order and only a strictly better
/// value replaces the incumbent, so ties resolve to the smallest index set.
/// Above `exact_cap` candidates it falls back to [`solve_greedy`].
pub fn solve_exact(problem: &SelectionProblem, exact_cap: usize) -> Selection {
    if problem.len() > exact_cap {
        log::warn!(
            "{} candidates exceed the exact-solver cap {exact_cap}; using greedy selection",
            problem.len()
        );
        return solve_greedy(problem);
    }
    let k = problem.target_size();
    let mut search = Search {
        p: problem,
        k,
        chosen: Vec::with_capacity(k),
        penalty: vec![0.0; problem.len()],
        best: None,
        scratch: Vec::with_capacity(problem.len()),
    };
    search.dfs(0, 0.0);
    let chosen = search.best.map(|(_, c)| c).unwrap_or_default();
    Selection::new(problem, chosen, SolverKind::Exact)
}

/// Repeatedly adds the candidate with the largest marginal gain
/// `g_j - 2 alpha sum_{i in S} sim(i, j)`; ties go to the lower index.
pub fn solve_greedy(problem: &SelectionProblem) -> Selection {
    let n = problem.len();
    let mut taken = vec![false; n];
    let mut penalty = vec![0.0; n];
    let mut chosen = Vec::new();
    for _ in 0..problem.target_size() {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| !taken[j]) {
            let gain = problem.scores[j] - 2.0 * problem.alpha * penalty[j];
            if best.is_none_or(|(_, b)| gain > b) {
                best = Some((j, gain));
            }
        }
        let (j, _) = best.expect("fewer chosen than candidates");
        taken[j] = true;
        chosen.push(j);
        for (t, pen) in penalty.iter_mut().enumerate() {
            *pen += problem.sim[[j, t]];
        }
    }
    Selection::new(problem, chosen, SolverKind::Greedy)
}

/// The K highest scores, ties to the lower index.
pub fn top_k(problem: &SelectionProblem) -> Selection {
    let mut order: Vec<usize> = (0..problem.len()).collect();
    order.sort_by(|&a, &b| {
        problem.scores[b]
            .total_cmp(&problem.scores[a])
            .then(a.cmp(&b))
    });
    order.truncate(problem.target_size());
    Selection::new(problem, order, SolverKind::TopK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub k: usize,
    pub alpha: f64,
    /// Candidates kept, by score, before building the problem.
    pub pool: usize,
    /// Largest problem solved exactly; beyond it, greedy.
    pub exact_cap: usize,
    /// Off: plain descending-score top-K.
    pub use_ilp: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k: 5,
            alpha: 2.0,
            pool: 100,
            exact_cap: 100,
            use_ilp: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.pool == 0 {
            return Err(Error::Config(
                "selection k and pool must be positive".into(),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(
                "selection alpha must be a non-negative number".into(),
            ));
        }
        Ok(())
    }
}

/// Result for one pair, in candidate-id space.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSelection {
    /// Chosen sentences in descending score order.
    pub sentences: Vec<SentenceId>,
    pub objective: f64,
    pub solver: SolverKind,
}

/// Truncates to the `pool` best-scoring candidates (ties by id), builds the
/// similarity matrix and solves. `tokens[i]` belongs to `ids[i]`.
pub fn select_for_pair(
    ids: &[SentenceId],
    scores: &[f64],
    tokens: &[&[u32]],
    idf: &IdfTable,
    config: &SelectionConfig,
) -> Result<PairSelection> {
    if ids.len() != scores.len() || ids.len() != tokens.len() {
        return Err(Error::Shape(format!(
            "{} ids, {} scores, {} token lists",
            ids.len(),
            scores.len(),
            tokens.len()
        )));
    }
    if ids.is_empty() {
        log::warn!("no candidates: empty selection");
        return Ok(PairSelection {
            sentences: Vec::new(),
            objective: 0.0,
            solver: if config.use_ilp {
                SolverKind::Exact
            } else {
                SolverKind::TopK
            },
        });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order.truncate(config.pool);
    let pool_tokens: Vec<&[u32]> = order.iter().map(|&i| tokens[i]).collect();
    let sim = tfidf_cosine_matrix(&pool_tokens, idf);
    let problem = SelectionProblem::new(
        order.iter().map(|&i| scores[i]).collect(),
        sim,
        config.k,
        config.alpha,
    )?;
    let selection = if config.use_ilp {
        solve_exact(&problem, config.exact_cap)
    } else {
        top_k(&problem)
    };
    // pool is in descending score order, so ascending index is too
    Ok(PairSelection {
        sentences: selection.chosen.iter().map(|&c| ids[order[c]]).collect(),
        objective: selection.objective,
        solver: selection.solver,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn example() -> SelectionProblem {
        let sim = array![[0.0, 0.9, 0.0], [0.9, 0.0, 0.1], [0.0, 0.1, 0.0]];
        SelectionProblem::new(vec![0.9, 0.8, 0.5], sim, 2, 0.5).unwrap()
    }

    #[test]
    fn objective_examples() {
        let p = example();
        assert!((p.objective(&[0, 1]) - 0.8).abs() < 1e-12);
        assert!((p.objective(&[0, 2]) - 1.4).abs() < 1e-12);
        assert!((p.objective(&[1, 2]) - 1.2).abs() < 1e-12);
        assert_eq!(p.objective(&[1]), 0.8);
        let free = SelectionProblem {
            alpha: 0.0,
            ..example()
        };
        assert_eq!(free.objective(&[0, 1]), 0.9 + 0.8);
    }

    #[test]
    fn three_candidate_instance() {
        let p = example();
        assert_eq!(solve_exact(&p, 100).chosen, vec![0, 2]);
        assert_eq!(solve_exhaustive(&p).chosen, vec![0, 2]);
        let g = solve_greedy(&p);
        assert_eq!(g.chosen, vec![0, 2]);
        assert_eq!(g.solver, SolverKind::Greedy);
    }

    #[test]
    fn k_one_and_k_n() {
        let p = SelectionProblem { k: 1, ..example() };
        assert_eq!(solve_exact(&p, 100).chosen, vec![0]);
        assert_eq!(solve_greedy(&p).chosen, vec![0]);
        let all = SelectionProblem { k: 3, ..example() };
        assert_eq!(solve_exact(&all, 100).chosen, vec![0, 1, 2]);
        let more = SelectionProblem { k: 7, ..example() };
        assert_eq!(solve_exact(&more, 100).chosen, vec![0, 1, 2]);
    }

    #[test]
    fn cap_falls_back_to_greedy() {
        assert_eq!(solve_exact(&example(), 2).solver, SolverKind::Greedy);
    }

    #[test]
    fn invalid_problems_rejected() {
        let sim = array![[0.0, 0.5], [0.4, 0.0]];
        assert!(SelectionProblem::new(vec![1.0, 1.0], sim, 1, 1.0).is_err());
        let diag = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(SelectionProblem::new(vec![1.0, 1.0], diag, 1, 1.0).is_err());
        assert!(SelectionProblem::new(vec![1.0], array![[0.0]], 0, 1.0).is_err());
        assert!(SelectionProblem::new(vec![1.0], array![[0.0]], 1, -1.0).is_err());
    }

    #[test]
    fn tfidf_hand_computed() {
        // docs: [1 2] [2 3] [4 5] [6] → N = 4; df(2)=2, others 1
        let docs: Vec<Vec<u32>> = vec![vec![1, 2], vec![2, 3], vec![4, 5], vec![6]];
        let idf = IdfTable::build(docs.iter().map(Vec::as_slice), &[0]);
        let w1 = (4.0f64 / 2.0).ln();
        let w2 = (4.0f64 / 3.0).ln();
        assert!((idf.weight(1) - w1).abs() < 1e-15);
        assert!((idf.weight(2) - w2).abs() < 1e-15);
        assert_eq!(idf.weight(99), 0.0);

        let s: Vec<&[u32]> = vec![&[1, 2], &[2, 3], &[5, 6]];
        let sim = tfidf_cosine_matrix(&s, &idf);
        // sentences 0 and 1 share token 2 only
        let expected = w2 * w2 / ((w1 * w1 + w2 * w2).sqrt() * (w1 * w1 + w2 * w2).sqrt());
        assert!((sim[[0, 1]] - expected).abs() < 1e-12);
        assert_eq!(sim[[1, 0]], sim[[0, 1]]);
        assert_eq!(sim[[0, 2]], 0.0);
        assert_eq!(sim[[0, 0]], 0.0);
    }

    #[test]
    fn identical_and_unseen_sentences() {
        let docs: Vec<Vec<u32>> = vec![vec![1, 2], vec![3], vec![4]];
        let idf = IdfTable::build(docs.iter().map(Vec::as_slice), &[0]);
        let s: Vec<&[u32]> = vec![&[1, 2, 2], &[1, 2, 2], &[0, 9], &[3]];
        let sim = tfidf_cosine_matrix(&s, &idf);
        assert!((sim[[0, 1]] - 1.0).abs() < 1e-12);
        assert_eq!(sim.row(2).sum(), 0.0);
        assert_eq!(sim[[0, 3]], 0.0);
    }

    #[test]
    fn duplicate_selected_once() {
        let docs: Vec<Vec<u32>> = vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7]];
        let idf = IdfTable::build(docs.iter().map(Vec::as_slice), &[0]);
        let ids: Vec<SentenceId> = (0..4).map(SentenceId).collect();
        let tokens: Vec<&[u32]> = vec![&[1, 2], &[1, 2], &[3, 4], &[5, 6]];
        let scores = [0.9, 0.95, 0.3, 0.2];
        let config = SelectionConfig {
            k: 2,
            alpha: 2.0,
            ..SelectionConfig::default()
        };
        let sel = select_for_pair(&ids, &scores, &tokens, &idf, &config).unwrap();
        assert_eq!(sel.sentences, vec![SentenceId(1), SentenceId(2)]);
        let plain = SelectionConfig {
            use_ilp: false,
            ..config
        };
        let top = select_for_pair(&ids, &scores, &tokens, &idf, &plain).unwrap();
        assert_eq!(top.sentences, vec![SentenceId(1), SentenceId(0)]);
        assert_eq!(top.solver, SolverKind::TopK);
    }

    #[test]
    fn pool_truncation_and_empty() {
        let idf = IdfTable::build(std::iter::empty(), &[]);
        let ids: Vec<SentenceId> = (0..5).map(SentenceId).collect();
        let toks: Vec<&[u32]> = vec![&[]; 5];
        let config = SelectionConfig {
            k: 5,
            pool: 3,
            ..SelectionConfig::default()
        };
        let sel = select_for_pair(&ids, &[0.1, 0.5, 0.3, 0.9, 0.0], &toks, &idf, &config).unwrap();
        assert_eq!(
            sel.sentences,
            vec![SentenceId(3), SentenceId(1), SentenceId(2)]
        );
        let empty = select_for_pair(&[], &[], &[], &idf, &config).unwrap();
        assert!(empty.sentences.is_empty());
    }

    /// Scores and similarities on a 1/16 grid keep every sum exact.
    fn problem_strategy() -> impl Strategy<Value = SelectionProblem> {
        (
            1usize..=9,
            1usize..=4,
            prop::sample::select(vec![0.0, 0.5, 2.0]),
        )
            .prop_flat_map(|(n, k, alpha)| {
                (
                    prop::collection::vec(0u8..=16, n),
                    prop::collection::vec(0u8..=16, n * n),
                )
                    .prop_map(move |(g, s)| {
                        let mut sim = Array2::zeros((n, n));
                        for i in 0..n {
                            for j in 0..i {
                                let v = s[i * n + j] as f64 / 16.0;
                                sim[[i, j]] = v;
                                sim[[j, i]] = v;
                            }
                        }
                        let scores = g.iter().map(|&v| v as f64 / 16.0).collect();
                        SelectionProblem::new(scores, sim, k, alpha).unwrap()
                    })
            })
    }

    proptest! {
        #[test]
        fn exact_matches_exhaustive(p in problem_strategy()) {
            let exact = solve_exact(&p, 100);
            let oracle = solve_exhaustive(&p);
            prop_assert_eq!(&exact.chosen, &oracle.chosen);
            prop_assert!(solve_greedy(&p).objective <= exact.objective + 1e-9);
            prop_assert_eq!(exact.chosen.len(), p.target_size());
        }

        #[test]
        fn shifting_scores_preserves_argmax(p in problem_strategy(), c in 0u8..16) {
            let shift = c as f64 / 4.0;
            let shifted = SelectionProblem {
                scores: p.scores.iter().map(|g| g + shift).collect(),
                ..p.clone()
            };
            let a = solve_exact(&p, 100);
            let b = solve_exact(&shifted, 100);
            prop_assert_eq!(&a.chosen, &b.chosen);
            let delta = b.objective - a.objective - p.target_size() as f64 * shift;
            prop_assert!(delta.abs() < 1e-9);
        }

        #[test]
        fn zero_alpha_is_top_k(p in problem_strategy()) {
            let free = SelectionProblem { alpha: 0.0, ..p };
            prop_assert_eq!(solve_exact(&free, 100).chosen, top_k(&free).chosen);
        }
    }
}
