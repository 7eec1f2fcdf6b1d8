//! Acceptance criteria, one `[PASS]`/`[FAIL]` line each.
//!
//! Runs as a plain binary (`harness = false`) so the report is printed in
//! order even under `cargo test`. Pass criterion numbers as arguments to run
//! a subset: `cargo test -p sentex-core --test acceptance -- 3 5`.
//!
//! Failures are reported but only fail the process with
//! `ACCEPTANCE_STRICT=1`, so the rest of the test suite still runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentex_core::config::PipelineConfig;
use sentex_core::corpus::{AttributeId, Corpus, ItemId, Partition, SentenceId, UserId, UNK_ID};
use sentex_core::features::{FeatureStore, SentenceSource};
use sentex_core::graph::PairGraph;
use sentex_core::metrics::{rouge_l_f1, rouge_n_f1, sentence_bleu};
use sentex_core::model::{forward, ModelConfig, ModelParams, ModelShape};
use sentex_core::pipeline::{self, SelectionRecord};
use sentex_core::planted::{PlantedConfig, PlantedCorpus};
use sentex_core::selector::{
    solve_exact, solve_exhaustive, solve_greedy, tfidf_cosine_matrix, top_k, IdfTable,
    SelectionProblem,
};
use sentex_core::training::{
    example_gradient, held_out_pairs, top_indices, TrainConfig, TrainOutcome, TrainingExample,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Random small graphs (criteria 1 and 2)
// ---------------------------------------------------------------------------

/// Attribute width (= user/item width) of the random graphs.
const NODE_DIM: usize = 6;
const SENT_DIM: usize = 5;

fn small_model() -> ModelConfig {
    ModelConfig {
        user_dim: NODE_DIM,
        item_dim: NODE_DIM,
        hidden: 4,
        heads: vec![2, 1],
        deep_layers: vec![5, 4],
        ..ModelConfig::default()
    }
}

fn small_shape() -> ModelShape {
    ModelShape {
        users: 2,
        items: 2,
        attribute_dim: NODE_DIM,
        sentence_dim: SENT_DIM,
    }
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-scale..scale))
}

fn random_features(r: &mut ChaCha8Rng, attrs: usize, sents: usize) -> FeatureStore {
    FeatureStore {
        attributes: random_matrix(r, attrs, NODE_DIM, 1.0),
        sentences: random_matrix(r, sents, SENT_DIM, 1.0),
        source: SentenceSource::Encoder,
        missing_attributes: 0,
        missing_sentences: 0,
    }
}

/// A connected graph with `m` attributes and `s >= m` sentences.
fn random_graph(r: &mut ChaCha8Rng, m: usize, s: usize) -> PairGraph {
    let subset = |r: &mut ChaCha8Rng| -> Vec<usize> {
        let mut v: Vec<usize> = (0..m).filter(|_| r.random_bool(0.5)).collect();
        if v.is_empty() {
            v.push(r.random_range(0..m));
        }
        v
    };
    let user_attrs = subset(r);
    let item_attrs = subset(r);
    let sentence_attrs: Vec<Vec<usize>> = (0..s)
        .map(|i| {
            let mut v = subset(r);
            // every attribute needs at least one sentence
            if i < m && !v.contains(&i) {
                v.push(i);
                v.sort_unstable();
            }
            v
        })
        .collect();
    PairGraph::from_parts(
        UserId(r.random_range(0..2)),
        ItemId(r.random_range(0..2)),
        (0..m as u32).map(AttributeId).collect(),
        (0..s as u32).map(SentenceId).collect(),
        &user_attrs,
        &item_attrs,
        &sentence_attrs,
        true,
    )
    .expect("random graph is well formed")
}

fn random_params(r: &mut ChaCha8Rng, model: &ModelConfig, scale: f64) -> ModelParams {
    let mut params = ModelParams::init(model, &small_shape(), r.random()).unwrap();
    for (_, mut t) in params.tensors_mut() {
        t.mapv_inplace(|_| r.random_range(-scale..scale));
    }
    params
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let variants = [
        small_model(),
        ModelConfig {
            use_gat: false,
            ..small_model()
        },
        ModelConfig {
            use_dcn: false,
            ..small_model()
        },
    ];
    let mut r = rng(101);
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut checked = 0usize;
    for trial in 0..6 {
        let model = &variants[trial % variants.len()];
        // 1 user + 1 item + 3 attributes + 5 sentences = 10 nodes
        let mut graph = random_graph(&mut r, 3, 5);
        graph.attribute_labels = Some((0..3).map(|i| ((trial + i) % 2) as f64).collect());
        let features = random_features(&mut r, 3, 5);
        let params = random_params(&mut r, model, 0.5);
        let example = TrainingExample {
            graph,
            targets: (0..5).map(|_| r.random_range(0.0..1.0)).collect(),
        };
        let train = TrainConfig {
            lambda: r.random_range(0.1..0.9),
            all_pairs: true,
            ..TrainConfig::default()
        };
        let pairs: Vec<(usize, usize)> = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|&(i, j)| example.targets[i] > example.targets[j])
            .collect();
        let analytic =
            example_gradient(&example, &pairs, &features, &params, model, &train).unwrap();
        let loss = |p: &ModelParams| {
            example_gradient(&example, &pairs, &features, p, model, &train)
                .unwrap()
                .loss
        };
        let eps = 1e-5;
        for (ti, (name, grad)) in analytic.grad.tensors().into_iter().enumerate() {
            for (k, &a) in grad.iter().enumerate() {
                let at = |d: f64| {
                    let mut p = params.clone();
                    *p.tensors_mut()[ti].1.iter_mut().nth(k).unwrap() += d;
                    loss(&p)
                };
                let numeric = (at(eps) - at(-eps)) / (2.0 * eps);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                checked += 1;
                if rel > worst {
                    worst = rel;
                    worst_at = format!("{name}[{k}] analytic {a:.3e} numeric {numeric:.3e}");
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "{checked} entries over 6 graphs (full, no-GAT, no-DCN), max relative error {worst:.2e} ({worst_at}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let model = small_model();
    let mut r = rng(202);
    let mut rows = 0usize;
    let mut worst_sum = 0.0f64;
    let mut min_weight = f64::INFINITY;
    for _ in 0..100 {
        let m = r.random_range(1..=4);
        let s = r.random_range(m..=m + 4);
        let graph = random_graph(&mut r, m, s);
        let features = random_features(&mut r, m, s);
        // large parameters push logits apart and test the softmax's stability
        let scale = if r.random_bool(0.5) { 0.5 } else { 20.0 };
        let params = random_params(&mut r, &model, scale);
        let trace = forward(&graph, &features, &params, &model).unwrap();
        for layer in &trace.layers {
            for head in &layer.heads {
                for (node, row) in head.alpha.iter().enumerate() {
                    assert_eq!(row.len(), trace.neighborhoods[node].len());
                    rows += 1;
                    worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
                    min_weight = row.iter().copied().fold(min_weight, f64::min);
                }
            }
        }
    }
    verdict(
        worst_sum <= 1e-6 && min_weight >= 0.0,
        format!("{rows} rows; max |sum - 1| = {worst_sum:.1e}, min weight {min_weight:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// Selector (criteria 3 and 4)
// ---------------------------------------------------------------------------

fn random_problem(r: &mut ChaCha8Rng, n: usize, k: usize, alpha: f64) -> SelectionProblem {
    let mut sim = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let v = if r.random_bool(0.3) {
                0.0
            } else {
                r.random_range(0.0..=1.0)
            };
            sim[[i, j]] = v;
            sim[[j, i]] = v;
        }
    }
    let scores = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    SelectionProblem::new(scores, sim, k, alpha).unwrap()
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut r = rng(303);
    let mut problems = 0usize;
    let mut worst_gap = 0.0f64;
    let mut greedy_over = 0usize;
    let mut greedy_below = 0usize;
    for round in 0..60 {
        for alpha in [0.0, 0.5, 2.0] {
            for k in 1..=4 {
                let n = 1 + (round % 12);
                let p = random_problem(&mut r, n, k, alpha);
                let exact = solve_exact(&p, 100);
                let brute = solve_exhaustive(&p);
                let greedy = solve_greedy(&p);
                problems += 1;
                worst_gap = worst_gap.max((exact.objective - brute.objective).abs());
                // the reported objective is the objective of the reported set
                worst_gap = worst_gap.max((p.objective(&exact.chosen) - exact.objective).abs());
                if exact.chosen.len() != k.min(n) {
                    worst_gap = f64::INFINITY;
                }
                if greedy.objective > exact.objective + 1e-9 {
                    greedy_over += 1;
                }
                if greedy.objective < exact.objective - 1e-9 {
                    greedy_below += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        problems >= 500 && worst_gap <= 1e-9 && greedy_over == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{problems} problems; max |exact - exhaustive| = {worst_gap:.1e}; greedy above exact {greedy_over}×, \
             strictly below {greedy_below}×; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut failures = Vec::new();
    let mut r = rng(404);

    // alpha = 0: descending-score top-K, whatever the similarities
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let k = r.random_range(1..=4);
        let p = random_problem(&mut r, n, k, 0.0);
        let mut expected: Vec<usize> = top_indices(&Array1::from(p.scores.clone()), k);
        expected.sort_unstable();
        if solve_exact(&p, 100).chosen != expected || top_k(&p).chosen != expected {
            failures.push(format!("alpha=0 differs from top-K on {:?}", p.scores));
            break;
        }
    }

    // the three-candidate instance
    let sim = ndarray::array![[0.0, 0.9, 0.0], [0.9, 0.0, 0.1], [0.0, 0.1, 0.0]];
    let p = SelectionProblem::new(vec![0.9, 0.8, 0.5], sim, 2, 0.5).unwrap();
    let objectives = [(vec![0, 1], 0.8), (vec![0, 2], 1.4), (vec![1, 2], 1.2)];
    for (set, value) in &objectives {
        if (p.objective(set) - value).abs() > 1e-12 {
            failures.push(format!(
                "objective of {set:?} is {} not {value}",
                p.objective(set)
            ));
        }
    }
    let exact = solve_exact(&p, 100);
    let greedy = solve_greedy(&p);
    if exact.chosen != vec![0, 2] || greedy.chosen != vec![0, 2] {
        failures.push(format!(
            "3-candidate instance: exact {:?}, greedy {:?}",
            exact.chosen, greedy.chosen
        ));
    }

    // a duplicated high-score sentence, similarities from tf-idf. With
    // exactly K chosen, the second copy only loses to an alternative whose
    // marginal gain is non-negative, so the fillers share no token with
    // anything.
    let docs: Vec<Vec<u32>> = vec![
        vec![1, 2, 3],
        vec![4, 5],
        vec![6, 7, 8],
        vec![9, 10],
        vec![11],
    ];
    let idf = IdfTable::build(docs.iter().map(Vec::as_slice), &[]);
    let mut dup_trials = 0;
    for _ in 0..200 {
        let top = r.random_range(0.5..1.0);
        let alpha = r.random_range(top / 2.0 + 1e-3..2.0);
        let cands: Vec<&[u32]> = vec![&docs[0], &docs[0], &docs[1], &docs[2], &docs[3]];
        let sim = tfidf_cosine_matrix(&cands, &idf);
        let mut scores = vec![top, top];
        scores.extend((0..3).map(|_| r.random_range(0.0..top)));
        let k = r.random_range(2..=4);
        let p = SelectionProblem::new(scores, sim, k, alpha).unwrap();
        dup_trials += 1;
        for sel in [solve_exact(&p, 100), solve_greedy(&p)] {
            if sel.chosen.contains(&0) && sel.chosen.contains(&1) {
                failures.push(format!(
                    "duplicate chosen twice (score {top:.3}, alpha {alpha:.3})"
                ));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("top-K at alpha=0 on 200 problems; 3-candidate instance gives {{1,3}} (objective 1.4) for exact and greedy; duplicate chosen at most once in {dup_trials} trials")
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// Metric oracles (criterion 5)
// ---------------------------------------------------------------------------

/// Straight-line reference implementations on plain vectors.
mod oracle {
    fn ngrams(tokens: &[u8], n: usize) -> Vec<Vec<u8>> {
        if tokens.len() < n {
            return Vec::new();
        }
        (0..=tokens.len() - n)
            .map(|i| tokens[i..i + n].to_vec())
            .collect()
    }

    fn count(list: &[Vec<u8>], g: &[u8]) -> usize {
        list.iter().filter(|x| x.as_slice() == g).count()
    }

    /// Distinct entries of `list`, first occurrence order.
    fn distinct(list: &[Vec<u8>]) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = Vec::new();
        for g in list {
            if !out.contains(g) {
                out.push(g.clone());
            }
        }
        out
    }

    pub fn bleu(cand: &[u8], refs: &[Vec<u8>], max_n: usize) -> f64 {
        if cand.is_empty() || refs.is_empty() {
            return 0.0;
        }
        let mut log_p = Vec::new();
        for n in 1..=max_n {
            let c = ngrams(cand, n);
            let mut clipped = 0;
            for g in distinct(&c) {
                let mut best_ref = 0;
                for r in refs {
                    best_ref = best_ref.max(count(&ngrams(r, n), &g));
                }
                clipped += count(&c, &g).min(best_ref);
            }
            let p = if clipped > 0 {
                clipped as f64 / c.len() as f64
            } else if n == 1 {
                return 0.0;
            } else {
                // add-one on an order with no match
                1.0 / (c.len() as f64 + 1.0)
            };
            log_p.push(p.ln());
        }
        let mut ref_len = refs[0].len();
        for r in refs {
            let d = r.len().abs_diff(cand.len());
            let best = ref_len.abs_diff(cand.len());
            if d < best || (d == best && r.len() < ref_len) {
                ref_len = r.len();
            }
        }
        let bp = if cand.len() > ref_len {
            1.0
        } else {
            (1.0 - ref_len as f64 / cand.len() as f64).exp()
        };
        bp * (log_p.iter().sum::<f64>() / max_n as f64).exp()
    }

    fn f1(overlap: usize, c: usize, r: usize) -> f64 {
        if overlap == 0 {
            return 0.0;
        }
        let p = overlap as f64 / c as f64;
        let rec = overlap as f64 / r as f64;
        2.0 * p * rec / (p + rec)
    }

    pub fn rouge_n(cand: &[u8], refs: &[Vec<u8>], n: usize) -> f64 {
        let c = ngrams(cand, n);
        let mut best = 0.0f64;
        for r in refs {
            let rg = ngrams(r, n);
            let mut overlap = 0;
            for g in distinct(&c) {
                overlap += count(&c, &g).min(count(&rg, &g));
            }
            best = best.max(f1(overlap, c.len(), rg.len()));
        }
        best
    }

    pub fn rouge_l(cand: &[u8], refs: &[Vec<u8>]) -> f64 {
        let mut best = 0.0f64;
        for r in refs {
            let mut table = vec![vec![0usize; r.len() + 1]; cand.len() + 1];
            for i in 1..=cand.len() {
                for j in 1..=r.len() {
                    table[i][j] = if cand[i - 1] == r[j - 1] {
                        table[i - 1][j - 1] + 1
                    } else {
                        table[i - 1][j].max(table[i][j - 1])
                    };
                }
            }
            best = best.max(f1(table[cand.len()][r.len()], cand.len(), r.len()));
        }
        best
    }
}

fn criterion_5() -> Verdict {
    let mut r = rng(505);
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let tokens = |r: &mut ChaCha8Rng, lo: usize| -> Vec<u8> {
        let len = r.random_range(lo..=12);
        let vocab = r.random_range(2..=8);
        (0..len).map(|_| r.random_range(0..vocab)).collect()
    };
    for _ in 0..1000 {
        let cand = tokens(&mut r, 1);
        let refs: Vec<Vec<u8>> = (0..r.random_range(1..=3))
            .map(|_| tokens(&mut r, 0))
            .collect();
        let ref_slices: Vec<&[u8]> = refs.iter().map(Vec::as_slice).collect();
        let mut check = |name: &str, ours: f64, theirs: f64| {
            let d = (ours - theirs).abs();
            if d > worst || d.is_nan() {
                worst = if d.is_nan() { f64::INFINITY } else { d };
                worst_at = format!("{name}: {ours} vs {theirs} on {cand:?} / {refs:?}");
            }
        };
        for n in [1, 2, 4] {
            check(
                "bleu",
                sentence_bleu(&cand, &ref_slices, n),
                oracle::bleu(&cand, &refs, n),
            );
        }
        for n in [1, 2] {
            check(
                "rouge-n",
                rouge_n_f1(&cand, &ref_slices, n),
                oracle::rouge_n(&cand, &refs, n),
            );
        }
        check(
            "rouge-l",
            rouge_l_f1(&cand, &ref_slices),
            oracle::rouge_l(&cand, &refs),
        );
    }

    let c: Vec<&str> = "the cat sat".split(' ').collect();
    let rf: Vec<&str> = "the cat ate".split(' ').collect();
    let r1 = rouge_n_f1(&c, &[&rf], 1);
    let rl = rouge_l_f1(&c, &[&rf]);
    // p1 = 2/3, p2 = 1/2, p3 smoothed to 1/2, p4 (no 4-grams) to 1
    let bleu = sentence_bleu(&c, &[&rf], 4);
    let bleu_hand = (2.0 / 3.0 * 0.5 * 0.5 * 1.0f64).powf(0.25);
    let cat_ok = r1 == 2.0 / 3.0 && rl == 2.0 / 3.0 && (bleu - bleu_hand).abs() < 1e-12;
    verdict(
        worst <= 1e-9 && cat_ok,
        format!(
            "1000 random pairs, max oracle gap {worst:.1e}{}; cat/sat: ROUGE-1 {r1}, ROUGE-L {rl}, BLEU-4 {bleu:.6}",
            if worst_at.is_empty() || worst <= 1e-9 { String::new() } else { format!(" ({worst_at})") }
        ),
    )
}

// ---------------------------------------------------------------------------
// Planted corpus end to end (criteria 6–9)
// ---------------------------------------------------------------------------

struct Planted {
    _dir: tempfile::TempDir,
    root: PathBuf,
    planted: PlantedCorpus,
    base: PipelineConfig,
}

/// Published defaults with the node, attention and deep widths scaled to 32.
fn planted_config(root: &Path, files: &sentex_core::planted::PlantedFiles) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.paths.reviews = files.reviews.clone();
    c.paths.lexicon = files.lexicon.clone();
    c.paths.sentence_vectors = Some(files.sentence_vectors.clone());
    c.paths.word_vectors = Some(files.word_vectors.clone());
    c.paths.workdir = root.join("work");
    // eight reviews per user: the activity filter is scaled with the corpus
    c.corpus.min_activity = 1;
    c.model.user_dim = 32;
    c.model.item_dim = 32;
    c.model.hidden = 32;
    c.model.deep_layers = vec![32, 32];
    c
}

fn planted() -> &'static Planted {
    static CELL: OnceLock<Planted> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let planted = PlantedCorpus::generate(&PlantedConfig::default()).unwrap();
        let files = planted.write(&root.join("data")).unwrap();
        let base = planted_config(&root, &files);
        Planted {
            _dir: dir,
            root,
            planted,
            base,
        }
    })
}

struct Run {
    config: PipelineConfig,
    corpus: Corpus,
    features: FeatureStore,
    outcome: TrainOutcome,
    elapsed: Duration,
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap()
        .install(f)
}

/// All four stages in `work/<name>`.
fn full_run(base: &PipelineConfig, name: &str, workers: usize) -> Run {
    let mut config = base.clone();
    config.paths.workdir = planted().root.join("work").join(name);
    with_workers(workers, || {
        let start = Instant::now();
        pipeline::preprocess(&config).unwrap();
        let outcome = pipeline::train(&config, false).unwrap();
        pipeline::select(&config, None).unwrap();
        pipeline::evaluate(&config, None).unwrap();
        let corpus = pipeline::load_corpus(&config).unwrap();
        let features = pipeline::load_features(&config, &corpus).unwrap();
        Run {
            config: config.clone(),
            corpus,
            features,
            outcome,
            elapsed: start.elapsed(),
        }
    })
}

/// The reference run shared by criteria 6–9.
fn reference_run() -> &'static Run {
    static CELL: OnceLock<Run> = OnceLock::new();
    CELL.get_or_init(|| full_run(&planted().base, "reference", 4))
}

fn criterion_6() -> Verdict {
    let p = planted();
    let run = reference_run();
    let (test, skipped) = held_out_pairs(&run.corpus, Partition::Test, run.config.graph);
    let model = run.config.model_config();
    let mut hits = 0;
    let mut reachable = 0;
    for pair in &test {
        let key = &run.corpus.review(pair.review).key;
        let trace = forward(&pair.graph, &run.features, &run.outcome.best_params, &model).unwrap();
        let text = |s: SentenceId| &run.corpus.sentence(s).text;
        let top = pair.graph.sentences[top_indices(&trace.scores, 1)[0]];
        if p.planted.is_relevant(key, text(top)) {
            hits += 1;
        }
        if pair
            .graph
            .sentences
            .iter()
            .any(|&s| p.planted.is_relevant(key, text(s)))
        {
            reachable += 1;
        }
    }
    let total = test.len() + skipped;
    let rate = hits as f64 / total.max(1) as f64;
    let losses: Vec<f64> = run.outcome.history.iter().map(|r| r.loss).collect();
    let decreasing = losses.len() >= 5 && losses[..5].windows(2).all(|w| w[1] < w[0]);
    let fast = run.elapsed < Duration::from_secs(600);
    verdict(
        total > 0 && rate >= 0.9 && decreasing && fast,
        format!(
            "top-1 planted sentence on {hits}/{total} held-out pairs ({:.0}%; {reachable} pools contain it, \
             {skipped} pairs without candidates); best epoch {} of {}; first losses {:?} ({}); {:.0}s",
            100.0 * rate,
            run.outcome.best_epoch,
            losses.len(),
            losses.iter().take(5).map(|l| format!("{l:.4}")).collect::<Vec<_>>(),
            if decreasing { "strictly decreasing" } else { "NOT strictly decreasing" },
            run.elapsed.as_secs_f64()
        ),
    )
}

fn validation_bleu(
    config: &PipelineConfig,
    corpus: &Corpus,
    features: &FeatureStore,
    params: &ModelParams,
) -> f64 {
    let records =
        pipeline::select_partition(config, corpus, features, params, Partition::Valid).unwrap();
    pipeline::evaluate_selections(corpus, &records, Partition::Valid)
        .unwrap()
        .bleu_4
}

fn criterion_7() -> Verdict {
    let run = reference_run();
    let full = validation_bleu(
        &run.config,
        &run.corpus,
        &run.features,
        &run.outcome.best_params,
    );
    let mut rows = vec![format!("full {:.4}", full)];
    let mut pass = true;
    type Switch = fn(&mut PipelineConfig);
    let variants: [(&str, Switch); 4] = [
        ("no-gat", |c| c.ablations.disable_gat = true),
        ("no-dcn", |c| c.ablations.disable_dcn = true),
        ("avg-words", |c| c.ablations.use_avg_word_embeddings = true),
        ("no-ilp", |c| c.ablations.disable_ilp = true),
    ];
    for (name, switch) in variants {
        let mut config = run.config.clone();
        switch(&mut config);
        let score = if config.ablations.disable_ilp {
            // same model, plain top-K selection
            validation_bleu(
                &config,
                &run.corpus,
                &run.features,
                &run.outcome.best_params,
            )
        } else {
            config.paths.workdir = planted().root.join("work").join(name);
            with_workers(4, || {
                pipeline::preprocess(&config).unwrap();
                let outcome = pipeline::train(&config, false).unwrap();
                let corpus = pipeline::load_corpus(&config).unwrap();
                let features = pipeline::load_features(&config, &corpus).unwrap();
                validation_bleu(&config, &corpus, &features, &outcome.best_params)
            })
        };
        pass &= full >= score;
        rows.push(format!("{name} {score:.4}"));
    }
    verdict(
        pass,
        format!("validation BLEU-4 of selections: {}", rows.join(", ")),
    )
}

fn criterion_8() -> Verdict {
    let run = reference_run();
    let corpus = &run.corpus;
    let idf = IdfTable::build(
        corpus
            .reviews_in(Partition::Train)
            .flat_map(|r| r.sentences.iter().map(|&s| corpus.tokens(s))),
        &[UNK_ID],
    );
    let by_key: BTreeMap<&str, SentenceId> = corpus
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (s.key.as_str(), SentenceId(i as u32)))
        .collect();
    let mean_similarity = |records: &[SelectionRecord]| {
        let (mut sum, mut n) = (0.0, 0usize);
        for rec in records {
            let toks: Vec<&[u32]> = rec
                .sentences
                .iter()
                .map(|s| corpus.tokens(by_key[s.key.as_str()]))
                .collect();
            let sim = tfidf_cosine_matrix(&toks, &idf);
            for i in 0..toks.len() {
                for j in 0..i {
                    sum += sim[[i, j]];
                    n += 1;
                }
            }
        }
        sum / n.max(1) as f64
    };
    let select = |alpha: f64| {
        let mut config = run.config.clone();
        config.selection.alpha = alpha;
        pipeline::select_partition(
            &config,
            corpus,
            &run.features,
            &run.outcome.best_params,
            Partition::Test,
        )
        .unwrap()
    };
    let diverse = select(2.0);
    let plain = select(0.0);
    // pools holding the same sentence text more than once
    let (pairs, _) = held_out_pairs(corpus, Partition::Test, run.config.graph);
    let with_duplicates = pairs
        .iter()
        .filter(|p| {
            let texts: BTreeSet<&str> = p
                .graph
                .sentences
                .iter()
                .map(|&s| corpus.sentence(s).text.as_str())
                .collect();
            texts.len() < p.graph.sentences.len()
        })
        .count();
    let (a2, a0) = (mean_similarity(&diverse), mean_similarity(&plain));
    verdict(
        with_duplicates > 0 && a2 < a0,
        format!(
            "mean pairwise tf-idf cosine {a2:.4} at alpha=2 vs {a0:.4} at alpha=0 over {} test pairs \
             ({with_duplicates} pools contain duplicated sentences)",
            diverse.len()
        ),
    )
}

fn artifacts(workdir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for stage in ["corpus", "train", "select", "eval"] {
        let dir = workdir.join(stage);
        let mut names: Vec<_> = fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            // stage manifests snapshot the config, including the work directory
            .filter(|n| n != pipeline::STAGE_MANIFEST)
            .collect();
        names.sort();
        for n in names {
            out.insert(format!("{stage}/{n}"), fs::read(dir.join(&n)).unwrap());
        }
    }
    out
}

fn criterion_9() -> Verdict {
    let reference = reference_run();
    let single = full_run(&planted().base, "single", 1);
    let a = artifacts(&reference.config.paths.workdir);
    let b = artifacts(&single.config.paths.workdir);
    let differing: Vec<&String> = a
        .keys()
        .chain(b.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .collect();
    let checkpoints = a.keys().filter(|k| k.ends_with(".ckpt")).count();
    verdict(
        differing.is_empty() && checkpoints > 0,
        if differing.is_empty() {
            format!(
                "4-worker and 1-worker runs agree byte for byte on {} artifacts ({checkpoints} checkpoints, \
                 metrics, best.json, selections, reports)",
                a.len()
            )
        } else {
            format!("artifacts differ: {differing:?}")
        },
    )
}

type Criterion = (usize, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "gradient check", criterion_1),
        (2, "attention normalization", criterion_2),
        (3, "exact selection optimality", criterion_3),
        (4, "selection behaviour", criterion_4),
        (5, "metric oracles", criterion_5),
        (6, "planted-signal retrieval", criterion_6),
        (7, "ablation direction", criterion_7),
        (8, "redundancy reduction", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let wanted: BTreeSet<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    // panics are reported on the criterion's line instead
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "[{}] {n} {name} — {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
