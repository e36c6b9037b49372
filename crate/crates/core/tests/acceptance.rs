//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! (visible with `--nocapture`) before asserting.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use numlm::compute::{gradient_check, Graph, LstmState, Mode, NodeId};
use numlm::corpus::{numeral_values, tokenize, Document, TokenKind, Vocabulary};
use numlm::eval::{
    adjusted_perplexity, adjusted_perplexity_redistributed, benford_reference, corpus_digit_distribution, evaluate,
    model_leading_digits, perplexity, regression_metrics, total_variation, ClassFilter, OovClass, OovSets,
};
use numlm::gmm::{build_component_bank, em_fit, percentile_init, Component, ComponentBank};
use numlm::model::{LanguageModel, ModelKind, TokenScore};
use numlm::numeral_heads::DigitHead;
use numlm::numeral_heads::drnn::{EMISSIONS, EOS};
use numlm::train::synth::documents;
use numlm::train::{train, Checkpoint, SynthSpec, TrainOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const CLINICAL: &str = include_str!("fixtures/clinical.toml");

fn verdict(criterion: &str, pass: bool, detail: impl AsRef<str>) {
    println!("criterion {criterion}: {} ({})", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_bank() -> ComponentBank {
    ComponentBank::new(vec![
        Component { mean: 55.0, variance: 40.0, source_k: 2 },
        Component { mean: 8.0, variance: 9.0, source_k: 2 },
        Component { mean: 120.0, variance: 400.0, source_k: 2 },
    ])
}

fn small_model(kind: ModelKind, vocab: Vocabulary, dim: usize, seed: u64) -> LanguageModel {
    let bank = kind.needs_bank().then(small_bank);
    LanguageModel::new(kind, vocab, bank, dim, 0.1, &mut rng(seed)).unwrap()
}

// ---------------------------------------------------------------------------
// 1. gradients

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let doc = tokenize("the ef is 60.5 %");
    assert_eq!(doc.len(), 5);
    let vocab = Vocabulary::build([&doc], 100).unwrap();
    let mut worst = Vec::new();
    for kind in ModelKind::ALL {
        let m = small_model(kind, vocab.clone(), 4, 7);
        let report = gradient_check(&m.params, 1e-3, usize::MAX, 3, |p| {
            let mut g = Graph::new(p);
            let loss = m.document_loss(&mut g, &doc, Mode::Eval, &mut rng(0)).unwrap();
            (g.scalar_value(loss), g.backward(loss))
        });
        worst.push((kind, report.max_rel_error, report.worst.clone(), report.checked));
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let pass = max < 1e-4 && secs < 60.0;
    let detail: Vec<String> = worst.iter().map(|(k, e, _, n)| format!("{k} {e:.1e}/{n}")).collect();
    verdict("1", pass, format!("max rel err {max:.2e} in {secs:.1}s; {}", detail.join(", ")));
    assert!(pass, "{worst:?}");
}

// ---------------------------------------------------------------------------
// 2. normalization

/// Mass of every digit-level string of length ≤ `max_len` plus the mass of
/// all longer continuations.
fn trie_mass(head: &DigitHead, g: &mut Graph<'_>, state: LstmState, lp: NodeId, log_prefix: f64, depth: usize, max_len: usize) -> (f64, f64) {
    let dist = g.value(lp).to_vec();
    let ended = (log_prefix + dist[EOS]).exp();
    if depth == max_len {
        return (ended, log_prefix.exp() * (1.0 - dist[EOS].exp()));
    }
    let (mut total, mut cont) = (ended, 0.0);
    for s in (0..EMISSIONS).filter(|&s| s != EOS) {
        let mark = g.len();
        let (ns, nlp) = head.feed(g, state, s).unwrap();
        let (e, c) = trie_mass(head, g, ns, nlp, log_prefix + dist[s], depth + 1, max_len);
        total += e;
        cont += c;
        g.truncate(mark);
    }
    (total, cont)
}

fn digit_mass(m: &LanguageModel, h: &[f64], max_len: usize) -> f64 {
    let head = *m.digit_head().unwrap();
    let mut g = Graph::new(&m.params);
    let hn = g.constant(h.to_vec());
    let (s, lp) = head.start(&mut g, hn).unwrap();
    let (ended, cont) = trie_mass(&head, &mut g, s, lp, 0.0, 0, max_len);
    ended + cont
}

/// `Σ_v Q̃(v | r)` over a grid spanning ±10σ of every component.
fn grid_mass(m: &LanguageModel, h: &[f64], r: u32) -> f64 {
    let head = m.mog_head().unwrap();
    let lw: Vec<f64> = head.weights(&m.params, h).iter().map(|w| w.ln()).collect();
    let lo = head.means.iter().zip(&head.std_devs).map(|(mu, sd)| mu - 10.0 * sd).fold(f64::INFINITY, f64::min);
    let hi = head.means.iter().zip(&head.std_devs).map(|(mu, sd)| mu + 10.0 * sd).fold(f64::NEG_INFINITY, f64::max);
    let scale = 10f64.powi(r as i32);
    ((lo * scale).floor() as i64..=(hi * scale).ceil() as i64)
        .map(|k| head.log_pmf_value(&lw, k as f64 / scale, r).unwrap().exp())
        .sum()
}

#[test]
fn criterion_2_distributions_are_normalized() {
    let start = Instant::now();
    let vocab = Vocabulary::from_types(
        vec!["the".into(), "ef".into(), "is".into(), "%".into()],
        vec!["60".into(), "55.5".into(), "7".into(), "120".into()],
    );
    let prefix = tokenize("the ef is 60 % the ef is");
    let mut failures = Vec::new();

    // (a) flat softmax variants over the whole vocabulary
    for kind in [ModelKind::Softmax, ModelKind::SoftmaxRnn] {
        let m = small_model(kind, vocab.clone(), 6, 1);
        for cut in [0, 3, prefix.len()] {
            let h = m.state_after(&prefix[..cut]).unwrap();
            let s: f64 = m.full_distribution(&h).unwrap().iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                failures.push(format!("(a) {kind} sums to {s}"));
            }
        }
    }

    // (b) digit-level trie to depth 6 plus continuation
    let drnn = small_model(ModelKind::DRnn, vocab.clone(), 4, 2);
    let h = drnn.state_after(&prefix).unwrap();
    let b = digit_mass(&drnn, &h, 6);
    if (b - 1.0).abs() > 1e-9 {
        failures.push(format!("(b) trie mass {b}"));
    }

    // (c) MoG grid mass per precision
    let mog = small_model(ModelKind::Mog, vocab.clone(), 6, 3);
    let h = mog.state_after(&prefix).unwrap();
    for r in 0..=2 {
        let c = grid_mass(&mog, &h, r);
        if (c - 1.0).abs() > 1e-6 {
            failures.push(format!("(c) r={r} grid mass {c}"));
        }
    }

    // (d) combination: closed inventory + digit strings + value grid
    let combo = small_model(ModelKind::Combination, vocab, 4, 4);
    let h = combo.state_after(&prefix).unwrap();
    let alpha = combo.strategy_weights(&h).unwrap();
    let out = combo.params.get(combo.params.id("out.numerals").unwrap());
    let logits: Vec<f64> = (0..out.rows()).map(|i| out.row(i).iter().zip(&h).map(|(a, b)| a * b).sum()).collect();
    let hs_mass: f64 = numlm::compute::softmax(&logits).iter().sum();
    let d_mass = digit_mass(&combo, &h, 4);
    let pattern = combo.mog_head().unwrap().pattern;
    let mut g = Graph::new(&combo.params);
    let hn = g.constant(h.clone());
    let (pr, tail) = pattern.log_probs_up_to(&mut g, hn, 2).unwrap();
    let mog_mass: f64 = (0..=2u32).map(|r| pr[r as usize].exp() * grid_mass(&combo, &h, r)).sum::<f64>() + tail.exp();
    let d = alpha[0] * hs_mass + alpha[1] * d_mass + alpha[2] * mog_mass;
    if (d - 1.0).abs() > 1e-6 {
        failures.push(format!("(d) combination mass {d}"));
    }

    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 120.0;
    verdict("2", pass, format!("trie {b:.12}, combination {d:.9}, {secs:.1}s {failures:?}"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3. adjusted perplexity

fn random_fixture(seed: u64) -> (Vec<TokenScore>, OovSets) {
    let mut r = rng(seed);
    let n = r.random_range(5..60);
    let mut oov = OovSets::default();
    let word_types = r.random_range(1..9);
    let num_types = r.random_range(1..9);
    oov.words = OovClass { members: (0..word_types).map(|i| format!("w{i}")).collect() };
    oov.numerals = OovClass { members: (0..num_types).map(|i| i.to_string()).collect() };
    let scores = (0..n)
        .map(|_| TokenScore {
            log_prob: r.random_range(-12.0..-0.01),
            kind: if r.random_bool(0.4) { TokenKind::Numeral } else { TokenKind::Word },
            oov: r.random_bool(0.3),
            state: None,
        })
        .collect();
    (scores, oov)
}

#[test]
fn criterion_3_adjusted_perplexity_oracles_agree() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (scores, oov) = random_fixture(seed);
        for f in [ClassFilter::Words, ClassFilter::Numerals, ClassFilter::All] {
            let closed = adjusted_perplexity(&scores, f, &oov).unwrap();
            let direct = adjusted_perplexity_redistributed(&scores, f, &oov).unwrap();
            match (closed, direct) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs() / a),
                (None, None) => {}
                other => panic!("one route produced no value: {other:?}"),
            }
        }
    }
    let mut equal = true;
    for seed in 0..20 {
        let (mut scores, _) = random_fixture(100 + seed);
        scores.iter_mut().for_each(|s| s.oov = false);
        for f in [ClassFilter::Words, ClassFilter::Numerals, ClassFilter::All] {
            equal &= adjusted_perplexity(&scores, f, &OovSets::default()).unwrap() == perplexity(&scores, f);
        }
    }
    let pass = worst <= 1e-12 && equal;
    verdict("3", pass, format!("max relative gap {worst:.1e}; APP = PP without OOV: {equal}"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. hierarchical decoupling

#[test]
fn criterion_4_numeral_branch_leaves_words_untouched() {
    let docs = [tokenize("the ef is 60 % and hr 72 bpm"), tokenize("ef 55.5 today and 12 more")];
    let vocab = Vocabulary::build(docs.iter(), 100).unwrap();
    let mut m = small_model(ModelKind::HSoftmax, vocab, 8, 5);
    let words = |m: &LanguageModel| -> Vec<u64> {
        docs.iter()
            .flat_map(|d| m.score_document(d).unwrap())
            .filter(|s| s.kind == TokenKind::Word)
            .map(|s| s.log_prob.to_bits())
            .collect()
    };
    let numerals = |m: &LanguageModel| -> Vec<f64> {
        docs.iter()
            .flat_map(|d| m.score_document(d).unwrap())
            .filter(|s| s.kind == TokenKind::Numeral)
            .map(|s| s.log_prob)
            .collect()
    };
    let (before, nb) = (words(&m), numerals(&m));
    let mut r = rng(9);
    for id in m.numeral_branch_params() {
        m.params.get_mut(id).data.iter_mut().for_each(|x| *x += r.random_range(-0.5..0.5));
    }
    let (after, na) = (words(&m), numerals(&m));
    let changed = nb.iter().zip(&na).any(|(a, b)| a != b);
    let pass = before == after && changed;
    verdict("4", pass, format!("{} word scores bit-identical, numeral scores moved: {changed}", before.len()));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5. EM

#[test]
fn criterion_5_em_is_monotone_and_recovers_clusters() {
    let mut violations = 0;
    for seed in 0..50 {
        let mut r = rng(seed);
        let n = r.random_range(30..300);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let centre: f64 = [1.0, 20.0, 75.0][r.random_range(0..3)];
                (centre + Normal::new(0.0, 1.0 + centre / 10.0).unwrap().sample(&mut r)).max(0.0)
            })
            .collect();
        let k = [2, 4, 8][seed as usize % 3];
        let m = em_fit(&values, k, &percentile_init(&values, k)).unwrap();
        violations += m.trace.windows(2).filter(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1.0)).count();
    }
    let mut r = rng(77);
    let mut values: Vec<f64> = (0..500).map(|_| Normal::new(10.0, 1.0).unwrap().sample(&mut r)).collect();
    values.extend((0..500).map(|_| Normal::new(30.0, 2.0).unwrap().sample(&mut r)));
    let m = em_fit(&values, 2, &percentile_init(&values, 2)).unwrap();
    let mut means = m.means.clone();
    means.sort_by(f64::total_cmp);
    let recovered = (means[0] - 10.0).abs() < 0.1 && (means[1] - 30.0).abs() < 0.1;
    let pass = violations == 0 && recovered;
    verdict("5", pass, format!("{violations} decreasing steps over 50 fits; means {means:.3?}"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6. synthetic end-to-end

const VOCAB_CAP: usize = 80;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const COMPARED: [ModelKind; 5] = [ModelKind::Softmax, ModelKind::HSoftmax, ModelKind::DRnn, ModelKind::Mog, ModelKind::Combination];

#[derive(Debug, Clone)]
struct SeedRun {
    numeral_oov_rate: f64,
    app: BTreeMap<&'static str, f64>,
    mape_continuous: BTreeMap<&'static str, f64>,
}

fn run_seed(seed: u64) -> SeedRun {
    static CACHE: OnceLock<Mutex<HashMap<u64, SeedRun>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&seed) {
        return r.clone();
    }
    let corpus = SynthSpec::parse(CLINICAL).unwrap().generate(seed).unwrap();
    assert!(corpus.train.len() + corpus.dev.len() + corpus.test.len() >= 2000);
    let (train_docs, dev_docs, test_docs) = (documents(&corpus.train), documents(&corpus.dev), documents(&corpus.test));
    let vocab = Vocabulary::build(train_docs.iter(), VOCAB_CAP).unwrap();
    let test_numerals: Vec<_> = test_docs.iter().flatten().filter(|t| t.is_numeral()).collect();
    let numeral_oov_rate =
        test_numerals.iter().filter(|t| vocab.lookup(t).oov).count() as f64 / test_numerals.len() as f64;
    let bank = build_component_bank(&numeral_values(&train_docs)).unwrap().0;
    let continuous: std::collections::HashSet<(usize, usize)> = corpus
        .test
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.slots.iter().filter(|s| s.continuous).map(move |s| (d, s.token)))
        .collect();
    let opts = TrainOptions { adam: Default::default(), patience: 3, max_epochs: 30, seed };
    let mut run = SeedRun { numeral_oov_rate, app: BTreeMap::new(), mape_continuous: BTreeMap::new() };
    for kind in COMPARED {
        let bank = kind.needs_bank().then(|| bank.clone());
        let model = LanguageModel::new(kind, vocab.clone(), bank, 32, 0.1, &mut rng(seed)).unwrap();
        let trained = train(model, &opts, &train_docs, &dev_docs).unwrap().model;
        let all = evaluate(&trained, &train_docs, &test_docs, 0.9, |_, _| true).unwrap();
        let cont = evaluate(&trained, &train_docs, &test_docs, 0.9, |d, t| continuous.contains(&(d, t))).unwrap();
        run.app.insert(kind.name(), all.report.app.numerals.unwrap());
        run.mape_continuous.insert(kind.name(), cont.report.reg.unwrap().mape.unwrap());
    }
    cache.lock().unwrap().insert(seed, run.clone());
    run
}

/// Holds at the first seed, or at ≥ 4 of 5 seeds.
fn over_seeds(check: impl Fn(&SeedRun) -> bool) -> (bool, usize, usize) {
    let first = run_seed(SEEDS[0]);
    if check(&first) {
        return (true, 1, 1);
    }
    let held = SEEDS.iter().filter(|&&s| check(&run_seed(s))).count();
    (held >= 4, held, SEEDS.len())
}

#[test]
fn criterion_6_setup_forces_numeral_oov() {
    let run = run_seed(SEEDS[0]);
    let pass = run.numeral_oov_rate >= 0.5;
    verdict("6 setup", pass, format!("test numeral OOV rate {:.1}% at cap {VOCAB_CAP}", 100.0 * run.numeral_oov_rate));
    assert!(pass);
}

#[test]
fn criterion_6a_hierarchical_softmax_beats_softmax_on_numeral_app() {
    let run = run_seed(SEEDS[0]);
    let ratio = run.app["softmax"] / run.app["h-softmax"];
    let pass = ratio >= 10.0;
    verdict("6a", pass, format!("softmax APP {:.2} / h-softmax APP {:.2} = {ratio:.3}", run.app["softmax"], run.app["h-softmax"]));
    assert!(pass, "numeral APP ratio {ratio:.3} < 10");
}

#[test]
fn criterion_6b_mog_has_lower_mape_than_hierarchical_softmax() {
    let (pass, held, of) = over_seeds(|r| r.mape_continuous["MoG"] < r.mape_continuous["h-softmax"]);
    let r = run_seed(SEEDS[0]);
    verdict(
        "6b",
        pass,
        format!("continuous-slot MAPE MoG {:.2}% vs h-softmax {:.2}% (held {held}/{of})", r.mape_continuous["MoG"], r.mape_continuous["h-softmax"]),
    );
    assert!(pass);
}

#[test]
fn criterion_6c_combination_matches_best_constituent() {
    let check = |r: &SeedRun| {
        let best = ["h-softmax", "d-RNN", "MoG"].iter().map(|k| r.app[k]).fold(f64::INFINITY, f64::min);
        r.app["combination"] <= best * 1.05
    };
    let (pass, held, of) = over_seeds(check);
    let r = run_seed(SEEDS[0]);
    verdict("6c", pass, format!("numeral APP {:.2?} (held {held}/{of})", r.app));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7. Benford

const BENFORD_SPEC: &str = r#"
documents = 1500
sentences = [1, 3]

[[templates]]
text = "the reading was {x}"

[slots.x]
dist = "log_uniform"
low = 1
high = 1000000
precision = 0
"#;

#[test]
fn criterion_7_first_digits_follow_benford() {
    let mut r = rng(31);
    let samples: Vec<String> = (0..100_000).map(|_| format!("{:.2}", 10f64.powf(r.random_range(0.0..6.0)))).collect();
    let corpus_side = corpus_digit_distribution(samples.iter().map(String::as_str), 1).unwrap();
    let tv_corpus = total_variation(&corpus_side, &benford_reference(1).unwrap());

    let corpus = SynthSpec::parse(BENFORD_SPEC).unwrap().generate(5).unwrap();
    let (train_docs, dev_docs, test_docs) = (documents(&corpus.train), documents(&corpus.dev), documents(&corpus.test));
    let vocab = Vocabulary::build(train_docs.iter(), 50).unwrap();
    let model = LanguageModel::new(ModelKind::DRnn, vocab, None, 16, 0.1, &mut rng(5)).unwrap();
    let opts = TrainOptions { adam: Default::default(), patience: 3, max_epochs: 15, seed: 5 };
    let trained = train(model, &opts, &train_docs, &dev_docs).unwrap().model;
    let data: Vec<&str> = train_docs.iter().flatten().filter(|t| t.is_numeral()).map(|t| t.surface.as_str()).collect();
    let data_side = corpus_digit_distribution(data, 1).unwrap();
    let model_side = model_leading_digits(&trained, &test_docs).unwrap();
    let tv_model = total_variation(&model_side, &data_side);

    let pass = tv_corpus < 0.02 && tv_model < 0.1;
    verdict("7", pass, format!("corpus TV to Benford {tv_corpus:.4}; d-RNN TV to data {tv_model:.4}"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. metric fixtures

#[test]
fn criterion_8_metric_fixtures() {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let m = regression_metrics(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
    check("rmse", (m.rmse - 12.5f64.sqrt()).abs() < 1e-12);
    check("mae", m.mae == 3.5);
    check("mdae", m.mdae == 3.5);
    let m = regression_metrics(&[100.0, 200.0], &[90.0, 220.0]).unwrap();
    check("mape", (m.mape.unwrap() - 10.0).abs() < 1e-12);
    check("mdape", (m.mdape.unwrap() - 10.0).abs() < 1e-12);
    let m = regression_metrics(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    check("all-zero targets", m.mape.is_none() && m.mdape.is_none() && m.excluded_zero_targets == 2);
    let skewed: Vec<f64> = (0..200).map(|i| (i as f64 / 20.0).exp()).collect();
    let mean = skewed.iter().sum::<f64>() / 200.0;
    let median = numlm::corpus::median(&skewed).unwrap();
    check(
        "median baseline",
        regression_metrics(&skewed, &vec![median; 200]).unwrap().mae < regression_metrics(&skewed, &vec![mean; 200]).unwrap().mae,
    );

    let tok = |p: f64, kind, oov| TokenScore { log_prob: p.ln(), kind, oov, state: None };
    let uniform: Vec<TokenScore> = (0..10).map(|_| tok(1e-3, TokenKind::Word, false)).collect();
    check("uniform PP", (perplexity(&uniform, ClassFilter::All).unwrap() - 1000.0).abs() < 1e-9);
    check("perfect PP", perplexity(&[tok(1.0, TokenKind::Word, false)], ClassFilter::All) == Some(1.0));
    let two = [tok(0.5, TokenKind::Word, false), tok(0.125, TokenKind::Word, false)];
    check("two-token PP", (perplexity(&two, ClassFilter::All).unwrap() - 4.0).abs() < 1e-12);
    check("APP = PP without OOV", adjusted_perplexity(&two, ClassFilter::All, &OovSets::default()).unwrap() == perplexity(&two, ClassFilter::All));
    let mut ten: Vec<TokenScore> = (0..8).map(|_| tok(0.1, TokenKind::Word, false)).collect();
    ten.extend((0..2).map(|_| tok(0.1, TokenKind::Word, true)));
    let oov = OovSets { words: OovClass { members: (0..5).map(|i| format!("w{i}")).collect() }, ..Default::default() };
    let closed = adjusted_perplexity(&ten, ClassFilter::All, &oov).unwrap().unwrap();
    let direct = adjusted_perplexity_redistributed(&ten, ClassFilter::All, &oov).unwrap().unwrap();
    let expected = (10f64.ln() + 0.2 * 5f64.ln()).exp();
    check("APP closed form", (closed - expected).abs() / expected < 1e-12);
    check("APP routes agree", (closed - direct).abs() / closed < 1e-12);
    let empty = OovSets::default();
    check("inconsistent OOV", adjusted_perplexity(&ten, ClassFilter::All, &empty).is_err());

    let pass = failures.is_empty();
    verdict("8", pass, if pass { "all fixtures exact".to_string() } else { format!("failed: {failures:?}") });
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. determinism

#[test]
fn criterion_9_runs_are_bit_identical() {
    let spec = SynthSpec::parse(&CLINICAL.replace("documents = 2000", "documents = 150")).unwrap();
    let once = || -> (Vec<u8>, String) {
        let corpus = spec.generate(12).unwrap();
        let (train_docs, dev_docs, test_docs): (Vec<Document>, Vec<Document>, Vec<Document>) =
            (documents(&corpus.train), documents(&corpus.dev), documents(&corpus.test));
        let vocab = Vocabulary::build(train_docs.iter(), 60).unwrap();
        let bank = build_component_bank(&numeral_values(&train_docs)).unwrap().0;
        let model = LanguageModel::new(ModelKind::Combination, vocab, Some(bank), 8, 0.1, &mut rng(12)).unwrap();
        let opts = TrainOptions { adam: Default::default(), patience: 2, max_epochs: 3, seed: 12 };
        let outcome = train(model, &opts, &train_docs, &dev_docs).unwrap();
        let report = evaluate(&outcome.model, &train_docs, &test_docs, 0.9, |_, _| true).unwrap().report;
        let ckpt = Checkpoint { config_text: String::new(), train_digest: String::new(), log: outcome.log, model: outcome.model };
        (ckpt.to_bytes().unwrap(), report.to_json().unwrap())
    };
    let (a, b) = (once(), once());
    let pass = a.0 == b.0 && a.1 == b.1;
    verdict("9", pass, format!("checkpoint {} bytes, eval.json {} bytes", a.0.len(), a.1.len()));
    assert!(pass);
}
