//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and
//! exits nonzero if any check fails.
//!
//! The full-scale accuracy check runs only when `MEDQA_FULL_PAIRS` (pair TSV)
//! and `MEDQA_FULL_VECTORS` (300-d word vectors) are set.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request};
use medqa::commands::{cmd_train, TrainArgs};
use medqa::service::{router, AppState};
use medqa::stack::StackArgs;
use medqa_core::corpus::{filter_medical, parse_pairs, sample_balanced, serialize_pairs, QuoraRow};
use medqa_core::embeddings::{embed_sequence, tokenize, EmbeddingTable};
use medqa_core::encoder::{EncoderDims, HbamParameters};
use medqa_core::entity::{naive_scan, EntityExtractor, MedicalDictionary, PatternAutomaton};
use medqa_core::numeric::{finite_diff_gradient, GradientReport, Vector};
use medqa_core::router::{AnswerSource, ChatAnswer};
use medqa_core::similarity::{pair_loss, pair_loss_and_grad, score_pair, SimilarityModel};
use medqa_core::synthetic::{toy_corpus, toy_vectors};
use medqa_core::trainer::{evaluate, split, train, TrainConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

const WORDS: &[&str] = &[
    "cold", "flu", "fever", "cough", "asthma", "what", "is", "the", "how", "do", "you", "treat", "cure", "symptoms",
    "of", "a", "cat", "weed", "lung", "cancer", "sawdust", "allergy", "zebra", "quantum",
];

fn sentence(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn similarity_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = EncoderDims::new(8, 6);
    let params = HbamParameters::init(dims, 11).map_err(|e| e.to_string())?;
    let table = EmbeddingTable::new(8, 5);
    let mut worst = 0.0f64;
    let mut worst_identity = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (sentence(&mut rng, 12), sentence(&mut rng, 12));
        let s = score_pair(&params, &table, &a, &b, 10).map_err(|e| e.to_string())?;
        let l1: f64 = s
            .left_encoding
            .pooled
            .iter()
            .zip(s.right_encoding.pooled.iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        worst = worst.max((s.similarity - (-l1).exp()).abs());
        let same = score_pair(&params, &table, &a, &a, 10).map_err(|e| e.to_string())?;
        worst_identity = worst_identity.max((same.similarity - 1.0).abs());
    }
    ensure(worst <= 1e-9, || format!("max |sim - exp(-L1)| = {worst:e}"))?;
    ensure(worst_identity <= 1e-9, || format!("max |sim(x, x) - 1| = {worst_identity:e}"))?;
    Ok(format!("100 pairs, max deviation {worst:.1e}, identity deviation {worst_identity:.1e}"))
}

fn attention_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let dim = rng.random_range(1..=6);
        let hidden = rng.random_range(1..=5);
        let len = rng.random_range(1..=12);
        let params = HbamParameters::init(EncoderDims::new(dim, hidden), trial).map_err(|e| e.to_string())?;
        let embedded: Vec<Vector> = (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>().into())
            .collect();
        let mut mask: Vec<bool> = (0..len).map(|_| rng.random_bool(0.6)).collect();
        if !mask.iter().any(|&m| m) {
            let i = rng.random_range(0..len);
            mask[i] = true;
        }
        let enc = params.encode(&embedded, &mask).map_err(|e| e.to_string())?;
        let total: f64 = enc.attention_weights.iter().zip(&mask).filter(|(_, &m)| m).map(|(a, _)| a).sum();
        worst = worst.max((total - 1.0).abs());
        for (i, (&a, &m)) in enc.attention_weights.iter().zip(&mask).enumerate() {
            ensure(m || a == 0.0, || format!("trial {trial}: pad {i} has weight {a:e}"))?;
        }
    }
    ensure(worst <= 1e-6, || format!("max |sum - 1| = {worst:e}"))?;
    Ok(format!("1000 encodings, max |sum - 1| = {worst:.1e}, pads exactly 0"))
}

fn gradient_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut trials = 0;
    for hidden in 1..=4 {
        for dim in 1..=5 {
            for max_len in 1..=3 {
                let params = HbamParameters::init(EncoderDims::new(dim, hidden), rng.random()).map_err(|e| e.to_string())?;
                let table = EmbeddingTable::new(dim, rng.random());
                let left = embed_sequence(&table, &tokenize(&sentence(&mut rng, 3)), max_len);
                let right = embed_sequence(&table, &tokenize("zebra quantum lung"), max_len);
                let label = f64::from(rng.random_range(0..=1u8));
                let mut grads = HbamParameters::zeros(params.dims());
                pair_loss_and_grad(&params, &left, &right, label, &mut grads).map_err(|e| e.to_string())?;
                let numeric = finite_diff_gradient(
                    |flat| {
                        let mut q = params.clone();
                        q.set_flat(flat).expect("same length");
                        pair_loss(&q, &left, &right, label).expect("finite")
                    },
                    &params.to_flat(),
                    1e-4,
                )
                .map_err(|e| e.to_string())?;
                let mut off = 0;
                for (name, g) in grads.tensors() {
                    let report = GradientReport::compare(&name, g, &numeric[off..off + g.len()]);
                    ensure(report.max_relative_error <= 1e-4, || {
                        format!("hidden {hidden} dim {dim} len {max_len}: {name} relative error {:e}", report.max_relative_error)
                    })?;
                    worst = worst.max(report.max_relative_error);
                    off += g.len();
                }
                trials += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{trials} micro models, max relative error {worst:.1e}, {:.1}s", elapsed.as_secs_f64()))
}

fn trainability() -> Check {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let config = TrainConfig {
        epochs: 50,
        hidden: 16,
        embedding_dim: 16,
        seed: 7,
        ..TrainConfig::default()
    };
    let table = toy_vectors(16, 7);
    let corpus = toy_corpus(7);
    ensure(corpus.len() == 200, || format!("toy corpus has {} pairs", corpus.len()))?;
    let (train_set, test_set) = split(&corpus, config.train_fraction, 7).map_err(|e| e.to_string())?;
    let outcome = pool.install(|| train(&config, &table, &train_set)).map_err(|e| e.to_string())?;
    let model = SimilarityModel::new(outcome.params, table, config.max_seq_length).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &test_set, 0.5).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let h = &outcome.loss_history;
    let (first, last) = (h[0], h[h.len() - 1]);
    let sep = report.separation().unwrap_or(f64::NAN);
    ensure(last < first, || format!("loss {first} -> {last}"))?;
    ensure(report.accuracy >= 0.9, || format!("held-out accuracy {}", report.accuracy))?;
    ensure(sep >= 0.3, || format!("separation {sep}"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "loss {first:.4} -> {last:.4}, accuracy {:.3}, separation {sep:.3}, {:.1}s on one thread",
        report.accuracy,
        elapsed.as_secs_f64()
    ))
}

fn full_scale_accuracy() -> Outcome {
    let (Ok(pairs), Ok(vectors)) = (std::env::var("MEDQA_FULL_PAIRS"), std::env::var("MEDQA_FULL_VECTORS")) else {
        return Outcome::Skip("set MEDQA_FULL_PAIRS and MEDQA_FULL_VECTORS to run".into());
    };
    let run = || -> anyhow::Result<f64> {
        let dir = tempfile::tempdir()?;
        let config = dir.path().join("full.toml");
        std::fs::write(&config, toml::to_string(&TrainConfig::full_scale())?)?;
        let args = TrainArgs {
            config: Some(config),
            pairs: pairs.into(),
            vectors: vectors.into(),
            out: dir.path().join("model.json"),
            loss_csv: None,
            seed: None,
            threshold: 0.5,
            json: false,
        };
        Ok(cmd_train(&args, &mut std::io::sink())?.held_out.accuracy)
    };
    match run() {
        Ok(acc) if (acc - 0.812).abs() <= 0.03 => Outcome::Pass(format!("held-out accuracy {acc:.4}")),
        Ok(acc) => Outcome::Fail(format!("held-out accuracy {acc:.4}, expected 0.812 +/- 0.03")),
        Err(e) => Outcome::Fail(format!("{e:#}")),
    }
}

fn aho_corasick_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let alphabet = ['a', 'b', 'c', ' ', ',', 'é', 'B'];
    let mut total_hits = 0;
    for trial in 0..1000 {
        let n_terms = rng.random_range(1..=12);
        let terms: Vec<String> = (0..n_terms)
            .map(|_| {
                let len = rng.random_range(1..=4);
                (0..len).map(|_| ['a', 'b', 'c'][rng.random_range(0..3)]).collect()
            })
            .collect();
        let text: String = (0..rng.random_range(0..80)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();

        let automaton = PatternAutomaton::new(&terms).map_err(|e| e.to_string())?;
        let mut fast: Vec<_> = automaton.scan(text.as_bytes()).into_iter().map(|m| (m.pattern, m.start, m.end)).collect();
        let mut slow: Vec<_> = naive_scan(&terms, text.as_bytes()).into_iter().map(|m| (m.pattern, m.start, m.end)).collect();
        fast.sort_unstable();
        slow.sort_unstable();
        ensure(fast == slow, || format!("trial {trial}: {terms:?} in {text:?}: {fast:?} vs {slow:?}"))?;
        total_hits += fast.len();

        let extractor = EntityExtractor::new(MedicalDictionary::new(&terms, &[] as &[&str])).map_err(|e| e.to_string())?;
        for m in extractor.extract(&text) {
            let before = text[..m.start].chars().next_back();
            let after = text[m.end..].chars().next();
            ensure(!before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric), || {
                format!("trial {trial}: {:?} at {}..{} is flanked in {text:?}", m.term, m.start, m.end)
            })?;
            ensure(text[m.start..m.end].to_lowercase() == m.term, || {
                format!("trial {trial}: span {}..{} is not {:?}", m.start, m.end, m.term)
            })?;
        }
    }
    Ok(format!("1000 trials, {total_hits} raw hits identical, no flanked entity"))
}

fn graph_stack() -> StackArgs {
    StackArgs {
        graph: Some(data("graph.jsonl")),
        dict: Some(data("dict.txt")),
        top_k: 3,
        fuzzy_floor: 0.8,
        ..StackArgs::default()
    }
}

fn full_stack() -> StackArgs {
    StackArgs {
        vectors: Some(data("toy/toy_vectors.txt")),
        model: Some(data("toy/toy_model.json")),
        qa: Some(data("qa.jsonl")),
        ..graph_stack()
    }
}

fn symptom_scenario() -> Check {
    let snap = graph_stack().load().map_err(|e| format!("{e:#}"))?;
    let a = snap.answer("What are the symptoms of cold?");
    ensure(a.source == AnswerSource::Kg, || format!("source {:?}: {}", a.source, a.text))?;
    ensure(a.text.contains("fever"), || format!("text {:?}", a.text))?;
    Ok(format!("{:?}", a.text))
}

fn corpus_pipeline() -> Check {
    let raw = std::fs::read(data("table1_pairs.tsv")).map_err(|e| e.to_string())?;
    let parsed = parse_pairs(&raw[..]).map_err(|e| e.to_string())?;
    ensure(parsed.errors.is_empty(), || format!("row errors {:?}", parsed.errors))?;
    let expected = [
        (130859, 209926, 209927, "How do you treat a cat with a cold?", "How can you cure a cat of a cold?"),
        (
            82425,
            139763,
            133638,
            "How much medical evidence is there in support of the claim weed causes cancer?",
            "Does weed give you lung cancer?",
        ),
        (261370, 377490, 377491, "How can an allergy to sawdust be treated?", "How do you treat sawdust allergy?"),
    ];
    ensure(parsed.rows.len() == 3, || format!("{} rows", parsed.rows.len()))?;
    for (r, e) in parsed.rows.iter().zip(expected) {
        ensure(
            (r.id, r.qid1, r.qid2, r.question1.as_str(), r.question2.as_str(), r.is_duplicate) == (e.0, e.1, e.2, e.3, e.4, 1),
            || format!("row {r:?}"),
        )?;
    }
    let mut out = Vec::new();
    serialize_pairs(&parsed.rows, &mut out).map_err(|e| e.to_string())?;
    ensure(out == raw, || "re-serialized bytes differ".into())?;

    let dict_text = std::fs::read_to_string(data("dict.txt")).map_err(|e| e.to_string())?;
    let dict = MedicalDictionary::parse(&dict_text).map_err(|e| e.to_string())?;
    let (kept, report) = filter_medical(&parsed.rows, &EntityExtractor::new(dict).map_err(|e| e.to_string())?);
    ensure(kept.len() == 3, || format!("filter kept {report:?}"))?;

    let rows: Vec<QuoraRow> = (0..12u64)
        .map(|i| QuoraRow {
            id: i,
            qid1: 2 * i,
            qid2: 2 * i + 1,
            question1: format!("question {i} a"),
            question2: format!("question {i} b"),
            is_duplicate: u8::from(i % 2 == 0),
        })
        .collect();
    let a = sample_balanced(&rows, 8, 99).map_err(|e| e.to_string())?;
    let b = sample_balanced(&rows, 8, 99).map_err(|e| e.to_string())?;
    let pos = a.iter().filter(|r| r.is_duplicate == 1).count();
    ensure(a.len() == 8 && pos == 4, || format!("{} rows, {pos} positive", a.len()))?;
    ensure(a == b, || "same seed gave different samples".into())?;
    Ok("3 rows bit-exact, 3/3 kept, 4/4 balanced sample, deterministic".into())
}

fn fuzz_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..40);
    let mut s = String::new();
    for _ in 0..len {
        match rng.random_range(0..6) {
            0 => s.push(rng.random::<char>()),
            1 => s.push(rng.random_range(' '..='~')),
            2 => s.push_str(WORDS.choose(rng).unwrap()),
            3 => s.push(*[' ', '\t', '\n', '?', '-', '\''].choose(rng).unwrap()),
            4 => s.push_str(["symptoms", "cause", "prevent", "treat", "what is", "complications"].choose(rng).unwrap()),
            _ => s.push(*['é', 'ß', 'İ', '中', '😷', '\u{200b}', '\u{0301}'].choose(rng).unwrap()),
        }
    }
    s
}

fn router_fuzz() -> Check {
    let snap = full_stack().load().map_err(|e| format!("{e:#}"))?;
    ensure(snap.corpus.is_some(), || "corpus not indexed".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for i in 0..10_000 {
        let text = fuzz_text(&mut rng);
        let answer = catch_unwind(AssertUnwindSafe(|| snap.answer(&text))).map_err(|_| format!("input {i} panicked: {text:?}"))?;
        answer
            .validate(&snap.config)
            .map_err(|e| format!("input {i} {text:?}: {e}"))?;
        let wire = serde_json::to_string(&answer).map_err(|e| e.to_string())?;
        let back: ChatAnswer = serde_json::from_str(&wire).map_err(|e| format!("input {i}: {e}"))?;
        ensure(back == answer, || format!("input {i}: JSON round trip differs"))?;
        *counts
            .entry(match answer.source {
                AnswerSource::Kg => "kg",
                AnswerSource::Qa => "qa",
                AnswerSource::None => "none",
            })
            .or_default() += 1;
    }
    Ok(format!(
        "10000 inputs valid (kg {}, qa {}, none {})",
        counts.get("kg").unwrap_or(&0),
        counts.get("qa").unwrap_or(&0),
        counts.get("none").unwrap_or(&0)
    ))
}

async fn post(app: &axum::Router, uri: &str, body: Value) -> Result<Value, String> {
    let req = Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .map_err(|e| e.to_string())?;
    let res = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.map_err(|e| e.to_string())?;
    ensure(status.is_success(), || format!("{uri} returned {status}: {}", String::from_utf8_lossy(&bytes)))?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn torn_state() -> Check {
    let snap = graph_stack().load().map_err(|e| format!("{e:#}"))?;
    let initial = snap.answer("describe cold").text;
    let app = router(AppState::new(snap));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let mut tasks = Vec::new();
        for k in 0..100u64 {
            let app = app.clone();
            tasks.push(tokio::spawn(async move {
                if k % 2 == 0 {
                    let body = json!({"kind": "disease", "name": "cold", "properties": {"description": format!("rev {k}")}});
                    let v = post(&app, "/kg/entities", body).await?;
                    Ok::<_, String>((v["snapshot"].as_u64().unwrap_or(u64::MAX), Some(k), None))
                } else {
                    let v = post(&app, "/chat", json!({"text": "describe cold"})).await?;
                    let text = v["text"].as_str().unwrap_or_default().to_owned();
                    Ok((v["snapshot"].as_u64().unwrap_or(u64::MAX), None, Some(text)))
                }
            }));
        }
        let mut rev_of = HashMap::new();
        let mut chats = Vec::new();
        for t in tasks {
            match t.await.map_err(|e| e.to_string())?? {
                (snap, Some(k), _) => {
                    ensure(rev_of.insert(snap, k).is_none(), || format!("snapshot {snap} published twice"))?;
                }
                (snap, None, Some(text)) => chats.push((snap, text)),
                _ => return Err("malformed task result".to_string()),
            }
        }
        let n_chats = chats.len();
        for (snap, text) in chats {
            let expected = match rev_of.get(&snap) {
                Some(k) => format!("cold: rev {k}"),
                None if snap == 0 => initial.clone(),
                None => return Err(format!("chat saw unknown snapshot {snap}")),
            };
            ensure(text == expected, || format!("snapshot {snap} answered {text:?}, expected {expected:?}"))?;
        }
        Ok(format!("{} mutations, {n_chats} chats, every answer matches its snapshot", rev_of.len()))
    })
}

fn run(name: &str, check: impl FnOnce() -> Check) -> Outcome {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(Ok(detail)) => Outcome::Pass(detail),
        Ok(Err(detail)) => Outcome::Fail(detail),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("{name} panicked: {msg}"))
        }
    }
}

type NamedCheck = Box<dyn FnOnce() -> Outcome>;

fn main() -> ExitCode {
    let checks: Vec<(&str, NamedCheck)> = vec![
        ("similarity equals exp(-L1)", Box::new(|| run("similarity", similarity_exactness))),
        ("attention normalization", Box::new(|| run("attention", attention_normalization))),
        ("gradient oracle", Box::new(|| run("gradient", gradient_oracle))),
        ("trainability on toy corpus", Box::new(|| run("trainability", trainability))),
        ("full-scale accuracy 81.2% +/- 3", Box::new(full_scale_accuracy)),
        ("aho-corasick oracle equivalence", Box::new(|| run("aho-corasick", aho_corasick_oracle))),
        ("symptom question answered from graph", Box::new(|| run("scenario", symptom_scenario))),
        ("corpus pipeline", Box::new(|| run("corpus", corpus_pipeline))),
        ("router fuzz", Box::new(|| run("fuzz", router_fuzz))),
        ("service torn-state", Box::new(|| run("torn-state", torn_state))),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Outcome::Pass(d) => println!("PASS {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP {name}: {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
