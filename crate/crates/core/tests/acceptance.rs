//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use charctx::corpus::{read_conll, CharVocab, Tokens};
use charctx::encoder::{load_model, save_model, EncoderConfig, Model};
use charctx::numkernel::{check_gradients, GradCheckConfig, Tape};
use charctx::probes::synthetic::{morphology_corpus, two_topic_corpus, TopicSentence, SUFFIXES};
use charctx::probes::{
    chunk_probe, nearest_words, rank_contexts, typo_eval, ChunkProbeConfig, ClassifierConfig, ContextClassifier,
    ContextTask, FeatureMode, MarkedContext,
};
use charctx::training::{read_corpus, sample_batch_noise, sentence_loss, Event, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 11] = [
    (1, "gradient oracle", gradient_oracle),
    (2, "target exclusion", target_exclusion),
    (3, "sweep equivalence", sweep_equivalence),
    (4, "training progress", training_progress),
    (5, "morphology capture", morphology_capture),
    (6, "context ranking", context_ranking),
    (7, "chunking probe ordering", chunking_ordering),
    (8, "typo robustness shape", typo_shape),
    (9, "parameter accounting", parameter_accounting),
    (10, "serialization", serialization),
    (11, "oov totality", oov_totality),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!o.pass);
        println!(
            "criterion {n:>2} {} {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn letters() -> CharVocab {
    CharVocab::from_chars("abcdefghijklmnopqrstuvwxyz".chars().collect()).unwrap()
}

fn random_word<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

fn random_tokens<R: Rng>(rng: &mut R, len: usize) -> Tokens {
    (0..len).map(|_| random_word(rng, 8)).collect()
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let tokens: Vec<Tokens> = ["the cat sat on the mat", "a dog ate the cat food"]
        .iter()
        .map(|s| s.split(' ').map(String::from).collect())
        .collect();
    let config = TrainConfig {
        encoder: EncoderConfig::tiny(),
        min_count: 1,
        seed: 3,
        ..Default::default()
    };
    let trainer = Trainer::from_tokens(config, &tokens).unwrap();
    let data = trainer.prepare(&tokens).unwrap();
    let noise = sample_batch_noise(trainer.noise(), 10, &data, &mut ChaCha8Rng::seed_from_u64(4));
    // Random parameters well away from zero, so no ReLU input sits within
    // a finite-difference step of its kink.
    let mut model = trainer.model().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ids: Vec<_> = model.store().ids().collect();
    for id in ids {
        for x in model.store_mut().get_mut(id).data_mut() {
            *x = rng.random_range(-0.5..0.5);
        }
    }
    let store = model.store();
    let loss = |tape: &mut Tape<'_>| {
        let a = sentence_loss(tape, model.layout(), &data[0], &noise[0], trainer.noise())?;
        let b = sentence_loss(tape, model.layout(), &data[1], &noise[1], trainer.noise())?;
        tape.add(a, b)
    };
    let mut worst: (f64, String) = (0.0, String::new());
    let mut probes = 0;
    for (i, id) in store.ids().enumerate() {
        let cfg = GradCheckConfig {
            probes: 20,
            seed: i as u64,
            ..Default::default()
        };
        let report = check_gradients(store, &[id], &cfg, loss).unwrap();
        probes += report.probes.len();
        if report.max_rel_err >= worst.0 {
            worst = (report.max_rel_err, store.name(id).to_string());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "max relative error {:.2e} (worst tensor {}) over {probes} probes on {} tensors, {:.1}s; need < 1e-4 within 60s",
            worst.0,
            worst.1,
            store.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn target_exclusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut model = Model::new(EncoderConfig::tiny(), letters(), 0, 0).unwrap();
    for trial in 0..1000 {
        if trial % 100 == 0 {
            model = Model::new(EncoderConfig::tiny(), letters(), 0, rng.random()).unwrap();
        }
        let len = rng.random_range(1..=12);
        let mut tokens = random_tokens(&mut rng, len);
        let pos = rng.random_range(0..len);
        let before = model.encode_context(&model.sentence(&tokens).unwrap(), pos).unwrap();
        tokens[pos] = random_word(&mut rng, 12);
        let after = model.encode_context(&model.sentence(&tokens).unwrap(), pos).unwrap();
        if before.iter().zip(&after).any(|(a, b)| a.to_bits() != b.to_bits()) {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in 1000 replacements; need 0"),
    )
}

fn sweep_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = Model::new(EncoderConfig::tiny(), letters(), 0, 7).unwrap();
    let mut mismatched = 0;
    for _ in 0..100 {
        let len = rng.random_range(1..=20);
        let sentence = model.sentence(&random_tokens(&mut rng, len)).unwrap();
        let sweep = model.encode_sentence(&sentence).unwrap();
        let equal = (0..len).all(|i| {
            let naive = model.encode_context(&sentence, i).unwrap();
            naive
                .iter()
                .zip(&sweep[i].context)
                .all(|(a, b)| a.to_bits() == b.to_bits())
        });
        mismatched += usize::from(!equal);
    }
    outcome(mismatched == 0, format!("{mismatched} of 100 sentences differ; need 0"))
}

/// Desk-scale training setup shared by the synthetic-corpus criteria.
fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        encoder: EncoderConfig {
            char_dim: 16,
            word_hidden: 32,
            context_hidden: 32,
            mlp_hidden: 64,
            context_dim: 32,
        },
        learning_rate: 0.01,
        batch: 8,
        epochs: 10,
        min_count: 1,
        seed,
        log_every: u64::MAX,
        ..Default::default()
    }
}

const TOPIC_SEEDS: u64 = 5;

struct TopicRun {
    epoch_means: Vec<f64>,
    model: Model,
}

struct TopicRuns {
    runs: Vec<TopicRun>,
    elapsed: Duration,
}

fn train_topics(seed: u64) -> TopicRun {
    let corpus = two_topic_corpus(500, &mut ChaCha8Rng::seed_from_u64(100 + seed));
    let tokens: Vec<Tokens> = corpus.into_iter().map(|s| s.tokens).collect();
    let mut trainer = Trainer::from_tokens(desk_config(seed), &tokens).unwrap();
    let data = trainer.prepare(&tokens).unwrap();
    trainer.run(&data, None, |_, _| Ok(())).unwrap();
    TopicRun {
        epoch_means: trainer.progress().epoch_means.clone(),
        model: trainer.model().without_output(),
    }
}

fn topic_runs() -> &'static TopicRuns {
    static RUNS: OnceLock<TopicRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let runs = (0..TOPIC_SEEDS).map(train_topics).collect();
        TopicRuns {
            runs,
            elapsed: start.elapsed(),
        }
    })
}

fn training_progress() -> Outcome {
    let runs = topic_runs();
    let ratios: Vec<f64> = runs.runs.iter().map(|r| r.epoch_means[9] / r.epoch_means[0]).collect();
    let good = ratios.iter().filter(|&&r| r < 0.6).count();
    outcome(
        good >= 4 && runs.elapsed < Duration::from_secs(600),
        format!(
            "epoch-10/epoch-1 loss ratios {:?}, {good} of 5 seeds below 0.6, {:.1}s of training; need >= 4 within 600s",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn morphology_capture() -> Outcome {
    let mut rates = Vec::new();
    for seed in 0..3u64 {
        let corpus = morphology_corpus(500, 10, 5, &mut ChaCha8Rng::seed_from_u64(200 + seed));
        let mut trainer = Trainer::from_tokens(desk_config(seed), &corpus.sentences).unwrap();
        let data = trainer.prepare(&corpus.sentences).unwrap();
        trainer.run(&data, None, |_, _| Ok(())).unwrap();
        let model = trainer.model().without_output();
        let lexicon: Vec<String> = corpus.train_words.iter().map(|(w, _)| w.clone()).collect();
        let hits = corpus
            .held_out
            .iter()
            .filter(|(word, class)| {
                let result = nearest_words(&model, word, &lexicon, 5).unwrap();
                let shared = result
                    .neighbors
                    .iter()
                    .filter(|n| n.word.ends_with(SUFFIXES[*class]))
                    .count();
                shared >= 3
            })
            .count();
        rates.push(hits as f64 / corpus.held_out.len() as f64);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    outcome(
        mean >= 0.6,
        format!(
            "held-out queries with >= 3 of top-5 neighbours in their suffix class: {:?} per seed (20 queries each), mean {mean:.3}; need >= 0.6",
            rates.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn marked(model: &Model, s: &TopicSentence) -> MarkedContext {
    MarkedContext {
        sentence: model.sentence(&s.tokens).unwrap(),
        position: s.position,
    }
}

fn context_ranking() -> Outcome {
    let mut rates = Vec::new();
    for (seed, run) in topic_runs().runs.iter().enumerate() {
        let model = &run.model;
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed as u64);
        let mut separated = 0;
        for q in 0..50 {
            // Query followed by three same-topic and four other-topic
            // candidates, drawn fresh.
            let pool = two_topic_corpus(9, &mut rng);
            let query = &pool[q % 2];
            let others = pool.iter().enumerate().filter(|&(i, _)| i != q % 2).map(|(_, s)| s);
            let candidates: Vec<&TopicSentence> = others
                .clone()
                .filter(|s| s.topic == query.topic)
                .take(3)
                .chain(others.filter(|s| s.topic != query.topic).take(4))
                .collect();
            let marked_candidates: Vec<MarkedContext> = candidates.iter().map(|s| marked(model, s)).collect();
            let ranked = rank_contexts(model, &marked(model, query), &marked_candidates).unwrap();
            let same = candidates.iter().filter(|s| s.topic == query.topic).count();
            if ranked[..same].iter().all(|r| candidates[r.index].topic == query.topic) {
                separated += 1;
            }
        }
        rates.push(separated as f64 / 50.0);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    outcome(
        mean >= 0.9,
        format!(
            "queries with every same-topic candidate ranked first: {:?} per trained seed (50 queries each), mean {mean:.3}; need >= 0.9",
            rates.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(name).map(PathBuf::from).filter(|p| p.exists())
}

fn chunking_ordering() -> Outcome {
    let (Some(train_path), Some(test_path), Some(text_path)) = (
        env_path("CONLL2000_TRAIN"),
        env_path("CONLL2000_TEST"),
        env_path("PRETRAIN_TEXT"),
    ) else {
        return outcome(
            false,
            "needs CoNLL-2000 train/test files and a 1M-word public text sample; set CONLL2000_TRAIN, CONLL2000_TEST and PRETRAIN_TEXT",
        );
    };
    let start = Instant::now();
    let read = |p: &PathBuf| read_conll(BufReader::new(File::open(p).unwrap())).unwrap();
    let train = read(&train_path).take_tokens(5000);
    let test = read(&test_path).take_tokens(5000);

    let mut text = read_corpus(&text_path, 64).unwrap();
    let mut words = 0;
    text.retain(|s| {
        words += s.len();
        words - s.len() < 1_000_000
    });
    let config = TrainConfig {
        encoder: EncoderConfig {
            char_dim: 16,
            word_hidden: 64,
            context_hidden: 64,
            mlp_hidden: 128,
            context_dim: 64,
        },
        learning_rate: 0.005,
        batch: 16,
        epochs: 1,
        min_count: 2,
        log_every: u64::MAX,
        ..Default::default()
    };
    let mut trainer = Trainer::from_tokens(config, &text).unwrap();
    let data = trainer.prepare(&text).unwrap();
    trainer.run(&data, None, |_, _| Ok(())).unwrap();
    let model = trainer.model().without_output();

    let mean_f1 = |mode: FeatureMode| {
        let scores: Vec<f64> = (0..3)
            .map(|seed| {
                let cfg = ChunkProbeConfig {
                    mode,
                    projection: 128,
                    hidden: 64,
                    epochs: 10,
                    seed,
                    ..Default::default()
                };
                chunk_probe(&model, &train, &test, &cfg).unwrap().f1()
            })
            .collect();
        scores.iter().sum::<f64>() / 3.0
    };
    let both = mean_f1(FeatureMode::WordContext);
    let word = mean_f1(FeatureMode::Word);
    let context = mean_f1(FeatureMode::Context);
    let elapsed = start.elapsed();
    outcome(
        both >= word + 1.0 && both >= context + 1.0 && elapsed < Duration::from_secs(3600),
        format!(
            "F1 we+ce {both:.2}, we {word:.2}, ce {context:.2} (3-seed means), {:.0}s; need we+ce ahead of both by >= 1 point within 3600s",
            elapsed.as_secs_f64()
        ),
    )
}

fn typo_shape() -> Outcome {
    let model = &topic_runs().runs[0].model;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let train = two_topic_corpus(200, &mut rng);
    let test = two_topic_corpus(200, &mut rng);
    let task = ContextTask::topics(model, &train, &test).unwrap();
    let cfg = ClassifierConfig::default();
    let curve = typo_eval(model, &task, &[0.0, 0.3, 0.6, 0.9], &[1, 2, 3], &cfg).unwrap();
    let clean = ContextClassifier::fit(model, &task.train, task.classes, &cfg)
        .unwrap()
        .accuracy(model, &task.test)
        .unwrap();
    let p0 = curve.at(0.0).unwrap();
    let p9 = curve.at(0.9).unwrap();
    let bitwise = p0.scores.iter().all(|s| s.to_bits() == clean.to_bits());
    outcome(
        p0.mean > p9.mean && bitwise,
        format!(
            "accuracy at p=0 {:.4}, p=0.3 {:.4}, p=0.9 {:.4}; p=0 equals unperturbed evaluation bitwise: {bitwise}",
            p0.mean,
            curve.at(0.3).unwrap().mean,
            p9.mean
        ),
    )
}

fn parameter_accounting() -> Outcome {
    let chars = CharVocab::from_chars((' '..='~').collect()).unwrap();
    let model = Model::new(EncoderConfig::default(), chars, 0, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.model");
    save_model(&model, &path).unwrap();
    let report = load_model(&path).unwrap().inspect_report();
    let encoder: usize = report
        .lines()
        .find_map(|l| l.strip_prefix("encoder_params="))
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    outcome(
        (5_950_000..=8_050_000).contains(&encoder),
        format!("encoder-only parameters {encoder} with default dimensions; need within [5950000, 8050000]"),
    )
}

fn serialization() -> Outcome {
    let corpus = two_topic_corpus(40, &mut ChaCha8Rng::seed_from_u64(5));
    let tokens: Vec<Tokens> = corpus.into_iter().map(|s| s.tokens).collect();
    let config = TrainConfig {
        encoder: EncoderConfig::tiny(),
        batch: 4,
        epochs: 2,
        min_count: 1,
        log_every: 1,
        seed: 11,
        ..Default::default()
    };
    let fresh = Trainer::from_tokens(config, &tokens).unwrap();
    let data = fresh.prepare(&tokens).unwrap();
    let half = 12;

    let record = |trainer: &mut Trainer, until: Option<u64>, steps: &mut Vec<(f64, Vec<u8>)>| {
        trainer
            .run(&data, until, |t, e| {
                if let Event::Log(line) = e {
                    steps.push((line.mean_loss, t.to_bytes()?));
                }
                Ok(())
            })
            .unwrap();
    };
    let mut uninterrupted = fresh.clone();
    let mut reference = Vec::new();
    record(&mut uninterrupted, None, &mut reference);

    let mut first = fresh.clone();
    let mut resumed_steps = Vec::new();
    record(&mut first, Some(half), &mut resumed_steps);
    let bytes = first.to_bytes().unwrap();
    let mut resumed = Trainer::from_bytes(&bytes).unwrap();
    let round_trip = resumed.to_bytes().unwrap() == bytes;
    record(&mut resumed, None, &mut resumed_steps);

    let identical_steps = resumed_steps.len() == reference.len()
        && resumed_steps
            .iter()
            .zip(&reference)
            .all(|(a, b)| a.0.to_bits() == b.0.to_bits() && a.1 == b.1);
    let final_equal = resumed.to_bytes().unwrap() == uninterrupted.to_bytes().unwrap();
    outcome(
        round_trip && identical_steps && final_equal,
        format!(
            "save-load-save byte identical: {round_trip}; resumed at step {half} matches uninterrupted run on all {} steps: {identical_steps}; final checkpoints equal: {final_equal}",
            reference.len()
        ),
    )
}

fn oov_totality() -> Outcome {
    let model = Model::new(EncoderConfig::tiny(), letters(), 0, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = 0;
    let mut unseen = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=16);
        let word: String = (0..len)
            .map(|_| {
                if rng.random_bool(0.5) {
                    rng.random_range('a'..='z')
                } else {
                    rng.random::<char>()
                }
            })
            .collect();
        unseen += usize::from(word.chars().any(|c| !c.is_ascii_lowercase()));
        let ok = match model.encode_str(&word) {
            Ok(v) => v.iter().all(|x| x.is_finite()),
            Err(_) => false,
        };
        failures += usize::from(!ok);
    }
    outcome(
        failures == 0,
        format!(
            "{failures} failures or non-finite outputs over 10000 strings ({unseen} with unseen characters); need 0"
        ),
    )
}
