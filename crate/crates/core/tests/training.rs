use std::fs;

use charctx::corpus::{tokenize, Sentence, Tokens, WordId};
use charctx::encoder::{load_model, EncoderConfig};
use charctx::probes::synthetic::two_topic_corpus;
use charctx::training::{sample_batch_noise, train, OptimizerKind, TrainConfig, TrainJob, Trainer};
use charctx::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(seed: u64) -> TrainConfig {
    TrainConfig {
        encoder: EncoderConfig::tiny(),
        min_count: 1,
        seed,
        ..Default::default()
    }
}

fn loss_with_fixed_noise(t: &Trainer, data: &[Sentence], noise: &[Vec<Vec<WordId>>]) -> f64 {
    let refs: Vec<&Sentence> = data.iter().collect();
    t.loss_and_grads(&refs, noise).unwrap().0
}

#[test]
fn repeated_steps_overfit_a_b_a_b() {
    let corpus = tokenize("a b a b");
    let seeds = 100;
    let mut monotone = 0;
    for seed in 0..seeds {
        let mut t = Trainer::from_tokens(tiny(seed), &corpus).unwrap();
        assert_eq!(t.vocab().surfaces().collect::<Vec<_>>(), ["a", "b"]);
        let data = t.prepare(&corpus).unwrap();
        let noise = sample_batch_noise(
            t.noise(),
            t.config().k_noise,
            &data,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        let mut losses = vec![loss_with_fixed_noise(&t, &data, &noise)];
        for _ in 0..50 {
            t.train_step(&data).unwrap();
            losses.push(loss_with_fixed_noise(&t, &data, &noise));
        }
        monotone += usize::from(losses.windows(2).all(|w| w[1] < w[0]));
    }
    assert!(
        monotone * 100 >= 95 * seeds as usize,
        "{monotone} of {seeds} seeds decreased monotonically"
    );
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let corpus = tokenize("the cat sat\na dog ran");
    for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
        let config = TrainConfig {
            learning_rate: 0.0,
            optimizer: kind,
            ..tiny(1)
        };
        let mut t = Trainer::from_tokens(config, &corpus).unwrap();
        let data = t.prepare(&corpus).unwrap();
        let before = t.model().store().clone();
        for _ in 0..5 {
            t.train_step(&data).unwrap();
        }
        assert_eq!(t.model().store(), &before, "{kind}");
    }
}

fn topic_tokens(n: usize, seed: u64) -> Vec<Tokens> {
    two_topic_corpus(n, &mut ChaCha8Rng::seed_from_u64(seed))
        .into_iter()
        .map(|s| s.tokens)
        .collect()
}

#[test]
fn same_seed_same_checkpoint_and_seeds_differ() {
    let corpus = topic_tokens(20, 0);
    let run = |seed| {
        let config = TrainConfig {
            batch: 4,
            epochs: 2,
            ..tiny(seed)
        };
        let mut t = Trainer::from_tokens(config, &corpus).unwrap();
        let data = t.prepare(&corpus).unwrap();
        t.run(&data, None, |_, _| Ok(())).unwrap();
        t.to_bytes().unwrap()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn epoch_loss_falls_on_a_toy_corpus() {
    let corpus = topic_tokens(100, 1);
    let config = TrainConfig {
        encoder: EncoderConfig {
            char_dim: 8,
            word_hidden: 16,
            context_hidden: 16,
            mlp_hidden: 32,
            context_dim: 16,
        },
        learning_rate: 0.01,
        batch: 8,
        epochs: 5,
        ..tiny(2)
    };
    let mut t = Trainer::from_tokens(config, &corpus).unwrap();
    let data = t.prepare(&corpus).unwrap();
    let mut ends = Vec::new();
    t.run(&data, None, |_, e| {
        if let charctx::training::Event::EpochEnd { epoch, mean_loss } = e {
            ends.push((epoch, mean_loss));
        }
        Ok(())
    })
    .unwrap();
    let means = &t.progress().epoch_means;
    assert_eq!(ends.len(), 5);
    assert_eq!(ends.iter().map(|e| e.1).collect::<Vec<_>>(), *means);
    assert!(means[4] < means[0], "{means:?}");
}

#[test]
fn loss_on_a_repeated_batch_falls_window_by_window() {
    let corpus = topic_tokens(8, 2);
    let config = TrainConfig {
        learning_rate: 0.01,
        ..tiny(3)
    };
    let mut t = Trainer::from_tokens(config, &corpus).unwrap();
    let data = t.prepare(&corpus).unwrap();
    let losses: Vec<f64> = (0..60).map(|_| t.train_step(&data).unwrap().mean_loss).collect();
    let windows: Vec<f64> = losses.chunks(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    assert!(windows.windows(2).all(|w| w[1] <= w[0]), "{windows:?}");
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    let text: Vec<String> = topic_tokens(30, 4).iter().map(|t| t.join(" ")).collect();
    fs::write(&corpus, text.join("\n")).unwrap();
    let config = TrainConfig {
        batch: 4,
        epochs: 2,
        log_every: 1,
        ..tiny(7)
    };
    let full_path = dir.path().join("full.ckpt");
    let mut full_log = Vec::new();
    let job = |checkpoint: &std::path::Path, resume: Option<&std::path::Path>, max_steps| TrainJob {
        corpus: corpus.clone(),
        checkpoint: checkpoint.to_path_buf(),
        resume: resume.map(|p| p.to_path_buf()),
        max_steps,
    };
    let full = train(&job(&full_path, None, None), config.clone(), &mut full_log).unwrap();
    assert_eq!(full.step(), 16);

    let half_path = dir.path().join("half.ckpt");
    let mut log = Vec::new();
    let half = train(&job(&half_path, None, Some(8)), config.clone(), &mut log).unwrap();
    assert_eq!(half.step(), 8);
    let resumed_path = dir.path().join("resumed.ckpt");
    train(&job(&resumed_path, Some(&half_path), None), config, &mut log).unwrap();

    assert_eq!(fs::read(&resumed_path).unwrap(), fs::read(&full_path).unwrap());
    // Log lines carry wall time in their last field; compare the rest.
    let strip = |bytes: &[u8]| -> Vec<String> {
        String::from_utf8(bytes.to_vec())
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once('\t').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&log), strip(&full_log));
    assert_eq!(strip(&full_log).len(), 16);

    let model = load_model(&full_path).unwrap();
    assert_eq!(model.store(), full.model().store());
}

#[test]
fn missing_corpus_names_the_path_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let job = TrainJob {
        corpus: dir.path().join("absent.txt"),
        checkpoint: dir.path().join("out.ckpt"),
        resume: None,
        max_steps: None,
    };
    let err = train(&job, tiny(0), &mut Vec::new()).unwrap_err();
    assert!(err.to_string().contains("absent.txt"), "{err}");
    assert!(!job.checkpoint.exists());
}

#[test]
fn unwritable_checkpoint_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    fs::write(&corpus, "the cat sat\n").unwrap();
    let job = TrainJob {
        corpus,
        checkpoint: dir.path().join("missing-dir").join("out.ckpt"),
        resume: None,
        max_steps: None,
    };
    let mut log = Vec::new();
    let err = train(&job, tiny(0), &mut log).unwrap_err();
    assert!(matches!(err, Error::Path { .. }), "{err}");
    assert!(log.is_empty());
}
