use charctx::corpus::{read_conll, CharVocab, Sentence};
use charctx::encoder::{EncoderConfig, Model};
use charctx::probes::{chunk_probe, tag_set, typo_curve, ChunkProbeConfig, FeatureMode, TrainedTagger};

const CONLL: &str = "\
He PRP B-NP
reckons VBZ B-VP
the DT B-NP
deficit NN I-NP
will MD B-VP
narrow VB I-VP
. . O

The DT B-NP
pound NN I-NP
rose VBD B-VP
in IN B-PP
trading NN B-NP
. . O

Traders NNS B-NP
said VBD B-VP
the DT B-NP
market NN I-NP
will MD B-VP
rise VB I-VP
. . O
";

fn model() -> Model {
    let chars = CharVocab::from_chars("abcdefghijklmnopqrstuvwxyzHTP.".chars().collect()).unwrap();
    Model::new(EncoderConfig::tiny(), chars, 0, 9).unwrap()
}

fn small(mode: FeatureMode) -> ChunkProbeConfig {
    ChunkProbeConfig {
        mode,
        projection: 12,
        hidden: 8,
        learning_rate: 0.02,
        epochs: 200,
        batch: 1,
        seed: 1,
        ..Default::default()
    }
}

#[test]
fn every_mode_fits_its_training_data() {
    let data = read_conll(CONLL.as_bytes()).unwrap();
    assert!(data.diagnostics.is_empty());
    let m = model();
    for mode in FeatureMode::ALL {
        let report = chunk_probe(&m, &data.sentences, &data.sentences, &small(mode)).unwrap();
        assert_eq!(report.classes, 6);
        assert_eq!(report.train_tokens, 20);
        assert!(report.f1() > 80.0, "{mode}: {}", report.summary());
        assert!(report.summary().contains(&format!("mode={mode}\n")));
    }
}

#[test]
fn typo_curve_at_zero_equals_the_chunk_probe() {
    let data = read_conll(CONLL.as_bytes()).unwrap();
    let m = model();
    let cfg = small(FeatureMode::WordContext);
    let train = &data.sentences[..2];
    let test = &data.sentences[2..];
    let report = chunk_probe(&m, train, test, &cfg).unwrap();

    let tagger = TrainedTagger::fit(&m, train, tag_set(train, test).unwrap(), &cfg).unwrap();
    let sentences: Vec<Sentence> = test.iter().map(|s| m.sentence(&s.words).unwrap()).collect();
    let gold: Vec<Vec<String>> = test.iter().map(|s| s.tags.clone()).collect();
    let curve = typo_curve("chunk", &sentences, m.chars(), &[0.0, 1.0], &[1, 2, 3], |noisy| {
        Ok(tagger.score(&m, noisy, &gold)?.f1())
    })
    .unwrap();
    let p0 = curve.at(0.0).unwrap();
    assert!(p0.scores.iter().all(|s| s.to_bits() == report.f1().to_bits()));
    assert!(curve.csv().starts_with("p,score,stderr\n0,"));
}

#[test]
fn unknown_test_tag_is_a_structural_error() {
    let data = read_conll(CONLL.as_bytes()).unwrap();
    let mut test = data.sentences[..1].to_vec();
    test[0].tags[0] = "B-ADJP".into();
    assert!(chunk_probe(&model(), &data.sentences[1..], &test, &small(FeatureMode::Word)).is_err());
}
