use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::synthetic::TopicSentence;
use crate::corpus::{perturb_typos, CharVocab, Sentence};
use crate::encoder::{uniform, Model};
use crate::error::{Error, Result};
use crate::numkernel::{ParamId, ParamStore, Tape, Tensor2};
use crate::training::{Optimizer, OptimizerKind};

/// A labelled position whose context embedding is the only feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextExample {
    pub sentence: Sentence,
    pub position: usize,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextTask {
    pub name: String,
    pub classes: usize,
    pub train: Vec<ContextExample>,
    pub test: Vec<ContextExample>,
}

impl ContextTask {
    /// Topic classification of the marked position of generated sentences.
    pub fn topics(model: &Model, train: &[TopicSentence], test: &[TopicSentence]) -> Result<Self> {
        let convert = |set: &[TopicSentence]| -> Result<Vec<ContextExample>> {
            set.iter()
                .map(|s| {
                    Ok(ContextExample {
                        sentence: model.sentence(&s.tokens)?,
                        position: s.position,
                        label: s.topic,
                    })
                })
                .collect()
        };
        let train = convert(train)?;
        let test = convert(test)?;
        let classes = train.iter().chain(&test).map(|e| e.label + 1).max().unwrap_or(0);
        Ok(ContextTask {
            name: "topic".into(),
            classes,
            train,
            test,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 200,
            learning_rate: 0.05,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Softmax regression over frozen context embeddings, trained full-batch
/// with Adam.
pub struct ContextClassifier {
    store: ParamStore,
    weight: ParamId,
    bias: ParamId,
}

impl ContextClassifier {
    pub fn fit(model: &Model, examples: &[ContextExample], classes: usize, cfg: &ClassifierConfig) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty("classifier training data"));
        }
        if classes < 2 {
            return Err(Error::Config("classification needs at least two classes".into()));
        }
        let rows = examples
            .iter()
            .map(|e| model.encode_context(&e.sentence, e.position))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let x = Tensor2::from_rows(&refs)?;
        let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Index {
                what: "class label",
                index: bad,
                len: classes,
            });
        }

        let d = x.cols();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let weight = store.add("clf.w", uniform(d, classes, 1.0 / (d as f64).sqrt(), &mut rng));
        let bias = store.add("clf.b", Tensor2::zeros(1, classes));
        let mut opt =
            Optimizer::new(OptimizerKind::Adam, cfg.learning_rate, &store).with_weight_decay(cfg.weight_decay);
        let n = labels.len() as f64;
        for _ in 0..cfg.epochs {
            let grads = {
                let mut tape = Tape::new(&store);
                let xv = tape.input(x.clone());
                let w = tape.param(weight);
                let b = tape.param(bias);
                let y = tape.matmul(xv, w)?;
                let y = tape.add_row(y, b)?;
                let loss = tape.softmax_xent(y, &labels)?;
                let loss = tape.scale(loss, 1.0 / n);
                tape.backward(loss)?.into_params()
            };
            opt.update(&mut store, &grads);
        }
        Ok(ContextClassifier { store, weight, bias })
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        let w = self.store.get(self.weight);
        let b = self.store.get(self.bias).data();
        let scores: Vec<f64> = (0..w.cols())
            .map(|c| b[c] + features.iter().enumerate().map(|(r, x)| x * w.get(r, c)).sum::<f64>())
            .collect();
        (0..scores.len()).fold(0, |best, k| if scores[k] > scores[best] { k } else { best })
    }

    /// Fraction of `examples` classified correctly.
    pub fn accuracy(&self, model: &Model, examples: &[ContextExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("evaluation data"));
        }
        let mut correct = 0;
        for e in examples {
            let f = model.encode_context(&e.sentence, e.position)?;
            correct += usize::from(self.predict(&f) == e.label);
        }
        Ok(correct as f64 / examples.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypoPoint {
    pub p: f64,
    pub mean: f64,
    /// Standard error of the mean across seeds.
    pub stderr: f64,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypoCurve {
    pub task: String,
    pub seeds: usize,
    pub points: Vec<TypoPoint>,
}

impl TypoCurve {
    /// `p,score,stderr` with a header line.
    pub fn csv(&self) -> String {
        let mut s = String::from("p,score,stderr\n");
        for pt in &self.points {
            let _ = writeln!(s, "{},{:.6},{:.6}", pt.p, pt.mean, pt.stderr);
        }
        s
    }

    /// `key=value` lines.
    pub fn summary(&self) -> String {
        let mut s = format!("task={}\nseeds={}\n", self.task, self.seeds);
        for pt in &self.points {
            let _ = writeln!(s, "score@{}={:.6}", pt.p, pt.mean);
            let _ = writeln!(s, "stderr@{}={:.6}", pt.p, pt.stderr);
        }
        s
    }

    pub fn at(&self, p: f64) -> Option<&TypoPoint> {
        self.points.iter().find(|pt| pt.p == p)
    }
}

/// Smallest number of seeds averaged per point.
pub const MIN_TYPO_SEEDS: usize = 3;

fn check_grid(grid: &[f64], seeds: &[u64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("typo probability grid"));
    }
    if grid.iter().any(|p| !(0.0..=1.0).contains(p)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "typo probabilities must increase strictly within [0, 1]: {grid:?}"
        )));
    }
    if seeds.len() < MIN_TYPO_SEEDS {
        return Err(Error::Config(format!(
            "at least {MIN_TYPO_SEEDS} seeds required, got {}",
            seeds.len()
        )));
    }
    Ok(())
}

/// Scores `evaluate` on copies of `test` perturbed with typo probability
/// `p`, for every `p` in `grid` and every seed. Only the test sentences
/// are perturbed; at `p = 0` they are passed through unchanged.
pub fn typo_curve<F>(
    task: &str,
    test: &[Sentence],
    chars: &CharVocab,
    grid: &[f64],
    seeds: &[u64],
    mut evaluate: F,
) -> Result<TypoCurve>
where
    F: FnMut(&[Sentence]) -> Result<f64>,
{
    check_grid(grid, seeds)?;
    let mut points = Vec::with_capacity(grid.len());
    for &p in grid {
        let mut scores = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<Sentence> = test.iter().map(|s| perturb_typos(s, p, chars, &mut rng)).collect();
            scores.push(evaluate(&noisy)?);
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        points.push(TypoPoint {
            p,
            mean,
            stderr: (var / n).sqrt(),
            scores,
        });
    }
    Ok(TypoCurve {
        task: task.to_string(),
        seeds: seeds.len(),
        points,
    })
}

/// Typo curve of a context-only classifier trained once on the clean
/// training split.
pub fn typo_eval(
    model: &Model,
    task: &ContextTask,
    grid: &[f64],
    seeds: &[u64],
    cfg: &ClassifierConfig,
) -> Result<TypoCurve> {
    check_grid(grid, seeds)?;
    let clf = ContextClassifier::fit(model, &task.train, task.classes, cfg)?;
    let sentences: Vec<Sentence> = task.test.iter().map(|e| e.sentence.clone()).collect();
    typo_curve(&task.name, &sentences, model.chars(), grid, seeds, |noisy| {
        let examples: Vec<ContextExample> = noisy
            .iter()
            .zip(&task.test)
            .map(|(s, e)| ContextExample {
                sentence: s.clone(),
                position: e.position,
                label: e.label,
            })
            .collect();
        clf.accuracy(model, &examples)
    })
}
