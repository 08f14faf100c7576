use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use charctx::corpus::{read_conll, Sentence, TaggedSentence, Tokens};
use charctx::encoder::{load_model, Model};
use charctx::probes::synthetic::two_topic_corpus;
use charctx::probes::{
    chunk_probe, nearest_words, rank_contexts, tag_set, typo_curve, typo_eval, ChunkProbeConfig, ClassifierConfig,
    ContextTask, MarkedContext, TrainedTagger, TypoCurve,
};
use charctx::training::{train, TrainJob, Trainer};
use charctx::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::*;

fn create(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let f = File::create(path).map_err(|e| path_error(path, e))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin().lock()));
    }
    let f = File::open(path).map_err(|e| path_error(path, e))?;
    Ok(Box::new(BufReader::new(f)))
}

fn path_error(path: &Path, source: io::Error) -> Error {
    Error::Path {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings in effect, on stderr, before any work starts.
fn announce(lines: &str) {
    for l in lines.lines() {
        eprintln!("# {l}");
    }
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let config = args.config();
    config.validate()?;
    announce(&config.describe());
    let job = TrainJob {
        corpus: args.corpus.clone(),
        checkpoint: args.out.clone(),
        resume: args.resume.clone(),
        max_steps: args.max_steps,
    };
    let mut log = create(args.log.as_deref().unwrap_or(Path::new("-")))?;
    let trainer = train(&job, config, &mut log)?;
    log.flush()?;
    if let Some(path) = &args.vocab_out {
        let mut w = create(path)?;
        trainer.vocab().write_tsv(&mut w)?;
        w.flush()?;
    }
    log::info!("wrote {} after {} steps", args.out.display(), trainer.step());
    Ok(())
}

/// `sentence<TAB>position` with a 0-based position.
fn parse_marked(line: &str) -> std::result::Result<(Tokens, usize), String> {
    let (text, pos) = line
        .rsplit_once('\t')
        .ok_or_else(|| "expected `sentence<TAB>position`".to_string())?;
    let tokens: Tokens = text.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err("empty sentence".into());
    }
    let pos: usize = pos
        .trim()
        .parse()
        .map_err(|_| format!("position {:?} is not a non-negative integer", pos.trim()))?;
    if pos >= tokens.len() {
        return Err(format!("position {pos} out of range for {} words", tokens.len()));
    }
    Ok((tokens, pos))
}

fn write_embedding(out: &mut dyn Write, format: OutputFormat, token: &str, v: &[f64]) -> io::Result<()> {
    match format {
        OutputFormat::Text => {
            write!(out, "{token}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)
        }
        OutputFormat::F32 => {
            for &x in v {
                out.write_all(&(x as f32).to_le_bytes())?;
            }
            Ok(())
        }
    }
}

/// Returns the number of malformed input lines.
pub fn encode_cmd(args: &EncodeArgs) -> Result<usize> {
    let model = load_model(&args.model.model)?;
    let input = open(&args.input)?;
    let mut out = create(&args.out)?;
    let mut bad = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        match args.mode {
            EncodeMode::Word => {
                for w in line.split_whitespace() {
                    write_embedding(&mut out, args.format, w, &model.encode_str(w)?)?;
                }
            }
            EncodeMode::Context => {
                if line.trim().is_empty() {
                    continue;
                }
                match parse_marked(&line) {
                    Ok((tokens, pos)) => {
                        let e = model.encode_context(&model.sentence(&tokens)?, pos)?;
                        write_embedding(&mut out, args.format, &tokens[pos], &e)?;
                    }
                    Err(reason) => {
                        bad += 1;
                        eprintln!("{}: line {}: {reason}", args.input.display(), i + 1);
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(bad)
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn nn_cmd(args: &NnArgs) -> Result<()> {
    let (model, lexicon): (Model, Vec<String>) = match &args.lexicon {
        Some(path) => {
            let words = read_lines(path)?
                .iter()
                .flat_map(|(_, l)| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
                .collect();
            (load_model(&args.model.model)?, words)
        }
        None => {
            let trainer = Trainer::load(&args.model.model).map_err(|e| match e {
                Error::Format(_) => Error::Config(format!(
                    "{} holds no vocabulary; pass --lexicon",
                    args.model.model.display()
                )),
                e => e,
            })?;
            let words = trainer.vocab().surfaces().map(str::to_owned).collect();
            (trainer.into_model(), words)
        }
    };
    let mut out = io::stdout().lock();
    for q in &args.query {
        let result = nearest_words(&model, q, &lexicon, args.k)?;
        for (rank, n) in result.neighbors.iter().enumerate() {
            writeln!(out, "{q}\t{}\t{}\t{:.6}", rank + 1, n.word, n.similarity)?;
        }
    }
    Ok(())
}

fn marked(model: &Model, line: &str, what: &str) -> Result<MarkedContext> {
    let (tokens, position) = parse_marked(line).map_err(|reason| Error::Config(format!("{what}: {reason}")))?;
    Ok(MarkedContext {
        sentence: model.sentence(&tokens)?,
        position,
    })
}

pub fn rank_cmd(args: &RankArgs) -> Result<()> {
    let model = load_model(&args.model.model)?;
    let query = marked(&model, &args.query, "--query")?;
    let lines = read_lines(&args.candidates)?;
    let candidates = lines
        .iter()
        .map(|(line, l)| {
            parse_marked(l)
                .map_err(|reason| Error::Data { line: *line, reason })
                .and_then(|(tokens, position)| {
                    Ok(MarkedContext {
                        sentence: model.sentence(&tokens)?,
                        position,
                    })
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = io::stdout().lock();
    for (rank, r) in rank_contexts(&model, &query, &candidates)?.iter().enumerate() {
        let c = &candidates[r.index];
        let text: Vec<String> = c
            .sentence
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let w = model.chars().decode_word(w);
                if i == c.position {
                    format!("[{w}]")
                } else {
                    w
                }
            })
            .collect();
        writeln!(
            out,
            "{}\t{:.6}\t{}\t{}",
            rank + 1,
            r.similarity,
            r.index + 1,
            text.join(" ")
        )?;
    }
    Ok(())
}

fn read_tagged(path: &Path, tokens: Option<usize>) -> Result<Vec<TaggedSentence>> {
    let data = read_conll(open(path)?)?;
    for (line, reason) in &data.diagnostics {
        eprintln!("{}: line {line}: {reason}", path.display());
    }
    Ok(match tokens {
        Some(n) => data.take_tokens(n),
        None => data.sentences,
    })
}

fn describe_tagger(cfg: &ChunkProbeConfig) -> String {
    format!(
        "mode={}\nprojection={}\nhidden={}\nlearning_rate={}\nweight_decay={}\ngrad_clip={}\nepochs={}\nbatch={}\nseed={}",
        cfg.mode, cfg.projection, cfg.hidden, cfg.learning_rate, cfg.weight_decay, cfg.grad_clip, cfg.epochs, cfg.batch, cfg.seed
    )
}

pub fn chunk_cmd(args: &ChunkArgs) -> Result<()> {
    let cfg = args.tagger.config();
    cfg.validate()?;
    announce(&describe_tagger(&cfg));
    let model = load_model(&args.model.model)?;
    let train = read_tagged(&args.data.train, args.data.train_tokens)?;
    let test = read_tagged(&args.data.test, args.data.test_tokens)?;
    let report = chunk_probe(&model, &train, &test, &cfg)?;
    print!("{}", report.summary());
    Ok(())
}

fn chunk_curve(args: &TypoArgs, model: &Model, train: &Path, test: &Path) -> Result<TypoCurve> {
    let cfg = args.tagger.config();
    let train = read_tagged(train, args.train_tokens)?;
    let test = read_tagged(test, args.test_tokens)?;
    let tagger = TrainedTagger::fit(model, &train, tag_set(&train, &test)?, &cfg)?;
    let sentences = test
        .iter()
        .map(|s| model.sentence(&s.words))
        .collect::<Result<Vec<Sentence>>>()?;
    let gold: Vec<Vec<String>> = test.iter().map(|s| s.tags.clone()).collect();
    typo_curve("chunk", &sentences, model.chars(), &args.grid, &args.seeds, |noisy| {
        Ok(tagger.score(model, noisy, &gold)?.f1())
    })
}

pub fn typo_cmd(args: &TypoArgs) -> Result<()> {
    let model = load_model(&args.model.model)?;
    let curve = match (args.task, &args.train, &args.test) {
        (TypoTask::Chunk, Some(train), Some(test)) => {
            let cfg = args.tagger.config();
            cfg.validate()?;
            announce(&format!("task=chunk\n{}", describe_tagger(&cfg)));
            chunk_curve(args, &model, train, test)?
        }
        (TypoTask::Chunk, _, _) => return Err(Error::Config("the chunk task needs --train and --test".into())),
        (TypoTask::Topic, _, _) => {
            let cfg = ClassifierConfig {
                epochs: args.classifier_epochs,
                learning_rate: args.classifier_lr,
                seed: args.tagger.seed,
                ..Default::default()
            };
            announce(&format!(
                "task=topic\ntrain_size={}\ntest_size={}\ndata_seed={}\nclassifier_epochs={}\nclassifier_lr={}",
                args.train_size, args.test_size, args.data_seed, cfg.epochs, cfg.learning_rate
            ));
            let mut rng = ChaCha8Rng::seed_from_u64(args.data_seed);
            let train = two_topic_corpus(args.train_size, &mut rng);
            let test = two_topic_corpus(args.test_size, &mut rng);
            let task = ContextTask::topics(&model, &train, &test)?;
            typo_eval(&model, &task, &args.grid, &args.seeds, &cfg)?
        }
    };
    print!("{}", curve.summary());
    match &args.csv {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(curve.csv().as_bytes())?;
            w.flush()?;
        }
        None => print!("\n{}", curve.csv()),
    }
    Ok(())
}

pub fn inspect_cmd(args: &InspectArgs) -> Result<()> {
    let model = load_model(&args.model.model)?;
    print!("{}", model.inspect_report());
    Ok(())
}
