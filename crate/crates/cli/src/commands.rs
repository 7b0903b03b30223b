use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clinex_core::corpus::{
    load_document, load_documents, load_split, read_annotation_file, write_annotation_file, AnnotationSet,
    CorpusStats, Document, ANNOTATION_SUFFIX,
};
use clinex_core::eval::{
    evaluate, evaluate_all, render_table, render_tsv, run_memorize, run_memorize_on_spans, train_memorize,
    MetricReport,
};
use clinex_core::network::write_model_file;
use clinex_core::pipeline::{extract, prepare_documents, train_task, ExtractMode, ModelSet, Task};
use clinex_core::synthetic::{generate, GeneratorSpec};
use clinex_core::textproc::{parse_tagged_corpus, tag, tokenize, train_tagger, TaggerModel};
use clinex_core::training::TrainConfig;
use clinex_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::manifest::{manifest_path, write_atomic, RunManifest};
use crate::{
    BaselineArgs, Cli, Command, EvaluateArgs, ExtractArgs, SynthArgs, TokenizeArgs, TrainArgs, TrainTaggerArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Tokenize(a) => cmd_tokenize(&ctx, a),
        Command::TrainTagger(a) => cmd_train_tagger(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Extract(a) => cmd_extract(&ctx, a),
        Command::Baseline(a) => cmd_baseline(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
    }
}

struct Context {
    config: TrainConfig,
    seed: u64,
    quiet: bool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(path) => TrainConfig::parse(&read_text(path)?)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(Context {
            seed: config.seed,
            config,
            quiet: cli.quiet,
        })
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Annotation files live either directly in `dir` or in `dir/ann`.
fn annotation_dir(dir: &Path) -> PathBuf {
    let ann = dir.join("ann");
    if ann.is_dir() {
        ann
    } else {
        dir.to_path_buf()
    }
}

fn read_gold(dir: &Path, docs: &[Document]) -> Result<Vec<AnnotationSet>> {
    let ann = annotation_dir(dir);
    docs.iter().map(|d| read_annotation_file(&ann, d)).collect()
}

#[derive(Serialize, Deserialize)]
struct TaggerFile {
    tags: Vec<String>,
    weights: Vec<(String, Vec<f64>)>,
}

fn save_tagger(model: &TaggerModel, path: &Path) -> Result<()> {
    let file = TaggerFile {
        tags: model.tags().to_vec(),
        weights: model
            .sorted_weights()
            .into_iter()
            .map(|(f, w)| (f.to_string(), w.to_vec()))
            .collect(),
    };
    write_atomic(path, serde_json::to_string(&file).expect("tagger serializes").as_bytes())
}

fn load_tagger(path: &Path) -> Result<TaggerModel> {
    let file: TaggerFile = serde_json::from_reader(BufReader::new(File::open(path).map_err(io_err(path))?))
        .map_err(|e| Error::Container(format!("{}: {e}", path.display())))?;
    TaggerModel::from_parts(file.tags, file.weights)
}

fn cmd_tokenize(_ctx: &Context, args: &TokenizeArgs) -> Result<()> {
    let doc = load_document(&args.input)?;
    let mut tokens = tokenize(&doc);
    if let Some(path) = &args.tagger {
        tokens = tag(&load_tagger(path)?, &tokens);
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for t in tokens.tokens() {
        let line = match &t.pos {
            Some(pos) => format!("{} {} {} {} {}", t.begin, t.end, t.surface, t.shape, pos),
            None => format!("{} {} {} {}", t.begin, t.end, t.surface, t.shape),
        };
        writeln!(out, "{line}").map_err(io_err(Path::new("<stdout>")))?;
    }
    out.flush().map_err(io_err(Path::new("<stdout>")))
}

fn cmd_train_tagger(ctx: &Context, args: &TrainTaggerArgs) -> Result<()> {
    let start = Instant::now();
    let sentences = parse_tagged_corpus(&read_text(&args.corpus)?)?;
    let model = train_tagger(&sentences, args.epochs, ctx.seed)?;
    save_tagger(&model, &args.output)?;
    ctx.log(format!(
        "tagger: {} sentences, {} tags -> {}",
        sentences.len(),
        model.tags().len(),
        args.output.display()
    ));
    let mut m = RunManifest::new("train-tagger", ctx.seed);
    m.input("corpus", &args.corpus);
    m.output(&args.output)?;
    m.metric("epochs", args.epochs);
    m.seconds = start.elapsed().as_secs_f64();
    m.write(&manifest_path(&args.output))
}

fn cmd_train(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let start = Instant::now();
    let task = Task::parse(&args.task)?;
    let tagger = load_tagger(&args.tagger)?;
    let train_docs = prepare_documents(&load_split(&args.train)?, &tagger)?;
    if train_docs.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let dev_docs = match &args.dev {
        Some(dir) => Some(prepare_documents(&load_split(dir)?, &tagger)?),
        None => None,
    };
    let stats = CorpusStats::sum(train_docs.iter().map(|d| &d.gold));
    ctx.log(format!(
        "training {task}: {} documents, {} events",
        stats.documents, stats.events
    ));

    let mut embeddings = match &args.embeddings {
        Some(path) => Some(BufReader::new(File::open(path).map_err(io_err(path))?)),
        None => None,
    };
    let (model, report) = train_task(
        task,
        &train_docs,
        &tagger,
        &ctx.config,
        embeddings.as_mut().map(|r| r as &mut dyn io::BufRead),
        dev_docs.as_deref(),
    )?;
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        match report.dev_scores.get(epoch) {
            Some(f1) => println!("epoch {}\tloss {loss:.6}\tdev_f1 {f1:.4}", epoch + 1),
            None => println!("epoch {}\tloss {loss:.6}", epoch + 1),
        }
    }
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_model_file(&model, &args.output)?;
    ctx.log(format!("wrote {}", args.output.display()));

    let mut m = RunManifest::new("train", ctx.config.seed);
    m.config = Some(ctx.config.to_config_string());
    m.input("train", &args.train);
    m.input("tagger", &args.tagger);
    if let Some(dev) = &args.dev {
        m.input("dev", dev);
    }
    if let Some(e) = &args.embeddings {
        m.input("embeddings", e);
    }
    m.output(&args.output)?;
    m.metric("task", task.as_str());
    m.metric("seq_len", model.hyper.seq_len());
    m.metric("epoch_losses", &report.epoch_losses);
    m.metric("dev_scores", &report.dev_scores);
    m.metric("best_epoch", report.best_epoch + 1);
    m.metric("steps", report.steps);
    m.seconds = start.elapsed().as_secs_f64();
    m.write(&manifest_path(&args.output))
}

fn write_sets(output: &Path, docs: &[Document], sets: &[AnnotationSet]) -> Result<usize> {
    create_dir(output)?;
    let mut events = 0;
    for (doc, set) in docs.iter().zip(sets) {
        write_annotation_file(output, set, doc)?;
        events += set.len();
    }
    Ok(events)
}

fn cmd_extract(ctx: &Context, args: &ExtractArgs) -> Result<()> {
    let models = ModelSet::load_dir(&args.models)?;
    let docs = load_documents(&args.input)?;
    let sets: Vec<AnnotationSet> = match &args.gold_spans {
        Some(dir) => {
            let gold = read_gold(dir, &docs)?;
            docs.iter()
                .zip(&gold)
                .map(|(d, g)| extract(&models, d, ExtractMode::GoldSpans(g)))
                .collect::<Result<_>>()?
        }
        None => docs
            .iter()
            .map(|d| extract(&models, d, ExtractMode::SystemSpans))
            .collect::<Result<_>>()?,
    };
    let events = write_sets(&args.output, &docs, &sets)?;
    ctx.log(format!("{} documents, {events} events -> {}", docs.len(), args.output.display()));
    Ok(())
}

fn cmd_baseline(ctx: &Context, args: &BaselineArgs) -> Result<()> {
    let model = train_memorize(&load_split(&args.train)?)?;
    let docs = load_documents(&args.input)?;
    let sets = match &args.gold_spans {
        Some(dir) => {
            let gold = read_gold(dir, &docs)?;
            docs.iter()
                .zip(&gold)
                .map(|(d, g)| run_memorize_on_spans(&model, d, g))
                .collect::<Result<Vec<_>>>()?
        }
        None => run_memorize(&model, &docs)?,
    };
    let events = write_sets(&args.output, &docs, &sets)?;
    ctx.log(format!("{} documents, {events} events -> {}", docs.len(), args.output.display()));
    Ok(())
}

/// System annotation files present in `dir`, by document id.
fn system_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(ANNOTATION_SUFFIX))
                .map(str::to_string)
        })
        .collect();
    ids.sort();
    Ok(ids)
}

fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let start = Instant::now();
    let gold_split = load_split(&args.gold)?;
    let docs: Vec<Document> = gold_split.iter().map(|(d, _)| d.clone()).collect();
    let gold: Vec<AnnotationSet> = gold_split.into_iter().map(|(_, g)| g).collect();

    let present = system_ids(&args.system)?;
    let expected: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    if present != expected {
        let missing: Vec<_> = expected.iter().filter(|id| !present.iter().any(|p| p == *id)).collect();
        let extra: Vec<_> = present.iter().filter(|p| !expected.contains(&p.as_str())).collect();
        return Err(Error::DocumentMismatch(format!(
            "system directory lacks {missing:?} and has extra {extra:?}"
        )));
    }
    let system = read_gold(&args.system, &docs)?;

    let reports: Vec<MetricReport> = if args.tasks.is_empty() {
        evaluate_all(&system, &gold)?
    } else {
        args.tasks
            .iter()
            .map(|t| evaluate(&system, &gold, Task::parse(t)?))
            .collect::<Result<_>>()?
    };
    if args.tsv {
        print!("{}", render_tsv(&reports));
    } else {
        print!("{}", render_table(&reports));
    }
    if let Some(path) = &args.manifest {
        let mut m = RunManifest::new("evaluate", ctx.seed);
        m.input("system", &args.system);
        m.input("gold", &args.gold);
        for r in &reports {
            m.metric(
                &r.task,
                serde_json::json!({
                    "precision": r.precision,
                    "recall": r.recall,
                    "f1": r.f1,
                    "system": r.system,
                    "human": r.human,
                    "overlap": r.overlap,
                }),
            );
        }
        m.seconds = start.elapsed().as_secs_f64();
        m.write(path)?;
    }
    Ok(())
}

fn cmd_synth(ctx: &Context, args: &SynthArgs) -> Result<()> {
    let start = Instant::now();
    let mut spec = GeneratorSpec::default_clinical(ctx.seed);
    if let Some(n) = args.train_docs {
        spec.train_docs = n;
    }
    if let Some(n) = args.dev_docs {
        spec.dev_docs = n;
    }
    if let Some(n) = args.test_docs {
        spec.test_docs = n;
    }
    if let Some(r) = args.oov_rate {
        spec.oov_rate = r;
    }
    let corpus = generate(&spec)?;
    create_dir(&args.output)?;
    corpus.write(&args.output)?;
    let mut m = RunManifest::new("synth", ctx.seed);
    for (name, docs) in corpus.splits() {
        let stats = CorpusStats::sum(docs.iter().map(|(_, s)| s));
        ctx.log(format!("{name}: {} documents, {} events", stats.documents, stats.events));
        m.metric(&format!("{name}_documents"), stats.documents);
        m.metric(&format!("{name}_events"), stats.events);
    }
    m.metric("oov_events", corpus.oov_events);
    m.metric("oov_rate", spec.oov_rate);
    m.seconds = start.elapsed().as_secs_f64();
    m.write(&args.output.join("manifest.json"))
}
