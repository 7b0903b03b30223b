//! End-to-end extraction: token-level span tagging, BIO decoding to
//! character offsets, then one classifier per attribute over each span.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::corpus::{
    align_to_tokens, AnnotationSet, Attribute, Degree, DocTimeRel, Document, EventAnnotation, EventType, Modality,
    Polarity, SpanTag,
};
use crate::error::{Error, Result};
use crate::eval::{prf, MetricReport};
use crate::features::{build_vocabularies, extract_window, load_pretrained, EncodedSequence, WindowInstance};
use crate::network::{read_model_file, write_model_file, ModelBundle};
use crate::textproc::{tag, tokenize, TaggerModel, TokenSequence};
use crate::training::{predict, train, TrainConfig, TrainReport};

/// One classification task; each gets its own model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Span,
    Modality,
    Degree,
    Polarity,
    Type,
    DocTimeRel,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Span,
        Task::Modality,
        Task::Degree,
        Task::Polarity,
        Task::Type,
        Task::DocTimeRel,
    ];

    /// Attributes predicted for system spans.
    pub const PHASE1_ATTRIBUTES: [Task; 4] = [Task::Modality, Task::Degree, Task::Polarity, Task::Type];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Span => "SPAN",
            Task::Modality => "MODALITY",
            Task::Degree => "DEGREE",
            Task::Polarity => "POLARITY",
            Task::Type => "TYPE",
            Task::DocTimeRel => "DOCTIMEREL",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownValue {
                field: "task",
                value: s.to_string(),
            })
    }

    pub fn is_attribute(self) -> bool {
        self != Task::Span
    }

    /// Value of this attribute on `ev` (`None` for SPAN or an unset DocTimeRel).
    pub fn value_of(self, ev: &EventAnnotation) -> Option<&'static str> {
        match self {
            Task::Span => None,
            Task::Modality => Some(ev.modality.as_str()),
            Task::Degree => Some(ev.degree.as_str()),
            Task::Polarity => Some(ev.polarity.as_str()),
            Task::Type => Some(ev.event_type.as_str()),
            Task::DocTimeRel => ev.doctimerel.map(DocTimeRel::as_str),
        }
    }

    pub fn set_value(self, ev: &mut EventAnnotation, label: &str) -> Result<()> {
        match self {
            Task::Span => return Err(Error::InvalidArgument("SPAN is not an event attribute".into())),
            Task::Modality => ev.modality = Modality::parse(label)?,
            Task::Degree => ev.degree = Degree::parse(label)?,
            Task::Polarity => ev.polarity = Polarity::parse(label)?,
            Task::Type => ev.event_type = EventType::parse(label)?,
            Task::DocTimeRel => ev.doctimerel = Some(DocTimeRel::parse(label)?),
        }
        Ok(())
    }

    /// File name of this task's model inside a models directory.
    pub fn model_file_name(self) -> String {
        format!("{}.clnx", self.as_str().to_lowercase())
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Task plus its fixed, serialized class order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelScheme {
    pub task: Task,
    pub classes: Vec<String>,
}

impl LabelScheme {
    pub fn for_task(task: Task) -> Self {
        fn names<A: Attribute>() -> Vec<String> {
            A::ALL.iter().map(|v| v.as_str().to_string()).collect()
        }
        let classes = match task {
            Task::Span => SpanTag::ALL.iter().map(|t| t.as_str().to_string()).collect(),
            Task::Modality => names::<Modality>(),
            Task::Degree => names::<Degree>(),
            Task::Polarity => names::<Polarity>(),
            Task::Type => names::<EventType>(),
            Task::DocTimeRel => names::<DocTimeRel>(),
        };
        LabelScheme { task, classes }
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}

/// Spans from per-token BIO tags. An `I` that does not continue a span starts one.
pub fn bio_decode(tags: &[SpanTag], offsets: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for (&t, &(b, e)) in tags.iter().zip(offsets) {
        match t {
            SpanTag::O => {
                if let Some(s) = current.take() {
                    spans.push(s);
                }
            }
            SpanTag::B => {
                if let Some(s) = current.replace((b, e)) {
                    spans.push(s);
                }
            }
            SpanTag::I => match current.as_mut() {
                Some(s) => s.1 = e,
                None => current = Some((b, e)),
            },
        }
    }
    spans.extend(current);
    spans
}

fn require_tagger(model: &ModelBundle) -> Result<&TaggerModel> {
    model
        .tagger
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("{} model carries no POS tagger", model.task)))
}

/// Tokenize, tag and encode a document with a model's own tagger and vocabularies.
pub fn encode_document(model: &ModelBundle, document: &Document) -> Result<(TokenSequence, EncodedSequence)> {
    let tokens = tag(require_tagger(model)?, &tokenize(document));
    let encoded = model.vocabs.encode(&tokens)?;
    Ok((tokens, encoded))
}

fn check_task(model: &ModelBundle, task: Task) -> Result<()> {
    if model.task != task.as_str() || model.labels != LabelScheme::for_task(task).classes {
        return Err(Error::InvalidArgument(format!(
            "model for {} with labels {:?} used as a {task} model",
            model.task, model.labels
        )));
    }
    Ok(())
}

/// Predicted event spans of one document, as character offsets.
pub fn identify_spans(span_model: &ModelBundle, document: &Document) -> Result<Vec<(usize, usize)>> {
    check_task(span_model, Task::Span)?;
    let (tokens, encoded) = encode_document(span_model, document)?;
    let mut tags = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() {
        let window = extract_window(&encoded, i, span_model.hyper.window)?;
        let (class, _) = predict(span_model, &window)?;
        tags.push(SpanTag::ALL[class]);
    }
    Ok(bio_decode(&tags, &tokens.offsets()))
}

/// Index of the first token overlapping `[begin, end)`.
fn first_token(tokens: &TokenSequence, begin: usize, end: usize) -> Option<usize> {
    let toks = tokens.tokens();
    let i = toks.partition_point(|t| t.end <= begin);
    (i < toks.len() && toks[i].begin < end).then_some(i)
}

/// Per-model encodings of one document, computed lazily.
struct DocumentView<'a> {
    document: &'a Document,
    cache: BTreeMap<Task, (TokenSequence, EncodedSequence)>,
}

impl<'a> DocumentView<'a> {
    fn new(document: &'a Document) -> Self {
        DocumentView {
            document,
            cache: BTreeMap::new(),
        }
    }

    fn classify(&mut self, task: Task, model: &ModelBundle, begin: usize, end: usize) -> Result<Option<usize>> {
        if !self.cache.contains_key(&task) {
            let enc = encode_document(model, self.document)?;
            self.cache.insert(task, enc);
        }
        let (tokens, encoded) = &self.cache[&task];
        let Some(center) = first_token(tokens, begin, end) else {
            return Ok(None);
        };
        let window = extract_window(encoded, center, model.hyper.window)?;
        Ok(Some(predict(model, &window)?.0))
    }
}

/// Attribute models keyed by task.
pub type AttributeModels = BTreeMap<Task, ModelBundle>;

/// Attach predicted attributes to each span.
///
/// Every attribute model sees the window centred on the span's first token.
/// Attributes without a model keep the values of `base` (or the defaults of
/// [`EventAnnotation::with_span`]). Spans that overlap no token are dropped
/// and counted in the second return value.
pub fn classify_attributes(
    models: &AttributeModels,
    document: &Document,
    spans: &[EventAnnotation],
) -> Result<(Vec<EventAnnotation>, usize)> {
    for (&task, model) in models {
        if !task.is_attribute() {
            return Err(Error::InvalidArgument("SPAN model passed as an attribute model".into()));
        }
        check_task(model, task)?;
    }
    let mut view = DocumentView::new(document);
    let mut out = Vec::with_capacity(spans.len());
    let mut skipped = 0;
    'spans: for base in spans {
        let mut ev = *base;
        for (&task, model) in models {
            match view.classify(task, model, ev.begin, ev.end)? {
                Some(class) => task.set_value(&mut ev, &model.labels[class])?,
                None => {
                    skipped += 1;
                    continue 'spans;
                }
            }
        }
        out.push(ev);
    }
    Ok((out, skipped))
}

/// The trained models available for extraction.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    pub span: Option<ModelBundle>,
    pub attributes: AttributeModels,
}

impl ModelSet {
    pub fn insert(&mut self, model: ModelBundle) -> Result<()> {
        let task = Task::parse(&model.task)?;
        check_task(&model, task)?;
        if task == Task::Span {
            self.span = Some(model);
        } else {
            self.attributes.insert(task, model);
        }
        Ok(())
    }

    pub fn get(&self, task: Task) -> Option<&ModelBundle> {
        match task {
            Task::Span => self.span.as_ref(),
            t => self.attributes.get(&t),
        }
    }

    /// Load every `<task>.clnx` present in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let mut set = ModelSet::default();
        for task in Task::ALL {
            let path = dir.as_ref().join(task.model_file_name());
            if path.is_file() {
                set.insert(read_model_file(&path)?)?;
            }
        }
        Ok(set)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for task in Task::ALL {
            if let Some(m) = self.get(task) {
                let path = dir.as_ref().join(task.model_file_name());
                write_model_file(m, &path)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    pub fn tasks(&self) -> Vec<Task> {
        Task::ALL.into_iter().filter(|&t| self.get(t).is_some()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ExtractMode<'a> {
    /// Find spans with the span model, then classify them.
    SystemSpans,
    /// Classify the given gold spans only.
    GoldSpans(&'a AnnotationSet),
}

/// Annotate one document.
///
/// System-span mode needs the span model and the four phase-1 attribute
/// models (DocTimeRel is added when its model is present). Gold-span mode
/// needs at least one attribute model; attributes without a model keep the
/// gold values.
pub fn extract(models: &ModelSet, document: &Document, mode: ExtractMode<'_>) -> Result<AnnotationSet> {
    let events = match mode {
        ExtractMode::SystemSpans => {
            let span_model = models.span.as_ref().ok_or_else(|| Error::MissingModel("SPAN".into()))?;
            if let Some(t) = Task::PHASE1_ATTRIBUTES
                .into_iter()
                .find(|t| !models.attributes.contains_key(t))
            {
                return Err(Error::MissingModel(t.to_string()));
            }
            let spans: Vec<EventAnnotation> = identify_spans(span_model, document)?
                .into_iter()
                .map(|(b, e)| EventAnnotation::with_span(b, e))
                .collect();
            classify_attributes(&models.attributes, document, &spans)?.0
        }
        ExtractMode::GoldSpans(gold) => {
            if models.attributes.is_empty() {
                return Err(Error::MissingModel("any attribute".into()));
            }
            gold.validate(document)?;
            classify_attributes(&models.attributes, document, gold.events())?.0
        }
    };
    let set = AnnotationSet::new(document.id.clone(), events)?;
    set.validate(document)?;
    Ok(set)
}

/// A gold-annotated training document, tokenized and POS-tagged.
#[derive(Debug, Clone)]
pub struct PreparedDocument {
    pub document: Document,
    pub tokens: TokenSequence,
    pub gold: AnnotationSet,
}

pub fn prepare_documents(
    corpus: &[(Document, AnnotationSet)],
    tagger: &TaggerModel,
) -> Result<Vec<PreparedDocument>> {
    corpus
        .iter()
        .map(|(doc, gold)| {
            gold.validate(doc)?;
            Ok(PreparedDocument {
                document: doc.clone(),
                tokens: tag(tagger, &tokenize(doc)),
                gold: gold.clone(),
            })
        })
        .collect()
}

/// Labelled windows for `task`: every token for SPAN, one per annotated event otherwise.
pub fn task_instances(model: &ModelBundle, task: Task, docs: &[PreparedDocument]) -> Result<Vec<WindowInstance>> {
    let scheme = LabelScheme::for_task(task);
    let w = model.hyper.window;
    let mut out = Vec::new();
    for d in docs {
        let encoded = model.vocabs.encode(&d.tokens)?;
        if task == Task::Span {
            let tags = align_to_tokens(&d.gold, &d.tokens)?;
            for (i, t) in tags.iter().enumerate() {
                let mut win = extract_window(&encoded, i, w)?;
                win.label = scheme.index(t.as_str());
                out.push(win);
            }
        } else {
            for ev in d.gold.events() {
                let (Some(value), Some(center)) = (task.value_of(ev), first_token(&d.tokens, ev.begin, ev.end)) else {
                    continue;
                };
                let mut win = extract_window(&encoded, center, w)?;
                win.label = scheme.index(value);
                out.push(win);
            }
        }
    }
    Ok(out)
}

/// Dev-set F1 for a model of `task`: span F1 for SPAN, gold-span attribute F1 otherwise.
pub fn dev_f1(model: &ModelBundle, task: Task, docs: &[PreparedDocument]) -> Result<f64> {
    let mut system = Vec::new();
    let mut gold = Vec::new();
    for d in docs {
        if task == Task::Span {
            for (b, e) in identify_spans(model, &d.document)? {
                system.push((d.document.id.clone(), b, e, String::new()));
            }
            for ev in d.gold.events() {
                gold.push((d.document.id.clone(), ev.begin, ev.end, String::new()));
            }
        } else {
            let models = AttributeModels::from([(task, model.clone())]);
            let (events, _) = classify_attributes(&models, &d.document, d.gold.events())?;
            for ev in events {
                if let Some(v) = task.value_of(&ev) {
                    system.push((d.document.id.clone(), ev.begin, ev.end, v.to_string()));
                }
            }
            for ev in d.gold.events() {
                if let Some(v) = task.value_of(ev) {
                    gold.push((d.document.id.clone(), ev.begin, ev.end, v.to_string()));
                }
            }
        }
    }
    let report: MetricReport = prf(task.as_str(), &system.into_iter().collect(), &gold.into_iter().collect());
    Ok(report.f1)
}

/// Build vocabularies, initialize, optionally load pretrained word vectors,
/// and train one task model.
pub fn train_task(
    task: Task,
    train_docs: &[PreparedDocument],
    tagger: &TaggerModel,
    config: &TrainConfig,
    pretrained: Option<&mut dyn BufRead>,
    dev_docs: Option<&[PreparedDocument]>,
) -> Result<(ModelBundle, TrainReport)> {
    config.validate()?;
    let vocabs = build_vocabularies(train_docs.iter().map(|d| &d.tokens))?;
    let scheme = LabelScheme::for_task(task);
    let mut model = ModelBundle::new(
        task.as_str(),
        scheme.classes,
        vocabs,
        Some(tagger.clone()),
        config.hyperparams(),
        config.seed,
    )?;
    if let Some(reader) = pretrained {
        load_pretrained(reader, &model.vocabs.token, &mut model.params.embeddings.token)?;
    }
    let data = task_instances(&model, task, train_docs)?;
    if data.is_empty() {
        return Err(Error::Empty("training instances for task"));
    }
    let report = match dev_docs {
        Some(dev) if !dev.is_empty() => {
            let mut monitor = |m: &ModelBundle| dev_f1(m, task, dev);
            train(&mut model, &data, config, Some(&mut monitor), None)?
        }
        _ => train(&mut model, &data, config, None, None)?,
    };
    Ok((model, report))
}
