//! Python bindings: tokenization, annotation I/O, scoring, synthetic data
//! and extraction with trained model directories.

use std::collections::HashSet;
use std::path::PathBuf;

use clinex_core::corpus::{self, AnnotationSet, Document, EventAnnotation, SpanTag};
use clinex_core::eval::{self, MetricReport};
use clinex_core::pipeline::{self, ExtractMode, ModelSet, Task};
use clinex_core::synthetic::{self, GeneratorSpec};
use clinex_core::textproc;
use clinex_core::Error;
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::MissingModel(_) => PyKeyError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Tokens of `text` as `(surface, begin, end, shape)` tuples with character offsets.
#[pyfunction]
fn tokenize(text: &str) -> Vec<(String, usize, usize, String)> {
    textproc::tokenize_text("", text)
        .tokens()
        .iter()
        .map(|t| (t.surface.clone(), t.begin, t.end, t.shape.clone()))
        .collect()
}

#[pyfunction]
fn word_shape(word: &str) -> PyResult<String> {
    textproc::word_shape(word).map_err(to_py)
}

/// Decode `O` / `B-EVENT` / `I-EVENT` tags over token offsets into spans.
#[pyfunction]
fn bio_decode(tags: Vec<String>, offsets: Vec<(usize, usize)>) -> PyResult<Vec<(usize, usize)>> {
    if tags.len() != offsets.len() {
        return Err(PyValueError::new_err(format!(
            "{} tags for {} offsets",
            tags.len(),
            offsets.len()
        )));
    }
    let tags = tags
        .iter()
        .map(|t| SpanTag::parse(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    Ok(pipeline::bio_decode(&tags, &offsets))
}

/// Precision, recall and F1 of two collections of `(doc, begin, end[, value])` items.
#[pyclass(name = "MetricReport", frozen, get_all)]
struct PyMetricReport {
    task: String,
    precision: f64,
    recall: f64,
    f1: f64,
    system: usize,
    human: usize,
    overlap: usize,
}

#[pymethods]
impl PyMetricReport {
    fn __repr__(&self) -> String {
        format!(
            "MetricReport(task={:?}, precision={:.4}, recall={:.4}, f1={:.4}, system={}, human={}, overlap={})",
            self.task, self.precision, self.recall, self.f1, self.system, self.human, self.overlap
        )
    }

    fn tsv(&self) -> String {
        self.as_core().to_tsv()
    }
}

impl PyMetricReport {
    fn as_core(&self) -> MetricReport {
        MetricReport::from_counts(self.task.clone(), self.system, self.human, self.overlap)
    }
}

impl From<MetricReport> for PyMetricReport {
    fn from(r: MetricReport) -> Self {
        PyMetricReport {
            task: r.task,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            system: r.system,
            human: r.human,
            overlap: r.overlap,
        }
    }
}

type Item = (String, usize, usize, Option<String>);

#[pyfunction]
#[pyo3(signature = (system, gold, task = "SPAN"))]
fn prf(system: Vec<Item>, gold: Vec<Item>, task: &str) -> PyMetricReport {
    let system: HashSet<Item> = system.into_iter().collect();
    let gold: HashSet<Item> = gold.into_iter().collect();
    eval::prf(task, &system, &gold).into()
}

fn event_to_dict<'py>(py: Python<'py>, ev: &EventAnnotation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("begin", ev.begin)?;
    d.set_item("end", ev.end)?;
    for task in Task::ALL.into_iter().filter(|t| t.is_attribute()) {
        d.set_item(task.as_str().to_lowercase(), task.value_of(ev))?;
    }
    Ok(d)
}

fn event_from_dict(d: &Bound<'_, PyDict>) -> PyResult<EventAnnotation> {
    let get = |k: &str| -> PyResult<Bound<'_, PyAny>> {
        d.get_item(k)?
            .ok_or_else(|| PyKeyError::new_err(format!("event dict lacks {k:?}")))
    };
    let mut ev = EventAnnotation::with_span(get("begin")?.extract()?, get("end")?.extract()?);
    for task in Task::ALL.into_iter().filter(|t| t.is_attribute()) {
        if let Some(v) = d.get_item(task.as_str().to_lowercase())? {
            if let Some(s) = v.extract::<Option<String>>()? {
                task.set_value(&mut ev, &s).map_err(to_py)?;
            }
        }
    }
    Ok(ev)
}

fn events_to_list<'py>(py: Python<'py>, set: &AnnotationSet) -> PyResult<Vec<Bound<'py, PyDict>>> {
    set.events().iter().map(|e| event_to_dict(py, e)).collect()
}

fn events_from_list(doc_id: &str, events: &[Bound<'_, PyDict>]) -> PyResult<AnnotationSet> {
    let events = events.iter().map(event_from_dict).collect::<PyResult<Vec<_>>>()?;
    AnnotationSet::new(doc_id, events).map_err(to_py)
}

/// Events of a standoff annotation file as dicts with `begin`, `end` and lowercase attribute keys.
#[pyfunction]
fn parse_annotations<'py>(py: Python<'py>, xml: &str, doc_id: &str, text: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let doc = Document::new(doc_id, text);
    let set = corpus::parse_annotations(xml, &doc).map_err(to_py)?;
    events_to_list(py, &set)
}

#[pyfunction]
fn write_annotations(doc_id: &str, text: &str, events: Vec<Bound<'_, PyDict>>) -> PyResult<String> {
    let doc = Document::new(doc_id, text);
    let set = events_from_list(doc_id, &events)?;
    corpus::write_annotations(&set, &doc).map_err(to_py)
}

/// Write a seeded synthetic corpus under `output`; returns per-split event counts.
#[pyfunction]
#[pyo3(signature = (output, seed = 1, train_docs = None, dev_docs = None, test_docs = None, oov_rate = None))]
fn generate_synthetic(
    output: PathBuf,
    seed: u64,
    train_docs: Option<usize>,
    dev_docs: Option<usize>,
    test_docs: Option<usize>,
    oov_rate: Option<f64>,
) -> PyResult<Vec<(String, usize, usize)>> {
    let mut spec = GeneratorSpec::default_clinical(seed);
    spec.train_docs = train_docs.unwrap_or(spec.train_docs);
    spec.dev_docs = dev_docs.unwrap_or(spec.dev_docs);
    spec.test_docs = test_docs.unwrap_or(spec.test_docs);
    spec.oov_rate = oov_rate.unwrap_or(spec.oov_rate);
    let corpus = synthetic::generate(&spec).map_err(to_py)?;
    corpus.write(&output).map_err(to_py)?;
    Ok(corpus
        .splits()
        .iter()
        .map(|(name, docs)| (name.to_string(), docs.len(), docs.iter().map(|(_, s)| s.len()).sum()))
        .collect())
}

/// Trained models loaded from a directory of `<task>.clnx` files.
#[pyclass]
struct Extractor {
    models: ModelSet,
}

#[pymethods]
impl Extractor {
    #[new]
    fn new(models_dir: PathBuf) -> PyResult<Self> {
        let models = ModelSet::load_dir(&models_dir).map_err(to_py)?;
        Ok(Extractor { models })
    }

    /// Task names with a loaded model.
    fn tasks(&self) -> Vec<&'static str> {
        self.models.tasks().into_iter().map(Task::as_str).collect()
    }

    /// Find event spans and classify their attributes.
    #[pyo3(signature = (text, doc_id = "doc"))]
    fn extract<'py>(&self, py: Python<'py>, text: &str, doc_id: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let doc = Document::new(doc_id, text);
        let set = py
            .detach(|| pipeline::extract(&self.models, &doc, ExtractMode::SystemSpans))
            .map_err(to_py)?;
        events_to_list(py, &set)
    }

    /// Classify the attributes of given spans (event dicts need only `begin` and `end`).
    #[pyo3(signature = (text, events, doc_id = "doc"))]
    fn classify<'py>(
        &self,
        py: Python<'py>,
        text: &str,
        events: Vec<Bound<'py, PyDict>>,
        doc_id: &str,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let doc = Document::new(doc_id, text);
        let gold = events_from_list(doc_id, &events)?;
        let set = py
            .detach(|| pipeline::extract(&self.models, &doc, ExtractMode::GoldSpans(&gold)))
            .map_err(to_py)?;
        events_to_list(py, &set)
    }
}

#[pymodule]
pub fn clinex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(word_shape, m)?)?;
    m.add_function(wrap_pyfunction!(bio_decode, m)?)?;
    m.add_function(wrap_pyfunction!(prf, m)?)?;
    m.add_function(wrap_pyfunction!(parse_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(write_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_class::<PyMetricReport>()?;
    m.add_class::<Extractor>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
