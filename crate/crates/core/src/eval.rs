//! Exact-match tuple scoring and the memorize baseline.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;

use crate::corpus::{align_to_tokens, AnnotationSet, Document, EventAnnotation, SpanTag};
use crate::error::{Error, Result};
use crate::pipeline::{bio_decode, Task};
use crate::textproc::{tokenize, TokenSequence};

/// Precision, recall and F1 for one task, with the underlying counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub task: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub system: usize,
    pub human: usize,
    pub overlap: usize,
}

impl MetricReport {
    pub fn from_counts(task: impl Into<String>, system: usize, human: usize, overlap: usize) -> Self {
        let precision = if system == 0 { 0.0 } else { overlap as f64 / system as f64 };
        let recall = if human == 0 { 0.0 } else { overlap as f64 / human as f64 };
        MetricReport {
            task: task.into(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            system,
            human,
            overlap,
        }
    }

    /// `task<TAB>P<TAB>R<TAB>F1<TAB>|S|<TAB>|H|<TAB>|S∩H|`
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}",
            self.task, self.precision, self.recall, self.f1, self.system, self.human, self.overlap
        )
    }
}

/// Harmonic mean, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn prf<T: Eq + Hash>(task: &str, system: &HashSet<T>, human: &HashSet<T>) -> MetricReport {
    let overlap = system.intersection(human).count();
    MetricReport::from_counts(task, system.len(), human.len(), overlap)
}

/// Scored item: document id, span, and attribute value (empty for SPAN).
pub type Item = (String, usize, usize, String);

pub fn task_items(sets: &[AnnotationSet], task: Task) -> HashSet<Item> {
    let mut items = HashSet::new();
    for set in sets {
        for ev in set.events() {
            let value = match task {
                Task::Span => String::new(),
                t => match t.value_of(ev) {
                    Some(v) => v.to_string(),
                    None => continue,
                },
            };
            items.insert((set.doc_id.clone(), ev.begin, ev.end, value));
        }
    }
    items
}

/// Corpus-level (micro) scores pooled over all documents.
pub fn evaluate(system: &[AnnotationSet], gold: &[AnnotationSet], task: Task) -> Result<MetricReport> {
    let ids = |sets: &[AnnotationSet]| -> Result<BTreeSet<String>> {
        let mut seen = BTreeSet::new();
        for s in sets {
            if !seen.insert(s.doc_id.clone()) {
                return Err(Error::DocumentMismatch(format!("document {:?} listed twice", s.doc_id)));
            }
        }
        Ok(seen)
    };
    let (sys_ids, gold_ids) = (ids(system)?, ids(gold)?);
    if sys_ids != gold_ids {
        let only_sys: Vec<_> = sys_ids.difference(&gold_ids).collect();
        let only_gold: Vec<_> = gold_ids.difference(&sys_ids).collect();
        return Err(Error::DocumentMismatch(format!(
            "system only {only_sys:?}, gold only {only_gold:?}"
        )));
    }
    Ok(prf(task.as_str(), &task_items(system, task), &task_items(gold, task)))
}

/// Every task for which the gold side has items (SPAN always).
pub fn evaluate_all(system: &[AnnotationSet], gold: &[AnnotationSet]) -> Result<Vec<MetricReport>> {
    let mut out = Vec::new();
    for task in Task::ALL {
        let report = evaluate(system, gold, task)?;
        if task == Task::Span || report.human > 0 {
            out.push(report);
        }
    }
    Ok(out)
}

pub fn render_table(reports: &[MetricReport]) -> String {
    let width = reports.iter().map(|r| r.task.len()).max().unwrap_or(0).max(4);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "task", "P", "R", "F1", "|S|", "|H|", "|S∩H|"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6}  {:>6}  {:>6}",
            r.task, r.precision, r.recall, r.f1, r.system, r.human, r.overlap
        );
    }
    out
}

pub fn render_tsv(reports: &[MetricReport]) -> String {
    reports.iter().map(|r| r.to_tsv() + "\n").collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct LabelCounts {
    per_word: HashMap<String, BTreeMap<String, usize>>,
    global: BTreeMap<String, usize>,
}

impl LabelCounts {
    fn add(&mut self, word: &str, label: &str) {
        *self
            .per_word
            .entry(word.to_string())
            .or_default()
            .entry(label.to_string())
            .or_default() += 1;
        *self.global.entry(label.to_string()).or_default() += 1;
    }

    /// Highest count, then higher global frequency, then lexicographically smallest.
    fn pick<'a>(&self, counts: &'a BTreeMap<String, usize>) -> Option<&'a str> {
        counts
            .iter()
            .max_by(|(la, ca), (lb, cb)| {
                ca.cmp(cb)
                    .then_with(|| self.global.get(*la).cmp(&self.global.get(*lb)))
                    .then_with(|| lb.cmp(la))
            })
            .map(|(l, _)| l.as_str())
    }

    fn lexicon(&self) -> HashMap<String, String> {
        self.per_word
            .iter()
            .filter_map(|(w, c)| self.pick(c).map(|l| (w.clone(), l.to_string())))
            .collect()
    }

    fn majority(&self) -> Option<String> {
        self.pick(&self.global).map(str::to_string)
    }
}

/// Most-frequent-label lookup keyed by lowercased token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemorizeModel {
    span: HashMap<String, SpanTag>,
    attributes: BTreeMap<Task, (HashMap<String, String>, String)>,
}

impl MemorizeModel {
    pub fn span_label(&self, word: &str) -> SpanTag {
        self.span.get(&word.to_lowercase()).copied().unwrap_or(SpanTag::O)
    }

    /// Memorized value of `task` for a span whose first token is `word`.
    pub fn attribute_value(&self, task: Task, word: &str) -> Option<&str> {
        let (lexicon, majority) = self.attributes.get(&task)?;
        Some(lexicon.get(&word.to_lowercase()).unwrap_or(majority))
    }

    /// The most frequent training value of `task`.
    pub fn majority(&self, task: Task) -> Option<&str> {
        self.attributes.get(&task).map(|(_, m)| m.as_str())
    }

    /// Fill the attributes of `spans` from the lexicons; the first overlapping
    /// token decides. Spans over no token get the majority values.
    pub fn label_spans(&self, tokens: &TokenSequence, spans: &[(usize, usize)]) -> Result<Vec<EventAnnotation>> {
        let toks = tokens.tokens();
        spans
            .iter()
            .map(|&(b, e)| {
                let mut ev = EventAnnotation::with_span(b, e);
                let i = toks.partition_point(|t| t.end <= b);
                let word = toks.get(i).filter(|t| t.begin < e).map(|t| t.surface.as_str());
                for (&task, (_, majority)) in &self.attributes {
                    let value = match word {
                        Some(w) => self.attribute_value(task, w).unwrap_or(majority),
                        None => majority,
                    };
                    task.set_value(&mut ev, value)?;
                }
                Ok(ev)
            })
            .collect()
    }
}

pub fn train_memorize(corpus: &[(Document, AnnotationSet)]) -> Result<MemorizeModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("memorize training corpus"));
    }
    let mut span = LabelCounts::default();
    let mut attrs: BTreeMap<Task, LabelCounts> = BTreeMap::new();
    for (doc, gold) in corpus {
        gold.validate(doc)?;
        let tokens = tokenize(doc);
        let tags = align_to_tokens(gold, &tokens)?;
        for (t, tag) in tokens.tokens().iter().zip(&tags) {
            span.add(&t.surface.to_lowercase(), tag.as_str());
        }
        let toks = tokens.tokens();
        for ev in gold.events() {
            let i = toks.partition_point(|t| t.end <= ev.begin);
            let Some(t) = toks.get(i).filter(|t| t.begin < ev.end) else {
                continue;
            };
            let word = t.surface.to_lowercase();
            for task in Task::ALL.into_iter().filter(|t| t.is_attribute()) {
                if let Some(v) = task.value_of(ev) {
                    attrs.entry(task).or_default().add(&word, v);
                }
            }
        }
    }
    let span = span
        .lexicon()
        .into_iter()
        .map(|(w, l)| Ok((w, SpanTag::parse(&l)?)))
        .collect::<Result<_>>()?;
    let attributes = attrs
        .into_iter()
        .filter_map(|(task, counts)| counts.majority().map(|m| (task, (counts.lexicon(), m))))
        .collect();
    Ok(MemorizeModel { span, attributes })
}

/// Per-token lookup, BIO decode, then attribute lookup per span.
pub fn run_memorize(model: &MemorizeModel, documents: &[Document]) -> Result<Vec<AnnotationSet>> {
    documents
        .iter()
        .map(|doc| {
            let tokens = tokenize(doc);
            let tags: Vec<SpanTag> = tokens.tokens().iter().map(|t| model.span_label(&t.surface)).collect();
            let spans = bio_decode(&tags, &tokens.offsets());
            AnnotationSet::new(doc.id.clone(), model.label_spans(&tokens, &spans)?)
        })
        .collect()
}

/// Memorized attributes over given (gold) spans.
pub fn run_memorize_on_spans(model: &MemorizeModel, document: &Document, gold: &AnnotationSet) -> Result<AnnotationSet> {
    gold.validate(document)?;
    let tokens = tokenize(document);
    let spans: Vec<_> = gold.events().iter().map(EventAnnotation::span).collect();
    AnnotationSet::new(document.id.clone(), model.label_spans(&tokens, &spans)?)
}

/// Copy of `gold` with `task` set to a constant value on every event.
pub fn constant_baseline(gold: &AnnotationSet, task: Task, value: &str) -> Result<AnnotationSet> {
    let mut events = gold.events().to_vec();
    for ev in &mut events {
        task.set_value(ev, value)?;
    }
    AnnotationSet::new(gold.doc_id.clone(), events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Polarity;

    fn set<T: Eq + Hash + Clone>(xs: &[T]) -> HashSet<T> {
        xs.iter().cloned().collect()
    }

    #[test]
    fn prf_examples() {
        let r = prf("x", &set(&[1, 2, 3]), &set(&[1, 2, 3]));
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = prf("x", &set(&[1, 2]), &set(&[3, 4]));
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = prf("x", &set::<u8>(&[]), &set(&[1]));
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
        let r = prf("x", &set(&[1]), &set::<u8>(&[]));
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
        let r = prf("x", &set(&[1, 2, 3, 4]), &set(&[1, 2, 5]));
        assert_eq!((r.system, r.human, r.overlap), (4, 3, 2));
        assert!((r.f1 - 2.0 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0)).abs() < 1e-12);
        assert!((f1_score(0.908, 0.842) - 0.874).abs() < 5e-4);
        assert!((f1_score(0.878, 0.834) - 0.855).abs() < 5e-4);
    }

    #[test]
    fn attribute_credit_requires_span_and_value() {
        let gold = AnnotationSet::new("d", vec![EventAnnotation::with_span(0, 4)]).unwrap();
        let mut ev = EventAnnotation::with_span(0, 4);
        ev.polarity = Polarity::Neg;
        let sys = AnnotationSet::new("d", vec![ev]).unwrap();
        assert_eq!(evaluate(&[sys.clone()], &[gold.clone()], Task::Span).unwrap().f1, 1.0);
        assert_eq!(evaluate(&[sys], &[gold.clone()], Task::Polarity).unwrap().f1, 0.0);
        let shifted = AnnotationSet::new("d", vec![EventAnnotation::with_span(1, 4)]).unwrap();
        assert_eq!(evaluate(&[shifted], &[gold], Task::Span).unwrap().overlap, 0);
    }

    #[test]
    fn document_mismatch_rejected() {
        let a = AnnotationSet::empty("a");
        let b = AnnotationSet::empty("b");
        assert!(matches!(
            evaluate(&[a.clone()], &[b], Task::Span),
            Err(Error::DocumentMismatch(_))
        ));
        assert!(evaluate(&[a.clone(), a.clone()], &[a], Task::Span).is_err());
    }

    #[test]
    fn rendering() {
        let r = MetricReport::from_counts("SPAN", 4, 5, 3);
        assert_eq!(r.to_tsv(), "SPAN\t0.7500\t0.6000\t0.6667\t4\t5\t3");
        let table = render_table(&[r.clone()]);
        assert!(table.lines().next().unwrap().starts_with("task"));
        assert_eq!(table.lines().count(), 2);
        assert_eq!(render_tsv(&[r.clone(), r]).lines().count(), 2);
    }

    fn corpus() -> Vec<(Document, AnnotationSet)> {
        let d1 = Document::new("a", "pain and fever today");
        let mut fever = EventAnnotation::with_span(9, 14);
        fever.polarity = Polarity::Neg;
        let s1 = AnnotationSet::new("a", vec![EventAnnotation::with_span(0, 4), fever]).unwrap();
        let d2 = Document::new("b", "Pain resolved");
        let s2 = AnnotationSet::new("b", vec![EventAnnotation::with_span(0, 4)]).unwrap();
        vec![(d1, s1), (d2, s2)]
    }

    #[test]
    fn memorize_recalls_unambiguous_training_events() {
        let c = corpus();
        let model = train_memorize(&c).unwrap();
        assert_eq!(model.span_label("PAIN"), SpanTag::B);
        assert_eq!(model.span_label("unseen"), SpanTag::O);
        assert_eq!(model.majority(Task::Polarity), Some("POS"));
        assert_eq!(model.attribute_value(Task::Polarity, "fever"), Some("NEG"));
        assert_eq!(model.majority(Task::DocTimeRel), None);
        let docs: Vec<_> = c.iter().map(|(d, _)| d.clone()).collect();
        let gold: Vec<_> = c.iter().map(|(_, g)| g.clone()).collect();
        let sys = run_memorize(&model, &docs).unwrap();
        for task in [Task::Span, Task::Polarity, Task::Modality] {
            assert_eq!(evaluate(&sys, &gold, task).unwrap().f1, 1.0, "{task}");
        }
    }

    #[test]
    fn memorize_ties_use_global_frequency_then_order() {
        let mut c = LabelCounts::default();
        c.add("x", "B");
        c.add("x", "A");
        c.add("y", "B");
        assert_eq!(c.lexicon()["x"], "B");
        let mut c = LabelCounts::default();
        c.add("x", "B");
        c.add("x", "A");
        assert_eq!(c.lexicon()["x"], "A");
    }

    #[test]
    fn constant_baseline_overrides_value() {
        let (_, gold) = &corpus()[0];
        let base = constant_baseline(gold, Task::Polarity, "POS").unwrap();
        assert!(base.events().iter().all(|e| e.polarity == Polarity::Pos));
        assert_eq!(base.len(), gold.len());
    }
}
