//! Seeded synthetic clinical notes with exact gold event annotations.
//!
//! Sentences come from a small template grammar. Each template fixes the
//! contextual attributes (modality, polarity, DocTimeRel) through its cue
//! words; event words carry their own type distribution, and an optional
//! modifier in front of an event sets its degree. All events are single tokens.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    write_annotation_file, AnnotationSet, Degree, DocTimeRel, Document, EventAnnotation, EventType, Modality,
    Polarity,
};
use crate::error::{Error, Result};

/// An event word with its POS tag and a distribution over event types.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWord {
    pub word: String,
    pub pos: String,
    pub types: Vec<(EventType, f64)>,
    pub weight: f64,
}

impl EventWord {
    pub fn new(word: &str, pos: &str, event_type: EventType, weight: f64) -> Self {
        EventWord {
            word: word.into(),
            pos: pos.into(),
            types: vec![(event_type, 1.0)],
            weight,
        }
    }
}

/// A modifier placed right before an event, fixing its degree.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeCue {
    pub word: String,
    pub pos: String,
    pub degree: Degree,
}

/// A sentence pattern such as `she/PRP denies/VBZ {EVENT} ./.`.
///
/// Literal tokens are `word/TAG`; slots are `{EVENT}`, `{DEGREE}` (optional
/// degree modifier) and `{FILLER}` (a distractor word).
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub pattern: String,
    pub weight: f64,
    pub modality: Modality,
    pub polarity: Polarity,
    pub doctimerel: DocTimeRel,
}

impl Template {
    pub fn new(pattern: &str, weight: f64, modality: Modality, polarity: Polarity, doctimerel: DocTimeRel) -> Self {
        Template {
            pattern: pattern.into(),
            weight,
            modality,
            polarity,
            doctimerel,
        }
    }

    fn slots(&self) -> Result<Vec<Slot>> {
        self.pattern
            .split_whitespace()
            .map(|tok| match tok {
                "{EVENT}" => Ok(Slot::Event),
                "{DEGREE}" => Ok(Slot::Degree),
                "{FILLER}" => Ok(Slot::Filler),
                lit => match lit.rsplit_once('/') {
                    Some((w, t)) if !w.is_empty() && !t.is_empty() => Ok(Slot::Word(w.into(), t.into())),
                    _ => Err(Error::InvalidArgument(format!(
                        "template token {lit:?} in {:?} is not word/TAG",
                        self.pattern
                    ))),
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Word(String, String),
    Event,
    Degree,
    Filler,
}

/// Everything the generator needs; generation is a pure function of this.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
    /// Inclusive range of sentences per document.
    pub sentences: (usize, usize),
    pub events: Vec<EventWord>,
    /// Test-only event words, swapped in for a fraction of test events.
    pub oov_events: Vec<EventWord>,
    pub distractors: Vec<(String, String)>,
    pub degree_cues: Vec<DegreeCue>,
    /// Probability that a `{DEGREE}` slot emits a modifier.
    pub degree_rate: f64,
    pub templates: Vec<Template>,
    pub oov_rate: f64,
}

fn words(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|&(w, t)| (w.into(), t.into())).collect()
}

impl GeneratorSpec {
    /// The stock clinical-flavoured grammar: 60/20/20 documents, over 2000 events.
    pub fn default_clinical(seed: u64) -> Self {
        use DocTimeRel::*;
        use EventType::{Aspectual, Evidential, NotApplicable as NoType};
        use Modality::*;
        use Polarity::*;

        let nouns = [
            "pain", "fever", "nausea", "bleeding", "cough", "rash", "fatigue", "edema", "anemia", "infection",
            "pneumonia", "colitis", "arthritis", "hepatitis", "fibrosis", "stenosis", "thrombosis", "neuropathy",
            "hypertension", "tachycardia", "headache", "dizziness", "vomiting", "diarrhea", "swelling", "lesion",
            "tumor", "biopsy", "surgery", "resection", "chemotherapy", "colonoscopy", "ultrasound", "transfusion",
            "metastasis", "dermatitis", "hypoxia", "seizure", "syncope", "ulcer",
        ];
        let mut events: Vec<EventWord> = nouns.iter().map(|w| EventWord::new(w, "NN", NoType, 3.0)).collect();
        for w in ["started", "stopped", "continued", "resumed", "completed", "discontinued", "initiated"] {
            events.push(EventWord::new(w, "VBD", Aspectual, 1.0));
        }
        for w in ["reports", "notes", "describes", "shows", "reveals", "indicates"] {
            events.push(EventWord::new(w, "VBZ", Evidential, 1.0));
        }

        let mut oov_events: Vec<EventWord> = [
            "dyspnea", "cellulitis", "sclerosis", "bronchitis", "gastritis", "myalgia", "leukopenia", "hematuria",
            "pancreatitis", "nephropathy", "bradycardia", "constipation", "insomnia", "lymphoma", "endoscopy",
            "mastectomy",
        ]
        .iter()
        .map(|w| EventWord::new(w, "NN", NoType, 3.0))
        .collect();
        oov_events.push(EventWord::new("ceased", "VBD", Aspectual, 1.0));
        oov_events.push(EventWord::new("restarted", "VBD", Aspectual, 1.0));
        oov_events.push(EventWord::new("confirms", "VBZ", Evidential, 1.0));
        oov_events.push(EventWord::new("mentions", "VBZ", Evidential, 1.0));

        let distractors = words(&[
            ("today", "NN"),
            ("again", "RB"),
            ("recently", "RB"),
            ("overall", "RB"),
            ("yesterday", "NN"),
            ("daily", "RB"),
            ("clinically", "RB"),
            ("here", "RB"),
            ("now", "RB"),
            ("intermittently", "RB"),
        ]);

        let degree_cues = [
            ("slight", Degree::Little),
            ("minimal", Degree::Little),
            ("complete", Degree::Most),
            ("total", Degree::Most),
        ]
        .iter()
        .map(|&(w, d)| DegreeCue {
            word: w.into(),
            pos: "JJ".into(),
            degree: d,
        })
        .collect();

        let t = Template::new;
        let templates = vec![
            t("she/PRP currently/RB has/VBZ {DEGREE} {EVENT} {FILLER} ./.", 4.0, Actual, Pos, Overlap),
            t("{DEGREE} {EVENT} is/VBZ noted/VBN on/IN exam/NN {FILLER} ./.", 3.0, Actual, Pos, Overlap),
            t("patient/NN presents/VBZ with/IN {DEGREE} {EVENT} and/CC {EVENT} ./.", 3.0, Actual, Pos, Overlap),
            t("he/PRP had/VBD {DEGREE} {EVENT} last/JJ year/NN ./.", 3.0, Actual, Pos, Before),
            t("history/NN of/IN {EVENT} in/IN 2009/CD ./.", 2.0, Actual, Pos, Before),
            t("she/PRP underwent/VBD {EVENT} {FILLER} ./.", 2.0, Actual, Pos, Before),
            t("we/PRP will/MD schedule/VB {EVENT} next/JJ week/NN ./.", 2.0, Actual, Pos, After),
            t("she/PRP has/VBZ had/VBN {DEGREE} {EVENT} since/IN March/NNP ./.", 2.0, Actual, Pos, BeforeOverlap),
            t("she/PRP denies/VBZ {EVENT} {FILLER} ./.", 2.0, Actual, Neg, Overlap),
            t("no/DT evidence/NN of/IN {EVENT} ./.", 2.0, Actual, Neg, Overlap),
            t("he/PRP never/RB had/VBD {EVENT} before/RB ./.", 1.0, Actual, Neg, Before),
            t("possible/JJ {EVENT} is/VBZ seen/VBN {FILLER} ./.", 1.5, Hedged, Pos, Overlap),
            t("she/PRP may/MD have/VB {EVENT} ./.", 1.5, Hedged, Pos, Overlap),
            t("if/IN {EVENT} develops/VBZ ,/, call/VB us/PRP ./.", 1.5, Hypothetical, Pos, After),
            t("return/VB if/IN {EVENT} occurs/VBZ ./.", 1.0, Hypothetical, Pos, After),
            t("patients/NNS with/IN {EVENT} usually/RB recover/VBP ./.", 1.0, Generic, Pos, Overlap),
            t("vital/JJ signs/NNS are/VBP stable/JJ {FILLER} ./.", 1.0, Actual, Pos, Overlap),
            t("the/DT patient/NN is/VBZ here/RB for/IN follow/NN up/RP ./.", 1.0, Actual, Pos, Overlap),
        ];

        GeneratorSpec {
            seed,
            train_docs: 60,
            dev_docs: 20,
            test_docs: 20,
            sentences: (20, 28),
            events,
            oov_events,
            distractors,
            degree_cues,
            degree_rate: 0.3,
            templates,
            oov_rate: 0.3,
        }
    }

    /// Split `total` documents in the proportions of the original
    /// train/dev/test corpus (293:147:151).
    pub fn with_reference_split(mut self, total: usize) -> Self {
        let (a, b, c) = (293.0, 147.0, 151.0);
        let sum = a + b + c;
        self.dev_docs = (total as f64 * b / sum).round() as usize;
        self.test_docs = (total as f64 * c / sum).round() as usize;
        self.train_docs = total.saturating_sub(self.dev_docs + self.test_docs);
        self
    }

    fn validate(&self) -> Result<Vec<Vec<Slot>>> {
        if self.templates.is_empty() {
            return Err(Error::Empty("template grammar"));
        }
        if self.events.is_empty() {
            return Err(Error::Empty("event lexicon"));
        }
        if self.oov_rate > 0.0 && self.oov_events.is_empty() {
            return Err(Error::Empty("OOV event lexicon"));
        }
        if !(0.0..=1.0).contains(&self.oov_rate) || !(0.0..=1.0).contains(&self.degree_rate) {
            return Err(Error::InvalidArgument("rates must lie in [0, 1]".into()));
        }
        if self.sentences.0 > self.sentences.1 {
            return Err(Error::InvalidArgument("sentence range is reversed".into()));
        }
        let slots: Vec<Vec<Slot>> = self.templates.iter().map(Template::slots).collect::<Result<_>>()?;
        if slots.iter().flatten().any(|s| *s == Slot::Filler) && self.distractors.is_empty() {
            return Err(Error::Empty("distractor lexicon"));
        }
        // an event word elsewhere would make gold labels ambiguous
        let mut non_event: BTreeSet<String> = self.distractors.iter().map(|(w, _)| w.to_lowercase()).collect();
        non_event.extend(self.degree_cues.iter().map(|c| c.word.to_lowercase()));
        for s in slots.iter().flatten() {
            if let Slot::Word(w, _) = s {
                non_event.insert(w.to_lowercase());
            }
        }
        let known: BTreeSet<String> = self.events.iter().map(|e| e.word.to_lowercase()).collect();
        for e in self.events.iter().chain(&self.oov_events) {
            if e.types.is_empty() || e.weight <= 0.0 {
                return Err(Error::InvalidArgument(format!("event word {:?} has no weight or types", e.word)));
            }
            if non_event.contains(&e.word.to_lowercase()) {
                return Err(Error::InvalidArgument(format!("event word {:?} also used as a non-event", e.word)));
            }
        }
        if let Some(e) = self.oov_events.iter().find(|e| known.contains(&e.word.to_lowercase())) {
            return Err(Error::InvalidArgument(format!("OOV word {:?} is in the event lexicon", e.word)));
        }
        Ok(slots)
    }
}

/// A generated token before rendering.
#[derive(Debug, Clone)]
struct GenToken {
    word: String,
    pos: String,
    event: Option<EventAnnotation>,
}

/// Generated documents with gold annotations.
#[derive(Debug, Clone, Default)]
pub struct SyntheticCorpus {
    pub train: Vec<(Document, AnnotationSet)>,
    pub dev: Vec<(Document, AnnotationSet)>,
    pub test: Vec<(Document, AnnotationSet)>,
    /// POS-tagged training sentences, for training the tagger.
    pub tagged: Vec<Vec<(String, String)>>,
    /// Number of test events rewritten with OOV words.
    pub oov_events: usize,
}

impl SyntheticCorpus {
    pub fn splits(&self) -> [(&'static str, &[(Document, AnnotationSet)]); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }

    /// Write `{train,dev,test}/{text,ann}/` plus `tagged.txt` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut written = Vec::new();
        for (name, docs) in self.splits() {
            let text_dir = dir.join(name).join("text");
            let ann_dir = dir.join(name).join("ann");
            for d in [&text_dir, &ann_dir] {
                fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            for (doc, gold) in docs {
                let path = text_dir.join(format!("{}.txt", doc.id));
                fs::write(&path, &doc.text).map_err(|e| Error::io(&path, e))?;
                written.push(path);
                written.push(write_annotation_file(&ann_dir, gold, doc)?);
            }
        }
        let path = dir.join("tagged.txt");
        fs::write(&path, render_tagged(&self.tagged)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

/// One `word/TAG` sentence per line.
pub fn render_tagged(sentences: &[Vec<(String, String)>]) -> String {
    let mut out = String::new();
    for s in sentences {
        let line: Vec<String> = s.iter().map(|(w, t)| format!("{w}/{t}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

struct Generator<'a> {
    spec: &'a GeneratorSpec,
    slots: Vec<Vec<Slot>>,
    template_dist: WeightedIndex<f64>,
    event_dist: WeightedIndex<f64>,
}

fn weighted(weights: impl Iterator<Item = f64>, what: &str) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(format!("{what} weights: {e}")))
}

fn sample_type(word: &EventWord, rng: &mut impl Rng) -> Result<EventType> {
    let dist = weighted(word.types.iter().map(|&(_, p)| p), "event type")?;
    Ok(word.types[dist.sample(rng)].0)
}

impl Generator<'_> {
    fn sentence(&self, rng: &mut ChaCha8Rng) -> Result<Vec<GenToken>> {
        let ti = self.template_dist.sample(rng);
        let template = &self.spec.templates[ti];
        let mut out = Vec::new();
        let mut degree = Degree::NotApplicable;
        for slot in &self.slots[ti] {
            match slot {
                Slot::Word(w, t) => out.push(GenToken {
                    word: w.clone(),
                    pos: t.clone(),
                    event: None,
                }),
                Slot::Filler => {
                    let (w, t) = self.spec.distractors.choose(rng).expect("validated nonempty");
                    out.push(GenToken {
                        word: w.clone(),
                        pos: t.clone(),
                        event: None,
                    });
                }
                Slot::Degree => {
                    if !self.spec.degree_cues.is_empty() && rng.random_bool(self.spec.degree_rate) {
                        let cue = self.spec.degree_cues.choose(rng).expect("nonempty");
                        degree = cue.degree;
                        out.push(GenToken {
                            word: cue.word.clone(),
                            pos: cue.pos.clone(),
                            event: None,
                        });
                    }
                }
                Slot::Event => {
                    let word = &self.spec.events[self.event_dist.sample(rng)];
                    let mut ev = EventAnnotation::with_span(0, 0);
                    ev.modality = template.modality;
                    ev.polarity = template.polarity;
                    ev.degree = degree;
                    ev.event_type = sample_type(word, rng)?;
                    ev.doctimerel = Some(template.doctimerel);
                    degree = Degree::NotApplicable;
                    out.push(GenToken {
                        word: word.word.clone(),
                        pos: word.pos.clone(),
                        event: Some(ev),
                    });
                }
            }
        }
        Ok(out)
    }

    fn document(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<GenToken>>> {
        let (lo, hi) = self.spec.sentences;
        let n = rng.random_range(lo..=hi);
        (0..n).map(|_| self.sentence(rng)).collect()
    }
}

/// Render sentences to text (space-separated tokens, one sentence per line)
/// and collect the event annotations with their character offsets.
fn render(id: String, sentences: &[Vec<GenToken>]) -> Result<(Document, AnnotationSet)> {
    let mut text = String::new();
    let mut pos = 0;
    let mut events = Vec::new();
    for sentence in sentences {
        for (i, tok) in sentence.iter().enumerate() {
            if i > 0 {
                text.push(' ');
                pos += 1;
            }
            let len = tok.word.chars().count();
            if let Some(mut ev) = tok.event {
                ev.begin = pos;
                ev.end = pos + len;
                events.push(ev);
            }
            text.push_str(&tok.word);
            pos += len;
        }
        text.push('\n');
        pos += 1;
    }
    let doc = Document::new(id.clone(), text);
    let set = AnnotationSet::new(id, events)?;
    set.validate(&doc)?;
    Ok((doc, set))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate the three splits. Exactly `floor(oov_rate * test events)` test
/// events are rewritten with words from the OOV lexicon.
pub fn generate(spec: &GeneratorSpec) -> Result<SyntheticCorpus> {
    let slots = spec.validate()?;
    let gen = Generator {
        spec,
        slots,
        template_dist: weighted(spec.templates.iter().map(|t| t.weight), "template")?,
        event_dist: weighted(spec.events.iter().map(|e| e.weight), "event")?,
    };

    let mut raw: Vec<Vec<Vec<Vec<GenToken>>>> = Vec::new();
    for (stream, n) in [spec.train_docs, spec.dev_docs, spec.test_docs].into_iter().enumerate() {
        let mut rng = stream_rng(spec.seed, stream as u64);
        raw.push((0..n).map(|_| gen.document(&mut rng)).collect::<Result<_>>()?);
    }

    let test = &mut raw[2];
    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    for (d, doc) in test.iter().enumerate() {
        for (s, sentence) in doc.iter().enumerate() {
            for (t, tok) in sentence.iter().enumerate() {
                if tok.event.is_some() {
                    slots.push((d, s, t));
                }
            }
        }
    }
    let k = (spec.oov_rate * slots.len() as f64).floor() as usize;
    let mut rng = stream_rng(spec.seed, 3);
    slots.shuffle(&mut rng);
    if k > 0 {
        let oov_dist = weighted(spec.oov_events.iter().map(|e| e.weight), "OOV event")?;
        for &(d, s, t) in &slots[..k] {
            let word = &spec.oov_events[oov_dist.sample(&mut rng)];
            let tok = &mut test[d][s][t];
            tok.word = word.word.clone();
            tok.pos = word.pos.clone();
            if let Some(ev) = tok.event.as_mut() {
                ev.event_type = sample_type(word, &mut rng)?;
            }
        }
    }

    let tagged = raw[0]
        .iter()
        .flatten()
        .map(|s| s.iter().map(|t| (t.word.clone(), t.pos.clone())).collect())
        .collect();
    let mut corpus = SyntheticCorpus {
        tagged,
        oov_events: k,
        ..Default::default()
    };
    for ((name, docs), out) in ["train", "dev", "test"]
        .into_iter()
        .zip(&raw)
        .zip([&mut corpus.train, &mut corpus.dev, &mut corpus.test])
    {
        for (i, doc) in docs.iter().enumerate() {
            out.push(render(format!("{name}_{i:03}"), doc)?);
        }
    }
    Ok(corpus)
}
