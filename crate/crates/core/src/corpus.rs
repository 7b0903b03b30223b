//! Raw clinical notes, event annotations, and the standoff file format.
//!
//! All offsets are counted in Unicode scalar values over the untouched note
//! text. Annotation files are a small Anafora-compatible XML subset:
//!
//! ```text
//! <annotations>
//!   <entity>
//!     <id>1@e@doc0@system</id>
//!     <span>24,32</span>
//!     <type>EVENT</type>
//!     <properties>
//!       <ContextualModality>ACTUAL</ContextualModality>
//!       <Degree>N/A</Degree>
//!       <Polarity>NEG</Polarity>
//!       <Type>N/A</Type>
//!       <DocTimeRel>BEFORE</DocTimeRel>   (optional)
//!     </properties>
//!   </entity>
//! </annotations>
//! ```

use std::fmt;
use std::fs;
use std::ops::Add;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::textproc::TokenSequence;

/// Suffix of every annotation file: `<doc_id>.ann.xml`.
pub const ANNOTATION_SUFFIX: &str = ".ann.xml";

/// A categorical event attribute with a closed value set.
pub trait Attribute: Copy + Eq + Ord + fmt::Debug + 'static {
    /// Element name in the standoff `properties` block.
    const FIELD: &'static str;
    /// Every value, in canonical label order.
    const ALL: &'static [Self];

    fn as_str(self) -> &'static str;

    fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::UnknownValue {
                field: Self::FIELD,
                value: s.to_string(),
            })
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|&v| v == self).unwrap()
    }
}

macro_rules! attribute_enum {
    ($(#[$meta:meta])* $name:ident, $field:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl Attribute for $name {
            const FIELD: &'static str = $field;
            const ALL: &'static [Self] = &[$($name::$variant),+];

            fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

attribute_enum!(
    /// Contextual modality of an event mention.
    Modality, "ContextualModality", {
        Actual => "ACTUAL",
        Hypothetical => "HYPOTHETICAL",
        Hedged => "HEDGED",
        Generic => "GENERIC",
    }
);

attribute_enum!(Degree, "Degree", {
    Most => "MOST",
    Little => "LITTLE",
    NotApplicable => "N/A",
});

attribute_enum!(Polarity, "Polarity", {
    Pos => "POS",
    Neg => "NEG",
});

attribute_enum!(EventType, "Type", {
    Aspectual => "ASPECTUAL",
    Evidential => "EVIDENTIAL",
    NotApplicable => "N/A",
});

attribute_enum!(
    /// Relation of an event to the document creation time.
    DocTimeRel, "DocTimeRel", {
        Before => "BEFORE",
        Overlap => "OVERLAP",
        After => "AFTER",
        BeforeOverlap => "BEFORE-OVERLAP",
    }
);

/// A raw note. `text` is never modified after loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    char_len: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let char_len = text.chars().count();
        Document {
            id: id.into(),
            text,
            char_len,
        }
    }

    /// Length in characters (the offset coordinate system).
    pub fn len(&self) -> usize {
        self.char_len
    }

    pub fn is_empty(&self) -> bool {
        self.char_len == 0
    }

    /// Substring by character offsets, `None` if out of range.
    pub fn slice(&self, begin: usize, end: usize) -> Option<&str> {
        if begin > end || end > self.char_len {
            return None;
        }
        let byte_at = |c: usize| {
            self.text
                .char_indices()
                .nth(c)
                .map(|(b, _)| b)
                .unwrap_or(self.text.len())
        };
        let b = byte_at(begin);
        let e = b + self.text[b..]
            .char_indices()
            .nth(end - begin)
            .map(|(i, _)| i)
            .unwrap_or(self.text.len() - b);
        Some(&self.text[b..e])
    }
}

/// Read a note from disk. The id is the file stem; bytes must be valid UTF-8.
pub fn load_document(path: impl AsRef<Path>) -> Result<Document> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Encoding(path.to_path_buf()))?;
    Ok(Document::new(doc_id_from_path(path), text))
}

fn doc_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventAnnotation {
    pub begin: usize,
    pub end: usize,
    pub modality: Modality,
    pub degree: Degree,
    pub polarity: Polarity,
    pub event_type: EventType,
    pub doctimerel: Option<DocTimeRel>,
}

impl EventAnnotation {
    /// An event with the most common attribute values (ACTUAL, N/A, POS, N/A).
    pub fn with_span(begin: usize, end: usize) -> Self {
        EventAnnotation {
            begin,
            end,
            modality: Modality::Actual,
            degree: Degree::NotApplicable,
            polarity: Polarity::Pos,
            event_type: EventType::NotApplicable,
            doctimerel: None,
        }
    }

    pub fn span(&self) -> (usize, usize) {
        (self.begin, self.end)
    }

    fn check(&self, doc_len: usize) -> Result<()> {
        if self.begin >= self.end {
            return Err(Error::InvalidSpan {
                begin: self.begin,
                end: self.end,
            });
        }
        if self.end > doc_len {
            return Err(Error::SpanOutOfBounds {
                begin: self.begin,
                end: self.end,
                len: doc_len,
            });
        }
        Ok(())
    }
}

/// Events of one document, sorted by `(begin, end)` with unique spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    pub doc_id: String,
    events: Vec<EventAnnotation>,
}

impl AnnotationSet {
    pub fn empty(doc_id: impl Into<String>) -> Self {
        AnnotationSet {
            doc_id: doc_id.into(),
            events: Vec::new(),
        }
    }

    /// Sorts the events and rejects empty intervals and repeated spans.
    pub fn new(doc_id: impl Into<String>, mut events: Vec<EventAnnotation>) -> Result<Self> {
        for ev in &events {
            if ev.begin >= ev.end {
                return Err(Error::InvalidSpan {
                    begin: ev.begin,
                    end: ev.end,
                });
            }
        }
        events.sort_by_key(|e| e.span());
        if let Some(w) = events.windows(2).find(|w| w[0].span() == w[1].span()) {
            return Err(Error::DuplicateSpan {
                begin: w[0].begin,
                end: w[0].end,
            });
        }
        Ok(AnnotationSet {
            doc_id: doc_id.into(),
            events,
        })
    }

    pub fn events(&self) -> &[EventAnnotation] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Check every span against the document it annotates.
    pub fn validate(&self, document: &Document) -> Result<()> {
        if self.doc_id != document.id {
            return Err(Error::DocumentMismatch(format!(
                "annotations for {:?} applied to document {:?}",
                self.doc_id, document.id
            )));
        }
        self.events.iter().try_for_each(|e| e.check(document.len()))
    }
}

/// Parse a standoff annotation file for `document`.
///
/// Only `EVENT` entities are kept; other entity types (time expressions and
/// the like) are skipped.
pub fn parse_annotations(standoff_text: &str, document: &Document) -> Result<AnnotationSet> {
    let xml = roxmltree::Document::parse(standoff_text).map_err(|e| Error::Markup(e.to_string()))?;
    let root = xml.root_element();
    let annotations = match root.tag_name().name() {
        "annotations" => root,
        // full Anafora files wrap the block in <data>
        "data" => child(root, "annotations")
            .ok_or_else(|| Error::Markup("<data> without <annotations>".into()))?,
        other => return Err(Error::Markup(format!("unexpected root element <{other}>"))),
    };

    let mut events = Vec::new();
    for entity in annotations
        .children()
        .filter(|n| n.is_element() && n.has_tag_name("entity"))
    {
        let kind = required_text(entity, "type")?;
        if kind != "EVENT" {
            continue;
        }
        let span = required_text(entity, "span")?;
        let (begin, end) = parse_span(span)?;
        let props = child(entity, "properties")
            .ok_or_else(|| Error::Markup(format!("entity {span} has no <properties>")))?;
        let event = EventAnnotation {
            begin,
            end,
            modality: required_attr(props)?,
            degree: required_attr(props)?,
            polarity: required_attr(props)?,
            event_type: required_attr(props)?,
            doctimerel: match child(props, DocTimeRel::FIELD) {
                Some(n) => Some(DocTimeRel::parse(n.text().unwrap_or("").trim())?),
                None => None,
            },
        };
        event.check(document.len())?;
        events.push(event);
    }
    AnnotationSet::new(document.id.clone(), events)
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.is_element() && n.has_tag_name(name))
}

fn required_text<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Result<&'a str> {
    child(node, name)
        .map(|n| n.text().unwrap_or("").trim())
        .ok_or_else(|| Error::Markup(format!("entity missing <{name}>")))
}

fn required_attr<A: Attribute>(props: roxmltree::Node<'_, '_>) -> Result<A> {
    let text = child(props, A::FIELD)
        .ok_or_else(|| Error::Markup(format!("properties missing <{}>", A::FIELD)))?
        .text()
        .unwrap_or("")
        .trim();
    A::parse(text)
}

fn parse_span(span: &str) -> Result<(usize, usize)> {
    if span.contains(';') {
        return Err(Error::Markup(format!("discontinuous span {span:?} is not supported")));
    }
    let (b, e) = span
        .split_once(',')
        .ok_or_else(|| Error::Markup(format!("span {span:?} is not BEGIN,END")))?;
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Markup(format!("span {span:?} is not BEGIN,END")))
    };
    let (begin, end) = (num(b)?, num(e)?);
    if begin >= end {
        return Err(Error::InvalidSpan { begin, end });
    }
    Ok((begin, end))
}

/// Render `set` as a standoff annotation file.
pub fn write_annotations(set: &AnnotationSet, document: &Document) -> Result<String> {
    set.validate(document)?;
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<annotations>\n");
    for (n, ev) in set.events().iter().enumerate() {
        out.push_str("  <entity>\n");
        out.push_str(&format!(
            "    <id>{}@e@{}@system</id>\n",
            n + 1,
            escape(&document.id)
        ));
        out.push_str(&format!("    <span>{},{}</span>\n", ev.begin, ev.end));
        out.push_str("    <type>EVENT</type>\n    <properties>\n");
        push_prop(&mut out, ev.modality);
        push_prop(&mut out, ev.degree);
        push_prop(&mut out, ev.polarity);
        push_prop(&mut out, ev.event_type);
        if let Some(rel) = ev.doctimerel {
            push_prop(&mut out, rel);
        }
        out.push_str("    </properties>\n  </entity>\n");
    }
    out.push_str("</annotations>\n");
    Ok(out)
}

fn push_prop<A: Attribute>(out: &mut String, value: A) {
    out.push_str(&format!(
        "      <{0}>{1}</{0}>\n",
        A::FIELD,
        escape(value.as_str())
    ));
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Per-token span label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpanTag {
    O,
    B,
    I,
}

impl SpanTag {
    pub const ALL: [SpanTag; 3] = [SpanTag::O, SpanTag::B, SpanTag::I];

    pub fn as_str(self) -> &'static str {
        match self {
            SpanTag::O => "O",
            SpanTag::B => "B-EVENT",
            SpanTag::I => "I-EVENT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        SpanTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownValue {
                field: "span tag",
                value: s.to_string(),
            })
    }
}

/// Project gold spans onto tokens as BIO tags.
///
/// A token overlapping an event (even partially) is inside it; the first
/// such token is `B`, the rest `I`.
pub fn align_to_tokens(set: &AnnotationSet, tokens: &TokenSequence) -> Result<Vec<SpanTag>> {
    if set.doc_id != tokens.doc_id() {
        return Err(Error::DocumentMismatch(format!(
            "annotations for {:?} aligned to tokens of {:?}",
            set.doc_id,
            tokens.doc_id()
        )));
    }
    let toks = tokens.tokens();
    if let Some(t) = toks.iter().find(|t| t.end > tokens.text_len()) {
        return Err(Error::SpanOutOfBounds {
            begin: t.begin,
            end: t.end,
            len: tokens.text_len(),
        });
    }
    let mut tags = vec![SpanTag::O; toks.len()];
    for ev in set.events() {
        // tokens are sorted and disjoint: binary search for the first candidate
        let start = toks.partition_point(|t| t.end <= ev.begin);
        let mut first = true;
        for (i, t) in toks.iter().enumerate().skip(start) {
            if t.begin >= ev.end {
                break;
            }
            if first {
                tags[i] = SpanTag::B;
                first = false;
            } else if tags[i] == SpanTag::O {
                tags[i] = SpanTag::I;
            }
        }
    }
    Ok(tags)
}

/// Document and event counts; corpus totals are plain sums of per-document counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub documents: usize,
    pub events: usize,
}

impl CorpusStats {
    pub fn of(set: &AnnotationSet) -> Self {
        CorpusStats {
            documents: 1,
            events: set.len(),
        }
    }

    pub fn sum<'a>(sets: impl IntoIterator<Item = &'a AnnotationSet>) -> Self {
        sets.into_iter().map(CorpusStats::of).fold(CorpusStats::default(), Add::add)
    }
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(self, rhs: Self) -> Self {
        CorpusStats {
            documents: self.documents + rhs.documents,
            events: self.events + rhs.events,
        }
    }
}

/// All `*.txt` notes in a directory, sorted by file name.
///
/// If `dir` has a `text/` subdirectory that is used instead, so a corpus
/// split directory and a bare directory of notes are both accepted.
pub fn load_documents(dir: impl AsRef<Path>) -> Result<Vec<Document>> {
    let dir = dir.as_ref();
    let text_dir = dir.join("text");
    let dir = if text_dir.is_dir() { text_dir } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths.iter().map(load_document).collect()
}

pub fn annotation_path(dir: impl AsRef<Path>, doc_id: &str) -> PathBuf {
    dir.as_ref().join(format!("{doc_id}{ANNOTATION_SUFFIX}"))
}

/// Read `<dir>/<doc_id>.ann.xml` for `document`.
pub fn read_annotation_file(dir: impl AsRef<Path>, document: &Document) -> Result<AnnotationSet> {
    let path = annotation_path(dir, &document.id);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_annotations(&text, document)
}

pub fn write_annotation_file(
    dir: impl AsRef<Path>,
    set: &AnnotationSet,
    document: &Document,
) -> Result<PathBuf> {
    let text = write_annotations(set, document)?;
    let path = annotation_path(&dir, &document.id);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// A split directory laid out as `text/<id>.txt` plus `ann/<id>.ann.xml`.
pub fn load_split(dir: impl AsRef<Path>) -> Result<Vec<(Document, AnnotationSet)>> {
    let dir = dir.as_ref();
    let ann_dir = dir.join("ann");
    load_documents(dir)?
        .into_iter()
        .map(|doc| {
            let set = read_annotation_file(&ann_dir, &doc)?;
            Ok((doc, set))
        })
        .collect()
}
