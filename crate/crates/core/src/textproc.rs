//! Offset-preserving tokenization, word shapes, and an averaged-perceptron POS tagger.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Word characters are ASCII only so spans are reproducible across regex engines.
const TOKEN_PATTERN: &str = r"[A-Za-z0-9_]+|\$[0-9.]+|\S+";

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(TOKEN_PATTERN).expect("token pattern"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Character offsets, `begin` inclusive and `end` exclusive.
    pub begin: usize,
    pub end: usize,
    pub pos: Option<String>,
    pub shape: String,
}

/// Tokens of one document. Only [`tokenize`] creates these, so every
/// downstream consumer sees the same segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    doc_id: String,
    text_len: usize,
    tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Character length of the source text.
    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn offsets(&self) -> Vec<(usize, usize)> {
        self.tokens.iter().map(|t| (t.begin, t.end)).collect()
    }

    pub fn is_tagged(&self) -> bool {
        self.tokens.iter().all(|t| t.pos.is_some())
    }

    /// Attach externally known POS tags (e.g. gold tags from a tagged corpus).
    pub fn with_tags<S: AsRef<str>>(mut self, tags: &[S]) -> Result<Self> {
        if tags.len() != self.tokens.len() {
            return Err(Error::Shape(format!(
                "{} tags for {} tokens",
                tags.len(),
                self.tokens.len()
            )));
        }
        for (t, tag) in self.tokens.iter_mut().zip(tags) {
            t.pos = Some(tag.as_ref().to_string());
        }
        Ok(self)
    }
}

pub fn tokenize(document: &Document) -> TokenSequence {
    tokenize_text(&document.id, &document.text)
}

/// Left-to-right, non-overlapping matches of `\w+|\$[\d.]+|\S+` with
/// character offsets.
pub fn tokenize_text(doc_id: &str, text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut byte_cursor = 0;
    let mut char_cursor = 0;
    for m in token_regex().find_iter(text) {
        char_cursor += text[byte_cursor..m.start()].chars().count();
        let len = m.as_str().chars().count();
        tokens.push(Token {
            surface: m.as_str().to_string(),
            begin: char_cursor,
            end: char_cursor + len,
            pos: None,
            shape: word_shape(m.as_str()).unwrap_or_default(),
        });
        char_cursor += len;
        byte_cursor = m.end();
    }
    char_cursor += text[byte_cursor..].chars().count();
    TokenSequence {
        doc_id: doc_id.to_string(),
        text_len: char_cursor,
        tokens,
    }
}

/// Abstract letter pattern: `a-z` → `x`, `A-Z` → `X`, `0-9` → `d`, anything else kept.
pub fn word_shape(surface: &str) -> Result<String> {
    if surface.is_empty() {
        return Err(Error::InvalidArgument("word shape of empty string".into()));
    }
    Ok(surface
        .chars()
        .map(|c| match c {
            'a'..='z' => 'x',
            'A'..='Z' => 'X',
            '0'..='9' => 'd',
            c => c,
        })
        .collect())
}

const START: &str = "-START-";
const END: &str = "-END-";

/// Averaged-perceptron tagger weights. Immutable once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    /// Sorted, so iteration order doubles as the tie-break order.
    tags: Vec<String>,
    weights: HashMap<String, Vec<f64>>,
}

impl TaggerModel {
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Weight rows sorted by feature string (for serialization).
    pub fn sorted_weights(&self) -> Vec<(&str, &[f64])> {
        let mut rows: Vec<_> = self
            .weights
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows
    }

    pub fn from_parts(tags: Vec<String>, weights: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if tags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("tagger tag set must be sorted and unique".into()));
        }
        let mut map = HashMap::with_capacity(weights.len());
        for (feat, row) in weights {
            if row.len() != tags.len() {
                return Err(Error::Shape(format!(
                    "tagger feature {feat:?} has {} weights for {} tags",
                    row.len(),
                    tags.len()
                )));
            }
            map.insert(feat, row);
        }
        Ok(TaggerModel { tags, weights: map })
    }

    fn predict(&self, features: &[String]) -> usize {
        best_tag(&self.weights, self.tags.len(), features)
    }

    /// Greedy left-to-right tagging of surface strings.
    pub fn tag_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<String> {
        let lower: Vec<String> = words.iter().map(|w| w.as_ref().to_lowercase()).collect();
        let mut out: Vec<String> = Vec::with_capacity(words.len());
        for i in 0..words.len() {
            let prev = out.last().map(String::as_str).unwrap_or(START);
            let feats = features(words, &lower, i, prev);
            out.push(self.tags[self.predict(&feats)].clone());
        }
        out
    }
}

fn best_tag(weights: &HashMap<String, Vec<f64>>, n_tags: usize, features: &[String]) -> usize {
    let mut scores = vec![0.0; n_tags];
    for f in features {
        if let Some(row) = weights.get(f) {
            for (s, w) in scores.iter_mut().zip(row) {
                *s += w;
            }
        }
    }
    argmax_first(&scores)
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn features<S: AsRef<str>>(words: &[S], lower: &[String], i: usize, prev_tag: &str) -> Vec<String> {
    let w = &lower[i];
    let chars: Vec<char> = w.chars().collect();
    let suffix = |k: usize| chars[chars.len().saturating_sub(k)..].iter().collect::<String>();
    vec![
        format!("w {w}"),
        format!("s1 {}", suffix(1)),
        format!("s2 {}", suffix(2)),
        format!("s3 {}", suffix(3)),
        format!("sh {}", word_shape(words[i].as_ref()).unwrap_or_default()),
        format!("pt {prev_tag}"),
        format!("pw {}", if i == 0 { START } else { &lower[i - 1] }),
        format!("nw {}", lower.get(i + 1).map(String::as_str).unwrap_or(END)),
    ]
}

/// Running sums for weight averaging.
struct Averager {
    weights: HashMap<String, Vec<f64>>,
    totals: HashMap<String, Vec<f64>>,
    stamps: HashMap<String, Vec<u64>>,
    n_tags: usize,
    instances: u64,
}

impl Averager {
    fn update(&mut self, feature: &str, tag: usize, delta: f64) {
        let n = self.n_tags;
        let w = self.weights.entry(feature.to_string()).or_insert_with(|| vec![0.0; n]);
        let t = self.totals.entry(feature.to_string()).or_insert_with(|| vec![0.0; n]);
        let s = self.stamps.entry(feature.to_string()).or_insert_with(|| vec![0; n]);
        t[tag] += (self.instances - s[tag]) as f64 * w[tag];
        s[tag] = self.instances;
        w[tag] += delta;
    }

    fn finish(self) -> HashMap<String, Vec<f64>> {
        let n = self.instances.max(1) as f64;
        let mut out = HashMap::with_capacity(self.weights.len());
        for (feat, w) in self.weights {
            let t = &self.totals[&feat];
            let s = &self.stamps[&feat];
            let avg: Vec<f64> = (0..w.len())
                .map(|k| {
                    let total = t[k] + (self.instances - s[k]) as f64 * w[k];
                    // stored at 32-bit precision in model files
                    (total / n) as f32 as f64
                })
                .collect();
            if avg.iter().any(|&v| v != 0.0) {
                out.insert(feat, avg);
            }
        }
        out
    }
}

/// Train an averaged perceptron on `(word, tag)` sentences.
pub fn train_tagger(
    sentences: &[Vec<(String, String)>],
    epochs: usize,
    seed: u64,
) -> Result<TaggerModel> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("tagger epochs must be at least 1".into()));
    }
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(Error::Empty("tagger training set"));
    }
    let mut tags: Vec<String> = sentences.iter().flatten().map(|(_, t)| t.clone()).collect();
    tags.sort();
    tags.dedup();
    let tag_index: HashMap<&str, usize> = tags.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let mut avg = Averager {
        weights: HashMap::new(),
        totals: HashMap::new(),
        stamps: HashMap::new(),
        n_tags: tags.len(),
        instances: 0,
    };

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        for &si in &order {
            let sent = &sentences[si];
            let words: Vec<&str> = sent.iter().map(|(w, _)| w.as_str()).collect();
            let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
            let mut prev = START.to_string();
            for (i, (_, gold)) in sent.iter().enumerate() {
                let feats = features(&words, &lower, i, &prev);
                let guess = best_tag(&avg.weights, tags.len(), &feats);
                let truth = tag_index[gold.as_str()];
                avg.instances += 1;
                if guess != truth {
                    for f in &feats {
                        avg.update(f, truth, 1.0);
                        avg.update(f, guess, -1.0);
                    }
                }
                prev = tags[guess].clone();
            }
        }
    }
    Ok(TaggerModel {
        tags,
        weights: avg.finish(),
    })
}

/// Fill in POS tags for every token.
pub fn tag(model: &TaggerModel, sequence: &TokenSequence) -> TokenSequence {
    let words: Vec<&str> = sequence.tokens.iter().map(|t| t.surface.as_str()).collect();
    let tags = model.tag_words(&words);
    let mut out = sequence.clone();
    for (t, tag) in out.tokens.iter_mut().zip(tags) {
        t.pos = Some(tag);
    }
    out
}

/// Parse `word/TAG word/TAG ...` lines (one sentence per line, blank lines ignored).
pub fn parse_tagged_corpus(text: &str) -> Result<Vec<Vec<(String, String)>>> {
    let mut sentences = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut sent = Vec::new();
        for item in line.split(' ') {
            match item.rsplit_once('/') {
                Some((w, t)) if !w.is_empty() && !t.is_empty() => {
                    sent.push((w.to_string(), t.to_string()))
                }
                _ => {
                    return Err(Error::MalformedLine {
                        line: n + 1,
                        reason: format!("expected word/TAG, found {item:?}"),
                    })
                }
            }
        }
        sentences.push(sent);
    }
    Ok(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(text: &str) -> Vec<(String, usize, usize)> {
        tokenize_text("t", text)
            .tokens()
            .iter()
            .map(|t| (t.surface.clone(), t.begin, t.end))
            .collect()
    }

    fn s(x: &str, b: usize, e: usize) -> (String, usize, usize) {
        (x.to_string(), b, e)
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(spans("did not have"), vec![s("did", 0, 3), s("not", 4, 7), s("have", 8, 12)]);
        assert_eq!(spans("$12.50 bolus"), vec![s("$12.50", 0, 6), s("bolus", 7, 12)]);
        assert_eq!(spans("nausea."), vec![s("nausea", 0, 6), s(".", 6, 7)]);
        assert!(spans("").is_empty());
        assert!(spans(" \t\r\n").is_empty());
    }

    #[test]
    fn tokenizer_alternation_order() {
        // `\S+` swallows everything up to whitespace once it starts
        assert_eq!(spans("x-ray"), vec![s("x", 0, 1), s("-ray", 1, 5)]);
        assert_eq!(spans("$x"), vec![s("$x", 0, 2)]);
        // non-ASCII letters are not word characters
        assert_eq!(spans("café ok"), vec![s("caf", 0, 3), s("é", 3, 4), s("ok", 5, 7)]);
        assert_eq!(spans("2014:"), vec![s("2014", 0, 4), s(":", 4, 5)]);
    }

    #[test]
    fn shape_examples() {
        assert_eq!(word_shape("April").unwrap(), "Xxxxx");
        assert_eq!(word_shape("B12").unwrap(), "Xdd");
        assert_eq!(word_shape("x-ray").unwrap(), "x-xxx");
        assert_eq!(word_shape("$12.50").unwrap(), "$dd.dd");
        assert!(word_shape("").is_err());
    }

    #[test]
    fn shape_idempotent_without_digits() {
        for w in ["April", "x-ray", "NEG", "a.b.", "é"] {
            let once = word_shape(w).unwrap();
            assert_eq!(word_shape(&once).unwrap(), once);
        }
        // a 'd' produced by shaping is itself a lowercase letter
        assert_eq!(word_shape(&word_shape("B12").unwrap()).unwrap(), "Xxx");
    }

    fn sent(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(w, t)| (w.to_string(), t.to_string())).collect()
    }

    #[test]
    fn tagger_fits_single_word() {
        let model = train_tagger(&[sent(&[("resume", "VB")])], 5, 0).unwrap();
        assert_eq!(model.tag_words(&["resume"]), vec!["VB"]);
    }

    #[test]
    fn tagger_fits_disjoint_tags() {
        let data = vec![sent(&[("patient", "NN"), ("bleeds", "VBZ")])];
        let model = train_tagger(&data, 5, 1).unwrap();
        assert_eq!(model.tag_words(&["patient", "bleeds"]), vec!["NN", "VBZ"]);
    }

    #[test]
    fn tagger_rejects_bad_input() {
        assert!(train_tagger(&[sent(&[("a", "DT")])], 0, 0).is_err());
        assert!(train_tagger(&[], 3, 0).is_err());
    }

    #[test]
    fn tagging_is_deterministic_and_reproduces_training() {
        let data = vec![
            sent(&[("the", "DT"), ("patient", "NN"), ("denies", "VBZ"), ("nausea", "NN"), (".", ".")]),
            sent(&[("we", "PRP"), ("will", "MD"), ("resume", "VB"), ("chemotherapy", "NN"), (".", ".")]),
            sent(&[("she", "PRP"), ("reports", "VBZ"), ("slight", "JJ"), ("pain", "NN"), (".", ".")]),
        ];
        let a = train_tagger(&data, 10, 7).unwrap();
        let b = train_tagger(&data, 10, 7).unwrap();
        assert_eq!(a, b);
        for s in &data {
            let words: Vec<&str> = s.iter().map(|(w, _)| w.as_str()).collect();
            let gold: Vec<&str> = s.iter().map(|(_, t)| t.as_str()).collect();
            assert_eq!(a.tag_words(&words), gold);
        }

        let doc = Document::new("d", "the patient denies pain .");
        let seq = tokenize(&doc);
        let t1 = tag(&a, &seq);
        assert_eq!(t1, tag(&a, &seq));
        assert!(t1.is_tagged());
        assert!(tag(&a, &tokenize_text("e", "")).is_empty());
    }

    #[test]
    fn ties_go_to_smallest_tag() {
        let model = TaggerModel::from_parts(vec!["A".into(), "B".into()], vec![]).unwrap();
        assert_eq!(model.tag_words(&["anything"]), vec!["A"]);
    }

    #[test]
    fn tagged_corpus_parsing() {
        let parsed = parse_tagged_corpus("the/DT dose/NN\n\n1/2/CD tab/NN\n").unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1][0], ("1/2".to_string(), "CD".to_string()));
        assert!(matches!(
            parse_tagged_corpus("ok/NN\nbroken"),
            Err(Error::MalformedLine { line: 2, .. })
        ));
    }
}
