//! Lookup vocabularies, embedding tables, and context windows.

use std::collections::HashMap;
use std::io::BufRead;

use ndarray::{s, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::textproc::TokenSequence;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;

// Tokens, tags and shapes never contain spaces, so these cannot collide.
const PAD_ENTRY: &str = " PAD ";
const UNK_ENTRY: &str = " UNK ";

pub const DEFAULT_TOKEN_DIM: usize = 300;
pub const DEFAULT_POS_DIM: usize = 32;
pub const DEFAULT_SHAPE_DIM: usize = 16;
pub const DEFAULT_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VocabKind {
    Token,
    Pos,
    Shape,
}

impl VocabKind {
    pub const ALL: [VocabKind; 3] = [VocabKind::Token, VocabKind::Pos, VocabKind::Shape];

    pub fn as_str(self) -> &'static str {
        match self {
            VocabKind::Token => "token",
            VocabKind::Pos => "pos",
            VocabKind::Shape => "shape",
        }
    }
}

/// String ↔ index bijection with `PAD = 0` and `UNK = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    kind: VocabKind,
    entries: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(kind: VocabKind) -> Self {
        let mut v = Vocabulary {
            kind,
            entries: Vec::new(),
            index: HashMap::new(),
        };
        v.push(PAD_ENTRY.to_string());
        v.push(UNK_ENTRY.to_string());
        v
    }

    /// Rebuild from a serialized entry list (reserved entries included).
    pub fn from_entries(kind: VocabKind, entries: Vec<String>) -> Result<Self> {
        if entries.len() < 2 || entries[0] != PAD_ENTRY || entries[1] != UNK_ENTRY {
            return Err(Error::Container(format!(
                "{} vocabulary lacks reserved PAD/UNK entries",
                kind.as_str()
            )));
        }
        let mut v = Vocabulary::new(kind);
        for e in entries.into_iter().skip(2) {
            if v.index.contains_key(&e) {
                return Err(Error::Container(format!("duplicate vocabulary entry {e:?}")));
            }
            v.push(e);
        }
        Ok(v)
    }

    fn push(&mut self, entry: String) -> u32 {
        let i = self.entries.len() as u32;
        self.index.insert(entry.clone(), i);
        self.entries.push(entry);
        i
    }

    fn normalize<'a>(&self, s: &'a str) -> std::borrow::Cow<'a, str> {
        match self.kind {
            VocabKind::Token => std::borrow::Cow::Owned(s.to_lowercase()),
            _ => std::borrow::Cow::Borrowed(s),
        }
    }

    /// Insert if new; returns the index either way.
    pub fn add(&mut self, s: &str) -> u32 {
        let key = self.normalize(s);
        match self.index.get(key.as_ref()) {
            Some(&i) => i,
            None => self.push(key.into_owned()),
        }
    }

    /// Index of `s`, or `UNK`.
    pub fn lookup(&self, s: &str) -> u32 {
        self.index.get(self.normalize(s).as_ref()).copied().unwrap_or(UNK)
    }

    /// Exact (already normalized) entry lookup.
    pub fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn word(&self, i: u32) -> Option<&str> {
        self.entries.get(i as usize).map(String::as_str)
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabularies {
    pub token: Vocabulary,
    pub pos: Vocabulary,
    pub shape: Vocabulary,
}

impl Vocabularies {
    /// Map every token to its `(token, pos, shape)` index triple.
    pub fn encode(&self, seq: &TokenSequence) -> Result<EncodedSequence> {
        let rows = seq
            .tokens()
            .iter()
            .map(|t| {
                let pos = t.pos.as_deref().ok_or_else(|| {
                    Error::InvalidArgument(format!("token {:?} has no POS tag", t.surface))
                })?;
                Ok([
                    self.token.lookup(&t.surface),
                    self.pos.lookup(pos),
                    self.shape.lookup(&t.shape),
                ])
            })
            .collect::<Result<_>>()?;
        Ok(EncodedSequence { rows })
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.token.len(), self.pos.len(), self.shape.len()]
    }
}

/// First-occurrence-ordered vocabularies over tagged training sequences.
pub fn build_vocabularies<'a>(
    sequences: impl IntoIterator<Item = &'a TokenSequence>,
) -> Result<Vocabularies> {
    let mut v = Vocabularies {
        token: Vocabulary::new(VocabKind::Token),
        pos: Vocabulary::new(VocabKind::Pos),
        shape: Vocabulary::new(VocabKind::Shape),
    };
    let mut seen = 0usize;
    for seq in sequences {
        for t in seq.tokens() {
            let pos = t.pos.as_deref().ok_or_else(|| {
                Error::InvalidArgument(format!("token {:?} has no POS tag", t.surface))
            })?;
            v.token.add(&t.surface);
            v.pos.add(pos);
            v.shape.add(&t.shape);
            seen += 1;
        }
    }
    if seen == 0 {
        return Err(Error::Empty("vocabulary corpus"));
    }
    Ok(v)
}

/// One lookup table; row `PAD` is zero and never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub kind: VocabKind,
    pub matrix: Array2<f64>,
}

impl EmbeddingTable {
    pub fn zeros(kind: VocabKind, rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            kind,
            matrix: Array2::zeros((rows, dim)),
        }
    }

    /// Uniform in `[-range, range]`, PAD row zeroed.
    pub fn uniform<R: Rng>(kind: VocabKind, rows: usize, dim: usize, range: f64, rng: &mut R) -> Self {
        let mut matrix = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-range..=range));
        if rows > 0 {
            matrix.row_mut(PAD as usize).fill(0.0);
        }
        EmbeddingTable { kind, matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
}

/// The token, POS and shape tables of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub token: EmbeddingTable,
    pub pos: EmbeddingTable,
    pub shape: EmbeddingTable,
}

impl EmbeddingTables {
    /// Width of one embedded row: the three table widths concatenated.
    pub fn dim(&self) -> usize {
        self.token.dim() + self.pos.dim() + self.shape.dim()
    }

    pub fn tables(&self) -> [&EmbeddingTable; 3] {
        [&self.token, &self.pos, &self.shape]
    }

    pub fn tables_mut(&mut self) -> [&mut EmbeddingTable; 3] {
        [&mut self.token, &mut self.pos, &mut self.shape]
    }
}

/// Overwrite rows of `table` with vectors from a GloVe-format text stream.
///
/// Each line is `word v1 ... vD` with `D` the table width. Words not in the
/// vocabulary are ignored; vocabulary words missing from the stream keep
/// their current values. Returns the number of rows set.
pub fn load_pretrained<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    table: &mut EmbeddingTable,
) -> Result<usize> {
    if vocab.len() != table.rows() {
        return Err(Error::Shape(format!(
            "vocabulary has {} entries but table has {} rows",
            vocab.len(),
            table.rows()
        )));
    }
    let dim = table.dim();
    let mut hits = 0;
    let mut values = Vec::with_capacity(dim);
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedLine {
            line: n + 1,
            reason: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        values.clear();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| Error::MalformedLine {
                line: n + 1,
                reason: format!("{f:?} is not a number"),
            })?;
            values.push(v);
        }
        if values.len() != dim {
            return Err(Error::MalformedLine {
                line: n + 1,
                reason: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(i) = vocab.get(word) {
            if i != PAD {
                table
                    .matrix
                    .row_mut(i as usize)
                    .iter_mut()
                    .zip(&values)
                    .for_each(|(dst, &v)| *dst = v);
                hits += 1;
            }
        }
    }
    table.matrix.row_mut(PAD as usize).fill(0.0);
    Ok(hits)
}

/// A document's tokens as `(token, pos, shape)` indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    pub rows: Vec<[u32; 3]>,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `2w + 1` index triples centred on one token, PAD beyond the document edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowInstance {
    pub center: usize,
    pub width: usize,
    pub rows: Vec<[u32; 3]>,
    pub label: Option<usize>,
}

impl WindowInstance {
    pub fn seq_len(&self) -> usize {
        self.rows.len()
    }
}

pub fn extract_window(seq: &EncodedSequence, center: usize, w: usize) -> Result<WindowInstance> {
    if w == 0 {
        return Err(Error::InvalidArgument("window size must be at least 1".into()));
    }
    if center >= seq.len() {
        return Err(Error::InvalidArgument(format!(
            "window centre {center} outside sequence of length {}",
            seq.len()
        )));
    }
    let rows = (0..2 * w + 1)
        .map(|k| {
            (center + k)
                .checked_sub(w)
                .and_then(|p| seq.rows.get(p))
                .copied()
                .unwrap_or([PAD; 3])
        })
        .collect();
    Ok(WindowInstance {
        center,
        width: w,
        rows,
        label: None,
    })
}

/// Look up and concatenate the three embeddings for every window row.
pub fn embed(window: &WindowInstance, tables: &EmbeddingTables) -> Result<Array2<f64>> {
    let dims = tables.tables().map(EmbeddingTable::dim);
    let mut out = Array2::zeros((window.rows.len(), dims.iter().sum()));
    for (r, triple) in window.rows.iter().enumerate() {
        let mut col = 0;
        for (k, table) in tables.tables().into_iter().enumerate() {
            let idx = triple[k] as usize;
            if idx >= table.rows() {
                return Err(Error::InvalidArgument(format!(
                    "{} index {idx} outside table of {} rows",
                    table.kind.as_str(),
                    table.rows()
                )));
            }
            out.slice_mut(s![r, col..col + dims[k]])
                .assign(&table.matrix.row(idx));
            col += dims[k];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::textproc::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(id: &str, text: &str) -> TokenSequence {
        let seq = tokenize(&Document::new(id, text));
        let tags = vec!["NN"; seq.len()];
        seq.with_tags(&tags).unwrap()
    }

    fn encoded(n: usize) -> EncodedSequence {
        EncodedSequence {
            rows: (0..n as u32).map(|i| [i + 2, 2, 2]).collect(),
        }
    }

    fn tables(rows: [usize; 3], dims: [usize; 3]) -> EmbeddingTables {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        EmbeddingTables {
            token: EmbeddingTable::uniform(VocabKind::Token, rows[0], dims[0], 0.05, &mut rng),
            pos: EmbeddingTable::uniform(VocabKind::Pos, rows[1], dims[1], 0.05, &mut rng),
            shape: EmbeddingTable::uniform(VocabKind::Shape, rows[2], dims[2], 0.05, &mut rng),
        }
    }

    #[test]
    fn vocabulary_construction() {
        let v = build_vocabularies([&tagged("a", "bleeding")]).unwrap();
        assert_eq!(v.token.entries().len(), 3);
        assert_eq!(v.token.lookup("bleeding"), 2);
        assert_eq!(v.token.lookup("Bleeding"), 2);
        assert_eq!(v.token.lookup("nausea"), UNK);

        let v = build_vocabularies([&tagged("a", "Pain pain PAIN")]).unwrap();
        assert_eq!(v.token.len(), 3);
        // shape keeps case
        assert_eq!(v.shape.len(), 5);
        for i in 0..v.shape.len() as u32 {
            assert_eq!(v.shape.get(v.shape.word(i).unwrap()), Some(i));
        }
        assert!(build_vocabularies([&tagged("a", "  ")]).is_err());
        assert!(build_vocabularies([&tokenize(&Document::new("u", "untagged"))]).is_err());
    }

    #[test]
    fn reserved_entries_do_not_collide() {
        let v = build_vocabularies([&tagged("a", "PAD UNK <pad>")]).unwrap();
        assert!(v.token.lookup("pad") >= 2);
        assert!(v.token.lookup("unk") >= 2);
        let rebuilt = Vocabulary::from_entries(VocabKind::Token, v.token.entries().to_vec()).unwrap();
        assert_eq!(rebuilt, v.token);
    }

    #[test]
    fn pretrained_vectors() {
        let v = build_vocabularies([&tagged("a", "nausea bolus")]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut table = EmbeddingTable::uniform(VocabKind::Token, v.token.len(), 3, 0.05, &mut rng);
        let before = table.matrix.row(3).to_owned();
        let stream = "nausea 1 2 3\nthe 4 5 6\n";
        let hits = load_pretrained(stream.as_bytes(), &v.token, &mut table).unwrap();
        assert_eq!(hits, 1);
        assert_eq!(table.matrix.row(2).to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(table.matrix.row(3), before);
        assert!(table.matrix.row(0).iter().all(|&x| x == 0.0));

        let err = load_pretrained("nausea 1 2\n".as_bytes(), &v.token, &mut table).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
        let err = load_pretrained("the 1 2 3\nx 1 q 3\n".as_bytes(), &v.token, &mut table).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn window_boundaries() {
        let seq = encoded(3);
        let win = extract_window(&seq, 0, 4).unwrap();
        assert_eq!(win.seq_len(), 9);
        let pads: Vec<bool> = win.rows.iter().map(|r| *r == [PAD; 3]).collect();
        assert_eq!(pads, [true, true, true, true, false, false, false, true, true]);
        assert_eq!(win.rows[4], seq.rows[0]);
        assert_eq!(win.rows[6], seq.rows[2]);

        assert_eq!(extract_window(&encoded(20), 10, 4).unwrap().seq_len(), 9);
        assert_eq!(extract_window(&encoded(20), 10, 5).unwrap().seq_len(), 11);
        assert!(extract_window(&encoded(20), 10, 4).unwrap().rows.iter().all(|r| *r != [PAD; 3]));
        assert!(extract_window(&seq, 3, 4).is_err());
        assert!(extract_window(&seq, 0, 0).is_err());
    }

    #[test]
    fn embedding_rows() {
        let t = tables([30, 4, 4], [300, 32, 16]);
        assert_eq!(t.dim(), 348);
        let all_pad = WindowInstance {
            center: 0,
            width: 1,
            rows: vec![[PAD; 3]; 3],
            label: None,
        };
        let m = embed(&all_pad, &t).unwrap();
        assert_eq!(m.dim(), (3, 348));
        assert!(m.iter().all(|&x| x == 0.0));

        let a = extract_window(&encoded(5), 2, 2).unwrap();
        let mut b = a.clone();
        b.rows[3][0] = 20;
        let (ea, eb) = (embed(&a, &t).unwrap(), embed(&b, &t).unwrap());
        for r in 0..5 {
            assert_eq!(ea.row(r) == eb.row(r), r != 3);
        }
        assert_eq!(ea.row(2).slice(s![..300]), t.token.matrix.row(4));
        assert_eq!(ea.row(2).slice(s![300..332]), t.pos.matrix.row(2));

        b.rows[0][1] = 99;
        assert!(embed(&b, &t).is_err());
    }
}
