//! Binary model container.
//!
//! ```text
//! "CLNX"  u16 version
//! section*   = tag[4] u64 length payload
//!   HYPR     u32 n, (str key, str value)*
//!   LABL     u32 n, str*
//!   VOCB     u8 kind, u32 n, str*            (token, pos, shape)
//!   TAGR     u32 n_tags, str*, u32 n_feat, (str feature, f32 * n_tags)*   (optional)
//!   TENS     str name, u32 rank, u32 dim*, f32 data (row-major)
//! str        = u32 byte length, UTF-8 bytes
//! ```
//!
//! All integers and reals are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ConvLayer, Hyperparams, MlpLayer, ModelBundle, Params, SoftmaxLayer, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, EmbeddingTables, VocabKind, Vocabularies, Vocabulary};
use crate::textproc::TaggerModel;

pub const MAGIC: &[u8; 4] = b"CLNX";
pub const FORMAT_VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f32(&mut self, v: f64) {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], body: impl FnOnce(&mut Writer)) {
    let mut w = Writer { buf: Vec::new() };
    body(&mut w);
    out.extend_from_slice(tag);
    out.extend_from_slice(&(w.buf.len() as u64).to_le_bytes());
    out.extend_from_slice(&w.buf);
}

fn hyper_pairs(m: &ModelBundle) -> Vec<(&'static str, String)> {
    let h = &m.hyper;
    vec![
        ("task", m.task.clone()),
        ("window", h.window.to_string()),
        ("kernel_width", h.kernel_width.to_string()),
        ("filters", h.filters.to_string()),
        ("hidden", h.hidden.to_string()),
        ("keep_prob", h.keep_prob.to_string()),
        ("norm_cap", h.norm_cap.map_or("none".to_string(), |s| s.to_string())),
        ("token_dim", h.token_dim.to_string()),
        ("pos_dim", h.pos_dim.to_string()),
        ("shape_dim", h.shape_dim.to_string()),
        ("init_range", h.init_range.to_string()),
        ("seq_len", h.seq_len().to_string()),
    ]
}

/// Serialize a bundle. Weights are written at 32-bit precision.
pub fn save_model<W: Write>(model: &ModelBundle, mut sink: W) -> Result<()> {
    model.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    section(&mut out, b"HYPR", |w| {
        let pairs = hyper_pairs(model);
        w.u32(pairs.len());
        for (k, v) in pairs {
            w.str(k);
            w.str(&v);
        }
    });
    section(&mut out, b"LABL", |w| {
        w.u32(model.labels.len());
        model.labels.iter().for_each(|l| w.str(l));
    });
    for (code, vocab) in [&model.vocabs.token, &model.vocabs.pos, &model.vocabs.shape]
        .into_iter()
        .enumerate()
    {
        section(&mut out, b"VOCB", |w| {
            w.u8(code as u8);
            w.u32(vocab.len());
            vocab.entries().iter().for_each(|e| w.str(e));
        });
    }
    if let Some(tagger) = &model.tagger {
        section(&mut out, b"TAGR", |w| {
            w.u32(tagger.tags().len());
            tagger.tags().iter().for_each(|t| w.str(t));
            let rows = tagger.sorted_weights();
            w.u32(rows.len());
            for (feat, row) in rows {
                w.str(feat);
                row.iter().for_each(|&v| w.f32(v));
            }
        });
    }
    for ((name, shape), data) in TENSOR_NAMES
        .iter()
        .zip(model.params.shapes())
        .zip(model.params.slices())
    {
        section(&mut out, b"TENS", |w| {
            w.str(name);
            w.u32(shape.len());
            shape.iter().for_each(|&d| w.u32(d));
            data.iter().for_each(|&v| w.f32(v));
        });
    }
    sink.write_all(&out).map_err(|e| Error::io("<model sink>", e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Container("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Container("string is not UTF-8".into()))
    }
    /// Count prefix that cannot exceed the remaining bytes at `min_item` bytes per item.
    fn count(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()?;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(Error::Container("truncated".into()));
        }
        Ok(n)
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Parse a bundle written by [`save_model`].
pub fn load_model<R: Read>(mut source: R) -> Result<ModelBundle> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<model source>", e))?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| Error::Version("file too short for a header".into()))?;
    if magic != MAGIC {
        return Err(Error::Version(format!("bad magic bytes {magic:?}")));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!("found {version}, expected {FORMAT_VERSION}")));
    }

    let mut hyper: Option<BTreeMap<String, String>> = None;
    let mut labels = None;
    let mut vocabs: [Option<Vocabulary>; 3] = [None, None, None];
    let mut tagger = None;
    let mut tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)> = BTreeMap::new();

    while !r.done() {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = usize::try_from(r.u64()?).map_err(|_| Error::Container("section too large".into()))?;
        let mut s = Reader {
            buf: r.take(len)?,
            pos: 0,
        };
        match &tag {
            b"HYPR" => {
                let n = s.count(8)?;
                let mut map = BTreeMap::new();
                for _ in 0..n {
                    let k = s.str()?;
                    map.insert(k, s.str()?);
                }
                hyper = Some(map);
            }
            b"LABL" => {
                let n = s.count(4)?;
                labels = Some((0..n).map(|_| s.str()).collect::<Result<Vec<_>>>()?);
            }
            b"VOCB" => {
                let code = s.u8()? as usize;
                let kind = *VocabKind::ALL
                    .get(code)
                    .ok_or_else(|| Error::Container(format!("unknown vocabulary kind {code}")))?;
                let n = s.count(4)?;
                let entries = (0..n).map(|_| s.str()).collect::<Result<Vec<_>>>()?;
                vocabs[code] = Some(Vocabulary::from_entries(kind, entries)?);
            }
            b"TAGR" => {
                let n = s.count(4)?;
                let tags = (0..n).map(|_| s.str()).collect::<Result<Vec<_>>>()?;
                let nf = s.count(4 + 4 * n)?;
                let mut rows = Vec::with_capacity(nf);
                for _ in 0..nf {
                    let feat = s.str()?;
                    let row = (0..n).map(|_| s.f32()).collect::<Result<Vec<_>>>()?;
                    rows.push((feat, row));
                }
                tagger = Some(TaggerModel::from_parts(tags, rows)?);
            }
            b"TENS" => {
                let name = s.str()?;
                let rank = s.count(4)?;
                let shape = (0..rank).map(|_| s.u32()).collect::<Result<Vec<_>>>()?;
                let size = shape
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d))
                    .ok_or_else(|| Error::Container("tensor too large".into()))?;
                if size.saturating_mul(4) != s.buf.len() - s.pos {
                    return Err(Error::Container(format!("tensor {name} payload length mismatch")));
                }
                let data = (0..size).map(|_| s.f32()).collect::<Result<Vec<_>>>()?;
                tensors.insert(name, (shape, data));
            }
            other => {
                return Err(Error::Container(format!("unknown section {other:?}")));
            }
        }
        if !s.done() {
            return Err(Error::Container(format!(
                "trailing bytes in section {}",
                String::from_utf8_lossy(&tag)
            )));
        }
    }

    let hyper_map = hyper.ok_or_else(|| Error::Container("missing HYPR section".into()))?;
    let labels = labels.ok_or_else(|| Error::Container("missing LABL section".into()))?;
    let [token, pos, shape] = vocabs;
    let missing = || Error::Container("missing VOCB section".into());
    let vocabs = Vocabularies {
        token: token.ok_or_else(missing)?,
        pos: pos.ok_or_else(missing)?,
        shape: shape.ok_or_else(missing)?,
    };
    let (task, hyper) = parse_hyper(&hyper_map)?;

    let mut take = |name: &str, rank: usize| -> Result<(Vec<usize>, Vec<f64>)> {
        let (shape, data) = tensors
            .remove(name)
            .ok_or_else(|| Error::Container(format!("missing tensor {name}")))?;
        if shape.len() != rank {
            return Err(Error::Shape(format!("tensor {name} has rank {}", shape.len())));
        }
        Ok((shape, data))
    };
    let mut matrix = |name: &str| -> Result<Array2<f64>> {
        let (shape, data) = take(name, 2)?;
        Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| Error::Shape(e.to_string()))
    };
    let token_m = matrix("emb.token")?;
    let pos_m = matrix("emb.pos")?;
    let shape_m = matrix("emb.shape")?;
    let conv_w = matrix("conv.w")?;
    let mlp_w = matrix("mlp.w")?;
    let out_w = matrix("out.w")?;
    let mut vector = |name: &str| -> Result<Array1<f64>> { Ok(Array1::from(take(name, 1)?.1)) };
    let params = Params {
        embeddings: EmbeddingTables {
            token: EmbeddingTable {
                kind: VocabKind::Token,
                matrix: token_m,
            },
            pos: EmbeddingTable {
                kind: VocabKind::Pos,
                matrix: pos_m,
            },
            shape: EmbeddingTable {
                kind: VocabKind::Shape,
                matrix: shape_m,
            },
        },
        conv: ConvLayer {
            weights: conv_w,
            bias: vector("conv.b")?,
        },
        mlp: MlpLayer {
            weights: mlp_w,
            bias: vector("mlp.b")?,
        },
        output: SoftmaxLayer {
            weights: out_w,
            bias: vector("out.b")?,
        },
    };
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Container(format!("unexpected tensor {extra}")));
    }

    let model = ModelBundle {
        task,
        labels,
        vocabs,
        tagger,
        hyper,
        params,
    };
    model.validate()?;
    Ok(model)
}

fn parse_hyper(map: &BTreeMap<String, String>) -> Result<(String, Hyperparams)> {
    let get = |k: &str| {
        map.get(k)
            .ok_or_else(|| Error::Container(format!("missing hyperparameter {k}")))
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Container(format!("hyperparameter {k} is not an integer")))
    };
    let real = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Container(format!("hyperparameter {k} is not a number")))
    };
    let hyper = Hyperparams {
        window: int("window")?,
        kernel_width: int("kernel_width")?,
        filters: int("filters")?,
        hidden: int("hidden")?,
        keep_prob: real("keep_prob")?,
        norm_cap: match get("norm_cap")?.as_str() {
            "none" => None,
            _ => Some(real("norm_cap")?),
        },
        token_dim: int("token_dim")?,
        pos_dim: int("pos_dim")?,
        shape_dim: int("shape_dim")?,
        init_range: real("init_range")?,
    };
    if int("seq_len")? != hyper.seq_len() {
        return Err(Error::Container("seq_len disagrees with window".into()));
    }
    Ok((get("task")?.clone(), hyper))
}

pub fn write_model_file(model: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    save_model(model, &mut bytes)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_model(bytes.as_slice())
}
