//! Temporal convolutional classifier over embedded context windows.
//!
//! `embed → conv (tanh) → global max-pool → dropout → sigmoid MLP → softmax`.
//! Forward and backward passes are written out by hand; everything runs in
//! `f64` and is stored as `f32` in model files.

mod container;

pub use container::{load_model, read_model_file, save_model, write_model_file, FORMAT_VERSION, MAGIC};

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{
    embed, EmbeddingTable, EmbeddingTables, VocabKind, Vocabularies, WindowInstance, PAD,
};
use crate::textproc::TaggerModel;

/// Architecture and regularization settings stored with every model.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Context tokens on each side of the centre token.
    pub window: usize,
    pub kernel_width: usize,
    pub filters: usize,
    pub hidden: usize,
    /// Dropout keep-probability on the pooled layer.
    pub keep_prob: f64,
    /// L2 cap on MLP and softmax weight rows; `None` disables it.
    pub norm_cap: Option<f64>,
    pub token_dim: usize,
    pub pos_dim: usize,
    pub shape_dim: usize,
    pub init_range: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            window: 4,
            kernel_width: 2,
            filters: 300,
            hidden: 50,
            keep_prob: 0.5,
            norm_cap: Some(3.0),
            token_dim: crate::features::DEFAULT_TOKEN_DIM,
            pos_dim: crate::features::DEFAULT_POS_DIM,
            shape_dim: crate::features::DEFAULT_SHAPE_DIM,
            init_range: crate::features::DEFAULT_INIT_RANGE,
        }
    }
}

impl Hyperparams {
    /// Rows per window, `2w + 1`.
    pub fn seq_len(&self) -> usize {
        2 * self.window + 1
    }

    pub fn embed_dim(&self) -> usize {
        self.token_dim + self.pos_dim + self.shape_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.kernel_width == 0 || self.kernel_width > self.seq_len() {
            return bad("kernel width must be in 1..=2w+1");
        }
        if self.filters == 0 || self.hidden == 0 {
            return bad("filter and hidden counts must be positive");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep probability must be in (0, 1]");
        }
        if matches!(self.norm_cap, Some(s) if !(s > 0.0)) {
            return bad("norm cap must be positive");
        }
        if self.token_dim == 0 || self.pos_dim == 0 || self.shape_dim == 0 {
            return bad("embedding widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// One filter per row over `kernel_width` concatenated word vectors.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Every trainable tensor. Also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embeddings: EmbeddingTables,
    pub conv: ConvLayer,
    pub mlp: MlpLayer,
    pub output: SoftmaxLayer,
}

pub const TENSOR_NAMES: [&str; 9] = [
    "emb.token", "emb.pos", "emb.shape", "conv.w", "conv.b", "mlp.w", "mlp.b", "out.w", "out.b",
];

impl Params {
    /// Uniform `[-r, r]` initialization of every tensor, PAD rows zero.
    pub fn init(hyper: &Hyperparams, vocab_sizes: [usize; 3], classes: usize, rng: &mut impl Rng) -> Self {
        let r = hyper.init_range;
        let mut uniform = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-r..=r))
        };
        let mut tables = [VocabKind::Token, VocabKind::Pos, VocabKind::Shape]
            .into_iter()
            .zip(vocab_sizes)
            .zip([hyper.token_dim, hyper.pos_dim, hyper.shape_dim])
            .map(|((kind, rows), dim)| {
                let mut t = EmbeddingTable {
                    kind,
                    matrix: uniform(rows, dim),
                };
                if rows > 0 {
                    t.matrix.row_mut(PAD as usize).fill(0.0);
                }
                t
            });
        let embeddings = EmbeddingTables {
            token: tables.next().unwrap(),
            pos: tables.next().unwrap(),
            shape: tables.next().unwrap(),
        };
        let conv_in = hyper.kernel_width * hyper.embed_dim();
        let conv = ConvLayer {
            weights: uniform(hyper.filters, conv_in),
            bias: uniform(1, hyper.filters).remove_axis(Axis(0)),
        };
        let mlp = MlpLayer {
            weights: uniform(hyper.hidden, hyper.filters),
            bias: uniform(1, hyper.hidden).remove_axis(Axis(0)),
        };
        let output = SoftmaxLayer {
            weights: uniform(classes, hyper.hidden),
            bias: uniform(1, classes).remove_axis(Axis(0)),
        };
        Params {
            embeddings,
            conv,
            mlp,
            output,
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.slices_mut().into_iter().for_each(|s| s.fill(0.0));
        z
    }

    /// Flat views in [`TENSOR_NAMES`] order.
    pub fn slices(&self) -> [&[f64]; 9] {
        let e = &self.embeddings;
        [
            e.token.matrix.as_slice().unwrap(),
            e.pos.matrix.as_slice().unwrap(),
            e.shape.matrix.as_slice().unwrap(),
            self.conv.weights.as_slice().unwrap(),
            self.conv.bias.as_slice().unwrap(),
            self.mlp.weights.as_slice().unwrap(),
            self.mlp.bias.as_slice().unwrap(),
            self.output.weights.as_slice().unwrap(),
            self.output.bias.as_slice().unwrap(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 9] {
        let e = &mut self.embeddings;
        [
            e.token.matrix.as_slice_mut().unwrap(),
            e.pos.matrix.as_slice_mut().unwrap(),
            e.shape.matrix.as_slice_mut().unwrap(),
            self.conv.weights.as_slice_mut().unwrap(),
            self.conv.bias.as_slice_mut().unwrap(),
            self.mlp.weights.as_slice_mut().unwrap(),
            self.mlp.bias.as_slice_mut().unwrap(),
            self.output.weights.as_slice_mut().unwrap(),
            self.output.bias.as_slice_mut().unwrap(),
        ]
    }

    /// Tensor shapes in [`TENSOR_NAMES`] order.
    pub fn shapes(&self) -> [Vec<usize>; 9] {
        let e = &self.embeddings;
        [
            e.token.matrix.shape().to_vec(),
            e.pos.matrix.shape().to_vec(),
            e.shape.matrix.shape().to_vec(),
            self.conv.weights.shape().to_vec(),
            self.conv.bias.shape().to_vec(),
            self.mlp.weights.shape().to_vec(),
            self.mlp.bias.shape().to_vec(),
            self.output.weights.shape().to_vec(),
            self.output.bias.shape().to_vec(),
        ]
    }

    /// ‖θ‖² over every tensor (PAD rows are zero and contribute nothing).
    pub fn sq_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|x| x * x).sum()
    }

    /// Round every value through `f32`, the precision of model files.
    pub fn round_to_f32(&mut self) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    /// Rescale each MLP and softmax weight row to norm at most `cap`.
    pub fn apply_max_norm(&mut self, cap: f64) {
        for w in [&mut self.mlp.weights, &mut self.output.weights] {
            for row in w.rows_mut() {
                renorm(row, cap);
            }
        }
    }

    fn check_shapes(&self, hyper: &Hyperparams, classes: usize) -> Result<()> {
        let d = self.embeddings.dim();
        let expect = [
            (self.embeddings.token.dim(), hyper.token_dim, "token width"),
            (self.embeddings.pos.dim(), hyper.pos_dim, "pos width"),
            (self.embeddings.shape.dim(), hyper.shape_dim, "shape width"),
            (self.conv.weights.nrows(), hyper.filters, "conv filters"),
            (self.conv.weights.ncols(), hyper.kernel_width * d, "conv input"),
            (self.conv.bias.len(), hyper.filters, "conv bias"),
            (self.mlp.weights.nrows(), hyper.hidden, "mlp rows"),
            (self.mlp.weights.ncols(), hyper.filters, "mlp input"),
            (self.mlp.bias.len(), hyper.hidden, "mlp bias"),
            (self.output.weights.nrows(), classes, "softmax rows"),
            (self.output.weights.ncols(), hyper.hidden, "softmax input"),
            (self.output.bias.len(), classes, "softmax bias"),
        ];
        for (got, want, what) in expect {
            if got != want {
                return Err(Error::Shape(format!("{what}: {got} != {want}")));
            }
        }
        Ok(())
    }
}

/// Scale `w` down to norm `cap` if it exceeds it.
pub fn renorm(mut w: ArrayViewMut1<'_, f64>, cap: f64) {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > cap {
        let k = cap / norm;
        w.iter_mut().for_each(|x| *x *= k);
    }
}

/// Bernoulli keep-mask over the pooled units (1 = keep).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<f64>,
}

impl DropoutMask {
    pub fn sample(units: usize, keep_prob: f64, rng: &mut impl Rng) -> Self {
        DropoutMask {
            keep: (0..units)
                .map(|_| if rng.random_bool(keep_prob) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn all_keep(units: usize) -> Self {
        DropoutMask {
            keep: vec![1.0; units],
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        DropoutMask {
            keep: bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.keep
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Train(&'a DropoutMask),
    /// Downstream weights scaled by the keep-probability.
    Test,
}

/// Concatenate each run of `kernel_width` consecutive rows: `(n-h+1) × (h·d)`.
pub fn unfold(embedded: ArrayView2<'_, f64>, kernel_width: usize) -> Result<Array2<f64>> {
    let (n, d) = embedded.dim();
    if kernel_width == 0 || n < kernel_width {
        return Err(Error::Shape(format!(
            "sequence of {n} rows is shorter than kernel width {kernel_width}"
        )));
    }
    let mut out = Array2::zeros((n - kernel_width + 1, kernel_width * d));
    for i in 0..n - kernel_width + 1 {
        for k in 0..kernel_width {
            out.slice_mut(s![i, k * d..(k + 1) * d])
                .assign(&embedded.row(i + k));
        }
    }
    Ok(out)
}

/// Feature maps `F × (n-h+1)`: `tanh(filter · concat(rows i..i+h) + bias)`.
pub fn conv_forward(embedded: ArrayView2<'_, f64>, conv: &ConvLayer) -> Result<Array2<f64>> {
    let d = embedded.ncols();
    if d == 0 || conv.weights.ncols() % d != 0 {
        return Err(Error::Shape(format!(
            "filter width {} is not a multiple of row width {d}",
            conv.weights.ncols()
        )));
    }
    let h = conv.weights.ncols() / d;
    let unfolded = unfold(embedded, h)?;
    Ok(conv_unfolded(&unfolded, conv))
}

fn conv_unfolded(unfolded: &Array2<f64>, conv: &ConvLayer) -> Array2<f64> {
    let mut maps = conv.weights.dot(&unfolded.t());
    for (mut row, &b) in maps.rows_mut().into_iter().zip(&conv.bias) {
        row.mapv_inplace(|x| (x + b).tanh());
    }
    maps
}

/// Global max over each feature map; ties go to the earliest position.
pub fn max_pool(maps: &Array2<f64>) -> Result<(Array1<f64>, Vec<usize>)> {
    if maps.ncols() == 0 {
        return Err(Error::Shape("empty feature map".into()));
    }
    let mut values = Array1::zeros(maps.nrows());
    let mut argmax = Vec::with_capacity(maps.nrows());
    for (f, row) in maps.rows().into_iter().enumerate() {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        values[f] = row[best];
        argmax.push(best);
    }
    Ok((values, argmax))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exp = logits.mapv(|x| (x - max).exp());
    let total = exp.sum();
    exp / total
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub rows: Vec<[u32; 3]>,
    pub unfolded: Array2<f64>,
    pub maps: Array2<f64>,
    pub pooled: Array1<f64>,
    pub argmax: Vec<usize>,
    /// `None` in test mode.
    pub mask: Option<Vec<f64>>,
    pub dropped: Array1<f64>,
    pub hidden: Array1<f64>,
    pub probs: Array1<f64>,
}

pub fn forward(
    params: &Params,
    hyper: &Hyperparams,
    window: &WindowInstance,
    mode: Mode<'_>,
) -> Result<ForwardCache> {
    let embedded = embed(window, &params.embeddings)?;
    let unfolded = unfold(embedded.view(), hyper.kernel_width)?;
    if params.conv.weights.ncols() != unfolded.ncols() {
        return Err(Error::Shape(format!(
            "conv filters take {} inputs, window provides {}",
            params.conv.weights.ncols(),
            unfolded.ncols()
        )));
    }
    let maps = conv_unfolded(&unfolded, &params.conv);
    let (pooled, argmax) = max_pool(&maps)?;
    let (dropped, mask) = match mode {
        Mode::Train(mask) => {
            if mask.len() != pooled.len() {
                return Err(Error::Shape(format!(
                    "dropout mask of {} for {} units",
                    mask.len(),
                    pooled.len()
                )));
            }
            let m = Array1::from(mask.keep.clone());
            (&pooled * &m, Some(mask.keep.clone()))
        }
        Mode::Test => (pooled.mapv(|z| hyper.keep_prob * z), None),
    };
    let hidden = (params.mlp.weights.dot(&dropped) + &params.mlp.bias).mapv(sigmoid);
    let logits = params.output.weights.dot(&hidden) + &params.output.bias;
    let probs = softmax(&logits);
    Ok(ForwardCache {
        rows: window.rows.clone(),
        unfolded,
        maps,
        pooled,
        argmax,
        mask,
        dropped,
        hidden,
        probs,
    })
}

/// Add `scale · ∂(−log p[gold])/∂θ` into `grads`.
pub fn accumulate_gradients(
    params: &Params,
    cache: &ForwardCache,
    gold: usize,
    scale: f64,
    grads: &mut Params,
) -> Result<()> {
    let mask = cache
        .mask
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("backward needs a training-mode forward cache".into()))?;
    let classes = cache.probs.len();
    if gold >= classes {
        return Err(Error::InvalidArgument(format!("label {gold} outside {classes} classes")));
    }

    let mut d_logits = cache.probs.clone();
    d_logits[gold] -= 1.0;
    d_logits *= scale;

    // softmax layer
    for (c, &g) in d_logits.iter().enumerate() {
        grads.output.weights.row_mut(c).scaled_add(g, &cache.hidden);
    }
    grads.output.bias += &d_logits;

    // sigmoid MLP
    let d_hidden = params.output.weights.t().dot(&d_logits);
    let d_pre = &d_hidden * &cache.hidden.mapv(|h| h * (1.0 - h));
    for (j, &g) in d_pre.iter().enumerate() {
        grads.mlp.weights.row_mut(j).scaled_add(g, &cache.dropped);
    }
    grads.mlp.bias += &d_pre;

    // dropout, pooling, tanh; only each filter's argmax position gets gradient
    let d_dropped = params.mlp.weights.t().dot(&d_pre);
    let d = params.embeddings.dim();
    let h = params.conv.weights.ncols() / d;
    let mut d_unfolded = Array2::<f64>::zeros(cache.unfolded.dim());
    for f in 0..params.conv.weights.nrows() {
        let g_pool = d_dropped[f] * mask[f];
        if g_pool == 0.0 {
            continue;
        }
        let pos = cache.argmax[f];
        let a = cache.maps[[f, pos]];
        let g = g_pool * (1.0 - a * a);
        grads.conv.weights.row_mut(f).scaled_add(g, &cache.unfolded.row(pos));
        grads.conv.bias[f] += g;
        d_unfolded.row_mut(pos).scaled_add(g, &params.conv.weights.row(f));
    }

    // scatter back to the window rows, then into the lookup tables
    let widths = params.embeddings.tables().map(EmbeddingTable::dim);
    for (i, du) in d_unfolded.rows().into_iter().enumerate() {
        if du.iter().all(|&x| x == 0.0) {
            continue;
        }
        for k in 0..h {
            let triple = cache.rows[i + k];
            let mut col = k * d;
            for (t, table) in grads.embeddings.tables_mut().into_iter().enumerate() {
                let idx = triple[t];
                if idx != PAD {
                    table
                        .matrix
                        .row_mut(idx as usize)
                        .scaled_add(1.0, &du.slice(s![col..col + widths[t]]));
                }
                col += widths[t];
            }
        }
    }
    Ok(())
}

/// Gradient of `−log p[gold]` for one training-mode forward pass.
pub fn backward(params: &Params, cache: &ForwardCache, gold: usize) -> Result<Params> {
    let mut grads = params.zeros_like();
    accumulate_gradients(params, cache, gold, 1.0, &mut grads)?;
    Ok(grads)
}

/// A trained (or freshly initialized) classifier and everything needed to
/// apply it to raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    /// Task name, e.g. `SPAN` or `POLARITY`.
    pub task: String,
    /// Class labels in output-index order.
    pub labels: Vec<String>,
    pub vocabs: Vocabularies,
    pub tagger: Option<TaggerModel>,
    pub hyper: Hyperparams,
    pub params: Params,
}

impl ModelBundle {
    pub fn new(
        task: impl Into<String>,
        labels: Vec<String>,
        vocabs: Vocabularies,
        tagger: Option<TaggerModel>,
        hyper: Hyperparams,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if labels.len() < 2 {
            return Err(Error::InvalidArgument("a classifier needs at least two labels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&hyper, vocabs.sizes(), labels.len(), &mut rng);
        Ok(ModelBundle {
            task: task.into(),
            labels,
            vocabs,
            tagger,
            hyper,
            params,
        })
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Layer shapes agree with the hyperparameters, vocabularies and labels.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.params.check_shapes(&self.hyper, self.labels.len())?;
        let rows = [
            self.params.embeddings.token.rows(),
            self.params.embeddings.pos.rows(),
            self.params.embeddings.shape.rows(),
        ];
        if rows != self.vocabs.sizes() {
            return Err(Error::Shape(format!(
                "embedding rows {rows:?} vs vocabulary sizes {:?}",
                self.vocabs.sizes()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, window: &WindowInstance, mode: Mode<'_>) -> Result<ForwardCache> {
        forward(&self.params, &self.hyper, window, mode)
    }
}
