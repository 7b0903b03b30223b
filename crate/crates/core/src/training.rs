//! Minibatch AdaGrad on the regularized negative log-likelihood.

use std::fmt::Write as _;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::WindowInstance;
use crate::network::{accumulate_gradients, forward, DropoutMask, Hyperparams, Mode, ModelBundle, Params};

/// Floor for `log p` so a zero probability gives a large finite loss.
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub epochs: usize,
    /// Stop after this many epochs without dev improvement (only with a dev set).
    pub patience: usize,
    pub adagrad_eps: f64,
    /// Weight each instance by inverse class frequency.
    pub balance_classes: bool,
    pub seed: u64,
    pub window: usize,
    pub kernel_width: usize,
    pub filters: usize,
    pub hidden: usize,
    pub keep_prob: f64,
    pub norm_cap: Option<f64>,
    pub token_dim: usize,
    pub pos_dim: usize,
    pub shape_dim: usize,
    pub init_range: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = Hyperparams::default();
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 100,
            l2: 1e-4,
            epochs: 10,
            patience: 3,
            adagrad_eps: 1e-6,
            balance_classes: false,
            seed: 1,
            window: h.window,
            kernel_width: h.kernel_width,
            filters: h.filters,
            hidden: h.hidden,
            keep_prob: h.keep_prob,
            norm_cap: h.norm_cap,
            token_dim: h.token_dim,
            pos_dim: h.pos_dim,
            shape_dim: h.shape_dim,
            init_range: h.init_range,
        }
    }
}

impl TrainConfig {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            window: self.window,
            kernel_width: self.kernel_width,
            filters: self.filters,
            hidden: self.hidden,
            keep_prob: self.keep_prob,
            norm_cap: self.norm_cap,
            token_dim: self.token_dim,
            pos_dim: self.pos_dim,
            shape_dim: self.shape_dim,
            init_range: self.init_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.adagrad_eps > 0.0) {
            return bad("adagrad_eps must be positive");
        }
        self.hyperparams()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse `key = value` lines; `#` starts a comment. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "learning_rate" => self.learning_rate = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "l2" => self.l2 = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "adagrad_eps" => self.adagrad_eps = num(key, value)?,
            "balance_classes" => self.balance_classes = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "kernel_width" => self.kernel_width = num(key, value)?,
            "filters" => self.filters = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "keep_prob" => self.keep_prob = num(key, value)?,
            "norm_cap" => {
                self.norm_cap = match value {
                    "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "token_dim" => self.token_dim = num(key, value)?,
            "pos_dim" => self.pos_dim = num(key, value)?,
            "shape_dim" => self.shape_dim = num(key, value)?,
            "init_range" => self.init_range = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every key, in the format [`TrainConfig::parse`] reads.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let cap = self.norm_cap.map_or("none".to_string(), |v| v.to_string());
        for (k, v) in [
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("l2", self.l2.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("adagrad_eps", self.adagrad_eps.to_string()),
            ("balance_classes", self.balance_classes.to_string()),
            ("seed", self.seed.to_string()),
            ("window", self.window.to_string()),
            ("kernel_width", self.kernel_width.to_string()),
            ("filters", self.filters.to_string()),
            ("hidden", self.hidden.to_string()),
            ("keep_prob", self.keep_prob.to_string()),
            ("norm_cap", cap),
            ("token_dim", self.token_dim.to_string()),
            ("pos_dim", self.pos_dim.to_string()),
            ("shape_dim", self.shape_dim.to_string()),
            ("init_range", self.init_range.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// `−(1/m) Σ log p[gold] + (λ/2)‖θ‖²`.
pub fn nll_loss(probs: &[Array1<f64>], gold: &[usize], params: &Params, l2: f64) -> Result<f64> {
    if probs.len() != gold.len() || probs.is_empty() {
        return Err(Error::Shape(format!(
            "{} probability vectors for {} labels",
            probs.len(),
            gold.len()
        )));
    }
    let mut nll = 0.0;
    for (p, &y) in probs.iter().zip(gold) {
        let py = *p
            .get(y)
            .ok_or_else(|| Error::InvalidArgument(format!("label {y} outside {} classes", p.len())))?;
        nll -= py.max(LOG_FLOOR).ln();
    }
    let reg = if l2 > 0.0 { 0.5 * l2 * params.sq_norm() } else { 0.0 };
    Ok(nll / probs.len() as f64 + reg)
}

/// Per-parameter sums of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    pub accum: Params,
}

impl AdaGradState {
    pub fn new(params: &Params) -> Self {
        AdaGradState {
            accum: params.zeros_like(),
        }
    }
}

/// `G += g²; θ −= η g / (√G + ε)`.
pub fn adagrad_step(params: &mut Params, grads: &Params, state: &mut AdaGradState, lr: f64, eps: f64) -> Result<()> {
    if params.shapes() != grads.shapes() || params.shapes() != state.accum.shapes() {
        return Err(Error::Shape("parameter, gradient and accumulator shapes differ".into()));
    }
    for ((p, g), acc) in params
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(state.accum.slices_mut())
    {
        for ((p, &g), a) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
            if g != 0.0 {
                *a += g * g;
                *p -= lr * g / (a.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// Instance order for `epoch`: a pure function of `(seed, epoch)`.
pub fn epoch_permutation(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn dropout_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * epoch as u64 + 1);
    rng
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean regularized batch objective per epoch.
    pub epoch_losses: Vec<f64>,
    /// Dev score per epoch, when a dev monitor was supplied.
    pub dev_scores: Vec<f64>,
    /// Epoch (0-based) whose weights were kept.
    pub best_epoch: usize,
    /// Optimizer steps taken.
    pub steps: usize,
}

/// Called after every optimizer step (for tracing tests and diagnostics).
pub type StepHook<'a> = dyn FnMut(usize, &Params) + 'a;

/// Dev-set score after an epoch; higher is better.
pub type DevMonitor<'a> = dyn FnMut(&ModelBundle) -> Result<f64> + 'a;

/// Train `model` in place on labelled windows.
///
/// Each epoch shuffles, splits into minibatches, samples a fresh dropout mask
/// per instance, takes one AdaGrad step per batch on the mean NLL plus the L2
/// term, then rescales capped rows. With a dev monitor the best-scoring
/// epoch's weights are kept and training stops after `patience` epochs
/// without improvement. Final weights are rounded to `f32`.
pub fn train(
    model: &mut ModelBundle,
    data: &[WindowInstance],
    config: &TrainConfig,
    mut dev: Option<&mut DevMonitor<'_>>,
    mut on_step: Option<&mut StepHook<'_>>,
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training instances"));
    }
    let classes = model.classes();
    let mut counts = vec![0usize; classes];
    for inst in data {
        let y = inst
            .label
            .ok_or_else(|| Error::InvalidArgument("training instance without a label".into()))?;
        if y >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {y} outside the {classes} classes of task {}",
                model.task
            )));
        }
        if inst.seq_len() != model.hyper.seq_len() {
            return Err(Error::Shape(format!(
                "window of {} rows for a model expecting {}",
                inst.seq_len(),
                model.hyper.seq_len()
            )));
        }
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let class_weight: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if config.balance_classes && c > 0 {
                data.len() as f64 / (present * c as f64)
            } else {
                1.0
            }
        })
        .collect();

    let mut state = AdaGradState::new(&model.params);
    let mut grads = model.params.zeros_like();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Params)> = None;
    let mut stale = 0;
    let filters = model.hyper.filters;

    for epoch in 0..config.epochs {
        let order = epoch_permutation(config.seed, epoch, data.len());
        let mut rng = dropout_rng(config.seed, epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.slices_mut().into_iter().for_each(|s| s.fill(0.0));
            let m = batch.len() as f64;
            let mut nll = 0.0;
            for &i in batch {
                let inst = &data[i];
                let y = inst.label.unwrap();
                let mask = DropoutMask::sample(filters, model.hyper.keep_prob, &mut rng);
                let cache = forward(&model.params, &model.hyper, inst, Mode::Train(&mask))?;
                nll -= class_weight[y] * cache.probs[y].max(LOG_FLOOR).ln();
                accumulate_gradients(&model.params, &cache, y, class_weight[y] / m, &mut grads)?;
            }
            let mut objective = nll / m;
            if config.l2 > 0.0 {
                objective += 0.5 * config.l2 * model.params.sq_norm();
                for (g, p) in grads.slices_mut().into_iter().zip(model.params.slices()) {
                    g.iter_mut().zip(p).for_each(|(g, &p)| *g += config.l2 * p);
                }
            }
            epoch_loss += objective * m;
            adagrad_step(&mut model.params, &grads, &mut state, config.learning_rate, config.adagrad_eps)?;
            if let Some(cap) = model.hyper.norm_cap {
                model.params.apply_max_norm(cap);
            }
            report.steps += 1;
            if let Some(hook) = on_step.as_deref_mut() {
                hook(report.steps, &model.params);
            }
        }
        report.epoch_losses.push(epoch_loss / data.len() as f64);

        if let Some(monitor) = dev.as_deref_mut() {
            let score = monitor(model)?;
            report.dev_scores.push(score);
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, model.params.clone()));
                report.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        } else {
            report.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    model.params.round_to_f32();
    Ok(report)
}

/// Test-mode class prediction; ties go to the lowest class index.
pub fn predict(model: &ModelBundle, window: &WindowInstance) -> Result<(usize, Vec<f64>)> {
    let probs = model.forward(window, Mode::Test)?.probs.to_vec();
    Ok((argmax(&probs), probs))
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
