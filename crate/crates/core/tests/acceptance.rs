//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use clinex_core::corpus::{parse_annotations, write_annotations, AnnotationSet, Attribute, Degree, DocTimeRel,
    Document, EventAnnotation, EventType, Modality, Polarity};
use clinex_core::eval::{constant_baseline, evaluate, f1_score, prf, run_memorize, train_memorize};
use clinex_core::features::{VocabKind, Vocabularies, Vocabulary, WindowInstance};
use clinex_core::network::{backward, conv_forward, load_model, save_model, ConvLayer, DropoutMask, Hyperparams,
    ModelBundle, Mode};
use clinex_core::pipeline::{extract, prepare_documents, train_task, ExtractMode, ModelSet, Task};
use clinex_core::synthetic::{generate, GeneratorSpec};
use clinex_core::textproc::{tokenize, train_tagger};
use clinex_core::training::{train, TrainConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("{what} took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
    }
}

fn vocabs(rng: &mut impl Rng) -> Vocabularies {
    let mut mk = |kind| {
        let mut v = Vocabulary::new(kind);
        for i in 0..rng.random_range(1..6) {
            v.add(&format!("w{i}"));
        }
        v
    };
    Vocabularies {
        token: mk(VocabKind::Token),
        pos: mk(VocabKind::Pos),
        shape: mk(VocabKind::Shape),
    }
}

/// A small random model (d <= 8, F <= 4, w <= 2, C <= 3) and a labelled window over it.
fn random_model(seed: u64) -> (ModelBundle, WindowInstance, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocabs = vocabs(&mut rng);
    let sizes = vocabs.sizes();
    let window = rng.random_range(1..=2);
    let hyper = Hyperparams {
        window,
        kernel_width: 2,
        filters: rng.random_range(1..=4),
        hidden: rng.random_range(1..=5),
        keep_prob: 0.5,
        norm_cap: Some(3.0),
        token_dim: rng.random_range(1..=4),
        pos_dim: rng.random_range(1..=2),
        shape_dim: rng.random_range(1..=2),
        init_range: 0.5,
    };
    let classes = rng.random_range(2..=3);
    let labels = (0..classes).map(|c| format!("c{c}")).collect();
    let model = ModelBundle::new("T", labels, vocabs, None, hyper, seed).unwrap();
    let rows = (0..2 * window + 1)
        .map(|_| std::array::from_fn(|k| rng.random_range(0..sizes[k] as u32)))
        .collect();
    let gold = rng.random_range(0..classes);
    let inst = WindowInstance {
        center: window,
        width: window,
        rows,
        label: Some(gold),
    };
    (model, inst, gold)
}

fn nll(model: &ModelBundle, w: &WindowInstance, mask: &DropoutMask, gold: usize) -> f64 {
    -model.forward(w, Mode::Train(mask)).unwrap().probs[gold].ln()
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for seed in 0..20 {
        let (model, w, gold) = random_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mask = DropoutMask::sample(model.hyper.filters, 0.7, &mut rng);
        let cache = model.forward(&w, Mode::Train(&mask)).unwrap();
        let grads = backward(&model.params, &cache, gold).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        let mut probe = model.clone();
        let shapes = model.params.shapes();
        for t in 0..9 {
            // row 0 of each lookup table is PAD, which is frozen
            let skip = if t < 3 { shapes[t][1] } else { 0 };
            for i in skip..analytic[t].len() {
                let orig = probe.params.slices()[t][i];
                probe.params.slices_mut()[t][i] = orig + 1e-5;
                let up = nll(&probe, &w, &mask, gold);
                probe.params.slices_mut()[t][i] = orig - 1e-5;
                let down = nll(&probe, &w, &mask, gold);
                probe.params.slices_mut()[t][i] = orig;
                let numeric = (up - down) / 2e-5;
                let a = analytic[t][i];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(10), "gradient check")?;
    check(
        worst < 1e-4,
        format!("20 models, {checked} parameters, worst relative error {worst:.2e}"),
        format!("worst relative error {worst:.2e} >= 1e-4"),
    )
}

fn convolution_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let d = rng.random_range(1..10);
        let h = rng.random_range(1..=n.min(4));
        let f = rng.random_range(1..6);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let conv = ConvLayer {
            weights: Array2::from_shape_fn((f, h * d), |_| rng.random_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(f, |_| rng.random_range(-1.0..1.0)),
        };
        let maps = conv_forward(x.view(), &conv).map_err(|e| e.to_string())?;
        if maps.dim() != (f, n - h + 1) {
            return Err(format!("map shape {:?} for n={n}, h={h}, F={f}", maps.dim()));
        }
        for k in 0..f {
            for i in 0..=n - h {
                let mut s = conv.bias[k];
                for j in 0..h {
                    for c in 0..d {
                        s += conv.weights[[k, j * d + c]] * x[[i + j, c]];
                    }
                }
                worst = worst.max((s.tanh() - maps[[k, i]]).abs());
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(1), "convolution oracle")?;
    check(
        worst <= 1e-12,
        format!("100 instances, max deviation {worst:.1e}"),
        format!("max deviation {worst:.1e} > 1e-12"),
    )
}

/// Published P/R/F1 triples: five systems by five task groups, then DocTimeRel.
const REFERENCE_ROWS: [(&str, [f64; 15]); 5] = [
    ("Memorize", [0.878, 0.834, 0.855, 0.810, 0.770, 0.789, 0.874, 0.831, 0.852, 0.812, 0.772, 0.792, 0.855, 0.813, 0.833]),
    ("RUN4", [0.908, 0.842, 0.874, 0.842, 0.780, 0.810, 0.904, 0.838, 0.869, 0.876, 0.812, 0.842, 0.877, 0.813, 0.844]),
    ("RUN5", [0.900, 0.850, 0.874, 0.837, 0.790, 0.813, 0.896, 0.845, 0.870, 0.861, 0.813, 0.836, 0.869, 0.820, 0.844]),
    ("Median", [0.887, 0.846, 0.874, 0.830, 0.780, 0.810, 0.882, 0.838, 0.869, 0.868, 0.813, 0.839, 0.854, 0.813, 0.844]),
    ("Max", [0.915, 0.891, 0.903, 0.866, 0.843, 0.855, 0.911, 0.887, 0.899, 0.900, 0.875, 0.887, 0.894, 0.870, 0.882]),
];
const DOCTIMEREL_ROWS: [(&str, [f64; 3]); 2] = [("RUN5", [0.788, 0.788, 0.788]), ("RUN6", [0.786, 0.786, 0.786])];
const GROUPS: [&str; 5] = ["span", "modality", "degree", "polarity", "type"];

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..1000 {
        let mut draw = || -> HashSet<u32> { (0..rng.random_range(0..30)).map(|_| rng.random_range(0..40)).collect() };
        let (s, h) = (draw(), draw());
        let r = prf("x", &s, &h);
        let inter = s.iter().filter(|x| h.contains(x)).count();
        let p = if s.is_empty() { 0.0 } else { inter as f64 / s.len() as f64 };
        let rc = if h.is_empty() { 0.0 } else { inter as f64 / h.len() as f64 };
        let f = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
        if r.overlap != inter || r.precision != p || r.recall != rc || (r.f1 - f).abs() > 1e-15 {
            return Err(format!("trial {trial}: {r:?} vs brute force P={p} R={rc} F1={f}"));
        }
    }
    let mut mismatches = Vec::new();
    let mut cells = 0;
    for (name, row) in REFERENCE_ROWS {
        for (g, group) in GROUPS.iter().enumerate() {
            let (p, r, f) = (row[3 * g], row[3 * g + 1], row[3 * g + 2]);
            cells += 1;
            let got = f1_score(p, r);
            if (got - f).abs() > 0.001 {
                mismatches.push(format!("{name}/{group}: {p}/{r} -> {got:.4}, printed {f}"));
            }
        }
    }
    for (name, [p, r, f]) in DOCTIMEREL_ROWS {
        cells += 1;
        let got = f1_score(p, r);
        if (got - f).abs() > 0.001 {
            mismatches.push(format!("{name}/doctimerel: {p}/{r} -> {got:.4}, printed {f}"));
        }
    }
    within(start.elapsed(), Duration::from_secs(1), "metric oracle")?;
    check(
        mismatches.is_empty(),
        format!("1000 random pairs match brute force; {cells} published F1 cells recomputed within 0.001"),
        format!(
            "prf matches brute force on 1000 pairs, but {} of {cells} published F1 cells disagree with their P/R: {}",
            mismatches.len(),
            mismatches.join("; ")
        ),
    )
}

fn dropout_contract() -> Outcome {
    let (mut model, w, _) = random_model(77);
    model.hyper.keep_prob = 1.0;
    let f = model.hyper.filters;
    let train = model.forward(&w, Mode::Train(&DropoutMask::all_keep(f))).unwrap();
    let test = model.forward(&w, Mode::Test).unwrap();
    let same = |a: &Array1<f64>, b: &Array1<f64>| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    if !(same(&train.dropped, &test.dropped) && same(&train.hidden, &test.hidden) && same(&train.probs, &test.probs)) {
        return Err("TEST with p = 1 differs from TRAIN with the all-keep mask".into());
    }

    let p = 0.5;
    let n = 10_000;
    let z: Vec<f64> = (0..16).map(|i| ((i as f64) * 0.37).sin()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sum = vec![0.0; z.len()];
    for _ in 0..n {
        let mask = DropoutMask::sample(z.len(), p, &mut rng);
        for ((s, &zi), &r) in sum.iter_mut().zip(&z).zip(mask.values()) {
            *s += zi * r;
        }
    }
    let mut worst: f64 = 0.0;
    for (s, &zi) in sum.iter().zip(&z) {
        let se = zi.abs() * (p * (1.0 - p) / n as f64).sqrt();
        let dev = (s / n as f64 - p * zi).abs();
        if se > 0.0 {
            worst = worst.max(dev / se);
        } else if dev != 0.0 {
            return Err(format!("component with z = 0 has mean {dev}"));
        }
    }
    check(
        worst <= 3.0,
        format!("p = 1 bitwise identical; Monte-Carlo mean within {worst:.2} standard errors over 10^4 masks"),
        format!("Monte-Carlo mean deviates by {worst:.2} standard errors"),
    )
}

fn norm_constraint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut vocabs = Vocabularies {
        token: Vocabulary::new(VocabKind::Token),
        pos: Vocabulary::new(VocabKind::Pos),
        shape: Vocabulary::new(VocabKind::Shape),
    };
    for i in 0..20 {
        vocabs.token.add(&format!("t{i}"));
    }
    vocabs.pos.add("NN");
    vocabs.shape.add("x");
    let hyper = Hyperparams {
        window: 2,
        kernel_width: 2,
        filters: 20,
        hidden: 10,
        keep_prob: 0.5,
        norm_cap: Some(3.0),
        token_dim: 6,
        pos_dim: 2,
        shape_dim: 2,
        init_range: 1.0,
    };
    let mut model = ModelBundle::new("T", vec!["a".into(), "b".into(), "c".into()], vocabs, None, hyper, 5).unwrap();
    let data: Vec<WindowInstance> = (0..100)
        .map(|_| {
            let rows: Vec<[u32; 3]> = (0..5).map(|_| [rng.random_range(2..22), 2, 2]).collect();
            let label = (rows[2][0] % 3) as usize;
            WindowInstance {
                center: 2,
                width: 2,
                rows,
                label: Some(label),
            }
        })
        .collect();
    let config = TrainConfig {
        batch_size: 10,
        epochs: 10,
        learning_rate: 0.5,
        ..TrainConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    let mut hook = |_: usize, params: &clinex_core::network::Params| {
        steps += 1;
        for w in [&params.mlp.weights, &params.output.weights] {
            for row in w.rows() {
                worst = worst.max(row.dot(&row).sqrt());
            }
        }
    };
    train(&mut model, &data, &config, None, Some(&mut hook)).map_err(|e| e.to_string())?;
    if steps != 100 {
        return Err(format!("trace had {steps} steps, expected 100"));
    }
    check(
        worst <= 3.0 + 1e-6 && worst > 2.9,
        format!("100 steps, largest constrained row norm {worst:.6} (cap active)"),
        format!("largest constrained row norm {worst:.6}, expected at most 3 + 1e-6 and the cap to be reached"),
    )
}

fn end_to_end(phase2: &mut Option<Outcome>) -> Outcome {
    let start = Instant::now();
    let corpus = generate(&GeneratorSpec::default_clinical(1)).map_err(|e| e.to_string())?;
    let events: usize = corpus.splits().iter().flat_map(|(_, d)| d.iter()).map(|(_, s)| s.len()).sum();
    if events < 2000 {
        return Err(format!("synthetic corpus has only {events} events"));
    }
    let tagger = train_tagger(&corpus.tagged, 5, 1).map_err(|e| e.to_string())?;
    let train_docs = prepare_documents(&corpus.train, &tagger).map_err(|e| e.to_string())?;
    let dev_docs = prepare_documents(&corpus.dev, &tagger).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 40,
        keep_prob: 0.8,
        patience: 5,
        ..TrainConfig::default()
    };
    let mut models = ModelSet::default();
    for task in Task::ALL {
        let (model, _) =
            train_task(task, &train_docs, &tagger, &config, None, Some(&dev_docs)).map_err(|e| e.to_string())?;
        models.insert(model).map_err(|e| e.to_string())?;
    }
    let docs: Vec<Document> = corpus.test.iter().map(|(d, _)| d.clone()).collect();
    let gold: Vec<AnnotationSet> = corpus.test.iter().map(|(_, g)| g.clone()).collect();
    let system: Vec<AnnotationSet> = docs
        .iter()
        .map(|d| extract(&models, d, ExtractMode::SystemSpans))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let memorize = train_memorize(&corpus.train).map_err(|e| e.to_string())?;
    let baseline = run_memorize(&memorize, &docs).map_err(|e| e.to_string())?;

    // phase 2: DocTimeRel on gold spans against the majority class
    *phase2 = Some((|| {
        let with_gold: Vec<AnnotationSet> = corpus
            .test
            .iter()
            .map(|(d, g)| extract(&models, d, ExtractMode::GoldSpans(g)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let cnn = evaluate(&with_gold, &gold, Task::DocTimeRel).map_err(|e| e.to_string())?;
        let majority = memorize.majority(Task::DocTimeRel).ok_or("no DocTimeRel in training")?.to_string();
        let constant: Vec<AnnotationSet> = gold
            .iter()
            .map(|g| constant_baseline(g, Task::DocTimeRel, &majority))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let base = evaluate(&constant, &gold, Task::DocTimeRel).map_err(|e| e.to_string())?;
        check(
            cnn.f1 > base.f1,
            format!("DocTimeRel F1 {:.3} vs majority class ({majority}) {:.3}", cnn.f1, base.f1),
            format!("DocTimeRel F1 {:.3} does not exceed majority class ({majority}) {:.3}", cnn.f1, base.f1),
        )
    })());

    let mut parts = Vec::new();
    let mut failures = Vec::new();
    let span = evaluate(&system, &gold, Task::Span).map_err(|e| e.to_string())?;
    if span.f1 < 0.90 {
        failures.push(format!("span F1 {:.3} < 0.90", span.f1));
    }
    for task in [Task::Span, Task::Modality, Task::Degree, Task::Polarity, Task::Type] {
        let cnn = evaluate(&system, &gold, task).map_err(|e| e.to_string())?;
        let base = evaluate(&baseline, &gold, task).map_err(|e| e.to_string())?;
        parts.push(format!("{} {:.3}/{:.3}", task.as_str().to_lowercase(), cnn.f1, base.f1));
        if cnn.f1 <= base.f1 {
            failures.push(format!("{task} F1 {:.3} does not exceed memorize {:.3}", cnn.f1, base.f1));
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(600), "end-to-end run")?;
    let summary = format!(
        "{events} events; test F1 CNN/memorize: {} ({:.0}s)",
        parts.join(", "),
        elapsed.as_secs_f64()
    );
    check(failures.is_empty(), summary.clone(), format!("{}; {summary}", failures.join("; ")))
}

fn random_annotations(rng: &mut ChaCha8Rng, id: &str) -> (Document, AnnotationSet) {
    let alphabet: Vec<char> = "abc XY<>&\"' 12\n.é漢".chars().collect();
    let len = rng.random_range(1..80);
    let text: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
    let doc = Document::new(id, text);
    let pick = |rng: &mut ChaCha8Rng, all: &[&str]| all[rng.random_range(0..all.len())].to_string();
    let mut events = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..rng.random_range(0..6) {
        let b = rng.random_range(0..doc.len());
        let e = rng.random_range(b + 1..=doc.len());
        if !seen.insert((b, e)) {
            continue;
        }
        let mut ev = EventAnnotation::with_span(b, e);
        ev.modality = Modality::parse(&pick(rng, &names::<Modality>())).unwrap();
        ev.degree = Degree::parse(&pick(rng, &names::<Degree>())).unwrap();
        ev.polarity = Polarity::parse(&pick(rng, &names::<Polarity>())).unwrap();
        ev.event_type = EventType::parse(&pick(rng, &names::<EventType>())).unwrap();
        if rng.random_bool(0.7) {
            ev.doctimerel = Some(DocTimeRel::parse(&pick(rng, &names::<DocTimeRel>())).unwrap());
        }
        events.push(ev);
    }
    let set = AnnotationSet::new(id, events).unwrap();
    (doc, set)
}

fn names<A: Attribute>() -> Vec<&'static str> {
    A::ALL.iter().map(|a| a.as_str()).collect()
}

fn model_bytes(model: &ModelBundle) -> Vec<u8> {
    let mut buf = Vec::new();
    save_model(model, &mut buf).unwrap();
    buf
}

fn determinism_and_round_trips() -> Outcome {
    // identical seed and config give identical model files
    let corpus = generate(&GeneratorSpec {
        train_docs: 3,
        dev_docs: 1,
        test_docs: 1,
        ..GeneratorSpec::default_clinical(8)
    })
    .map_err(|e| e.to_string())?;
    let tagger = train_tagger(&corpus.tagged, 3, 8).map_err(|e| e.to_string())?;
    let docs = prepare_documents(&corpus.train, &tagger).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 2,
        filters: 6,
        hidden: 4,
        token_dim: 6,
        pos_dim: 3,
        shape_dim: 3,
        ..TrainConfig::default()
    };
    let run = || -> Result<Vec<u8>, String> {
        let (m, _) = train_task(Task::Span, &docs, &tagger, &config, None, None).map_err(|e| e.to_string())?;
        Ok(model_bytes(&m))
    };
    if run()? != run()? {
        return Err("two identical training runs produced different model files".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        let (doc, set) = random_annotations(&mut rng, &format!("doc{i}"));
        let xml = write_annotations(&set, &doc).map_err(|e| e.to_string())?;
        let back = parse_annotations(&xml, &doc).map_err(|e| format!("fixture {i}: {e}"))?;
        if back != set {
            return Err(format!("standoff fixture {i} did not round-trip"));
        }

        let (mut model, _, _) = random_model(500 + i);
        model.params.round_to_f32();
        let bytes = model_bytes(&model);
        let loaded = load_model(&bytes[..]).map_err(|e| format!("model fixture {i}: {e}"))?;
        if loaded.params != model.params || loaded.hyper != model.hyper || model_bytes(&loaded) != bytes {
            return Err(format!("model fixture {i} did not round-trip"));
        }
    }
    Ok("identical runs give identical model files; 100 standoff and 100 model fixtures round-trip".into())
}

fn expected_shape(c: char) -> char {
    match c {
        'a'..='z' => 'x',
        'A'..='Z' => 'X',
        '0'..='9' => 'd',
        other => other,
    }
}

fn tokenizer_conformance() -> Outcome {
    let alphabet: Vec<char> = "aZq09_$.,;:-/()' \t\nÄé漢🙂".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut tokens = 0usize;
    for case in 0..100_000 {
        let len = rng.random_range(0..24);
        let text: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let doc = Document::new("p", text.clone());
        let seq = tokenize(&doc);
        let chars: Vec<char> = text.chars().collect();
        let mut covered = vec![false; chars.len()];
        let mut prev_end = 0;
        for t in seq.tokens() {
            let surface: String = chars[t.begin..t.end].iter().collect();
            let shape: String = t.surface.chars().map(expected_shape).collect();
            if surface != t.surface || t.begin < prev_end || t.begin >= t.end || t.shape != shape {
                return Err(format!("case {case} {text:?}: token {t:?}"));
            }
            covered[t.begin..t.end].iter_mut().for_each(|c| *c = true);
            prev_end = t.end;
            tokens += 1;
        }
        if let Some(i) = (0..chars.len()).find(|&i| covered[i] == chars[i].is_whitespace()) {
            return Err(format!("case {case} {text:?}: character {i} coverage wrong"));
        }
    }
    Ok(format!("10^5 random strings, {tokens} tokens, zero violations"))
}

fn main() {
    let mut phase2 = None;
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 gradient fidelity", gradient_fidelity()),
        ("2 convolution oracle", convolution_oracle()),
        ("3 metric oracle and published arithmetic", metric_oracle()),
        ("4 dropout contract", dropout_contract()),
        ("5 norm constraint", norm_constraint()),
        ("6 end-to-end synthetic run", end_to_end(&mut phase2)),
    ];
    results.push((
        "7 DocTimeRel with gold spans",
        phase2.unwrap_or_else(|| Err("end-to-end run did not reach phase 2".into())),
    ));
    results.push(("8 determinism and round trips", determinism_and_round_trips()));
    results.push(("9 tokenizer and shape conformance", tokenizer_conformance()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
