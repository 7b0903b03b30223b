use clinex::clinex;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    pyo3::append_to_inittab!(clinex);
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("clinex", py.import("clinex").unwrap()).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(globals), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn module_round_trips() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
toks = clinex.tokenize("slight nausea.")
assert toks == [("slight", 0, 6, "xxxxxx"), ("nausea", 7, 13, "xxxxxx"), (".", 13, 14, ".")], toks
assert clinex.word_shape("Cr2+") == "Xxd+"
assert clinex.bio_decode(["O", "B-EVENT", "I-EVENT"], [(0, 6), (7, 13), (13, 14)]) == [(7, 14)]

r = clinex.prf([("d", 0, 4, None), ("d", 5, 9, None)], [("d", 0, 4, None)])
assert (r.precision, r.recall, r.overlap) == (0.5, 1.0, 1)
assert r.tsv().startswith("SPAN\t0.5000")

text = "no fever today"
events = [{"begin": 3, "end": 8, "polarity": "NEG", "doctimerel": "OVERLAP"}]
xml = clinex.write_annotations("n1", text, events)
back = clinex.parse_annotations(xml, "n1", text)
assert back[0]["polarity"] == "NEG" and back[0]["modality"] == "ACTUAL", back
assert back[0]["doctimerel"] == "OVERLAP"

try:
    clinex.write_annotations("n1", text, [{"begin": 3, "end": 99}])
    raise AssertionError("out-of-range span accepted")
except ValueError:
    pass
try:
    clinex.Extractor("/nonexistent/models").extract("text")
    raise AssertionError("extraction without models succeeded")
except KeyError:
    pass
"#,
        );
    });
}
