use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "sdoh_eventkit").unwrap();
        sdoh_eventkit_py::init(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("sk", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(globals), None) {
        panic!("{e}");
    }
}

#[test]
fn corpus_and_identity_score() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
c = sk.Corpus.synthetic(20, seed=1)
assert len(c) == 20
doc, ann = c[-1]
assert sk.Annotations.from_standoff(doc, ann.to_standoff(doc)).to_standoff(doc) == ann.to_standoff(doc)
r = sk.score(c.annotations(), c.annotations())
assert r["overall"]["f1"] == 1.0
assert set(ann.note_labels()) == {"alcohol", "drug", "tobacco", "employment", "living"}
"#,
        );
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
c = sk.Corpus.synthetic(3)
try:
    c[5]
    raise AssertionError("expected IndexError")
except IndexError:
    pass
try:
    sk.compare_indicators([("p", "not_a_thing")], [])
    raise AssertionError("expected ValueError")
except ValueError:
    pass
try:
    sk.Corpus.read("/nonexistent/corpus")
    raise AssertionError("expected OSError")
except OSError:
    pass
"#,
        );
    });
}
