use labelfix_py::labelfix_module;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "labelfix").unwrap();
        labelfix_module(&m).unwrap();
        let locals = PyDict::new(py);
        locals.set_item("lf", m).unwrap();
        if let Err(e) = py.run(code, None, Some(&locals)) {
            e.display(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn helpers_match_the_core_library() {
    with_module(c"
assert lf.top3([0.1, 0.9, 0.3, 0.8, 0.05]) == [1, 2, 3]
t = lf.smooth_targets([0, 2], 0.9, 5)
assert abs(t[0] - 0.9) < 1e-12 and abs(t[1] - 0.2 / 3) < 1e-12
r = lf.evaluate([[0], [1]], [[0], [1]], 4)
assert r['maf1'] == 0.5 and r['maa'] == 1.0
try:
    lf.top3([0.1, 0.2])
    raise AssertionError('expected ValueError')
except ValueError:
    pass
");
}

#[test]
fn dataset_and_ensemble_roundtrip() {
    with_module(c"
ds = lf.generate_synthetic(groups=12, frames_min=4, frames_max=4, seed=3)
assert len(ds) == 48 and ds.num_classes == 14 and ds.feature_dim == 32
assert len(ds.features) == 48 and len(ds.features[0]) == 32
e = lf.Ensemble(ds.feature_dim, ds.num_classes, seed=3)
traces = e.train(ds, phase1_epochs=1, phase2_epochs=1, seed=3)
assert len(traces) == 4 and all(len(t) == 2 for t in traces)
preds = e.predict(ds.features[:5])
assert all(len(p) == 3 for p in preds)
probs = e.predict_proba(ds.features[:5])
assert all(0.0 < x < 1.0 for row in probs for x in row)
assert 0.0 <= e.evaluate(ds)['maf1'] <= 1.0
sub = ds.subset(ds.sample_ids[:10])
assert len(sub) == 10
");
}
