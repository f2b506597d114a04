use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(lidarcam::lidarcam)(py);
        let globals = PyDict::new(py);
        globals.set_item("lc", m).unwrap();
        f(py, &globals)
    })
}

fn eval(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) -> PyResult<()> {
    py.run(&std::ffi::CString::new(code).unwrap(), Some(globals), None)
}

#[test]
fn transforms_and_cameras() {
    with_module(|py, g| {
        eval(
            py,
            g,
            r#"
t = lc.Transform.from_rotation_vector([0.0, 0.0, 1.5707963267948966], [1.0, 0.0, 0.0])
p = t.apply([1.0, 0.0, 0.0])
assert abs(p[0] - 1.0) < 1e-12 and abs(p[1] - 1.0) < 1e-12
assert (t * t.inverse()).translation_error(lc.Transform.identity()) < 1e-12
cam = lc.Camera.pinhole(400, 400, 320, 240, 640, 480)
u, v = cam.project([0.0, 0.0, 2.0])
assert (u, v) == (320.0, 240.0)
assert cam.project([0.0, 0.0, -1.0]) is None
b = lc.Camera.equirectangular(1024, 512).unproject(100.5, 200.5)
assert abs(sum(x * x for x in b) - 1.0) < 1e-12
"#,
        )
        .unwrap();
    });
}

#[test]
fn nid_and_errors_map_to_python() {
    with_module(|py, g| {
        eval(
            py,
            g,
            r#"
assert lc.nid([[5, 0], [0, 7]]) == 0.0
assert abs(lc.nid([[1, 1], [1, 1]]) - 1.0) < 1e-12
try:
    lc.nid([[1, 2, 3], [1, 2]])
    raise AssertionError("ragged table accepted")
except ValueError:
    pass
try:
    lc.PointCloud.load("/nonexistent/cloud.ply")
    raise AssertionError("missing file accepted")
except OSError:
    pass
assert issubclass(lc.CalibrationError, RuntimeError)
"#,
        )
        .unwrap();
    });
}
