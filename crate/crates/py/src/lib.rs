use pyo3::prelude::*;

#[pymodule]
fn crlab_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
