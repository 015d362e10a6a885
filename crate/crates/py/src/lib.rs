use pyo3::prelude::*;

#[pymodule]
fn lenpred_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
