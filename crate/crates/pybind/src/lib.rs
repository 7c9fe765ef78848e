use pyo3::prelude::*;

#[pymodule]
fn sharplens_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
