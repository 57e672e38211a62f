//! Python bindings. Geometry and solution files cross the boundary as JSON
//! strings in the same format the command-line tool reads and writes.

use std::path::PathBuf;

use mixgrid::io::{self, GeometryFile, InitialGuess, IoError, SampleFormat, SolutionFile};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn initial_guess(kind: &str, initial_file: Option<PathBuf>) -> PyResult<InitialGuess> {
    match (kind, initial_file) {
        ("transfinite", _) => Ok(InitialGuess::Transfinite),
        ("folded", _) => Ok(InitialGuess::Folded),
        ("file", Some(p)) => Ok(InitialGuess::File(p)),
        ("file", None) => Err(err("initial='file' needs initial_file")),
        (other, _) => Err(err(format!("unknown initial guess '{other}'"))),
    }
}

/// Validates a geometry. Returns `(errors, warnings)`.
#[pyfunction]
fn check(geometry: &str) -> (Vec<String>, Vec<String>) {
    match GeometryFile::parse(geometry) {
        Ok(g) => {
            let r = io::check_geometry(&g);
            (r.errors, r.warnings)
        }
        Err(e) => (vec![e.to_string()], vec![]),
    }
}

/// Solves a geometry and returns the solution file as JSON.
#[pyfunction]
#[pyo3(signature = (geometry, initial = "transfinite", initial_file = None, verbose = false))]
fn solve(py: Python<'_>, geometry: &str, initial: &str, initial_file: Option<PathBuf>, verbose: bool) -> PyResult<String> {
    let g = GeometryFile::parse(geometry).map_err(err)?;
    let init = initial_guess(initial, initial_file)?;
    let sol = py.detach(|| io::solve_geometry(&g, &init, verbose)).map_err(err)?;
    Ok(sol.to_json())
}

/// `||R||` of a stored solution with freshly projected auxiliary variables.
#[pyfunction]
fn residual_norm(solution: &str) -> PyResult<f64> {
    SolutionFile::parse(solution).and_then(|s| s.residual_norm()).map_err(err)
}

#[pyfunction]
fn quality(solution: &str) -> PyResult<String> {
    let s = SolutionFile::parse(solution).map_err(err)?;
    io::quality_text(&s).map_err(err)
}

/// Sampled mesh as text: one CSV or SVG document, or one VTK document per
/// patch.
#[pyfunction]
#[pyo3(signature = (solution, format = "csv", resolution = 4))]
fn sample(solution: &str, format: &str, resolution: usize) -> PyResult<Vec<String>> {
    let s = SolutionFile::parse(solution).map_err(err)?;
    let format: SampleFormat = format.parse().map_err(err)?;
    let out: Result<Vec<String>, IoError> = match format {
        SampleFormat::Csv => io::sample_csv(&s, resolution).map(|t| vec![t]).map_err(Into::into),
        SampleFormat::Svg => io::sample_svg(&s, resolution).map(|t| vec![t]).map_err(Into::into),
        SampleFormat::Vtk => io::sample_vtk(&s, resolution).map_err(Into::into),
    };
    out.map_err(err)
}

/// Names of the bundled sample geometries.
#[pyfunction]
fn sample_names() -> Vec<&'static str> {
    mixgrid::samples::bundled().into_iter().map(|(n, _)| n).collect()
}

/// A bundled sample geometry as JSON.
#[pyfunction]
fn sample_geometry(name: &str) -> PyResult<String> {
    mixgrid::samples::bundled()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, g)| g.to_json())
        .ok_or_else(|| err(format!("no sample named '{name}'")))
}

#[pymodule]
fn mixgrid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(residual_norm, m)?)?;
    m.add_function(wrap_pyfunction!(quality, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(sample_names, m)?)?;
    m.add_function(wrap_pyfunction!(sample_geometry, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
