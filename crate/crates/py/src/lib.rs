use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use archweave::emit::{generate_code, plan_deployment, CodegenMapping, ResourceInventory};
use archweave::pipeline::{run, PipelineConfig, PipelineStage};
use archweave::sim::{simulate, SimScenario};
use archweave::{apply_plan, builtin_library, diff, parse_architecture_str, plan, plan_platform, render, verify_preservation};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed architecture model.
#[pyclass(frozen, module = "archweave")]
struct Model {
    arch: archweave::Architecture,
}

#[pymethods]
impl Model {
    #[getter]
    fn name(&self) -> &str {
        &self.arch.name
    }

    #[getter]
    fn stage(&self) -> &'static str {
        self.arch.stage.as_str()
    }

    /// Top-level element names in declaration order.
    #[getter]
    fn elements(&self) -> Vec<String> {
        self.arch.elements.iter().map(|e| e.name.clone()).collect()
    }

    fn render(&self) -> String {
        render(&self.arch)
    }

    /// Well-formedness diagnostics; empty when the model is valid.
    fn validate(&self) -> Vec<String> {
        self.arch.validate().iter().map(|d| d.to_string()).collect()
    }

    fn structurally_eq(&self, other: &Model) -> bool {
        self.arch.structurally_eq(&other.arch)
    }

    fn diff(&self, other: &Model) -> String {
        diff::diff(&self.arch, &other.arch).to_string()
    }

    /// Applies the annotated QoS patterns from the built-in library.
    fn refine(&self) -> PyResult<Model> {
        let lib = builtin_library();
        let p = plan(&self.arch, &lib).map_err(value_err)?;
        let arch = apply_plan(&self.arch, &p).map_err(value_err)?;
        Ok(Model { arch })
    }

    /// Text form of the QoS plan.
    fn plan_text(&self) -> PyResult<String> {
        Ok(plan(&self.arch, &builtin_library()).map_err(value_err)?.to_text())
    }

    fn adapt(&self, platform: &str) -> PyResult<Model> {
        let lib = builtin_library();
        let p = plan_platform(&self.arch, &lib, platform).map_err(value_err)?;
        let arch = apply_plan(&self.arch, &p).map_err(value_err)?;
        Ok(Model { arch })
    }

    /// (passed, report text) for `concrete` against this model.
    fn preserved_by(&self, concrete: &Model) -> (bool, String) {
        let r = verify_preservation(&self.arch, &concrete.arch);
        (r.passed, r.to_text())
    }

    /// Trace events as (step, element, kind, detail) tuples.
    fn simulate(&self, scenario: &str) -> PyResult<Vec<(u64, String, String, String)>> {
        let sc = SimScenario::parse(scenario, "<scenario>").map_err(value_err)?;
        let t = simulate(&self.arch, &sc).map_err(value_err)?;
        Ok(t
            .events
            .into_iter()
            .map(|e| (e.step, e.element, e.kind.as_str().to_string(), e.detail))
            .collect())
    }

    /// Generated files keyed by relative path, MANIFEST included.
    fn generate_code<'py>(&self, py: Python<'py>, gemm_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
        let mapping = CodegenMapping::load_dir(&gemm_dir).map_err(value_err)?;
        let files = generate_code(&self.arch, &mapping).map_err(value_err)?;
        let out = PyDict::new(py);
        for (path, bytes) in &files.files {
            out.set_item(path, PyBytes::new(py, bytes))?;
        }
        Ok(out)
    }

    /// (element, resource) assignments for an inventory in `.germ` syntax.
    fn deploy(&self, inventory: &str) -> PyResult<Vec<(String, String)>> {
        let inv = ResourceInventory::parse(inventory, "<inventory>").map_err(value_err)?;
        Ok(plan_deployment(&self.arch, &inv).map_err(value_err)?.assignments)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, stage={}, elements={})", self.arch.name, self.arch.stage.as_str(), self.arch.elements.len())
    }
}

/// Parses and validates model text.
#[pyfunction]
fn parse(text: &str) -> PyResult<Model> {
    let arch = parse_architecture_str(text).map_err(|e| PyValueError::new_err(e.render("<input>")))?;
    Ok(Model { arch })
}

/// Runs the whole pipeline; returns exit_code, diagnostics and artifacts.
#[pyfunction]
#[pyo3(signature = (input, platform, gemm, germ, out, scenario=None, patterns=None, stop_after=None))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline<'py>(
    py: Python<'py>,
    input: PathBuf,
    platform: String,
    gemm: PathBuf,
    germ: PathBuf,
    out: PathBuf,
    scenario: Option<PathBuf>,
    patterns: Option<PathBuf>,
    stop_after: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let stop_after = match stop_after {
        Some(s) => Some(PipelineStage::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown stage `{s}`")))?),
        None => None,
    };
    let cfg = PipelineConfig {
        input,
        patterns_dir: patterns,
        platform,
        gemm,
        germ,
        scenario,
        out_dir: out,
        stop_after,
    };
    let outcome = py.detach(|| run(&cfg));
    let d = PyDict::new(py);
    d.set_item("exit_code", outcome.exit_code)?;
    d.set_item("diagnostics", outcome.diagnostics)?;
    d.set_item("artifacts", outcome.artifacts)?;
    Ok(d)
}

/// Built-in patterns as (name, aliases, kind keyword).
#[pyfunction]
fn patterns() -> Vec<(String, Vec<String>, &'static str)> {
    builtin_library()
        .patterns
        .into_values()
        .map(|p| (p.name, p.aliases, p.kind.keyword()))
        .collect()
}

#[pymodule]
#[pyo3(name = "archweave")]
fn archweave_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(patterns, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
