//! Python bindings: configure and sample the experiment, compute exact
//! expectations, and run the Bell-statistics decision.

use eprsim_core::bellstats::{self, BellEstimate, BellReport};
use eprsim_core::linalg::C64;
use eprsim_core::protocol::{self, Arm, ExperimentConfig, FunctionType};
use eprsim_core::qoptics::Basis;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(eprsim, EprsimError, PyException);

fn err(e: eprsim_core::Error) -> PyErr {
    EprsimError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = eprsim_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

#[pyclass(name = "ExperimentConfig", from_py_object)]
#[derive(Clone)]
struct PyExperimentConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyExperimentConfig {
    #[new]
    #[pyo3(signature = (fn_a="balanced", fn_b="constant", noise_p=1.0, efficiency=1.0, shots=10_000, seed=0))]
    fn new(fn_a: &str, fn_b: &str, noise_p: f64, efficiency: f64, shots: usize, seed: u64) -> PyResult<Self> {
        let inner = ExperimentConfig {
            fn_a: parse(fn_a)?,
            fn_b: parse(fn_b)?,
            noise_p,
            detector_efficiency: efficiency,
            shots_per_basis: shots,
            seed,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn fn_a(&self) -> &'static str {
        self.inner.fn_a.as_str()
    }

    #[getter]
    fn fn_b(&self) -> &'static str {
        self.inner.fn_b.as_str()
    }

    #[getter]
    fn noise_p(&self) -> f64 {
        self.inner.noise_p
    }

    #[getter]
    fn efficiency(&self) -> f64 {
        self.inner.detector_efficiency
    }

    #[getter]
    fn shots(&self) -> usize {
        self.inner.shots_per_basis
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "ExperimentConfig(fn_a='{}', fn_b='{}', noise_p={}, efficiency={}, shots={}, seed={})",
            c.fn_a, c.fn_b, c.noise_p, c.detector_efficiency, c.shots_per_basis, c.seed
        )
    }
}

#[pyclass(name = "SampleRun")]
struct PySampleRun {
    inner: protocol::SampleRun,
}

#[pymethods]
impl PySampleRun {
    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    /// Records as `(shot, arm, basis, d_first, d_second)` tuples.
    fn records(&self) -> Vec<(u64, &'static str, &'static str, i8, i8)> {
        self.inner
            .records
            .iter()
            .map(|r| (r.shot, r.arm.as_str(), r.basis.as_str(), r.first, r.second))
            .collect()
    }

    /// Outcome products of one arm and basis.
    fn products(&self, arm: &str, basis: &str) -> PyResult<Vec<i8>> {
        let (arm, basis): (Arm, Basis) = (parse(arm)?, parse(basis)?);
        Ok(self.inner.records_for(arm, basis).map(|r| r.product()).collect())
    }

    #[getter]
    fn dropped(&self) -> usize {
        self.inner.dropped.len()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        Ok(String::from_utf8(buf).expect("csv is ascii"))
    }

    fn estimate(&self, arm: &str) -> PyResult<PyBellEstimate> {
        let inner = bellstats::estimate(&self.inner.records, parse(arm)?).map_err(err)?;
        Ok(PyBellEstimate { inner })
    }
}

#[pyclass(name = "BellEstimate", frozen, from_py_object)]
#[derive(Clone)]
struct PyBellEstimate {
    inner: BellEstimate,
}

#[pymethods]
impl PyBellEstimate {
    #[new]
    #[pyo3(signature = (arm, mean, std_error=0.0))]
    fn new(arm: &str, mean: f64, std_error: f64) -> PyResult<Self> {
        Ok(Self { inner: BellEstimate::from_mean(parse(arm)?, mean, std_error) })
    }

    #[getter]
    fn arm(&self) -> &'static str {
        self.inner.arm.as_str()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean
    }

    #[getter]
    fn std_error(&self) -> f64 {
        self.inner.std_error
    }

    fn violated(&self) -> bool {
        bellstats::violated(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("BellEstimate(arm='{}', mean={}, std_error={})", self.inner.arm, self.inner.mean, self.inner.std_error)
    }
}

#[pyclass(name = "BellReport", frozen)]
struct PyBellReport {
    inner: BellReport,
}

#[pymethods]
impl PyBellReport {
    #[getter]
    fn decision_a(&self) -> &'static str {
        self.inner.arm_a.decision.as_str()
    }

    #[getter]
    fn decision_b(&self) -> &'static str {
        self.inner.arm_b.decision.as_str()
    }

    #[getter]
    fn p_success_lower(&self) -> Option<f64> {
        self.inner.p_success_lower
    }

    /// Raises when either arm is inconclusive.
    fn speedup(&self) -> PyResult<f64> {
        bellstats::speedup_factor(&self.inner).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_value().to_string()
    }

    fn __repr__(&self) -> String {
        format!("BellReport(decision_a='{}', decision_b='{}')", self.decision_a(), self.decision_b())
    }
}

#[pyfunction]
fn sample_records(cfg: &PyExperimentConfig) -> PyResult<PySampleRun> {
    Ok(PySampleRun { inner: protocol::sample_records(&cfg.inner).map_err(err)? })
}

/// Detector-pair density matrix of one arm, as nested lists of complex.
#[pyfunction]
fn joint_output_state(cfg: &PyExperimentConfig, arm: &str) -> PyResult<Vec<Vec<C64>>> {
    let rho = protocol::joint_output_state(&cfg.inner, parse(arm)?).map_err(err)?;
    let m = rho.matrix();
    Ok((0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect())
}

#[pyfunction]
fn correlator(cfg: &PyExperimentConfig, arm: &str, basis: &str) -> PyResult<f64> {
    let rho = protocol::joint_output_state(&cfg.inner, parse(arm)?).map_err(err)?;
    protocol::correlator(&rho, parse(basis)?).map_err(err)
}

#[pyfunction]
fn exact_bell_mean(cfg: &PyExperimentConfig, arm: &str) -> PyResult<f64> {
    let rho = protocol::joint_output_state(&cfg.inner, parse(arm)?).map_err(err)?;
    bellstats::exact_bell_mean(&rho).map_err(err)
}

/// `(lower, upper)` clamped fidelity bounds for a Bell mean.
#[pyfunction]
fn fidelity_bounds(mean: f64, hypothesis: &str) -> PyResult<(f64, f64)> {
    let b = bellstats::fidelity_bounds_from_mean(mean, parse::<FunctionType>(hypothesis)?);
    Ok((b.lower, b.upper))
}

#[pyfunction]
#[pyo3(signature = (est_a, est_b, k=0.0))]
fn classify(est_a: &PyBellEstimate, est_b: &PyBellEstimate, k: f64) -> PyBellReport {
    PyBellReport { inner: bellstats::classify_with_margin(&est_a.inner, &est_b.inner, k) }
}

/// `(|amplitude|, detector)` of the single-photon interferometer.
#[pyfunction]
fn schematic_outcome(function: &str, alpha: i8) -> PyResult<(f64, &'static str)> {
    let o = protocol::schematic_outcome(parse(function)?, alpha).map_err(err)?;
    let detector = match o.detector {
        protocol::SchematicDetector::D2 => "D2",
        protocol::SchematicDetector::D2Prime => "D2'",
    };
    Ok((o.amplitude.norm(), detector))
}

#[pymodule]
fn eprsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EprsimError", m.py().get_type::<EprsimError>())?;
    m.add_class::<PyExperimentConfig>()?;
    m.add_class::<PySampleRun>()?;
    m.add_class::<PyBellEstimate>()?;
    m.add_class::<PyBellReport>()?;
    m.add_function(wrap_pyfunction!(sample_records, m)?)?;
    m.add_function(wrap_pyfunction!(joint_output_state, m)?)?;
    m.add_function(wrap_pyfunction!(correlator, m)?)?;
    m.add_function(wrap_pyfunction!(exact_bell_mean, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(schematic_outcome, m)?)?;
    Ok(())
}
