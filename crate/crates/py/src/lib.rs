//! Python bindings: the closed-form coefficient functions, the planar-wave
//! helpers, and a `PatchRun` class that drives the full mesh + march +
//! diagnostics pipeline in-process.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sonic_patch::config::SolverConfig;
use sonic_patch::diagnostics::Diagnostics;
use sonic_patch::goursat::CharacteristicMesh;
use sonic_patch::pipeline::{compute_diagnostics, compute_field, compute_mesh};
use sonic_patch::rtfield::RtField;
use sonic_patch::state::CartPoint;
use sonic_patch::{coeffs, wave};

fn err(e: sonic_patch::SolverError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn lambda_inv_polar(r: f64, p: f64) -> PyResult<f64> {
    coeffs::lambda_inv_polar(r, p).map_err(err)
}

#[pyfunction]
fn lambda_inv_rt(r: f64, t: f64) -> PyResult<f64> {
    coeffs::lambda_inv_rt(r, t).map_err(err)
}

#[pyfunction]
fn q_polar(r: f64, p: f64) -> PyResult<f64> {
    coeffs::q_polar(r, p).map_err(err)
}

#[pyfunction]
fn q_rt(r: f64, t: f64) -> PyResult<f64> {
    coeffs::q_rt(r, t).map_err(err)
}

#[pyfunction]
fn t2_q_rt(r: f64, t: f64) -> PyResult<f64> {
    coeffs::t2_q_rt(r, t).map_err(err)
}

#[pyfunction]
fn lambda_pm(r: f64, t: f64, dp_plus: f64, dp_minus: f64) -> PyResult<(f64, f64)> {
    coeffs::lambda_pm(r, t, dp_plus, dp_minus).map_err(err)
}

/// All near-sonic coefficient functions at one state, as a dict with keys
/// e, h, f1, f2, f3, g1, g2, g3.
#[pyfunction]
fn coefficients<'py>(
    py: Python<'py>,
    r: f64,
    t: f64,
    dp_plus: f64,
    dp_minus: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = coeffs::coeff_e_h_f_g(r, t, dp_plus, dp_minus).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("e", c.e)?;
    d.set_item("h", c.h)?;
    d.set_item("f1", c.f1)?;
    d.set_item("f2", c.f2)?;
    d.set_item("f3", c.f3)?;
    d.set_item("g1", c.g1)?;
    d.set_item("g2", c.g2)?;
    d.set_item("g3", c.g3)?;
    Ok(d)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn l1_l2(
    r: f64,
    t: f64,
    dp_plus: f64,
    dp_minus: f64,
    dp_plus_r: f64,
    dp_minus_r: f64,
    delta: f64,
) -> PyResult<(f64, f64)> {
    coeffs::coeff_l1_l2(r, t, dp_plus, dp_minus, dp_plus_r, dp_minus_r, delta).map_err(err)
}

#[pyfunction]
fn point_a(p1: f64, p4: f64) -> PyResult<(f64, f64)> {
    let w = wave::WaveParams::new(p1, p4).map_err(err)?;
    let a = w.point_a();
    Ok((a.xi, a.eta))
}

#[pyfunction]
fn point_b(p1: f64, p4: f64) -> PyResult<(f64, f64)> {
    let w = wave::WaveParams::new(p1, p4).map_err(err)?;
    let b = w.point_b();
    Ok((b.xi, b.eta))
}

#[pyfunction]
fn theta_b(p1: f64, p4: f64) -> PyResult<f64> {
    Ok(wave::WaveParams::new(p1, p4).map_err(err)?.theta_b())
}

/// Planar-wave state (p, m, n) at a point of the wave strip.
#[pyfunction]
fn wave_state(xi: f64, eta: f64, p1: f64, p4: f64) -> PyResult<(f64, f64, f64)> {
    let w = wave::WaveParams::new(p1, p4).map_err(err)?;
    let s = wave::wave_state(CartPoint::new(xi, eta), &w).map_err(err)?;
    Ok((s.p, s.m, s.n))
}

/// Boundary data (p, dp_plus, dp_minus) carried by the wave along the
/// characteristic AB.
#[pyfunction]
fn wave_rs(theta: f64, p1: f64, p4: f64) -> PyResult<(f64, f64, f64)> {
    let w = wave::WaveParams::new(p1, p4).map_err(err)?;
    let s = wave::wave_rs(theta, &w).map_err(err)?;
    Ok((s.p, s.dp_plus, s.dp_minus))
}

/// Trace the boundary characteristic AB; returns the polyline as a list of
/// (xi, eta) pairs.
#[pyfunction]
#[pyo3(signature = (p1, p4, step=1e-3))]
fn trace_ab(p1: f64, p4: f64, step: f64) -> PyResult<Vec<(f64, f64)>> {
    let w = wave::WaveParams::new(p1, p4).map_err(err)?;
    let pts = wave::trace_ab(&w, step).map_err(err)?;
    Ok(pts.into_iter().map(|c| (c.xi, c.eta)).collect())
}

/// One full solver run: Goursat mesh, near-sonic march, and diagnostics.
#[pyclass]
struct PatchRun {
    mesh: CharacteristicMesh,
    field: RtField,
    diag: Diagnostics,
}

#[pymethods]
impl PatchRun {
    /// Build from the text of a key = value configuration (empty string for
    /// the reference defaults).
    #[new]
    #[pyo3(signature = (config_text=""))]
    fn new(config_text: &str) -> PyResult<Self> {
        let cfg = SolverConfig::parse_str(config_text).map_err(err)?;
        let mesh = compute_mesh(&cfg).map_err(err)?;
        let field = compute_field(&cfg, &mesh).map_err(err)?;
        let diag = compute_diagnostics(&cfg, &mesh, &field).map_err(err)?;
        Ok(Self { mesh, field, diag })
    }

    fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    fn level_count(&self) -> usize {
        self.field.levels.len()
    }

    /// Interpolated p at a mesh point; None outside the covered triangle.
    fn probe_p(&self, theta: f64, r: f64) -> Option<f64> {
        self.mesh.probe_p(theta, r)
    }

    /// Fitted exponent of log|dp_plus - dp_minus| against log t.
    fn rate_exponent(&self) -> Option<f64> {
        self.diag.rate_fit.as_ref().map(|f| f.exponent)
    }

    fn sup_v_over_t(&self) -> Option<f64> {
        self.diag.sup_v_over_t
    }

    /// Largest |dp_plus - dp_minus| of the sonic-line extrapolation.
    fn sonic_mismatch(&self) -> f64 {
        self.diag.sonic.max_state_mismatch
    }

    /// The full diagnostics record as a JSON string.
    fn diagnostics_json(&self) -> PyResult<String> {
        serde_json_string(&self.diag)
    }

    fn __repr__(&self) -> String {
        format!(
            "PatchRun(nodes={}, levels={}, rate_exponent={:?})",
            self.mesh.node_count(),
            self.field.levels.len(),
            self.rate_exponent()
        )
    }
}

fn serde_json_string<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn sonic_patch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(lambda_inv_polar, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_inv_rt, m)?)?;
    m.add_function(wrap_pyfunction!(q_polar, m)?)?;
    m.add_function(wrap_pyfunction!(q_rt, m)?)?;
    m.add_function(wrap_pyfunction!(t2_q_rt, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_pm, m)?)?;
    m.add_function(wrap_pyfunction!(coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(l1_l2, m)?)?;
    m.add_function(wrap_pyfunction!(point_a, m)?)?;
    m.add_function(wrap_pyfunction!(point_b, m)?)?;
    m.add_function(wrap_pyfunction!(theta_b, m)?)?;
    m.add_function(wrap_pyfunction!(wave_state, m)?)?;
    m.add_function(wrap_pyfunction!(wave_rs, m)?)?;
    m.add_function(wrap_pyfunction!(trace_ab, m)?)?;
    m.add_class::<PatchRun>()?;
    Ok(())
}
