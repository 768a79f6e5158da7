//! Python bindings. Matrices cross the boundary as lists of rows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use ndarray::Array2;
use nlunmix_core::aecmodel::{
    build_network, nonlinearity_report, read_checkpoint, write_checkpoint, AecParams, Variant,
};
use nlunmix_core::classic;
use nlunmix_core::metrics::EvalReport;
use nlunmix_core::simdata::{
    generate_scene, AbundanceMatrix, EndmemberMatrix, HsiCube, MixingModel, PixelLayout, Preset, Provenance, SceneSpec,
};
use nlunmix_core::trainer::{self, Grid, TrainConfig, TrainHistory};
use nlunmix_core::Error;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        e if e.is_numeric() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: &Rows) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), cols), flat).expect("rectangular"))
}

fn to_rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn cube(rows: &Rows) -> PyResult<HsiCube> {
    HsiCube::new(to_array(rows)?, None).map_err(py_err)
}

/// Initial endmembers; like VCA output they may stray outside [0, 1].
fn endmembers(rows: &Rows) -> PyResult<EndmemberMatrix> {
    EndmemberMatrix::new(to_array(rows)?, Provenance::Extracted).map_err(py_err)
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(py_err)
}

/// Training configuration from keyword overrides, e.g. `lambda_q=1.0`.
fn config(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            cfg.set(&key, &v.str()?.to_string().to_lowercase()).map_err(py_err)?;
        }
    }
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

fn history_rows(h: &TrainHistory) -> Vec<(usize, f64, f64, f64, f64, f64)> {
    h.epochs
        .iter()
        .map(|r| (r.epoch, r.terms.total, r.terms.data, r.terms.rw, r.terms.rm, r.terms.lq))
        .collect()
}

/// Synthesizes a scene. Returns a dict with `cube`, `clean`, `abundances`,
/// `endmembers` (bands × P) and `grid` (rows, cols) or None.
#[pyfunction]
#[pyo3(signature = (preset="dc1", model="blmm", xi=0.7, snr=Some(20.0), seed=1, bands=None, n_endmembers=None, pixels=None))]
#[allow(clippy::too_many_arguments)]
fn generate<'py>(
    py: Python<'py>,
    preset: &str,
    model: &str,
    xi: f64,
    snr: Option<f64>,
    seed: u64,
    bands: Option<usize>,
    n_endmembers: Option<usize>,
    pixels: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let preset: Preset = preset.parse().map_err(py_err)?;
    let model = match model {
        "lmm" => MixingModel::Lmm,
        "blmm" => MixingModel::Blmm,
        "pnmm" => MixingModel::Pnmm { xi },
        other => return Err(PyValueError::new_err(format!("unknown model `{other}`"))),
    };
    let mut spec = SceneSpec::preset(preset, model, snr, seed);
    if let Some(b) = bands {
        spec.bands = b;
    }
    if let Some(p) = n_endmembers {
        spec.endmembers = p;
    }
    if let Some(n) = pixels {
        spec.layout = PixelLayout::Count(n);
    }
    let scene = py.detach(|| generate_scene(&spec, None)).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("cube", to_rows(scene.cube.data()))?;
    out.set_item("clean", to_rows(scene.clean.data()))?;
    out.set_item("abundances", to_rows(scene.abundances.data()))?;
    out.set_item("endmembers", to_rows(scene.endmembers.data()))?;
    out.set_item("grid", scene.cube.grid())?;
    Ok(out)
}

/// Vertex component analysis: (endmembers bands × P, pixel indices).
#[pyfunction]
#[pyo3(signature = (y, p, seed=0))]
fn vca(py: Python<'_>, y: Rows, p: usize, seed: u64) -> PyResult<(Rows, Vec<usize>)> {
    let y = cube(&y)?;
    let r = py.detach(|| classic::vca(&y, p, seed)).map_err(py_err)?;
    Ok((to_rows(r.endmembers.data()), r.indices))
}

/// Fully constrained least squares abundances (N × P).
#[pyfunction]
fn fcls(py: Python<'_>, y: Rows, m: Rows) -> PyResult<Rows> {
    let (y, m) = (cube(&y)?, to_array(&m)?);
    let a = py.detach(|| classic::fcls(&y, m.view())).map_err(py_err)?;
    Ok(to_rows(a.data()))
}

/// Scores estimated abundances against the truth after column alignment.
/// Returns a dict with `rmse_a`, `rmse_y`, `angles` and `permutation`.
#[pyfunction]
#[pyo3(signature = (est_a, true_a, y_hat=None, y=None, est_m=None, true_m=None))]
fn evaluate<'py>(
    py: Python<'py>,
    est_a: Rows,
    true_a: Rows,
    y_hat: Option<Rows>,
    y: Option<Rows>,
    est_m: Option<Rows>,
    true_m: Option<Rows>,
) -> PyResult<Bound<'py, PyDict>> {
    let (ea, ta) = (to_array(&est_a)?, to_array(&true_a)?);
    let recon = match (y_hat, y) {
        (Some(h), Some(y)) => Some((to_array(&h)?, to_array(&y)?)),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("y_hat and y go together")),
    };
    let ems = match (est_m, true_m) {
        (Some(e), Some(t)) => Some((to_array(&e)?, to_array(&t)?)),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("est_m and true_m go together")),
    };
    let r = EvalReport::evaluate(
        ea.view(),
        ta.view(),
        recon.as_ref().map(|(h, y)| (h.view(), y.view())),
        ems.as_ref().map(|(e, t)| (e.view(), t.view())),
        0.0,
    )
    .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("rmse_a", r.rmse_a)?;
    out.set_item("rmse_y", r.rmse_y)?;
    out.set_item("angles", r.angles)?;
    out.set_item("permutation", r.permutation)?;
    Ok(out)
}

/// A model-based autoencoder: `macu`, `nfaec` or `mfaec`.
#[pyclass(module = "nlunmix")]
struct Autoencoder {
    params: AecParams,
}

#[pymethods]
impl Autoencoder {
    /// Untrained network initialized from endmembers `m0` (bands × P).
    #[new]
    #[pyo3(signature = (m0, variant="macu", seed=0))]
    fn new(m0: Rows, variant: &str, seed: u64) -> PyResult<Self> {
        let params = build_network(&endmembers(&m0)?, self::variant(variant)?, seed).map_err(py_err)?;
        Ok(Self { params })
    }

    /// Trains on `y` (N × bands) from `m0`. Keyword arguments override
    /// training settings. Returns (model, history) where history rows are
    /// (epoch, total, data, rw, rm, lq).
    #[staticmethod]
    #[pyo3(signature = (y, m0, variant="macu", **settings))]
    #[allow(clippy::type_complexity)]
    fn fit(
        py: Python<'_>,
        y: Rows,
        m0: Rows,
        variant: &str,
        settings: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<(Self, Vec<(usize, f64, f64, f64, f64, f64)>)> {
        let (y, m0, v, cfg) = (cube(&y)?, endmembers(&m0)?, self::variant(variant)?, config(settings)?);
        let (params, history) = py.detach(|| trainer::train(&y, &m0, v, &cfg)).map_err(py_err)?;
        Ok((Self { params }, history_rows(&history)))
    }

    /// Grid search over the reduced (8 cells) or full (54 cells) grid;
    /// returns the best model and its abundance RMSE when `truth` is given.
    #[staticmethod]
    #[pyo3(signature = (y, m0, variant="macu", truth=None, full=false, **settings))]
    fn grid_search(
        py: Python<'_>,
        y: Rows,
        m0: Rows,
        variant: &str,
        truth: Option<Rows>,
        full: bool,
        settings: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<(Self, Option<f64>, f64)> {
        let (y, m0, v, base) = (cube(&y)?, endmembers(&m0)?, self::variant(variant)?, config(settings)?);
        let truth = truth
            .map(|t| AbundanceMatrix::new(to_array(&t)?, None).map_err(py_err))
            .transpose()?;
        let grid = if full { Grid::default() } else { Grid::reduced() };
        let g = py
            .detach(|| trainer::grid_search(&y, &m0, v, &grid, &base, truth.as_ref()))
            .map_err(py_err)?;
        let s = g.best_scores().clone();
        Ok((Self { params: g.params }, s.rmse_a, s.rmse_y))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let params = read_checkpoint(BufReader::new(f)).map_err(py_err)?;
        Ok(Self { params })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let mut w = BufWriter::new(f);
        write_checkpoint(&mut w, &self.params).map_err(py_err)?;
        w.flush().map_err(|e| PyIOError::new_err(e.to_string()))
    }

    /// Abundances (N × P) for pixels `y` (N × bands).
    fn encode(&self, y: Rows) -> PyResult<Rows> {
        let a = self.params.encode(to_array(&y)?.view()).map_err(py_err)?;
        Ok(to_rows(&a))
    }

    /// Pixels (N × bands) for abundances `a` (N × P).
    fn decode(&self, a: Rows) -> PyResult<Rows> {
        let y = self.params.decode(to_array(&a)?.view()).map_err(py_err)?;
        Ok(to_rows(&y))
    }

    fn reconstruct(&self, y: Rows) -> PyResult<Rows> {
        let r = self.params.reconstruct(to_array(&y)?.view()).map_err(py_err)?;
        Ok(to_rows(&r))
    }

    /// Current endmember estimate (bands × P).
    #[getter]
    fn endmembers(&self) -> Rows {
        to_rows(self.params.m().values())
    }

    /// Linear scaling coefficients `|α|`; None for variants without them.
    #[getter]
    fn alpha(&self) -> Option<Vec<f64>> {
        self.params.alpha()
    }

    #[getter]
    fn variant(&self) -> String {
        self.params.variant().to_string()
    }

    /// `‖MᵀMQ − Mᵀ‖_F / ‖Mᵀ‖_F`; None without a trained `Q`.
    fn pinv_residual(&self) -> Option<f64> {
        self.params.pinv_residual()
    }

    /// Per-pixel norms of the encoder and decoder nonlinear parts.
    fn nonlinearity(&self, y: Rows) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
        let r = nonlinearity_report(to_array(&y)?.view(), &self.params).map_err(py_err)?;
        Ok((r.encoder_norms, r.decoder_norms, r.mean_gap))
    }

    fn __repr__(&self) -> String {
        format!(
            "Autoencoder(variant={}, bands={}, endmembers={})",
            self.params.variant(),
            self.params.bands(),
            self.params.endmembers()
        )
    }
}

#[pymodule]
fn nlunmix(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(vca, m)?)?;
    m.add_function(wrap_pyfunction!(fcls, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<Autoencoder>()?;
    Ok(())
}
