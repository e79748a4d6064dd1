#![allow(clippy::useless_conversion)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use topo_proto::classifier::{self, ClassifierConfig, ClassifierState};
use topo_proto::drift::{self, FeatureMatrix};
use topo_proto::harness::run_stream;
use topo_proto::synth::{self, StreamSpec};
use topo_proto::{geometry, io, AnchorStore, ClassId, Error, FeatureSet, RawVector, SoinnParams, UnitVector};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn unit(v: Vec<f64>) -> PyResult<UnitVector> {
    UnitVector::from_raw(&v).map_err(to_py)
}

fn feature_set(rows: Vec<Vec<f64>>) -> PyResult<FeatureSet> {
    let vectors = rows.into_iter().map(unit).collect::<PyResult<Vec<_>>>()?;
    FeatureSet::from_vectors(vectors).map_err(to_py)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| Ok((i as u64, RawVector::new(r).map_err(to_py)?)))
        .collect::<PyResult<Vec<_>>>()?;
    FeatureMatrix::new(rows).map_err(to_py)
}

/// Unit vector in the direction of `v`.
#[pyfunction]
fn normalize(v: Vec<f64>) -> PyResult<Vec<f64>> {
    let raw = RawVector::new(v).map_err(to_py)?;
    Ok(geometry::normalize(&raw).map_err(to_py)?.into_inner())
}

/// Point at fraction `eta` along the great circle from `v` to `z`.
#[pyfunction]
fn slerp(v: Vec<f64>, z: Vec<f64>, eta: f64) -> PyResult<Vec<f64>> {
    Ok(geometry::slerp(&unit(v)?, &unit(z)?, eta).map_err(to_py)?.into_inner())
}

#[pyfunction]
fn cosine_sim(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    geometry::cosine_sim(&unit(a)?, &unit(b)?).map_err(to_py)
}

#[pyfunction]
fn geodesic_angle(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    geometry::geodesic_angle(&unit(a)?, &unit(b)?).map_err(to_py)
}

/// Full Procrustes distance between two row-matched configurations.
#[pyfunction]
fn procrustes_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(drift::procrustes_distance(&matrix(a)?, &matrix(b)?).map_err(to_py)?.distance)
}

/// `n` von Mises-Fisher draws around `mu`.
#[pyfunction]
fn sample_vmf(mu: Vec<f64>, kappa: f64, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let z = synth::sample_vmf(&unit(mu)?, kappa, n, seed).map_err(to_py)?;
    Ok(z.vectors().map(|v| v.as_slice().to_vec()).collect())
}

fn scores_dict(s: classifier::ScoreVector) -> BTreeMap<ClassId, f64> {
    s.0
}

#[pyclass(module = "topo_proto_py")]
struct Classifier {
    state: ClassifierState,
    anchors: AnchorStore,
}

#[pymethods]
impl Classifier {
    #[new]
    #[pyo3(signature = (dim, alpha=0.5, k_init=60, age_max=20, t_soinn=1, eta1=0.1, eta2=0.01, lam=0.999, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dim: usize,
        alpha: f64,
        k_init: usize,
        age_max: u32,
        t_soinn: u32,
        eta1: f64,
        eta2: f64,
        lam: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let config = ClassifierConfig {
            alpha,
            k_init,
            soinn: SoinnParams {
                eta1,
                eta2,
                age_max,
                t_soinn,
                rng_seed: seed,
            },
            lambda: lam,
        };
        Ok(Self {
            state: ClassifierState::new(config, dim).map_err(to_py)?,
            anchors: AnchorStore::new(),
        })
    }

    /// Fits one class from its feature rows.
    fn fit_class(&mut self, class_id: ClassId, features: Vec<Vec<f64>>) -> PyResult<()> {
        let z = feature_set(features)?;
        let model = classifier::fit_class(class_id, &z, &self.state.config).map_err(to_py)?;
        let anchors = topo_proto::select_anchors(&model, &z).map_err(to_py)?;
        self.state.insert(model).map_err(to_py)?;
        self.anchors.insert_class(class_id, anchors);
        Ok(())
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<ClassId> {
        classifier::predict(&unit(x)?, &self.state).map_err(to_py)
    }

    fn dual_view_score(&self, x: Vec<f64>) -> PyResult<BTreeMap<ClassId, f64>> {
        Ok(scores_dict(classifier::dual_view_score(&unit(x)?, &self.state).map_err(to_py)?))
    }

    fn ncm_score(&self, x: Vec<f64>) -> PyResult<BTreeMap<ClassId, f64>> {
        Ok(scores_dict(classifier::ncm_score(&unit(x)?, &self.state).map_err(to_py)?))
    }

    /// Node count per class.
    fn node_stats(&self) -> PyResult<BTreeMap<ClassId, usize>> {
        Ok(classifier::node_stats(&self.state).map_err(to_py)?.per_class)
    }

    #[getter]
    fn classes(&self) -> Vec<ClassId> {
        self.state.classes.keys().copied().collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_state(&path, &self.state, &self.anchors).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (state, anchors) = io::load_state(&path).map_err(to_py)?;
        Ok(Self { state, anchors })
    }

    fn __repr__(&self) -> String {
        format!(
            "Classifier(dim={}, classes={}, alpha={})",
            self.state.dimension,
            self.state.classes.len(),
            self.state.config.alpha
        )
    }
}

/// Runs a synthetic class-incremental benchmark and returns its metrics.
#[pyfunction]
#[pyo3(signature = (classes=10, tasks=10, seed=0, star=true, alpha=0.5, k_init=60))]
fn run_bench(
    py: Python<'_>,
    classes: usize,
    tasks: usize,
    seed: u64,
    star: bool,
    alpha: f64,
    k_init: usize,
) -> PyResult<Bound<'_, pyo3::types::PyDict>> {
    let report = py.allow_threads(|| {
        let stream = synth::make_stream(&StreamSpec::benchmark(classes, tasks, seed))?;
        let config = ClassifierConfig {
            alpha,
            k_init,
            ..Default::default()
        };
        run_stream(&stream, &config, star).map(|(r, _, _)| r)
    });
    let report = report.map_err(to_py)?;
    let out = pyo3::types::PyDict::new_bound(py);
    out.set_item("per_task_accuracy", report.per_task_accuracy())?;
    out.set_item("procrustes_curve", report.procrustes_curve())?;
    out.set_item("a_avg", report.a_avg)?;
    out.set_item("a_last", report.a_last)?;
    out.set_item("avg_nodes_per_class", report.nodes.avg_nodes_per_class)?;
    Ok(out)
}

#[pymodule]
fn topo_proto_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(slerp, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_sim, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic_angle, m)?)?;
    m.add_function(wrap_pyfunction!(procrustes_distance, m)?)?;
    m.add_function(wrap_pyfunction!(sample_vmf, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add_class::<Classifier>()?;
    Ok(())
}
