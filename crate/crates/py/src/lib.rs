//! Python bindings. Heavy calls release the interpreter lock.

use affreg::affine_sim::{self, AffineOrdering};
use affreg::geometry::{self, Homography, RansacParams};
use affreg::imaging::{self, EnhanceParams, GrayImage};
use affreg::matching;
use affreg::mser::{self, MserParams, Polarity};
use affreg::pipeline::{self, PipelineConfig};
use affreg::{bench, synth, Error};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use std::path::PathBuf;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// 8-bit grayscale image, row-major.
#[pyclass(name = "Image", module = "affreg", frozen, from_py_object)]
#[derive(Clone)]
struct PyImage(GrayImage);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        GrayImage::new(width, height, data.to_vec()).map(PyImage).map_err(to_py)
    }

    /// Read a PGM or PPM file; color is converted to gray.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        imaging::read_pnm(&path).map(PyImage).map_err(to_py)
    }

    /// Synthetic dead-leaves texture.
    #[staticmethod]
    #[pyo3(signature = (width, height, seed=0))]
    fn dead_leaves(width: usize, height: usize, seed: u64) -> Self {
        PyImage(synth::dead_leaves(width, height, seed))
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        imaging::write_pgm(&path, &self.0).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

#[pyclass(name = "Match", module = "affreg", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyMatch {
    a: (f64, f64),
    b: (f64, f64),
    distance: f64,
    view_pair: (u32, u32),
}

#[pymethods]
impl PyMatch {
    #[new]
    #[pyo3(signature = (a, b, distance=0.0, view_pair=(0, 0)))]
    fn new(a: (f64, f64), b: (f64, f64), distance: f64, view_pair: (u32, u32)) -> Self {
        PyMatch { a, b, distance, view_pair }
    }

    fn __repr__(&self) -> String {
        format!("Match(a={:?}, b={:?}, distance={})", self.a, self.b, self.distance)
    }
}

impl From<&matching::Match> for PyMatch {
    fn from(m: &matching::Match) -> Self {
        PyMatch { a: m.a, b: m.b, distance: m.distance, view_pair: m.view_pair }
    }
}

impl From<&PyMatch> for matching::Match {
    fn from(m: &PyMatch) -> Self {
        matching::Match { a: m.a, b: m.b, distance: m.distance, view_pair: m.view_pair }
    }
}

fn rust_matches(ms: &[PyRef<'_, PyMatch>]) -> Vec<matching::Match> {
    ms.iter().map(|m| matching::Match::from(&**m)).collect()
}

/// Contrast enhancement with size-derived defaults.
#[pyfunction]
fn enhance(py: Python<'_>, img: &PyImage) -> PyResult<PyImage> {
    let g = &img.0;
    py.detach(|| imaging::enhance(g, &EnhanceParams::for_image(g.width(), g.height())))
        .map(PyImage)
        .map_err(to_py)
}

/// Stable regions as `(id, area, (min_x, min_y, max_x, max_y), mean, polarity)`.
#[pyfunction]
fn segment(py: Python<'_>, img: &PyImage) -> PyResult<Vec<(u32, usize, (u32, u32, u32, u32), f64, &'static str)>> {
    let g = &img.0;
    let map = py
        .detach(|| mser::mser_segment(g, &MserParams::for_image(g.width(), g.height())))
        .map_err(to_py)?;
    Ok(map
        .regions()
        .iter()
        .map(|r| {
            let b = r.bbox;
            let pol = match r.polarity {
                Polarity::Dark => "dark",
                Polarity::Light => "light",
            };
            (r.id, r.area, (b.min_x, b.min_y, b.max_x, b.max_y), r.mean, pol)
        })
        .collect())
}

#[pyfunction]
fn simulate_tilt(img: &PyImage, t: f64, phi_deg: f64) -> PyResult<PyImage> {
    affine_sim::simulate_tilt(&img.0, t, phi_deg.to_radians(), 1)
        .map(|v| PyImage(v.image))
        .map_err(to_py)
}

/// Identity view plus every `(t, phi)` view, as `(view_id, t, phi_deg, image)`.
#[pyfunction]
fn simulate_views(py: Python<'_>, img: &PyImage, tilts: Vec<f64>, phis_deg: Vec<f64>) -> PyResult<Vec<(u32, f64, f64, PyImage)>> {
    let phis: Vec<f64> = phis_deg.iter().map(|p| p.to_radians()).collect();
    let set = py
        .detach(|| affine_sim::simulate_views(&img.0, &tilts, &phis))
        .map_err(to_py)?;
    Ok(set
        .views
        .into_iter()
        .map(|v| (v.view_id, v.pose.t, v.pose.phi.to_degrees(), PyImage(v.image)))
        .collect())
}

#[pyfunction]
fn max_affine(set1: Vec<f64>, set2: Vec<f64>) -> PyResult<f64> {
    affine_sim::max_affine(&set1, &set2).map_err(to_py)
}

#[pyfunction]
fn average_differ(set1: Vec<f64>, set2: Vec<f64>, a: f64) -> PyResult<f64> {
    affine_sim::average_differ(&set1, &set2, a).map_err(to_py)
}

#[pyfunction]
fn asift_tilts() -> Vec<f64> {
    affine_sim::asift_tilts()
}

/// `("a" | "b" | "tie", matches(a, tilted b), matches(tilted a, b))`;
/// the named image is the less distorted one.
#[pyfunction]
#[pyo3(signature = (a, b, theta_deg=45.0))]
fn classify(py: Python<'_>, a: &PyImage, b: &PyImage, theta_deg: f64) -> PyResult<(&'static str, usize, usize)> {
    let c = py
        .detach(|| affine_sim::classify_affine_pair(&a.0, &b.0, theta_deg.to_radians()))
        .map_err(to_py)?;
    let which = match c.ordering {
        AffineOrdering::ALower => "a",
        AffineOrdering::BLower => "b",
        AffineOrdering::Tie => "tie",
    };
    Ok((which, c.m_a_tilted_b, c.m_tilted_a_b))
}

/// Full pipeline: classification, view simulation, fused descriptors and
/// matching. Returns deduplicated matches in original coordinates.
#[pyfunction]
#[pyo3(signature = (a, b, ratio=0.8, simulate=true, alpha1=None, alpha2=None))]
fn match_images(
    py: Python<'_>,
    a: &PyImage,
    b: &PyImage,
    ratio: f64,
    simulate: bool,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
) -> PyResult<Vec<PyMatch>> {
    let cfg = PipelineConfig { ratio, simulate, alpha1, alpha2, ..Default::default() };
    let out = py
        .detach(|| pipeline::match_pipeline(&a.0, &b.0, &cfg))
        .map_err(to_py)?;
    Ok(out.matches.iter().map(PyMatch::from).collect())
}

#[pyfunction]
fn epsilon_for(width: usize, height: usize) -> PyResult<f64> {
    geometry::epsilon_for(width, height).map_err(to_py)
}

/// `(accuracy, n_correct, n_matches)` against a ground-truth homography.
#[pyfunction]
fn accuracy_h(matches: Vec<PyRef<'_, PyMatch>>, h: [[f64; 3]; 3], eps: f64) -> PyResult<(f64, usize, usize)> {
    let h = Homography::new(h).map_err(to_py)?;
    let r = geometry::accuracy_h(&rust_matches(&matches), &h, eps);
    Ok((r.accuracy, r.n_correct, r.n_matches))
}

/// RANSAC homography; returns the matrix and the inlier count.
#[pyfunction]
#[pyo3(signature = (matches, eps=2.0, iterations=2000, seed=42))]
fn estimate_homography(
    matches: Vec<PyRef<'_, PyMatch>>,
    eps: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<([[f64; 3]; 3], usize)> {
    let params = RansacParams { iterations, inlier_eps: eps, seed };
    let (h, inliers) = geometry::estimate_h_ransac(&rust_matches(&matches), &params).map_err(to_py)?;
    Ok((h.m, inliers.len()))
}

/// Run a benchmark from config text and return the CSV.
#[pyfunction]
fn run_bench(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = bench::BenchConfig::parse(config, "<config>").map_err(to_py)?;
    py.detach(|| bench::run_benchmark(&cfg)).map(|r| r.to_csv()).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "affreg")]
fn affreg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyMatch>()?;
    m.add_function(wrap_pyfunction!(enhance, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tilt, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_views, m)?)?;
    m.add_function(wrap_pyfunction!(max_affine, m)?)?;
    m.add_function(wrap_pyfunction!(average_differ, m)?)?;
    m.add_function(wrap_pyfunction!(asift_tilts, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(match_images, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_for, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy_h, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_homography, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
