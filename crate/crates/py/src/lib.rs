//! Python bindings: transforms, cameras, clouds and the calibration stages.

use std::path::PathBuf;

use nalgebra::{Point2, Quaternion, UnitQuaternion, Vector3};
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lidarcam_core::cloud::{load_cloud, save_cloud, GrayImage, PointCloud};
use lidarcam_core::correspondence::{Correspondence, CorrespondenceSet};
use lidarcam_core::geom::{CameraModel, EquirectCamera, PinholeCamera, RigidTransform};
use lidarcam_core::init_guess::{estimate_initial_guess, RansacParams, RefineParams};
use lidarcam_core::nid::IntensityHistograms;
use lidarcam_core::pipeline::fixture::{write_fixture, FixtureCamera, FixtureSpec};
use lidarcam_core::pipeline::{run_pipeline, PipelineConfig};
use lidarcam_core::registration::{calibrate_fine, DataPair, FineParams};
use lidarcam_core::Error;

create_exception!(lidarcam, CalibrationError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Schema(_)
        | Error::Format(_)
        | Error::Argument(_)
        | Error::Domain(_)
        | Error::Json(_)
        | Error::Image(_)
        | Error::InsufficientCorrespondences { .. } => PyValueError::new_err(e.to_string()),
        _ => CalibrationError::new_err(e.to_string()),
    }
}

/// Rigid transform mapping points from a source frame into a target frame.
#[pyclass(name = "Transform", module = "lidarcam", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyTransform(pub RigidTransform);

#[pymethods]
impl PyTransform {
    #[new]
    #[pyo3(signature = (translation=[0.0; 3], quaternion_xyzw=[0.0, 0.0, 0.0, 1.0]))]
    fn new(translation: [f64; 3], quaternion_xyzw: [f64; 4]) -> PyResult<Self> {
        let [x, y, z, w] = quaternion_xyzw;
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm() > 1e-12) || translation.iter().any(|v| !v.is_finite()) {
            return Err(PyValueError::new_err("need a finite translation and a nonzero quaternion"));
        }
        Ok(Self(RigidTransform::new(UnitQuaternion::from_quaternion(q), Vector3::from(translation))))
    }

    #[staticmethod]
    fn identity() -> Self {
        Self(RigidTransform::identity())
    }

    #[staticmethod]
    #[pyo3(signature = (rotvec, translation=[0.0; 3]))]
    fn from_rotation_vector(rotvec: [f64; 3], translation: [f64; 3]) -> Self {
        Self(RigidTransform::from_rotation_vector(Vector3::from(rotvec), Vector3::from(translation)))
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        self.0.translation.into()
    }

    #[getter]
    fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = self.0.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    /// Homogeneous 4x4 matrix as nested lists, row major.
    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = self.0.matrix();
        (0..4).map(|r| (0..4).map(|c| m[(r, c)]).collect()).collect()
    }

    fn apply(&self, point: [f64; 3]) -> [f64; 3] {
        self.0.apply(&Vector3::from(point)).into()
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    fn __mul__(&self, other: &PyTransform) -> Self {
        Self(self.0.compose(&other.0))
    }

    fn translation_error(&self, other: &PyTransform) -> f64 {
        self.0.translation_error(&other.0)
    }

    fn rotation_error_deg(&self, other: &PyTransform) -> f64 {
        self.0.rotation_error(&other.0).to_degrees()
    }

    fn __repr__(&self) -> String {
        format!("Transform(translation={:?}, quaternion_xyzw={:?})", self.translation(), self.quaternion_xyzw())
    }
}

#[pyclass(name = "Camera", module = "lidarcam", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyCamera(pub CameraModel);

#[pymethods]
impl PyCamera {
    #[staticmethod]
    #[pyo3(signature = (fx, fy, cx, cy, width, height, distortion=None))]
    fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32, distortion: Option<[f64; 5]>) -> PyResult<Self> {
        let mut cam = PinholeCamera::new(fx, fy, cx, cy, width, height).map_err(to_py)?;
        if let Some(d) = distortion {
            cam = cam.with_distortion(d);
        }
        Ok(Self(cam.into()))
    }

    #[staticmethod]
    fn equirectangular(width: u32, height: u32) -> PyResult<Self> {
        Ok(Self(EquirectCamera::new(width, height).map_err(to_py)?.into()))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(CameraModel::load_json(path).map_err(to_py)?))
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height()
    }

    #[getter]
    fn is_equirectangular(&self) -> bool {
        self.0.is_equirectangular()
    }

    /// Pixel of a camera-frame point, or None when it cannot be imaged.
    fn project(&self, point: [f64; 3]) -> Option<(f64, f64)> {
        self.0.project(&Vector3::from(point)).map(|p| (p.x, p.y))
    }

    /// Unit bearing through a pixel.
    fn unproject(&self, u: f64, v: f64) -> PyResult<[f64; 3]> {
        Ok(self.0.unproject(&Point2::new(u, v)).map_err(to_py)?.into_inner().into())
    }
}

#[pyclass(name = "PointCloud", module = "lidarcam", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyPointCloud(pub PointCloud);

#[pymethods]
impl PyPointCloud {
    #[new]
    fn new(points: Vec<[f64; 3]>, intensities: Vec<f64>) -> PyResult<Self> {
        let pts = points.into_iter().map(Vector3::from).collect();
        Ok(Self(PointCloud::new(pts, intensities).map_err(to_py)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(load_cloud(path).map_err(to_py)?.0))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_cloud(path, &self.0).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn points(&self) -> Vec<[f64; 3]> {
        self.0.points.iter().map(|&p| p.into()).collect()
    }

    fn intensities(&self) -> Vec<f64> {
        self.0.intensities.clone()
    }

    /// Copy with histogram-equalized intensities.
    fn equalized(&self) -> Self {
        Self(self.0.clone().equalized())
    }
}

#[pyclass(name = "Image", module = "lidarcam", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyImage(pub GrayImage);

#[pymethods]
impl PyImage {
    /// Loads a PNG as grayscale in [0, 1], histogram-equalized.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(GrayImage::load_png(path).map_err(to_py)?.equalized()))
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height
    }

    fn get(&self, col: u32, row: u32) -> PyResult<f64> {
        if col >= self.0.width || row >= self.0.height {
            return Err(PyIndexError::new_err(format!("pixel ({col}, {row}) outside the image")));
        }
        Ok(self.0.get(col, row))
    }
}

/// Normalized information distance of a square joint histogram (rows: LiDAR bins).
#[pyfunction]
fn nid(joint: Vec<Vec<u64>>) -> PyResult<f64> {
    let bins = joint.len();
    if joint.iter().any(|r| r.len() != bins) {
        return Err(PyValueError::new_err("joint histogram must be square"));
    }
    let h = IntensityHistograms::from_joint(bins, joint.concat()).map_err(to_py)?;
    lidarcam_core::nid::nid(&h).map_err(to_py)
}

#[pyfunction]
fn entropy(counts: Vec<u64>) -> PyResult<f64> {
    lidarcam_core::nid::entropy(&counts).map_err(to_py)
}

/// Field of view in degrees and whether the subsampling fallback was used.
#[pyfunction]
fn estimate_fov(cloud: &PyPointCloud) -> PyResult<(f64, bool)> {
    let e = lidarcam_core::virtual_camera::estimate_fov(&cloud.0).map_err(to_py)?;
    Ok((e.degrees, e.fallback))
}

/// RANSAC rotation plus robust refinement from 2D-3D matches.
///
/// Returns the transform and the RANSAC inlier mask.
#[pyfunction]
#[pyo3(signature = (pixels, points, camera, iterations=10_000, threshold=None, seed=0))]
fn initial_guess(
    py: Python<'_>,
    pixels: Vec<[f64; 2]>,
    points: Vec<[f64; 3]>,
    camera: &PyCamera,
    iterations: usize,
    threshold: Option<f64>,
    seed: u64,
) -> PyResult<(PyTransform, Vec<bool>)> {
    if pixels.len() != points.len() {
        return Err(PyValueError::new_err("pixels and points differ in length"));
    }
    let set = CorrespondenceSet {
        pairs: pixels
            .iter()
            .zip(&points)
            .map(|(px, p)| Correspondence {
                pixel: Point2::from(*px),
                point: Vector3::from(*p),
                confidence: 1.0,
            })
            .collect(),
        ..Default::default()
    };
    let cam = camera.0.clone();
    let mut ransac = RansacParams::for_camera(&cam, seed);
    ransac.iterations = iterations;
    if let Some(t) = threshold {
        ransac.threshold = t;
    }
    let g = py
        .detach(|| estimate_initial_guess(&set, &cam, &ransac, &RefineParams::for_camera(&cam)))
        .map_err(to_py)?;
    Ok((PyTransform(g.transform), g.ransac.inliers))
}

/// NID fine registration over one or more cloud/image pairs.
///
/// Returns the refined transform and its summed NID.
#[pyfunction]
#[pyo3(signature = (clouds, images, camera, initial, bins=16))]
fn calibrate(
    py: Python<'_>,
    clouds: Vec<PyPointCloud>,
    images: Vec<PyImage>,
    camera: &PyCamera,
    initial: &PyTransform,
    bins: usize,
) -> PyResult<(PyTransform, f64)> {
    if clouds.len() != images.len() {
        return Err(PyValueError::new_err("need one image per cloud"));
    }
    let pairs: Vec<DataPair> = clouds
        .into_iter()
        .zip(images)
        .map(|(c, i)| DataPair {
            cloud: c.0.equalized(),
            image: i.0,
        })
        .collect();
    let cam = camera.0.clone();
    let params = FineParams {
        bins,
        ..FineParams::default()
    };
    let t0 = initial.0;
    let r = py.detach(|| calibrate_fine(&pairs, &cam, &t0, &params)).map_err(to_py)?;
    Ok((PyTransform(r.transform), r.nid))
}

/// Runs every stage for a configuration file; returns the transform and final NID.
#[pyfunction]
fn run(py: Python<'_>, config: PathBuf) -> PyResult<(PyTransform, f64)> {
    let cfg = PipelineConfig::load(config).map_err(to_py)?;
    let r = py.detach(|| run_pipeline(&cfg)).map_err(to_py)?;
    Ok((PyTransform((&r.camera_from_lidar).into()), r.final_nid))
}

/// Writes a synthetic dataset; returns the config path and the true transform.
#[pyfunction]
#[pyo3(signature = (directory, camera="pinhole", points=150_000, seed=1))]
fn synthesize(py: Python<'_>, directory: PathBuf, camera: &str, points: usize, seed: u64) -> PyResult<(PathBuf, PyTransform)> {
    let camera = match camera {
        "pinhole" => FixtureCamera::Pinhole,
        "equirectangular" => FixtureCamera::Equirectangular,
        other => return Err(PyValueError::new_err(format!("unknown camera `{other}`"))),
    };
    let spec = FixtureSpec {
        camera,
        points,
        seed,
        ..FixtureSpec::default()
    };
    let fx = py.detach(|| write_fixture(&directory, &spec)).map_err(to_py)?;
    Ok((fx.config_path, PyTransform(fx.truth)))
}

#[pymodule]
pub fn lidarcam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTransform>()?;
    m.add_class::<PyCamera>()?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyImage>()?;
    m.add("CalibrationError", m.py().get_type::<CalibrationError>())?;
    m.add_function(wrap_pyfunction!(nid, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_fov, m)?)?;
    m.add_function(wrap_pyfunction!(initial_guess, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
