//! Point cloud and image containers, PLY/PNG I/O, accumulation and
//! histogram equalization.

mod equalize;
mod image_io;
mod ply;

pub use equalize::histogram_equalize;
pub use image_io::GrayImage;
pub use ply::{load_cloud, save_cloud, LoadReport};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// LiDAR points with per-point intensity and optional normalized timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub intensities: Vec<f64>,
    pub times: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, intensities: Vec<f64>) -> Result<Self> {
        if points.len() != intensities.len() {
            return Err(Error::Argument(format!(
                "{} points but {} intensities",
                points.len(),
                intensities.len()
            )));
        }
        Ok(Self {
            points,
            intensities,
            times: None,
        })
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self> {
        if times.len() != self.points.len() {
            return Err(Error::Argument(format!(
                "{} points but {} timestamps",
                self.points.len(),
                times.len()
            )));
        }
        self.times = Some(times);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Replaces intensities with their histogram-equalized values.
    pub fn equalized(mut self) -> Self {
        if !self.intensities.is_empty() {
            self.intensities = histogram_equalize(&self.intensities);
        }
        self
    }
}

/// Concatenates scans of a static sensor. Timestamps are dropped and
/// intensities are kept as given.
pub fn accumulate_static(scans: &[PointCloud]) -> Result<PointCloud> {
    if scans.is_empty() {
        return Err(Error::Argument("accumulate_static needs at least one scan".into()));
    }
    let total = scans.iter().map(PointCloud::len).sum();
    let mut out = PointCloud {
        points: Vec::with_capacity(total),
        intensities: Vec::with_capacity(total),
        times: None,
    };
    for s in scans {
        out.points.extend_from_slice(&s.points);
        out.intensities.extend_from_slice(&s.intensities);
    }
    Ok(out)
}
