use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{Matrix2, Point2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points with camera-frame depth at or below this value are behind the camera.
pub const BEHIND_CAMERA_Z: f64 = 1e-6;

const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_TOL: f64 = 1e-10;

/// Unit-norm direction vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing(Vector3<f64>);

impl Bearing {
    /// Normalizes `v`. Returns `None` for a zero (or non-finite) vector.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        (n > 0.0 && n.is_finite()).then(|| Bearing(v / n))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }
}

impl std::ops::Deref for Bearing {
    type Target = Vector3<f64>;
    fn deref(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Pinhole camera with plumb-bob (Brown-Conrady) distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "pinhole camera requires positive focal lengths and size, got fx={fx} fy={fy} {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            width,
            height,
        })
    }

    /// Sets distortion in OpenCV order `[k1, k2, p1, p2, k3]`.
    pub fn with_distortion(mut self, d: [f64; 5]) -> Self {
        self.k1 = d[0];
        self.k2 = d[1];
        self.p1 = d[2];
        self.p2 = d[3];
        self.k3 = d[4];
        self
    }

    pub fn distortion(&self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    fn distort_jacobian(&self, x: f64, y: f64) -> Matrix2<f64> {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        // d(radial)/d(r2)
        let dradial = self.k1 + r2 * (2.0 * self.k2 + 3.0 * r2 * self.k3);
        let dxx = radial + 2.0 * x * x * dradial + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
        let dxy = 2.0 * x * y * dradial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dyx = 2.0 * x * y * dradial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dyy = radial + 2.0 * y * y * dradial + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
        Matrix2::new(dxx, dxy, dyx, dyy)
    }

    /// Whether the radial distortion polynomial is still monotone at radius² `r2`.
    /// Beyond that radius the model folds back and projections are meaningless.
    fn radially_monotone(&self, r2: f64) -> bool {
        1.0 + r2 * (3.0 * self.k1 + r2 * (5.0 * self.k2 + 7.0 * r2 * self.k3)) > 0.0
    }

    /// Projects a camera-frame point. `None` means the point is behind the
    /// camera (z ≤ 1e-6) or outside the valid range of the distortion model.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Point2<f64>> {
        if p.z <= BEHIND_CAMERA_Z {
            return None;
        }
        let x = p.x / p.z;
        let y = p.y / p.z;
        if !self.radially_monotone(x * x + y * y) {
            return None;
        }
        let (xd, yd) = self.distort(x, y);
        Some(Point2::new(self.fx * xd + self.cx, self.fy * yd + self.cy))
    }

    /// Inverse projection. Distortion is inverted with Newton iterations on
    /// the normalized image plane.
    pub fn unproject(&self, px: &Point2<f64>) -> Result<Bearing> {
        let xd = (px.x - self.cx) / self.fx;
        let yd = (px.y - self.cy) / self.fy;
        let target = Vector2::new(xd, yd);
        let mut x = target;
        let mut converged = false;
        for _ in 0..UNDISTORT_MAX_ITERS {
            let (dx, dy) = self.distort(x.x, x.y);
            let residual = Vector2::new(dx, dy) - target;
            let Some(inv) = self.distort_jacobian(x.x, x.y).try_inverse() else {
                break;
            };
            let step = inv * residual;
            x -= step;
            if !x.iter().all(|v| v.is_finite()) {
                break;
            }
            if step.norm() < UNDISTORT_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { u: px.x, v: px.y });
        }
        Ok(Bearing::new(Vector3::new(x.x, x.y, 1.0)).expect("z = 1 is never zero"))
    }
}

/// Full-sphere longitude/latitude camera. Axis convention: z forward, x right,
/// y down. Longitude grows from +z toward +x; latitude is positive upward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquirectCamera {
    pub width: u32,
    pub height: u32,
}

impl EquirectCamera {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if height == 0 || width != 2 * height {
            return Err(Error::Argument(format!(
                "equirectangular camera requires width = 2 × height, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Point2<f64>> {
        let d = Bearing::new(*p).ok_or_else(|| Error::Domain("cannot project a zero-norm point".into()))?;
        // + 0.0 folds signed zeros so the poles map to λ = 0
        let lon = (d.x + 0.0).atan2(d.z + 0.0);
        let lat = (-d.y).clamp(-1.0, 1.0).asin();
        let w = self.width as f64;
        let h = self.height as f64;
        let mut u = (lon / (2.0 * PI) + 0.5) * w;
        // λ = π lands on the seam, which belongs to u = 0.
        if u >= w {
            u -= w;
        }
        let v = (0.5 - lat / PI) * h;
        Ok(Point2::new(u, v.min(h - f64::EPSILON * h)))
    }

    pub fn unproject(&self, px: &Point2<f64>) -> Bearing {
        let lon = (px.x / self.width as f64 - 0.5) * 2.0 * PI;
        let lat = ((0.5 - px.y / self.height as f64) * PI).clamp(-FRAC_PI_2, FRAC_PI_2);
        let (sl, cl) = lon.sin_cos();
        let (sp, cp) = lat.sin_cos();
        Bearing(Vector3::new(cp * sl, -sp, cp * cl))
    }
}

/// Camera models supported by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CameraModel {
    Pinhole(PinholeCamera),
    Equirectangular(EquirectCamera),
}

impl From<PinholeCamera> for CameraModel {
    fn from(c: PinholeCamera) -> Self {
        CameraModel::Pinhole(c)
    }
}

impl From<EquirectCamera> for CameraModel {
    fn from(c: EquirectCamera) -> Self {
        CameraModel::Equirectangular(c)
    }
}

impl CameraModel {
    pub fn width(&self) -> u32 {
        match self {
            CameraModel::Pinhole(c) => c.width,
            CameraModel::Equirectangular(c) => c.width,
        }
    }

    pub fn height(&self) -> u32 {
        match self {
            CameraModel::Pinhole(c) => c.height,
            CameraModel::Equirectangular(c) => c.height,
        }
    }

    pub fn is_equirectangular(&self) -> bool {
        matches!(self, CameraModel::Equirectangular(_))
    }

    /// Projects a camera-frame point; `None` when the point cannot be imaged
    /// (behind a pinhole camera, or at the origin).
    pub fn project(&self, p: &Vector3<f64>) -> Option<Point2<f64>> {
        match self {
            CameraModel::Pinhole(c) => c.project(p),
            CameraModel::Equirectangular(c) => c.project(p).ok(),
        }
    }

    pub fn unproject(&self, px: &Point2<f64>) -> Result<Bearing> {
        match self {
            CameraModel::Pinhole(c) => c.unproject(px),
            CameraModel::Equirectangular(c) => Ok(c.unproject(px)),
        }
    }

    /// Nearest pixel `(col, row)` for a continuous image coordinate, or `None`
    /// if it falls outside the image. Pinhole pixel centers sit on integer
    /// coordinates; equirectangular cells span `[i, i+1)` and wrap in longitude.
    pub fn pixel_of(&self, px: &Point2<f64>) -> Option<(u32, u32)> {
        if !(px.x.is_finite() && px.y.is_finite()) {
            return None;
        }
        let (w, h) = (self.width() as f64, self.height() as f64);
        match self {
            CameraModel::Pinhole(_) => {
                let u = (px.x + 0.5).floor();
                let v = (px.y + 0.5).floor();
                (u >= 0.0 && v >= 0.0 && u < w && v < h).then(|| (u as u32, v as u32))
            }
            CameraModel::Equirectangular(_) => {
                let u = px.x.floor().rem_euclid(w);
                let v = px.y.floor().clamp(0.0, h - 1.0);
                Some((u as u32, v as u32))
            }
        }
    }

    /// Continuous coordinate of a pixel center.
    pub fn pixel_center(&self, col: u32, row: u32) -> Point2<f64> {
        match self {
            CameraModel::Pinhole(_) => Point2::new(col as f64, row as f64),
            CameraModel::Equirectangular(_) => Point2::new(col as f64 + 0.5, row as f64 + 0.5),
        }
    }

    pub fn contains(&self, px: &Point2<f64>) -> bool {
        self.pixel_of(px).is_some()
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CameraFile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        file.try_into()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&CameraFile::from(*self))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// On-disk camera intrinsics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CameraFile {
    pub model: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub intrinsics: Vec<f64>,
    #[serde(default)]
    pub distortion: Vec<f64>,
}

impl TryFrom<CameraFile> for CameraModel {
    type Error = Error;

    fn try_from(f: CameraFile) -> Result<Self> {
        match f.model.as_str() {
            "pinhole" => {
                let [fx, fy, cx, cy] = f.intrinsics[..] else {
                    return Err(Error::Schema(format!(
                        "pinhole intrinsics must be [fx, fy, cx, cy], got {} values",
                        f.intrinsics.len()
                    )));
                };
                let mut d = [0.0; 5];
                if f.distortion.len() > 5 {
                    return Err(Error::Schema("distortion must have at most 5 coefficients".into()));
                }
                d[..f.distortion.len()].copy_from_slice(&f.distortion);
                Ok(PinholeCamera::new(fx, fy, cx, cy, f.width, f.height)?
                    .with_distortion(d)
                    .into())
            }
            "equirectangular" => Ok(EquirectCamera::new(f.width, f.height)?.into()),
            other => Err(Error::Schema(format!("unknown camera model `{other}`"))),
        }
    }
}

impl From<CameraModel> for CameraFile {
    fn from(c: CameraModel) -> Self {
        match c {
            CameraModel::Pinhole(p) => CameraFile {
                model: "pinhole".into(),
                width: p.width,
                height: p.height,
                intrinsics: vec![p.fx, p.fy, p.cx, p.cy],
                distortion: p.distortion().to_vec(),
            },
            CameraModel::Equirectangular(e) => CameraFile {
                model: "equirectangular".into(),
                width: e.width,
                height: e.height,
                intrinsics: vec![],
                distortion: vec![],
            },
        }
    }
}
