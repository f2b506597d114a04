//! Diagnostic renderings: projected LiDAR intensities over the camera image
//! and correspondence lines colored by RANSAC verdict.

use image::{Rgb, RgbImage};
use nalgebra::Point2;

use crate::cloud::{GrayImage, PointCloud};
use crate::geom::{CameraModel, RigidTransform};
use crate::nid::hidden_point_removal;

pub const INLIER_COLOR: Rgb<u8> = Rgb([0, 255, 0]);
pub const OUTLIER_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn gray_to_rgb(image: &GrayImage) -> RgbImage {
    RgbImage::from_fn(image.width, image.height, |c, r| {
        let g = to_u8(image.get(c, r));
        Rgb([g, g, g])
    })
}

/// Blue → cyan → yellow → red ramp over `[0, 1]`.
pub fn colormap(v: f64) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0);
    let stops = [(0.0, [0.0, 0.0, 1.0]), (1.0 / 3.0, [0.0, 1.0, 1.0]), (2.0 / 3.0, [1.0, 1.0, 0.0]), (1.0, [1.0, 0.0, 0.0])];
    let k = stops.windows(2).position(|w| v <= w[1].0).unwrap_or(2);
    let (a, b) = (stops[k], stops[k + 1]);
    let s = (v - a.0) / (b.0 - a.0);
    Rgb(std::array::from_fn(|i| to_u8(a.1[i] + s * (b.1[i] - a.1[i]))))
}

/// Pixel of each visible point that lands inside the image.
fn visible_pixels(cloud: &PointCloud, cam: &CameraModel, t: &RigidTransform) -> Vec<(usize, u32, u32)> {
    hidden_point_removal(cloud, cam, t)
        .into_iter()
        .filter_map(|j| {
            let px = cam.project(&t.apply(&cloud.points[j]))?;
            let (c, r) = cam.pixel_of(&px)?;
            Some((j, c, r))
        })
        .collect()
}

/// Grayscale camera image with each visible LiDAR point drawn as a
/// colormapped dot.
pub fn render_overlay(cloud: &PointCloud, image: &GrayImage, cam: &CameraModel, camera_from_lidar: &RigidTransform) -> RgbImage {
    let mut out = gray_to_rgb(image);
    for (j, c, r) in visible_pixels(cloud, cam, camera_from_lidar) {
        if c < out.width() && r < out.height() {
            out.put_pixel(c, r, colormap(cloud.intensities[j]));
        }
    }
    out
}

/// Mean absolute difference between visible point intensities and the
/// pixels they land on; `None` if no point is visible.
pub fn intensity_disagreement(cloud: &PointCloud, image: &GrayImage, cam: &CameraModel, camera_from_lidar: &RigidTransform) -> Option<f64> {
    let px = visible_pixels(cloud, cam, camera_from_lidar);
    if px.is_empty() {
        return None;
    }
    let sum: f64 = px.iter().map(|&(j, c, r)| (cloud.intensities[j] - image.get(c, r)).abs()).sum();
    Some(sum / px.len() as f64)
}

/// Integer points of the segment from `a` to `b` (Bresenham).
pub fn line_pixels(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// A match drawn from the observed camera pixel to where the estimate
/// projects its LiDAR point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchLine {
    pub observed: Point2<f64>,
    pub projected: Point2<f64>,
    pub inlier: bool,
}

/// Draws match lines over the grayscale image: inliers green, outliers red.
pub fn render_matches(image: &GrayImage, lines: &[MatchLine]) -> RgbImage {
    let mut out = gray_to_rgb(image);
    let (w, h) = (out.width() as i64, out.height() as i64);
    let round = |p: &Point2<f64>| (p.x.round().clamp(-1e6, 1e6) as i64, p.y.round().clamp(-1e6, 1e6) as i64);
    // outliers first so inliers stay visible where lines cross
    let mut ordered: Vec<&MatchLine> = lines.iter().collect();
    ordered.sort_by_key(|l| l.inlier);
    for l in ordered {
        let color = if l.inlier { INLIER_COLOR } else { OUTLIER_COLOR };
        for (x, y) in line_pixels(round(&l.observed), round(&l.projected)) {
            if (0..w).contains(&x) && (0..h).contains(&y) {
                out.put_pixel(x as u32, y as u32, color);
            }
        }
    }
    out
}

pub fn encode_png(image: &RgbImage) -> crate::Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}
