//! Dynamic point integration for spinning LiDARs: continuous-time ICP
//! against a linear-iVox map, deskewing, and accumulation in the first
//! scan's frame.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::cloud::{accumulate_static, PointCloud};
use crate::error::{Error, Result};
use crate::geom::RigidTransform;
use crate::ivox::{IvoxConfig, LinearIVox};

type Mat12 = SMatrix<f64, 12, 12>;
type Vec12 = SVector<f64, 12>;

/// Sensor poses at the beginning and the end of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScanPosePair {
    pub begin: RigidTransform,
    pub end: RigidTransform,
}

impl ScanPosePair {
    pub fn new(begin: RigidTransform, end: RigidTransform) -> Self {
        Self { begin, end }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Pose at normalized sweep time `s ∈ [0, 1]`.
    pub fn interpolate(&self, s: f64) -> Result<RigidTransform> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Argument(format!("interpolation time {s} outside [0, 1]")));
        }
        Ok(self.begin.interpolate(&self.end, s))
    }

    /// Motion-compensates a scan into the pair's reference frame.
    pub fn deskew(&self, scan: &PointCloud) -> Vec<Vector3<f64>> {
        match &scan.times {
            Some(times) => scan
                .points
                .iter()
                .zip(times)
                .map(|(p, &t)| self.begin.interpolate(&self.end, t.clamp(0.0, 1.0)).apply(p))
                .collect(),
            None => scan.points.iter().map(|p| self.begin.apply(p)).collect(),
        }
    }

    fn perturbed(&self, delta: &Vec12) -> ScanPosePair {
        ScanPosePair {
            begin: self.begin.perturbed_left(&delta.fixed_rows::<6>(0).into_owned()),
            end: self.end.perturbed_left(&delta.fixed_rows::<6>(6).into_owned()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtIcpConfig {
    pub max_iterations: usize,
    /// Neighbors used for each plane fit.
    pub plane_neighbors: usize,
    /// A neighborhood is rejected when λ_min / λ_mid exceeds this ratio.
    pub planarity_threshold: f64,
    /// Nearest map neighbor must be within this distance (m).
    pub max_correspondence_distance: f64,
    pub min_residuals: usize,
    /// Stop when the norm of the 12-vector update drops below this.
    pub update_tolerance: f64,
    /// Weight pulling the end pose toward the begin pose when timestamps are degenerate.
    pub degenerate_time_prior: f64,
    /// Scale (m) of the Cauchy kernel applied to point-to-plane residuals.
    pub robust_scale: f64,
}

impl Default for CtIcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            plane_neighbors: 10,
            planarity_threshold: 0.1,
            max_correspondence_distance: 0.5,
            min_residuals: 20,
            update_tolerance: 1e-6,
            degenerate_time_prior: 1e-3,
            robust_scale: 0.05,
        }
    }
}

/// One point-to-plane constraint: scan point `point` at sweep time `time`
/// should lie on the plane `normal · x = normal · center`.
#[derive(Debug, Clone, Copy)]
struct PlaneMatch {
    point: Vector3<f64>,
    time: f64,
    normal: Vector3<f64>,
    center: Vector3<f64>,
}

impl PlaneMatch {
    fn residual(&self, pair: &ScanPosePair) -> f64 {
        let w = pair.begin.interpolate(&pair.end, self.time).apply(&self.point);
        self.normal.dot(&(w - self.center))
    }
}

#[derive(Debug, Clone)]
pub struct CtIcpReport {
    pub pair: ScanPosePair,
    pub iterations: usize,
    pub residuals: usize,
    /// Cost before and after every accepted step, evaluated on the same associations.
    pub accepted_steps: Vec<(f64, f64)>,
}

fn fit_plane(neighbors: &[(f64, Vector3<f64>)], threshold: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let n = neighbors.len() as f64;
    let center = neighbors.iter().fold(Vector3::zeros(), |acc, (_, p)| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for (_, p) in neighbors {
        let d = p - center;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1) = (eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]]);
    if l1 <= 1e-12 || l0 > threshold * l1 {
        return None;
    }
    Some((eig.eigenvectors.column(order[0]).into_owned(), center))
}

fn pose_difference(pair: &ScanPosePair) -> SVector<f64, 6> {
    let rot = (pair.end.rotation * pair.begin.rotation.inverse()).scaled_axis();
    let t = pair.end.translation - pair.begin.translation;
    SVector::<f64, 6>::from_column_slice(&[t.x, t.y, t.z, rot.x, rot.y, rot.z])
}

/// Jointly estimates the begin and end poses of a sweep by minimizing
/// point-to-plane distances of the deskewed scan to the map.
pub fn ct_icp_align(scan: &PointCloud, map: &LinearIVox, init: ScanPosePair, cfg: &CtIcpConfig) -> Result<CtIcpReport> {
    let times = scan
        .times
        .as_ref()
        .ok_or_else(|| Error::Argument("CT-ICP requires per-point timestamps".into()))?;
    if map.is_empty() {
        return Err(Error::InsufficientOverlap {
            valid: 0,
            need: cfg.min_residuals,
        });
    }
    let (tmin, tmax) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let degenerate_time = !(tmax - tmin > 1e-9);
    let prior_w = cfg.degenerate_time_prior.sqrt();

    let mut pair = init;
    let mut lambda = 1e-4;
    let mut report = CtIcpReport {
        pair,
        iterations: 0,
        residuals: 0,
        accepted_steps: vec![],
    };

    for iter in 0..cfg.max_iterations {
        report.iterations = iter + 1;
        let matches: Vec<PlaneMatch> = scan
            .points
            .par_iter()
            .zip(times.par_iter())
            .filter_map(|(p, &t)| {
                let t = t.clamp(0.0, 1.0);
                let w = pair.begin.interpolate(&pair.end, t).apply(p);
                let nn = map.nearest(&w, cfg.plane_neighbors);
                if nn.len() < cfg.plane_neighbors.min(5) || nn[0].0 > cfg.max_correspondence_distance {
                    return None;
                }
                let (normal, center) = fit_plane(&nn, cfg.planarity_threshold)?;
                Some(PlaneMatch {
                    point: *p,
                    time: t,
                    normal,
                    center,
                })
            })
            .collect();
        report.residuals = matches.len();
        if matches.len() < cfg.min_residuals {
            return Err(Error::InsufficientOverlap {
                valid: matches.len(),
                need: cfg.min_residuals,
            });
        }

        let c2 = cfg.robust_scale * cfg.robust_scale;
        let cost_of = |pair: &ScanPosePair| -> f64 {
            let data: f64 = matches.iter().map(|m| c2 * (m.residual(pair).powi(2) / c2).ln_1p()).sum();
            if degenerate_time {
                data + cfg.degenerate_time_prior * pose_difference(pair).norm_squared()
            } else {
                data
            }
        };

        let rows: Vec<(Vec12, f64, f64)> = matches
            .par_iter()
            .map(|m| {
                let w = pair.begin.interpolate(&pair.end, m.time).apply(&m.point);
                let r = m.normal.dot(&(w - m.center));
                let wn = w.cross(&m.normal);
                let mut j = Vec12::zeros();
                for a in 0..3 {
                    j[a] = (1.0 - m.time) * m.normal[a];
                    j[3 + a] = (1.0 - m.time) * wn[a];
                    j[6 + a] = m.time * m.normal[a];
                    j[9 + a] = m.time * wn[a];
                }
                // IRLS weight of the Cauchy kernel
                (j, r, 1.0 / (1.0 + r * r / c2))
            })
            .collect();
        let mut h = Mat12::zeros();
        let mut g = Vec12::zeros();
        for (j, r, w) in &rows {
            h += j * j.transpose() * *w;
            g += j * (*r * *w);
        }
        if degenerate_time {
            let d = pose_difference(&pair);
            for a in 0..6 {
                let r = prior_w * d[a];
                h[(a, a)] += prior_w * prior_w;
                h[(6 + a, 6 + a)] += prior_w * prior_w;
                h[(a, 6 + a)] -= prior_w * prior_w;
                h[(6 + a, a)] -= prior_w * prior_w;
                g[a] -= prior_w * r;
                g[6 + a] += prior_w * r;
            }
        }

        let cost = cost_of(&pair);
        let mut step_norm = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..10 {
            let mut damped = h;
            for a in 0..12 {
                damped[(a, a)] += lambda * (h[(a, a)] + 1e-9);
            }
            let Some(delta) = damped.cholesky().map(|c| -c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = pair.perturbed(&delta);
            let new_cost = cost_of(&candidate);
            step_norm = delta.norm();
            if new_cost <= cost {
                report.accepted_steps.push((cost, new_cost));
                pair = candidate;
                lambda = (lambda * 0.1).max(1e-10);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            if step_norm < cfg.update_tolerance {
                break;
            }
        }
        if !accepted || step_norm < cfg.update_tolerance {
            break;
        }
    }
    report.pair = pair;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicConfig {
    pub ivox: IvoxConfig,
    pub icp: CtIcpConfig,
    /// Alternations between re-deskewing the first scan and re-aligning the second.
    pub first_scan_passes: usize,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self {
            ivox: IvoxConfig::default(),
            icp: CtIcpConfig::default(),
            first_scan_passes: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynamicResult {
    pub cloud: PointCloud,
    /// Estimated pose pair per scan, in the first scan's frame. Empty when the
    /// static fallback was used.
    pub poses: Vec<ScanPosePair>,
}

fn constant_velocity(prev: &ScanPosePair) -> ScanPosePair {
    let motion = prev.end.compose(&prev.begin.inverse());
    ScanPosePair::new(prev.end, motion.compose(&prev.end))
}

/// Densifies a sequence of timestamped sweeps into the frame of the first
/// sweep. Falls back to static accumulation when any scan lacks timestamps.
///
/// The first sweep seeds the map. Since consecutive sweeps are contiguous in
/// time, the first sweep's end pose equals the second sweep's begin pose; the
/// first sweep is re-deskewed with that pose once the second is aligned.
pub fn integrate_dynamic(scans: &[PointCloud], cfg: &DynamicConfig) -> Result<DynamicResult> {
    if scans.is_empty() {
        return Err(Error::Argument("dynamic integration needs at least one scan".into()));
    }
    if scans.iter().any(|s| s.times.is_none()) {
        log::warn!("scans without timestamps: falling back to static accumulation");
        return Ok(DynamicResult {
            cloud: accumulate_static(scans)?,
            poses: vec![],
        });
    }
    let mut poses = vec![ScanPosePair::identity()];
    let mut map = LinearIVox::new(cfg.ivox);
    map.insert(&scans[0].points);

    for (k, scan) in scans.iter().enumerate().skip(1) {
        let init = constant_velocity(&poses[k - 1]);
        let align = |map: &LinearIVox, init| {
            ct_icp_align(scan, map, init, &cfg.icp).map_err(|e| Error::Scan {
                index: k,
                source: Box::new(e),
            })
        };
        let mut pair = align(&map, init)?.pair;
        if k == 1 {
            for _ in 0..cfg.first_scan_passes {
                poses[0].end = pair.begin;
                map = LinearIVox::new(cfg.ivox);
                map.insert(&poses[0].deskew(&scans[0]));
                pair = align(&map, pair)?.pair;
            }
            poses[0].end = pair.begin;
            map = LinearIVox::new(cfg.ivox);
            map.insert(&poses[0].deskew(&scans[0]));
        }
        map.insert(&pair.deskew(scan));
        poses.push(pair);
        log::debug!("scan {k}: aligned, map holds {} points", map.len());
    }

    let total = scans.iter().map(PointCloud::len).sum();
    let mut points = Vec::with_capacity(total);
    let mut intensities = Vec::with_capacity(total);
    for (scan, pair) in scans.iter().zip(&poses) {
        points.extend(pair.deskew(scan));
        intensities.extend_from_slice(&scan.intensities);
    }
    Ok(DynamicResult {
        cloud: PointCloud::new(points, intensities)?,
        poses,
    })
}
