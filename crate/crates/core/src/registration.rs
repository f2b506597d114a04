//! Fine registration: Nelder-Mead minimization of the summed NID over all
//! data pairs, alternated with hidden point removal.

use nalgebra::{DVector, Vector3, Vector6};

use crate::cloud::{GrayImage, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{CameraModel, RigidTransform};
use crate::nelder_mead::{nelder_mead, NelderMeadParams};
use crate::nid::{build_histograms, hidden_point_removal, nid, DEFAULT_BINS};

#[derive(Debug, Clone, PartialEq)]
pub struct FineParams {
    pub bins: usize,
    pub nelder_mead: NelderMeadParams,
    pub max_outer_iterations: usize,
    pub translation_tolerance: f64,
    pub rotation_tolerance_deg: f64,
}

impl Default for FineParams {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            nelder_mead: NelderMeadParams::pose(),
            max_outer_iterations: 10,
            translation_tolerance: 1e-4,
            rotation_tolerance_deg: 0.005,
        }
    }
}

/// One LiDAR cloud and the camera image captured with it.
#[derive(Debug, Clone)]
pub struct DataPair {
    pub cloud: PointCloud,
    pub image: GrayImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineReport {
    pub transform: RigidTransform,
    /// Summed NID at `transform` (pairs without overlap count as 1).
    pub nid: f64,
    pub initial_nid: f64,
    pub pairs_used: usize,
    pub outer_iterations: usize,
    pub converged: bool,
}

fn pair_nid(pair: &DataPair, visible: &[usize], cam: &CameraModel, t: &RigidTransform, bins: usize) -> Result<f64> {
    nid(&build_histograms(&pair.cloud, visible, &pair.image, cam, t, bins)?)
}

/// Summed NID with hidden point removal at `t` itself.
pub fn summed_nid(pairs: &[DataPair], cam: &CameraModel, t: &RigidTransform, bins: usize) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut used = 0;
    for p in pairs {
        let vis = hidden_point_removal(&p.cloud, cam, t);
        match pair_nid(p, &vis, cam, t, bins) {
            Ok(v) => {
                total += v;
                used += 1;
            }
            Err(Error::NoOverlap) => total += 1.0,
            Err(e) => return Err(e),
        }
    }
    Ok((total, used))
}

/// Refines `init` by alternating hidden point removal with Nelder-Mead over
/// a left-applied `[translation, rotation vector]` perturbation. The result
/// never has a higher summed NID than `init`.
pub fn calibrate_fine(pairs: &[DataPair], cam: &CameraModel, init: &RigidTransform, params: &FineParams) -> Result<FineReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("fine registration needs at least one data pair".into()));
    }
    let (initial_nid, used0) = summed_nid(pairs, cam, init, params.bins)?;
    if used0 == 0 {
        return Err(Error::CalibrationFailed("no data pair overlaps the camera image at the initial transform".into()));
    }
    let mut best = (initial_nid, *init, used0);
    let mut t = *init;
    let mut outer = 0;
    let mut converged = false;
    while outer < params.max_outer_iterations {
        outer += 1;
        let mut active = Vec::new();
        for (k, p) in pairs.iter().enumerate() {
            let vis = hidden_point_removal(&p.cloud, cam, &t);
            match pair_nid(p, &vis, cam, &t, params.bins) {
                Ok(_) => active.push((k, vis)),
                Err(Error::NoOverlap) => log::warn!("pair {k} has no overlap; skipped for this iteration"),
                Err(e) => return Err(e),
            }
        }
        if active.is_empty() {
            return Err(Error::CalibrationFailed("no data pair overlaps the camera image".into()));
        }
        let objective = |x: &DVector<f64>| -> f64 {
            let d = Vector6::from_iterator(x.iter().copied());
            let cand = t.perturbed_left(&d);
            active
                .iter()
                .map(|(k, vis)| pair_nid(&pairs[*k], vis, cam, &cand, params.bins).unwrap_or(1.0))
                .sum()
        };
        let res = nelder_mead(objective, &DVector::zeros(6), &params.nelder_mead)?;
        let delta = Vector6::from_iterator(res.x.iter().copied());
        t = t.perturbed_left(&delta);
        let (value, used) = summed_nid(pairs, cam, &t, params.bins)?;
        if value < best.0 {
            best = (value, t, used);
        }
        let dt = Vector3::new(delta[0], delta[1], delta[2]).norm();
        let dr = Vector3::new(delta[3], delta[4], delta[5]).norm().to_degrees();
        log::debug!("outer {outer}: nid {value:.6}, update {dt:.2e} m / {dr:.2e} deg, {} evaluations", res.evaluations);
        if dt < params.translation_tolerance && dr < params.rotation_tolerance_deg {
            converged = true;
            break;
        }
    }
    Ok(FineReport {
        transform: best.1,
        nid: best.0,
        initial_nid,
        pairs_used: best.2,
        outer_iterations: outer,
        converged,
    })
}
