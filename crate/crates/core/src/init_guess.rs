//! Initial extrinsic estimate from 2D-3D correspondences: rotation-only
//! RANSAC over bearing pairs followed by robust reprojection refinement.

use nalgebra::{Matrix3, Matrix6, Rotation3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geom::{angle_between, Bearing, CameraModel, RigidTransform};

/// Smallest angle between the two bearings of a minimal sample.
pub const MIN_SAMPLE_ANGLE: f64 = 1e-4;

/// Least-squares rotation `R` minimizing `Σ‖c_i − R·l_i‖²` over two bearing
/// pairs (Umeyama with a reflection guard).
pub fn rotation_from_two(c0: &Bearing, c1: &Bearing, l0: &Bearing, l1: &Bearing) -> Result<UnitQuaternion<f64>> {
    if angle_between(l0, l1) < MIN_SAMPLE_ANGLE || angle_between(c0, c1) < MIN_SAMPLE_ANGLE {
        return Err(Error::DegenerateSample("bearings are nearly parallel".into()));
    }
    Ok(rotation_lsq(&[(**c0, **l0), (**c1, **l1)]))
}

fn rotation_lsq(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> UnitQuaternion<f64> {
    let m: Matrix3<f64> = pairs.iter().map(|(c, l)| c * l.transpose()).sum();
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let s = (u.determinant() * v_t.determinant()).signum();
    // the reflection guard flips the direction of the smallest singular value
    let k = svd.singular_values.imin();
    let mut d = Vector3::repeat(1.0);
    d[k] = s;
    let r = u * Matrix3::from_diagonal(&d) * v_t;
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier threshold: pixels for pinhole cameras, radians of bearing angle
    /// for equirectangular ones.
    pub threshold: f64,
    pub seed: u64,
}

impl RansacParams {
    pub fn for_camera(cam: &CameraModel, seed: u64) -> Self {
        Self {
            iterations: 10_000,
            threshold: default_threshold(cam),
            seed,
        }
    }
}

pub fn default_threshold(cam: &CameraModel) -> f64 {
    if cam.is_equirectangular() {
        0.02
    } else {
        20.0
    }
}

/// Inlier counts below this attach a low-confidence warning.
pub const MIN_CONFIDENT_INLIERS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub rotation: UnitQuaternion<f64>,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    /// Iteration that produced the winning hypothesis.
    pub iteration: usize,
    pub low_confidence: bool,
}

struct Bearings {
    camera: Vec<Option<Vector3<f64>>>,
    lidar: Vec<Option<Vector3<f64>>>,
}

fn bearings(corr: &CorrespondenceSet, cam: &CameraModel) -> Bearings {
    Bearings {
        camera: corr.pairs.iter().map(|c| cam.unproject(&c.pixel).ok().map(Bearing::into_inner)).collect(),
        lidar: corr.pairs.iter().map(|c| Bearing::new(c.point).map(Bearing::into_inner)).collect(),
    }
}

fn is_inlier(cam: &CameraModel, corr: &CorrespondenceSet, b: &Bearings, r: &UnitQuaternion<f64>, j: usize, alpha: f64) -> bool {
    match cam {
        CameraModel::Equirectangular(_) => match (b.camera[j], b.lidar[j]) {
            (Some(c), Some(l)) => angle_between(&c, &(r * l)) < alpha,
            _ => false,
        },
        CameraModel::Pinhole(_) => cam
            .project(&(r * corr.pairs[j].point))
            .is_some_and(|px| (px - corr.pairs[j].pixel).norm() < alpha),
    }
}

fn hypothesis(b: &Bearings, i: usize, j: usize) -> Option<UnitQuaternion<f64>> {
    let (c0, c1) = (Bearing::new(b.camera[i]?)?, Bearing::new(b.camera[j]?)?);
    let (l0, l1) = (Bearing::new(b.lidar[i]?)?, Bearing::new(b.lidar[j]?)?);
    rotation_from_two(&c0, &c1, &l0, &l1).ok()
}

/// Draws the two sample indices of iteration `iter`.
fn draw_pair(seed: u64, iter: usize, n: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iter as u64);
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Resampling attempts per iteration when a sample is degenerate.
const SAMPLE_ATTEMPTS: usize = 8;

fn ransac_with<S>(corr: &CorrespondenceSet, cam: &CameraModel, params: &RansacParams, sample: S) -> Result<RansacResult>
where
    S: Fn(usize, usize) -> (usize, usize) + Sync,
{
    let n = corr.len();
    if n < 2 {
        return Err(Error::InsufficientCorrespondences { have: n, need: 2 });
    }
    if params.iterations == 0 || params.threshold <= 0.0 {
        return Err(Error::Argument("RANSAC needs iterations >= 1 and a positive threshold".into()));
    }
    let b = bearings(corr, cam);
    let count = |r: &UnitQuaternion<f64>| (0..n).filter(|&j| is_inlier(cam, corr, &b, r, j, params.threshold)).count();
    let (best_count, best_iter, best_rot) = (0..params.iterations)
        .into_par_iter()
        .map(|it| {
            let rot = (0..SAMPLE_ATTEMPTS).find_map(|a| {
                let (i, j) = sample(it, a);
                hypothesis(&b, i, j)
            });
            match rot {
                Some(r) => (count(&r), it, r),
                None => (0, it, UnitQuaternion::identity()),
            }
        })
        .reduce(
            || (0, usize::MAX, UnitQuaternion::identity()),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    let inliers: Vec<bool> = (0..n).map(|j| is_inlier(cam, corr, &b, &best_rot, j, params.threshold)).collect();
    let low_confidence = best_count < MIN_CONFIDENT_INLIERS;
    if low_confidence {
        log::warn!("RANSAC found only {best_count} inliers; the initial guess is unreliable");
    }
    Ok(RansacResult {
        rotation: best_rot,
        inliers,
        inlier_count: best_count,
        iteration: best_iter,
        low_confidence,
    })
}

/// Rotation-only RANSAC. Each iteration draws its sample from a stream
/// derived from `(seed, iteration)`; ties go to the lowest iteration, so the
/// result does not depend on thread scheduling.
pub fn ransac_rotation(corr: &CorrespondenceSet, cam: &CameraModel, params: &RansacParams) -> Result<RansacResult> {
    let n = corr.len();
    let seed = params.seed;
    ransac_with(corr, cam, params, move |it, attempt| {
        draw_pair(seed, it * SAMPLE_ATTEMPTS + attempt, n)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    /// Cauchy kernel scale, in the same unit as the RANSAC threshold.
    pub kernel_scale: f64,
    pub max_iterations: usize,
    pub update_tolerance: f64,
}

impl RefineParams {
    pub fn for_camera(cam: &CameraModel) -> Self {
        Self {
            kernel_scale: default_threshold(cam),
            max_iterations: 100,
            update_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineReport {
    pub transform: RigidTransform,
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    /// LM gave up with the damping at its cap before the update converged.
    pub stalled: bool,
}

/// Squared residual assigned to points behind the camera.
const BEHIND_PENALTY: f64 = 1e12;
const LAMBDA_MAX: f64 = 1e12;

fn cauchy(s: f64, c: f64) -> f64 {
    let c2 = c * c;
    c2 * (s / c2).ln_1p()
}

/// Per-pair residual: pixel error for pinhole cameras, chord between unit
/// bearings for equirectangular ones. `None` when the point cannot be projected.
fn residual(cam: &CameraModel, t: &RigidTransform, pixel_bearing: &(nalgebra::Point2<f64>, Option<Vector3<f64>>), p: &Vector3<f64>) -> Option<Vector3<f64>> {
    let q = t.apply(p);
    match cam {
        CameraModel::Pinhole(_) => {
            let px = cam.project(&q)?;
            let d = px - pixel_bearing.0;
            Some(Vector3::new(d.x, d.y, 0.0))
        }
        CameraModel::Equirectangular(_) => {
            let n = q.norm();
            let c = pixel_bearing.1?;
            (n > 1e-12).then(|| q / n - c)
        }
    }
}

/// Robust reprojection refinement by Levenberg-Marquardt with a Cauchy
/// kernel over a left-multiplied 6-vector perturbation. Never returns a
/// transform with a higher robust cost than `init`.
pub fn refine_reprojection(
    corr: &CorrespondenceSet,
    cam: &CameraModel,
    init: &RigidTransform,
    params: &RefineParams,
) -> Result<RefineReport> {
    let n = corr.len();
    if n < 3 {
        return Err(Error::InsufficientCorrespondences { have: n, need: 3 });
    }
    let targets: Vec<_> = corr
        .pairs
        .iter()
        .map(|c| (c.pixel, cam.unproject(&c.pixel).ok().map(Bearing::into_inner)))
        .collect();
    let c = params.kernel_scale;
    let cost_of = |t: &RigidTransform| -> f64 {
        corr.pairs
            .iter()
            .zip(&targets)
            .map(|(p, tg)| cauchy(residual(cam, t, tg, &p.point).map_or(BEHIND_PENALTY, |r| r.norm_squared()), c))
            .sum()
    };

    let mut t = *init;
    let mut cost = cost_of(&t);
    let initial_cost = cost;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut stalled = false;
    let h = 1e-7;
    while iterations < params.max_iterations {
        iterations += 1;
        let mut hess = Matrix6::zeros();
        let mut grad = Vector6::zeros();
        for (p, tg) in corr.pairs.iter().zip(&targets) {
            let Some(r) = residual(cam, &t, tg, &p.point) else { continue };
            let mut jac = nalgebra::Matrix3x6::zeros();
            let mut ok = true;
            for k in 0..6 {
                let mut d = Vector6::zeros();
                d[k] = h;
                let plus = residual(cam, &t.perturbed_left(&d), tg, &p.point);
                let minus = residual(cam, &t.perturbed_left(&-d), tg, &p.point);
                match (plus, minus) {
                    (Some(a), Some(b)) => jac.set_column(k, &((a - b) / (2.0 * h))),
                    _ => ok = false,
                }
            }
            if !ok {
                continue;
            }
            let w = 1.0 / (1.0 + r.norm_squared() / (c * c));
            hess += w * jac.transpose() * jac;
            grad += w * jac.transpose() * r;
        }
        let mut accepted = false;
        let mut step_norm = 0.0;
        while lambda <= LAMBDA_MAX {
            let mut damped = hess;
            for k in 0..6 {
                damped[(k, k)] += lambda * hess[(k, k)].max(1e-12);
            }
            let Some(delta) = damped.cholesky().map(|ch| ch.solve(&-grad)) else {
                lambda *= 10.0;
                continue;
            };
            step_norm = delta.norm();
            let cand = t.perturbed_left(&delta);
            let cand_cost = cost_of(&cand);
            if cand_cost <= cost {
                t = cand;
                cost = cand_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            if step_norm < params.update_tolerance {
                break;
            }
            lambda *= 10.0;
        }
        if step_norm < params.update_tolerance {
            break;
        }
        if !accepted {
            stalled = true;
            log::warn!("reprojection refinement stalled; returning the best estimate so far");
            break;
        }
    }
    Ok(RefineReport {
        transform: t,
        initial_cost,
        cost,
        iterations,
        stalled,
    })
}

/// Full initial-guess chain: RANSAC rotation, zero translation, then robust
/// refinement over all correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct InitGuess {
    pub transform: RigidTransform,
    pub ransac: RansacResult,
    pub refine: Option<RefineReport>,
}

pub fn estimate_initial_guess(
    corr: &CorrespondenceSet,
    cam: &CameraModel,
    ransac: &RansacParams,
    refine: &RefineParams,
) -> Result<InitGuess> {
    let r = ransac_rotation(corr, cam, ransac)?;
    let rough = RigidTransform::from_rotation(r.rotation);
    let refined = refine_reprojection(corr, cam, &rough, refine)?;
    Ok(InitGuess {
        transform: refined.transform,
        ransac: r,
        refine: Some(refined),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::Correspondence;
    use crate::geom::{EquirectCamera, PinholeCamera};
    use approx::assert_relative_eq;
    use nalgebra::Point2;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal, UnitSphere};

    fn b(x: f64, y: f64, z: f64) -> Bearing {
        Bearing::new(Vector3::new(x, y, z)).unwrap()
    }

    #[test]
    fn aligned_pairs_give_identity() {
        let (l0, l1) = (b(1.0, 0.0, 0.0), b(0.3, 1.0, 0.2));
        let r = rotation_from_two(&l0, &l1, &l0, &l1).unwrap();
        assert!(r.angle() < 1e-12);
    }

    #[test]
    fn exact_quarter_turn() {
        let truth = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let (l0, l1) = (b(1.0, 0.0, 0.0), b(0.0, 1.0, 0.0));
        let c0 = Bearing::new(truth * *l0).unwrap();
        let c1 = Bearing::new(truth * *l1).unwrap();
        let r = rotation_from_two(&c0, &c1, &l0, &l1).unwrap();
        assert!(r.angle_to(&truth) < 1e-9);
    }

    #[test]
    fn parallel_sample_is_degenerate() {
        let l0 = b(1.0, 0.0, 0.0);
        let l1 = b(1.0, 1e-6, 0.0);
        let c1 = b(0.0, 1.0, 0.0);
        assert!(matches!(rotation_from_two(&l0, &c1, &l0, &l1), Err(Error::DegenerateSample(_))));
    }

    fn rotation_grid_oracle(pairs: &[(Vector3<f64>, Vector3<f64>)], around: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
        // exhaustive search over a 0.1° grid of small rotations around a coarse centre
        let step = 0.1f64.to_radians();
        let cost = |r: &UnitQuaternion<f64>| pairs.iter().map(|(c, l)| (c - r * l).norm_squared()).sum::<f64>();
        let mut best = (f64::MAX, *around);
        let k = 20;
        for i in -k..=k {
            for j in -k..=k {
                for m in -k..=k {
                    let d = UnitQuaternion::from_scaled_axis(Vector3::new(i as f64, j as f64, m as f64) * step);
                    let r = d * around;
                    let c = cost(&r);
                    if c < best.0 {
                        best = (c, r);
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn noisy_two_point_fit_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.5f64.to_radians()).unwrap();
        for _ in 0..5 {
            let truth = UnitQuaternion::from_scaled_axis(Vector3::from(UnitSphere.sample(&mut rng)) * 0.7);
            let l: Vec<Vector3<f64>> = (0..2).map(|_| Vector3::from(UnitSphere.sample(&mut rng))).collect();
            let c: Vec<Vector3<f64>> = l
                .iter()
                .map(|v| {
                    let jitter = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                    UnitQuaternion::from_scaled_axis(jitter) * truth * v
                })
                .collect();
            let r = rotation_from_two(
                &Bearing::new(c[0]).unwrap(),
                &Bearing::new(c[1]).unwrap(),
                &Bearing::new(l[0]).unwrap(),
                &Bearing::new(l[1]).unwrap(),
            )
            .unwrap();
            assert!(r.angle_to(&truth).to_degrees() < 1.5);
            let pairs = [(c[0], l[0]), (c[1], l[1])];
            let grid = rotation_grid_oracle(&pairs, &truth);
            assert!(r.angle_to(&grid).to_degrees() < 0.1 * 3f64.sqrt());
        }
    }

    proptest! {
        #[test]
        fn fitted_rotation_is_proper(
            a in prop::array::uniform3(-1.0f64..1.0),
            c in prop::array::uniform3(-1.0f64..1.0),
            d in prop::array::uniform3(-1.0f64..1.0),
            e in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let v = |x: [f64; 3]| Bearing::new(Vector3::from(x));
            if let (Some(l0), Some(l1), Some(c0), Some(c1)) = (v(a), v(c), v(d), v(e)) {
                if let Ok(r) = rotation_from_two(&c0, &c1, &l0, &l1) {
                    let m = r.to_rotation_matrix().into_inner();
                    prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
                    prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-9);
                }
            }
        }
    }

    fn pinhole() -> CameraModel {
        PinholeCamera::new(600.0, 600.0, 640.0, 360.0, 1280, 720).unwrap().into()
    }

    /// Pairs from random points 2–10 m in front of the camera.
    fn synthetic_set(
        cam: &CameraModel,
        t: &RigidTransform,
        inliers: usize,
        outliers: usize,
        noise_px: f64,
        seed: u64,
    ) -> (CorrespondenceSet, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_px.max(1e-300)).unwrap();
        let inv = t.inverse();
        let mut pairs = Vec::new();
        let mut truth = Vec::new();
        while pairs.len() < inliers + outliers {
            let px = Point2::new(
                rng.random_range(0.0..cam.width() as f64 - 1.0),
                rng.random_range(0.0..cam.height() as f64 - 1.0),
            );
            let bearing = cam.unproject(&px).unwrap().into_inner();
            let depth = rng.random_range(2.0..10.0);
            let point = inv.apply(&(bearing * depth));
            let inlier = pairs.len() < inliers;
            let pixel = if inlier {
                let p = cam.project(&t.apply(&point)).unwrap();
                let n = if noise_px > 0.0 {
                    nalgebra::Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    nalgebra::Vector2::zeros()
                };
                p + n
            } else {
                Point2::new(
                    rng.random_range(0.0..cam.width() as f64 - 1.0),
                    rng.random_range(0.0..cam.height() as f64 - 1.0),
                )
            };
            if !cam.contains(&pixel) {
                continue;
            }
            pairs.push(Correspondence {
                pixel,
                point,
                confidence: 1.0,
            });
            truth.push(inlier);
        }
        (
            CorrespondenceSet {
                pairs,
                ..Default::default()
            },
            truth,
        )
    }

    fn rotation_truth(seed: u64, deg: f64) -> RigidTransform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Vector3::from(UnitSphere.sample(&mut rng));
        RigidTransform::from_rotation(UnitQuaternion::from_scaled_axis(axis * deg.to_radians()))
    }

    #[test]
    fn noiseless_consensus() {
        let cam = pinhole();
        let t = rotation_truth(1, 30.0);
        let (set, _) = synthetic_set(&cam, &t, 100, 0, 0.0, 2);
        let r = ransac_rotation(&set, &cam, &RansacParams { iterations: 200, ..RansacParams::for_camera(&cam, 7) }).unwrap();
        assert!(r.rotation.angle_to(&t.rotation).to_degrees() < 0.1);
        assert_eq!(r.inlier_count, 100);
        assert!(!r.low_confidence);
    }

    #[test]
    fn outliers_only_is_low_confidence() {
        let cam = pinhole();
        let t = rotation_truth(1, 30.0);
        let (set, _) = synthetic_set(&cam, &t, 0, 40, 0.0, 4);
        let params = RansacParams {
            iterations: 500,
            threshold: 2.0,
            seed: 1,
        };
        let r = ransac_rotation(&set, &cam, &params).unwrap();
        assert!(r.low_confidence);
    }

    #[test]
    fn needs_two_pairs() {
        let cam = pinhole();
        let (set, _) = synthetic_set(&cam, &RigidTransform::identity(), 1, 0, 0.0, 4);
        assert!(matches!(
            ransac_rotation(&set, &cam, &RansacParams::for_camera(&cam, 0)),
            Err(Error::InsufficientCorrespondences { have: 1, need: 2 })
        ));
        assert!(matches!(
            refine_reprojection(&set, &cam, &RigidTransform::identity(), &RefineParams::for_camera(&cam)),
            Err(Error::InsufficientCorrespondences { have: 1, need: 3 })
        ));
    }

    #[test]
    fn deterministic_and_permutation_invariant() {
        let cam = pinhole();
        let t = rotation_truth(3, 20.0);
        let (set, _) = synthetic_set(&cam, &t, 30, 20, 1.0, 8);
        let params = RansacParams {
            iterations: 300,
            ..RansacParams::for_camera(&cam, 11)
        };
        let a = ransac_rotation(&set, &cam, &params).unwrap();
        assert_eq!(a, ransac_rotation(&set, &cam, &params).unwrap());

        let n = set.len();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        // permuted[k] = original[perm[k]]
        let permuted = CorrespondenceSet {
            pairs: perm.iter().map(|&k| set.pairs[k]).collect(),
            ..Default::default()
        };
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let seed = params.seed;
        let b = ransac_with(&permuted, &cam, &params, |it, att| {
            let (i, j) = draw_pair(seed, it * SAMPLE_ATTEMPTS + att, n);
            (inv[i], inv[j])
        })
        .unwrap();
        assert_eq!(a.inlier_count, b.inlier_count);
        assert_eq!(a.iteration, b.iteration);
        for k in 0..n {
            assert_eq!(b.inliers[k], a.inliers[perm[k]]);
        }
    }

    fn ground_truth() -> RigidTransform {
        RigidTransform::from_rotation_vector(Vector3::new(0.1, -0.25, 0.05), Vector3::new(0.15, -0.1, 0.3))
    }

    #[test]
    fn noiseless_refinement_is_exact() {
        for cam in [pinhole(), EquirectCamera::new(1920, 960).unwrap().into()] {
            let t = ground_truth();
            let (set, _) = synthetic_set(&cam, &t, 100, 0, 0.0, 5);
            let init = RigidTransform::from_rotation(t.rotation);
            let rep = refine_reprojection(&set, &cam, &init, &RefineParams::for_camera(&cam)).unwrap();
            assert!(rep.transform.translation_error(&t) < 1e-6, "{}", rep.transform.translation_error(&t));
            assert!(rep.transform.rotation_error(&t) < 1e-6);
            assert!(rep.cost <= rep.initial_cost);
        }
    }

    #[test]
    fn noisy_refinement_is_close() {
        let cam = pinhole();
        let t = ground_truth();
        let (set, _) = synthetic_set(&cam, &t, 100, 0, 1.0, 21);
        let rep = refine_reprojection(&set, &cam, &RigidTransform::from_rotation(t.rotation), &RefineParams::for_camera(&cam)).unwrap();
        assert!(rep.transform.translation_error(&t) < 0.05);
        assert!(rep.transform.rotation_error(&t).to_degrees() < 0.2);
    }

    #[test]
    fn refinement_never_increases_cost() {
        let cam = pinhole();
        let t = ground_truth();
        let (set, _) = synthetic_set(&cam, &t, 50, 50, 2.0, 6);
        for init in [RigidTransform::identity(), t, RigidTransform::from_rotation(t.rotation)] {
            let rep = refine_reprojection(&set, &cam, &init, &RefineParams::for_camera(&cam)).unwrap();
            assert!(rep.cost <= rep.initial_cost + 1e-12);
        }
    }

    #[test]
    fn chain_is_model_agnostic() {
        for cam in [pinhole(), EquirectCamera::new(1920, 960).unwrap().into()] {
            let t = ground_truth();
            let (set, _) = synthetic_set(&cam, &t, 80, 20, 1.0, 12);
            let g = estimate_initial_guess(
                &set,
                &cam,
                &RansacParams {
                    iterations: 1000,
                    ..RansacParams::for_camera(&cam, 3)
                },
                &RefineParams::for_camera(&cam),
            )
            .unwrap();
            assert!(g.transform.translation_error(&t) < 0.05, "{}", g.transform.translation_error(&t));
            assert!(g.transform.rotation_error(&t).to_degrees() < 0.2);
        }
    }

    #[test]
    fn cauchy_matches_definition() {
        assert_relative_eq!(cauchy(0.0, 2.0), 0.0);
        assert_relative_eq!(cauchy(4.0, 2.0), 4.0 * 2f64.ln());
    }
}
