//! Intensity histograms, entropy, normalized information distance and
//! view-based hidden point removal.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::cloud::{GrayImage, PointCloud};
use crate::depth::depth_test;
use crate::error::{Error, Result};
use crate::geom::{CameraModel, RigidTransform};

pub const DEFAULT_BINS: usize = 16;

/// Joint and marginal counts of (LiDAR intensity, pixel intensity) samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntensityHistograms {
    pub bins: usize,
    /// Row-major `bins × bins`, rows indexed by the LiDAR bin.
    pub joint: Vec<u64>,
    pub lidar: Vec<u64>,
    pub image: Vec<u64>,
    pub total: u64,
}

impl IntensityHistograms {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            joint: vec![0; bins * bins],
            lidar: vec![0; bins],
            image: vec![0; bins],
            total: 0,
        }
    }

    /// Builds marginals from a row-major joint table.
    pub fn from_joint(bins: usize, joint: Vec<u64>) -> Result<Self> {
        if bins == 0 || joint.len() != bins * bins {
            return Err(Error::Argument("joint table must be bins × bins".into()));
        }
        let mut h = Self::new(bins);
        for l in 0..bins {
            for i in 0..bins {
                let c = joint[l * bins + i];
                h.lidar[l] += c;
                h.image[i] += c;
                h.total += c;
            }
        }
        h.joint = joint;
        Ok(h)
    }

    pub fn bin(&self, v: f64) -> usize {
        ((v * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn add(&mut self, l: f64, i: f64) {
        let (a, b) = (self.bin(l), self.bin(i));
        self.joint[a * self.bins + b] += 1;
        self.lidar[a] += 1;
        self.image[b] += 1;
        self.total += 1;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.joint.iter_mut().zip(&other.joint) {
            *a += b;
        }
        for (a, b) in self.lidar.iter_mut().zip(&other.lidar) {
            *a += b;
        }
        for (a, b) in self.image.iter_mut().zip(&other.image) {
            *a += b;
        }
        self.total += other.total;
        self
    }

    pub fn transposed(&self) -> Self {
        let b = self.bins;
        let joint = (0..b * b).map(|k| self.joint[(k % b) * b + k / b]).collect();
        Self {
            bins: b,
            joint,
            lidar: self.image.clone(),
            image: self.lidar.clone(),
            total: self.total,
        }
    }
}

/// Shannon entropy in nats of a count histogram.
pub fn entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Domain("entropy of an empty histogram".into()));
    }
    let n = total as f64;
    Ok(-counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>())
}

/// Normalized information distance `(H(L,I) − MI) / H(L,I)`, 0 when the
/// joint entropy vanishes.
pub fn nid(h: &IntensityHistograms) -> Result<f64> {
    let hl = entropy(&h.lidar)?;
    let hi = entropy(&h.image)?;
    let hli = entropy(&h.joint)?;
    if hli <= 0.0 {
        return Ok(0.0);
    }
    let mi = hl + hi - hli;
    Ok(((hli - mi) / hli).clamp(0.0, 1.0))
}

/// Indices of the points that win the per-pixel depth test at the camera's
/// native resolution, in ascending order.
pub fn hidden_point_removal(cloud: &PointCloud, cam: &CameraModel, camera_from_lidar: &RigidTransform) -> Vec<usize> {
    let mut v: Vec<usize> = depth_test(&cloud.points, cam, camera_from_lidar)
        .into_iter()
        .filter(|&i| i >= 0)
        .map(|i| i as usize)
        .collect();
    v.sort_unstable();
    v
}

fn project_pixel(cam: &CameraModel, t: &RigidTransform, p: &Vector3<f64>) -> Option<(u32, u32)> {
    cam.pixel_of(&cam.project(&t.apply(p))?)
}

/// Accumulates intensity pairs of the `visible` points that project into
/// the image under `camera_from_lidar`. Per-thread partial histograms are
/// merged, so the result equals the sequential one.
pub fn build_histograms(
    cloud: &PointCloud,
    visible: &[usize],
    image: &GrayImage,
    cam: &CameraModel,
    camera_from_lidar: &RigidTransform,
    bins: usize,
) -> Result<IntensityHistograms> {
    if bins == 0 {
        return Err(Error::Argument("bin count must be positive".into()));
    }
    if image.width != cam.width() || image.height != cam.height() {
        return Err(Error::Argument(format!(
            "image is {}x{} but the camera is {}x{}",
            image.width,
            image.height,
            cam.width(),
            cam.height()
        )));
    }
    let h = visible
        .par_chunks(4096)
        .map(|chunk| {
            let mut h = IntensityHistograms::new(bins);
            for &j in chunk {
                if let Some((c, r)) = project_pixel(cam, camera_from_lidar, &cloud.points[j]) {
                    h.add(cloud.intensities[j], image.get(c, r));
                }
            }
            h
        })
        .reduce(|| IntensityHistograms::new(bins), |a, b| a.merge(&b));
    if h.total == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::PinholeCamera;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0, 5, 0]).unwrap(), 0.0);
        assert!((entropy(&[3, 3]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let direct = -[1.0f64, 2.0, 3.0].iter().map(|c| (c / 6.0) * (c / 6.0).ln()).sum::<f64>();
        assert!((entropy(&[1, 2, 3]).unwrap() - direct).abs() < 1e-15);
        assert!(matches!(entropy(&[0, 0]), Err(Error::Domain(_))));
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn nid_examples() {
        let diag = IntensityHistograms::from_joint(3, vec![4, 0, 0, 0, 7, 0, 0, 0, 2]).unwrap();
        assert!(nid(&diag).unwrap().abs() < 1e-12);
        // outer product of marginals (2, 3) and (1, 4)
        let indep = IntensityHistograms::from_joint(2, vec![2, 8, 3, 12]).unwrap();
        assert!((nid(&indep).unwrap() - 1.0).abs() < 1e-12);
        let single = IntensityHistograms::from_joint(2, vec![0, 9, 0, 0]).unwrap();
        assert_eq!(nid(&single).unwrap(), 0.0);

        let h = IntensityHistograms::from_joint(2, vec![2, 1, 1, 2]).unwrap();
        // hand-evaluated: H(L) = H(I) = ln 2, H(L,I) = -(2·(1/3)ln(1/3) + 2·(1/6)ln(1/6))
        let hli = -(2.0 * (1.0f64 / 3.0) * (1.0f64 / 3.0).ln() + 2.0 * (1.0f64 / 6.0) * (1.0f64 / 6.0).ln());
        let mi = 2.0 * 2f64.ln() - hli;
        assert!((nid(&h).unwrap() - (hli - mi) / hli).abs() < 1e-12);
    }

    #[test]
    fn histogram_bins_and_marginals() {
        let mut h = IntensityHistograms::new(16);
        h.add(0.0, 0.0);
        h.add(1.0, 0.999);
        h.add(0.5, 0.0625);
        assert_eq!(h.joint[0], 1);
        assert_eq!(h.joint[15 * 16 + 15], 1);
        assert_eq!(h.joint[8 * 16 + 1], 1);
        assert_eq!(h.total, 3);
        assert_eq!(h.lidar.iter().sum::<u64>(), 3);
    }

    fn wall_cloud(n: usize, seed: u64, f: impl Fn(f64, &mut ChaCha8Rng) -> f64) -> (PointCloud, GrayImage, CameraModel) {
        let cam: CameraModel = PinholeCamera::new(100.0, 100.0, 100.0, 100.0, 200, 200).unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = GrayImage::new(200, 200);
        for p in img.pixels.iter_mut() {
            *p = rng.random();
        }
        let mut points = Vec::new();
        let mut intens = Vec::new();
        for _ in 0..n {
            let (c, r) = (rng.random_range(0..200u32), rng.random_range(0..200u32));
            points.push(Vector3::new((c as f64 - 100.0) / 100.0 * 3.0, (r as f64 - 100.0) / 100.0 * 3.0, 3.0));
            intens.push(f(img.get(c, r), &mut rng));
        }
        (PointCloud::new(points, intens).unwrap(), img, cam)
    }

    #[test]
    fn identical_signals_give_diagonal_table() {
        let (cloud, img, cam) = wall_cloud(5000, 1, |v, _| v);
        let vis: Vec<usize> = (0..cloud.len()).collect();
        let h = build_histograms(&cloud, &vis, &img, &cam, &RigidTransform::identity(), 16).unwrap();
        for l in 0..16 {
            for i in 0..16 {
                if l != i {
                    assert_eq!(h.joint[l * 16 + i], 0);
                }
            }
        }
        assert_eq!(h.total, 5000);
    }

    #[test]
    fn independent_signals_are_uniform_within_multinomial_bounds() {
        let n = 100_000;
        let (cloud, img, cam) = wall_cloud(n, 2, |_, rng| rng.random());
        let vis: Vec<usize> = (0..cloud.len()).collect();
        let h = build_histograms(&cloud, &vis, &img, &cam, &RigidTransform::identity(), 16).unwrap();
        let p = 1.0 / 256.0;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &h.joint {
            assert!((c as f64 - mean).abs() < 4.0 * sigma, "{c} vs {mean}");
        }
    }

    #[test]
    fn all_zero_intensities_single_cell() {
        let (cloud, mut img, cam) = wall_cloud(100, 3, |_, _| 0.0);
        img.pixels.iter_mut().for_each(|p| *p = 0.0);
        let vis: Vec<usize> = (0..cloud.len()).collect();
        let h = build_histograms(&cloud, &vis, &img, &cam, &RigidTransform::identity(), 16).unwrap();
        assert_eq!(h.joint[0], 100);
        assert_eq!(h.lidar[0], 100);
        assert_eq!(nid(&h).unwrap(), 0.0);
    }

    #[test]
    fn no_overlap_is_reported() {
        let (cloud, img, cam) = wall_cloud(100, 4, |v, _| v);
        let vis: Vec<usize> = (0..cloud.len()).collect();
        let away = RigidTransform::from_translation(Vector3::new(0.0, 0.0, -10.0));
        assert!(matches!(build_histograms(&cloud, &vis, &img, &cam, &away, 16), Err(Error::NoOverlap)));
    }

    #[test]
    fn parallel_accumulation_equals_sequential() {
        let (cloud, img, cam) = wall_cloud(50_000, 5, |v, rng| (v + rng.random::<f64>()) / 2.0);
        let vis: Vec<usize> = (0..cloud.len()).collect();
        let t = RigidTransform::identity();
        let h = build_histograms(&cloud, &vis, &img, &cam, &t, 16).unwrap();
        let mut seq = IntensityHistograms::new(16);
        for &j in &vis {
            if let Some((c, r)) = project_pixel(&cam, &t, &cloud.points[j]) {
                seq.add(cloud.intensities[j], img.get(c, r));
            }
        }
        assert_eq!(h, seq);
    }

    #[test]
    fn hpr_occlusion_and_idempotence() {
        let cam: CameraModel = PinholeCamera::new(50.0, 50.0, 50.0, 50.0, 100, 100).unwrap().into();
        let mut pts = Vec::new();
        for r in 0..100 {
            for c in 0..100 {
                let d = Vector3::new((c as f64 - 50.0) / 50.0, (r as f64 - 50.0) / 50.0, 1.0);
                pts.push(d * 5.0);
                pts.push(d * 2.0);
            }
        }
        let n = pts.len();
        let cloud = PointCloud::new(pts, vec![0.5; n]).unwrap();
        let t = RigidTransform::identity();
        let vis = hidden_point_removal(&cloud, &cam, &t);
        assert_eq!(vis.len(), 10_000);
        assert!(vis.iter().all(|&i| i % 2 == 1));
        assert_eq!(vis, hidden_point_removal(&cloud, &cam, &t));

        let single = PointCloud::new(vec![Vector3::new(0.0, 0.0, 1.0)], vec![0.1]).unwrap();
        assert_eq!(hidden_point_removal(&single, &cam, &t), vec![0]);
        let behind = PointCloud::new(vec![Vector3::new(0.0, 0.0, -1.0)], vec![0.1]).unwrap();
        assert!(hidden_point_removal(&behind, &cam, &t).is_empty());
    }

    fn arb_hist() -> impl Strategy<Value = IntensityHistograms> {
        (1usize..8)
            .prop_flat_map(|b| (Just(b), prop::collection::vec(0u64..50, b * b)))
            .prop_filter_map("non-empty", |(b, j)| {
                let h = IntensityHistograms::from_joint(b, j).ok()?;
                (h.total > 0).then_some(h)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn nid_in_unit_interval_and_symmetric(h in arb_hist()) {
            let v = nid(&h).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - nid(&h.transposed()).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn nid_invariant_under_shared_relabeling(h in arb_hist(), seed in any::<u64>()) {
            // a bin permutation applied to both channels: the histogram-level image
            // of a strictly monotone remap that preserves bin membership
            let b = h.bins;
            let mut perm: Vec<usize> = (0..b).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let mut joint = vec![0; b * b];
            for l in 0..b {
                for i in 0..b {
                    joint[perm[l] * b + perm[i]] = h.joint[l * b + i];
                }
            }
            let g = IntensityHistograms::from_joint(b, joint).unwrap();
            prop_assert!((nid(&h).unwrap() - nid(&g).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn entropy_matches_compensated_sum(counts in prop::collection::vec(0u64..1000, 1..64)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let n: u64 = counts.iter().sum();
            // Neumaier summation as the high-precision reference
            let (mut s, mut comp) = (0.0f64, 0.0f64);
            for &c in counts.iter().filter(|&&c| c > 0) {
                let p = c as f64 / n as f64;
                let term = -p * p.ln();
                let t = s + term;
                comp += if s.abs() >= term.abs() { (s - t) + term } else { (term - t) + s };
                s = t;
            }
            prop_assert!((entropy(&counts).unwrap() - (s + comp)).abs() < 1e-12);
        }

        #[test]
        fn hpr_is_subset(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cam: CameraModel = PinholeCamera::new(20.0, 20.0, 10.0, 10.0, 20, 20).unwrap().into();
            let pts: Vec<Vector3<f64>> = (0..200).map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..4.0))).collect();
            let cloud = PointCloud::new(pts, vec![0.0; 200]).unwrap();
            let vis = hidden_point_removal(&cloud, &cam, &RigidTransform::identity());
            prop_assert!(vis.iter().all(|&i| i < 200));
            prop_assert!(vis.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
