//! Linear iVox: a hashed voxel grid holding a flat point list per voxel.

use std::collections::HashMap;

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvoxConfig {
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    /// A new point closer than this to a stored point of its voxel is discarded.
    pub min_point_distance: f64,
}

impl Default for IvoxConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.5,
            max_points_per_voxel: 20,
            min_point_distance: 0.05,
        }
    }
}

type VoxelKey = [i64; 3];

#[derive(Debug, Clone)]
pub struct LinearIVox {
    config: IvoxConfig,
    voxels: HashMap<VoxelKey, Vec<Vector3<f64>>>,
    len: usize,
}

impl LinearIVox {
    pub fn new(config: IvoxConfig) -> Self {
        Self {
            config,
            voxels: HashMap::new(),
            len: 0,
        }
    }

    pub fn config(&self) -> &IvoxConfig {
        &self.config
    }

    /// Number of stored points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_voxels(&self) -> usize {
        self.voxels.len()
    }

    pub fn key(&self, p: &Vector3<f64>) -> VoxelKey {
        let s = self.config.voxel_size;
        [(p.x / s).floor() as i64, (p.y / s).floor() as i64, (p.z / s).floor() as i64]
    }

    pub fn voxels(&self) -> impl Iterator<Item = (&VoxelKey, &Vec<Vector3<f64>>)> {
        self.voxels.iter()
    }

    pub fn points(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.voxels.values().flatten()
    }

    /// Inserts points, honoring the per-voxel cap and the decimation radius.
    /// Returns how many were stored.
    pub fn insert<'a>(&mut self, points: impl IntoIterator<Item = &'a Vector3<f64>>) -> usize {
        let cap = self.config.max_points_per_voxel;
        let min_d2 = self.config.min_point_distance.powi(2);
        let mut added = 0;
        for p in points {
            if !p.iter().all(|v| v.is_finite()) {
                continue;
            }
            let key = self.key(p);
            let cell = self.voxels.entry(key).or_default();
            if cell.len() >= cap || cell.iter().any(|q| (q - p).norm_squared() < min_d2) {
                continue;
            }
            cell.push(*p);
            added += 1;
        }
        self.len += added;
        added
    }

    /// Exact `k` nearest stored points among the query's voxel and its 26
    /// neighbors, sorted by distance. Returns `(distance, point)` pairs.
    pub fn nearest(&self, query: &Vector3<f64>, k: usize) -> Vec<(f64, Vector3<f64>)> {
        let mut cand: Vec<(f64, Vector3<f64>)> = Vec::new();
        let [cx, cy, cz] = self.key(query);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.voxels.get(&[cx + dx, cy + dy, cz + dz]) {
                        cand.extend(cell.iter().map(|p| ((p - query).norm_squared(), *p)));
                    }
                }
            }
        }
        if k == 0 {
            return Vec::new();
        }
        if cand.len() > k {
            cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
            cand.truncate(k);
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0));
        cand.into_iter().map(|(d2, p)| (d2.sqrt(), p)).collect()
    }
}
