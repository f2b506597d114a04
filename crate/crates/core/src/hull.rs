//! 3D convex hull by quickhull.

use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(pts: &[Vector3<f64>], v: [usize; 3]) -> Self {
        let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
        let norm = n.norm();
        let normal = if norm > 0.0 { n / norm } else { n };
        Face {
            v,
            normal,
            offset: normal.dot(&pts[v[0]]),
            outside: vec![],
            alive: true,
        }
    }

    fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Indices of the convex hull vertices of `points`, or `None` when the points
/// are degenerate (fewer than four, collinear or coplanar).
pub fn convex_hull_vertices(points: &[Vector3<f64>]) -> Option<Vec<usize>> {
    if points.len() < 4 {
        return None;
    }
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.amax()));
    let eps = 1e-10 * scale.max(1e-300);

    // initial simplex
    let (mut i0, mut i1) = (0, 0);
    for (i, p) in points.iter().enumerate() {
        if p.x < points[i0].x {
            i0 = i;
        }
        if p.x > points[i1].x {
            i1 = i;
        }
    }
    if (points[i1] - points[i0]).norm() <= eps {
        // all share x; pick the farthest pair from point 0 instead
        i0 = 0;
        i1 = (0..points.len()).max_by(|&a, &b| {
            (points[a] - points[0]).norm().total_cmp(&(points[b] - points[0]).norm())
        })?;
        if (points[i1] - points[i0]).norm() <= eps {
            return None;
        }
    }
    let dir = (points[i1] - points[i0]).normalize();
    let line_dist = |p: &Vector3<f64>| {
        let d = p - points[i0];
        (d - dir * d.dot(&dir)).norm()
    };
    let i2 = (0..points.len()).max_by(|&a, &b| line_dist(&points[a]).total_cmp(&line_dist(&points[b])))?;
    if line_dist(&points[i2]) <= eps {
        return None;
    }
    let base = Face::new(points, [i0, i1, i2]);
    let i3 = (0..points.len()).max_by(|&a, &b| base.distance(&points[a]).abs().total_cmp(&base.distance(&points[b]).abs()))?;
    if base.distance(&points[i3]).abs() <= eps {
        return None;
    }

    let mut faces: Vec<Face> = Vec::new();
    let centroid = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        let mut f = Face::new(points, tri);
        if f.distance(&centroid) > 0.0 {
            f = Face::new(points, [tri[0], tri[2], tri[1]]);
        }
        faces.push(f);
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edges.insert((f.v[k], f.v[(k + 1) % 3]), fi);
        }
    }
    for (pi, p) in points.iter().enumerate() {
        if [i0, i1, i2, i3].contains(&pi) {
            continue;
        }
        if let Some(f) = faces.iter_mut().find(|f| f.distance(p) > eps) {
            f.outside.push(pi);
        }
    }

    let mut queue: VecDeque<usize> = (0..faces.len()).collect();
    while let Some(fi) = queue.pop_front() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        let apex = *faces[fi]
            .outside
            .iter()
            .max_by(|&&a, &&b| faces[fi].distance(&points[a]).total_cmp(&faces[fi].distance(&points[b])))
            .expect("non-empty");
        let ap = points[apex];

        // visible region by flood fill across shared edges
        let mut visible = vec![fi];
        let mut seen = std::collections::HashSet::from([fi]);
        let mut stack = vec![fi];
        while let Some(f) = stack.pop() {
            let v = faces[f].v;
            for k in 0..3 {
                if let Some(&nb) = edges.get(&(v[(k + 1) % 3], v[k])) {
                    if faces[nb].alive && !seen.contains(&nb) && faces[nb].distance(&ap) > eps {
                        seen.insert(nb);
                        visible.push(nb);
                        stack.push(nb);
                    }
                }
            }
        }
        // horizon: edges of visible faces whose twin is not visible
        let mut horizon = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for k in 0..3 {
                let e = (v[k], v[(k + 1) % 3]);
                match edges.get(&(e.1, e.0)) {
                    Some(nb) if seen.contains(nb) => {}
                    _ => horizon.push(e),
                }
            }
        }
        let mut orphans = Vec::new();
        for &f in &visible {
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
            let v = faces[f].v;
            for k in 0..3 {
                edges.remove(&(v[k], v[(k + 1) % 3]));
            }
        }
        let first_new = faces.len();
        for (a, b) in horizon {
            let nf = Face::new(points, [a, b, apex]);
            let id = faces.len();
            for k in 0..3 {
                edges.insert((nf.v[k], nf.v[(k + 1) % 3]), id);
            }
            faces.push(nf);
        }
        for pi in orphans {
            if pi == apex {
                continue;
            }
            let p = &points[pi];
            let target = (first_new..faces.len())
                .filter(|&f| faces[f].distance(p) > eps)
                .max_by(|&a, &b| faces[a].distance(p).total_cmp(&faces[b].distance(p)));
            if let Some(f) = target {
                faces[f].outside.push(pi);
            }
        }
        queue.extend(first_new..faces.len());
    }

    let mut verts: Vec<usize> = faces.iter().filter(|f| f.alive).flat_map(|f| f.v).collect();
    verts.sort_unstable();
    verts.dedup();
    Some(verts)
}
