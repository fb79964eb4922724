//! Triangle meshes and exact point-to-mesh distance queries.

use std::collections::HashSet;

use crate::grid::Vec3;

/// Triangles with zero area (up to this tolerance) are never emitted.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// V - E + F over the vertices actually referenced by triangles.
    pub fn euler_characteristic(&self) -> i64 {
        let mut verts = HashSet::new();
        let mut edges = HashSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                verts.insert(tri[k]);
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        verts.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut count = std::collections::HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        count.values().all(|&c| c == 2)
    }

    pub fn aabb(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[inline]
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

/// Uniform grid of triangle buckets for bounded-radius distance queries.
pub struct TriangleBins<'a> {
    mesh: &'a Mesh,
    origin: Vec3,
    cell: f64,
    res: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl<'a> TriangleBins<'a> {
    /// `cell` should be on the order of the largest query radius.
    pub fn new(mesh: &'a Mesh, cell: f64) -> Self {
        assert!(cell > 0.0);
        let (lo, hi) = mesh
            .aabb()
            .unwrap_or((Vec3::zeros(), Vec3::zeros()));
        let res = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).min(1 << 10));
        let mut buckets = vec![Vec::new(); res[0] * res[1] * res[2]];
        let cell_of = |v: f64, a: usize| -> usize {
            (((v - lo[a]) / cell).floor().max(0.0) as usize).min(res[a] - 1)
        };
        for (t, _) in mesh.triangles.iter().enumerate() {
            let [p, q, r] = mesh.corners(t);
            let tlo = p.inf(&q).inf(&r);
            let thi = p.sup(&q).sup(&r);
            let lo_c = [0, 1, 2].map(|a| cell_of(tlo[a], a));
            let hi_c = [0, 1, 2].map(|a| cell_of(thi[a], a));
            for z in lo_c[2]..=hi_c[2] {
                for y in lo_c[1]..=hi_c[1] {
                    for x in lo_c[0]..=hi_c[0] {
                        buckets[x + res[0] * (y + res[1] * z)].push(t as u32);
                    }
                }
            }
        }
        TriangleBins {
            mesh,
            origin: lo,
            cell,
            res,
            buckets,
        }
    }

    /// Exact distance from `p` to the mesh if it is below `radius`.
    pub fn distance_within(&self, p: &Vec3, radius: f64) -> Option<f64> {
        if self.mesh.is_empty() {
            return None;
        }
        let mut lo_c = [0usize; 3];
        let mut hi_c = [0usize; 3];
        for a in 0..3 {
            let lo = ((p[a] - radius - self.origin[a]) / self.cell).floor();
            let hi = ((p[a] + radius - self.origin[a]) / self.cell).floor();
            if hi < 0.0 || lo > (self.res[a] - 1) as f64 {
                return None;
            }
            lo_c[a] = lo.max(0.0) as usize;
            hi_c[a] = (hi as usize).min(self.res[a] - 1);
        }
        let mut best = f64::INFINITY;
        for z in lo_c[2]..=hi_c[2] {
            for y in lo_c[1]..=hi_c[1] {
                for x in lo_c[0]..=hi_c[0] {
                    for &t in &self.buckets[x + self.res[0] * (y + self.res[1] * z)] {
                        let [a, b, c] = self.mesh.corners(t as usize);
                        best = best.min(point_triangle_distance(p, &a, &b, &c));
                    }
                }
            }
        }
        (best < radius).then_some(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tri() -> [Vec3; 3] {
        [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ]
    }

    #[test]
    fn closest_point_regions() {
        let [a, b, c] = tri();
        // interior
        let p = Vec3::new(0.2, 0.2, 0.7);
        assert!((point_triangle_distance(&p, &a, &b, &c) - 0.7).abs() < 1e-12);
        // vertex region
        let p = Vec3::new(-1.0, -1.0, 0.0);
        assert!((point_triangle_distance(&p, &a, &b, &c) - 2f64.sqrt()).abs() < 1e-12);
        // edge region of the hypotenuse
        let p = Vec3::new(1.0, 1.0, 0.0);
        assert!((point_triangle_distance(&p, &a, &b, &c) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn closest_point_matches_dense_sampling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<Vec3> = (0..4)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let d = point_triangle_distance(&v[3], &v[0], &v[1], &v[2]);
            let n = 200;
            let mut best = f64::INFINITY;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let (u, w) = (i as f64 / n as f64, j as f64 / n as f64);
                    let q = v[0] + (v[1] - v[0]) * u + (v[2] - v[0]) * w;
                    best = best.min((v[3] - q).norm());
                }
            }
            assert!(d <= best + 1e-12);
            assert!(best - d < 1e-2);
        }
    }

    #[test]
    fn bins_agree_with_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut mesh = Mesh::default();
        for t in 0..60u32 {
            let base = Vec3::new(rng.random(), rng.random(), rng.random());
            for _ in 0..3 {
                mesh.vertices.push(base + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.1);
            }
            mesh.triangles.push([3 * t, 3 * t + 1, 3 * t + 2]);
        }
        let bins = TriangleBins::new(&mesh, 0.15);
        for _ in 0..300 {
            let p = Vec3::new(rng.random(), rng.random(), rng.random()) * 1.2 - Vec3::repeat(0.1);
            let brute = (0..mesh.triangles.len())
                .map(|t| {
                    let [a, b, c] = mesh.corners(t);
                    point_triangle_distance(&p, &a, &b, &c)
                })
                .fold(f64::INFINITY, f64::min);
            let r = 0.15;
            match bins.distance_within(&p, r) {
                Some(d) => assert_eq!(d, brute),
                None => assert!(brute >= r),
            }
        }
    }
}
