use crate::error::{Error, Result};
use crate::grid::{Dims, FeatureVolume};

/// All stride-1 `p`-cubed patches fully inside a feature volume. Patches
/// are not copied; features are read from the volume on demand.
#[derive(Clone, Copy, Debug)]
pub struct PatchSet<'a> {
    volume: &'a FeatureVolume,
    p: usize,
    grid: Dims,
}

impl<'a> PatchSet<'a> {
    pub fn new(volume: &'a FeatureVolume, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("patch size must be positive"));
        }
        if volume.dims.min() < p {
            return Err(Error::invalid(format!(
                "volume {} is smaller than the patch size {p}",
                volume.dims
            )));
        }
        let grid = Dims(volume.dims.0.map(|d| d - p + 1));
        Ok(PatchSet { volume, p, grid })
    }

    pub fn len(&self) -> usize {
        self.grid.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_size(&self) -> usize {
        self.p
    }

    pub fn feature_dim(&self) -> usize {
        4 * self.p * self.p * self.p
    }

    /// Dims of the grid of patch positions.
    pub fn grid(&self) -> Dims {
        self.grid
    }

    pub fn volume(&self) -> &'a FeatureVolume {
        self.volume
    }

    /// Lowest voxel of patch `m`.
    #[inline]
    pub fn corner(&self, m: usize) -> [usize; 3] {
        self.grid.coords(m)
    }

    /// Center voxel of patch `m`.
    #[inline]
    pub fn center(&self, m: usize) -> [usize; 3] {
        self.corner(m).map(|c| c + self.p / 2)
    }

    /// Flattened features of patch `m`: the geometry channel over the
    /// patch, then each appearance channel, each x-fastest.
    pub fn features(&self, m: usize) -> Vec<f32> {
        let n = self.p * self.p * self.p;
        let mut out = vec![0f32; 4 * n];
        let [cx, cy, cz] = self.corner(m);
        let mut k = 0;
        for z in 0..self.p {
            for y in 0..self.p {
                for x in 0..self.p {
                    let v = self.volume.at([cx + x, cy + y, cz + z]);
                    for c in 0..4 {
                        out[c * n + k] = v[c];
                    }
                    k += 1;
                }
            }
        }
        out
    }
}

/// Patch set over `volume`; fails if any dim is below `p`.
pub fn extract_patches(volume: &FeatureVolume, p: usize) -> Result<PatchSet<'_>> {
    PatchSet::new(volume, p)
}

/// Weighted squared distance between two flattened feature rows:
/// `w_a * |dA|^2 + (1 - w_a) * |dG|^2`.
pub fn patch_distance(q: &[f32], k: &[f32], w_a: f64) -> f64 {
    assert_eq!(q.len(), k.len(), "feature rows differ in length");
    assert_eq!(q.len() % 4, 0, "feature rows hold four channels");
    let n = q.len() / 4;
    let sq = |r: std::ops::Range<usize>| -> f64 {
        q[r.clone()]
            .iter()
            .zip(&k[r])
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum()
    };
    let g = sq(0..n);
    let a = sq(n..4 * n);
    w_a * a + (1.0 - w_a) * g
}

/// Distance between query patch `qi` and key patch `kj`, read straight from
/// the volumes. Stops early and returns a value `>= bound` once the partial
/// sum reaches `bound`.
#[inline]
pub(crate) fn pair_distance(
    q: &PatchSet,
    qi: usize,
    k: &PatchSet,
    kj: usize,
    w_a: f64,
    bound: f64,
) -> f64 {
    let p = q.p;
    let w_g = 1.0 - w_a;
    let (qd, kd) = (q.volume.dims, k.volume.dims);
    let (qv, kv) = (&q.volume.data, &k.volume.data);
    let [qx, qy, qz] = q.corner(qi);
    let [kx, ky, kz] = k.corner(kj);
    let mut acc = 0.0f64;
    for z in 0..p {
        for y in 0..p {
            let qb = qd.index([qx, qy + y, qz + z]);
            let kb = kd.index([kx, ky + y, kz + z]);
            for (a, b) in qv[qb..qb + p].iter().zip(&kv[kb..kb + p]) {
                acc += voxel_term(a, b, w_a, w_g);
            }
        }
        if acc >= bound {
            return acc;
        }
    }
    acc
}

#[inline(always)]
pub(crate) fn voxel_term(a: &[f32; 4], b: &[f32; 4], w_a: f64, w_g: f64) -> f64 {
    let dg = a[0] as f64 - b[0] as f64;
    let d1 = a[1] as f64 - b[1] as f64;
    let d2 = a[2] as f64 - b[2] as f64;
    let d3 = a[3] as f64 - b[3] as f64;
    w_a * (d1 * d1 + d2 * d2 + d3 * d3) + w_g * dg * dg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: Dims) -> FeatureVolume {
        let data = (0..dims.count()).map(|i| [i as f32, 0.0, 1.0, -(i as f32)]).collect();
        FeatureVolume::new(dims, data).unwrap()
    }

    #[test]
    fn patch_counts() {
        let v = ramp(Dims::cube(5));
        assert_eq!(extract_patches(&v, 5).unwrap().len(), 1);
        let v = ramp(Dims::new(6, 5, 5));
        let ps = extract_patches(&v, 5).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps.corner(1), [1, 0, 0]);
        let v = ramp(Dims::new(16, 16, 5));
        assert_eq!(extract_patches(&v, 5).unwrap().len(), 144);
        let v = ramp(Dims::new(4, 16, 16));
        assert!(extract_patches(&v, 5).is_err());
    }

    #[test]
    fn single_patch_features_are_the_volume() {
        let dims = Dims::cube(3);
        let v = ramp(dims);
        let f = extract_patches(&v, 3).unwrap().features(0);
        assert_eq!(f.len(), 4 * 27);
        for i in 0..27 {
            assert_eq!(f[i], i as f32);
            assert_eq!(f[27 + i], 0.0);
            assert_eq!(f[54 + i], 1.0);
            assert_eq!(f[81 + i], -(i as f32));
        }
    }

    #[test]
    fn distance_examples() {
        let n = 125;
        let q = vec![0.5f32; 4 * n];
        assert_eq!(patch_distance(&q, &q, 0.5), 0.0);
        let mut k = q.clone();
        k[0] = 3.0;
        assert_eq!(patch_distance(&q, &k, 1.0), 0.0);
        // |dA|^2 = 0.8 and |dG|^2 = 0.4
        let mut q = vec![0f32; 4 * n];
        let k = vec![0f32; 4 * n];
        q[n] = 0.8f32.sqrt();
        q[0] = 0.4f32.sqrt();
        let d = patch_distance(&q, &k, 0.5);
        assert!((d - 0.6).abs() < 1e-7, "{d}");
    }

    #[test]
    fn pair_distance_matches_rows() {
        let dims = Dims::new(7, 6, 8);
        let data = (0..dims.count())
            .map(|i| {
                let f = i as f32;
                [(f * 0.37).sin(), (f * 0.11).cos(), (f * 0.05).sin(), 0.3]
            })
            .collect();
        let v = FeatureVolume::new(dims, data).unwrap();
        let ps = extract_patches(&v, 3).unwrap();
        for (i, j) in [(0, 5), (17, 3), (ps.len() - 1, 0)] {
            let a = patch_distance(&ps.features(i), &ps.features(j), 0.3);
            let b = pair_distance(&ps, i, &ps, j, 0.3, f64::INFINITY);
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }
}
