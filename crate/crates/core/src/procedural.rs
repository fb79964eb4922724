//! Procedurally generated exemplars for experiments without trained
//! radiance grids. All generators are deterministic in their seed.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{center_unchecked, BBox, Dims, Vec3, VoxelGrid, SH_COEFFS};
use crate::render::SH_C0;

const MAX_DENSITY: f32 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExemplarKind {
    Terrain,
    Arches,
    Blobs,
}

impl FromStr for ExemplarKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "terrain" => Ok(ExemplarKind::Terrain),
            "arches" => Ok(ExemplarKind::Arches),
            "blobs" => Ok(ExemplarKind::Blobs),
            other => Err(Error::invalid(format!(
                "unknown exemplar kind {other:?} (expected terrain, arches or blobs)"
            ))),
        }
    }
}

pub fn procedural_exemplar(kind: ExemplarKind, dims: Dims, seed: u64) -> Result<VoxelGrid> {
    if dims.min() < 16 {
        return Err(Error::invalid(format!(
            "procedural exemplars need at least 16 voxels per axis, got {dims}"
        )));
    }
    let bbox = BBox::normalized(dims);
    let voxel = bbox.voxel_size(dims)[0];
    let noise = ValueNoise::new(seed);
    let mut density = vec![0f32; dims.count()];
    let mut sh = vec![[0f32; SH_COEFFS]; dims.count()];

    match kind {
        ExemplarKind::Terrain => {
            let [dx, dy, dz] = dims.0;
            for y in 0..dy {
                for x in 0..dx {
                    let p = center_unchecked(dims, &bbox, [x, y, 0]);
                    let hf = 0.2 + 0.4 * noise.fbm2(p[0] * 2.5, p[1] * 2.5, 4);
                    let height = hf * dz as f64;
                    let tint = noise.fbm2(p[0] * 6.0 + 17.0, p[1] * 6.0 - 5.0, 2);
                    for z in 0..dz {
                        let i = dims.index([x, y, z]);
                        let fill = (height - z as f64).clamp(0.0, 1.0) as f32;
                        density[i] = MAX_DENSITY * fill;
                        if fill > 0.0 {
                            let alt = (z as f64 + 0.5) / (0.6 * dz as f64);
                            let color = altitude_color(alt + 0.15 * (tint - 0.5));
                            sh[i] = encode_color(color, &noise, p[0], p[1], z as f64 * voxel);
                        }
                    }
                }
            }
        }
        ExemplarKind::Arches => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5C3);
            let h = bbox.half_extents();
            let ground = -h[2] + 0.2 * 2.0 * h[2];
            let arches: Vec<(Vec3, f64, f64)> = (0..3)
                .map(|_| {
                    let c = Vec3::new(
                        rng.random_range(-0.6..0.6) * h[0],
                        rng.random_range(-0.6..0.6) * h[1],
                        ground,
                    );
                    let major = rng.random_range(0.25..0.4) * h[2].min(h[0]) * 2.0;
                    let minor = rng.random_range(0.06..0.1) * h[0];
                    (c, major, minor)
                })
                .collect();
            for i in 0..dims.count() {
                let p = center_unchecked(dims, &bbox, dims.coords(i));
                let bump = 0.05 * 2.0 * h[2] * noise.fbm2(p[0] * 4.0, p[1] * 4.0, 3);
                let mut sdf = p[2] - (ground + bump);
                for (c, major, minor) in &arches {
                    // torus in the x-z plane
                    let q = p - c;
                    let ring = ((q[0] * q[0] + q[2] * q[2]).sqrt() - major).hypot(q[1]) - minor;
                    sdf = sdf.min(ring);
                }
                let fill = (0.5 - sdf / voxel).clamp(0.0, 1.0) as f32;
                density[i] = MAX_DENSITY * fill;
                if fill > 0.0 {
                    let t = noise.fbm2(p[0] * 8.0 + p[2] * 3.0, p[1] * 8.0, 2);
                    let color = [0.55 + 0.2 * t, 0.45 + 0.15 * t, 0.35 + 0.1 * t];
                    sh[i] = encode_color(color, &noise, p[0], p[1], p[2]);
                }
            }
        }
        ExemplarKind::Blobs => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB10B);
            let h = bbox.half_extents();
            let blobs: Vec<(Vec3, f64, [f64; 3])> = (0..8)
                .map(|_| {
                    let c = Vec3::new(
                        rng.random_range(-0.7..0.7) * h[0],
                        rng.random_range(-0.7..0.7) * h[1],
                        rng.random_range(-0.8..0.3) * h[2],
                    );
                    let r = rng.random_range(0.1..0.25) * h[0].min(h[1]).min(h[2] * 2.0);
                    let color = [rng.random(), rng.random(), rng.random()];
                    (c, r, color)
                })
                .collect();
            for i in 0..dims.count() {
                let p = center_unchecked(dims, &bbox, dims.coords(i));
                let mut best = f64::INFINITY;
                let mut color = [0.0; 3];
                for (c, r, col) in &blobs {
                    let d = (p - c).norm() - r;
                    if d < best {
                        best = d;
                        color = *col;
                    }
                }
                let fill = (0.5 - best / voxel).clamp(0.0, 1.0) as f32;
                density[i] = MAX_DENSITY * fill;
                if fill > 0.0 {
                    sh[i] = encode_color(color, &noise, p[0], p[1], p[2]);
                }
            }
        }
    }
    VoxelGrid::new(dims, bbox, density, sh)
}

fn altitude_color(a: f64) -> [f64; 3] {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (0.0, [0.76, 0.70, 0.50]),
        (0.35, [0.30, 0.55, 0.25]),
        (0.7, [0.50, 0.45, 0.40]),
        (1.0, [0.95, 0.95, 0.97]),
    ];
    let a = a.clamp(0.0, 1.0);
    for w in STOPS.windows(2) {
        let (a0, c0) = w[0];
        let (a1, c1) = w[1];
        if a <= a1 {
            let t = (a - a0) / (a1 - a0);
            return [0, 1, 2].map(|k| c0[k] + t * (c1[k] - c0[k]));
        }
    }
    STOPS[3].1
}

/// DC term reproducing `color`, plus a small view-dependent degree-1 part.
fn encode_color(color: [f64; 3], noise: &ValueNoise, x: f64, y: f64, z: f64) -> [f32; SH_COEFFS] {
    let mut sh = [0f32; SH_COEFFS];
    for c in 0..3 {
        sh[9 * c] = (color[c] / SH_C0) as f32;
        for k in 1..4 {
            let n = noise.value3(x * 9.0 + k as f64 * 3.1, y * 9.0 - c as f64, z * 9.0);
            sh[9 * c + k] = (0.05 * (n - 0.5)) as f32;
        }
    }
    sh
}

/// Hashed-lattice value noise.
struct ValueNoise {
    seed: u64,
}

impl ValueNoise {
    fn new(seed: u64) -> Self {
        ValueNoise { seed }
    }

    fn hash(&self, x: i64, y: i64, z: i64) -> f64 {
        let mut h = self.seed
            ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
        h = splitmix64(h);
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn value3(&self, x: f64, y: f64, z: f64) -> f64 {
        let (x0, y0, z0) = (x.floor(), y.floor(), z.floor());
        let (fx, fy, fz) = (smooth(x - x0), smooth(y - y0), smooth(z - z0));
        let (ix, iy, iz) = (x0 as i64, y0 as i64, z0 as i64);
        let mut acc = 0.0;
        for c in 0..8 {
            let (bx, by, bz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let w = (if bx == 1 { fx } else { 1.0 - fx })
                * (if by == 1 { fy } else { 1.0 - fy })
                * (if bz == 1 { fz } else { 1.0 - fz });
            acc += w * self.hash(ix + bx, iy + by, iz + bz);
        }
        acc
    }

    /// Fractal sum of 2D value noise, normalized to [0, 1].
    fn fbm2(&self, x: f64, y: f64, octaves: u32) -> f64 {
        let mut sum = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut freq = 1.0;
        for o in 0..octaves {
            sum += amp * self.value3(x * freq, y * freq, 101.0 * o as f64);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        sum / norm
    }
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

#[inline]
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
