//! Emission-absorption volume rendering of voxel grids and mapped scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BBox, MappingField, Vec3, VoxelGrid, SH_COEFFS};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];

/// Default focal length in pixels.
pub const DEFAULT_FOCAL: f64 = 512.0;

fn sh_basis(d: &Vec3) -> [f64; 9] {
    let (x, y, z) = (d[0], d[1], d[2]);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * z * z - x * x - y * y),
        SH_C2[3] * x * z,
        SH_C2[4] * (x * x - y * y),
    ]
}

/// Degree-2 SH color before clamping. Coefficients are laid out as 9 per
/// color channel.
pub fn eval_sh_unclamped(h: &[f32; SH_COEFFS], d: &Vec3) -> [f64; 3] {
    let b = sh_basis(d);
    [0, 1, 2].map(|c| (0..9).map(|k| h[9 * c + k] as f64 * b[k]).sum())
}

/// Degree-2 SH color clamped to [0, 1].
pub fn eval_sh(h: &[f32; SH_COEFFS], d: &Vec3) -> [f64; 3] {
    eval_sh_unclamped(h, d).map(|v| v.clamp(0.0, 1.0))
}

/// Pinhole camera; `up` is only a hint and is re-orthogonalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        position: Vec3,
        look_at: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if (position - look_at).norm() < 1e-12 {
            return Err(Error::invalid("camera position equals its look-at point"));
        }
        if !(focal > 0.0) || width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "camera needs a positive focal and resolution, got focal {focal}, {width}x{height}"
            )));
        }
        Ok(Camera {
            position,
            look_at,
            up,
            focal,
            width,
            height,
        })
    }

    /// Focal length in pixels for a horizontal field of view in degrees.
    pub fn focal_for_fov(fov_deg: f64, width: usize) -> f64 {
        0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan()
    }

    fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.position).normalize();
        let mut up = self.up;
        if up.cross(&forward).norm() < 1e-9 {
            up = if forward[1].abs() < 0.9 { Vec3::y() } else { Vec3::x() };
        }
        let right = forward.cross(&up).normalize();
        let true_up = right.cross(&forward);
        (forward, right, true_up)
    }

    /// Unit direction through the center of pixel (`px`, `py`); rows go
    /// top to bottom.
    pub fn ray_dir(&self, px: usize, py: usize) -> Vec3 {
        let (f, r, u) = self.frame();
        let sx = px as f64 + 0.5 - 0.5 * self.width as f64;
        let sy = py as f64 + 0.5 - 0.5 * self.height as f64;
        (f * self.focal + r * sx - u * sy).normalize()
    }
}

/// RGB image, row-major, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    /// Per-pixel intensity (mean of RGB).
    pub fn intensity(&self) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] as f64 - b[c] as f64).abs()))
            .fold(0.0, f64::max)
    }

    pub fn mse(&self, other: &Image) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] as f64 - b[c] as f64).powi(2)))
            .sum();
        sum / (3 * self.pixels.len()) as f64
    }

    /// PSNR in dB for unit peak; identical images give infinity.
    pub fn psnr(&self, other: &Image) -> f64 {
        let mse = self.mse(other);
        if mse == 0.0 {
            f64::INFINITY
        } else {
            -10.0 * mse.log10()
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }
}

/// What to render: a grid directly, or a mapping field read through an
/// exemplar.
#[derive(Clone, Copy, Debug)]
pub enum Scene<'a> {
    Grid(&'a VoxelGrid),
    Mapped {
        field: &'a MappingField,
        exemplar: &'a VoxelGrid,
    },
}

impl Scene<'_> {
    pub fn bbox(&self) -> &BBox {
        match self {
            Scene::Grid(g) => g.bbox(),
            Scene::Mapped { field, .. } => field.bbox(),
        }
    }

    /// Smallest voxel edge of the scene.
    pub fn voxel_size(&self) -> f64 {
        let v = match self {
            Scene::Grid(g) => g.voxel_size(),
            Scene::Mapped { field, .. } => field.voxel_size(),
        };
        v.into_iter().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    fn sample(&self, x: &Vec3) -> (f32, [f32; SH_COEFFS]) {
        match self {
            Scene::Grid(g) => g.sample(x),
            Scene::Mapped { field, exemplar } => exemplar.sample(&field.map_query(x)),
        }
    }
}

/// Ray/box slab test; returns the parametric entry and exit distances.
fn intersect_box(origin: &Vec3, dir: &Vec3, bbox: &BBox) -> Option<(f64, f64)> {
    let h = bbox.half_extents();
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a].abs() > h[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let mut ta = (-h[a] - origin[a]) * inv;
        let mut tb = (h[a] - origin[a]) * inv;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    (t1 > t0).then_some((t0, t1))
}

/// Marches one ray and returns the composited color over white.
fn march(scene: &Scene, origin: &Vec3, dir: &Vec3, step: f64) -> [f32; 3] {
    let Some((t0, t1)) = intersect_box(origin, dir, scene.bbox()) else {
        return [1.0; 3];
    };
    let mut color = [0f64; 3];
    let mut trans = 1f64;
    let mut t = t0;
    while t < t1 {
        let seg = step.min(t1 - t);
        let x = origin + dir * (t + 0.5 * seg);
        let (rho, h) = scene.sample(&x);
        if rho > 0.0 {
            let alpha = 1.0 - (-(rho as f64) * seg).exp();
            let c = eval_sh(&h, dir);
            let w = trans * alpha;
            for k in 0..3 {
                color[k] += w * c[k];
            }
            trans *= 1.0 - alpha;
        }
        t += seg;
    }
    color.map(|c| (c + trans) as f32)
}

/// Renders `scene` from `camera`. `step` defaults to half the voxel size.
pub fn render(scene: &Scene, camera: &Camera, step: Option<f64>) -> Result<Image> {
    let step = step.unwrap_or(0.5 * scene.voxel_size());
    if !(step > 0.0) {
        return Err(Error::invalid(format!("render step must be positive, got {step}")));
    }
    let (w, h) = (camera.width, camera.height);
    let pixels = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let dir = camera.ray_dir(i % w, i / w);
            march(scene, &camera.position, &dir, step)
        })
        .collect();
    Ok(Image {
        width: w,
        height: h,
        pixels,
    })
}

/// `k` cameras on the upper hemisphere of `radius`, all looking at the
/// origin. Heights go from the zenith down to the horizon; azimuths follow
/// the golden angle with a seeded offset.
pub fn sample_cameras(
    k: usize,
    radius: f64,
    focal: f64,
    resolution: (usize, usize),
    seed: u64,
) -> Result<Vec<Camera>> {
    if k == 0 || !(radius > 0.0) {
        return Err(Error::invalid(format!(
            "camera sampling needs k >= 1 and a positive radius, got k={k}, radius={radius}"
        )));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let offset = ChaCha8Rng::seed_from_u64(seed).random::<f64>() * std::f64::consts::TAU;
    (0..k)
        .map(|i| {
            let z = if k == 1 { 1.0 } else { 1.0 - i as f64 / (k - 1) as f64 };
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = offset + golden * i as f64;
            let pos = Vec3::new(r * phi.cos(), r * phi.sin(), z) * radius;
            Camera::new(pos, Vec3::zeros(), Vec3::z(), focal, resolution.0, resolution.1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;

    #[test]
    fn sh_examples() {
        let mut h = [0f32; 27];
        for c in 0..3 {
            h[9 * c] = (1.0 / SH_C0) as f32;
        }
        let d = Vec3::new(0.3, -0.2, 0.5).normalize();
        for v in eval_sh(&h, &d) {
            assert!((v - 1.0).abs() < 1e-6);
        }
        assert_eq!(eval_sh(&[0.0; 27], &d), [0.0; 3]);

        let mut hz = [0f32; 27];
        hz[2] = 1.0;
        let up = eval_sh_unclamped(&hz, &Vec3::z())[0];
        let down = eval_sh_unclamped(&hz, &-Vec3::z())[0];
        assert_eq!(up, -down);
        assert!((up - SH_C1).abs() < 1e-12);
    }

    #[test]
    fn sh_basis_is_orthonormal_on_the_sphere() {
        // Fibonacci sphere quadrature of Y_i Y_j.
        let n = 20_000;
        let mut gram = [[0f64; 9]; 9];
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for i in 0..n {
            let z = 1.0 - (i as f64 + 0.5) * 2.0 / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let b = sh_basis(&Vec3::new(r * phi.cos(), r * phi.sin(), z));
            for a in 0..9 {
                for c in 0..9 {
                    gram[a][c] += b[a] * b[c] * 4.0 * std::f64::consts::PI / n as f64;
                }
            }
        }
        for a in 0..9 {
            for c in 0..9 {
                let e = if a == c { 1.0 } else { 0.0 };
                assert!((gram[a][c] - e).abs() < 1e-3, "{a},{c}: {}", gram[a][c]);
            }
        }
    }

    fn box_grid(rho: f32) -> VoxelGrid {
        let dims = Dims::cube(8);
        let n = dims.count();
        VoxelGrid::new(dims, BBox::normalized(dims), vec![rho; n], vec![[0.0; 27]; n]).unwrap()
    }

    #[test]
    fn empty_grid_renders_white() {
        let g = box_grid(0.0);
        let cam = Camera::new(Vec3::new(0.0, -3.0, 0.5), Vec3::zeros(), Vec3::z(), 16.0, 8, 8)
            .unwrap();
        let img = render(&Scene::Grid(&g), &cam, None).unwrap();
        assert!(img.pixels.iter().all(|p| *p == [1.0; 3]));
    }

    #[test]
    fn homogeneous_box_transmittance() {
        let rho = 1.3;
        let g = box_grid(rho);
        let cam = Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 4.0, 1, 1)
            .unwrap();
        let expect = (-(rho as f64) * 2.0).exp();
        let voxel = 0.25;
        let a = render(&Scene::Grid(&g), &cam, Some(voxel / 4.0)).unwrap();
        let b = render(&Scene::Grid(&g), &cam, Some(voxel / 8.0)).unwrap();
        assert!((a.pixels[0][0] as f64 - expect).abs() < 1e-3);
        assert!((a.pixels[0][0] - b.pixels[0][0]).abs() <= 5e-4);
    }

    #[test]
    fn identity_mapping_renders_like_the_grid() {
        let g = crate::procedural::procedural_exemplar(
            crate::procedural::ExemplarKind::Blobs,
            Dims::new(20, 18, 16),
            1,
        )
        .unwrap();
        let field = MappingField::identity(g.dims(), *g.bbox(), *g.bbox());
        for cam in sample_cameras(3, 2.5, 24.0, (24, 24), 0).unwrap() {
            let a = render(&Scene::Grid(&g), &cam, None).unwrap();
            let b = render(&Scene::Mapped { field: &field, exemplar: &g }, &cam, None).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-6);
        }
    }

    #[test]
    fn camera_protocol() {
        let cams = sample_cameras(50, 2.5, DEFAULT_FOCAL, (512, 512), 3).unwrap();
        assert_eq!(cams.len(), 50);
        for c in &cams {
            assert!((c.position.norm() - 2.5).abs() < 1e-12);
            assert!(c.position[2] >= 0.0);
            assert_eq!(c.focal, 512.0);
        }
        let one = sample_cameras(1, 2.0, 10.0, (4, 4), 9).unwrap();
        assert!((one[0].position - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
        // the zenith camera still gets a valid frame
        let d = one[0].ray_dir(2, 2);
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(sample_cameras(0, 1.0, 1.0, (1, 1), 0).is_err());
    }

    #[test]
    fn transmittance_never_increases() {
        let g = crate::procedural::procedural_exemplar(
            crate::procedural::ExemplarKind::Terrain,
            Dims::cube(16),
            4,
        )
        .unwrap();
        let scene = Scene::Grid(&g);
        let origin = Vec3::new(-2.0, -1.5, 1.0);
        let dir = (Vec3::new(0.2, 0.1, -0.4) - origin).normalize();
        let (t0, t1) = intersect_box(&origin, &dir, scene.bbox()).unwrap();
        let mut trans = 1.0f64;
        let mut t = t0;
        while t < t1 {
            let seg = 0.01f64.min(t1 - t);
            let (rho, _) = scene.sample(&(origin + dir * (t + 0.5 * seg)));
            let next = trans * (-(rho as f64) * seg).exp();
            assert!(next <= trans);
            trans = next;
            t += seg;
        }
    }
}
