//! Feature transform from a raw radiance grid to the matching space:
//! a truncated signed distance to the extracted surface, plus a 3-channel
//! PCA projection of the normalized SH coefficients.

mod marching_cubes;
mod mc_tables;
pub mod mesh;
pub mod pca;

use std::collections::VecDeque;

use rayon::prelude::*;

pub use marching_cubes::marching_cubes;
pub use mesh::{Mesh, TriangleBins};
pub use pca::{pca_fit, pca_project, PcaModel};

use crate::error::Result;
use crate::grid::{center_unchecked, FeatureVolume, TransformedGrid, VoxelGrid, SH_COEFFS};

/// Marks enclosed empty cavities as solid: empty voxels (density below the
/// grid's threshold) that cannot be reached from the grid boundary through
/// 6-connected empty voxels get `fill_density`.
pub fn flood_fill_interior(grid: &VoxelGrid, fill_density: f32) -> VoxelGrid {
    let dims = grid.dims();
    let thr = grid.threshold();
    let density = grid.density();
    let empty = |i: usize| density[i] < thr;
    let mut reached = vec![false; dims.count()];
    let mut queue = VecDeque::new();
    let [dx, dy, dz] = dims.0;
    for i in 0..dims.count() {
        let [x, y, z] = dims.coords(i);
        let boundary = x == 0 || y == 0 || z == 0 || x == dx - 1 || y == dy - 1 || z == dz - 1;
        if boundary && empty(i) {
            reached[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let c = dims.coords(i);
        for axis in 0..3 {
            for step in [-1isize, 1] {
                let v = c[axis] as isize + step;
                if v < 0 || v >= dims[axis] as isize {
                    continue;
                }
                let mut n = c;
                n[axis] = v as usize;
                let j = dims.index(n);
                if !reached[j] && empty(j) {
                    reached[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    let filled: Vec<f32> = density
        .iter()
        .enumerate()
        .map(|(i, &d)| if empty(i) && !reached[i] { fill_density } else { d })
        .collect();
    VoxelGrid::with_threshold(dims, *grid.bbox(), filled, grid.sh().to_vec(), thr)
        .expect("same layout as the input grid")
}

/// Output of [`truncated_sdf`].
#[derive(Clone, Debug)]
pub struct Tsdf {
    /// Per-voxel value in [-1, 1], negative inside.
    pub values: Vec<f32>,
    /// The surface mesh was empty, so every voxel got the far value.
    pub empty_mesh: bool,
}

/// Truncated signed distance `clamp(sdf / t, -1, 1)` at every voxel center.
/// The unsigned distance is the exact distance to `mesh`; the sign is
/// negative for occupied voxels of `grid`.
///
/// With an empty mesh every voxel gets the far value (`-1` inside, `+1`
/// outside).
pub fn truncated_sdf(grid: &VoxelGrid, mesh: &Mesh, t: f64) -> Tsdf {
    assert!(t > 0.0, "truncation distance must be positive");
    let dims = grid.dims();
    let occupied = grid.occupied();
    let sign = |i: usize| if occupied[i] { -1.0f64 } else { 1.0 };
    if mesh.is_empty() {
        log::warn!("surface extraction produced no triangles; SDF set to the far value");
        return Tsdf {
            values: (0..dims.count()).map(|i| sign(i) as f32).collect(),
            empty_mesh: true,
        };
    }
    let bins = TriangleBins::new(mesh, t);
    let bbox = *grid.bbox();
    let values = (0..dims.count())
        .into_par_iter()
        .map(|i| {
            let p = center_unchecked(dims, &bbox, dims.coords(i));
            let d = bins.distance_within(&p, t).map_or(1.0, |d| d / t);
            (sign(i) * d).clamp(-1.0, 1.0) as f32
        })
        .collect();
    Tsdf {
        values,
        empty_mesh: false,
    }
}

/// Whole-vector L2 normalization; near-zero vectors map to zero.
pub fn normalize_sh(sh: &[f32; SH_COEFFS]) -> [f32; SH_COEFFS] {
    let norm = sh.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm < 1e-8 {
        return [0.0; SH_COEFFS];
    }
    sh.map(|v| (v as f64 / norm) as f32)
}

/// Fits the appearance PCA on the normalized SH of the occupied voxels.
pub fn fit_appearance_pca(grid: &VoxelGrid, k: usize) -> Result<PcaModel> {
    let samples: Vec<[f32; SH_COEFFS]> = grid
        .sh()
        .iter()
        .zip(grid.occupied())
        .filter(|(_, &o)| o)
        .map(|(h, _)| normalize_sh(h))
        .collect();
    pca_fit(&samples, k)
}

#[derive(Clone, Debug)]
pub struct TransformOutput {
    pub grid: TransformedGrid,
    pub empty_mesh: bool,
}

/// Full transform of one exemplar level: cavity fill, surface extraction at
/// the occupancy threshold, truncated SDF with `t = t_multiplier * voxel
/// size`, and PCA appearance (zero on unoccupied voxels).
pub fn transform_exemplar(
    grid: &VoxelGrid,
    t_multiplier: f64,
    pca: &PcaModel,
    fill_density: f32,
) -> Result<TransformOutput> {
    let dims = grid.dims();
    let filled = flood_fill_interior(grid, fill_density);
    let mesh = if dims.min() >= 2 {
        marching_cubes(dims, grid.bbox(), filled.density(), grid.threshold())?
    } else {
        Mesh::default()
    };
    let voxel = grid.voxel_size().into_iter().fold(0.0f64, f64::max);
    let tsdf = truncated_sdf(&filled, &mesh, t_multiplier * voxel);
    let data = tsdf
        .values
        .iter()
        .zip(grid.sh().iter().zip(grid.occupied()))
        .map(|(&g, (h, &occ))| {
            if occ {
                let p = pca.project(&normalize_sh(h));
                let a = |k: usize| p.get(k).copied().unwrap_or(0.0) as f32;
                [g, a(0), a(1), a(2)]
            } else {
                [g, 0.0, 0.0, 0.0]
            }
        })
        .collect();
    Ok(TransformOutput {
        grid: TransformedGrid {
            bbox: *grid.bbox(),
            volume: FeatureVolume::new(dims, data)?,
        },
        empty_mesh: tsdf.empty_mesh,
    })
}
