//! Multi-scale exemplar pyramid.

use std::path::Path;

use rayon::prelude::*;

use crate::config::{round_half_up, SynthesisConfig};
use crate::error::{Error, Result};
use crate::grid::{center_unchecked, BBox, Dims, TransformedGrid, Vec3, VoxelGrid, SH_COEFFS};
use crate::io;
use crate::xform::{fit_appearance_pca, transform_exemplar, PcaModel};

/// One pyramid level: raw grid, matching features and the PCA used for them.
#[derive(Clone, Debug)]
pub struct PyramidLevel {
    pub grid: VoxelGrid,
    pub features: TransformedGrid,
    pub pca: PcaModel,
}

#[derive(Clone, Debug)]
pub struct ExemplarPyramid {
    /// Coarse to fine.
    pub levels: Vec<PyramidLevel>,
    /// Optional higher-resolution grid for the final readout.
    pub high_res: Option<VoxelGrid>,
}

impl ExemplarPyramid {
    pub fn bbox(&self) -> &BBox {
        self.levels[0].grid.bbox()
    }

    pub fn finest(&self) -> &PyramidLevel {
        self.levels.last().expect("pyramid has levels")
    }

    pub fn level_dims(&self) -> Vec<Dims> {
        self.levels.iter().map(|l| l.grid.dims()).collect()
    }

    /// Grid used to read out final results: the high-resolution exemplar if
    /// present, otherwise the finest level.
    pub fn readout(&self) -> &VoxelGrid {
        self.high_res.as_ref().unwrap_or(&self.finest().grid)
    }
}

/// Dims of a grid whose longest axis has `max_dim` voxels, following the
/// aspect of `reference` (rounded half-up, at least 1).
pub fn dims_for_max(reference: Dims, max_dim: usize) -> Dims {
    let m = reference.max() as f64;
    Dims([0, 1, 2].map(|a| round_half_up(reference[a] as f64 * max_dim as f64 / m).max(1)))
}

/// Per-level exemplar dims for `config`'s max-dim schedule.
pub fn scale_schedule(config: &SynthesisConfig, exemplar: Dims) -> Result<Vec<Dims>> {
    config.validate()?;
    Ok(config
        .max_dim_schedule
        .iter()
        .map(|&m| dims_for_max(exemplar, m))
        .collect())
}

/// Synthesis dims per level for a target finest size: each axis of each
/// level scales the matching exemplar level by `target / finest` (rounded
/// half-up).
pub fn synthesis_schedule(exemplar_levels: &[Dims], target: Dims) -> Vec<Dims> {
    let finest = *exemplar_levels.last().expect("non-empty schedule");
    exemplar_levels
        .iter()
        .map(|lvl| {
            Dims([0, 1, 2].map(|a| {
                if target[a] == finest[a] {
                    lvl[a]
                } else {
                    round_half_up(lvl[a] as f64 * target[a] as f64 / finest[a] as f64).max(1)
                }
            }))
        })
        .collect()
}

/// Box-filtered trilinear resampling of density and SH onto `dims` over the
/// same box.
pub fn resample_grid(grid: &VoxelGrid, dims: Dims) -> Result<VoxelGrid> {
    let src = grid.dims();
    let bbox = *grid.bbox();
    let ss = [0, 1, 2].map(|a| src[a].div_ceil(dims[a]).clamp(1, 4));
    let step = bbox.voxel_size(dims);
    let n_sub = (ss[0] * ss[1] * ss[2]) as f64;
    let samples: Vec<(f32, [f32; SH_COEFFS])> = (0..dims.count())
        .into_par_iter()
        .map(|i| {
            let c = center_unchecked(dims, &bbox, dims.coords(i));
            let mut d = 0f64;
            let mut h = [0f64; SH_COEFFS];
            for sz in 0..ss[2] {
                for sy in 0..ss[1] {
                    for sx in 0..ss[0] {
                        let off = [sx, sy, sz];
                        let p = Vec3::from_fn(|a, _| {
                            c[a] + ((off[a] as f64 + 0.5) / ss[a] as f64 - 0.5) * step[a]
                        });
                        let (sd, sh) = grid.sample(&p);
                        d += sd as f64;
                        for k in 0..SH_COEFFS {
                            h[k] += sh[k] as f64;
                        }
                    }
                }
            }
            ((d / n_sub) as f32, h.map(|v| (v / n_sub) as f32))
        })
        .collect();
    let (density, sh): (Vec<f32>, Vec<[f32; SH_COEFFS]>) = samples.into_iter().unzip();
    VoxelGrid::with_threshold(dims, bbox, density, sh, grid.threshold())
}

/// Fits the level PCA and computes the matching features.
pub fn build_level(grid: VoxelGrid, config: &SynthesisConfig) -> Result<PyramidLevel> {
    let pca = fit_appearance_pca(&grid, config.pca_components)?;
    let out = transform_exemplar(&grid, config.sdf_truncation, &pca, config.fill_density)?;
    if out.empty_mesh {
        log::warn!("level {} has no extractable surface", grid.dims());
    }
    Ok(PyramidLevel {
        grid,
        features: out.grid,
        pca,
    })
}

/// Builds every level by downsampling `fine` to the schedule.
pub fn build_pyramid(fine: &VoxelGrid, config: &SynthesisConfig) -> Result<ExemplarPyramid> {
    let dims = scale_schedule(config, fine.dims())?;
    let finest = *dims.last().expect("validated schedule");
    if !fine.dims().covers(finest) {
        return Err(Error::invalid(format!(
            "exemplar {} is smaller than the finest scheduled level {finest}",
            fine.dims()
        )));
    }
    let fine = with_threshold(fine, config.density_threshold)?;
    let levels = dims
        .iter()
        .map(|&d| {
            let grid = if d == fine.dims() {
                fine.clone()
            } else {
                resample_grid(&fine, d)?
            };
            build_level(grid, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let high_res = (fine.dims() != finest).then_some(fine);
    Ok(ExemplarPyramid { levels, high_res })
}

/// Loads `level_0.vxg .. level_N.vxg` (and `high.vxg` if present) from a
/// directory and computes the features of each level.
pub fn load_pyramid(dir: &Path, config: &SynthesisConfig) -> Result<ExemplarPyramid> {
    config.validate()?;
    let mut levels = Vec::new();
    for n in 0..config.scales() {
        let path = dir.join(format!("level_{n}.vxg"));
        let grid = with_threshold(&io::read_voxel_grid(&path)?, config.density_threshold)?;
        levels.push(grid);
    }
    if dir.join(format!("level_{}.vxg", config.scales())).exists() {
        return Err(Error::invalid(format!(
            "{} holds more levels than the {} configured scales",
            dir.display(),
            config.scales()
        )));
    }
    for w in levels.windows(2) {
        if w[0].dims().max() >= w[1].dims().max() {
            return Err(Error::invalid(
                "pyramid level resolutions must strictly increase".to_string(),
            ));
        }
    }
    let high = dir.join("high.vxg");
    let high_res = if high.exists() {
        Some(with_threshold(&io::read_voxel_grid(&high)?, config.density_threshold)?)
    } else {
        None
    };
    // All levels share one box.
    let bbox = *levels[0].bbox();
    let levels = levels
        .into_iter()
        .map(|g| {
            let (dims, _, density, sh) = g.into_parts();
            let g = VoxelGrid::with_threshold(dims, bbox, density, sh, config.density_threshold)?;
            build_level(g, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExemplarPyramid { levels, high_res })
}

/// Writes a pyramid in the layout read by [`load_pyramid`].
pub fn save_pyramid(pyramid: &ExemplarPyramid, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (n, level) in pyramid.levels.iter().enumerate() {
        io::write_voxel_grid(&dir.join(format!("level_{n}.vxg")), &level.grid)?;
    }
    if let Some(h) = &pyramid.high_res {
        io::write_voxel_grid(&dir.join("high.vxg"), h)?;
    }
    Ok(())
}

fn with_threshold(grid: &VoxelGrid, threshold: f32) -> Result<VoxelGrid> {
    if grid.threshold() == threshold {
        return Ok(grid.clone());
    }
    let (dims, bbox, density, sh) = grid.clone().into_parts();
    VoxelGrid::with_threshold(dims, bbox, density, sh, threshold)
}
