//! Coarse-to-fine synthesis and the applications built on it.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::SynthesisConfig;
use crate::error::{Error, Result};
use crate::grid::{
    center_unchecked, resolve_features, BBox, Dims, FeatureVolume, MappingField, TransformedGrid, Vec3,
    VoxelGrid,
};
use crate::nnf::nnf_scale_pass;
use crate::pyramid::{synthesis_schedule, ExemplarPyramid};

/// Identity field plus i.i.d. Gaussian noise of std `sigma * half_extent`
/// per axis, clamped to the exemplar box.
pub fn init_coarse(dims: Dims, bbox: BBox, exemplar_bbox: BBox, sigma: f64, seed: u64) -> Result<MappingField> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be non-negative, got {sigma}")));
    }
    let identity = MappingField::identity(dims, bbox, exemplar_bbox);
    if sigma == 0.0 {
        return Ok(identity);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = exemplar_bbox.half_extents();
    let noise = [0, 1, 2].map(|a| Normal::new(0.0, sigma * h[a]).expect("finite std"));
    let coords = identity
        .coords()
        .iter()
        .map(|c| Vec3::from_fn(|a, _| c[a] + noise[a].sample(&mut rng)))
        .collect();
    Ok(MappingField::new(dims, bbox, exemplar_bbox, coords)?.0)
}

/// How scale 0 is initialized.
#[derive(Clone, Debug)]
pub enum Init {
    /// Identity shuffled with noise of the given sigma.
    Noise(f64),
    /// Unshuffled identity (stretched if the synthesis box differs).
    Identity,
    /// A given coarse mapping field.
    Field(MappingField),
    /// A given coarse query feature volume with an identity mapping.
    Features(FeatureVolume),
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleRecord {
    pub scale: usize,
    pub synthesis_dims: [usize; 3],
    pub exemplar_dims: [usize; 3],
    pub search: &'static str,
    pub iterations: usize,
    pub converged_early: bool,
    pub mean_patch_distance: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunLog {
    pub config: SynthesisConfig,
    pub seed: u64,
    pub init: String,
    pub target_dims: [usize; 3],
    pub scales: Vec<ScaleRecord>,
    pub total_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub field: MappingField,
    pub log: RunLog,
}

/// Synthesis box for `target` dims: the exemplar box scaled per axis so
/// that finest-level voxel sizes match.
pub fn synthesis_bbox(pyramid: &ExemplarPyramid, target: Dims) -> Result<BBox> {
    let fine = pyramid.finest().grid.dims();
    pyramid
        .bbox()
        .scaled([0, 1, 2].map(|a| target[a] as f64 / fine[a] as f64))
}

/// Per-scale synthesis dims for a finest-level `target`.
pub fn synthesis_dims(pyramid: &ExemplarPyramid, target: Dims) -> Vec<Dims> {
    synthesis_schedule(&pyramid.level_dims(), target)
}

/// Runs the full coarse-to-fine loop.
pub fn synthesize(
    pyramid: &ExemplarPyramid,
    config: &SynthesisConfig,
    target: Dims,
    init: Init,
    seed: u64,
) -> Result<Synthesis> {
    config.validate()?;
    if pyramid.levels.len() != config.scales() {
        return Err(Error::invalid(format!(
            "pyramid has {} levels but the configuration asks for {}",
            pyramid.levels.len(),
            config.scales()
        )));
    }
    let start = Instant::now();
    let dims = synthesis_dims(pyramid, target);
    let bbox = synthesis_bbox(pyramid, target)?;
    let ex_bbox = *pyramid.bbox();
    let init_name = match &init {
        Init::Noise(s) => format!("noise(sigma={s})"),
        Init::Identity => "identity".to_string(),
        Init::Field(_) => "field".to_string(),
        Init::Features(_) => "features".to_string(),
    };
    let (mut field, mut query) = match init {
        Init::Noise(sigma) => (init_coarse(dims[0], bbox, ex_bbox, sigma, seed)?, None),
        Init::Identity => (MappingField::identity(dims[0], bbox, ex_bbox), None),
        Init::Field(f) => {
            if f.dims() != dims[0] {
                return Err(Error::DimensionMismatch(format!(
                    "initial field is {} but the coarsest synthesis scale is {}",
                    f.dims(),
                    dims[0]
                )));
            }
            let (f, clamped) = MappingField::new(dims[0], bbox, ex_bbox, f.coords().to_vec())?;
            if clamped > 0 {
                log::warn!("clamped {clamped} initial coordinates into the exemplar box");
            }
            (f, None)
        }
        Init::Features(v) => {
            if v.dims != dims[0] {
                return Err(Error::DimensionMismatch(format!(
                    "query features are {} but the coarsest synthesis scale is {}",
                    v.dims, dims[0]
                )));
            }
            (MappingField::identity(dims[0], bbox, ex_bbox), Some(v))
        }
    };

    let mut records = Vec::with_capacity(dims.len());
    for (n, level) in pyramid.levels.iter().enumerate() {
        let t0 = Instant::now();
        if n > 0 {
            field = field.upsample(dims[n])?;
        }
        let q = match query.take() {
            Some(v) => v,
            None => resolve_features(&field, &level.features).volume,
        };
        let out = nnf_scale_pass(&q, &level.features, config, n, seed, Some(&field), &bbox)?;
        log::info!(
            "scale {n}: {} -> {} ({}, {} iterations) in {:.2}s",
            dims[n],
            level.grid.dims(),
            if out.exact { "exact" } else { "patchmatch" },
            out.iterations,
            t0.elapsed().as_secs_f64()
        );
        records.push(ScaleRecord {
            scale: n,
            synthesis_dims: dims[n].0,
            exemplar_dims: level.grid.dims().0,
            search: if out.exact { "exact" } else { "patchmatch" },
            iterations: out.iterations,
            converged_early: out.converged_early,
            mean_patch_distance: out.final_result.mean_distance(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        field = out.field;
    }
    Ok(Synthesis {
        field,
        log: RunLog {
            config: config.clone(),
            seed,
            init: init_name,
            target_dims: target.0,
            scales: records,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Random sample at the exemplar's own size.
pub fn generate(pyramid: &ExemplarPyramid, config: &SynthesisConfig, seed: u64) -> Result<Synthesis> {
    let target = pyramid.finest().grid.dims();
    synthesize(pyramid, config, target, Init::Noise(config.noise_sigma), seed)
}

/// Synthesis at `target` dims from an unshuffled identity.
pub fn retarget(pyramid: &ExemplarPyramid, target: Dims, config: &SynthesisConfig) -> Result<Synthesis> {
    if target.min() == 0 {
        return Err(Error::invalid(format!("target dims must be positive, got {target}")));
    }
    synthesize(pyramid, config, target, Init::Identity, config.seed)
}

/// Resamples a feature grid onto `dims` over its own box.
pub fn resample_features(grid: &TransformedGrid, dims: Dims) -> TransformedGrid {
    if grid.dims() == dims {
        return grid.clone();
    }
    let field = MappingField::identity(dims, grid.bbox, grid.bbox);
    resolve_features(&field, grid)
}

/// Layout from `b` (matching features), patches from `pyramid_a`.
pub fn structural_analogy(
    pyramid_a: &ExemplarPyramid,
    b: &TransformedGrid,
    config: &SynthesisConfig,
) -> Result<Synthesis> {
    let target = pyramid_a.finest().grid.dims();
    let coarse = synthesis_dims(pyramid_a, target)[0];
    let query = resample_features(b, coarse).volume;
    synthesize(pyramid_a, config, target, Init::Features(query), config.seed)
}

/// Synthesis from an edited coarse mapping field.
pub fn edit_synthesis(pyramid: &ExemplarPyramid, proxy: &MappingField, config: &SynthesisConfig) -> Result<Synthesis> {
    let coarse = pyramid.levels[0].grid.dims();
    if proxy.dims() != coarse {
        return Err(Error::DimensionMismatch(format!(
            "proxy is {} but the coarsest edit scale is {coarse}",
            proxy.dims()
        )));
    }
    let target = pyramid.finest().grid.dims();
    synthesize(pyramid, config, target, Init::Field(proxy.clone()), config.seed)
}

/// Reads a synthesized field through a different exemplar of the same box.
pub fn redecorate(field: &MappingField, other: &VoxelGrid) -> Result<VoxelGrid> {
    if !field.exemplar_bbox().approx_eq(other.bbox(), 1e-6) {
        return Err(Error::DimensionMismatch(format!(
            "exemplar box {:?} differs from the field's {:?}",
            other.bbox().half_extents(),
            field.exemplar_bbox().half_extents()
        )));
    }
    Ok(resolve_features(field, other))
}

/// Fraction of voxels whose mapped coordinate is within half a voxel (per
/// axis) of the identity.
pub fn identity_fraction(field: &MappingField, exemplar_dims: Dims) -> f64 {
    let id = MappingField::identity(field.dims(), *field.bbox(), *field.exemplar_bbox());
    let half = field.exemplar_bbox().voxel_size(exemplar_dims).map(|v| 0.5 * v);
    let ok = field
        .coords()
        .iter()
        .zip(id.coords())
        .filter(|(a, b)| (0..3).all(|k| (a[k] - b[k]).abs() <= half[k] + 1e-12))
        .count();
    ok as f64 / field.coords().len() as f64
}

/// Proxy for editing: the identity at `dims` with the coordinates of every
/// voxel inside `region` (voxel index box, half-open) replaced by those of
/// the voxel `offset` away.
pub fn copy_region_proxy(
    dims: Dims,
    bbox: BBox,
    region: ([usize; 3], [usize; 3]),
    offset: [isize; 3],
) -> Result<MappingField> {
    let mut coords: Vec<Vec3> = MappingField::identity(dims, bbox, bbox).coords().to_vec();
    for i in 0..dims.count() {
        let v = dims.coords(i);
        if (0..3).all(|a| region.0[a] <= v[a] && v[a] < region.1[a]) {
            let src = [0, 1, 2].map(|a| (v[a] as isize + offset[a]).clamp(0, dims[a] as isize - 1) as usize);
            coords[i] = center_unchecked(dims, &bbox, src);
        }
    }
    Ok(MappingField::new(dims, bbox, bbox, coords)?.0)
}
