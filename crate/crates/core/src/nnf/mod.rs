//! Patch nearest-neighbor fields: matching, blending and the per-scale
//! optimization loop.

mod approx;
mod exact;
mod patches;

use rayon::prelude::*;

pub use approx::{approximate_nnf, approximate_nnf_trace, PatchMatchParams};
pub use exact::{check_capacity, completeness_scores, distance_matrix, exact_nnf, ExactParams};
pub use patches::{extract_patches, patch_distance, PatchSet};

use crate::config::SynthesisConfig;
use crate::error::{Error, Result};
use crate::grid::{center_unchecked, nearest_voxel, BBox, Dims, FeatureVolume, MappingField, TransformedGrid};
use crate::procedural::splitmix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NnfKind {
    ValueIteration,
    FinalCoordinates,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NnfResult {
    /// Key patch index per query patch.
    pub assignment: Vec<usize>,
    /// Raw patch distance of each assigned pair.
    pub distances: Vec<f64>,
    pub kind: NnfKind,
}

impl NnfResult {
    pub fn mean_distance(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len() as f64
    }

    /// Number of distinct keys used.
    pub fn distinct_keys(&self) -> usize {
        let mut k = self.assignment.clone();
        k.sort_unstable();
        k.dedup();
        k.len()
    }
}

fn query_grid(out_dims: Dims, p: usize) -> Result<Dims> {
    if out_dims.min() < p {
        return Err(Error::invalid(format!("volume {out_dims} is smaller than the patch size {p}")));
    }
    Ok(Dims(out_dims.0.map(|d| d - p + 1)))
}

fn check_assignment(assignment: &[usize], qg: Dims, keys: &PatchSet) -> Result<()> {
    if assignment.len() != qg.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} query patches",
            assignment.len(),
            qg.count()
        )));
    }
    if let Some(&bad) = assignment.iter().find(|&&j| j >= keys.len()) {
        return Err(Error::invalid(format!("key index {bad} out of range {}", keys.len())));
    }
    Ok(())
}

/// Averages, at every voxel of `out_dims`, the assigned key values of all
/// query patches covering it.
pub fn blend_values(assignment: &[usize], keys: &PatchSet, out_dims: Dims) -> Result<FeatureVolume> {
    let p = keys.patch_size();
    let qg = query_grid(out_dims, p)?;
    check_assignment(assignment, qg, keys)?;
    let kv = keys.volume();
    let kg = keys.grid();
    let data = (0..out_dims.count())
        .into_par_iter()
        .map(|i| {
            let v = out_dims.coords(i);
            let lo = v.map(|c| c.saturating_sub(p - 1));
            let hi = [0, 1, 2].map(|a| v[a].min(qg[a] - 1));
            let mut acc = [0f64; 4];
            let mut n = 0u32;
            for uz in lo[2]..=hi[2] {
                for uy in lo[1]..=hi[1] {
                    for ux in lo[0]..=hi[0] {
                        let kc = kg.coords(assignment[qg.index([ux, uy, uz])]);
                        let s = kv.at([kc[0] + v[0] - ux, kc[1] + v[1] - uy, kc[2] + v[2] - uz]);
                        for c in 0..4 {
                            acc[c] += s[c] as f64;
                        }
                        n += 1;
                    }
                }
            }
            acc.map(|a| (a / n as f64) as f32)
        })
        .collect();
    FeatureVolume::new(out_dims, data)
}

/// Turns an assignment into a mapping field: each voxel takes its nearest
/// patch center's key center, shifted by its offset from that center, as
/// an exemplar voxel-center coordinate.
pub fn finalize_coordinates(
    assignment: &[usize],
    keys: &PatchSet,
    exemplar_bbox: &BBox,
    out_dims: Dims,
    synthesis_bbox: &BBox,
) -> Result<MappingField> {
    let p = keys.patch_size();
    let h = p / 2;
    let qg = query_grid(out_dims, p)?;
    check_assignment(assignment, qg, keys)?;
    let kd = keys.volume().dims;
    let kg = keys.grid();
    let coords = (0..out_dims.count())
        .into_par_iter()
        .map(|i| {
            let v = out_dims.coords(i);
            let u = [0, 1, 2].map(|a| v[a].saturating_sub(h).min(qg[a] - 1));
            let kc = kg.coords(assignment[qg.index(u)]);
            // key corner + (v - query corner) stays inside the key volume
            let e = [0, 1, 2].map(|a| (kc[a] + v[a] - u[a]).min(kd[a] - 1));
            center_unchecked(kd, exemplar_bbox, e)
        })
        .collect();
    let (field, _) = MappingField::new(out_dims, *synthesis_bbox, *exemplar_bbox, coords)?;
    Ok(field)
}

/// Key patch whose center is nearest to the coordinate the field maps
/// each query patch center to.
pub fn assignment_from_field(field: &MappingField, keys: &PatchSet) -> Result<Vec<usize>> {
    let p = keys.patch_size();
    let h = p / 2;
    let qg = query_grid(field.dims(), p)?;
    let kd = keys.volume().dims;
    let kg = keys.grid();
    let coords = field.coords();
    Ok((0..qg.count())
        .map(|i| {
            let c = qg.coords(i).map(|v| v + h);
            let e = nearest_voxel(kd, field.exemplar_bbox(), &coords[field.dims().index(c)]);
            kg.index([0, 1, 2].map(|a| e[a].saturating_sub(h).min(kg[a] - 1)))
        })
        .collect())
}

/// What a scale pass did.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalePassOutput {
    pub field: MappingField,
    pub exact: bool,
    /// Match steps actually run.
    pub iterations: usize,
    /// The exact loop reached a fixed point before its iteration budget;
    /// the remaining iterations would have reproduced the same result.
    pub converged_early: bool,
    pub final_result: NnfResult,
}

/// One scale of synthesis: alternating matching and blending, then a final
/// match read out as coordinates. Exact matching with completeness is used
/// below `config.exact_scales`, PatchMatch above. `prev` (the upsampled
/// field of the previous scale) seeds tie-breaks and PatchMatch.
pub fn nnf_scale_pass(
    query: &FeatureVolume,
    key: &TransformedGrid,
    config: &SynthesisConfig,
    scale: usize,
    seed: u64,
    prev: Option<&MappingField>,
    synthesis_bbox: &BBox,
) -> Result<ScalePassOutput> {
    let p = config.patch_size;
    let keys = PatchSet::new(&key.volume, p)?;
    let out_dims = query.dims;
    let exact = scale < config.exact_scales;
    let iterations = if exact { config.exact_iterations } else { config.approx_iterations };
    let mut current = query.clone();
    let mut hint = match prev {
        Some(f) if f.dims() == out_dims => Some(assignment_from_field(f, &keys)?),
        Some(f) => {
            return Err(Error::DimensionMismatch(format!(
                "previous field {} does not match query volume {out_dims}",
                f.dims()
            )))
        }
        None => None,
    };
    let mut done = 0;
    let mut converged_early = false;
    let mut last: Option<NnfResult> = None;
    for t in 0..iterations {
        let queries = PatchSet::new(&current, p)?;
        let res = if exact {
            let params = ExactParams {
                w_a: config.appearance_weight,
                alpha: Some(config.completeness_alpha),
                capacity: config.exact_capacity,
            };
            exact_nnf(&queries, &keys, &params, hint.as_deref())?
        } else {
            let params = PatchMatchParams {
                w_a: config.appearance_weight,
                sweeps: config.patchmatch_sweeps,
                jump_radius: config.jump_radius,
                seed: splitmix64(seed ^ splitmix64(((scale as u64) << 32) | t as u64)),
            };
            approximate_nnf(&queries, &keys, &params, hint.as_deref())?
        };
        done += 1;
        // In the exact loop an unchanged assignment blends back to the
        // volume it was matched from, so later iterations would repeat it.
        let fixed = exact && t > 0 && hint.as_deref() == Some(&res.assignment[..]);
        if t + 1 == iterations || fixed {
            converged_early = t + 1 < iterations;
            last = Some(res);
            break;
        }
        current = blend_values(&res.assignment, &keys, out_dims)?;
        hint = Some(res.assignment);
    }
    let mut res = last.expect("at least one iteration");
    res.kind = NnfKind::FinalCoordinates;
    let field = finalize_coordinates(&res.assignment, &keys, &key.bbox, out_dims, synthesis_bbox)?;
    Ok(ScalePassOutput {
        field,
        exact,
        iterations: done,
        converged_early,
        final_result: res,
    })
}
