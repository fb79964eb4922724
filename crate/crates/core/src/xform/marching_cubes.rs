//! Marching cubes over the voxel-center lattice of a scalar grid.

use std::collections::HashMap;

use super::mc_tables::{CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE};
use super::mesh::{Mesh, DEGENERATE_AREA};
use crate::error::{Error, Result};
use crate::grid::{center_unchecked, BBox, Dims};
#[cfg(test)]
use crate::grid::Vec3;

/// Extracts the `iso` level set of `values` (laid out over `dims`). Cells
/// span neighboring voxel centers; vertices are placed on cell edges by
/// linear interpolation and shared between adjacent cells.
pub fn marching_cubes(dims: Dims, bbox: &BBox, values: &[f32], iso: f32) -> Result<Mesh> {
    if dims.min() < 2 {
        return Err(Error::invalid(format!(
            "marching cubes needs at least 2 voxels per axis, got {dims}"
        )));
    }
    if values.len() != dims.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {dims} grid",
            values.len()
        )));
    }
    let iso = iso as f64;
    let mut mesh = Mesh::default();
    // (voxel index of the lower corner, axis) -> vertex id
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();

    let [dx, dy, dz] = dims.0;
    for z in 0..dz - 1 {
        for y in 0..dy - 1 {
            for x in 0..dx - 1 {
                let corner_idx: [usize; 8] = CORNER_OFFSETS
                    .map(|o| dims.index([x + o[0], y + o[1], z + o[2]]));
                let corner_val = corner_idx.map(|i| values[i] as f64);
                let mut case = 0usize;
                for (k, v) in corner_val.iter().enumerate() {
                    if *v < iso {
                        case |= 1 << k;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                let mut k = 0;
                while k < 16 && row[k] >= 0 {
                    let mut tri = [0u32; 3];
                    for (slot, e) in row[k..k + 3].iter().enumerate() {
                        let [ca, cb] = EDGE_CORNERS[*e as usize];
                        let (ia, ib) = (corner_idx[ca], corner_idx[cb]);
                        let (lo, hi, vlo, vhi) = if ia < ib {
                            (ia, ib, corner_val[ca], corner_val[cb])
                        } else {
                            (ib, ia, corner_val[cb], corner_val[ca])
                        };
                        let axis = edge_axis(dims, lo, hi);
                        tri[slot] = *edge_vertex.entry((lo, axis)).or_insert_with(|| {
                            let plo = center_unchecked(dims, bbox, dims.coords(lo));
                            let phi = center_unchecked(dims, bbox, dims.coords(hi));
                            let t = if vhi != vlo {
                                ((iso - vlo) / (vhi - vlo)).clamp(0.0, 1.0)
                            } else {
                                0.5
                            };
                            mesh.vertices.push(plo + (phi - plo) * t);
                            (mesh.vertices.len() - 1) as u32
                        });
                    }
                    k += 3;
                    let [a, b, c] = tri.map(|i| mesh.vertices[i as usize]);
                    if 0.5 * (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA {
                        mesh.triangles.push(tri);
                    }
                }
            }
        }
    }
    Ok(mesh)
}

fn edge_axis(dims: Dims, lo: usize, hi: usize) -> u8 {
    let d = hi - lo;
    if d == 1 {
        0
    } else if d == dims[0] {
        1
    } else {
        2
    }
}

/// Linear position along the lattice where `values` crosses `iso`, used to
/// check vertex placement.
#[cfg(test)]
fn sample_linear(dims: Dims, bbox: &BBox, values: &[f32], p: &Vec3) -> f64 {
    crate::grid::trilinear_sample(dims, bbox, values, p) as f64
}
