//! Geometry and image metrics for sets of generated scenes.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Vec3, VoxelGrid};
use crate::render::Image;
use crate::xform::{marching_cubes, Mesh};

pub type PointCloud = Vec<Vec3>;

pub const QUALITY_POINTS: usize = 102_400;
pub const DIVERSITY_POINTS: usize = 10_240;
pub const PATCH_CENTERS: usize = 1000;
pub const PATCH_POINTS: usize = 1024;

/// Density isosurface of a scene at its occupancy threshold.
pub fn surface_mesh(grid: &VoxelGrid) -> Result<Mesh> {
    if grid.dims().min() < 2 {
        return Ok(Mesh::default());
    }
    marching_cubes(grid.dims(), grid.bbox(), grid.density(), grid.threshold())
}

/// Area-weighted uniform samples on the mesh surface.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(Error::invalid("cannot sample an empty mesh"));
    }
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("mesh has zero area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let t = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
            let [a, b, c] = mesh.corners(t);
            let s = rng.random::<f64>().sqrt();
            let u = rng.random::<f64>();
            a * (1.0 - s) + b * (s * (1.0 - u)) + c * (s * u)
        })
        .collect())
}

/// Local patches: `n_centers` random centers, each with its `k` nearest
/// points (itself included), translated so the patch centroid is the
/// origin.
pub fn extract_patches_pc(pc: &[Vec3], n_centers: usize, k: usize, seed: u64) -> Result<Vec<PointCloud>> {
    if k == 0 || pc.len() < k {
        return Err(Error::invalid(format!(
            "need at least {k} points for {k}-point patches, got {}",
            pc.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<usize> = if n_centers <= pc.len() {
        sample(&mut rng, pc.len(), n_centers).into_vec()
    } else {
        (0..n_centers).map(|_| rng.random_range(0..pc.len())).collect()
    };
    Ok(centers
        .par_iter()
        .map(|&c| {
            let o = pc[c];
            let mut d: Vec<(f64, usize)> = pc.iter().enumerate().map(|(i, p)| ((p - o).norm_squared(), i)).collect();
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.truncate(k);
            }
            let patch: Vec<Vec3> = d.iter().map(|&(_, i)| pc[i]).collect();
            let centroid = patch.iter().fold(Vec3::zeros(), |acc, p| acc + p) / patch.len() as f64;
            patch.iter().map(|p| p - centroid).collect()
        })
        .collect())
}

/// Uniform-grid nearest-neighbor index over a point cloud.
struct PointGrid<'a> {
    points: &'a [Vec3],
    min: Vec3,
    cell: f64,
    res: [usize; 3],
    /// Start offsets into `order` per cell (CSR layout).
    starts: Vec<usize>,
    order: Vec<u32>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        let ext = max - min;
        let longest = ext.max().max(1e-12);
        // about two points per cell
        let target = (points.len() as f64 / 2.0).max(1.0);
        let vol = ext.iter().map(|e| e.max(longest * 1e-3)).product::<f64>();
        let cell = (vol / target).cbrt().max(longest / 256.0);
        let res = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).min(512));
        let mut counts = vec![0usize; res[0] * res[1] * res[2] + 1];
        let mut grid = PointGrid {
            points,
            min,
            cell,
            res,
            starts: Vec::new(),
            order: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|p| grid.cell_index(grid.cell_of(p))).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.order[fill[c]] = i as u32;
            fill[c] += 1;
        }
        grid.starts = counts;
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let v = ((p[a] - self.min[a]) / self.cell).floor();
            (v.max(0.0) as usize).min(self.res[a] - 1)
        })
    }

    fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.res[0] * (c[1] + self.res[1] * c[2])
    }

    /// Exact squared distance from `q` to the nearest indexed point.
    fn nearest_sq(&self, q: &Vec3) -> f64 {
        let c = self.cell_of(q);
        let mut best = f64::INFINITY;
        let max_ring = self.res.iter().copied().max().unwrap_or(1);
        for ring in 0..=max_ring {
            // Every point outside the inspected shells is at least this far.
            if ring > 0 {
                let reach = self.ring_clearance(q, c, ring - 1);
                if reach * reach >= best {
                    break;
                }
            }
            let lo = c.map(|v| v as isize - ring as isize);
            let hi = c.map(|v| v as isize + ring as isize);
            for z in lo[2].max(0)..=hi[2].min(self.res[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.res[1] as isize - 1) {
                    let on_yz_shell = z == lo[2] || z == hi[2] || y == lo[1] || y == hi[1];
                    let mut x = lo[0].max(0);
                    let x_end = hi[0].min(self.res[0] as isize - 1);
                    while x <= x_end {
                        if on_yz_shell || x == lo[0] || x == hi[0] {
                            let ci = self.cell_index([x as usize, y as usize, z as usize]);
                            for &pi in &self.order[self.starts[ci]..self.starts[ci + 1]] {
                                let d = (self.points[pi as usize] - q).norm_squared();
                                if d < best {
                                    best = d;
                                }
                            }
                            x += 1;
                        } else {
                            // jump to the far face of the shell
                            x = hi[0];
                        }
                    }
                }
            }
        }
        best
    }

    /// Distance from `q` to the outside of the cell block within `ring`
    /// cells of `c` (infinite if the block covers the whole grid).
    fn ring_clearance(&self, q: &Vec3, c: [usize; 3], ring: usize) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..3 {
            let lo_cell = c[a] as isize - ring as isize;
            let hi_cell = c[a] as isize + ring as isize;
            if lo_cell > 0 {
                m = m.min(q[a] - (self.min[a] + lo_cell as f64 * self.cell));
            }
            if hi_cell < self.res[a] as isize - 1 {
                m = m.min(self.min[a] + (hi_cell + 1) as f64 * self.cell - q[a]);
            }
        }
        m.max(0.0)
    }
}

fn one_sided(a: &[Vec3], b: &[Vec3]) -> f64 {
    let grid = PointGrid::new(b);
    a.iter().map(|p| grid.nearest_sq(p)).sum::<f64>() / a.len() as f64
}

/// Symmetric Chamfer distance (mean squared nearest-neighbor distance in
/// both directions, summed).
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance needs non-empty point clouds"));
    }
    Ok(one_sided(a, b) + one_sided(b, a))
}

/// Mean over generated patches of the smallest Chamfer distance to any
/// exemplar patch, times 100.
pub fn mmd_quality(generated: &[PointCloud], exemplar: &[PointCloud]) -> Result<f64> {
    if generated.is_empty() || exemplar.is_empty() {
        return Err(Error::invalid("MMD needs non-empty patch sets"));
    }
    let mins = generated
        .par_iter()
        .map(|g| {
            exemplar
                .iter()
                .map(|e| chamfer(g, e))
                .try_fold(f64::INFINITY, |m, d| d.map(|d| m.min(d)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(100.0 * mins.iter().sum::<f64>() / mins.len() as f64)
}

/// Pairwise Chamfer distances between scenes, row-major upper triangle
/// included in a full symmetric matrix.
pub fn pairwise_chamfer(scenes: &[PointCloud]) -> Result<Vec<Vec<f64>>> {
    let n = scenes.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let d = pairs
        .par_iter()
        .map(|&(i, j)| chamfer(&scenes[i], &scenes[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut m = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(d) {
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Sum of Chamfer distances over all unordered pairs of scenes.
pub fn tmd_diversity(scenes: &[PointCloud]) -> Result<f64> {
    if scenes.len() < 2 {
        return Err(Error::invalid(format!(
            "diversity needs at least 2 scenes, got {}",
            scenes.len()
        )));
    }
    let m = pairwise_chamfer(scenes)?;
    Ok((0..scenes.len()).flat_map(|i| (i + 1..scenes.len()).map(move |j| (i, j))).map(|(i, j)| m[i][j]).sum())
}

fn population_std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Per view: the mean over pixels of the per-pixel intensity std across
/// the generated renders, divided by the spatial intensity std of the
/// exemplar render. Averaged over views.
pub fn visual_diversity_per_view(stacks: &[Vec<Image>], exemplar: &[Image]) -> Result<Vec<f64>> {
    if stacks.len() != exemplar.len() || stacks.is_empty() {
        return Err(Error::invalid(format!(
            "{} render stacks for {} exemplar views",
            stacks.len(),
            exemplar.len()
        )));
    }
    stacks
        .iter()
        .zip(exemplar)
        .enumerate()
        .map(|(v, (stack, ex))| {
            if stack.len() < 2 {
                return Err(Error::invalid(format!("view {v}: need at least 2 renders")));
            }
            if stack.iter().any(|im| (im.width, im.height) != (ex.width, ex.height)) {
                return Err(Error::DimensionMismatch(format!("view {v}: image sizes differ")));
            }
            let ex_std = population_std(ex.intensity().into_iter());
            if ex_std == 0.0 {
                return Err(Error::invalid(format!("view {v}: exemplar render has zero intensity spread")));
            }
            let intens: Vec<Vec<f64>> = stack.iter().map(|im| im.intensity()).collect();
            let npx = ex.pixels.len();
            let mean_std = (0..npx)
                .map(|p| population_std(intens.iter().map(|im| im[p])))
                .sum::<f64>()
                / npx as f64;
            Ok(mean_std / ex_std)
        })
        .collect()
}

pub fn visual_diversity(stacks: &[Vec<Image>], exemplar: &[Image]) -> Result<f64> {
    let per_view = visual_diversity_per_view(stacks, exemplar)?;
    Ok(per_view.iter().sum::<f64>() / per_view.len() as f64)
}
