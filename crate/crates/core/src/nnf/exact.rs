//! Exact nearest-neighbor field.
//!
//! All query/key distances are produced one displacement `d = key - query`
//! at a time: the per-voxel cost between the query volume and the key
//! volume shifted by `d` is box-summed over the patch window, which yields
//! the distance of every query/key pair with that displacement. Two sweeps
//! are made: one for the per-key minima of the completeness term and one
//! for the per-query argmin. Memory stays linear in the number of patches.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::patches::{pair_distance, voxel_term, PatchSet};
use super::{NnfKind, NnfResult};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactParams {
    pub w_a: f64,
    /// Completeness weight; `None` ranks keys by raw distance.
    pub alpha: Option<f64>,
    /// Largest number of query/key pairs the search may score.
    pub capacity: u64,
}

pub fn check_capacity(queries: usize, keys: usize, capacity: u64) -> Result<()> {
    let required = queries as u128 * keys as u128;
    if required > capacity as u128 {
        return Err(Error::Capacity {
            required,
            budget: capacity,
        });
    }
    Ok(())
}

/// Dense query x key distance matrix (small problems and tests).
pub fn distance_matrix(queries: &PatchSet, keys: &PatchSet, w_a: f64, capacity: u64) -> Result<DMatrix<f64>> {
    check_capacity(queries.len(), keys.len(), capacity)?;
    let rows: Vec<Vec<f64>> = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            (0..keys.len())
                .map(|j| pair_distance(queries, i, keys, j, w_a, f64::INFINITY))
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(queries.len(), keys.len(), |i, j| rows[i][j]))
}

/// `C[i, j] = D[i, j] / (alpha + min_l D[l, j])`.
pub fn completeness_scores(d: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    assert!(alpha > 0.0, "alpha must be positive");
    let mut c = d.clone();
    for mut col in c.column_iter_mut() {
        let m = col.iter().copied().fold(f64::INFINITY, f64::min);
        col.iter_mut().for_each(|v| *v /= alpha + m);
    }
    c
}

/// Exact argmin over keys of the completeness score (or raw distance).
/// Ties go to the query's `hint` key if it is among them, else to the
/// smallest key index.
pub fn exact_nnf(
    queries: &PatchSet,
    keys: &PatchSet,
    params: &ExactParams,
    hint: Option<&[usize]>,
) -> Result<NnfResult> {
    if queries.patch_size() != keys.patch_size() {
        return Err(Error::invalid("query and key patch sizes differ"));
    }
    if let Some(a) = params.alpha {
        if !(a > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {a}")));
        }
    }
    if let Some(h) = hint {
        if h.len() != queries.len() {
            return Err(Error::DimensionMismatch(format!(
                "hint has {} entries for {} queries",
                h.len(),
                queries.len()
            )));
        }
    }
    check_capacity(queries.len(), keys.len(), params.capacity)?;

    let key_min = params.alpha.map(|_| {
        sweep(
            queries,
            keys,
            params.w_a,
            || vec![f64::INFINITY; keys.len()],
            |m, blk| {
                blk.for_each(keys, |_, j, d| {
                    if d < m[j] {
                        m[j] = d;
                    }
                })
            },
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x = x.min(y));
                a
            },
        )
    });

    let rank = |i: usize, j: usize| -> (bool, usize) { (hint.is_none_or(|h| h[i] != j), j) };
    let better = |i: usize, a: &Best, b: &Best| -> bool {
        a.score < b.score || (a.score == b.score && rank(i, a.key) < rank(i, b.key))
    };
    let best = sweep(
        queries,
        keys,
        params.w_a,
        || vec![Best::NONE; queries.len()],
        |acc, blk| {
            blk.for_each(keys, |i, j, d| {
                let score = match (params.alpha, &key_min) {
                    (Some(alpha), Some(m)) => d / (alpha + m[j]),
                    _ => d,
                };
                let cand = Best { score, key: j, dist: d };
                if better(i, &cand, &acc[i]) {
                    acc[i] = cand;
                }
            })
        },
        |mut a, b| {
            for (i, (x, y)) in a.iter_mut().zip(b).enumerate() {
                if better(i, &y, x) {
                    *x = y;
                }
            }
            a
        },
    );
    Ok(NnfResult {
        assignment: best.iter().map(|b| b.key).collect(),
        distances: best.iter().map(|b| b.dist).collect(),
        kind: NnfKind::ValueIteration,
    })
}

#[derive(Clone, Copy, Debug)]
struct Best {
    score: f64,
    key: usize,
    dist: f64,
}

impl Best {
    const NONE: Best = Best {
        score: f64::INFINITY,
        key: usize::MAX,
        dist: f64::INFINITY,
    };
}

/// Distances of all query/key pairs sharing one displacement.
struct Block<'a> {
    /// Query corner of the first entry.
    origin: [usize; 3],
    disp: [isize; 3],
    n: [usize; 3],
    values: &'a [f64],
    query_grid: crate::grid::Dims,
}

impl Block<'_> {
    /// Calls `f(query index, key index, distance)` for every pair.
    #[inline]
    fn for_each(&self, keys: &PatchSet, mut f: impl FnMut(usize, usize, f64)) {
        let kg = keys.grid();
        let mut t = 0;
        for z in 0..self.n[2] {
            for y in 0..self.n[1] {
                let u = [self.origin[0], self.origin[1] + y, self.origin[2] + z];
                let i0 = self.query_grid.index(u);
                let j0 = kg.index([
                    (u[0] as isize + self.disp[0]) as usize,
                    (u[1] as isize + self.disp[1]) as usize,
                    (u[2] as isize + self.disp[2]) as usize,
                ]);
                for x in 0..self.n[0] {
                    f(i0 + x, j0 + x, self.values[t]);
                    t += 1;
                }
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    cost: Vec<f64>,
    bx: Vec<f64>,
    by: Vec<f64>,
    bz: Vec<f64>,
}

/// Visits every displacement with a distance block, folding per-thread
/// state `S` and merging with `reduce`.
fn sweep<S, I, V, R>(queries: &PatchSet, keys: &PatchSet, w_a: f64, init: I, visit: V, reduce: R) -> S
where
    S: Send,
    I: Fn() -> S + Sync + Send,
    V: Fn(&mut S, &Block) + Sync + Send,
    R: Fn(S, S) -> S + Sync + Send,
{
    let qd = queries.volume().dims;
    let kd = keys.volume().dims;
    let p = queries.patch_size();
    let (qg, kg) = (queries.grid(), keys.grid());
    // displacement range per axis: -(qg-1) ..= kg-1
    let lo = [0, 1, 2].map(|a| -(qg[a] as isize - 1));
    let span = [0, 1, 2].map(|a| qg[a] + kg[a] - 1);
    (0..span[1] * span[2])
        .into_par_iter()
        .fold(
            || (init(), Scratch::default()),
            |(mut state, mut scratch), yz| {
                let dy = lo[1] + (yz % span[1]) as isize;
                let dz = lo[2] + (yz / span[1]) as isize;
                for sx in 0..span[0] {
                    let disp = [lo[0] + sx as isize, dy, dz];
                    if let Some(blk) = block(queries, keys, qd, kd, p, disp, w_a, &mut scratch) {
                        visit(&mut state, &blk);
                    }
                }
                (state, scratch)
            },
        )
        .map(|(s, _)| s)
        .reduce_with(&reduce)
        .unwrap_or_else(init)
}

#[allow(clippy::too_many_arguments)]
fn block<'s>(
    queries: &PatchSet,
    keys: &PatchSet,
    qd: crate::grid::Dims,
    kd: crate::grid::Dims,
    p: usize,
    disp: [isize; 3],
    w_a: f64,
    s: &'s mut Scratch,
) -> Option<Block<'s>> {
    let mut x0 = [0usize; 3];
    let mut len = [0usize; 3];
    for a in 0..3 {
        let start = (-disp[a]).max(0);
        let end = (qd[a] as isize).min(kd[a] as isize - disp[a]);
        if end - start < p as isize {
            return None;
        }
        x0[a] = start as usize;
        len[a] = (end - start) as usize;
    }
    let n = len.map(|l| l - p + 1);
    let (qv, kv) = (&queries.volume().data, &keys.volume().data);
    let w_g = 1.0 - w_a;

    s.cost.clear();
    for z in 0..len[2] {
        for y in 0..len[1] {
            let q = [x0[0], x0[1] + y, x0[2] + z];
            let qb = qd.index(q);
            let kb = kd.index([
                (q[0] as isize + disp[0]) as usize,
                (q[1] as isize + disp[1]) as usize,
                (q[2] as isize + disp[2]) as usize,
            ]);
            s.cost.extend(
                qv[qb..qb + len[0]]
                    .iter()
                    .zip(&kv[kb..kb + len[0]])
                    .map(|(a, b)| voxel_term(a, b, w_a, w_g)),
            );
        }
    }
    // Direct window sums along x, then y, then z. Windows of zeros stay
    // exactly zero.
    s.bx.clear();
    for row in s.cost.chunks_exact(len[0]) {
        s.bx.extend(row.windows(p).map(|w| w.iter().sum::<f64>()));
    }
    s.by.clear();
    let n0 = n[0];
    for slab in s.bx.chunks_exact(n0 * len[1]) {
        for y in 0..n[1] {
            let start = s.by.len();
            s.by.extend_from_slice(&slab[y * n0..(y + 1) * n0]);
            for k in 1..p {
                let row = &slab[(y + k) * n0..(y + k + 1) * n0];
                s.by[start..].iter_mut().zip(row).for_each(|(o, r)| *o += r);
            }
        }
    }
    s.bz.clear();
    let plane = n0 * n[1];
    for z in 0..n[2] {
        let start = s.bz.len();
        s.bz.extend_from_slice(&s.by[z * plane..(z + 1) * plane]);
        for k in 1..p {
            let layer = &s.by[(z + k) * plane..(z + k + 1) * plane];
            s.bz[start..].iter_mut().zip(layer).for_each(|(o, r)| *o += r);
        }
    }
    Some(Block {
        origin: x0,
        disp,
        n,
        values: &s.bz,
        query_grid: queries.grid(),
    })
}
