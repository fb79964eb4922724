//! PatchMatch with jump-flood propagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::patches::{pair_distance, PatchSet};
use super::{NnfKind, NnfResult};
use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::procedural::splitmix64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchMatchParams {
    pub w_a: f64,
    pub sweeps: usize,
    /// Largest propagation offset; offsets halve down to 1.
    pub jump_radius: usize,
    pub seed: u64,
}

/// Approximate NNF over raw distances. Starts from `prev` when given, else
/// from a seeded uniform random field.
pub fn approximate_nnf(
    queries: &PatchSet,
    keys: &PatchSet,
    params: &PatchMatchParams,
    prev: Option<&[usize]>,
) -> Result<NnfResult> {
    run(queries, keys, params, prev, None)
}

/// Like [`approximate_nnf`], also returning the per-query distances after
/// initialization and after every sweep.
pub fn approximate_nnf_trace(
    queries: &PatchSet,
    keys: &PatchSet,
    params: &PatchMatchParams,
    prev: Option<&[usize]>,
) -> Result<(NnfResult, Vec<Vec<f64>>)> {
    let mut trace = Vec::with_capacity(params.sweeps + 1);
    let r = run(queries, keys, params, prev, Some(&mut trace))?;
    Ok((r, trace))
}

fn jump_offsets(radius: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut r = radius.max(1);
    loop {
        out.push(r);
        if r == 1 {
            break;
        }
        r /= 2;
    }
    out
}

#[inline]
fn shift_clamped(c: [usize; 3], delta: [isize; 3], grid: Dims) -> [usize; 3] {
    [0, 1, 2].map(|a| (c[a] as isize + delta[a]).clamp(0, grid[a] as isize - 1) as usize)
}

fn run(
    queries: &PatchSet,
    keys: &PatchSet,
    params: &PatchMatchParams,
    prev: Option<&[usize]>,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> Result<NnfResult> {
    if queries.patch_size() != keys.patch_size() {
        return Err(Error::invalid("query and key patch sizes differ"));
    }
    let (mq, mk) = (queries.len(), keys.len());
    let (qg, kg) = (queries.grid(), keys.grid());
    let w_a = params.w_a;

    let mut assign: Vec<usize> = match prev {
        Some(p) => {
            if p.len() != mq {
                return Err(Error::DimensionMismatch(format!(
                    "initial assignment has {} entries for {mq} queries",
                    p.len()
                )));
            }
            if let Some(&bad) = p.iter().find(|&&j| j >= mk) {
                return Err(Error::invalid(format!("initial key {bad} out of range {mk}")));
            }
            p.to_vec()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            (0..mq).map(|_| rng.random_range(0..mk)).collect()
        }
    };
    let mut dist: Vec<f64> = assign
        .par_iter()
        .enumerate()
        .map(|(i, &j)| pair_distance(queries, i, keys, j, w_a, f64::INFINITY))
        .collect();
    if let Some(t) = trace.as_deref_mut() {
        t.push(dist.clone());
    }

    let offsets = jump_offsets(params.jump_radius);
    let search_radius = kg.max();
    for sweep in 0..params.sweeps {
        let forward = sweep % 2 == 0;
        // Propagation, in scan order, reusing improvements made earlier in
        // the same sweep.
        for step in 0..mq {
            let i = if forward { step } else { mq - 1 - step };
            let u = qg.coords(i);
            for axis in 0..3 {
                for &o in &offsets {
                    for sign in [-1isize, 1] {
                        let mut delta = [0isize; 3];
                        delta[axis] = sign * o as isize;
                        let n = shift_clamped(u, delta, qg);
                        if n == u {
                            continue;
                        }
                        let actual = [0, 1, 2].map(|a| n[a] as isize - u[a] as isize);
                        let kn = kg.coords(assign[qg.index(n)]);
                        let cand = kg.index(shift_clamped(kn, actual.map(|v| -v), kg));
                        if cand == assign[i] {
                            continue;
                        }
                        let d = pair_distance(queries, i, keys, cand, w_a, dist[i]);
                        if d < dist[i] {
                            dist[i] = d;
                            assign[i] = cand;
                        }
                    }
                }
            }
        }
        // Random search, independent per query.
        assign
            .par_iter_mut()
            .zip(dist.par_iter_mut())
            .enumerate()
            .for_each(|(i, (a, d))| {
                let stream = splitmix64(params.seed ^ splitmix64(sweep as u64 ^ splitmix64(i as u64)));
                let mut rng = ChaCha8Rng::seed_from_u64(stream);
                let mut r = search_radius;
                while r >= 1 {
                    let c = kg.coords(*a);
                    let ri = r as i64;
                    let delta = [0, 1, 2].map(|_| rng.random_range(-ri..=ri) as isize);
                    let cand = kg.index(shift_clamped(c, delta, kg));
                    if cand != *a {
                        let dc = pair_distance(queries, i, keys, cand, w_a, *d);
                        if dc < *d {
                            *d = dc;
                            *a = cand;
                        }
                    }
                    r /= 2;
                }
            });
        if let Some(t) = trace.as_deref_mut() {
            t.push(dist.clone());
        }
    }
    Ok(NnfResult {
        assignment: assign,
        distances: dist,
        kind: NnfKind::ValueIteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FeatureVolume;

    fn random_volume(dims: Dims, seed: u64) -> FeatureVolume {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.count())
            .map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0)))
            .collect();
        FeatureVolume::new(dims, data).unwrap()
    }

    fn params(seed: u64) -> PatchMatchParams {
        PatchMatchParams {
            w_a: 0.5,
            sweeps: 4,
            jump_radius: 8,
            seed,
        }
    }

    #[test]
    fn offsets_halve() {
        assert_eq!(jump_offsets(8), vec![8, 4, 2, 1]);
        assert_eq!(jump_offsets(1), vec![1]);
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let v = random_volume(Dims::cube(9), 1);
        let ps = PatchSet::new(&v, 3).unwrap();
        let id: Vec<usize> = (0..ps.len()).collect();
        let r = approximate_nnf(&ps, &ps, &params(3), Some(&id)).unwrap();
        assert_eq!(r.assignment, id);
    }

    #[test]
    fn finds_shifted_copy() {
        // Queries are a sub-block of the keys, so each has an exact match.
        let k = random_volume(Dims::cube(12), 2);
        let qd = Dims::cube(8);
        let data = (0..qd.count())
            .map(|i| {
                let [x, y, z] = qd.coords(i);
                *k.at([x + 2, y + 3, z + 1])
            })
            .collect();
        let q = FeatureVolume::new(qd, data).unwrap();
        let (qs, ks) = (PatchSet::new(&q, 3).unwrap(), PatchSet::new(&k, 3).unwrap());
        let (r, trace) = approximate_nnf_trace(&qs, &ks, &params(5), None).unwrap();
        for w in trace.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b <= a));
        }
        let exact = r.distances.iter().filter(|&&d| d == 0.0).count();
        assert!(exact as f64 >= 0.95 * qs.len() as f64, "{exact}/{}", qs.len());
    }

    #[test]
    fn deterministic_per_seed() {
        let q = random_volume(Dims::cube(8), 7);
        let k = random_volume(Dims::cube(9), 8);
        let (qs, ks) = (PatchSet::new(&q, 3).unwrap(), PatchSet::new(&k, 3).unwrap());
        let a = approximate_nnf(&qs, &ks, &params(1), None).unwrap();
        let b = approximate_nnf(&qs, &ks, &params(1), None).unwrap();
        assert_eq!(a, b);
    }
}
