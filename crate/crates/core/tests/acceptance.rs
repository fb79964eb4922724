//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every check prints one PASS/FAIL line and the allocation counter only
//! sees the work of the check being measured.

use std::alloc::{GlobalAlloc, Layout, System};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxsyn::config::DEFAULT_SCHEDULE;
use voxsyn::grid::{resolve_features, voxel_center, SH_COEFFS};
use voxsyn::metrics::{chamfer, mmd_quality, sample_surface, surface_mesh, tmd_diversity, visual_diversity};
use voxsyn::nnf::{
    approximate_nnf, approximate_nnf_trace, exact_nnf, nnf_scale_pass, ExactParams, PatchMatchParams, PatchSet,
};
use voxsyn::procedural::{procedural_exemplar, ExemplarKind};
use voxsyn::pyramid::{build_pyramid, resample_grid, scale_schedule};
use voxsyn::render::{render, sample_cameras, Camera, Image, Scene, DEFAULT_FOCAL};
use voxsyn::synth::{generate, identity_fraction, init_coarse, retarget, synthesis_dims, Synthesis};
use voxsyn::xform::{fit_appearance_pca, marching_cubes, pca_fit, transform_exemplar};
use voxsyn::{BBox, Dims, Error, ExemplarPyramid, FeatureVolume, MappingField, SynthesisConfig, Vec3, VoxelGrid};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static LARGEST: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
            LARGEST.fetch_max(layout.size(), Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Extra bytes held at the peak of `f`, and the largest single allocation.
fn audit<T>(f: impl FnOnce() -> T) -> (T, usize, usize) {
    let base = LIVE.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    LARGEST.store(0, Ordering::Relaxed);
    let out = f();
    let peak = PEAK.load(Ordering::Relaxed).saturating_sub(base);
    (out, peak, LARGEST.load(Ordering::Relaxed))
}

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// NNF instances and the brute-force oracle

const P: usize = 5;
const W_A: f64 = 0.5;

struct Instance {
    q: FeatureVolume,
    k: FeatureVolume,
}

fn small_dims(r: &mut ChaCha8Rng) -> Dims {
    Dims::new(r.random_range(P..=12), r.random_range(P..=12), r.random_range(P..=12))
}

/// Values on a quarter grid, so every patch sum is exact and ties are real.
fn quantized_volume(dims: Dims, r: &mut ChaCha8Rng) -> FeatureVolume {
    let data = (0..dims.count())
        .map(|_| std::array::from_fn(|_| r.random_range(-4i32..=4) as f32 * 0.25))
        .collect();
    FeatureVolume::new(dims, data).unwrap()
}

fn transformed_volume(dims: Dims, kind: ExemplarKind, seed: u64) -> FeatureVolume {
    let big = procedural_exemplar(kind, Dims::cube(24), seed).unwrap();
    let small = resample_grid(&big, dims).unwrap();
    let pca = fit_appearance_pca(&big, 3).unwrap();
    transform_exemplar(&small, 3.0, &pca, 100.0).unwrap().grid.volume
}

fn instances() -> Vec<Instance> {
    let kinds = [ExemplarKind::Terrain, ExemplarKind::Arches, ExemplarKind::Blobs];
    (0..50u64)
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(1000 + s);
            let (dq, dk) = (small_dims(&mut r), small_dims(&mut r));
            if s % 2 == 0 {
                Instance { q: quantized_volume(dq, &mut r), k: quantized_volume(dk, &mut r) }
            } else {
                let kind = kinds[(s / 2) as usize % 3];
                Instance { q: transformed_volume(dq, kind, 2 * s), k: transformed_volume(dk, kind, 2 * s + 1) }
            }
        })
        .collect()
}

fn corners(d: Dims) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for z in 0..=d[2] - P {
        for y in 0..=d[1] - P {
            for x in 0..=d[0] - P {
                out.push([x, y, z]);
            }
        }
    }
    out
}

fn oracle_distances(q: &FeatureVolume, k: &FeatureVolume) -> Vec<Vec<f64>> {
    let (cq, ck) = (corners(q.dims), corners(k.dims));
    cq.iter()
        .map(|a| {
            ck.iter()
                .map(|b| {
                    let (mut g, mut app) = (0.0f64, 0.0f64);
                    for dz in 0..P {
                        for dy in 0..P {
                            for dx in 0..P {
                                let u = q.at([a[0] + dx, a[1] + dy, a[2] + dz]);
                                let v = k.at([b[0] + dx, b[1] + dy, b[2] + dz]);
                                g += (u[0] as f64 - v[0] as f64).powi(2);
                                for c in 1..4 {
                                    app += (u[c] as f64 - v[c] as f64).powi(2);
                                }
                            }
                        }
                    }
                    (1.0 - W_A) * g + W_A * app
                })
                .collect()
        })
        .collect()
}

fn oracle_assignment(d: &[Vec<f64>], alpha: Option<f64>) -> Vec<usize> {
    let nk = d[0].len();
    let norm: Vec<f64> = match alpha {
        None => vec![1.0; nk],
        Some(a) => (0..nk).map(|j| a + d.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min)).collect(),
    };
    d.iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..nk {
                if row[j] / norm[j] < row[best] / norm[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn exact_oracle(cases: &[Instance]) -> Outcome {
    let t = Instant::now();
    let (mut total, mut wrong) = (0usize, 0usize);
    for (s, c) in cases.iter().enumerate() {
        let (qs, ks) = (PatchSet::new(&c.q, P).map_err(err)?, PatchSet::new(&c.k, P).map_err(err)?);
        let d = oracle_distances(&c.q, &c.k);
        for alpha in [None, Some(0.01)] {
            let got = exact_nnf(&qs, &ks, &ExactParams { w_a: W_A, alpha, capacity: 1 << 31 }, None).map_err(err)?;
            let want = oracle_assignment(&d, alpha);
            let bad = got.assignment.iter().zip(&want).filter(|(a, b)| a != b).count();
            if bad > 0 {
                eprintln!("  instance {s} alpha {alpha:?}: {bad} of {} queries differ", want.len());
            }
            total += want.len();
            wrong += bad;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(wrong == 0, format!("{wrong} of {total} assignments differ from the oracle"))?;
    check(secs <= 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("{} instances, {total} assignments match, {secs:.1}s", cases.len()))
}

fn patchmatch_quality(cases: &[Instance]) -> Outcome {
    let t = Instant::now();
    let (mut exact_sum, mut pm_sum, mut n) = (0.0, 0.0, 0usize);
    let mut worst = (0.0f64, 0usize);
    for (s, c) in cases.iter().enumerate() {
        let (qs, ks) = (PatchSet::new(&c.q, P).map_err(err)?, PatchSet::new(&c.k, P).map_err(err)?);
        let ex = exact_nnf(&qs, &ks, &ExactParams { w_a: W_A, alpha: None, capacity: 1 << 31 }, None).map_err(err)?;
        let params = PatchMatchParams { w_a: W_A, sweeps: 4, jump_radius: 8, seed: s as u64 };
        let (pm, trace) = approximate_nnf_trace(&qs, &ks, &params, None).map_err(err)?;
        for w in trace.windows(2) {
            check(w[0].iter().zip(&w[1]).all(|(a, b)| b <= a), format!("instance {s}: a distance went up"))?;
        }
        exact_sum += ex.distances.iter().sum::<f64>();
        pm_sum += pm.distances.iter().sum::<f64>();
        n += qs.len();
        if ex.mean_distance() > 0.0 {
            let r = pm.mean_distance() / ex.mean_distance();
            if r > worst.0 {
                worst = (r, s);
            }
        }
    }
    let ratio = pm_sum / exact_sum;
    let secs = t.elapsed().as_secs_f64();
    check(ratio <= 1.1, format!("PatchMatch mean is {ratio:.4}x the exact mean"))?;
    check(secs <= 120.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "mean over {n} queries {ratio:.4}x exact, worst instance {} at {:.4}x, {secs:.1}s",
        worst.1, worst.0
    ))
}

// ---------------------------------------------------------------------------
// Shared terrain

struct Terrain {
    pyramid: ExemplarPyramid,
    recon: Synthesis,
    recon_seconds: f64,
}

fn terrain_121() -> Result<ExemplarPyramid, String> {
    let g = procedural_exemplar(ExemplarKind::Terrain, Dims::new(121, 121, 36), 3).map_err(err)?;
    build_pyramid(&g, &SynthesisConfig::default()).map_err(err)
}

fn memory_contract(p: &ExemplarPyramid) -> Outcome {
    let per_level = |lvl: usize| -> Result<(usize, usize, usize), String> {
        let v = &p.levels[lvl].features.volume;
        let ps = PatchSet::new(v, P).map_err(err)?;
        let params = PatchMatchParams { w_a: W_A, sweeps: 4, jump_radius: 8, seed: 7 };
        let (r, peak, largest) = audit(|| approximate_nnf(&ps, &ps, &params, None));
        let r = r.map_err(err)?;
        check(r.assignment.len() == ps.len(), "wrong assignment length")?;
        Ok((ps.len(), peak, largest))
    };
    let (m6, peak6, _) = per_level(6)?;
    let (m7, peak7, largest7) = per_level(7)?;
    let (b6, b7) = (peak6 as f64 / m6 as f64, peak7 as f64 / m7 as f64);
    check(b7 <= 64.0, format!("{b7:.1} bytes per patch at 121"))?;
    check(b7 <= 1.5 * b6, format!("bytes per patch grew from {b6:.1} to {b7:.1}"))?;
    check(largest7 <= 16 * m7, format!("largest allocation {largest7} bytes for {m7} patches"))?;

    let v = &p.finest().features.volume;
    let ps = PatchSet::new(v, P).map_err(err)?;
    let (r, peak, _) = audit(|| exact_nnf(&ps, &ps, &ExactParams { w_a: W_A, alpha: Some(0.01), capacity: 1 << 31 }, None));
    check(matches!(r, Err(Error::Capacity { .. })), "exact search did not refuse the finest scale")?;
    check(peak < 1 << 20, format!("exact search allocated {peak} bytes before refusing"))?;
    Ok(format!("{m7} patches, {b7:.1} B/patch (scale 6: {b6:.1}), largest block {largest7} B, exact refused"))
}

fn view_set(res: usize, k: usize) -> Vec<Camera> {
    // Same field of view as the 512 px protocol.
    sample_cameras(k, 2.5, DEFAULT_FOCAL * res as f64 / 512.0, (res, res), 0).unwrap()
}

fn renders(scene: &Scene, cams: &[Camera]) -> Result<Vec<Image>, String> {
    cams.iter().map(|c| render(scene, c, None).map_err(err)).collect()
}

fn reconstruction(t: &Terrain) -> Outcome {
    let p = &t.pyramid;
    let frac = identity_fraction(&t.recon.field, p.finest().grid.dims());
    check(frac >= 0.99, format!("only {:.4} of voxels stay on the identity", frac))?;
    let cams = view_set(128, 8);
    let ex = renders(&Scene::Grid(p.readout()), &cams)?;
    let out = renders(&Scene::Mapped { field: &t.recon.field, exemplar: p.readout() }, &cams)?;
    let psnr = ex.iter().zip(&out).map(|(a, b)| a.psnr(b)).fold(f64::INFINITY, f64::min);
    check(psnr >= 50.0, format!("PSNR {psnr:.2} dB"))?;
    check(t.recon_seconds <= 900.0, format!("took {:.0}s", t.recon_seconds))?;
    Ok(format!("identity on {:.4} of voxels, min PSNR {psnr} dB, {:.0}s", frac, t.recon_seconds))
}

fn diversity() -> Outcome {
    let c = SynthesisConfig {
        levels: 3,
        max_dim_schedule: vec![16, 21, 28, 38],
        exact_scales: 2,
        ..Default::default()
    };
    let g = procedural_exemplar(ExemplarKind::Terrain, Dims::new(38, 38, 16), 5).map_err(err)?;
    let p = build_pyramid(&g, &c).map_err(err)?;
    let fields: Vec<MappingField> = (0..10u64)
        .map(|s| generate(&p, &c, s).map(|o| o.field).map_err(err))
        .collect::<Result<_, _>>()?;
    let voxel = p.bbox().voxel_size(g.dims()).into_iter().fold(f64::INFINITY, f64::min);
    let mut least: f64 = 1.0;
    for i in 0..10 {
        for j in i + 1..10 {
            least = least.min(fields[i].fraction_differing(&fields[j], 0.5 * voxel));
        }
    }
    check(least > 0.01, format!("two samples differ on only {least:.4} of voxels"))?;

    let cams = view_set(64, 6);
    let ex = renders(&Scene::Grid(p.readout()), &cams)?;
    let mut stacks = vec![Vec::new(); cams.len()];
    for f in &fields {
        for (v, im) in renders(&Scene::Mapped { field: f, exemplar: p.readout() }, &cams)?.into_iter().enumerate() {
            stacks[v].push(im);
        }
    }
    let vdiv = visual_diversity(&stacks, &ex).map_err(err)?;
    check(vdiv > 0.02, format!("visual diversity {vdiv:.4}"))?;

    let clouds = fields
        .iter()
        .map(|f| {
            let mesh = surface_mesh(&resolve_features(f, p.readout()))?;
            sample_surface(&mesh, voxsyn::metrics::DIVERSITY_POINTS, 0)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let tmd = tmd_diversity(&clouds).map_err(err)?;
    check(tmd > 0.0, format!("TMD {tmd}"))?;
    Ok(format!("visual {vdiv:.4}, TMD {tmd:.4}, min pairwise difference {least:.4}"))
}

/// Coverage after a full exact coarse-scale pass (matching alternating with
/// blending), from a noise-shuffled start.
fn completeness_knob() -> Outcome {
    let c = SynthesisConfig { levels: 0, max_dim_schedule: vec![16], ..Default::default() };
    let g = procedural_exemplar(ExemplarKind::Terrain, Dims::new(32, 32, 16), 9).map_err(err)?;
    let p = build_pyramid(&g, &c).map_err(err)?;
    let keys = &p.levels[0].features;
    let field = init_coarse(keys.dims(), keys.bbox, keys.bbox, 0.5, 4).map_err(err)?;
    let query = resolve_features(&field, keys).volume;
    let nk = PatchSet::new(&keys.volume, P).map_err(err)?.len() as f64;
    let cover = [0.001, 0.01, 10.0]
        .into_iter()
        .map(|a| {
            let ca = SynthesisConfig { completeness_alpha: a, ..c.clone() };
            nnf_scale_pass(&query, keys, &ca, 0, 4, None, &keys.bbox).map(|o| o.final_result.distinct_keys() as f64 / nk)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    check(cover[0] >= cover[1] && cover[1] >= cover[2], format!("coverage {cover:.4?}"))?;
    Ok(format!("coverage at 0.001 / 0.01 / 10: {:.4} / {:.4} / {:.4}", cover[0], cover[1], cover[2]))
}

fn geometry(p: &ExemplarPyramid) -> Outcome {
    let mut grids = 0;
    for lvl in &p.levels {
        for v in &lvl.features.volume.data {
            check((-1.0..=1.0).contains(&v[0]), format!("TSDF value {}", v[0]))?;
        }
        grids += 1;
    }
    for c in instances().iter().skip(1).step_by(2) {
        for vol in [&c.q, &c.k] {
            check(vol.data.iter().all(|v| (-1.0..=1.0).contains(&v[0])), "TSDF out of bounds")?;
            grids += 1;
        }
    }

    let d = Dims::cube(64);
    let bbox = BBox::normalized(d);
    let r = 0.6;
    let values: Vec<f32> = (0..d.count())
        .map(|i| (r - voxel_center(d, &bbox, d.coords(i)).unwrap().norm()) as f32)
        .collect();
    let mesh = marching_cubes(d, &bbox, &values, 0.0).map_err(err)?;
    let want = 4.0 * std::f64::consts::PI * r * r;
    let rel = (mesh.area() - want).abs() / want;
    check(rel <= 0.02, format!("sphere area off by {:.3}%", 100.0 * rel))?;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let basis: Vec<[f64; SH_COEFFS]> = (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let mean: [f64; SH_COEFFS] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
    let samples: Vec<[f32; SH_COEFFS]> = (0..500)
        .map(|_| {
            let w: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            std::array::from_fn(|k| (mean[k] + (0..3).map(|b| w[b] * basis[b][k]).sum::<f64>()) as f32)
        })
        .collect();
    let pca = pca_fit(&samples, 3).map_err(err)?;
    let worst = samples
        .iter()
        .map(|s| {
            let back = pca.back_project(&pca.project(s));
            (0..SH_COEFFS).map(|k| (back[k] - s[k] as f64).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    check(worst <= 1e-5, format!("PCA round trip error {worst:e}"))?;
    Ok(format!("{grids} grids in bounds, sphere area off by {:.3}%, PCA error {worst:.1e}", 100.0 * rel))
}

fn renderer() -> Outcome {
    let d = Dims::cube(8);
    let rho = 1.5f32;
    let bx = VoxelGrid::new(d, BBox::normalized(d), vec![rho; d.count()], vec![[0.0; SH_COEFFS]; d.count()])
        .map_err(err)?;
    let cam = Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 1.0, 1, 1).map_err(err)?;
    let im = render(&Scene::Grid(&bx), &cam, None).map_err(err)?;
    let want = (-(rho as f64) * 2.0).exp();
    let got = im.get(0, 0)[0] as f64;
    check((got - want).abs() <= 1e-3, format!("transmittance {got} vs {want}"))?;

    let g = procedural_exemplar(ExemplarKind::Arches, Dims::new(32, 24, 20), 2).map_err(err)?;
    let id = MappingField::identity(g.dims(), *g.bbox(), *g.bbox());
    let mut diff: f64 = 0.0;
    for cam in view_set(48, 4) {
        let a = render(&Scene::Grid(&g), &cam, None).map_err(err)?;
        let b = render(&Scene::Mapped { field: &id, exemplar: &g }, &cam, None).map_err(err)?;
        diff = diff.max(a.max_abs_diff(&b));
    }
    check(diff <= 1e-6, format!("identity render differs by {diff:e}"))?;

    check(DEFAULT_FOCAL == 512.0, "default focal")?;
    let cams = sample_cameras(50, 2.5, DEFAULT_FOCAL, (512, 512), 0).map_err(err)?;
    check(cams.len() == 50, "camera count")?;
    for c in &cams {
        check((c.position.norm() - 2.5).abs() < 1e-9, "camera radius")?;
        check(c.position[2] >= -1e-12, "camera below the horizon")?;
        check(c.focal == 512.0 && c.look_at == Vec3::zeros(), "camera intrinsics")?;
    }
    Ok(format!("T {got:.6} vs {want:.6}, identity render diff {diff:e}, 50 cameras at 2.5"))
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cloud = |n| -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    };
    for _ in 0..5 {
        let (a, b) = (cloud(100), cloud(100));
        let one_way = |x: &[Vec3], y: &[Vec3]| {
            x.iter()
                .map(|p| y.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        let want = one_way(&a, &b) + one_way(&b, &a);
        let got = chamfer(&a, &b).map_err(err)?;
        check((got - want).abs() <= 1e-9, format!("chamfer {got} vs {want}"))?;
    }

    let pt = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let gen = vec![vec![pt(0., 0., 0.)], vec![pt(1., 0., 0.)], vec![pt(0., 2., 0.)]];
    let ex = vec![vec![pt(0., 0., 0.)], vec![pt(0., 1., 0.)], vec![pt(3., 0., 0.)]];
    let mmd = mmd_quality(&gen, &ex).map_err(err)?;
    check((mmd - 400.0 / 3.0).abs() < 1e-9, format!("toy MMD {mmd}"))?;
    check(mmd_quality(&ex, &ex).map_err(err)? == 0.0, "MMD of identical sets")?;

    let sets = vec![
        vec![pt(0., 0., 0.), pt(1., 0., 0.)],
        vec![pt(0., 0., 0.), pt(0., 1., 0.)],
        vec![pt(2., 0., 0.)],
    ];
    let tmd = tmd_diversity(&sets).map_err(err)?;
    check((tmd - 13.0).abs() < 1e-9, format!("toy TMD {tmd}"))?;
    let same = vec![sets[0].clone(); 3];
    check(tmd_diversity(&same).map_err(err)? == 0.0, "TMD of identical scenes")?;
    Ok(format!("chamfer matches brute force, toy MMD {mmd:.4}, toy TMD {tmd}"))
}

fn schedule(p: &ExemplarPyramid) -> Outcome {
    let c = SynthesisConfig::default();
    let want = [16, 21, 28, 38, 51, 68, 91, 121];
    check(c.max_dim_schedule == want && DEFAULT_SCHEDULE == want, format!("{:?}", c.max_dim_schedule))?;
    let maxes: Vec<usize> = p.level_dims().iter().map(|d| d.max()).collect();
    check(maxes == want, format!("pyramid level maxima {maxes:?}"))?;
    let sched: Vec<usize> = scale_schedule(&c, Dims::new(121, 121, 36)).map_err(err)?.iter().map(|d| d.max()).collect();
    check(sched == want, format!("schedule {sched:?}"))?;
    Ok(format!("{want:?}"))
}

fn retargeting(t: &Terrain) -> Outcome {
    let c = SynthesisConfig {
        levels: 4,
        max_dim_schedule: vec![16, 21, 28, 38, 51],
        exact_scales: 3,
        seed: 2,
        ..Default::default()
    };
    let g = procedural_exemplar(ExemplarKind::Terrain, Dims::new(51, 51, 20), 6).map_err(err)?;
    let p = build_pyramid(&g, &c).map_err(err)?;
    let target = Dims::new(77, 51, 20);
    let out = retarget(&p, target, &c).map_err(err)?;
    let bb = p.bbox();
    check(out.field.coords().iter().all(|x| bb.contains(x)), "a coordinate left the exemplar box")?;
    check(out.field.dims() == target, format!("output dims {}", out.field.dims()))?;
    for (rec, lvl) in out.log.scales.iter().zip(p.level_dims()) {
        // Half-up rounding of lvl * 77 / 51 in integers.
        let x = (2 * lvl[0] * 77 + 51) / (2 * 51);
        let want = [x, lvl[1], lvl[2]];
        check(rec.synthesis_dims == want, format!("scale {}: {:?} vs {want:?}", rec.scale, rec.synthesis_dims))?;
    }
    check(synthesis_dims(&p, target).last() == Some(&target), "finest synthesis dims")?;

    let c0 = SynthesisConfig { seed: 1, ..Default::default() };
    let same = retarget(&t.pyramid, t.pyramid.finest().grid.dims(), &c0).map_err(err)?;
    let moved = same.field.fraction_differing(&t.recon.field, 1e-9);
    check(moved == 0.0, format!("same-size retarget differs on {moved:.5} of voxels"))?;
    let dims: Vec<[usize; 3]> = out.log.scales.iter().map(|s| s.synthesis_dims).collect();
    Ok(format!("1.5x dims {dims:?}, same-size retarget equals the reconstruction"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let r = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let tag = if r.is_ok() { "PASS" } else { "FAIL" };
        let msg = match &r {
            Ok(m) | Err(m) => m,
        };
        println!("{tag} {n:>2} {name}: {msg} [{:.1}s]", t.elapsed().as_secs_f64());
        results.push((n, name, r));
    };

    let cases = instances();
    run(1, "exact NNF matches brute force", &mut || exact_oracle(&cases));
    run(2, "PatchMatch quality", &mut || patchmatch_quality(&cases));

    let pyramid = terrain_121();
    let terrain = pyramid.and_then(|pyramid| {
        let c = SynthesisConfig { noise_sigma: 0.0, seed: 1, ..Default::default() };
        let t = Instant::now();
        let recon = generate(&pyramid, &c, 1).map_err(err)?;
        Ok(Terrain { pyramid, recon, recon_seconds: t.elapsed().as_secs_f64() })
    });
    let need = |f: &dyn Fn(&Terrain) -> Outcome| match &terrain {
        Ok(t) => f(t),
        Err(e) => Err(format!("terrain setup failed: {e}")),
    };

    run(3, "PatchMatch memory is linear, exact refuses", &mut || need(&|t| memory_contract(&t.pyramid)));
    run(4, "zero-noise reconstruction", &mut || need(&reconstruction));
    run(5, "diversity across seeds", &mut diversity);
    run(6, "completeness weight and key coverage", &mut completeness_knob);
    run(7, "geometry transform", &mut || need(&|t| geometry(&t.pyramid)));
    run(8, "renderer", &mut renderer);
    run(9, "metrics", &mut metrics);
    run(10, "scale schedule", &mut || need(&|t| schedule(&t.pyramid)));
    run(11, "retargeting", &mut || need(&retargeting));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!("{} of {} acceptance checks passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
