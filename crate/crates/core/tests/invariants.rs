use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxsyn::grid::{nearest_voxel, resolve_features, trilinear_sample, voxel_center, SH_COEFFS};
use voxsyn::metrics::{chamfer, mmd_quality, PointCloud};
use voxsyn::nnf::{
    approximate_nnf_trace, blend_values, exact_nnf, patch_distance, ExactParams, PatchMatchParams, PatchSet,
};
use voxsyn::procedural::{procedural_exemplar, ExemplarKind};
use voxsyn::render::eval_sh;
use voxsyn::xform::{fit_appearance_pca, normalize_sh, transform_exemplar};
use voxsyn::{BBox, Dims, FeatureVolume, MappingField, Vec3, VoxelGrid};

fn dims() -> impl Strategy<Value = Dims> {
    (1usize..9, 1usize..9, 1usize..9).prop_map(|(x, y, z)| Dims::new(x, y, z))
}

fn random_volume(dims: Dims, seed: u64) -> FeatureVolume {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.count())
        .map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0)))
        .collect();
    FeatureVolume::new(dims, data).unwrap()
}

fn random_grid(dims: Dims, seed: u64) -> VoxelGrid {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let density = (0..dims.count())
        .map(|_| if r.random_bool(0.4) { r.random_range(0.5..5.0) } else { 0.0 })
        .collect();
    let sh = (0..dims.count())
        .map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0)))
        .collect();
    VoxelGrid::new(dims, BBox::normalized(dims), density, sh).unwrap()
}

fn cloud(seed: u64, n: usize) -> PointCloud {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn index_roundtrip(d in dims(), k in 0usize..512) {
        let i = k % d.count();
        prop_assert_eq!(d.index(d.coords(i)), i);
    }

    #[test]
    fn centers_lie_in_box_and_snap_back(d in dims(), k in 0usize..512) {
        let bbox = BBox::normalized(d);
        let v = d.coords(k % d.count());
        let c = voxel_center(d, &bbox, v).unwrap();
        prop_assert!(bbox.contains(&c));
        prop_assert_eq!(nearest_voxel(d, &bbox, &c), v);
        let h = bbox.half_extents();
        prop_assert!((h.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trilinear_is_a_convex_combination(d in dims(), seed in any::<u64>(), p in prop::array::uniform3(-1.5f64..1.5)) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f32> = (0..d.count()).map(|_| r.random_range(-3.0..3.0)).collect();
        let bbox = BBox::normalized(d);
        let v = trilinear_sample(d, &bbox, &values, &Vec3::from(p));
        let lo = values.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        prop_assert!(v >= lo - 1e-5 && v <= hi + 1e-5);
        let c = vec![1.25f32; d.count()];
        prop_assert!((trilinear_sample(d, &bbox, &c, &Vec3::from(p)) - 1.25).abs() < 1e-6);
    }

    #[test]
    fn mapping_fields_stay_in_box(d in dims(), seed in any::<u64>(), t in dims()) {
        let bbox = BBox::normalized(d);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..d.count())
            .map(|_| Vec3::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)))
            .collect();
        let (f, _) = MappingField::new(d, bbox, bbox, coords).unwrap();
        prop_assert!(f.coords().iter().all(|c| bbox.contains(c)));
        let t = Dims([0, 1, 2].map(|a| d[a] + t[a]));
        let up = f.upsample(t).unwrap();
        prop_assert!(up.coords().iter().all(|c| bbox.contains(c)));
        let q = Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        prop_assert!(bbox.contains(&f.map_query(&q)));
    }

    #[test]
    fn identity_readout_is_exact(d in dims(), seed in any::<u64>()) {
        let g = random_grid(d, seed);
        let id = MappingField::identity(d, *g.bbox(), *g.bbox());
        let back = resolve_features(&id, &g);
        prop_assert_eq!(back.density(), g.density());
        prop_assert_eq!(back.sh(), g.sh());
    }

    #[test]
    fn patch_distance_is_a_weighted_square(seed in any::<u64>(), w in 0.0f64..=1.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 4 * 27;
        let a: Vec<f32> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let d = patch_distance(&a, &b, w);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(patch_distance(&a, &a, w), 0.0);
        prop_assert!((d - patch_distance(&b, &a, w)).abs() < 1e-12);
        // Channel-major rows: geometry first, then three appearance channels.
        let sq = |r: std::ops::Range<usize>| r.map(|i| ((a[i] - b[i]) as f64).powi(2)).sum::<f64>();
        prop_assert!((d - ((1.0 - w) * sq(0..27) + w * sq(27..n))).abs() < 1e-9 * (1.0 + d));
    }

    #[test]
    fn normalized_sh_has_unit_norm(seed in any::<u64>(), scale in 1e-3f32..10.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let h: [f32; SH_COEFFS] = std::array::from_fn(|_| scale * r.random_range(-1.0..1.0));
        let n = normalize_sh(&h);
        let norm: f64 = n.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-5);
        let s2 = normalize_sh(&h.map(|v| 3.0 * v));
        for k in 0..SH_COEFFS {
            prop_assert!((n[k] - s2[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn sh_colors_are_clamped(seed in any::<u64>(), dir in prop::array::uniform3(-1.0f64..1.0)) {
        let v = Vec3::from(dir);
        prop_assume!(v.norm() > 1e-3);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let h: [f32; SH_COEFFS] = std::array::from_fn(|_| r.random_range(-4.0..4.0));
        for c in eval_sh(&h, &v.normalize()) {
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn chamfer_properties(sa in any::<u64>(), sb in any::<u64>(), shift in prop::array::uniform3(-5.0f64..5.0)) {
        let a = cloud(sa, 40);
        let b = cloud(sb, 25);
        let d = chamfer(&a, &b).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        prop_assert!((d - chamfer(&b, &a).unwrap()).abs() < 1e-12);
        let t = Vec3::from(shift);
        let at: Vec<Vec3> = a.iter().map(|p| p + t).collect();
        let bt: Vec<Vec3> = b.iter().map(|p| p + t).collect();
        prop_assert!((d - chamfer(&at, &bt).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mmd_ignores_order(seed in any::<u64>()) {
        let gen: Vec<PointCloud> = (0..4).map(|i| cloud(seed ^ i, 12)).collect();
        let ex: Vec<PointCloud> = (10..15).map(|i| cloud(seed ^ i, 12)).collect();
        let m = mmd_quality(&gen, &ex).unwrap();
        let gen_r: Vec<PointCloud> = gen.iter().rev().cloned().collect();
        let ex_r: Vec<PointCloud> = ex.iter().rev().cloned().collect();
        prop_assert!((m - mmd_quality(&gen_r, &ex_r).unwrap()).abs() < 1e-9);
        prop_assert_eq!(mmd_quality(&ex, &ex).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn transformed_grids_respect_bounds(seed in any::<u64>(), n in 4usize..10) {
        let g = random_grid(Dims::new(n, n + 1, n), seed);
        let pca = fit_appearance_pca(&g, 3).unwrap();
        let t = transform_exemplar(&g, 3.0, &pca, 100.0).unwrap().grid;
        for (i, v) in t.volume.data.iter().enumerate() {
            prop_assert!((-1.0..=1.0).contains(&v[0]));
            if !g.occupied()[i] {
                prop_assert_eq!(&v[1..], &[0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn exact_matches_are_no_worse_than_patchmatch(seed in any::<u64>()) {
        let q = random_volume(Dims::new(7, 6, 7), seed);
        let k = random_volume(Dims::new(8, 7, 6), seed.wrapping_add(1));
        let (qs, ks) = (PatchSet::new(&q, 3).unwrap(), PatchSet::new(&k, 3).unwrap());
        let ex = exact_nnf(&qs, &ks, &ExactParams { w_a: 0.5, alpha: None, capacity: 1 << 30 }, None).unwrap();
        let params = PatchMatchParams { w_a: 0.5, sweeps: 3, jump_radius: 4, seed };
        let (pm, trace) = approximate_nnf_trace(&qs, &ks, &params, None).unwrap();
        for (a, b) in ex.distances.iter().zip(&pm.distances) {
            prop_assert!(a <= b);
        }
        for w in trace.windows(2) {
            prop_assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b <= a));
        }
        prop_assert!(ex.assignment.iter().chain(&pm.assignment).all(|&j| j < ks.len()));
    }

    #[test]
    fn blending_the_identity_reproduces_the_volume(seed in any::<u64>(), n in 3usize..8) {
        let v = random_volume(Dims::new(n, n + 2, n + 1), seed);
        let ps = PatchSet::new(&v, 3).unwrap();
        let id: Vec<usize> = (0..ps.len()).collect();
        let b = blend_values(&id, &ps, v.dims).unwrap();
        for (x, y) in b.data.iter().zip(&v.data) {
            for c in 0..4 {
                prop_assert!((x[c] - y[c]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn procedural_exemplars_are_deterministic_and_normalized() {
    for kind in [ExemplarKind::Terrain, ExemplarKind::Arches, ExemplarKind::Blobs] {
        let d = Dims::new(24, 20, 16);
        let a = procedural_exemplar(kind, d, 5).unwrap();
        assert_eq!(a, procedural_exemplar(kind, d, 5).unwrap());
        assert_ne!(a, procedural_exemplar(kind, d, 6).unwrap());
        assert_eq!(a.bbox().half_extents()[0], 1.0);
        assert!(a.occupied_fraction() > 0.0 && a.occupied_fraction() < 1.0, "{kind:?}");
    }
}
