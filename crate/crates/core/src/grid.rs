//! Dense voxel grids, mapping fields and the sampling operations shared by
//! every other module.
//!
//! Coordinate convention: a grid of `dims` voxels fills an axis-aligned box
//! centered at the origin. Voxel `i` along an axis has its center at
//! `-h + (i + 0.5) * (2h / D)`. Linear indices are x-fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Number of SH coefficients stored per voxel (9 per color channel).
pub const SH_COEFFS: usize = 27;

/// Density at or above which a voxel counts as occupied / inside.
pub const DENSITY_THRESHOLD: f32 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Dims([x, y, z])
    }

    pub fn cube(n: usize) -> Self {
        Dims([n, n, n])
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    #[inline]
    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    #[inline]
    pub fn min(&self) -> usize {
        self.0.iter().copied().min().unwrap_or(0)
    }

    #[inline]
    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.0[0] * (y + self.0[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.0[0];
        let yz = idx / self.0[0];
        [x, yz % self.0[1], yz / self.0[1]]
    }

    pub fn contains(&self, index: [usize; 3]) -> bool {
        (0..3).all(|a| index[a] < self.0[a])
    }

    /// Component-wise `self >= other`.
    pub fn covers(&self, other: Dims) -> bool {
        (0..3).all(|a| self.0[a] >= other.0[a])
    }
}

impl std::ops::Index<usize> for Dims {
    type Output = usize;
    fn index(&self, axis: usize) -> &usize {
        &self.0[axis]
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Axis-aligned box centered at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    half_extents: [f64; 3],
}

impl BBox {
    pub fn new(half_extents: [f64; 3]) -> Result<Self> {
        if half_extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::invalid(format!(
                "bounding box half extents must be positive, got {half_extents:?}"
            )));
        }
        Ok(BBox { half_extents })
    }

    /// The box for a grid of `dims`: the longest axis has half extent 1 and
    /// the others follow the dims aspect ratio.
    pub fn normalized(dims: Dims) -> Self {
        let m = dims.max().max(1) as f64;
        BBox {
            half_extents: [0, 1, 2].map(|a| dims[a].max(1) as f64 / m),
        }
    }

    #[inline]
    pub fn half_extents(&self) -> [f64; 3] {
        self.half_extents
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|a| x[a].abs() <= self.half_extents[a])
    }

    #[inline]
    pub fn clamp(&self, x: &Vec3) -> Vec3 {
        let h = &self.half_extents;
        Vec3::new(
            x[0].clamp(-h[0], h[0]),
            x[1].clamp(-h[1], h[1]),
            x[2].clamp(-h[2], h[2]),
        )
    }

    #[inline]
    pub fn voxel_size(&self, dims: Dims) -> [f64; 3] {
        [0, 1, 2].map(|a| 2.0 * self.half_extents[a] / dims[a] as f64)
    }

    /// Approximate equality, for comparing boxes that went through f32 files.
    pub fn approx_eq(&self, other: &BBox, tol: f64) -> bool {
        (0..3).all(|a| (self.half_extents[a] - other.half_extents[a]).abs() <= tol)
    }

    /// Box scaled per axis.
    pub fn scaled(&self, s: [f64; 3]) -> Result<Self> {
        BBox::new([0, 1, 2].map(|a| self.half_extents[a] * s[a]))
    }
}

/// World-space center of voxel `index`.
pub fn voxel_center(dims: Dims, bbox: &BBox, index: [usize; 3]) -> Result<Vec3> {
    if !dims.contains(index) {
        return Err(Error::IndexOutOfRange {
            index,
            dims: dims.0,
        });
    }
    Ok(center_unchecked(dims, bbox, index))
}

#[inline]
pub(crate) fn center_unchecked(dims: Dims, bbox: &BBox, index: [usize; 3]) -> Vec3 {
    let h = bbox.half_extents();
    Vec3::from_fn(|a, _| -h[a] + (index[a] as f64 + 0.5) * (2.0 * h[a] / dims[a] as f64))
}

/// Index of the voxel whose center is nearest to `x` (clamped into the grid).
#[inline]
pub fn nearest_voxel(dims: Dims, bbox: &BBox, x: &Vec3) -> [usize; 3] {
    let h = bbox.half_extents();
    [0, 1, 2].map(|a| {
        let u = (x[a] + h[a]) / (2.0 * h[a]) * dims[a] as f64;
        (u.floor().max(0.0) as usize).min(dims[a] - 1)
    })
}

/// Eight-corner trilinear interpolation stencil.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
}

impl Stencil {
    /// Stencil for world point `x`; outside the outermost voxel centers the
    /// lookup clamps to the edge.
    pub fn new(dims: Dims, bbox: &BBox, x: &Vec3) -> Self {
        let h = bbox.half_extents();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut f = [0f64; 3];
        for a in 0..3 {
            let n = dims[a];
            let mut u = (x[a] + h[a]) / (2.0 * h[a]) * n as f64 - 0.5;
            u = u.clamp(0.0, (n - 1) as f64);
            // Snap round-off so that a query at a voxel center returns the
            // stored value bit for bit.
            let r = u.round();
            if (u - r).abs() < 1e-9 {
                u = r;
            }
            let i0 = (u.floor() as usize).min(n.saturating_sub(2));
            lo[a] = i0;
            hi[a] = (i0 + 1).min(n - 1);
            f[a] = u - i0 as f64;
        }
        let mut idx = [0usize; 8];
        let mut w = [0f64; 8];
        for c in 0..8 {
            let (bx, by, bz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let ix = if bx == 1 { hi[0] } else { lo[0] };
            let iy = if by == 1 { hi[1] } else { lo[1] };
            let iz = if bz == 1 { hi[2] } else { lo[2] };
            idx[c] = dims.index([ix, iy, iz]);
            let wx = if bx == 1 { f[0] } else { 1.0 - f[0] };
            let wy = if by == 1 { f[1] } else { 1.0 - f[1] };
            let wz = if bz == 1 { f[2] } else { 1.0 - f[2] };
            w[c] = wx * wy * wz;
        }
        Stencil { idx, w }
    }

    #[inline]
    pub fn apply(&self, values: &[f32]) -> f32 {
        let mut acc = 0.0f64;
        for c in 0..8 {
            if self.w[c] != 0.0 {
                acc += self.w[c] * values[self.idx[c]] as f64;
            }
        }
        acc as f32
    }

    /// Interpolate `n` consecutive channels of an interleaved buffer.
    #[inline]
    pub fn apply_strided<const N: usize>(&self, values: &[[f32; N]]) -> [f32; N] {
        let mut acc = [0.0f64; N];
        for c in 0..8 {
            let w = self.w[c];
            if w != 0.0 {
                let v = &values[self.idx[c]];
                for k in 0..N {
                    acc[k] += w * v[k] as f64;
                }
            }
        }
        acc.map(|v| v as f32)
    }
}

/// Exemplar radiance grid: density and 27 SH coefficients per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: Dims,
    bbox: BBox,
    density: Vec<f32>,
    sh: Vec<[f32; SH_COEFFS]>,
    occupied: Vec<bool>,
    threshold: f32,
}

impl VoxelGrid {
    /// Builds a grid, deriving occupancy from `density >= threshold`.
    /// Densities of unoccupied voxels are forced to zero.
    pub fn new(
        dims: Dims,
        bbox: BBox,
        density: Vec<f32>,
        sh: Vec<[f32; SH_COEFFS]>,
    ) -> Result<Self> {
        Self::with_threshold(dims, bbox, density, sh, DENSITY_THRESHOLD)
    }

    pub fn with_threshold(
        dims: Dims,
        bbox: BBox,
        mut density: Vec<f32>,
        sh: Vec<[f32; SH_COEFFS]>,
        threshold: f32,
    ) -> Result<Self> {
        let n = dims.count();
        if n == 0 {
            return Err(Error::invalid("grid dims must be positive"));
        }
        if density.len() != n || sh.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "grid {dims} needs {n} voxels, got density {} / sh {}",
                density.len(),
                sh.len()
            )));
        }
        let occupied: Vec<bool> = density
            .iter_mut()
            .map(|d| {
                let occ = *d >= threshold;
                if !occ {
                    *d = 0.0;
                }
                occ
            })
            .collect();
        Ok(VoxelGrid {
            dims,
            bbox,
            density,
            sh,
            occupied,
            threshold,
        })
    }

    /// Empty grid over the normalized box for `dims`.
    pub fn empty(dims: Dims) -> Self {
        let n = dims.count();
        VoxelGrid::new(
            dims,
            BBox::normalized(dims),
            vec![0.0; n],
            vec![[0.0; SH_COEFFS]; n],
        )
        .expect("consistent sizes")
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }
    pub fn density(&self) -> &[f32] {
        &self.density
    }
    pub fn sh(&self) -> &[[f32; SH_COEFFS]] {
        &self.sh
    }
    pub fn occupied(&self) -> &[bool] {
        &self.occupied
    }
    pub fn threshold(&self) -> f32 {
        self.threshold
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.bbox.voxel_size(self.dims)
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied.iter().filter(|&&o| o).count() as f64 / self.occupied.len() as f64
    }

    pub fn into_parts(self) -> (Dims, BBox, Vec<f32>, Vec<[f32; SH_COEFFS]>) {
        (self.dims, self.bbox, self.density, self.sh)
    }

    /// Density and SH at a world point.
    #[inline]
    pub fn sample(&self, x: &Vec3) -> (f32, [f32; SH_COEFFS]) {
        let st = Stencil::new(self.dims, &self.bbox, x);
        (st.apply(&self.density), st.apply_strided(&self.sh))
    }
}

/// Dense 4-channel volume (geometry + 3 appearance channels) used for patch
/// matching.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    pub dims: Dims,
    pub data: Vec<[f32; 4]>,
}

impl FeatureVolume {
    pub fn new(dims: Dims, data: Vec<[f32; 4]>) -> Result<Self> {
        if data.len() != dims.count() {
            return Err(Error::DimensionMismatch(format!(
                "volume {dims} needs {} voxels, got {}",
                dims.count(),
                data.len()
            )));
        }
        Ok(FeatureVolume { dims, data })
    }

    pub fn filled(dims: Dims, value: [f32; 4]) -> Self {
        FeatureVolume {
            dims,
            data: vec![value; dims.count()],
        }
    }

    #[inline]
    pub fn at(&self, index: [usize; 3]) -> &[f32; 4] {
        &self.data[self.dims.index(index)]
    }
}

/// Matching-space exemplar: truncated SDF `g` in channel 0 and PCA
/// appearance in channels 1..4.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedGrid {
    pub bbox: BBox,
    pub volume: FeatureVolume,
}

impl TransformedGrid {
    pub fn dims(&self) -> Dims {
        self.volume.dims
    }

    pub fn g(&self, idx: usize) -> f32 {
        self.volume.data[idx][0]
    }

    pub fn a(&self, idx: usize) -> [f32; 3] {
        let v = &self.volume.data[idx];
        [v[1], v[2], v[3]]
    }

    #[inline]
    pub fn sample(&self, x: &Vec3) -> [f32; 4] {
        Stencil::new(self.volume.dims, &self.bbox, x).apply_strided(&self.volume.data)
    }
}

/// Anything that can be read back through a mapping field.
pub trait Resolve: Sized {
    /// Samples `self` at every mapped coordinate of `field`, producing a grid
    /// with the field's dims and synthesis box.
    fn resolve(&self, field: &MappingField) -> Self;
    fn grid_bbox(&self) -> &BBox;
}

impl Resolve for VoxelGrid {
    fn resolve(&self, field: &MappingField) -> Self {
        let n = field.dims.count();
        let mut density = Vec::with_capacity(n);
        let mut sh = Vec::with_capacity(n);
        for c in &field.coords {
            let (d, h) = self.sample(c);
            density.push(d);
            sh.push(h);
        }
        VoxelGrid::with_threshold(field.dims, field.bbox, density, sh, self.threshold)
            .expect("sizes follow the field")
    }

    fn grid_bbox(&self) -> &BBox {
        &self.bbox
    }
}

impl Resolve for TransformedGrid {
    fn resolve(&self, field: &MappingField) -> Self {
        TransformedGrid {
            bbox: field.bbox,
            volume: FeatureVolume {
                dims: field.dims,
                data: field.coords.iter().map(|c| self.sample(c)).collect(),
            },
        }
    }

    fn grid_bbox(&self) -> &BBox {
        &self.bbox
    }
}

/// Per-voxel trilinear readout of `exemplar` through `field`.
pub fn resolve_features<G: Resolve>(field: &MappingField, exemplar: &G) -> G {
    exemplar.resolve(field)
}

/// The synthesized scene: one exemplar-space coordinate per synthesis voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingField {
    dims: Dims,
    bbox: BBox,
    exemplar_bbox: BBox,
    coords: Vec<Vec3>,
}

impl MappingField {
    /// Builds a field, clamping every coordinate into the exemplar box.
    /// Returns the field and how many coordinates had to be clamped.
    pub fn new(
        dims: Dims,
        bbox: BBox,
        exemplar_bbox: BBox,
        mut coords: Vec<Vec3>,
    ) -> Result<(Self, usize)> {
        if coords.len() != dims.count() {
            return Err(Error::DimensionMismatch(format!(
                "mapping field {dims} needs {} coordinates, got {}",
                dims.count(),
                coords.len()
            )));
        }
        let mut clamped = 0;
        for c in coords.iter_mut() {
            if !exemplar_bbox.contains(c) {
                *c = exemplar_bbox.clamp(c);
                clamped += 1;
            }
        }
        Ok((
            MappingField {
                dims,
                bbox,
                exemplar_bbox,
                coords,
            },
            clamped,
        ))
    }

    /// Identity mapping. When the synthesis box differs from the exemplar
    /// box the identity is stretched per axis to cover the exemplar.
    pub fn identity(dims: Dims, bbox: BBox, exemplar_bbox: BBox) -> Self {
        let hs = bbox.half_extents();
        let he = exemplar_bbox.half_extents();
        let same = hs == he;
        let coords = (0..dims.count())
            .map(|i| {
                let c = center_unchecked(dims, &bbox, dims.coords(i));
                if same {
                    c
                } else {
                    exemplar_bbox.clamp(&Vec3::from_fn(|a, _| c[a] * he[a] / hs[a]))
                }
            })
            .collect();
        MappingField {
            dims,
            bbox,
            exemplar_bbox,
            coords,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }
    pub fn exemplar_bbox(&self) -> &BBox {
        &self.exemplar_bbox
    }
    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.bbox.voxel_size(self.dims)
    }

    /// Continuous lookup: the stored coordinate at the nearest voxel center
    /// plus the offset from that center, clamped to the exemplar box.
    #[inline]
    pub fn map_query(&self, x: &Vec3) -> Vec3 {
        let n = nearest_voxel(self.dims, &self.bbox, x);
        let center = center_unchecked(self.dims, &self.bbox, n);
        let stored = &self.coords[self.dims.index(n)];
        self.exemplar_bbox.clamp(&(stored + (x - center)))
    }

    /// Resamples the field at `target` resolution over the same box.
    pub fn upsample(&self, target: Dims) -> Result<MappingField> {
        if !target.covers(self.dims) {
            return Err(Error::invalid(format!(
                "cannot upsample a {} mapping field to smaller dims {target}",
                self.dims
            )));
        }
        let coords = (0..target.count())
            .map(|i| self.map_query(&center_unchecked(target, &self.bbox, target.coords(i))))
            .collect();
        Ok(MappingField {
            dims: target,
            bbox: self.bbox,
            exemplar_bbox: self.exemplar_bbox,
            coords,
        })
    }

    /// Fraction of voxels whose coordinate differs from `other` by more than
    /// `tol` on some axis.
    pub fn fraction_differing(&self, other: &MappingField, tol: f64) -> f64 {
        assert_eq!(self.dims, other.dims);
        let n = self
            .coords
            .iter()
            .zip(&other.coords)
            .filter(|(a, b)| (*a - *b).amax() > tol)
            .count();
        n as f64 / self.coords.len() as f64
    }
}

/// Free-function form of [`MappingField::map_query`].
pub fn map_query(field: &MappingField, x: &Vec3) -> Vec3 {
    field.map_query(x)
}

/// Free-function form of [`MappingField::upsample`].
pub fn upsample_mapping(field: &MappingField, target: Dims) -> Result<MappingField> {
    field.upsample(target)
}

/// Trilinear sample of a single scalar channel laid out over `dims`.
pub fn trilinear_sample(dims: Dims, bbox: &BBox, values: &[f32], x: &Vec3) -> f32 {
    Stencil::new(dims, bbox, x).apply(values)
}
