//! File formats: VXG1 grids, VXM1 mapping fields, OBJ meshes, PPM/PNG
//! images and camera lists.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BBox, Dims, FeatureVolume, MappingField, TransformedGrid, Vec3, VoxelGrid, SH_COEFFS};
use crate::render::{Camera, Image};
use crate::xform::Mesh;

const GRID_MAGIC: &[u8; 4] = b"VXG1";
const FIELD_MAGIC: &[u8; 4] = b"VXM1";
const RADIANCE_CHANNELS: usize = 1 + SH_COEFFS;
const FEATURE_CHANNELS: usize = 4;

/// Raw contents of a VXG1 file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGrid {
    pub dims: Dims,
    pub channels: usize,
    pub half_extents: [f32; 3],
    pub values: Vec<f32>,
}

struct Reader<R> {
    inner: R,
    what: String,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format(format!("{}: truncated file", self.what))
            } else {
                Error::Io(e)
            }
        })?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut buf = vec![0u8; n * 4];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format(format!("{}: truncated payload", self.what))
            } else {
                Error::Io(e)
            }
        })?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let m: [u8; 4] = self.bytes()?;
        if &m != expect {
            return Err(Error::Format(format!(
                "{}: bad magic {:?}, expected {:?}",
                self.what,
                String::from_utf8_lossy(&m),
                String::from_utf8_lossy(expect)
            )));
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<Dims> {
        let d = [self.u32()?, self.u32()?, self.u32()?];
        if d.contains(&0) {
            return Err(Error::Format(format!("{}: zero dimension {d:?}", self.what)));
        }
        let dims = Dims(d.map(|v| v as usize));
        if dims.0.iter().try_fold(1usize, |acc, &v| acc.checked_mul(v)).is_none() {
            return Err(Error::Format(format!("{}: dims overflow", self.what)));
        }
        Ok(dims)
    }

    fn at_end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format(format!("{}: trailing bytes", self.what))),
        }
    }
}

fn open(path: &Path) -> Result<Reader<BufReader<File>>> {
    Ok(Reader {
        inner: BufReader::new(File::open(path)?),
        what: path.display().to_string(),
    })
}

fn bbox_from(h: [f32; 3], what: &str) -> Result<BBox> {
    BBox::new(h.map(|v| v as f64)).map_err(|_| Error::Format(format!("{what}: invalid half-extents {h:?}")))
}

pub fn read_raw_grid(path: &Path) -> Result<RawGrid> {
    let mut r = open(path)?;
    r.magic(GRID_MAGIC)?;
    let dims = r.dims()?;
    let channels = r.u32()? as usize;
    if channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", r.what)));
    }
    let half_extents = [r.f32()?, r.f32()?, r.f32()?];
    let values = r.f32s(dims.count() * channels)?;
    r.at_end()?;
    Ok(RawGrid {
        dims,
        channels,
        half_extents,
        values,
    })
}

pub fn write_raw_grid(path: &Path, raw: &RawGrid) -> Result<()> {
    if raw.values.len() != raw.dims.count() * raw.channels {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} voxels of {} channels",
            raw.values.len(),
            raw.dims.count(),
            raw.channels
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GRID_MAGIC)?;
    for d in raw.dims.0 {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&(raw.channels as u32).to_le_bytes())?;
    for h in raw.half_extents {
        w.write_all(&h.to_le_bytes())?;
    }
    for v in &raw.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a density + SH grid (28 channels).
pub fn read_voxel_grid(path: &Path) -> Result<VoxelGrid> {
    let raw = read_raw_grid(path)?;
    if raw.channels != RADIANCE_CHANNELS {
        return Err(Error::Format(format!(
            "{}: expected {RADIANCE_CHANNELS} channels, found {}",
            path.display(),
            raw.channels
        )));
    }
    let bbox = bbox_from(raw.half_extents, &path.display().to_string())?;
    let n = raw.dims.count();
    let mut density = Vec::with_capacity(n);
    let mut sh = Vec::with_capacity(n);
    for v in raw.values.chunks_exact(RADIANCE_CHANNELS) {
        density.push(v[0]);
        sh.push(std::array::from_fn(|k| v[1 + k]));
    }
    VoxelGrid::new(raw.dims, bbox, density, sh)
}

pub fn write_voxel_grid(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let mut values = Vec::with_capacity(grid.dims().count() * RADIANCE_CHANNELS);
    for (d, h) in grid.density().iter().zip(grid.sh()) {
        values.push(*d);
        values.extend_from_slice(h);
    }
    write_raw_grid(
        path,
        &RawGrid {
            dims: grid.dims(),
            channels: RADIANCE_CHANNELS,
            half_extents: grid.bbox().half_extents().map(|v| v as f32),
            values,
        },
    )
}

/// Reads a 4-channel feature grid (geometry + appearance).
pub fn read_transformed_grid(path: &Path) -> Result<TransformedGrid> {
    let raw = read_raw_grid(path)?;
    if raw.channels != FEATURE_CHANNELS {
        return Err(Error::Format(format!(
            "{}: expected {FEATURE_CHANNELS} channels, found {}",
            path.display(),
            raw.channels
        )));
    }
    let bbox = bbox_from(raw.half_extents, &path.display().to_string())?;
    let data = raw
        .values
        .chunks_exact(FEATURE_CHANNELS)
        .map(|v| [v[0], v[1], v[2], v[3]])
        .collect();
    Ok(TransformedGrid {
        bbox,
        volume: FeatureVolume::new(raw.dims, data)?,
    })
}

pub fn write_transformed_grid(path: &Path, grid: &TransformedGrid) -> Result<()> {
    write_raw_grid(
        path,
        &RawGrid {
            dims: grid.dims(),
            channels: FEATURE_CHANNELS,
            half_extents: grid.bbox.half_extents().map(|v| v as f32),
            values: grid.volume.data.iter().flatten().copied().collect(),
        },
    )
}

/// Reads a mapping field. Coordinates outside the exemplar box are clamped
/// with a warning.
pub fn read_mapping_field(path: &Path) -> Result<MappingField> {
    let mut r = open(path)?;
    r.magic(FIELD_MAGIC)?;
    let dims = r.dims()?;
    let what = r.what.clone();
    let bbox = bbox_from([r.f32()?, r.f32()?, r.f32()?], &what)?;
    let exemplar = bbox_from([r.f32()?, r.f32()?, r.f32()?], &what)?;
    let values = r.f32s(dims.count() * 3)?;
    r.at_end()?;
    let coords = values
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    let (field, clamped) = MappingField::new(dims, bbox, exemplar, coords)?;
    if clamped > 0 {
        log::warn!("{what}: clamped {clamped} coordinates into the exemplar box");
    }
    Ok(field)
}

pub fn write_mapping_field(path: &Path, field: &MappingField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    for d in field.dims().0 {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for h in field.bbox().half_extents().into_iter().chain(field.exemplar_bbox().half_extents()) {
        w.write_all(&(h as f32).to_le_bytes())?;
    }
    for c in field.coords() {
        for v in c.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `v` and `f` records of an OBJ file; polygons are fan-triangulated.
pub fn read_obj(path: &Path) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    let bad = |n: usize, msg: &str| Error::Format(format!("{}:{n}: {msg}", path.display()));
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse().map_err(|_| bad(n + 1, "bad vertex")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad(n + 1, "vertex needs three coordinates"));
                }
                mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| {
                        let first = s.split('/').next().unwrap_or("");
                        match first.parse::<u32>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(bad(n + 1, "bad face index")),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad(n + 1, "face needs three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let nv = mesh.vertices.len() as u32;
    if mesh.triangles.iter().flatten().any(|&i| i >= nv) {
        return Err(Error::Format(format!("{}: face index out of range", path.display())));
    }
    Ok(mesh)
}

/// Binary P6 PPM.
pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
    w.write_all(&image.to_rgb8())?;
    w.flush()?;
    Ok(())
}

pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    image::save_buffer(
        path,
        &image.to_rgb8(),
        image.width as u32,
        image.height as u32,
        image::ColorType::Rgb8,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Format(other.to_string()),
    })
}

/// Parses a camera list: one `px py pz lx ly lz fov` line per camera, with
/// the horizontal field of view in degrees. Blank lines and `#` comments
/// are skipped.
pub fn parse_camera_list(text: &str, resolution: (usize, usize)) -> Result<Vec<Camera>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("camera line {}: not a number", n + 1)))?;
        if v.len() != 7 {
            return Err(Error::Format(format!(
                "camera line {}: expected 7 values, found {}",
                n + 1,
                v.len()
            )));
        }
        if !(v[6] > 0.0 && v[6] < 180.0) {
            return Err(Error::Format(format!("camera line {}: fov must be in (0, 180)", n + 1)));
        }
        let focal = Camera::focal_for_fov(v[6], resolution.0);
        out.push(Camera::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
            Vec3::z(),
            focal,
            resolution.0,
            resolution.1,
        )?);
    }
    Ok(out)
}
