//! Shared argument groups and the parsers behind them.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::Value;
use voxsyn::io::{parse_camera_list, read_voxel_grid};
use voxsyn::procedural::{procedural_exemplar, ExemplarKind};
use voxsyn::pyramid::{build_pyramid, load_pyramid};
use voxsyn::render::{sample_cameras, Camera, DEFAULT_FOCAL};
use voxsyn::{Dims, Error, ExemplarPyramid, Result, SynthesisConfig, VoxelGrid};

pub fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn numbers<T: std::str::FromStr>(s: &str, n: usize, what: &str) -> std::result::Result<Vec<T>, String> {
    let v: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("{what} must be {n} comma-separated numbers, got {s:?}"))?;
    if v.len() != n {
        return Err(format!("{what} must be {n} comma-separated numbers, got {s:?}"));
    }
    Ok(v)
}

pub fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let v = numbers::<usize>(s, 3, "dims")?;
    if v.contains(&0) {
        return Err(format!("dims must be positive, got {s:?}"));
    }
    Ok(Dims::new(v[0], v[1], v[2]))
}

pub fn parse_offset(s: &str) -> std::result::Result<[isize; 3], String> {
    let v = numbers::<isize>(s, 3, "offset")?;
    Ok([v[0], v[1], v[2]])
}

pub fn parse_scale(s: &str) -> std::result::Result<[f64; 3], String> {
    let v = numbers::<f64>(s, 3, "scale")?;
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(format!("scale factors must be positive, got {s:?}"));
    }
    Ok([v[0], v[1], v[2]])
}

/// Half-open voxel box `x0,y0,z0:x1,y1,z1`.
pub fn parse_region(s: &str) -> std::result::Result<([usize; 3], [usize; 3]), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("region must be x0,y0,z0:x1,y1,z1, got {s:?}"))?;
    let lo = numbers::<usize>(a, 3, "region start")?;
    let hi = numbers::<usize>(b, 3, "region end")?;
    if (0..3).any(|k| lo[k] >= hi[k]) {
        return Err(format!("region {s:?} is empty"));
    }
    Ok(([lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]]))
}

pub fn parse_resolution(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once('x')
        .ok_or_else(|| format!("resolution must look like 512x512, got {s:?}"))?;
    match (w.parse::<usize>(), h.parse::<usize>()) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(format!("resolution must look like 512x512, got {s:?}")),
    }
}

/// `7`, `1,4,9` or the inclusive range `1..10`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Seeds(pub Vec<u64>);

pub fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    let bad = || format!("seeds must be N, N,M,... or A..B, got {s:?}");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok(Seeds((a..=b).collect()));
    }
    let v: Vec<u64> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let mut seen = v.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != v.len() {
        return Err(format!("duplicate seeds in {s:?}"));
    }
    Ok(Seeds(v))
}

/// `hemisphere:K:R[:SEED]` or the path of a camera-list file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CameraSpec {
    Hemisphere { count: usize, radius: f64, seed: u64 },
    File(PathBuf),
}

pub fn parse_cameras(s: &str) -> std::result::Result<CameraSpec, String> {
    let Some(rest) = s.strip_prefix("hemisphere:") else {
        return Ok(CameraSpec::File(PathBuf::from(s)));
    };
    let parts: Vec<&str> = rest.split(':').collect();
    let bad = || format!("camera spec must be hemisphere:K:R[:SEED], got {s:?}");
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let count: usize = parts[0].parse().map_err(|_| bad())?;
    let radius: f64 = parts[1].parse().map_err(|_| bad())?;
    let seed: u64 = match parts.get(2) {
        Some(p) => p.parse().map_err(|_| bad())?,
        None => 0,
    };
    if count == 0 || !(radius > 0.0) {
        return Err(bad());
    }
    Ok(CameraSpec::Hemisphere { count, radius, seed })
}

#[derive(Args, Clone, Debug)]
pub struct CameraArgs {
    /// hemisphere:K:R[:SEED] or a file of "px py pz lx ly lz fov" lines.
    #[arg(long, value_parser = parse_cameras, default_value = "hemisphere:50:2.5")]
    pub cameras: CameraSpec,
    #[arg(long, value_parser = parse_resolution, default_value = "512x512")]
    pub resolution: (usize, usize),
    /// Focal length in pixels for hemisphere cameras.
    #[arg(long, default_value_t = DEFAULT_FOCAL)]
    pub focal: f64,
    /// Ray-marching step; half a voxel by default.
    #[arg(long)]
    pub step: Option<f64>,
}

impl CameraArgs {
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        match &self.cameras {
            CameraSpec::Hemisphere { count, radius, seed } => {
                sample_cameras(*count, *radius, self.focal, self.resolution, *seed)
            }
            CameraSpec::File(p) => {
                let cams = parse_camera_list(&fs::read_to_string(p)?, self.resolution)?;
                if cams.is_empty() {
                    return Err(usage(format!("camera file {} lists no cameras", p.display())));
                }
                Ok(cams)
            }
        }
    }
}

/// Where the exemplar comes from. Exactly one must be given.
#[derive(Args, Clone, Debug)]
#[group(required = true, multiple = false)]
pub struct ExemplarArgs {
    /// Fine exemplar grid (VXG).
    #[arg(long)]
    pub exemplar: Option<PathBuf>,
    /// Directory with level_0.vxg .. level_N.vxg and optionally high.vxg.
    #[arg(long)]
    pub pyramid_dir: Option<PathBuf>,
    /// Procedural exemplar, KIND:X,Y,Z[:SEED].
    #[arg(long, value_parser = parse_procedural)]
    pub procedural: Option<ProceduralSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProceduralSpec {
    pub kind: String,
    pub dims: [usize; 3],
    pub seed: u64,
}

pub fn parse_procedural(s: &str) -> std::result::Result<ProceduralSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("procedural spec must be KIND:X,Y,Z[:SEED], got {s:?}"));
    }
    parts[0].parse::<ExemplarKind>().map_err(|e| e.to_string())?;
    let dims = parse_dims(parts[1])?;
    let seed = match parts.get(2) {
        Some(p) => p.parse().map_err(|_| format!("bad seed in {s:?}"))?,
        None => 0,
    };
    Ok(ProceduralSpec {
        kind: parts[0].to_string(),
        dims: dims.0,
        seed,
    })
}

impl ProceduralSpec {
    pub fn build(&self) -> Result<VoxelGrid> {
        procedural_exemplar(self.kind.parse()?, Dims(self.dims), self.seed)
    }
}

impl ExemplarArgs {
    pub fn describe(&self) -> String {
        if let Some(p) = &self.exemplar {
            format!("exemplar {}", p.display())
        } else if let Some(d) = &self.pyramid_dir {
            format!("pyramid {}", d.display())
        } else if let Some(s) = &self.procedural {
            format!("procedural {}:{}:{}", s.kind, Dims(s.dims), s.seed)
        } else {
            String::new()
        }
    }

    pub fn pyramid(&self, config: &SynthesisConfig) -> Result<ExemplarPyramid> {
        if let Some(p) = &self.exemplar {
            build_pyramid(&read_voxel_grid(p)?, config)
        } else if let Some(d) = &self.pyramid_dir {
            load_pyramid(d, config)
        } else if let Some(s) = &self.procedural {
            build_pyramid(&s.build()?, config)
        } else {
            Err(usage("no exemplar source given"))
        }
    }
}

/// Synthesis knobs. Values here override the config file, which overrides
/// the command's defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct SynthArgs {
    /// JSON file with any subset of the configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Coarse-scale coordinate noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Appearance weight in the patch distance.
    #[arg(long)]
    pub appearance_weight: Option<f64>,
    /// Completeness constant.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// SDF truncation in voxels.
    #[arg(long)]
    pub truncation: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Max-dimension resolution per scale, coarse to fine.
    #[arg(long, value_delimiter = ',')]
    pub max_dim_schedule: Option<Vec<usize>>,
    /// Derive a geometric schedule ending at this max dimension.
    #[arg(long)]
    pub finest_dim: Option<usize>,
    #[arg(long)]
    pub scale_factor: Option<f64>,
    /// Index of the finest scale (used with --finest-dim).
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub exact_scales: Option<usize>,
    #[arg(long)]
    pub exact_iterations: Option<usize>,
    #[arg(long)]
    pub approx_iterations: Option<usize>,
    #[arg(long)]
    pub patchmatch_sweeps: Option<usize>,
    #[arg(long)]
    pub jump_radius: Option<usize>,
    /// Largest number of query/key pairs the exact search may score.
    #[arg(long)]
    pub exact_capacity: Option<u64>,
    #[arg(long)]
    pub pca_components: Option<usize>,
    #[arg(long)]
    pub density_threshold: Option<f32>,
    #[arg(long)]
    pub fill_density: Option<f32>,
    /// Seed for single-output commands.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn merge_file(base: &SynthesisConfig, path: &Path) -> Result<SynthesisConfig> {
    let text = fs::read_to_string(path)?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(file) = file else {
        return Err(usage(format!("config {} must be a JSON object", path.display())));
    };
    let mut merged = serde_json::to_value(base).expect("config serializes");
    let obj = merged.as_object_mut().expect("config is an object");
    let schedule_only = file.contains_key("max_dim_schedule") && !file.contains_key("levels");
    for (k, v) in file {
        obj.insert(k, v);
    }
    let mut cfg: SynthesisConfig =
        serde_json::from_value(merged).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    if schedule_only {
        cfg.levels = cfg.max_dim_schedule.len().saturating_sub(1);
    }
    Ok(cfg)
}

impl SynthArgs {
    pub fn resolve(&self, base: SynthesisConfig) -> Result<SynthesisConfig> {
        let mut c = match &self.config {
            Some(p) => merge_file(&base, p)?,
            None => base,
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v; })*
            };
        }
        set!(
            sigma => noise_sigma,
            appearance_weight => appearance_weight,
            alpha => completeness_alpha,
            truncation => sdf_truncation,
            patch_size => patch_size,
            scale_factor => scale_factor,
            exact_scales => exact_scales,
            exact_iterations => exact_iterations,
            approx_iterations => approx_iterations,
            patchmatch_sweeps => patchmatch_sweeps,
            jump_radius => jump_radius,
            exact_capacity => exact_capacity,
            pca_components => pca_components,
            density_threshold => density_threshold,
            fill_density => fill_density,
            seed => seed
        );
        if let Some(s) = &self.max_dim_schedule {
            if self.finest_dim.is_some() {
                return Err(usage("--max-dim-schedule and --finest-dim are exclusive"));
            }
            c.max_dim_schedule = s.clone();
            c.levels = s.len().saturating_sub(1);
        }
        if let Some(n) = self.levels {
            c.levels = n;
        }
        if let Some(f) = self.finest_dim {
            c = c.with_geometric_schedule(f)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_syntax() {
        assert_eq!(parse_seeds("1..10").unwrap().0, (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_seeds("3").unwrap().0, vec![3]);
        assert_eq!(parse_seeds("4, 2").unwrap().0, vec![4, 2]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("1,1").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn small_parsers() {
        assert_eq!(parse_dims("121,121,47").unwrap(), Dims::new(121, 121, 47));
        assert!(parse_dims("1,2").is_err());
        assert!(parse_dims("0,2,2").is_err());
        assert_eq!(parse_resolution("64x32").unwrap(), (64, 32));
        assert!(parse_resolution("64").is_err());
        assert_eq!(parse_region("1,2,3:4,5,6").unwrap(), ([1, 2, 3], [4, 5, 6]));
        assert!(parse_region("1,2,3:1,5,6").is_err());
        assert_eq!(
            parse_cameras("hemisphere:50:2.5").unwrap(),
            CameraSpec::Hemisphere { count: 50, radius: 2.5, seed: 0 }
        );
        assert_eq!(parse_cameras("cams.txt").unwrap(), CameraSpec::File("cams.txt".into()));
        assert!(parse_cameras("hemisphere:0:2.5").is_err());
        assert!(parse_procedural("terrain:32,32,16:4").is_ok());
        assert!(parse_procedural("castle:32,32,16").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"noise_sigma": 0.25, "completeness_alpha": 0.5, "max_dim_schedule": [16, 21, 28]}"#).unwrap();
        let args = SynthArgs {
            config: Some(p),
            alpha: Some(2.0),
            ..Default::default()
        };
        let c = args.resolve(SynthesisConfig::default()).unwrap();
        assert_eq!(c.noise_sigma, 0.25);
        assert_eq!(c.completeness_alpha, 2.0);
        assert_eq!(c.levels, 2);
        assert_eq!(c.patch_size, 5);
    }

    #[test]
    fn file_keeps_preset_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"appearance_weight": 1.0}"#).unwrap();
        let args = SynthArgs {
            config: Some(p),
            ..Default::default()
        };
        let c = args.resolve(SynthesisConfig::edit_preset()).unwrap();
        assert_eq!(c.max_dim_schedule, vec![28, 38, 51, 68, 91, 121]);
        assert_eq!(c.appearance_weight, 1.0);
    }

    #[test]
    fn bad_config_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"sigma": 0.25}"#).unwrap();
        let args = SynthArgs {
            config: Some(p),
            ..Default::default()
        };
        assert!(matches!(args.resolve(SynthesisConfig::default()), Err(Error::InvalidArgument(_))));
        let missing = SynthArgs {
            config: Some(dir.path().join("none.json")),
            ..Default::default()
        };
        assert!(matches!(missing.resolve(SynthesisConfig::default()), Err(Error::Io(_))));
    }
}
