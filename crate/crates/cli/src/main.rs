//! `voxsyn`: exemplar-based voxel scene synthesis from the command line.

mod commands;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use options::{
    parse_dims, parse_offset, parse_region, parse_scale, parse_seeds, CameraArgs, ExemplarArgs, Seeds,
    SynthArgs,
};
use voxsyn::{Dims, Error};

#[derive(Parser, Debug)]
#[command(name = "voxsyn", version, about = "Synthesize voxel scenes from a single exemplar")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a procedural exemplar grid.
    MakeExemplar {
        /// terrain, arches or blobs.
        #[arg(long)]
        kind: String,
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the same scene at these dims.
        #[arg(long, value_parser = parse_dims, requires = "high_out")]
        high_dims: Option<Dims>,
        #[arg(long, requires = "high_dims")]
        high_out: Option<PathBuf>,
    },
    /// Build the exemplar pyramid and write one grid per level.
    BuildPyramid {
        #[command(flatten)]
        exemplar: ExemplarArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random samples, one per seed.
    Generate {
        #[command(flatten)]
        exemplar: ExemplarArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, value_parser = parse_seeds, default_value = "0")]
        seeds: Seeds,
        #[arg(long)]
        out: PathBuf,
        /// Also write the resolved grid of each sample.
        #[arg(long)]
        save_grid: bool,
        /// Render each sample with the camera options.
        #[arg(long)]
        render: bool,
        #[command(flatten)]
        camera: CameraArgs,
    },
    /// Synthesize at a different size.
    Retarget {
        #[command(flatten)]
        exemplar: ExemplarArgs,
        #[command(flatten)]
        synth: SynthArgs,
        /// Output dims at the finest scale.
        #[arg(long, value_parser = parse_dims, conflicts_with = "scale", required_unless_present = "scale")]
        dims: Option<Dims>,
        /// Per-axis size factors relative to the finest exemplar level.
        #[arg(long, value_parser = parse_scale)]
        scale: Option<[f64; 3]>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        save_grid: bool,
    },
    /// Layout from a second scene, patches from the exemplar.
    Analogy {
        #[command(flatten)]
        exemplar: ExemplarArgs,
        #[command(flatten)]
        synth: SynthArgs,
        /// Grid providing the layout.
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        save_grid: bool,
    },
    /// Re-synthesize from an edited coarse mapping field.
    Edit {
        #[command(flatten)]
        exemplar: ExemplarArgs,
        #[command(flatten)]
        synth: SynthArgs,
        /// Edited mapping field at the coarsest scale.
        #[arg(long, conflicts_with = "copy_region", required_unless_present = "copy_region")]
        proxy: Option<PathBuf>,
        /// Build the proxy by copying content into this voxel box,
        /// x0,y0,z0:x1,y1,z1 at the coarsest scale.
        #[arg(long, value_parser = parse_region, requires = "offset")]
        copy_region: Option<([usize; 3], [usize; 3])>,
        /// Where the copied content comes from, relative to the region.
        #[arg(long, value_parser = parse_offset, allow_hyphen_values = true)]
        offset: Option<[isize; 3]>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        save_grid: bool,
    },
    /// Read a mapping field through another exemplar.
    Redecorate {
        #[arg(long)]
        field: PathBuf,
        /// Exemplar grid with the new appearance.
        #[arg(long)]
        appearance: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a grid, or a mapping field through its exemplar.
    Render {
        #[arg(long, conflicts_with = "field", required_unless_present = "field")]
        grid: Option<PathBuf>,
        #[arg(long, requires = "exemplar")]
        field: Option<PathBuf>,
        #[arg(long)]
        exemplar: Option<PathBuf>,
        #[command(flatten)]
        camera: CameraArgs,
        #[arg(long)]
        out: PathBuf,
        /// Write PNG files next to the PPM files.
        #[arg(long)]
        png: bool,
    },
    /// Quality and diversity report for a set of scenes.
    Evaluate {
        /// Exemplar grid used for readout and as the quality reference.
        #[arg(long)]
        exemplar: PathBuf,
        /// Mapping fields (.vxm) or grids (.vxg).
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        #[command(flatten)]
        camera: CameraArgs,
        #[arg(long, default_value_t = voxsyn::metrics::QUALITY_POINTS)]
        quality_points: usize,
        #[arg(long, default_value_t = voxsyn::metrics::DIVERSITY_POINTS)]
        diversity_points: usize,
        #[arg(long, default_value_t = voxsyn::metrics::PATCH_CENTERS)]
        patch_centers: usize,
        #[arg(long, default_value_t = voxsyn::metrics::PATCH_POINTS)]
        patch_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_quality: bool,
        #[arg(long)]
        no_diversity: bool,
        #[arg(long)]
        no_visual: bool,
        /// Report path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::IndexOutOfRange { .. } => 2,
        Error::Capacity { .. } => 3,
        Error::Io(_) | Error::Format(_) => 4,
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("VOXSYN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("VOXSYN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
