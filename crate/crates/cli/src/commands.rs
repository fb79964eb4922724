use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use voxsyn::grid::resolve_features;
use voxsyn::io::{
    read_mapping_field, read_voxel_grid, write_mapping_field, write_png, write_ppm, write_voxel_grid,
};
use voxsyn::metrics::{
    extract_patches_pc, mmd_quality, pairwise_chamfer, sample_surface, surface_mesh, visual_diversity_per_view,
    PointCloud,
};
use voxsyn::procedural::procedural_exemplar;
use voxsyn::pyramid::{resample_grid, save_pyramid};
use voxsyn::render::{render, Camera, Image, Scene};
use voxsyn::synth::{self, RunLog, Synthesis};
use voxsyn::xform::transform_exemplar;
use voxsyn::{Dims, ExemplarPyramid, MappingField, Result, SynthesisConfig, VoxelGrid};

use crate::options::{usage, CameraArgs, ExemplarArgs};
use crate::Command;

/// Everything needed to reproduce one output.
#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    exemplar: String,
    output: String,
    run: &'a RunLog,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("run records serialize");
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `<stem>.vxm`, `<stem>.log.json` and optionally `<stem>.vxg`.
fn save_synthesis(
    command: &str,
    exemplar: &ExemplarArgs,
    pyramid: &ExemplarPyramid,
    out: &Path,
    stem: &str,
    s: &Synthesis,
    save_grid: bool,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let field_path = out.join(format!("{stem}.vxm"));
    write_mapping_field(&field_path, &s.field)?;
    if save_grid {
        write_voxel_grid(&out.join(format!("{stem}.vxg")), &resolve_features(&s.field, pyramid.readout()))?;
    }
    write_json(
        &out.join(format!("{stem}.log.json")),
        &RunRecord {
            command,
            exemplar: exemplar.describe(),
            output: field_path.display().to_string(),
            run: &s.log,
        },
    )?;
    log::info!("wrote {}", field_path.display());
    Ok(())
}

fn render_views(scene: &Scene, cameras: &[Camera], step: Option<f64>, dir: &Path, png: bool) -> Result<Vec<Image>> {
    fs::create_dir_all(dir)?;
    cameras
        .iter()
        .enumerate()
        .map(|(k, cam)| {
            let img = render(scene, cam, step)?;
            write_ppm(&dir.join(format!("view_{k:03}.ppm")), &img)?;
            if png {
                write_png(&dir.join(format!("view_{k:03}.png")), &img)?;
            }
            Ok(img)
        })
        .collect()
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::MakeExemplar {
            kind,
            dims,
            seed,
            out,
            high_dims,
            high_out,
        } => {
            let kind = kind.parse()?;
            write_voxel_grid(&out, &procedural_exemplar(kind, dims, seed)?)?;
            if let (Some(d), Some(p)) = (high_dims, high_out) {
                write_voxel_grid(&p, &procedural_exemplar(kind, d, seed)?)?;
            }
            Ok(())
        }
        Command::BuildPyramid { exemplar, synth, out } => {
            let config = synth.resolve(SynthesisConfig::default())?;
            let pyramid = exemplar.pyramid(&config)?;
            save_pyramid(&pyramid, &out)?;
            write_json(&out.join("pyramid.json"), &config)?;
            for (n, d) in pyramid.level_dims().iter().enumerate() {
                log::info!("level {n}: {d}");
            }
            Ok(())
        }
        Command::Generate {
            exemplar,
            synth,
            seeds,
            out,
            save_grid,
            render: do_render,
            camera,
        } => {
            let config = synth.resolve(SynthesisConfig::default())?;
            let cameras = if do_render { camera.cameras()? } else { Vec::new() };
            let pyramid = exemplar.pyramid(&config)?;
            seeds.0.par_iter().try_for_each(|&seed| {
                let s = synth::generate(&pyramid, &config, seed)?;
                let stem = format!("seed_{seed}");
                save_synthesis("generate", &exemplar, &pyramid, &out, &stem, &s, save_grid)?;
                if do_render {
                    let scene = Scene::Mapped {
                        field: &s.field,
                        exemplar: pyramid.readout(),
                    };
                    render_views(&scene, &cameras, camera.step, &out.join(stem), false)?;
                }
                Ok(())
            })
        }
        Command::Retarget {
            exemplar,
            synth,
            dims,
            scale,
            out,
            save_grid,
        } => {
            let config = synth.resolve(SynthesisConfig::default())?;
            let pyramid = exemplar.pyramid(&config)?;
            let target = match (dims, scale) {
                (Some(d), _) => d,
                (None, Some(s)) => {
                    let fine = pyramid.finest().grid.dims();
                    Dims([0, 1, 2].map(|a| voxsyn::config::round_half_up(fine[a] as f64 * s[a]).max(1)))
                }
                (None, None) => return Err(usage("retarget needs --dims or --scale")),
            };
            let s = synth::retarget(&pyramid, target, &config)?;
            save_synthesis("retarget", &exemplar, &pyramid, &out, "retarget", &s, save_grid)
        }
        Command::Analogy {
            exemplar,
            synth,
            layout,
            out,
            save_grid,
        } => {
            let config = synth.resolve(SynthesisConfig::analogy_preset())?;
            let pyramid = exemplar.pyramid(&config)?;
            let b = read_voxel_grid(&layout)?;
            let coarse = &pyramid.levels[0];
            let b = resample_grid(&b, coarse.grid.dims())?;
            let b = transform_exemplar(&b, config.sdf_truncation, &coarse.pca, config.fill_density)?.grid;
            let s = synth::structural_analogy(&pyramid, &b, &config)?;
            save_synthesis("analogy", &exemplar, &pyramid, &out, "analogy", &s, save_grid)
        }
        Command::Edit {
            exemplar,
            synth,
            proxy,
            copy_region,
            offset,
            out,
            save_grid,
        } => {
            let config = synth.resolve(SynthesisConfig::edit_preset())?;
            let pyramid = exemplar.pyramid(&config)?;
            let proxy = match (proxy, copy_region) {
                (Some(p), _) => read_mapping_field(&p)?,
                (None, Some(region)) => {
                    let coarse = pyramid.levels[0].grid.dims();
                    let offset = offset.ok_or_else(|| usage("--copy-region needs --offset"))?;
                    synth::copy_region_proxy(coarse, *pyramid.bbox(), region, offset)?
                }
                (None, None) => return Err(usage("edit needs --proxy or --copy-region")),
            };
            let s = synth::edit_synthesis(&pyramid, &proxy, &config)?;
            save_synthesis("edit", &exemplar, &pyramid, &out, "edit", &s, save_grid)
        }
        Command::Redecorate { field, appearance, out } => {
            let field = read_mapping_field(&field)?;
            let other = read_voxel_grid(&appearance)?;
            write_voxel_grid(&out, &synth::redecorate(&field, &other)?)
        }
        Command::Render {
            grid,
            field,
            exemplar,
            camera,
            out,
            png,
        } => {
            let cameras = camera.cameras()?;
            match (grid, field, exemplar) {
                (Some(g), _, _) => {
                    let g = read_voxel_grid(&g)?;
                    render_views(&Scene::Grid(&g), &cameras, camera.step, &out, png)?;
                }
                (None, Some(f), Some(e)) => {
                    let field = read_mapping_field(&f)?;
                    let exemplar = read_voxel_grid(&e)?;
                    let scene = Scene::Mapped {
                        field: &field,
                        exemplar: &exemplar,
                    };
                    render_views(&scene, &cameras, camera.step, &out, png)?;
                }
                _ => return Err(usage("render needs --grid, or --field with --exemplar")),
            }
            Ok(())
        }
        Command::Evaluate {
            exemplar,
            scenes,
            camera,
            quality_points,
            diversity_points,
            patch_centers,
            patch_points,
            seed,
            no_quality,
            no_diversity,
            no_visual,
            out,
        } => {
            let opts = EvalOptions {
                quality: !no_quality,
                diversity: !no_diversity,
                visual: !no_visual,
                quality_points,
                diversity_points,
                patch_centers,
                patch_points,
                seed,
            };
            let report = evaluate(&exemplar, &scenes, &camera, &opts)?;
            match out {
                Some(p) => fs::write(p, report)?,
                None => print!("{report}"),
            }
            Ok(())
        }
    }
}

struct EvalOptions {
    quality: bool,
    diversity: bool,
    visual: bool,
    quality_points: usize,
    diversity_points: usize,
    patch_centers: usize,
    patch_points: usize,
    seed: u64,
}

enum Loaded {
    Field(MappingField, VoxelGrid),
    Grid(VoxelGrid),
}

impl Loaded {
    fn grid(&self) -> &VoxelGrid {
        match self {
            Loaded::Field(_, g) | Loaded::Grid(g) => g,
        }
    }

    fn scene<'a>(&'a self, exemplar: &'a VoxelGrid) -> Scene<'a> {
        match self {
            Loaded::Field(f, _) => Scene::Mapped { field: f, exemplar },
            Loaded::Grid(g) => Scene::Grid(g),
        }
    }
}

fn load_scene(path: &PathBuf, exemplar: &VoxelGrid) -> Result<Loaded> {
    if path.extension().is_some_and(|e| e == "vxm") {
        let f = read_mapping_field(path)?;
        let g = resolve_features(&f, exemplar);
        Ok(Loaded::Field(f, g))
    } else {
        Ok(Loaded::Grid(read_voxel_grid(path)?))
    }
}

fn point_cloud(grid: &VoxelGrid, n: usize, seed: u64) -> Result<PointCloud> {
    sample_surface(&surface_mesh(grid)?, n, seed)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn evaluate(exemplar: &Path, paths: &[PathBuf], camera: &CameraArgs, opts: &EvalOptions) -> Result<String> {
    if opts.diversity && paths.len() < 2 {
        return Err(usage(format!(
            "diversity needs at least 2 scenes, got {} (pass --no-diversity to skip it)",
            paths.len()
        )));
    }
    if opts.visual && paths.len() < 2 {
        return Err(usage(format!(
            "visual diversity needs at least 2 scenes, got {} (pass --no-visual to skip it)",
            paths.len()
        )));
    }
    let ex = read_voxel_grid(exemplar)?;
    let scenes: Vec<Loaded> = paths.iter().map(|p| load_scene(p, &ex)).collect::<Result<_>>()?;

    let quality: Option<Vec<f64>> = if opts.quality {
        let ex_pc = point_cloud(&ex, opts.quality_points, opts.seed)?;
        let ex_patches = extract_patches_pc(&ex_pc, opts.patch_centers, opts.patch_points, opts.seed)?;
        let q = scenes
            .iter()
            .map(|s| {
                let pc = point_cloud(s.grid(), opts.quality_points, opts.seed)?;
                let patches = extract_patches_pc(&pc, opts.patch_centers, opts.patch_points, opts.seed)?;
                mmd_quality(&patches, &ex_patches)
            })
            .collect::<Result<_>>()?;
        Some(q)
    } else {
        None
    };

    let pairwise = if opts.diversity {
        let pcs: Vec<PointCloud> = scenes
            .iter()
            .map(|s| point_cloud(s.grid(), opts.diversity_points, opts.seed))
            .collect::<Result<_>>()?;
        Some(pairwise_chamfer(&pcs)?)
    } else {
        None
    };

    let per_view = if opts.visual {
        let cams = camera.cameras()?;
        let ex_imgs: Vec<Image> = cams
            .iter()
            .map(|c| render(&Scene::Grid(&ex), c, camera.step))
            .collect::<Result<_>>()?;
        let stacks: Vec<Vec<Image>> = cams
            .iter()
            .map(|c| scenes.iter().map(|s| render(&s.scene(&ex), c, camera.step)).collect())
            .collect::<Result<_>>()?;
        Some(visual_diversity_per_view(&stacks, &ex_imgs)?)
    } else {
        None
    };

    let mut r = String::new();
    writeln!(r, "scene\tg_qua\tg_div_contribution").unwrap();
    for (i, p) in paths.iter().enumerate() {
        let q = quality.as_ref().map(|q| q[i]);
        let d = pairwise.as_ref().map(|m| 0.5 * m[i].iter().sum::<f64>());
        writeln!(r, "{}\t{}\t{}", p.display(), fmt_opt(q), fmt_opt(d)).unwrap();
    }
    if let Some(v) = &per_view {
        writeln!(r, "view\tv_div").unwrap();
        for (k, x) in v.iter().enumerate() {
            writeln!(r, "{k}\t{x:.6}").unwrap();
        }
    }
    writeln!(r, "set\tmetric\tvalue").unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    writeln!(r, "set\tG-Qua\t{}", fmt_opt(quality.as_deref().map(mean))).unwrap();
    let tmd = pairwise
        .as_ref()
        .map(|m| (0..m.len()).flat_map(|i| (i + 1..m.len()).map(move |j| (i, j))).map(|(i, j)| m[i][j]).sum());
    writeln!(r, "set\tG-Div\t{}", fmt_opt(tmd)).unwrap();
    writeln!(r, "set\tV-Div\t{}", fmt_opt(per_view.as_deref().map(mean))).unwrap();
    writeln!(r, "set\tV-Qua\tunavailable").unwrap();
    Ok(r)
}
