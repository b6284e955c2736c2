use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use geosay::evaluation::{aggregate, format_report, generate_scene, parse_scene_spec, SceneSpec};
use geosay::junction::{read_junctions, write_junctions};
use geosay::pipeline::{fit_prior_from_manifest, parse_manifest, Pipeline, PipelineConfig};
use geosay::{load_image, Error, Result};

/// Geometric building index for very-high-resolution imagery.
///
/// Settings resolve as: built-in defaults, then GEOSAY_JOBS, then the
/// --config file, then command-line flags.
#[derive(Parser)]
#[command(name = "geosay", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (`run`, `synth`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Images processed concurrently.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Detect junctions in an image.
    Detect {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the building prior from image/mask pairs.
    FitPrior {
        /// Manifest of `<image> <mask>` lines.
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the index map and mask from a junction file.
    Gbi {
        #[arg(long)]
        junctions: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        /// Grid size as WxH.
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long)]
        out_map: PathBuf,
        #[arg(long)]
        out_mask: PathBuf,
        #[arg(long)]
        out_preview: PathBuf,
    },
    /// Evaluate the full pipeline on a manifest of images and truth masks.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Render a synthetic scene with its truth mask and corner junctions.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full pipeline on images, persisting every intermediate.
    Run {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        prior: Option<PathBuf>,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height in `{s}`"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

fn resolve_config(g: &GlobalArgs, prior: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::from_env()?;
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        cfg = cfg.merge_text(&text, path)?;
    }
    if let Some(j) = g.jobs {
        if j == 0 {
            return Err(Error::Config {
                key: "jobs".into(),
                reason: "must be at least 1".into(),
            });
        }
        cfg.parallelism = j;
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(p) = prior {
        cfg.prior = Some(p.to_path_buf());
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match cli.command {
        Command::Detect { image, out } => {
            let cfg = resolve_config(g, None)?;
            info!("config {}", cfg.hash());
            let raster = load_image(&image)?;
            let lum = geosay::p_energy(&raster, cfg.p)?;
            let t = Instant::now();
            let junctions = geosay::detect_junctions(&lum, &cfg.detector)?;
            info!("detect: {} junctions in {:?}", junctions.len(), t.elapsed());
            write_junctions(&junctions, &out)?;
        }
        Command::FitPrior { scenes, out } => {
            let cfg = resolve_config(g, None)?;
            info!("config {}", cfg.hash());
            let entries = parse_manifest(&scenes)?;
            let model = fit_prior_from_manifest(&entries, &cfg)?;
            info!(
                "prior: P(building) = {:.4} from {} scenes",
                model.prior_building(),
                entries.len()
            );
            model.save(&out)?;
        }
        Command::Gbi {
            junctions,
            prior,
            size: (w, h),
            out_map,
            out_mask,
            out_preview,
        } => {
            let cfg = resolve_config(g, Some(&prior))?;
            info!("config {}", cfg.hash());
            let pipeline = Pipeline::new(cfg)?;
            let js = read_junctions(&junctions)?;
            let out = pipeline.from_junctions(js, w, h)?;
            out.map.write_gbif(&out_map)?;
            out.mask.write_png(&out_mask)?;
            out.map.write_preview(&out_preview)?;
        }
        Command::Eval {
            manifest,
            prior,
            report,
        } => {
            let cfg = resolve_config(g, Some(&prior))?;
            info!("config {}", cfg.hash());
            let pipeline = Pipeline::new(cfg)?;
            let entries = parse_manifest(&manifest)?;
            let results = pipeline.evaluate_dataset(&entries)?;
            write_text(&report, &format_report(&results))?;
            let agg = aggregate(&results);
            info!(
                "mAP {} mean F {:.4} over {} images ({} failed, {} without building pixels)",
                agg.map.map_or("n/a".into(), |v| format!("{v:.4}")),
                agg.mean_f,
                agg.evaluated,
                agg.failed,
                agg.excluded_from_map
            );
            return Ok(agg.failed == 0);
        }
        Command::Synth { spec, seed } => {
            let out_dir = g.out_dir.clone().ok_or_else(|| Error::Config {
                key: "out_dir".into(),
                reason: "synth needs --out-dir".into(),
            })?;
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::Io {
                path: spec.clone(),
                source: e,
            })?;
            let (mut scene_spec, random) = parse_scene_spec(&text, &spec)?;
            if let Some(params) = random {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let extra: SceneSpec = SceneSpec::random(&params, &mut rng);
                scene_spec.rectangles.extend(extra.rectangles);
                scene_spec.clutter.extend(extra.clutter);
            }
            let scene = generate_scene(&scene_spec, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            scene.image.save_png(&out_dir.join("image.png"))?;
            scene.truth.write_png(&out_dir.join("mask.png"))?;
            write_junctions(&scene.corners, &out_dir.join("corners.txt"))?;
        }
        Command::Run { images, prior } => {
            let cfg = resolve_config(g, prior.as_deref())?;
            info!("config {}", cfg.hash());
            let out_root = cfg.out_dir.clone();
            let jobs = cfg.parallelism;
            let pipeline = Pipeline::new(cfg)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Config {
                    key: "parallelism".into(),
                    reason: e.to_string(),
                })?;
            let dirs = output_dirs(&images, &out_root);
            let ok = pool.install(|| {
                use rayon::prelude::*;
                images
                    .par_iter()
                    .zip(dirs.par_iter())
                    .map(|(img, dir)| match pipeline.run(img, dir) {
                        Ok(out) => {
                            info!(
                                "{}: {} junctions, {} building pixels -> {}",
                                img.display(),
                                out.junctions.len(),
                                out.mask.count(),
                                dir.display()
                            );
                            true
                        }
                        Err(e) => {
                            error!("{e}");
                            false
                        }
                    })
                    .collect::<Vec<bool>>()
            });
            return Ok(ok.into_iter().all(|b| b));
        }
    }
    Ok(true)
}

/// One directory per image, named after the file stem and disambiguated by
/// position when stems repeat.
fn output_dirs(images: &[PathBuf], root: &Path) -> Vec<PathBuf> {
    let stems: Vec<String> = images
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into())
        })
        .collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if stems.iter().filter(|t| *t == s).count() > 1 {
                root.join(format!("{s}-{i}"))
            } else {
                root.join(s)
            }
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
