use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use scenesynth::analysis::{compare_distributions, dataset_stats, emit_plot_data, AnalysisConfig, Histogram};
use scenesynth::config::{RunConfig, TEMPLATE};
use scenesynth::map_augment::{apply_transform, sample_transform_params, AugmentConfig, TurnKind, TurnTransformParams};
use scenesynth::map_model::{build_reference_paths, load_map, town_map, write_map, REFERENCE_SPACING};
use scenesynth::pretrain_prep::{assign_tasks, vectorize_scene, write_sample, MaskConfig, Task, TaskPolicy};
use scenesynth::rng;
use scenesynth::synthesis::{generate_dataset, read_scene, validate_dataset, Scene, MIN_PATH_LENGTH};

/// Synthetic driving-scene generation and pre-training data preparation.
#[derive(Parser)]
#[command(name = "scenesynth", version)]
struct Cli {
    /// Log one line per scene (same as RUST_LOG=info).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Single,
    Double,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Map,
    Traj,
    Combined,
}

#[derive(Subcommand)]
enum Command {
    /// Warp a lane map with one sampled turn transform.
    AugmentMap {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Force the transform kind instead of sampling it.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Run config supplying the [augment] ranges.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a scene dataset from a run config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Turn scenes into masked pre-training samples.
    Mask {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0.7)]
        map_fraction: f64,
        #[arg(long, default_value_t = 0.5)]
        map_ratio: f64,
        #[arg(long)]
        seed: u64,
        /// Epoch index; each epoch draws fresh tasks and masks.
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Speed and direction distributions, optionally against a reference set.
    Stats {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check every scene file in a directory.
    Validate {
        #[arg(long)]
        scenes: PathBuf,
    },
    /// Write histogram tables, endpoint clouds, and optional SVG charts.
    Plot {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic town map.
    MakeMap {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        roads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a config file listing every key with its default.
    ConfigTemplate,
}

/// Exit code 1: bad data or failed validation. Exit code 2: usage or config.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn data(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(usage),
        None => Ok(RunConfig::default()),
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::AugmentMap { map, seed, out, kind, config } => {
            let cfg = load_config(config.as_deref())?;
            augment_map(&map, seed, &out, kind, &cfg.augment).map_err(data)
        }
        Command::Generate { config, workers } => {
            let cfg = RunConfig::load(&config).map_err(usage)?;
            if workers == Some(0) {
                return Err(usage(anyhow!("--workers must be >= 1")));
            }
            generate(&cfg, workers.unwrap_or(cfg.workers)).map_err(data)
        }
        Command::Mask { scenes, task, map_fraction, map_ratio, seed, epoch, out } => {
            let policy = match task {
                TaskArg::Map => TaskPolicy::Map,
                TaskArg::Traj => TaskPolicy::Traj,
                TaskArg::Combined => TaskPolicy::Combined,
            };
            let cfg = MaskConfig { policy, map_fraction, map_ratio };
            cfg.validate().map_err(usage)?;
            mask(&scenes, &cfg, seed, epoch, &out).map_err(data)
        }
        Command::Stats { scenes, reference, config } => {
            let cfg = load_config(config.as_deref())?;
            stats(&scenes, reference.as_deref(), &cfg.analysis).map_err(data)
        }
        Command::Validate { scenes } => validate(&scenes),
        Command::Plot { scenes, out, svg, config } => {
            let cfg = load_config(config.as_deref())?;
            plot(&scenes, &out, svg, &cfg.analysis).map_err(data)
        }
        Command::MakeMap { out, roads, seed } => {
            if roads == 0 {
                return Err(usage(anyhow!("--roads must be >= 1")));
            }
            write_map(&town_map(roads, seed), &out).map_err(data)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::ConfigTemplate => {
            print!("{TEMPLATE}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ParamsSidecar<'a> {
    seed: u64,
    source_map: String,
    transform: &'a TurnTransformParams,
}

fn augment_map(map_path: &Path, seed: u64, out: &Path, kind: Option<KindArg>, cfg: &AugmentConfig) -> anyhow::Result<()> {
    let map = load_map(map_path)?;
    let mut r = rng::stream(seed, &[rng::tag::MAP_PATHS]);
    let paths = build_reference_paths(&map, MIN_PATH_LENGTH, REFERENCE_SPACING, &mut r)?;
    if paths.is_empty() {
        bail!("{} has no lanes", map_path.display());
    }
    let path = &paths[r.gen_range(0..paths.len())];
    let mut params = sample_transform_params(&mut r, cfg, path, 0..path.samples().len())?;
    match kind {
        Some(KindArg::Single) => params.kind = TurnKind::SingleTurn,
        Some(KindArg::Double) => params.kind = TurnKind::DoubleTurn,
        None => {}
    }
    let warped = apply_transform(&map, &params)?;
    write_map(&warped, out)?;
    let sidecar = sidecar_path(out);
    let text = toml::to_string(&ParamsSidecar { seed, source_map: map_path.display().to_string(), transform: &params })?;
    fs::write(&sidecar, text).with_context(|| sidecar.display().to_string())?;
    println!("wrote {} and {}", out.display(), sidecar.display());
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".params.toml");
    out.with_file_name(name)
}

fn generate(cfg: &RunConfig, workers: usize) -> anyhow::Result<()> {
    if cfg.maps.is_empty() {
        bail!("config lists no maps");
    }
    let maps = cfg.maps.iter().map(load_map).collect::<Result<Vec<_>, _>>()?;
    let report = generate_dataset(&maps, &cfg.generation(), workers)?;
    let c = &report.manifest.counts;
    println!(
        "generated {} scenes ({} reused, {} original, {} augmented, {} failed) in {:.2} s",
        report.written,
        report.reused,
        c.original,
        c.augmented,
        c.failed,
        report.elapsed.as_secs_f64()
    );
    println!("throughput: {:.2} scenes/s", report.throughput());
    println!("manifest: {}", report.manifest_path.display());
    Ok(())
}

fn scene_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| dir.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("{} contains no scene files", dir.display());
    }
    Ok(files)
}

fn read_scenes(dir: &Path) -> anyhow::Result<Vec<Scene>> {
    scene_files(dir)?.iter().map(|p| read_scene(p).map_err(Into::into)).collect()
}

fn mask(dir: &Path, cfg: &MaskConfig, seed: u64, epoch: u64, out: &Path) -> anyhow::Result<()> {
    let scenes = read_scenes(dir)?;
    let batch: Vec<_> = scenes.iter().map(|s| (s.scene_id.clone(), vectorize_scene(s))).collect();
    fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let (mut map_n, mut traj_n, mut skipped) = (0, 0, 0);
    for (sample, (id, _)) in assign_tasks(&batch, cfg, seed, epoch)?.into_iter().zip(&batch) {
        match sample {
            Ok(s) => {
                match s.task {
                    Task::MapRecon => map_n += 1,
                    Task::TrajRecon => traj_n += 1,
                }
                write_sample(&s, &out.join(format!("{id}.sample")))?;
            }
            Err(e) => {
                log::warn!("scene {id} skipped: {e}");
                skipped += 1;
            }
        }
    }
    let total = (map_n + traj_n).max(1) as f64;
    println!(
        "wrote {} samples to {} (map_recon {map_n}, traj_recon {traj_n}, map fraction {:.4}, skipped {skipped})",
        map_n + traj_n,
        out.display(),
        map_n as f64 / total
    );
    Ok(())
}

fn describe(name: &str, h: &Histogram) {
    let occupied: Vec<usize> = (0..h.counts.len()).filter(|&i| h.counts[i] > 0).collect();
    match (occupied.first(), occupied.last()) {
        (Some(&a), Some(&b)) => {
            println!("{name}: samples {} occupied [{}, {})", h.total(), h.bin_bounds(a).0, h.bin_bounds(b).1)
        }
        _ => println!("{name}: samples 0"),
    }
}

fn stats(dir: &Path, reference: Option<&Path>, cfg: &AnalysisConfig) -> anyhow::Result<()> {
    let trajs = |d: &Path| -> anyhow::Result<Vec<_>> { Ok(read_scenes(d)?.into_iter().map(|s| s.positions).collect()) };
    let a = dataset_stats(&trajs(dir)?, cfg)?;
    println!("scenes: {} (stationary {})", a.endpoints.len() + a.stationary, a.stationary);
    describe("speed", &a.speed);
    describe("direction", &a.direction);
    if let Some(r) = reference {
        let b = dataset_stats(&trajs(r)?, cfg)?;
        for (name, x, y) in [("speed", &a.speed, &b.speed), ("direction", &a.direction, &b.direction)] {
            let d = compare_distributions(x, y)?;
            println!("{name} vs reference: overlap {} jsd {}", d.overlap, d.jsd);
        }
    }
    Ok(())
}

fn validate(dir: &Path) -> Result<(), Failure> {
    let report = validate_dataset(dir).map_err(data)?;
    for v in &report.violations {
        println!("{}: {}", v.file.display(), v.message);
    }
    if report.scenes_checked == 0 {
        return Err(data(anyhow!("{} contains no scene files", dir.display())));
    }
    if report.is_ok() {
        println!("ok: {} scenes ({} augmented)", report.scenes_checked, report.augmented);
        Ok(())
    } else {
        Err(data(anyhow!("{} violations in {} scenes", report.violations.len(), report.scenes_checked)))
    }
}

fn plot(dir: &Path, out: &Path, svg: bool, cfg: &AnalysisConfig) -> anyhow::Result<()> {
    let trajs: Vec<_> = read_scenes(dir)?.into_iter().map(|s| s.positions).collect();
    let s = dataset_stats(&trajs, cfg)?;
    let files = emit_plot_data(out, &[("speed", &s.speed), ("direction", &s.direction)], &s.endpoints, svg)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
