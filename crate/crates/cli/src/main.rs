//! `binpick`: scene generation, single trials, benchmark suites and renders.
//!
//! Exit codes: 0 the command ran (a failed trial still counts), 2 bad flags
//! or config, 3 scene generation failed, 4 file I/O or unreadable input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use binpick_core::config::CONFIG_ENV;
use binpick_core::density::{dot_to_density, make_dot_map};
use binpick_core::pipeline::{
    results_csv, run_one_stage, run_pipeline_bench, run_singulation_bench, run_two_stage, summarize, BenchRow,
};
use binpick_core::world::{generate_scene, labels_to_pgm, rasterize, ShapeKind};
use binpick_core::{Location, Mode, RunConfig, SceneFile, SingulationPolicy};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "binpick", version, about = "Two-stage bin picking simulator")]
struct Cli {
    /// TOML run configuration; missing keys take defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded bin scene as JSON.
    GenScene {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        objects: u64,
        /// disk, polygon or mixed; defaults to the config's scenario shape.
        #[arg(long)]
        shape: Option<ShapeKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one trial on a scene and write its results CSV row.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        mode: Mode,
        /// Trial seed; defaults to the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark suite; writes results.csv and summary.json.
    Bench {
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Run trials on one thread (output is identical either way).
        #[arg(long)]
        sequential: bool,
    },
    /// Render masks or the dot and density maps of a scene as PGM.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        what: RenderWhat,
        #[arg(long, value_enum, default_value_t = Region::Bin)]
        region: Region,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    DumpConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Singulation,
    Pipeline,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderWhat {
    Density,
    Masks,
}

#[derive(Clone, Copy, ValueEnum)]
enum Region {
    Bin,
    Tray,
}

enum CliError {
    Config(String),
    Generation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Generation(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Generation(m) | CliError::Io(m) => m,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            binpick_core::ConfigError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }),
    }
}

fn load_scene(path: &Path) -> Result<SceneFile, CliError> {
    SceneFile::load(path).map_err(|e| io_err(path, e))
}

fn gen_scene(cfg: &RunConfig, objects: u64, shape: Option<ShapeKind>, seed: u64, out: &Path) -> Result<(), CliError> {
    let mut scenario = cfg.scenario;
    if let Some(s) = shape {
        scenario.shape = s;
    }
    let world = generate_scene(objects as usize, &scenario, cfg.workspace, seed)
        .map_err(|e| CliError::Generation(e.to_string()))?;
    SceneFile::from_world(&world, seed).save(out).map_err(|e| io_err(out, e))
}

fn run(cfg: &RunConfig, scene: &Path, mode: Mode, seed: Option<u64>, out: Option<&Path>) -> Result<(), CliError> {
    let file = load_scene(scene)?;
    let world = file.to_world().map_err(|e| io_err(scene, e))?;
    let seed = seed.unwrap_or(file.seed);
    let tc = cfg.trial_config(mode, seed);
    let env = cfg.environment();
    let record = match mode {
        Mode::TwoStage => run_two_stage(&world, &tc, &env),
        Mode::OneStage => run_one_stage(&world, &tc, &env),
    };
    let row = BenchRow {
        mode: mode.name().into(),
        policy: match mode {
            Mode::TwoStage => cfg.trial.policy.name().into(),
            Mode::OneStage => "none".into(),
        },
        cluster_size: 0,
        seed,
        record,
    };
    let csv = results_csv(&[row]);
    match out {
        Some(p) => write(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn bench(cfg: &RunConfig, suite: Suite, trials: u64, seed: u64, out: &Path, sequential: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let trials = trials as usize;
    let (name, rows) = match suite {
        Suite::Singulation => (
            "singulation",
            run_singulation_bench(cfg, &SingulationPolicy::ALL, trials, seed, !sequential),
        ),
        Suite::Pipeline => ("pipeline", run_pipeline_bench(cfg, trials, seed, !sequential)),
    };
    write(&out.join("results.csv"), &results_csv(&rows))?;
    write(&out.join("summary.json"), &summarize(name, seed, trials, &rows).to_json())
}

fn render(cfg: &RunConfig, scene: &Path, what: RenderWhat, region: Region, out: &Path) -> Result<(), CliError> {
    let world = load_scene(scene)?.to_world().map_err(|e| io_err(scene, e))?;
    let (rect, mm_per_px) = match region {
        Region::Bin => (world.workspace.region(Location::InBin), cfg.raster.bin_mm_per_px),
        Region::Tray => (world.workspace.region(Location::OnTray), cfg.raster.tray_mm_per_px),
    };
    let rect = rect.expect("bin and tray are real regions");
    let frame = rasterize(&world, rect, mm_per_px).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    match what {
        RenderWhat::Masks => {
            write(&out.join("instances.pgm"), &labels_to_pgm(&frame.instance_mask))?;
            write(&out.join("categories.pgm"), &labels_to_pgm(&frame.semantic_mask))
        }
        RenderWhat::Density => {
            let dots = make_dot_map(&frame);
            let density =
                dot_to_density(&dots, cfg.density.kernel_sigma).map_err(|e| CliError::Config(e.to_string()))?;
            write(&out.join("dots.pgm"), &dots.to_pgm())?;
            write(&out.join("density.pgm"), &density.to_pgm())?;
            write(&out.join("density.csv"), &density.to_csv())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenScene {
            objects,
            shape,
            seed,
            out,
        } => gen_scene(&cfg, objects, shape, seed, &out),
        Command::Run { scene, mode, seed, out } => run(&cfg, &scene, mode, seed, out.as_deref()),
        Command::Bench {
            suite,
            trials,
            seed,
            out,
            sequential,
        } => bench(&cfg, suite, trials, seed, &out, sequential),
        Command::Render {
            scene,
            what,
            region,
            out,
        } => render(&cfg, &scene, what, region, &out),
        Command::DumpConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("binpick: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
