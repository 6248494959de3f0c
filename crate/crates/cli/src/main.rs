//! Command-line front end: reference-motion generation, the kinematic
//! baseline, reward scoring, closed-loop harness runs, gait diagrams, and
//! a self-check suite.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use strider_core::config::{load_config, ToolConfig};
use strider_core::export;
use strider_core::gait::gait_diagram;
use strider_core::harness::{
    perlin_heightfield, receding_horizon_run, sample_randomization, tracking_metrics,
    DisturbanceEvent,
};
use strider_core::ocp::VelocityCommand;
use strider_core::synthesis::{
    adjust_for_terrain, generate_reference, kinematic_baseline, GeneratorState, ReferenceFrame,
};

mod check;
mod reward;

#[derive(Parser)]
#[command(
    name = "strider",
    about = "Reduced-model reference-motion synthesis and validation for quadruped gaits",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML); built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for randomized operations; deterministic per seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (precedence: this flag, then STRIDER_OUT_DIR,
    /// then the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct MotionArgs {
    /// Gait name from the config's gait library.
    #[arg(long)]
    gait: String,
    /// Forward velocity command, m/s.
    #[arg(long, default_value_t = 0.0)]
    vx: f64,
    /// Lateral velocity command, m/s.
    #[arg(long, default_value_t = 0.0)]
    vy: f64,
    /// Yaw-rate command, rad/s.
    #[arg(long, default_value_t = 0.0)]
    yaw_rate: f64,
    /// Horizon length in gait periods.
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    /// Output format for the frames file.
    #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
    format: ExportFormat,
}

#[derive(Args)]
struct TerrainArgs {
    /// Terrain-noise spatial frequency; enables terrain adjustment.
    #[arg(long)]
    terrain_frequency: Option<f64>,
    /// Terrain-noise magnitude, meters.
    #[arg(long)]
    terrain_magnitude: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate dynamically consistent reference motions.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        motion: MotionArgs,
        #[command(flatten)]
        terrain: TerrainArgs,
    },
    /// Generate kinematic baseline reference motions (no dynamics).
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        motion: MotionArgs,
        #[command(flatten)]
        terrain: TerrainArgs,
    },
    /// Score a logged trajectory against a reference trajectory.
    Reward {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV of the executed motion (frames schema).
        #[arg(long)]
        actual: PathBuf,
        /// CSV of the reference motion (frames schema).
        #[arg(long)]
        reference: PathBuf,
    },
    /// Run the receding-horizon controller on the reduced-model plant.
    MpcRun {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        motion: MotionArgs,
        /// Run duration, seconds.
        #[arg(long, default_value_t = 4.0)]
        duration: f64,
        /// Disturbance "time,dvx,dvy,dvz" in seconds and m/s; repeatable.
        #[arg(long = "impulse", value_name = "T,DVX,DVY,DVZ")]
        impulses: Vec<String>,
        /// Additionally sample this many randomized impulses (timed
        /// uniformly over the middle half of the run) from the
        /// randomization config using --seed.
        #[arg(long, default_value_t = 0)]
        random_impulses: usize,
        /// Apply the configured actuator latency to the control loop.
        #[arg(long, default_value_t = false)]
        latency: bool,
    },
    /// Export one period of a gait as a Hildebrand-style diagram CSV.
    GaitDiagram {
        #[command(flatten)]
        common: CommonArgs,
        /// Gait name from the config's gait library.
        #[arg(long)]
        gait: String,
    },
    /// Run the built-in invariant suite against the active config.
    Check {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load(common: &CommonArgs) -> Result<ToolConfig> {
    match &common.config {
        Some(path) => {
            load_config(path).with_context(|| format!("loading config {}", path.display()))
        }
        None => Ok(ToolConfig::default()),
    }
}

fn output_dir(common: &CommonArgs, config: &ToolConfig) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("STRIDER_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn command_of(motion: &MotionArgs) -> VelocityCommand<f64> {
    VelocityCommand::new(motion.vx, motion.vy, motion.yaw_rate)
}

fn maybe_adjust_terrain(
    frames: Vec<ReferenceFrame<f64>>,
    terrain: &TerrainArgs,
    config: &ToolConfig,
    seed: u64,
) -> Result<Vec<ReferenceFrame<f64>>> {
    match (terrain.terrain_frequency, terrain.terrain_magnitude) {
        (None, None) => Ok(frames),
        (Some(frequency), Some(magnitude)) => {
            let field = perlin_heightfield(frequency, magnitude, seed, 20.0, 0.05)?;
            Ok(adjust_for_terrain(
                &frames,
                &field,
                &config.synthesis_config(),
            )?)
        }
        _ => bail!("--terrain-frequency and --terrain-magnitude must be given together"),
    }
}

fn write_frames(
    frames: &[ReferenceFrame<f64>],
    format: ExportFormat,
    dir: &Path,
    stem: &str,
) -> Result<PathBuf> {
    let (name, contents) = match format {
        ExportFormat::Csv => (format!("{stem}.csv"), export::frames_to_csv_string(frames)),
        ExportFormat::Json => (
            format!("{stem}.json"),
            export::frames_to_json_string(frames)?,
        ),
    };
    let path = dir.join(name);
    write_file(&path, &contents)?;
    Ok(path)
}

fn parse_impulse(spec: &str) -> Result<DisturbanceEvent<f64>> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 4 {
        bail!("--impulse expects 'time,dvx,dvy,dvz', got '{spec}'");
    }
    let mut values = [0.0; 4];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .with_context(|| format!("parsing impulse component '{part}'"))?;
    }
    Ok(DisturbanceEvent {
        time: values[0],
        linear_impulse: Vector3::new(values[1], values[2], values[3]),
        angular_impulse: Vector3::zeros(),
    })
}

fn run_generate(
    common: &CommonArgs,
    motion: &MotionArgs,
    terrain: &TerrainArgs,
    baseline: bool,
) -> Result<()> {
    let config = load(common)?;
    let dir = output_dir(common, &config)?;
    let gait = config.gait(&motion.gait)?;
    let synthesis = config.synthesis_config();
    let horizon = motion.horizon * gait.period;
    let command = command_of(motion);
    // References describe steady locomotion at the command, so the motion
    // starts already moving at it rather than accelerating from rest.
    let mut state = GeneratorState::standing(config.targets.base_height, &config.hip_offsets());
    state.velocity = command.world_velocity(state.yaw);

    if baseline {
        let frames = kinematic_baseline(&state, &command, &gait, horizon, &synthesis)?;
        let frames = maybe_adjust_terrain(frames, terrain, &config, common.seed)?;
        write_frames(&frames, motion.format, &dir, "baseline_frames")?;
    } else {
        let generated = generate_reference(&state, &command, &gait, horizon, &synthesis)?;
        let frames = maybe_adjust_terrain(generated.frames, terrain, &config, common.seed)?;
        write_frames(&frames, motion.format, &dir, "frames")?;
        let report_path = dir.join("solver_report.json");
        write_file(&report_path, &export::to_json_string(&generated.report)?)?;
        eprintln!(
            "solve: {} iterations, cost {:.3e}, converged: {} ({:.1} ms)",
            generated.report.iterations,
            generated.report.final_cost,
            generated.report.converged,
            generated.report.wall_time.as_secs_f64() * 1e3
        );
        if generated.degraded {
            eprintln!("warning: solver did not converge; frames come from the best iterate");
        }
    }
    Ok(())
}

fn run_mpc(
    common: &CommonArgs,
    motion: &MotionArgs,
    duration: f64,
    impulse_specs: &[String],
    random_impulses: usize,
    latency: bool,
) -> Result<()> {
    let config = load(common)?;
    let dir = output_dir(common, &config)?;
    let gait = config.gait(&motion.gait)?;
    let command = command_of(motion);

    let mut disturbances = Vec::new();
    for spec in impulse_specs {
        disturbances.push(parse_impulse(spec)?);
    }
    if random_impulses > 0 {
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(common.seed);
        let randomization = config.randomization_config();
        for i in 0..random_impulses {
            let draw = sample_randomization(&randomization, &mut rng);
            let slot = (i as f64 + 0.5) / random_impulses as f64;
            disturbances.push(DisturbanceEvent {
                time: duration * (0.25 + 0.5 * slot),
                linear_impulse: draw.linear_impulse,
                angular_impulse: draw.angular_impulse,
            });
        }
    }
    disturbances.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());

    let harness = config.harness_config(latency);
    let log = receding_horizon_run(&command, &gait, duration, &disturbances, &harness)?;
    let metrics = tracking_metrics(&log, gait.period, 0.05)?;

    write_file(
        &dir.join("run_log.csv"),
        &export::run_log_to_csv_string(&log),
    )?;
    write_file(
        &dir.join("metrics.json"),
        &export::to_json_string(&metrics)?,
    )?;
    eprintln!(
        "run: {} steps, mean velocity error {:.4} m/s, height RMSE {:.4} m",
        log.steps.len(),
        metrics.mean_velocity_error,
        metrics.height_rmse
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate {
            common,
            motion,
            terrain,
        } => run_generate(common, motion, terrain, false),
        Command::Baseline {
            common,
            motion,
            terrain,
        } => run_generate(common, motion, terrain, true),
        Command::Reward {
            common,
            actual,
            reference,
        } => reward::run(common, actual, reference),
        Command::MpcRun {
            common,
            motion,
            duration,
            impulses,
            random_impulses,
            latency,
        } => run_mpc(
            common,
            motion,
            *duration,
            impulses,
            *random_impulses,
            *latency,
        ),
        Command::GaitDiagram { common, gait } => (|| {
            let config = load(common)?;
            let dir = output_dir(common, &config)?;
            let pattern = config.gait(gait)?;
            let rows = gait_diagram(&pattern);
            write_file(
                &dir.join("gait_diagram.csv"),
                &export::diagram_to_csv_string(&rows),
            )
        })(),
        Command::Check { common } => check::run(common).and_then(|failures| {
            if failures > 0 {
                bail!("{failures} check(s) failed");
            }
            Ok(())
        }),
    };
    if let Err(error) = outcome {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}
