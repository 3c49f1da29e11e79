//! Command-line harness: world generation, pipeline runs, scaling
//! benchmarks, and trajectory evaluation.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use relock::harness::{
    bench_scaling, compute_ate, from_tum, generate_world, render_svg, run_pipeline_repeated,
    to_csv, to_tum, BenchConfig, PipelineConfig, SyntheticWorld, SyntheticWorldConfig,
    TrajectoryPlot, TrajectoryShape,
};
use relock::runtime::Runtime;

#[derive(Parser)]
#[command(
    name = "relock",
    about = "Loop-closing engine for visual SLAM maps: synthetic worlds, pipeline runs, benchmarks, trajectory evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world with drift and ground-truth loop labels.
    Generate(GenerateArgs),
    /// Run the loop-closing pipeline over a world file.
    Run(RunArgs),
    /// Measure scaling of the parallel stages across worker counts.
    Bench(BenchArgs),
    /// Compute ATE RMSE between two TUM trajectory files.
    Ate(AteArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// circle | figure-eight | corridor-return
    #[arg(long, default_value = "circle")]
    shape: String,
    #[arg(long, default_value_t = 120)]
    poses: usize,
    #[arg(long, default_value_t = 2500)]
    landmarks: usize,
    /// Translational odometry noise per step (meters).
    #[arg(long, default_value_t = 0.002)]
    sigma_t: f64,
    /// Rotational odometry noise per step (degrees).
    #[arg(long, default_value_t = 0.03)]
    sigma_r: f64,
    /// Per-observation descriptor bit-flip probability.
    #[arg(long, default_value_t = 0.02)]
    descriptor_noise: f64,
    /// Landmark visibility radius (meters).
    #[arg(long, default_value_t = 12.0)]
    visibility: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    world: PathBuf,
    /// Worker count (default: RELOCK_WORKERS or host cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Pipeline repetitions for timing statistics.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Write the run report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write corrected trajectory (TUM) here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Write an SVG overlay of the trajectories here.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Disable loop detection (baseline run).
    #[arg(long, default_value_t = false)]
    no_detection: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated workload sizes, monotonically increasing.
    #[arg(long, value_delimiter = ',', default_value = "5000,20000,50000")]
    sizes: Vec<usize>,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 9)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AteArgs {
    /// Estimated trajectory (TUM format).
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth trajectory (TUM format).
    #[arg(long)]
    gt: PathBuf,
    /// Skip the rigid SE3 alignment before computing the RMSE.
    #[arg(long, default_value_t = false)]
    no_align: bool,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(args) => generate(args),
        Command::Run(args) => run(args),
        Command::Bench(args) => bench(args),
        Command::Ate(args) => ate(args),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let shape: TrajectoryShape = args
        .shape
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let config = SyntheticWorldConfig {
        shape,
        poses: args.poses,
        landmarks: args.landmarks,
        visibility_radius: args.visibility,
        sigma_t: args.sigma_t,
        sigma_r: args.sigma_r.to_radians(),
        descriptor_noise: args.descriptor_noise,
        seed: args.seed,
    };
    let world = generate_world(&config)?;
    let json = serde_json::to_string_pretty(&world)?;
    std::fs::write(&args.out, json)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "world: {} poses, {} map points, {} loop labels -> {}",
        world.config.poses,
        world.map_points.len(),
        world.loop_labels.len(),
        args.out.display()
    );
    Ok(())
}

fn load_world(path: &PathBuf) -> Result<SyntheticWorld> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(args: RunArgs) -> Result<()> {
    if args.repeat < 1 {
        bail!("--repeat must be at least 1");
    }
    let world = load_world(&args.world)?;
    let runtime = match args.workers {
        Some(w) => Runtime::new(w),
        None => Runtime::from_env(),
    };
    let config = PipelineConfig {
        detection_enabled: !args.no_detection,
        ..PipelineConfig::default()
    };
    let (outcome, timings) = run_pipeline_repeated(&world, &config, &runtime, args.repeat)?;

    println!(
        "ATE rmse: before {:.4} m -> after {:.4} m ({} loop closures, {} workers)",
        outcome.ate_before.rmse,
        outcome.ate_after.rmse,
        outcome.report.detections.len(),
        runtime.workers()
    );
    for d in &outcome.report.detections {
        println!(
            "  loop: {} -> {} ({} verified matches, fusion: {} replaced / {} new)",
            d.detection.current_kf,
            d.detection.matched_kf,
            d.detection.verified_matches,
            d.fusion.replaced,
            d.fusion.new_associations
        );
    }
    println!(
        "stages (mean ms over {} run(s)): detection {:.1}, fusion {:.1}, graph opt {:.1}, correction {:.1}, total {:.1}",
        timings.runs,
        timings.region_detection.mean_ms,
        timings.loop_fusion.mean_ms,
        timings.graph_optimization.mean_ms,
        timings.loop_correction.mean_ms,
        timings.total_loop_closing.mean_ms
    );
    if !outcome.report.failures.is_empty() {
        println!("failures: {:?}", outcome.report.failures);
    }

    if let Some(path) = args.report {
        std::fs::write(&path, serde_json::to_string_pretty(&outcome.report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = args.trajectory {
        std::fs::write(&path, to_tum(&outcome.corrected))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = args.plot {
        let svg = render_svg(&TrajectoryPlot {
            ground_truth: &world.ground_truth,
            drifted: &world.drifted,
            corrected: &outcome.corrected,
        });
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let config = BenchConfig {
        sizes: args.sizes,
        workers: args.workers,
        repetitions: args.repetitions,
        seed: args.seed,
    };
    let rows = bench_scaling(&config);
    std::fs::write(&args.out, to_csv(&rows))
        .with_context(|| format!("writing {}", args.out.display()))?;
    for row in &rows {
        println!(
            "{:18} size {:>7} workers {:>2}: {:>9.2} ms  speedup {:.2}x",
            row.stage, row.size, row.workers, row.millis, row.speedup
        );
    }
    Ok(())
}

fn ate(args: AteArgs) -> Result<()> {
    let est = from_tum(&std::fs::read_to_string(&args.est)?)?;
    let gt = from_tum(&std::fs::read_to_string(&args.gt)?)?;
    let result = compute_ate(&est, &gt, !args.no_align)?;
    println!("ate_rmse_m: {:.6} (aligned: {})", result.rmse, result.aligned);
    Ok(())
}
