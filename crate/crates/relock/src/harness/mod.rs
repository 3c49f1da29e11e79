//! Synthetic-world generation, trajectory evaluation, the end-to-end
//! pipeline, and the scaling benchmark.

pub mod ate;
pub mod bench;
pub mod pipeline;
pub mod plot;
pub mod trajectory;
pub mod world;

pub use ate::{compute_ate, AteError, AteResult};
pub use bench::{bench_scaling, to_csv, BenchConfig, BenchRow};
pub use pipeline::{
    run_pipeline, run_pipeline_repeated, PipelineConfig, PipelineError, PipelineOutcome,
    RunReport, StageStat, StageTimingReport,
};
pub use plot::{render_svg, TrajectoryPlot};
pub use trajectory::{from_tum, to_tum, TrajectoryError};
pub use world::{generate_world, SyntheticWorld, SyntheticWorldConfig, TrajectoryShape, WorldError};
