//! End-to-end pipeline: incremental insertion, detection on every
//! keyframe, and on acceptance the full correction chain (propagate,
//! fuse, optimize, recover) with per-stage wall-clock timing.
//!
//! The pipeline is the single orchestrator of read/mutate phase
//! transitions; all parallelism lives below it in the runtime.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::correct::{apply_fusion, plan_fusion, propagate_correction, FusionStats};
use crate::correct::fusion::FusionTarget;
use crate::detect::{detect_loop, LoopDetectConfig, LoopDetection};
use crate::geometry::Se3;
use crate::map::{KeyFrameId, Map, MapConfig, MapPointId};
use crate::matching::{PointView, ProjectionSearchParams, WordProjection};
use crate::posegraph::{build_essential_problem, optimize, recover, LmConfig};
use crate::runtime::{Runtime, RuntimeCounterSnapshot, StagingCounters};

use super::ate::{compute_ate, AteError, AteResult};
use super::world::SyntheticWorld;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub map: MapConfig,
    pub detect: LoopDetectConfig,
    /// Guided search used during fusion planning.
    pub fusion_params: ProjectionSearchParams,
    pub lm: LmConfig,
    /// Seed of the descriptor-to-word projection.
    pub word_seed: u64,
    /// Keyframes to insert before detection starts.
    pub detection_warmup: usize,
    /// Stop closing loops after this many corrections.
    pub max_corrections: usize,
    /// Keyframes to skip after an accepted correction before detecting
    /// again (prevents noisy re-closures of the same region).
    pub correction_cooldown: usize,
    /// Skip corrections whose pose change (Sim3 tangent norm) is below
    /// this; a consistent map does not need re-closing.
    pub min_correction: f64,
    /// Corrections at or above this pose change run the full
    /// essential-graph optimization; smaller ones re-align locally
    /// (propagation + fusion only). A small loop edge mostly injects its
    /// own estimation noise: the optimizer can rotate the whole
    /// already-consistent map around the single fixed vertex at zero
    /// cost, so global redistribution of a small correction moves every
    /// pose by the edge's error.
    pub full_correction: f64,
    pub detection_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::default(),
            detect: LoopDetectConfig::default(),
            fusion_params: ProjectionSearchParams::fusion(),
            lm: LmConfig::default(),
            word_seed: 7,
            detection_warmup: 10,
            max_corrections: 8,
            correction_cooldown: 8,
            min_correction: 0.03,
            full_correction: 0.15,
            detection_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageStat {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub samples_ms: Vec<f64>,
}

impl StageStat {
    pub fn from_samples(samples_ms: Vec<f64>) -> Self {
        if samples_ms.is_empty() {
            return Self::default();
        }
        let n = samples_ms.len() as f64;
        let mean = samples_ms.iter().sum::<f64>() / n;
        let var = samples_ms.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean_ms: mean,
            std_ms: var.sqrt(),
            samples_ms,
        }
    }
}

/// Per-stage wall-clock statistics; one sample per pipeline run. The
/// stages nest: total loop closing >= loop correction >= fusion and
/// graph optimization.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimingReport {
    pub region_detection: StageStat,
    pub loop_fusion: StageStat,
    pub graph_optimization: StageStat,
    pub loop_correction: StageStat,
    pub total_loop_closing: StageStat,
    pub worker_count: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub detection: LoopDetection,
    pub fusion: FusionStats,
    /// False for re-closures of an already-closed region, which propagate
    /// and fuse but skip the essential-graph optimization.
    pub optimized: bool,
    pub optimize_initial_chi2: f64,
    pub optimize_final_chi2: f64,
    pub optimize_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunCounters {
    pub runtime: RuntimeCounterSnapshot,
    pub staging: StagingCounters,
    pub snapshot_repacks: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub timings: StageTimingReport,
    pub ate_before_rmse: f64,
    pub ate_after_rmse: f64,
    pub detections: Vec<DetectionRecord>,
    /// Accepted detections whose correction was below `min_correction`.
    pub skipped_corrections: usize,
    /// Per-keyframe stage failures (index, stage, message); the run
    /// continues past them.
    pub failures: Vec<(usize, String, String)>,
    pub counters: RunCounters,
    pub seed: u64,
    pub poses: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Final keyframe poses (world-to-camera), ascending keyframe id.
    pub corrected: Vec<Se3>,
    pub ate_before: AteResult,
    pub ate_after: AteResult,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("map construction failed at keyframe {index}: {message}")]
    MapConstruction { index: usize, message: String },
    #[error(transparent)]
    Ate(#[from] AteError),
}

/// Wall-clock samples for one pipeline run (sums per stage, ms).
#[derive(Debug, Clone, Copy, Default)]
struct StageSums {
    region_detection: f64,
    loop_fusion: f64,
    graph_optimization: f64,
    loop_correction: f64,
    total_loop_closing: f64,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Insert the world's keyframes in order, running detection after each
/// insertion and the full correction chain on every accepted loop.
pub fn run_pipeline(
    world: &SyntheticWorld,
    config: &PipelineConfig,
    runtime: &Runtime,
) -> Result<PipelineOutcome, PipelineError> {
    let projection = WordProjection::from_seed(config.word_seed);
    let mut map = Map::new(config.map);
    let mut sums = StageSums::default();
    let mut detections: Vec<DetectionRecord> = Vec::new();
    let mut failures: Vec<(usize, String, String)> = Vec::new();
    let mut cooldown_until = 0usize;
    let mut skipped_corrections = 0usize;

    for index in 0..world.keyframes.len() {
        // odometry continues relative to the live map: the drifted step is
        // chained onto the previous keyframe's current (possibly
        // corrected) pose, the way tracking would localize against the
        // corrected map
        let live_pose = if index == 0 {
            world.drifted[0]
        } else {
            let step = world.drifted[index].compose(&world.drifted[index - 1].inverse());
            let prev = map
                .keyframe(KeyFrameId(index as u64 - 1))
                .expect("inserted last iteration")
                .pose;
            step.compose(&prev)
        };
        let live_inverse = live_pose.inverse();
        for mut point in world.points_anchored_at(index) {
            // world positions are dead-reckoned; re-express via the exact
            // camera-frame coordinates under the live anchor pose
            let p_cam = world.drifted[index].apply(point.position);
            point.position = live_inverse.apply(p_cam);
            point.normal = (point.position - live_inverse.translation).normalized();
            map.add_map_point(point)
                .map_err(|e| PipelineError::MapConstruction {
                    index,
                    message: e.to_string(),
                })?;
        }
        let mut kf = world.keyframe_entity(index, &projection);
        kf.pose = live_pose;
        // odometry references stale instance ids once fusion has merged
        // points; resolve through forwarding and drop duplicates
        let mut seen: std::collections::BTreeSet<MapPointId> = Default::default();
        for assoc in kf.associations.iter_mut() {
            if let Some(id) = *assoc {
                let resolved = map.resolve(id);
                if map.point(resolved).is_none() || !seen.insert(resolved) {
                    *assoc = None;
                } else {
                    *assoc = Some(resolved);
                }
            }
        }
        let kf_id = kf.id;
        map.insert_keyframe(kf)
            .map_err(|e| PipelineError::MapConstruction {
                index,
                message: e.to_string(),
            })?;

        if !config.detection_enabled
            || index < config.detection_warmup
            || index < cooldown_until
            || detections.len() >= config.max_corrections
        {
            continue;
        }

        let t_total = Instant::now();
        let t_detect = Instant::now();
        let detection = match detect_loop(&mut map, kf_id, &config.detect, runtime) {
            Ok(d) => d,
            Err(e) => {
                failures.push((index, "region-detection".into(), e.to_string()));
                None
            }
        };
        let detect_ms = ms(t_detect);
        sums.region_detection += detect_ms;

        let Some(detection) = detection else {
            sums.total_loop_closing += ms(t_total);
            continue;
        };

        // a near-identity correction means the map is already consistent
        // with the detected region; closing again only injects noise
        let s_cw_old = crate::geometry::Sim3::from_se3(
            &map.keyframe(detection.current_kf).expect("current exists").pose,
        );
        let s_mw = crate::geometry::Sim3::from_se3(
            &map.keyframe(detection.matched_kf).expect("matched exists").pose,
        );
        let s_cw_corr = detection.s_cm.compose(&s_mw);
        let delta = s_cw_corr
            .compose(&s_cw_old.inverse())
            .log()
            .map(|t| t.norm())
            .unwrap_or(f64::INFINITY);
        if delta < config.min_correction {
            skipped_corrections += 1;
            cooldown_until = index + config.correction_cooldown;
            sums.total_loop_closing += ms(t_total);
            continue;
        }

        let t_correction = Instant::now();
        let full = delta >= config.full_correction;
        match run_correction(&mut map, &detection, config, runtime, &mut sums, full) {
            Ok(record) => {
                detections.push(record);
                cooldown_until = index + config.correction_cooldown;
            }
            Err((stage, message)) => failures.push((index, stage, message)),
        }
        sums.loop_correction += ms(t_correction);
        sums.total_loop_closing += ms(t_total);
    }

    let corrected: Vec<Se3> = map
        .keyframe_ids()
        .collect::<Vec<_>>()
        .into_iter()
        .map(|id| map.keyframe(id).expect("own id").pose)
        .collect();
    let ate_before = compute_ate(&world.drifted, &world.ground_truth, true)?;
    let ate_after = compute_ate(&corrected, &world.ground_truth, true)?;

    let report = RunReport {
        timings: StageTimingReport {
            region_detection: StageStat::from_samples(vec![sums.region_detection]),
            loop_fusion: StageStat::from_samples(vec![sums.loop_fusion]),
            graph_optimization: StageStat::from_samples(vec![sums.graph_optimization]),
            loop_correction: StageStat::from_samples(vec![sums.loop_correction]),
            total_loop_closing: StageStat::from_samples(vec![sums.total_loop_closing]),
            worker_count: runtime.workers(),
            runs: 1,
        },
        ate_before_rmse: ate_before.rmse,
        ate_after_rmse: ate_after.rmse,
        detections,
        skipped_corrections,
        failures,
        counters: RunCounters {
            runtime: runtime.counters(),
            staging: map.staging_counters(),
            snapshot_repacks: map.snapshot_repacks(),
        },
        seed: world.config.seed,
        poses: world.config.poses,
    };
    Ok(PipelineOutcome {
        corrected,
        ate_before,
        ate_after,
        report,
    })
}

/// The correction chain for one accepted detection. Returns stage name
/// and message on failure so the pipeline can record and continue.
fn run_correction(
    map: &mut Map,
    detection: &LoopDetection,
    config: &PipelineConfig,
    runtime: &Runtime,
    sums: &mut StageSums,
    full: bool,
) -> Result<DetectionRecord, (String, String)> {
    // exclusive mutation phase: write corrected window poses and points
    let corrected = propagate_correction(map, detection, config.detect.min_index_gap)
        .map_err(|e| ("propagate-correction".to_string(), e.to_string()))?;

    // frozen read phase: plan fusion of the matched-side window points
    let t_fusion = Instant::now();
    let mut loop_window: Vec<KeyFrameId> = map.covisibility().neighbors(detection.matched_kf);
    loop_window.push(detection.matched_kf);
    loop_window.sort_unstable();
    loop_window.dedup();
    loop_window.retain(|id| !corrected.poses.contains_key(id));
    let mut loop_point_ids: std::collections::BTreeSet<MapPointId> = Default::default();
    for kf_id in &loop_window {
        if let Some(kf) = map.keyframe(*kf_id) {
            loop_point_ids.extend(kf.associated_points());
        }
    }
    let loop_points: Vec<PointView> = loop_point_ids
        .iter()
        .filter_map(|id| map.point(*id))
        .filter(|p| !p.is_replaced())
        .map(PointView::from_point)
        .collect();

    let mut targets = Vec::new();
    let mut observation_counts: BTreeMap<MapPointId, usize> = BTreeMap::new();
    for p in &loop_points {
        let count = map.point(p.id).map(|q| q.observation_count()).unwrap_or(0);
        observation_counts.insert(p.id, count);
    }
    for (kf_id, pose) in &corrected.poses {
        let snapshot = map
            .snapshot(*kf_id)
            .map_err(|e| ("loop-fusion".to_string(), e.to_string()))?;
        for assoc in snapshot.associations.iter().flatten() {
            let count = map
                .point(*assoc)
                .map(|q| q.observation_count())
                .unwrap_or(0);
            observation_counts.insert(*assoc, count);
        }
        targets.push(FusionTarget {
            snapshot,
            corrected_pose: pose.s_corrected,
        });
    }
    let plan = plan_fusion(
        runtime,
        &targets,
        &loop_points,
        &observation_counts,
        &config.fusion_params,
    );
    // exclusive mutation phase: apply and rewire connections
    let fusion = apply_fusion(map, &plan).map_err(|e| ("loop-fusion".to_string(), e.to_string()))?;
    sums.loop_fusion += ms(t_fusion);

    // graph optimization over the essential graph
    let mut record = DetectionRecord {
        detection: detection.clone(),
        fusion,
        optimized: full,
        optimize_initial_chi2: 0.0,
        optimize_final_chi2: 0.0,
        optimize_iterations: 0,
    };
    if full {
        let t_opt = Instant::now();
        let problem = build_essential_problem(map, &corrected, detection)
            .map_err(|e| ("graph-optimization".to_string(), e.to_string()))?;
        let outcome = optimize(&problem, runtime, &config.lm)
            .map_err(|e| ("graph-optimization".to_string(), e.to_string()))?;
        recover(map, &problem.initial_estimates(), &outcome.vertices)
            .map_err(|e| ("graph-optimization".to_string(), e.to_string()))?;
        sums.graph_optimization += ms(t_opt);
        record.optimize_initial_chi2 = outcome.initial_chi2;
        record.optimize_final_chi2 = outcome.final_chi2;
        record.optimize_iterations = outcome.trace.len();
    }
    map.add_loop_edge(detection.current_kf, detection.matched_kf);

    Ok(record)
}

/// Run the pipeline `repeat` times (fresh map each time) and aggregate the
/// per-run stage sums into mean and standard deviation.
pub fn run_pipeline_repeated(
    world: &SyntheticWorld,
    config: &PipelineConfig,
    runtime: &Runtime,
    repeat: usize,
) -> Result<(PipelineOutcome, StageTimingReport), PipelineError> {
    assert!(repeat >= 1);
    let mut last = None;
    let mut samples: [Vec<f64>; 5] = Default::default();
    for _ in 0..repeat {
        let outcome = run_pipeline(world, config, runtime)?;
        let t = &outcome.report.timings;
        samples[0].extend(t.region_detection.samples_ms.iter());
        samples[1].extend(t.loop_fusion.samples_ms.iter());
        samples[2].extend(t.graph_optimization.samples_ms.iter());
        samples[3].extend(t.loop_correction.samples_ms.iter());
        samples[4].extend(t.total_loop_closing.samples_ms.iter());
        last = Some(outcome);
    }
    let [rd, lf, go, lc, tl] = samples;
    let timings = StageTimingReport {
        region_detection: StageStat::from_samples(rd),
        loop_fusion: StageStat::from_samples(lf),
        graph_optimization: StageStat::from_samples(go),
        loop_correction: StageStat::from_samples(lc),
        total_loop_closing: StageStat::from_samples(tl),
        worker_count: runtime.workers(),
        runs: repeat,
    };
    let mut outcome = last.expect("repeat >= 1");
    outcome.report.timings = timings.clone();
    Ok((outcome, timings))
}
