//! Scaling benchmark for the data-parallel stages.
//!
//! Two workloads, matching where the parallel structure lives:
//!
//! * `fusion-planning`: projection of N loop points into a window of
//!   keyframes, parallel over the window.
//! * `posegraph-eval`: residual + Jacobian evaluation and deterministic
//!   accumulation over N edges.
//!
//! The speedup column is t(workers=1) / t(workers=w), computed per
//! (stage, size) cell; timings take the best of `repetitions` runs.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correct::fusion::FusionTarget;
use crate::correct::plan_fusion;
use crate::geometry::{Quat, Se3, Sim3, Sim3Tangent, Vec3};
use crate::map::{Descriptor, KeyFrame, KeyFrameId, KeyPoint, Map, MapPoint, MapPointId};
use crate::matching::{PointView, ProjectionSearchParams};
use crate::posegraph::{EdgeKind, EssentialProblem, PoseGraphEdge, PoseGraphVertex};
use crate::runtime::Runtime;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub workers: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![5_000, 20_000, 50_000],
            workers: vec![1, 2, 4, 8],
            repetitions: 3,
            seed: 9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub stage: String,
    pub size: usize,
    pub workers: usize,
    pub millis: f64,
    pub speedup: f64,
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("stage,size,workers,ms,speedup\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3}\n",
            r.stage, r.size, r.workers, r.millis, r.speedup
        ));
    }
    out
}

/// A fusion-planning workload: `window` keyframes of dense features and
/// `points` loop points spread over the same volume.
struct FusionWorkload {
    targets: Vec<FusionTarget>,
    loop_points: Vec<PointView>,
    observation_counts: BTreeMap<MapPointId, usize>,
    params: ProjectionSearchParams,
}

fn build_fusion_workload(points: usize, seed: u64) -> FusionWorkload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intrinsics = crate::geometry::CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480);
    let window = 8usize;
    let features_per_kf = 900usize;
    let mut map = Map::default();

    let mut targets = Vec::new();
    for k in 0..window {
        let pose = Se3::new(
            Quat::exp_so3(Vec3::new(0.0, 0.02 * k as f64, 0.0)),
            Vec3::new(0.1 * k as f64, 0.0, 0.0),
        );
        let keypoints: Vec<KeyPoint> = (0..features_per_kf)
            .map(|_| KeyPoint {
                u: rng.gen_range(0.0..640.0),
                v: rng.gen_range(0.0..480.0),
                octave: rng.gen_range(0..8),
                angle: 0.0,
            })
            .collect();
        let descriptors: Vec<Descriptor> = (0..features_per_kf).map(|_| Descriptor(rng.gen())).collect();
        let kf = KeyFrame {
            id: KeyFrameId(k as u64),
            pose,
            intrinsics,
            keypoints,
            descriptors,
            associations: vec![None; features_per_kf],
            word_ids: Default::default(),
        };
        map.insert_keyframe(kf).expect("bench keyframe");
        targets.push(FusionTarget {
            snapshot: map.snapshot(KeyFrameId(k as u64)).expect("snapshot"),
            corrected_pose: Sim3::from_se3(&pose),
        });
    }

    let mut loop_points = Vec::with_capacity(points);
    let mut observation_counts = BTreeMap::new();
    for id in 0..points as u64 {
        let position = Vec3::new(
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(2.0..10.0),
        );
        let d = position.norm();
        let point = MapPoint::new(
            MapPointId(1000 + id),
            position,
            position.scaled(1.0 / d),
            (d * 0.3).max(0.05),
            d * 2.0,
            Descriptor(rng.gen()),
        );
        observation_counts.insert(point.id, rng.gen_range(1..10));
        loop_points.push(PointView::from_point(&point));
    }
    FusionWorkload {
        targets,
        loop_points,
        observation_counts,
        params: ProjectionSearchParams::fusion(),
    }
}

/// A pose-graph workload of roughly `edges` edges over a drifting chain
/// with extra shortcut constraints.
fn build_posegraph_workload(edges: usize, seed: u64) -> EssentialProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices_n = (edges / 4).max(8);
    let mut poses = vec![Sim3::identity()];
    for _ in 1..vertices_n {
        let step = Sim3::new(
            1.0,
            Quat::exp_so3(Vec3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            )),
            Vec3::new(rng.gen_range(0.2..0.6), 0.0, 0.0),
        );
        let prev = *poses.last().unwrap();
        poses.push(step.compose(&prev));
    }
    let noise = |rng: &mut ChaCha8Rng| {
        Sim3::exp(&Sim3Tangent::new(
            Vec3::new(
                rng.gen_range(-0.02..0.02),
                rng.gen_range(-0.02..0.02),
                rng.gen_range(-0.02..0.02),
            ),
            Vec3::new(
                rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
            ),
            rng.gen_range(-0.01..0.01),
        ))
    };
    let vertices: Vec<PoseGraphVertex> = poses
        .iter()
        .enumerate()
        .map(|(k, p)| PoseGraphVertex {
            id: KeyFrameId(k as u64),
            estimate: if k == 0 { *p } else { noise(&mut rng).compose(p) },
            fixed: k == 0,
        })
        .collect();
    let mut edge_list = Vec::with_capacity(edges);
    for k in 1..vertices_n {
        edge_list.push(PoseGraphEdge {
            i: KeyFrameId(k as u64),
            j: KeyFrameId(k as u64 - 1),
            measurement: poses[k].compose(&poses[k - 1].inverse()),
            kind: EdgeKind::Tree,
        });
    }
    while edge_list.len() < edges {
        let i = rng.gen_range(1..vertices_n);
        let j = rng.gen_range(0..i);
        edge_list.push(PoseGraphEdge {
            i: KeyFrameId(i as u64),
            j: KeyFrameId(j as u64),
            measurement: poses[i].compose(&poses[j].inverse()),
            kind: EdgeKind::Covisibility,
        });
    }
    EssentialProblem {
        vertices,
        edges: edge_list,
    }
}

fn best_of<F: FnMut()>(repetitions: usize, mut f: F) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..repetitions {
        let t = Instant::now();
        f();
        best = best.min(t.elapsed().as_secs_f64() * 1e3);
    }
    best
}

/// Run the scaling grid. Sizes must be monotonically increasing.
pub fn bench_scaling(config: &BenchConfig) -> Vec<BenchRow> {
    assert!(
        config.sizes.windows(2).all(|w| w[0] < w[1]),
        "sizes must be monotonically increasing"
    );
    let mut rows = Vec::new();

    for &size in &config.sizes {
        let fusion = build_fusion_workload(size, config.seed);
        let mut base = 0.0;
        for &workers in &config.workers {
            let runtime = Runtime::new(workers);
            let millis = best_of(config.repetitions, || {
                let plan = plan_fusion(
                    &runtime,
                    &fusion.targets,
                    &fusion.loop_points,
                    &fusion.observation_counts,
                    &fusion.params,
                );
                std::hint::black_box(plan.entries.len());
            });
            if workers == 1 {
                base = millis;
            }
            rows.push(BenchRow {
                stage: "fusion-planning".into(),
                size,
                workers,
                millis,
                speedup: if millis > 0.0 { base / millis } else { 1.0 },
            });
        }
    }

    for &size in &config.sizes {
        let problem = build_posegraph_workload(size, config.seed + 1);
        let estimates = problem.initial_estimates();
        let free: BTreeMap<KeyFrameId, usize> = problem
            .vertices
            .iter()
            .filter(|v| !v.fixed)
            .enumerate()
            .map(|(k, v)| (v.id, k))
            .collect();
        let mut base = 0.0;
        for &workers in &config.workers {
            let runtime = Runtime::new(workers);
            let millis = best_of(config.repetitions, || {
                let normal = crate::posegraph::optimize::build_normal_equations(
                    &problem.edges,
                    &estimates,
                    &free,
                    &runtime,
                )
                .expect("bench edges stay on the principal branch");
                std::hint::black_box(normal.chi2);
            });
            if workers == 1 {
                base = millis;
            }
            rows.push(BenchRow {
                stage: "posegraph-eval".into(),
                size,
                workers,
                millis,
                speedup: if millis > 0.0 { base / millis } else { 1.0 },
            });
        }
    }
    rows
}
