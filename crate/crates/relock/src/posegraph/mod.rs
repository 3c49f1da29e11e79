//! Essential-graph Sim(3) pose optimization.
//!
//! Problem construction from the map (spanning tree + loop edges +
//! high-covisibility edges), residuals with forward-mode autodiff
//! Jacobians, Levenberg-Marquardt with a dense LDLT solve, and recovery of
//! the optimized poses back into the map.

pub mod dual;
pub mod g2o;
pub mod ldlt;
pub mod optimize;
pub mod residual;

pub use dual::Dual7;
pub use ldlt::{Ldlt, LdltError};
pub use optimize::{
    optimize, IterationRecord, LmConfig, NormalEquations, OptimizeError, OptimizeOutcome,
};
pub use residual::{edge_jacobians, edge_residual};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::correct::CorrectedPoseSet;
use crate::detect::LoopDetection;
use crate::geometry::Sim3;
use crate::map::{KeyFrameId, Map};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGraphVertex {
    pub id: KeyFrameId,
    pub estimate: Sim3,
    pub fixed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Tree,
    Loop,
    Covisibility,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGraphEdge {
    pub i: KeyFrameId,
    pub j: KeyFrameId,
    /// Relative constraint `S_ij`; the residual is
    /// `log(S_ij * S_jw * S_iw^-1)`.
    pub measurement: Sim3,
    pub kind: EdgeKind,
}

/// Vertices (ascending id) and edges in deterministic construction order.
#[derive(Debug, Clone)]
pub struct EssentialProblem {
    pub vertices: Vec<PoseGraphVertex>,
    pub edges: Vec<PoseGraphEdge>,
}

impl EssentialProblem {
    pub fn initial_estimates(&self) -> BTreeMap<KeyFrameId, Sim3> {
        self.vertices.iter().map(|v| (v.id, v.estimate)).collect()
    }

    pub fn fixed_ids(&self) -> Vec<KeyFrameId> {
        self.vertices
            .iter()
            .filter(|v| v.fixed)
            .map(|v| v.id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("essential graph is disconnected: {missing} keyframes unreachable from the root")]
    Disconnected { missing: usize },
    #[error("detection references unknown keyframe {0}")]
    UnknownKeyFrame(KeyFrameId),
}

/// Build the essential-graph problem after a loop correction.
///
/// Vertex estimates are the corrected Sim3 poses where available and
/// scale-1 embeddings of the current SE3 poses otherwise; the matched loop
/// keyframe is fixed. Edge measurements come from pre-correction relative
/// poses, except the new loop edge which carries the detection transform.
pub fn build_essential_problem(
    map: &Map,
    corrected: &CorrectedPoseSet,
    detection: &LoopDetection,
) -> Result<EssentialProblem, BuildError> {
    if map.keyframe(detection.matched_kf).is_none() {
        return Err(BuildError::UnknownKeyFrame(detection.matched_kf));
    }
    if map.keyframe(detection.current_kf).is_none() {
        return Err(BuildError::UnknownKeyFrame(detection.current_kf));
    }

    // estimates: corrected where available, else embedded current pose
    let mut vertices = Vec::new();
    for id in map.keyframe_ids() {
        let estimate = match corrected.poses.get(&id) {
            Some(c) => c.s_corrected,
            None => Sim3::from_se3(&map.keyframe(id).expect("iterating ids").pose),
        };
        vertices.push(PoseGraphVertex {
            id,
            estimate,
            fixed: id == detection.matched_kf,
        });
    }

    // pre-correction pose of a keyframe (corrected window keeps its S_old)
    let old_pose = |id: KeyFrameId| -> Sim3 {
        match corrected.poses.get(&id) {
            Some(c) => c.s_old,
            None => Sim3::from_se3(&map.keyframe(id).expect("known id").pose),
        }
    };
    let relative = |i: KeyFrameId, j: KeyFrameId| old_pose(i).compose(&old_pose(j).inverse());

    let ordered = |a: KeyFrameId, b: KeyFrameId| if a < b { (a, b) } else { (b, a) };
    let mut used: BTreeSet<(KeyFrameId, KeyFrameId)> = BTreeSet::new();
    let mut edges = Vec::new();

    // the new loop edge carries the detection transform and wins dedup
    edges.push(PoseGraphEdge {
        i: detection.current_kf,
        j: detection.matched_kf,
        measurement: detection.s_cm,
        kind: EdgeKind::Loop,
    });
    used.insert(ordered(detection.current_kf, detection.matched_kf));

    for (child, parent) in map.essential().tree_edges() {
        if used.insert(ordered(child, parent)) {
            edges.push(PoseGraphEdge {
                i: child,
                j: parent,
                measurement: relative(child, parent),
                kind: EdgeKind::Tree,
            });
        }
    }
    for (a, b) in map.essential().loop_edges() {
        if used.insert(ordered(a, b)) {
            edges.push(PoseGraphEdge {
                i: a,
                j: b,
                measurement: relative(a, b),
                kind: EdgeKind::Loop,
            });
        }
    }
    let min_weight = map.config().essential_min_weight;
    for (a, b) in map
        .essential()
        .high_covisibility_edges(map.covisibility(), min_weight)
    {
        if used.insert(ordered(a, b)) {
            edges.push(PoseGraphEdge {
                i: a,
                j: b,
                measurement: relative(a, b),
                kind: EdgeKind::Covisibility,
            });
        }
    }

    // connectivity over the union of edges, seeded at the fixed vertex
    let mut adjacency: BTreeMap<KeyFrameId, Vec<KeyFrameId>> = BTreeMap::new();
    for e in &edges {
        adjacency.entry(e.i).or_default().push(e.j);
        adjacency.entry(e.j).or_default().push(e.i);
    }
    let mut reached = BTreeSet::new();
    let mut stack = vec![detection.matched_kf];
    while let Some(id) = stack.pop() {
        if reached.insert(id) {
            if let Some(neighbors) = adjacency.get(&id) {
                stack.extend(neighbors.iter().copied());
            }
        }
    }
    let missing = vertices.iter().filter(|v| !reached.contains(&v.id)).count();
    if missing > 0 {
        return Err(BuildError::Disconnected { missing });
    }

    Ok(EssentialProblem { vertices, edges })
}

/// Write the optimized poses back into the map: keyframe poses become the
/// SE3 recovery `(R, t/s)` of their optimized Sim3, and each live map
/// point is re-anchored once via its reference keyframe:
/// `p' = S_new^-1 (S_old (p))`. Snapshots restage on next access.
pub fn recover(
    map: &mut Map,
    initial: &BTreeMap<KeyFrameId, Sim3>,
    optimized: &BTreeMap<KeyFrameId, Sim3>,
) -> Result<(), crate::map::MapError> {
    // move points first, while pose reads still see the pre-recovery state
    let moves: Vec<(crate::map::MapPointId, crate::geometry::Vec3)> = map
        .point_ids()
        .collect::<Vec<_>>()
        .into_iter()
        .filter_map(|pid| {
            let point = map.point(pid)?;
            if point.is_replaced() {
                return None;
            }
            let anchor = point.reference_kf?;
            let s_old = initial.get(&anchor)?;
            let s_new = optimized.get(&anchor)?;
            Some((pid, s_new.inverse().apply(s_old.apply(point.position))))
        })
        .collect();
    for (pid, pos) in moves {
        map.set_point_position(pid, pos)?;
    }
    let poses: Vec<(KeyFrameId, Sim3)> = optimized.iter().map(|(k, v)| (*k, *v)).collect();
    for (id, s) in poses {
        map.set_pose(id, s.to_se3())?;
    }
    Ok(())
}
