//! Batched triple-keyframe verification.
//!
//! One data-parallel job covers the projection searches of three
//! consecutive covisible keyframes against the same frozen point batch;
//! per-keyframe conflict resolution then matches three independent
//! sequential searches merged in keyframe order exactly.

use std::sync::Arc;

use crate::geometry::Sim3;
use crate::map::{KeyFrameId, KeyFrameSnapshot};
use crate::matching::projection::{match_point, resolve_conflicts};
use crate::matching::{MatchResult, PointView, ProjectionSearchParams};
use crate::runtime::Runtime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleMatch {
    pub kf_id: KeyFrameId,
    pub result: MatchResult,
}

/// Run the three searches as a single batched invocation and merge the
/// per-keyframe results, deduplicated per (keyframe, feature).
pub fn verify_triple(
    runtime: &Runtime,
    snapshots: &[Arc<KeyFrameSnapshot>; 3],
    poses: &[Sim3; 3],
    points: &[PointView],
    params: &ProjectionSearchParams,
) -> Vec<TripleMatch> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let raw = runtime
        .run_batch(3 * n, |e| {
            let slot = e / n;
            let point = e % n;
            match_point(&snapshots[slot], &poses[slot], &points[point], params)
        })
        .expect("projection kernel is panic-free");

    let mut merged = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for slot in 0..3 {
        let per_kf = resolve_conflicts(points, &raw[slot * n..(slot + 1) * n]);
        for result in per_kf {
            if seen.insert((snapshots[slot].kf_id, result.feature)) {
                merged.push(TripleMatch {
                    kf_id: snapshots[slot].kf_id,
                    result,
                });
            }
        }
    }
    merged
}
