//! Region detection: candidate retrieval, RANSAC Sim3 estimation,
//! task-parallel refinement, and batched triple-keyframe verification.
//!
//! Everything here runs inside a frozen read phase of the map; no map
//! mutation happens in this module.

pub mod ransac;
pub mod refine;
pub mod verify;

pub use ransac::{estimate_sim3_ransac, RansacConfig, RansacError, RansacResult, Sim3Correspondence};
pub use refine::{refine_sim3, RefineConfig, RefineError, Refinement};
pub use verify::{verify_triple, TripleMatch};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::Sim3;
use crate::map::{KeyFrameId, Map, MapError, MapPointId};
use crate::matching::{
    detect_candidates, projection_search, MatchResult, PointView, ProjectionSearchParams,
};
use crate::runtime::Runtime;

/// A scored revisit candidate with its covisibility window.
#[derive(Debug, Clone)]
pub struct LoopCandidate {
    pub matched_kf: KeyFrameId,
    /// The matched keyframe plus its covisible neighbors, minus anything
    /// covisible with the current keyframe.
    pub window: Vec<KeyFrameId>,
    pub initial_matches: Vec<MatchResult>,
}

/// An accepted (or rejected) loop hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopDetection {
    pub current_kf: KeyFrameId,
    pub matched_kf: KeyFrameId,
    /// `S_cm`: maps matched-keyframe camera coordinates into the current
    /// keyframe's camera frame; the world-consistent correction seed.
    pub s_cm: Sim3,
    pub verified_matches: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopDetectConfig {
    /// Fixed number of candidates retrieved per query.
    pub num_candidates: usize,
    /// Candidates must be at least this many keyframe ids older than the
    /// query; together with the covisibility exclusion this keeps
    /// temporally-adjacent keyframes from posing as revisits.
    pub min_index_gap: u64,
    /// Initial guided search from the candidate window into the current
    /// keyframe. Runs at the drifted pose, so the radius is generous while
    /// the descriptor gate stays narrow.
    pub ps1: ProjectionSearchParams,
    pub ransac: RansacConfig,
    pub refine: RefineConfig,
    /// Verification search for the three consecutive keyframes.
    pub verify: ProjectionSearchParams,
    /// Minimum merged verified matches for acceptance.
    pub accept_threshold: usize,
}

impl Default for LoopDetectConfig {
    fn default() -> Self {
        Self {
            num_candidates: 3,
            min_index_gap: 30,
            ps1: ProjectionSearchParams {
                radius_multiplier: 120.0,
                octave_tolerance: 2,
                ..ProjectionSearchParams::narrow()
            },
            // drift-scale synthetic maps carry a few pixels of local
            // inconsistency; 5 px at octave 0 keeps true inliers
            ransac: RansacConfig {
                chi2_threshold: 25.0,
                ..RansacConfig::default()
            },
            refine: RefineConfig::default(),
            verify: ProjectionSearchParams {
                radius_multiplier: 4.0,
                ..ProjectionSearchParams::narrow()
            },
            accept_threshold: 100,
        }
    }
}

/// Frozen views of every live map point associated in the window
/// keyframes, ascending point id.
fn window_point_views(map: &Map, window: &[KeyFrameId]) -> Vec<PointView> {
    let mut ids: BTreeSet<MapPointId> = BTreeSet::new();
    for kf_id in window {
        if let Some(kf) = map.keyframe(*kf_id) {
            ids.extend(kf.associated_points());
        }
    }
    ids.into_iter()
        .filter_map(|id| map.point(id))
        .filter(|p| !p.is_replaced())
        .map(PointView::from_point)
        .collect()
}

/// Full region-detection pass for one keyframe: candidate retrieval,
/// guided matching, RANSAC, refinement, and triple verification, in
/// candidate-rank order with first-accepted-wins. `None` means no loop.
pub fn detect_loop(
    map: &mut Map,
    current: KeyFrameId,
    config: &LoopDetectConfig,
    runtime: &Runtime,
) -> Result<Option<LoopDetection>, MapError> {
    let kf = map
        .keyframe(current)
        .ok_or(MapError::UnknownKeyFrame(current))?;
    let words = kf.word_ids.clone();
    let intrinsics = kf.intrinsics;
    let t_cw = Sim3::from_se3(&kf.pose);

    let mut exclusion: BTreeSet<KeyFrameId> = map
        .covisibility()
        .neighbors(current)
        .into_iter()
        .collect();
    exclusion.insert(current);
    exclusion.extend(
        map.keyframe_ids()
            .filter(|id| id.0 + config.min_index_gap > current.0),
    );

    // two predecessors needed for the triple verification
    let previous: Vec<KeyFrameId> = map
        .keyframe_ids()
        .filter(|id| *id < current)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .take(2)
        .collect();
    if previous.len() < 2 {
        return Ok(None);
    }

    let candidates = detect_candidates(
        map.word_index(),
        map.covisibility(),
        current,
        &words,
        config.num_candidates,
        &exclusion,
    );
    if candidates.is_empty() {
        return Ok(None);
    }

    let current_snapshot = map.snapshot(current)?;
    let triple_ids = [current, previous[0], previous[1]];
    let triple_snapshots = [
        map.snapshot(triple_ids[0])?,
        map.snapshot(triple_ids[1])?,
        map.snapshot(triple_ids[2])?,
    ];
    let triple_poses_se3 = [
        map.keyframe(triple_ids[0]).unwrap().pose,
        map.keyframe(triple_ids[1]).unwrap().pose,
        map.keyframe(triple_ids[2]).unwrap().pose,
    ];

    for matched in candidates {
        let mut window: Vec<KeyFrameId> = vec![matched];
        window.extend(
            map.covisibility()
                .neighbors(matched)
                .into_iter()
                .filter(|id| !exclusion.contains(id)),
        );
        window.sort_unstable();
        window.dedup();

        let views = window_point_views(map, &window);
        if views.is_empty() {
            continue;
        }
        let initial_matches =
            projection_search(runtime, &current_snapshot, &t_cw, &views, &config.ps1);

        let candidate_record = LoopCandidate {
            matched_kf: matched,
            window: window.clone(),
            initial_matches,
        };
        let t_mw = Sim3::from_se3(&map.keyframe(matched).unwrap().pose);

        // 3D-3D correspondences between the current keyframe's own points
        // and the matched window's points, in the two camera frames
        let current_kf = map.keyframe(current).unwrap();
        let mut correspondences = Vec::new();
        for m in &candidate_record.initial_matches {
            let Some(own_id) = current_kf.associations[m.feature] else {
                continue;
            };
            let Some(own) = map.point(own_id) else { continue };
            if own.is_replaced() {
                continue;
            }
            let view = &views[views
                .binary_search_by_key(&m.point_id, |v| v.id)
                .expect("match comes from views")];
            let p_a = t_cw.apply(own.position);
            let p_b = t_mw.apply(view.position);
            let octave_b = predict_octave(
                p_b.norm(),
                view.d_max,
                config.ps1.scale_factor,
                config.ps1.num_octaves,
            );
            correspondences.push(Sim3Correspondence {
                p_a,
                p_b,
                octave_a: current_kf.keypoints[m.feature].octave,
                octave_b,
            });
        }
        if correspondences.len() < config.ransac.min_inliers {
            continue;
        }

        let Ok(ransac) =
            estimate_sim3_ransac(&correspondences, &intrinsics, &intrinsics, &config.ransac)
        else {
            continue;
        };

        // seed S_cw from the RANSAC S_cm and refine against the window
        let s0_cw = ransac.transform.compose(&t_mw);
        let Ok(refinement) = refine_sim3(runtime, &current_snapshot, &views, &s0_cw, &config.refine)
        else {
            continue;
        };
        let s_cw_star = refinement.transform;

        // verification poses keep the old relative chain: S_k = S_kc * S_cw*
        let poses = triple_poses_se3.map(|pose| {
            let s_kc = Sim3::from_se3(&pose).compose(&t_cw.inverse());
            s_kc.compose(&s_cw_star)
        });
        let merged = verify_triple(runtime, &triple_snapshots, &poses, &views, &config.verify);
        let verified = merged.len();
        if verified >= config.accept_threshold {
            return Ok(Some(LoopDetection {
                current_kf: current,
                matched_kf: matched,
                s_cm: s_cw_star.compose(&t_mw.inverse()),
                verified_matches: verified,
                accepted: true,
            }));
        }
    }
    Ok(None)
}

fn predict_octave(dist: f64, d_max: f64, scale_factor: f64, num_octaves: u8) -> u8 {
    let max_octave = num_octaves.saturating_sub(1) as f64;
    ((d_max / dist.max(1e-9)).ln() / scale_factor.ln())
        .round()
        .clamp(0.0, max_octave) as u8
}
