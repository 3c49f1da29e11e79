//! Loop correction: corrected-pose propagation through the current
//! window, and plan/apply loop fusion.
//!
//! `plan_fusion` is read-only and data-parallel over window keyframes;
//! `propagate_correction` and `apply_fusion` run in the exclusive
//! mutation phase, single-threaded.

pub mod fusion;

pub use fusion::{apply_fusion, plan_fusion, FusionPlan, FusionPlanEntry, FusionStats};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detect::LoopDetection;
use crate::geometry::Sim3;
use crate::map::{KeyFrameId, Map, MapError, MapPointId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedPose {
    /// Pre-correction pose as a scale-1 Sim3 embedding.
    pub s_old: Sim3,
    pub s_corrected: Sim3,
}

/// Corrected Sim3 poses for the current keyframe and its covisible window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectedPoseSet {
    pub current_kf: KeyFrameId,
    pub poses: BTreeMap<KeyFrameId, CorrectedPose>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrectError {
    #[error("detection was not accepted; refusing to propagate")]
    NotAccepted,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Correct the current keyframe's pose from the detection, chain the
/// correction through the covisible window via the old relative poses,
/// and re-anchor each window map point once (through the first window
/// keyframe observing it, ascending id). Exclusive mutation phase.
///
/// `recent_window` bounds the corrected window to covisible keyframes at
/// most that many ids older than the current one: once fusion has linked
/// the loop, the current keyframe is covisible with the established side
/// too, and that side is the reference being corrected toward — moving it
/// would let every closure drag its own anchor.
pub fn propagate_correction(
    map: &mut Map,
    detection: &LoopDetection,
    recent_window: u64,
) -> Result<CorrectedPoseSet, CorrectError> {
    if !detection.accepted {
        return Err(CorrectError::NotAccepted);
    }
    let current = detection.current_kf;
    let matched_pose = map
        .keyframe(detection.matched_kf)
        .ok_or(MapError::UnknownKeyFrame(detection.matched_kf))?
        .pose;
    let current_pose = map
        .keyframe(current)
        .ok_or(MapError::UnknownKeyFrame(current))?
        .pose;

    let s_mw = Sim3::from_se3(&matched_pose);
    let s_cw_old = Sim3::from_se3(&current_pose);
    let s_cw_corrected = detection.s_cm.compose(&s_mw);

    // window: current keyframe plus temporally-recent covisible neighbors
    let mut window: Vec<KeyFrameId> = map
        .covisibility()
        .neighbors(current)
        .into_iter()
        .filter(|id| id.0 + recent_window > current.0 && id.0 <= current.0)
        .collect();
    window.push(current);
    window.sort_unstable();
    window.dedup();

    let mut poses = BTreeMap::new();
    for &kf_id in &window {
        let s_old = Sim3::from_se3(&map.keyframe(kf_id).expect("window id").pose);
        let s_ic = s_old.compose(&s_cw_old.inverse());
        let s_corrected = s_ic.compose(&s_cw_corrected);
        poses.insert(kf_id, CorrectedPose { s_old, s_corrected });
    }

    // re-anchor each window point once, via its first observing window
    // keyframe in ascending id order
    let mut moved: std::collections::BTreeSet<MapPointId> = Default::default();
    for &kf_id in &window {
        let assoc: Vec<MapPointId> = map
            .keyframe(kf_id)
            .expect("window id")
            .associated_points()
            .collect();
        let corr = poses[&kf_id];
        for pid in assoc {
            if !moved.insert(pid) {
                continue;
            }
            let Some(point) = map.point(pid) else { continue };
            let p_new = corr
                .s_corrected
                .inverse()
                .apply(corr.s_old.apply(point.position));
            map.set_point_position(pid, p_new)?;
        }
    }

    // write back poses as SE3 recoveries of the corrected Sim3
    for (&kf_id, corr) in &poses {
        map.set_pose(kf_id, corr.s_corrected.to_se3())?;
    }

    Ok(CorrectedPoseSet {
        current_kf: current,
        poses,
    })
}
