//! Duplicate-landmark fusion across a closed loop.
//!
//! Split into a read-only, data-parallel planning pass over the window
//! keyframes and a sequential, deterministic application pass. The plan is
//! a pure function of the frozen inputs, so parallel and sequential
//! planning produce identical plans.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Sim3;
use crate::map::{KeyFrameId, KeyFrameSnapshot, Map, MapError, MapPointId};
use crate::matching::{projection_search, PointView, ProjectionSearchParams};
use crate::runtime::Runtime;

/// One planned slot action: associate `survivor` with the feature; when
/// `replaced` is set, that point is merged into the survivor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionPlanEntry {
    pub kf: KeyFrameId,
    pub feature: usize,
    pub survivor: MapPointId,
    pub replaced: Option<MapPointId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FusionPlan {
    pub entries: Vec<FusionPlanEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionStats {
    pub replaced: usize,
    pub new_associations: usize,
    pub skipped: usize,
    pub touched_keyframes: usize,
}

/// A window keyframe frozen for planning: its snapshot and corrected pose.
#[derive(Clone)]
pub struct FusionTarget {
    pub snapshot: Arc<KeyFrameSnapshot>,
    pub corrected_pose: Sim3,
}

/// Plan fusion: project the loop points into every window keyframe under
/// its corrected pose, and per match record either a replacement (the
/// survivor is the point with more observations, ties to the lower id) or
/// a new association. Partial plans concatenate in ascending keyframe
/// order and deduplicate by (keyframe, feature), keeping the first.
///
/// Pure function of its inputs; `observation_counts` must cover both the
/// loop points and every point associated in the window snapshots.
pub fn plan_fusion(
    runtime: &Runtime,
    targets: &[FusionTarget],
    loop_points: &[PointView],
    observation_counts: &BTreeMap<MapPointId, usize>,
    params: &ProjectionSearchParams,
) -> FusionPlan {
    let partials = runtime
        .run_batch(targets.len(), |k| {
            let target = &targets[k];
            let seq = runtime.with_workers(1);
            let matches = projection_search(
                &seq,
                &target.snapshot,
                &target.corrected_pose,
                loop_points,
                params,
            );
            let mut entries = Vec::with_capacity(matches.len());
            for m in matches {
                let kf = target.snapshot.kf_id;
                match target.snapshot.associations[m.feature] {
                    Some(existing) if existing == m.point_id => {}
                    Some(existing) => {
                        let obs_existing = observation_counts.get(&existing).copied().unwrap_or(0);
                        let obs_loop = observation_counts.get(&m.point_id).copied().unwrap_or(0);
                        // more observations survive; ties to the lower id
                        let (survivor, replaced) = if (obs_existing, std::cmp::Reverse(existing))
                            > (obs_loop, std::cmp::Reverse(m.point_id))
                        {
                            (existing, m.point_id)
                        } else {
                            (m.point_id, existing)
                        };
                        entries.push(FusionPlanEntry {
                            kf,
                            feature: m.feature,
                            survivor,
                            replaced: Some(replaced),
                        });
                    }
                    None => {
                        entries.push(FusionPlanEntry {
                            kf,
                            feature: m.feature,
                            survivor: m.point_id,
                            replaced: None,
                        });
                    }
                }
            }
            entries
        })
        .expect("fusion planning kernel is panic-free");

    let mut seen: BTreeSet<(KeyFrameId, usize)> = BTreeSet::new();
    let mut entries = Vec::new();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by_key(|&k| targets[k].snapshot.kf_id);
    for k in order {
        for entry in &partials[k] {
            if seen.insert((entry.kf, entry.feature)) {
                entries.push(*entry);
            }
        }
    }
    FusionPlan { entries }
}

/// Execute a plan in order. Entries invalidated by earlier entries resolve
/// through forwarding ids or are skipped (counted, never thrown). Every
/// touched keyframe gets its connections recomputed afterwards.
pub fn apply_fusion(map: &mut Map, plan: &FusionPlan) -> Result<FusionStats, MapError> {
    let mut stats = FusionStats::default();
    let mut touched: BTreeSet<KeyFrameId> = BTreeSet::new();

    for entry in &plan.entries {
        let survivor = map.resolve(entry.survivor);
        match entry.replaced {
            Some(replaced) => {
                let victim = map.resolve(replaced);
                if victim == survivor {
                    stats.skipped += 1;
                    continue;
                }
                match map.replace_map_point(victim, survivor) {
                    Ok(kfs) => {
                        stats.replaced += 1;
                        touched.insert(entry.kf);
                        touched.extend(kfs);
                    }
                    Err(
                        MapError::PointReplaced(_)
                        | MapError::UnknownMapPoint(_)
                        | MapError::SelfReplace(_),
                    ) => {
                        stats.skipped += 1;
                    }
                    Err(other) => return Err(other),
                }
            }
            None => match map.add_observation(entry.kf, entry.feature, survivor) {
                Ok(()) => {
                    stats.new_associations += 1;
                    touched.insert(entry.kf);
                }
                Err(
                    MapError::SlotOccupied { .. }
                    | MapError::AlreadyObserved { .. }
                    | MapError::PointReplaced(_)
                    | MapError::UnknownMapPoint(_),
                ) => {
                    stats.skipped += 1;
                }
                Err(other) => return Err(other),
            },
        }
    }

    stats.touched_keyframes = touched.len();
    for kf in touched {
        map.update_connections(kf)?;
    }
    Ok(stats)
}
