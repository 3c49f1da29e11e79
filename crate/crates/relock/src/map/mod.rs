//! The shared map: keyframes, map points, covisibility and essential
//! graphs, and the snapshot store backing all parallel stages.
//!
//! Concurrency contract: read phases (snapshots and frozen views shared
//! across workers) strictly alternate with exclusive mutation phases
//! (`&mut Map` operations). Snapshots are immutable `Arc`s, so the borrow
//! checker enforces the phase boundary; the pipeline is the only
//! orchestrator of transitions.

mod covisibility;
mod essential;
mod keyframe;
mod point;
mod snapshot;
mod types;

pub use covisibility::CovisibilityGraph;
pub use essential::EssentialGraph;
pub use keyframe::KeyFrame;
pub use point::MapPoint;
pub use snapshot::{GridIndex, GridShape, KeyFrameSnapshot, SnapshotStore};
pub use types::{Descriptor, KeyFrameId, KeyPoint, MapPointId};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::matching::words::WordIndex;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("keyframe {0} already exists")]
    DuplicateKeyFrame(KeyFrameId),
    #[error("keyframe {0} does not exist")]
    UnknownKeyFrame(KeyFrameId),
    #[error("map point {0} does not exist")]
    UnknownMapPoint(MapPointId),
    #[error("map point {0} already exists")]
    DuplicateMapPoint(MapPointId),
    #[error("map point {0} was already replaced")]
    PointReplaced(MapPointId),
    #[error("cannot replace a map point with itself ({0})")]
    SelfReplace(MapPointId),
    #[error("keyframe {kf}: {what} length mismatch")]
    LengthMismatch { kf: KeyFrameId, what: &'static str },
    #[error("keyframe {kf} keypoint {index} outside image bounds")]
    KeyPointOutOfBounds { kf: KeyFrameId, index: usize },
    #[error("keyframe {kf} associates map point {point} more than once")]
    DuplicateAssociation { kf: KeyFrameId, point: MapPointId },
    #[error("feature slot ({kf}, {feature}) is already occupied")]
    SlotOccupied { kf: KeyFrameId, feature: usize },
    #[error("map point {point} already observes keyframe {kf}")]
    AlreadyObserved { kf: KeyFrameId, point: MapPointId },
}

/// Consistency violation found by [`Map::audit`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("map audit failed: {0}")]
pub struct AuditError(pub String);

/// Thresholds and grid geometry, all configuration-exposed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MapConfig {
    /// Covisibility edges below this weight are pruned by
    /// `update_connections` (unless pruning would isolate the keyframe).
    pub covisibility_min_weight: u32,
    /// Minimum weight for a covisibility edge to enter the essential graph.
    pub essential_min_weight: u32,
    pub grid_cols: u32,
    pub grid_rows: u32,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            covisibility_min_weight: 15,
            essential_min_weight: 100,
            grid_cols: 64,
            grid_rows: 48,
        }
    }
}

pub struct Map {
    config: MapConfig,
    keyframes: BTreeMap<KeyFrameId, KeyFrame>,
    points: BTreeMap<MapPointId, MapPoint>,
    covisibility: CovisibilityGraph,
    essential: EssentialGraph,
    snapshots: SnapshotStore,
    word_index: WordIndex,
}

impl Default for Map {
    fn default() -> Self {
        Self::new(MapConfig::default())
    }
}

impl Map {
    pub fn new(config: MapConfig) -> Self {
        Self {
            config,
            keyframes: BTreeMap::new(),
            points: BTreeMap::new(),
            covisibility: CovisibilityGraph::new(),
            essential: EssentialGraph::new(),
            snapshots: SnapshotStore::new(GridShape {
                cols: config.grid_cols,
                rows: config.grid_rows,
            }),
            word_index: WordIndex::new(),
        }
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    // ------------------------------------------------------------------
    // accessors

    pub fn keyframe(&self, id: KeyFrameId) -> Option<&KeyFrame> {
        self.keyframes.get(&id)
    }

    pub fn point(&self, id: MapPointId) -> Option<&MapPoint> {
        self.points.get(&id)
    }

    pub fn keyframe_ids(&self) -> impl Iterator<Item = KeyFrameId> + '_ {
        self.keyframes.keys().copied()
    }

    pub fn point_ids(&self) -> impl Iterator<Item = MapPointId> + '_ {
        self.points.keys().copied()
    }

    pub fn keyframe_count(&self) -> usize {
        self.keyframes.len()
    }

    pub fn live_point_count(&self) -> usize {
        self.points.values().filter(|p| !p.is_replaced()).count()
    }

    pub fn covisibility(&self) -> &CovisibilityGraph {
        &self.covisibility
    }

    pub fn essential(&self) -> &EssentialGraph {
        &self.essential
    }

    pub fn word_index(&self) -> &WordIndex {
        &self.word_index
    }

    pub fn snapshot_repacks(&self) -> u64 {
        self.snapshots.repack_count()
    }

    pub fn staging_counters(&self) -> crate::runtime::staging::StagingCounters {
        self.snapshots.staging_counters()
    }

    /// Follow the forwarding chain of a (possibly replaced) map point to
    /// the live point it resolved into.
    pub fn resolve(&self, id: MapPointId) -> MapPointId {
        let mut cur = id;
        let mut hops = 0usize;
        while let Some(p) = self.points.get(&cur) {
            match p.replaced_by {
                Some(next) => {
                    cur = next;
                    hops += 1;
                    debug_assert!(hops <= self.points.len(), "forwarding cycle");
                }
                None => break,
            }
        }
        cur
    }

    // ------------------------------------------------------------------
    // mutations

    /// Register a map point; observations are wired later by
    /// `insert_keyframe` / `add_observation`.
    pub fn add_map_point(&mut self, point: MapPoint) -> Result<MapPointId, MapError> {
        let id = point.id;
        if self.points.contains_key(&id) {
            return Err(MapError::DuplicateMapPoint(id));
        }
        self.points.insert(id, point);
        Ok(id)
    }

    /// Insert a keyframe: wires its associations into the referenced map
    /// points, updates covisibility weights against every keyframe sharing
    /// observations, picks the spanning-tree parent (max weight, ties to
    /// the lowest id, falling back to the previous keyframe by id), and
    /// stages the snapshot exactly once.
    pub fn insert_keyframe(&mut self, kf: KeyFrame) -> Result<KeyFrameId, MapError> {
        let id = kf.id;
        if self.keyframes.contains_key(&id) {
            return Err(MapError::DuplicateKeyFrame(id));
        }
        if kf.descriptors.len() != kf.keypoints.len() {
            return Err(MapError::LengthMismatch {
                kf: id,
                what: "descriptors",
            });
        }
        if kf.associations.len() != kf.keypoints.len() {
            return Err(MapError::LengthMismatch {
                kf: id,
                what: "associations",
            });
        }
        for (i, kp) in kf.keypoints.iter().enumerate() {
            let (w, h) = (kf.intrinsics.width as f64, kf.intrinsics.height as f64);
            if kp.u < 0.0 || kp.u >= w || kp.v < 0.0 || kp.v >= h {
                return Err(MapError::KeyPointOutOfBounds { kf: id, index: i });
            }
        }
        let mut seen = BTreeSet::new();
        for pid in kf.associated_points() {
            let point = self.points.get(&pid).ok_or(MapError::UnknownMapPoint(pid))?;
            if point.is_replaced() {
                return Err(MapError::PointReplaced(pid));
            }
            if !seen.insert(pid) {
                return Err(MapError::DuplicateAssociation { kf: id, point: pid });
            }
        }

        // wire observations and count shared points per covisible keyframe
        let mut shared: BTreeMap<KeyFrameId, u32> = BTreeMap::new();
        for (feature, pid) in kf.associations.iter().enumerate() {
            let Some(pid) = pid else { continue };
            let point = self.points.get_mut(pid).expect("validated above");
            for other in point.observations.keys() {
                *shared.entry(*other).or_insert(0) += 1;
            }
            point.observations.insert(id, feature);
            if point.reference_kf.is_none() {
                point.reference_kf = Some(id);
            }
        }
        for (&other, &w) in &shared {
            self.covisibility.set_weight(id, other, w);
        }

        // spanning-tree parent: strongest covisible, else previous by id
        let parent = if self.keyframes.is_empty() {
            None
        } else if let Some((&best, _)) = shared.iter().max_by(|a, b| {
            a.1.cmp(b.1).then(b.0.cmp(a.0)) // max weight, tie -> lowest id
        }) {
            Some(best)
        } else {
            self.keyframes.range(..id).next_back().map(|(k, _)| *k)
        };
        self.essential.add_keyframe(id, parent);

        self.word_index.insert(id, &kf.word_ids);
        self.snapshots.stage_new(&kf);
        self.keyframes.insert(id, kf);
        Ok(id)
    }

    /// Recompute all covisibility weights incident to `kf_id` from current
    /// observations. Edges below the configured threshold are dropped
    /// unless that would isolate the keyframe, in which case its single
    /// strongest edge (ties to the lowest id) is kept. Returns the set of
    /// changed pairs.
    pub fn update_connections(
        &mut self,
        kf_id: KeyFrameId,
    ) -> Result<BTreeSet<(KeyFrameId, KeyFrameId)>, MapError> {
        let kf = self
            .keyframes
            .get(&kf_id)
            .ok_or(MapError::UnknownKeyFrame(kf_id))?;

        let mut counts: BTreeMap<KeyFrameId, u32> = BTreeMap::new();
        for pid in kf.associated_points() {
            if let Some(point) = self.points.get(&pid) {
                for other in point.observations.keys() {
                    if *other != kf_id {
                        *counts.entry(*other).or_insert(0) += 1;
                    }
                }
            }
        }

        let threshold = self.config.covisibility_min_weight;
        let mut kept: BTreeMap<KeyFrameId, u32> = counts
            .iter()
            .filter(|(_, &w)| w >= threshold)
            .map(|(k, w)| (*k, *w))
            .collect();
        if kept.is_empty() {
            if let Some((&best, &w)) = counts.iter().max_by(|a, b| {
                a.1.cmp(b.1).then(b.0.cmp(a.0)) // max weight, tie -> lowest id
            }) {
                kept.insert(best, w);
            }
        }

        let mut changed = BTreeSet::new();
        let ordered = |a: KeyFrameId, b: KeyFrameId| if a < b { (a, b) } else { (b, a) };
        for (other, old_w) in self.covisibility.incident(kf_id) {
            match kept.get(&other) {
                Some(&new_w) if new_w == old_w => {}
                _ => {
                    changed.insert(ordered(kf_id, other));
                }
            }
        }
        for (&other, _) in &kept {
            if self.covisibility.weight(kf_id, other) == 0 {
                changed.insert(ordered(kf_id, other));
            }
        }

        for (other, _) in self.covisibility.incident(kf_id) {
            if !kept.contains_key(&other) {
                self.covisibility.set_weight(kf_id, other, 0);
            }
        }
        for (&other, &w) in &kept {
            self.covisibility.set_weight(kf_id, other, w);
        }
        Ok(changed)
    }

    /// Merge `victim` into `survivor`: every observation of the victim is
    /// transferred unless the survivor already occupies a slot in that
    /// keyframe (then the victim's slot is cleared). The victim is
    /// tombstoned with a forwarding id. Returns the touched keyframes.
    pub fn replace_map_point(
        &mut self,
        victim_id: MapPointId,
        survivor_id: MapPointId,
    ) -> Result<Vec<KeyFrameId>, MapError> {
        if victim_id == survivor_id {
            return Err(MapError::SelfReplace(victim_id));
        }
        let victim = self
            .points
            .get(&victim_id)
            .ok_or(MapError::UnknownMapPoint(victim_id))?;
        if victim.is_replaced() {
            return Err(MapError::PointReplaced(victim_id));
        }
        let survivor = self
            .points
            .get(&survivor_id)
            .ok_or(MapError::UnknownMapPoint(survivor_id))?;
        if survivor.is_replaced() {
            return Err(MapError::PointReplaced(survivor_id));
        }

        let victim_obs: Vec<(KeyFrameId, usize)> = self
            .points
            .get(&victim_id)
            .unwrap()
            .observations
            .iter()
            .map(|(k, f)| (*k, *f))
            .collect();

        let mut touched = Vec::new();
        for (kf_id, feature) in victim_obs {
            let survivor_has_kf = self
                .points
                .get(&survivor_id)
                .unwrap()
                .observations
                .contains_key(&kf_id);
            let kf = self
                .keyframes
                .get_mut(&kf_id)
                .expect("observation links a real keyframe");
            debug_assert_eq!(kf.associations[feature], Some(victim_id));
            if survivor_has_kf {
                kf.associations[feature] = None;
            } else {
                kf.associations[feature] = Some(survivor_id);
                self.points
                    .get_mut(&survivor_id)
                    .unwrap()
                    .observations
                    .insert(kf_id, feature);
            }
            self.snapshots.mark_dirty(kf_id);
            touched.push(kf_id);
        }

        let victim = self.points.get_mut(&victim_id).unwrap();
        victim.observations.clear();
        victim.replaced_by = Some(survivor_id);
        Ok(touched)
    }

    /// Bind a map point to an empty feature slot.
    pub fn add_observation(
        &mut self,
        kf_id: KeyFrameId,
        feature: usize,
        point_id: MapPointId,
    ) -> Result<(), MapError> {
        let point = self
            .points
            .get(&point_id)
            .ok_or(MapError::UnknownMapPoint(point_id))?;
        if point.is_replaced() {
            return Err(MapError::PointReplaced(point_id));
        }
        if point.observations.contains_key(&kf_id) {
            return Err(MapError::AlreadyObserved {
                kf: kf_id,
                point: point_id,
            });
        }
        let kf = self
            .keyframes
            .get_mut(&kf_id)
            .ok_or(MapError::UnknownKeyFrame(kf_id))?;
        if kf.associations[feature].is_some() {
            return Err(MapError::SlotOccupied {
                kf: kf_id,
                feature,
            });
        }
        kf.associations[feature] = Some(point_id);
        let point = self.points.get_mut(&point_id).unwrap();
        point.observations.insert(kf_id, feature);
        if point.reference_kf.is_none() {
            point.reference_kf = Some(kf_id);
        }
        self.snapshots.mark_dirty(kf_id);
        Ok(())
    }

    /// Write a keyframe pose (exclusive mutation phase); the snapshot is
    /// restaged on next access.
    pub fn set_pose(
        &mut self,
        kf_id: KeyFrameId,
        pose: crate::geometry::Se3,
    ) -> Result<(), MapError> {
        let kf = self
            .keyframes
            .get_mut(&kf_id)
            .ok_or(MapError::UnknownKeyFrame(kf_id))?;
        kf.pose = pose;
        self.snapshots.mark_dirty(kf_id);
        Ok(())
    }

    pub fn set_point_position(
        &mut self,
        point_id: MapPointId,
        position: crate::geometry::Vec3,
    ) -> Result<(), MapError> {
        let point = self
            .points
            .get_mut(&point_id)
            .ok_or(MapError::UnknownMapPoint(point_id))?;
        point.position = position;
        Ok(())
    }

    pub fn add_loop_edge(&mut self, a: KeyFrameId, b: KeyFrameId) {
        self.essential.add_loop_edge(a, b);
    }

    /// Current-version snapshot; repacks into the reused staging buffer
    /// only when the keyframe mutated since the last call.
    pub fn snapshot(&mut self, kf_id: KeyFrameId) -> Result<Arc<KeyFrameSnapshot>, MapError> {
        let kf = self
            .keyframes
            .get(&kf_id)
            .ok_or(MapError::UnknownKeyFrame(kf_id))?;
        Ok(self.snapshots.snapshot(kf))
    }

    // ------------------------------------------------------------------
    // consistency audit

    /// Global consistency audit: bidirectional keyframe <-> map-point
    /// links, covisibility weights equal to brute-force recounts,
    /// symmetry, tombstone emptiness, and the spanning-tree shape.
    pub fn audit(&self) -> Result<(), AuditError> {
        for (id, kf) in &self.keyframes {
            for (feature, assoc) in kf.associations.iter().enumerate() {
                let Some(pid) = assoc else { continue };
                let point = self
                    .points
                    .get(pid)
                    .ok_or_else(|| AuditError(format!("{id} references missing {pid}")))?;
                if point.is_replaced() {
                    return Err(AuditError(format!("{id} references tombstoned {pid}")));
                }
                if point.observations.get(id) != Some(&feature) {
                    return Err(AuditError(format!(
                        "{pid} does not list {id} at feature {feature}"
                    )));
                }
            }
        }
        for (pid, point) in &self.points {
            if point.is_replaced() && !point.observations.is_empty() {
                return Err(AuditError(format!(
                    "tombstoned {pid} still has observations"
                )));
            }
            for (kf_id, feature) in &point.observations {
                let kf = self
                    .keyframes
                    .get(kf_id)
                    .ok_or_else(|| AuditError(format!("{pid} observes missing {kf_id}")))?;
                if kf.associations.get(*feature).copied().flatten() != Some(*pid) {
                    return Err(AuditError(format!(
                        "{kf_id} slot {feature} does not hold {pid}"
                    )));
                }
            }
        }
        if !self.covisibility.is_symmetric() {
            return Err(AuditError("covisibility weights are asymmetric".into()));
        }
        for (a, b, w) in self.covisibility.edges() {
            let recount = self.shared_observation_count(a, b);
            if recount != w {
                return Err(AuditError(format!(
                    "covisibility weight {a}-{b} stored {w}, recount {recount}"
                )));
            }
        }
        if !self.essential.is_spanning_tree() {
            return Err(AuditError(
                "spanning tree is not a single acyclic tree".into(),
            ));
        }
        for id in self.keyframes.keys() {
            if !self.essential.contains(*id) {
                return Err(AuditError(format!("spanning tree misses {id}")));
            }
        }
        Ok(())
    }

    /// Brute-force shared-observation count between two keyframes.
    pub fn shared_observation_count(&self, a: KeyFrameId, b: KeyFrameId) -> u32 {
        let (Some(kfa), Some(_)) = (self.keyframes.get(&a), self.keyframes.get(&b)) else {
            return 0;
        };
        kfa.associated_points()
            .filter(|pid| {
                self.points
                    .get(pid)
                    .is_some_and(|p| p.observations.contains_key(&b))
            })
            .count() as u32
    }
}

impl std::fmt::Debug for Map {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Map")
            .field("keyframes", &self.keyframes.len())
            .field("points", &self.points.len())
            .finish()
    }
}

#[cfg(test)]
mod tests;
