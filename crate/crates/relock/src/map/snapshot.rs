//! Immutable flat-packed keyframe snapshots.
//!
//! Every parallel stage reads keyframe content through a snapshot: a
//! frozen, flat copy of the keypoints, octaves, descriptors, associations,
//! pose, and intrinsics, plus a grid index for radius queries. A snapshot
//! is restaged (new version) only when the owning keyframe's pose or
//! associations change; repacking reuses a per-shape staging buffer so the
//! steady-state allocation rate is zero.

use std::sync::Arc;

use crate::geometry::{CameraIntrinsics, Se3};
use crate::runtime::BufferPool;

use super::keyframe::KeyFrame;
use super::types::{Descriptor, KeyFrameId, MapPointId};

/// Grid geometry for sub-linear radius candidate retrieval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridShape {
    pub cols: u32,
    pub rows: u32,
}

impl Default for GridShape {
    fn default() -> Self {
        Self { cols: 64, rows: 48 }
    }
}

/// Cell -> feature indices, CSR layout, cells row-major.
#[derive(Clone, Debug)]
pub struct GridIndex {
    shape: GridShape,
    cell_w: f64,
    cell_h: f64,
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl GridIndex {
    fn build(shape: GridShape, intrinsics: &CameraIntrinsics, us: &[f64], vs: &[f64]) -> Self {
        let cols = shape.cols as usize;
        let rows = shape.rows as usize;
        let cell_w = intrinsics.width as f64 / shape.cols as f64;
        let cell_h = intrinsics.height as f64 / shape.rows as f64;
        let mut counts = vec![0u32; cols * rows];
        let cell_of = |u: f64, v: f64| {
            let cx = ((u / cell_w) as usize).min(cols - 1);
            let cy = ((v / cell_h) as usize).min(rows - 1);
            cy * cols + cx
        };
        for i in 0..us.len() {
            counts[cell_of(us[i], vs[i])] += 1;
        }
        let mut offsets = vec![0u32; cols * rows + 1];
        for c in 0..cols * rows {
            offsets[c + 1] = offsets[c] + counts[c];
        }
        let mut cursor = offsets.clone();
        let mut items = vec![0u32; us.len()];
        for i in 0..us.len() {
            let c = cell_of(us[i], vs[i]);
            items[cursor[c] as usize] = i as u32;
            cursor[c] += 1;
        }
        Self {
            shape,
            cell_w,
            cell_h,
            offsets,
            items,
        }
    }

    /// Feature indices in every cell overlapping the axis-aligned box of a
    /// radius-`r` disc around `(u, v)`. Exact distance filtering is the
    /// caller's job.
    pub fn candidates(&self, u: f64, v: f64, r: f64) -> Vec<u32> {
        let cols = self.shape.cols as i64;
        let rows = self.shape.rows as i64;
        let cx0 = (((u - r) / self.cell_w).floor() as i64).clamp(0, cols - 1);
        let cx1 = (((u + r) / self.cell_w).floor() as i64).clamp(0, cols - 1);
        let cy0 = (((v - r) / self.cell_h).floor() as i64).clamp(0, rows - 1);
        let cy1 = (((v + r) / self.cell_h).floor() as i64).clamp(0, rows - 1);
        let mut out = Vec::new();
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                let c = (cy * cols + cx) as usize;
                let lo = self.offsets[c] as usize;
                let hi = self.offsets[c + 1] as usize;
                out.extend_from_slice(&self.items[lo..hi]);
            }
        }
        out
    }
}

/// Frozen flat copy of one keyframe, shared read-only across workers.
#[derive(Clone, Debug)]
pub struct KeyFrameSnapshot {
    pub kf_id: KeyFrameId,
    pub version: u64,
    pub pose: Se3,
    pub intrinsics: CameraIntrinsics,
    pub us: Vec<f64>,
    pub vs: Vec<f64>,
    pub octaves: Vec<u8>,
    pub descriptors: Vec<Descriptor>,
    pub associations: Vec<Option<MapPointId>>,
    pub grid: GridIndex,
}

impl KeyFrameSnapshot {
    pub fn feature_count(&self) -> usize {
        self.us.len()
    }
}

struct Entry {
    snapshot: Arc<KeyFrameSnapshot>,
    dirty: bool,
}

/// Snapshot cache with version counters and reusable staging buffers.
#[derive(Default)]
pub struct SnapshotStore {
    entries: std::collections::BTreeMap<KeyFrameId, Entry>,
    pool: BufferPool,
    repacks: u64,
    grid_shape: GridShape,
}

impl SnapshotStore {
    pub fn new(grid_shape: GridShape) -> Self {
        Self {
            grid_shape,
            ..Default::default()
        }
    }

    /// Stage a newly inserted keyframe (exactly once per insert).
    pub fn stage_new(&mut self, kf: &KeyFrame) {
        let snapshot = self.pack(kf, 1);
        self.entries.insert(
            kf.id,
            Entry {
                snapshot: Arc::new(snapshot),
                dirty: false,
            },
        );
    }

    /// Mark a keyframe as needing a restage (pose or association change).
    pub fn mark_dirty(&mut self, kf: KeyFrameId) {
        if let Some(e) = self.entries.get_mut(&kf) {
            e.dirty = true;
        }
    }

    /// Current snapshot; repacks only when the content is stale.
    pub fn snapshot(&mut self, kf: &KeyFrame) -> Arc<KeyFrameSnapshot> {
        let (needs_repack, next_version) = match self.entries.get(&kf.id) {
            Some(e) if !e.dirty => return Arc::clone(&e.snapshot),
            Some(e) => (true, e.snapshot.version + 1),
            None => (true, 1),
        };
        debug_assert!(needs_repack);
        let snapshot = Arc::new(self.pack(kf, next_version));
        self.entries.insert(
            kf.id,
            Entry {
                snapshot: Arc::clone(&snapshot),
                dirty: false,
            },
        );
        snapshot
    }

    pub fn repack_count(&self) -> u64 {
        self.repacks
    }

    pub fn staging_counters(&self) -> crate::runtime::staging::StagingCounters {
        self.pool.counters()
    }

    /// Flat-pack keyframe content through the staging buffer for this
    /// shape, then build the snapshot from the staged bytes.
    fn pack(&mut self, kf: &KeyFrame, version: u64) -> KeyFrameSnapshot {
        self.repacks += 1;
        let n = kf.feature_count();
        // coords (2 * 8) + octave (1) + descriptor (32) + association (9)
        let payload_len = n * (16 + 1 + 32 + 9);
        let shape_key = format!("keyframe-snapshot:{payload_len}");
        let buffer = self.pool.buffer(&shape_key);
        let staged = buffer.stage_with(payload_len, |buf| {
            for kp in &kf.keypoints {
                buf.extend_from_slice(&kp.u.to_le_bytes());
                buf.extend_from_slice(&kp.v.to_le_bytes());
            }
            for kp in &kf.keypoints {
                buf.push(kp.octave);
            }
            for d in &kf.descriptors {
                buf.extend_from_slice(&d.0);
            }
            for a in &kf.associations {
                match a {
                    Some(id) => {
                        buf.push(1);
                        buf.extend_from_slice(&id.0.to_le_bytes());
                    }
                    None => {
                        buf.push(0);
                        buf.extend_from_slice(&0u64.to_le_bytes());
                    }
                }
            }
        });

        let mut us = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        let mut cursor = 0usize;
        for _ in 0..n {
            us.push(f64::from_le_bytes(
                staged[cursor..cursor + 8].try_into().unwrap(),
            ));
            vs.push(f64::from_le_bytes(
                staged[cursor + 8..cursor + 16].try_into().unwrap(),
            ));
            cursor += 16;
        }
        let octaves = staged[cursor..cursor + n].to_vec();
        cursor += n;
        let mut descriptors = Vec::with_capacity(n);
        for _ in 0..n {
            descriptors.push(Descriptor(staged[cursor..cursor + 32].try_into().unwrap()));
            cursor += 32;
        }
        let mut associations = Vec::with_capacity(n);
        for _ in 0..n {
            let tag = staged[cursor];
            let raw = u64::from_le_bytes(staged[cursor + 1..cursor + 9].try_into().unwrap());
            associations.push((tag == 1).then_some(MapPointId(raw)));
            cursor += 9;
        }
        debug_assert_eq!(cursor, payload_len);

        let grid = GridIndex::build(self.grid_shape, &kf.intrinsics, &us, &vs);
        KeyFrameSnapshot {
            kf_id: kf.id,
            version,
            pose: kf.pose,
            intrinsics: kf.intrinsics,
            us,
            vs,
            octaves,
            descriptors,
            associations,
            grid,
        }
    }
}

impl std::fmt::Debug for SnapshotStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SnapshotStore")
            .field("entries", &self.entries.len())
            .field("repacks", &self.repacks)
            .finish()
    }
}
