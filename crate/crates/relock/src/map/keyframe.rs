//! Keyframes: pose, features, descriptors, and landmark associations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Se3};

use super::types::{Descriptor, KeyFrameId, KeyPoint, MapPointId};

/// A camera frame stored in the map.
///
/// `keypoints`, `descriptors`, and `associations` are index-aligned; a
/// `Some` association means the feature observes that map point, and the
/// point's observation set lists this keyframe at the same index
/// (bidirectional consistency, enforced by the map operations).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyFrame {
    pub id: KeyFrameId,
    pub pose: Se3,
    pub intrinsics: CameraIntrinsics,
    pub keypoints: Vec<KeyPoint>,
    pub descriptors: Vec<Descriptor>,
    pub associations: Vec<Option<MapPointId>>,
    pub word_ids: BTreeSet<u16>,
}

impl KeyFrame {
    pub fn feature_count(&self) -> usize {
        self.keypoints.len()
    }

    /// Feature indices currently bound to the given map point.
    pub fn features_of(&self, point: MapPointId) -> Vec<usize> {
        self.associations
            .iter()
            .enumerate()
            .filter_map(|(i, a)| (*a == Some(point)).then_some(i))
            .collect()
    }

    pub fn associated_points(&self) -> impl Iterator<Item = MapPointId> + '_ {
        self.associations.iter().filter_map(|a| *a)
    }
}
