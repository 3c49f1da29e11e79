//! Map points (3D landmarks).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

use super::types::{Descriptor, KeyFrameId, MapPointId};

/// A 3D landmark with its representative descriptor and scale-invariance
/// distance range.
///
/// A replaced point keeps a forwarding id and holds no observations;
/// stale references resolve through the forwarding chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: MapPointId,
    pub position: Vec3,
    /// Mean viewing direction, unit length.
    pub normal: Vec3,
    pub d_min: f64,
    pub d_max: f64,
    pub descriptor: Descriptor,
    /// keyframe id -> feature index observing this point.
    pub observations: BTreeMap<KeyFrameId, usize>,
    /// First keyframe that observed the point; anchors pose corrections.
    pub reference_kf: Option<KeyFrameId>,
    pub replaced_by: Option<MapPointId>,
}

impl MapPoint {
    pub fn new(
        id: MapPointId,
        position: Vec3,
        normal: Vec3,
        d_min: f64,
        d_max: f64,
        descriptor: Descriptor,
    ) -> Self {
        assert!(
            d_min > 0.0 && d_min <= d_max,
            "scale range must satisfy 0 < d_min <= d_max"
        );
        Self {
            id,
            position,
            normal,
            d_min,
            d_max,
            descriptor,
            observations: BTreeMap::new(),
            reference_kf: None,
            replaced_by: None,
        }
    }

    pub fn is_replaced(&self) -> bool {
        self.replaced_by.is_some()
    }

    pub fn observation_count(&self) -> usize {
        self.observations.len()
    }
}
