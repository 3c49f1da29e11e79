//! Batched data-parallel projection search.
//!
//! Each map point is handled independently: transform, cull, predict the
//! octave from distance, gather candidate features within a scale-aware
//! radius, and pick the minimal-Hamming candidate. Per-feature conflicts
//! are resolved deterministically (lower Hamming, then lower map-point
//! id), so the result is a pure function of the inputs regardless of
//! worker count.

use serde::{Deserialize, Serialize};

use crate::geometry::{Sim3, Vec3, DEPTH_EPSILON};
use crate::map::{Descriptor, KeyFrameSnapshot, MapPoint, MapPointId};
use crate::runtime::Runtime;

use super::radius::features_in_radius;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSearchParams {
    /// Search radius in pixels at octave 0; scaled by `scale_factor^octave`.
    pub radius_multiplier: f64,
    pub max_hamming: u32,
    pub octave_tolerance: u8,
    pub check_view_angle: bool,
    pub check_distance_range: bool,
    /// Pyramid scale factor between octaves.
    pub scale_factor: f64,
    pub num_octaves: u8,
}

impl ProjectionSearchParams {
    /// Strict variant used before Sim3 optimization and for verification.
    pub fn narrow() -> Self {
        Self {
            radius_multiplier: 2.5,
            max_hamming: 50,
            octave_tolerance: 1,
            check_view_angle: true,
            check_distance_range: true,
            scale_factor: 1.2,
            num_octaves: 8,
        }
    }

    /// Permissive variant run concurrently at the pre-optimization pose.
    pub fn wide() -> Self {
        Self {
            radius_multiplier: 7.5,
            max_hamming: 100,
            ..Self::narrow()
        }
    }

    /// Fusion search: narrow descriptor gate, intermediate radius.
    pub fn fusion() -> Self {
        Self {
            radius_multiplier: 4.0,
            ..Self::narrow()
        }
    }

    pub fn radius_at(&self, octave: u8) -> f64 {
        self.radius_multiplier * self.scale_factor.powi(octave as i32)
    }
}

/// Immutable per-point data captured during a frozen read phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointView {
    pub id: MapPointId,
    pub position: Vec3,
    pub normal: Vec3,
    pub d_min: f64,
    pub d_max: f64,
    pub descriptor: Descriptor,
}

impl PointView {
    pub fn from_point(p: &MapPoint) -> Self {
        Self {
            id: p.id,
            position: p.position,
            normal: p.normal,
            d_min: p.d_min,
            d_max: p.d_max,
            descriptor: p.descriptor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub point_id: MapPointId,
    pub feature: usize,
    pub hamming: u32,
}

/// Independent single-point kernel: all culls, octave prediction, radius
/// gather, minimal-Hamming selection (ties to the lowest feature index).
pub fn match_point(
    snapshot: &KeyFrameSnapshot,
    pose: &Sim3,
    point: &PointView,
    params: &ProjectionSearchParams,
) -> Option<(usize, u32)> {
    let p_cam = pose.apply(point.position);
    if p_cam.z <= DEPTH_EPSILON {
        return None;
    }
    let [u, v] = snapshot.intrinsics.project(p_cam)?;

    // metric camera-to-point distance: |p_cam| = scale * |p_world - C|
    let dist = p_cam.norm() / pose.scale;
    if params.check_distance_range && (dist < 0.8 * point.d_min || dist > 1.2 * point.d_max) {
        return None;
    }
    if params.check_view_angle {
        let center = pose.camera_center();
        let view = (point.position - center).normalized();
        if view.dot(point.normal) < 0.5 {
            return None;
        }
    }

    let max_octave = params.num_octaves.saturating_sub(1) as i32;
    let predicted = ((point.d_max / dist).ln() / params.scale_factor.ln())
        .round()
        .clamp(0.0, max_octave as f64) as i32;
    let tol = params.octave_tolerance as i32;
    let radius = params.radius_at(predicted as u8);

    let mut best: Option<(usize, u32)> = None;
    for feature in features_in_radius(snapshot, u, v, radius, (predicted - tol, predicted + tol)) {
        let d = super::hamming(&point.descriptor, &snapshot.descriptors[feature]);
        if d <= params.max_hamming && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((feature, d));
        }
    }
    best
}

/// Batched projection search over a frozen point set.
///
/// Per-feature conflicts keep the lower Hamming distance, ties going to
/// the lower map-point id; output is sorted by map-point id. Identical
/// inputs give bit-identical output for any worker count.
pub fn projection_search(
    runtime: &Runtime,
    snapshot: &KeyFrameSnapshot,
    pose: &Sim3,
    points: &[PointView],
    params: &ProjectionSearchParams,
) -> Vec<MatchResult> {
    let raw = runtime
        .run_batch(points.len(), |i| match_point(snapshot, pose, &points[i], params))
        .expect("projection kernel is panic-free");
    resolve_conflicts(points, &raw)
}

/// Deterministic one-result-per-feature resolution shared by the batched
/// and triple-search paths.
pub(crate) fn resolve_conflicts(
    points: &[PointView],
    raw: &[Option<(usize, u32)>],
) -> Vec<MatchResult> {
    use std::collections::BTreeMap;
    let mut per_feature: BTreeMap<usize, (u32, MapPointId)> = BTreeMap::new();
    for (point, hit) in points.iter().zip(raw) {
        let Some((feature, dist)) = hit else { continue };
        match per_feature.get(feature) {
            Some(&(best_dist, best_id))
                if (best_dist, best_id) <= (*dist, point.id) => {}
            _ => {
                per_feature.insert(*feature, (*dist, point.id));
            }
        }
    }
    let mut out: Vec<MatchResult> = per_feature
        .into_iter()
        .map(|(feature, (hamming, point_id))| MatchResult {
            point_id,
            feature,
            hamming,
        })
        .collect();
    out.sort_unstable_by_key(|m| (m.point_id, m.feature));
    out
}
