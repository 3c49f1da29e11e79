//! Grid-accelerated radius lookup over snapshot features.

use crate::map::KeyFrameSnapshot;

/// Feature indices within Euclidean pixel distance `r` of `(u, v)` whose
/// octave lies in `octave_range` (inclusive), in ascending index order.
/// Exactly equivalent to a linear scan over all features.
pub fn features_in_radius(
    snapshot: &KeyFrameSnapshot,
    u: f64,
    v: f64,
    r: f64,
    octave_range: (i32, i32),
) -> Vec<usize> {
    debug_assert!(r > 0.0, "radius must be positive");
    let r_sq = r * r;
    let mut out: Vec<usize> = snapshot
        .grid
        .candidates(u, v, r)
        .into_iter()
        .map(|i| i as usize)
        .filter(|&i| {
            let du = snapshot.us[i] - u;
            let dv = snapshot.vs[i] - v;
            let octave = snapshot.octaves[i] as i32;
            du * du + dv * dv <= r_sq && octave >= octave_range.0 && octave <= octave_range.1
        })
        .collect();
    out.sort_unstable();
    out
}

/// Linear-scan reference used by the oracles (and by tests of the grid
/// path); kept separate from the grid implementation on purpose.
pub fn features_in_radius_scan(
    snapshot: &KeyFrameSnapshot,
    u: f64,
    v: f64,
    r: f64,
    octave_range: (i32, i32),
) -> Vec<usize> {
    let r_sq = r * r;
    (0..snapshot.feature_count())
        .filter(|&i| {
            let du = snapshot.us[i] - u;
            let dv = snapshot.vs[i] - v;
            let octave = snapshot.octaves[i] as i32;
            du * du + dv * dv <= r_sq && octave >= octave_range.0 && octave <= octave_range.1
        })
        .collect()
}
