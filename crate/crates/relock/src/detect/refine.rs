//! Sim(3) refinement with a concurrent narrow/wide search pair.
//!
//! The narrow search (PS2a) and the wide search (PS2b) read the same
//! frozen snapshot and point batch at the seed pose and run as one task
//! pair. Narrow matches drive a Gauss-Newton minimization of squared
//! reprojection error over the Sim(3); wide matches are retained and
//! post-filtered by reprojection under the optimized transform. The wide
//! task needs no output from the narrow one, which is what makes the pair
//! schedule-free: concurrent and sequential execution are bit-identical.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{Sim3, Sim3Tangent, Vec3, DEPTH_EPSILON};
use crate::map::KeyFrameSnapshot;
use crate::matching::{projection_search, MatchResult, PointView, ProjectionSearchParams};
use crate::posegraph::dual::Dual7;
use crate::posegraph::Ldlt;
use crate::runtime::{PairError, Runtime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub narrow: ProjectionSearchParams,
    pub wide: ProjectionSearchParams,
    /// Huber loss width on the reprojection residual, in pixels.
    pub huber_delta: f64,
    pub max_iterations: usize,
    pub step_tol: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            narrow: ProjectionSearchParams::narrow(),
            wide: ProjectionSearchParams::wide(),
            huber_delta: 2.45,
            max_iterations: 10,
            step_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    /// Optimized `S_cw` for the current keyframe.
    pub transform: Sim3,
    /// Narrow matches surviving reprojection under the optimized pose.
    pub narrow: Vec<MatchResult>,
    /// Wide matches post-filtered the same way at the wide radius.
    pub wide: Vec<MatchResult>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("optimization diverged: cost increased for 3 consecutive iterations (at iteration {iterations})")]
    Diverged { iterations: usize },
    #[error(transparent)]
    Pair(#[from] PairError),
}

/// Refine `s0` (an `S_cw` estimate for the current keyframe) against the
/// frozen window points. Returns the optimized transform with the
/// post-filtered narrow and wide match sets.
pub fn refine_sim3(
    runtime: &Runtime,
    snapshot: &KeyFrameSnapshot,
    points: &[PointView],
    s0: &Sim3,
    config: &RefineConfig,
) -> Result<Refinement, RefineError> {
    // exactly one task pair; each side runs its search sequentially
    let seq = runtime.with_workers(1);
    let (narrow_raw, wide_raw) = runtime.run_pair(
        || projection_search(&seq, snapshot, s0, points, &config.narrow),
        || projection_search(&seq, snapshot, s0, points, &config.wide),
    )?;

    let (transform, iterations) =
        gauss_newton(snapshot, points, &narrow_raw, s0, config)?;

    let narrow = filter_by_reprojection(snapshot, points, &narrow_raw, &transform, &config.narrow);
    let wide = filter_by_reprojection(snapshot, points, &wide_raw, &transform, &config.wide);
    Ok(Refinement {
        transform,
        narrow,
        wide,
        iterations,
    })
}

fn point_by_id(points: &[PointView], id: crate::map::MapPointId) -> &PointView {
    let idx = points
        .binary_search_by_key(&id, |p| p.id)
        .expect("matches reference the frozen point batch");
    &points[idx]
}

/// Gauss-Newton over the Sim(3) tangent with Huber-weighted reprojection
/// residuals; left-multiplicative updates.
fn gauss_newton(
    snapshot: &KeyFrameSnapshot,
    points: &[PointView],
    matches: &[MatchResult],
    s0: &Sim3,
    config: &RefineConfig,
) -> Result<(Sim3, usize), RefineError> {
    if matches.len() < 3 {
        return Ok((*s0, 0));
    }
    let mut current = *s0;
    let mut prev_cost = f64::INFINITY;
    let mut increases = 0usize;

    for iteration in 0..config.max_iterations {
        let mut h = DMatrix::<f64>::zeros(7, 7);
        let mut g = DVector::<f64>::zeros(7);
        let mut cost = 0.0;

        for m in matches {
            let point = point_by_id(points, m.point_id);
            let (zu, zv) = (snapshot.us[m.feature], snapshot.vs[m.feature]);

            // dual evaluation of the projection under exp(delta) * current
            let delta = Sim3Tangent::<Dual7> {
                rho: Vec3::new(
                    Dual7::seeded(0.0, 0),
                    Dual7::seeded(0.0, 1),
                    Dual7::seeded(0.0, 2),
                ),
                phi: Vec3::new(
                    Dual7::seeded(0.0, 3),
                    Dual7::seeded(0.0, 4),
                    Dual7::seeded(0.0, 5),
                ),
                sigma: Dual7::seeded(0.0, 6),
            };
            let pose = Sim3::exp(&delta).compose(&Sim3::<Dual7>::lift(current));
            let p_cam = pose.apply(Vec3::lift(point.position));
            if p_cam.z.re <= DEPTH_EPSILON {
                continue; // left the frustum mid-optimization
            }
            let [pu, pv] = snapshot.intrinsics.project_unchecked(p_cam);
            let ru = Dual7::constant(zu) - pu;
            let rv = Dual7::constant(zv) - pv;

            let norm = (ru.re * ru.re + rv.re * rv.re).sqrt();
            let weight = if norm <= config.huber_delta {
                1.0
            } else {
                config.huber_delta / norm
            };
            cost += weight * (ru.re * ru.re + rv.re * rv.re);

            for r in 0..7 {
                // ru.eps is already d(residual)/d(delta); H = J^T J, g = J^T r
                g[r] += weight * (ru.eps[r] * ru.re + rv.eps[r] * rv.re);
                for c in 0..7 {
                    h[(r, c)] += weight * (ru.eps[r] * ru.eps[c] + rv.eps[r] * rv.eps[c]);
                }
            }
        }

        if cost > prev_cost {
            increases += 1;
            if increases >= 3 {
                return Err(RefineError::Diverged { iterations: iteration });
            }
        } else {
            increases = 0;
        }
        prev_cost = cost;

        // small Tikhonov floor keeps the 7x7 solvable with few matches
        for k in 0..7 {
            h[(k, k)] += 1e-12;
        }
        let Ok(factor) = Ldlt::factor(&h) else {
            return Ok((current, iteration));
        };
        let delta = factor.solve(&(-&g));
        let step = Sim3Tangent::from_array([
            delta[0], delta[1], delta[2], delta[3], delta[4], delta[5], delta[6],
        ]);
        if step.norm() < config.step_tol {
            return Ok((current, iteration));
        }
        current = Sim3::exp(&step).compose(&current);
    }
    Ok((current, config.max_iterations))
}

/// Keep matches whose reprojection under `pose` lands within the params'
/// per-octave radius of the matched feature.
fn filter_by_reprojection(
    snapshot: &KeyFrameSnapshot,
    points: &[PointView],
    matches: &[MatchResult],
    pose: &Sim3,
    params: &ProjectionSearchParams,
) -> Vec<MatchResult> {
    matches
        .iter()
        .filter(|m| {
            let point = point_by_id(points, m.point_id);
            let Some([u, v]) = snapshot.intrinsics.project(pose.apply(point.position)) else {
                return false;
            };
            let radius = params.radius_at(snapshot.octaves[m.feature]);
            let du = u - snapshot.us[m.feature];
            let dv = v - snapshot.vs[m.feature];
            du * du + dv * dv <= radius * radius
        })
        .copied()
        .collect()
}
