//! Levenberg-Marquardt over the essential graph.
//!
//! Residuals and Jacobians are evaluated data-parallel per edge; the
//! normal equations are accumulated sequentially in ascending edge order
//! and solved by dense LDLT, so the whole optimization is bit-identical
//! for any worker count.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, Sim3, Sim3Tangent};
use crate::map::KeyFrameId;
use crate::runtime::Runtime;

use super::ldlt::Ldlt;
use super::residual::{edge_jacobians, edge_residual};
use super::{EssentialProblem, PoseGraphEdge};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub step_norm_tol: f64,
    pub chi2_rel_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            lambda_init: 1e-4,
            lambda_min: 1e-12,
            lambda_max: 1e8,
            step_norm_tol: 1e-8,
            chi2_rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub chi2: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    /// Optimized estimate per vertex (fixed vertices unchanged).
    pub vertices: BTreeMap<KeyFrameId, Sim3>,
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("pose graph needs at least one fixed vertex")]
    NoFixedVertex,
    #[error("residual left the principal domain: {0}")]
    Residual(#[from] GeometryError),
    #[error("normal equations not positive definite at lambda {lambda}: {source}")]
    Solver {
        lambda: f64,
        source: super::ldlt::LdltError,
    },
}

pub struct EdgeEval {
    e: [f64; 7],
    chi2: f64,
    j_i: Option<[[f64; 7]; 7]>,
    j_j: Option<[[f64; 7]; 7]>,
}

/// The assembled reduced system `H = J^T J`, `b = J^T e` over free
/// vertices, with the total chi2 at the linearization point.
pub struct NormalEquations {
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    pub chi2: f64,
}

/// Evaluate residuals (and optionally Jacobians) for every edge, in
/// parallel; the output order is the edge order.
fn evaluate_edges(
    runtime: &Runtime,
    edges: &[PoseGraphEdge],
    estimates: &BTreeMap<KeyFrameId, Sim3>,
    free: &BTreeMap<KeyFrameId, usize>,
    with_jacobians: bool,
) -> Result<Vec<EdgeEval>, OptimizeError> {
    let results = runtime
        .run_batch(edges.len(), |idx| {
            let edge = &edges[idx];
            let s_iw = estimates[&edge.i];
            let s_jw = estimates[&edge.j];
            let e = edge_residual(&edge.measurement, &s_iw, &s_jw)?;
            let chi2 = e.iter().map(|c| c * c).sum();
            let (j_i, j_j) = if with_jacobians {
                let (a, b) = edge_jacobians(&edge.measurement, &s_iw, &s_jw)?;
                (
                    free.contains_key(&edge.i).then_some(a),
                    free.contains_key(&edge.j).then_some(b),
                )
            } else {
                (None, None)
            };
            Ok(EdgeEval { e, chi2, j_i, j_j })
        })
        .expect("edge kernel is panic-free");
    results
        .into_iter()
        .collect::<Result<Vec<_>, GeometryError>>()
        .map_err(OptimizeError::from)
}

/// Deterministic accumulation of H and b: per-edge blocks summed in
/// ascending edge order. Fixed vertices are excluded from the reduced
/// system.
pub fn accumulate_normal_equations(
    edges: &[PoseGraphEdge],
    evals: &[EdgeEval],
    free: &BTreeMap<KeyFrameId, usize>,
) -> NormalEquations {
    let n = free.len() * 7;
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let mut chi2 = 0.0;
    for (edge, eval) in edges.iter().zip(evals) {
        chi2 += eval.chi2;
        let bi = free.get(&edge.i).map(|k| k * 7);
        let bj = free.get(&edge.j).map(|k| k * 7);
        if let (Some(bi), Some(j_i)) = (bi, &eval.j_i) {
            add_block(&mut h, bi, bi, j_i, j_i);
            add_grad(&mut b, bi, j_i, &eval.e);
        }
        if let (Some(bj), Some(j_j)) = (bj, &eval.j_j) {
            add_block(&mut h, bj, bj, j_j, j_j);
            add_grad(&mut b, bj, j_j, &eval.e);
        }
        if let (Some(bi), Some(bj), Some(j_i), Some(j_j)) = (bi, bj, &eval.j_i, &eval.j_j) {
            add_block(&mut h, bi, bj, j_i, j_j);
            add_block(&mut h, bj, bi, j_j, j_i);
        }
    }
    NormalEquations { h, b, chi2 }
}

/// `H[row.., col..] += A^T B` for 7x7 blocks.
fn add_block(h: &mut DMatrix<f64>, row: usize, col: usize, a: &[[f64; 7]; 7], b: &[[f64; 7]; 7]) {
    for r in 0..7 {
        for c in 0..7 {
            let mut acc = 0.0;
            for k in 0..7 {
                acc += a[k][r] * b[k][c];
            }
            h[(row + r, col + c)] += acc;
        }
    }
}

/// `b[row..] += J^T e`.
fn add_grad(b: &mut DVector<f64>, row: usize, j: &[[f64; 7]; 7], e: &[f64; 7]) {
    for c in 0..7 {
        let mut acc = 0.0;
        for k in 0..7 {
            acc += j[k][c] * e[k];
        }
        b[row + c] += acc;
    }
}

fn total_chi2(evals: &[EdgeEval]) -> f64 {
    evals.iter().map(|e| e.chi2).sum()
}

/// One full residual/Jacobian evaluation plus accumulation — the
/// linearization stage of an LM iteration, exposed for benchmarking.
pub fn build_normal_equations(
    edges: &[PoseGraphEdge],
    estimates: &BTreeMap<KeyFrameId, Sim3>,
    free: &BTreeMap<KeyFrameId, usize>,
    runtime: &Runtime,
) -> Result<NormalEquations, OptimizeError> {
    let evals = evaluate_edges(runtime, edges, estimates, free, true)?;
    Ok(accumulate_normal_equations(edges, &evals, free))
}

/// Run Levenberg-Marquardt. Damping multiplies the diagonal of H
/// (scale-aware across the mixed translation/rotation/scale tangent);
/// accepted steps strictly decrease chi2.
pub fn optimize(
    problem: &EssentialProblem,
    runtime: &Runtime,
    config: &LmConfig,
) -> Result<OptimizeOutcome, OptimizeError> {
    if !problem.vertices.iter().any(|v| v.fixed) {
        return Err(OptimizeError::NoFixedVertex);
    }
    let mut estimates: BTreeMap<KeyFrameId, Sim3> = problem
        .vertices
        .iter()
        .map(|v| (v.id, v.estimate))
        .collect();
    let free: BTreeMap<KeyFrameId, usize> = problem
        .vertices
        .iter()
        .filter(|v| !v.fixed)
        .enumerate()
        .map(|(k, v)| (v.id, k))
        .collect();

    let mut trace = Vec::new();
    let mut evals = evaluate_edges(runtime, &problem.edges, &estimates, &free, true)?;
    let initial_chi2 = total_chi2(&evals);
    let mut chi2 = initial_chi2;
    let mut lambda = config.lambda_init;

    let mut iteration = 0;
    while iteration < config.max_iterations {
        let normal = accumulate_normal_equations(&problem.edges, &evals, &free);
        if normal.b.norm() == 0.0 {
            break; // exact optimum (all residuals zero or perfectly balanced)
        }

        // damp: H + lambda * diag(H)
        let mut damped = normal.h.clone();
        for k in 0..damped.nrows() {
            damped[(k, k)] += lambda * normal.h[(k, k)];
        }
        let delta = match Ldlt::factor(&damped) {
            Ok(f) => f.solve(&(-&normal.b)),
            Err(source) => {
                lambda *= 4.0;
                if lambda > config.lambda_max {
                    return Err(OptimizeError::Solver { lambda, source });
                }
                iteration += 1;
                continue;
            }
        };
        let step_norm = delta.norm();
        if step_norm < config.step_norm_tol {
            break;
        }

        // tentative update of free vertices
        let mut candidate = estimates.clone();
        for (id, &slot) in &free {
            let start = slot * 7;
            let tangent = Sim3Tangent::from_array([
                delta[start],
                delta[start + 1],
                delta[start + 2],
                delta[start + 3],
                delta[start + 4],
                delta[start + 5],
                delta[start + 6],
            ]);
            let cur = candidate[id];
            candidate.insert(*id, Sim3::exp(&tangent).compose(&cur));
        }

        let cand_evals = evaluate_edges(runtime, &problem.edges, &candidate, &free, true)?;
        let cand_chi2 = total_chi2(&cand_evals);
        let accepted = cand_chi2 < chi2;
        trace.push(IterationRecord {
            iteration,
            chi2: if accepted { cand_chi2 } else { chi2 },
            lambda,
            step_norm,
            accepted,
        });
        iteration += 1;

        if accepted {
            let rel_drop = (chi2 - cand_chi2) / chi2.max(f64::MIN_POSITIVE);
            estimates = candidate;
            evals = cand_evals;
            chi2 = cand_chi2;
            lambda = (lambda * 0.5).max(config.lambda_min);
            if rel_drop < config.chi2_rel_tol {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > config.lambda_max {
                break;
            }
        }
    }

    Ok(OptimizeOutcome {
        vertices: estimates,
        initial_chi2,
        final_chi2: chi2,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Quat, Vec3};
    use crate::posegraph::{EdgeKind, EssentialProblem, PoseGraphVertex};

    fn vertex(id: u64, estimate: Sim3, fixed: bool) -> PoseGraphVertex {
        PoseGraphVertex {
            id: KeyFrameId(id),
            estimate,
            fixed,
        }
    }

    fn edge(i: u64, j: u64, measurement: Sim3) -> PoseGraphEdge {
        PoseGraphEdge {
            i: KeyFrameId(i),
            j: KeyFrameId(j),
            measurement,
            kind: EdgeKind::Tree,
        }
    }

    fn chain_problem(n: usize, perturb: bool) -> EssentialProblem {
        // consistent chain of poses, optionally with perturbed estimates
        let mut poses = vec![Sim3::identity()];
        for k in 1..n {
            let step = Sim3::new(
                1.0 + 0.05 * (k as f64 % 3.0),
                Quat::exp_so3(Vec3::new(0.02 * k as f64, -0.03, 0.01)),
                Vec3::new(0.5, 0.1 * k as f64, -0.2),
            );
            let prev = poses[k - 1];
            poses.push(step.compose(&prev));
        }
        let mut vertices = Vec::new();
        for (k, pose) in poses.iter().enumerate() {
            let estimate = if perturb && k > 0 {
                let noise = crate::geometry::Sim3Tangent::new(
                    Vec3::new(0.05, -0.03, 0.02),
                    Vec3::new(0.01, 0.02, -0.015),
                    0.01,
                );
                Sim3::exp(&noise).compose(pose)
            } else {
                *pose
            };
            vertices.push(vertex(k as u64, estimate, k == 0));
        }
        let mut edges = Vec::new();
        for k in 1..n {
            edges.push(edge(k as u64, k as u64 - 1, poses[k].compose(&poses[k - 1].inverse())));
        }
        EssentialProblem { vertices, edges }
    }

    #[test]
    fn zero_residual_problem_is_a_noop() {
        let problem = chain_problem(6, false);
        let outcome = optimize(&problem, &Runtime::new(2), &LmConfig::default()).unwrap();
        assert_eq!(outcome.trace.iter().filter(|r| r.accepted).count(), 0);
        assert!(outcome.final_chi2 < 1e-24);
        for v in &problem.vertices {
            let opt = outcome.vertices[&v.id];
            assert!((opt.translation - v.estimate.translation).norm() < 1e-12);
            assert!((opt.scale - v.estimate.scale).abs() < 1e-12);
        }
    }

    #[test]
    fn single_edge_converges_to_closed_form() {
        // one free vertex, one fixed, an inconsistent measurement: the free
        // vertex must move to satisfy the edge exactly
        let fixed_pose = Sim3::identity();
        let measurement = Sim3::new(
            1.4,
            Quat::exp_so3(Vec3::new(0.2, -0.1, 0.3)),
            Vec3::new(1.0, -0.5, 2.0),
        );
        // residual log(S_ij * S_jw * S_iw^-1) with j fixed at identity:
        // solved exactly by S_iw = measurement
        let problem = EssentialProblem {
            vertices: vec![
                vertex(0, fixed_pose, true),
                vertex(1, Sim3::identity(), false),
            ],
            edges: vec![edge(1, 0, measurement)],
        };
        let outcome = optimize(&problem, &Runtime::new(1), &LmConfig::default()).unwrap();
        assert!(outcome.final_chi2 < 1e-18, "chi2 {}", outcome.final_chi2);
        let solved = outcome.vertices[&KeyFrameId(1)];
        assert!((solved.translation - measurement.translation).norm() < 1e-9);
        assert!((solved.scale - measurement.scale).abs() < 1e-9);
        let e = edge_residual(&measurement, &solved, &fixed_pose).unwrap();
        assert!(e.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn accepted_chi2_strictly_decreases_and_converges() {
        let problem = chain_problem(12, true);
        let outcome = optimize(&problem, &Runtime::new(2), &LmConfig::default()).unwrap();
        assert!(outcome.final_chi2 < 1e-12 * outcome.initial_chi2.max(1.0));
        let accepted: Vec<f64> = outcome
            .trace
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.chi2)
            .collect();
        assert!(!accepted.is_empty());
        for pair in accepted.windows(2) {
            assert!(pair[1] < pair[0], "chi2 must strictly decrease");
        }
        for r in &outcome.trace {
            assert!(r.lambda >= 1e-12 && r.lambda <= 1e8);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let problem = chain_problem(15, true);
        let base = optimize(&problem, &Runtime::new(1), &LmConfig::default()).unwrap();
        for workers in [2, 4, 8] {
            let other = optimize(&problem, &Runtime::new(workers), &LmConfig::default()).unwrap();
            assert_eq!(base.trace.len(), other.trace.len());
            for (a, b) in base.trace.iter().zip(&other.trace) {
                assert_eq!(a.chi2.to_bits(), b.chi2.to_bits(), "trace chi2 bit-equal");
            }
            for (id, v) in &base.vertices {
                let w = other.vertices[id];
                assert_eq!(v.scale.to_bits(), w.scale.to_bits());
                assert_eq!(v.translation.x.to_bits(), w.translation.x.to_bits());
                assert_eq!(v.translation.y.to_bits(), w.translation.y.to_bits());
                assert_eq!(v.translation.z.to_bits(), w.translation.z.to_bits());
            }
        }
    }

    #[test]
    fn missing_fixed_vertex_is_rejected() {
        let mut problem = chain_problem(3, false);
        for v in &mut problem.vertices {
            v.fixed = false;
        }
        assert!(matches!(
            optimize(&problem, &Runtime::new(1), &LmConfig::default()),
            Err(OptimizeError::NoFixedVertex)
        ));
    }
}
