//! Text import/export of Sim(3) pose-graph problems for cross-checking
//! against external optimizers.
//!
//! Format, one record per line:
//!
//! ```text
//! VERTEX_SIM3:EXPMAP id s qx qy qz qw tx ty tz
//! FIX id
//! EDGE_SIM3 i j s qx qy qz qw tx ty tz <28 upper-triangular information values>
//! ```
//!
//! Floats print in Rust's shortest round-trip form. Edge information is
//! identity on export (unit information is the optimizer contract).

use crate::geometry::{Quat, Sim3, Vec3};
use crate::map::KeyFrameId;

use super::{EdgeKind, EssentialProblem, PoseGraphEdge, PoseGraphVertex};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum G2oError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn write_sim3(out: &mut String, s: &Sim3) {
    use std::fmt::Write;
    let q = s.rotation;
    let t = s.translation;
    write!(
        out,
        "{} {} {} {} {} {} {} {}",
        s.scale, q.x, q.y, q.z, q.w, t.x, t.y, t.z
    )
    .unwrap();
}

pub fn export(problem: &EssentialProblem) -> String {
    let mut out = String::new();
    for v in &problem.vertices {
        out.push_str("VERTEX_SIM3:EXPMAP ");
        out.push_str(&v.id.0.to_string());
        out.push(' ');
        write_sim3(&mut out, &v.estimate);
        out.push('\n');
    }
    for v in &problem.vertices {
        if v.fixed {
            out.push_str(&format!("FIX {}\n", v.id.0));
        }
    }
    for e in &problem.edges {
        out.push_str("EDGE_SIM3 ");
        out.push_str(&format!("{} {} ", e.i.0, e.j.0));
        write_sim3(&mut out, &e.measurement);
        // identity information, upper triangle row-major
        for r in 0..7 {
            for c in r..7 {
                out.push(' ');
                out.push_str(if r == c { "1" } else { "0" });
            }
        }
        out.push('\n');
    }
    out
}

fn parse_sim3(fields: &[&str], line: usize) -> Result<Sim3, G2oError> {
    let nums: Vec<f64> = fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|e| G2oError::Parse {
                line,
                message: format!("bad float {f:?}: {e}"),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Sim3::new(
        nums[0],
        Quat::new(nums[4], nums[1], nums[2], nums[3]),
        Vec3::new(nums[5], nums[6], nums[7]),
    ))
}

pub fn import(text: &str) -> Result<EssentialProblem, G2oError> {
    let mut vertices: Vec<PoseGraphVertex> = Vec::new();
    let mut fixed: Vec<KeyFrameId> = Vec::new();
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match fields[0] {
            "VERTEX_SIM3:EXPMAP" => {
                if fields.len() != 10 {
                    return Err(G2oError::Parse {
                        line,
                        message: format!("vertex needs 10 fields, got {}", fields.len()),
                    });
                }
                let id = fields[1].parse::<u64>().map_err(|e| G2oError::Parse {
                    line,
                    message: e.to_string(),
                })?;
                vertices.push(PoseGraphVertex {
                    id: KeyFrameId(id),
                    estimate: parse_sim3(&fields[2..10], line)?,
                    fixed: false,
                });
            }
            "FIX" => {
                let id = fields[1].parse::<u64>().map_err(|e| G2oError::Parse {
                    line,
                    message: e.to_string(),
                })?;
                fixed.push(KeyFrameId(id));
            }
            "EDGE_SIM3" => {
                if fields.len() != 11 + 28 {
                    return Err(G2oError::Parse {
                        line,
                        message: format!("edge needs 39 fields, got {}", fields.len()),
                    });
                }
                let i = fields[1].parse::<u64>().map_err(|e| G2oError::Parse {
                    line,
                    message: e.to_string(),
                })?;
                let j = fields[2].parse::<u64>().map_err(|e| G2oError::Parse {
                    line,
                    message: e.to_string(),
                })?;
                edges.push(PoseGraphEdge {
                    i: KeyFrameId(i),
                    j: KeyFrameId(j),
                    measurement: parse_sim3(&fields[3..11], line)?,
                    kind: EdgeKind::Covisibility,
                });
            }
            other => {
                return Err(G2oError::Parse {
                    line,
                    message: format!("unknown record {other:?}"),
                });
            }
        }
    }
    for id in fixed {
        if let Some(v) = vertices.iter_mut().find(|v| v.id == id) {
            v.fixed = true;
        }
    }
    vertices.sort_by_key(|v| v.id);
    Ok(EssentialProblem { vertices, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;

    fn sample_problem() -> EssentialProblem {
        let s0 = Sim3::identity();
        let s1 = Sim3::new(
            1.25,
            Quat::exp_so3(Vec3::new(0.1, -0.2, 0.3)),
            Vec3::new(1.0, 2.0, -0.5),
        );
        EssentialProblem {
            vertices: vec![
                PoseGraphVertex {
                    id: KeyFrameId(0),
                    estimate: s0,
                    fixed: true,
                },
                PoseGraphVertex {
                    id: KeyFrameId(1),
                    estimate: s1,
                    fixed: false,
                },
            ],
            edges: vec![PoseGraphEdge {
                i: KeyFrameId(1),
                j: KeyFrameId(0),
                measurement: s1,
                kind: EdgeKind::Tree,
            }],
        }
    }

    #[test]
    fn export_import_round_trip_is_exact() {
        let problem = sample_problem();
        let text = export(&problem);
        let back = import(&text).unwrap();
        assert_eq!(back.vertices.len(), 2);
        assert_eq!(back.vertices[0].fixed, true);
        assert_eq!(back.vertices[1].estimate, problem.vertices[1].estimate);
        assert_eq!(back.edges[0].measurement, problem.edges[0].measurement);
        assert_eq!(back.edges[0].i, KeyFrameId(1));
    }

    #[test]
    fn vertex_line_layout_matches_contract() {
        let text = export(&sample_problem());
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("VERTEX_SIM3:EXPMAP 0 1 0 0 0 1 0 0 0"));
        assert!(text.lines().any(|l| l == "FIX 0"));
        let edge = text.lines().find(|l| l.starts_with("EDGE_SIM3")).unwrap();
        assert_eq!(edge.split_whitespace().count(), 39);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(import("VERTEX_SIM3:EXPMAP 0 1 0 0").is_err());
        assert!(import("WOBBLE 1 2 3").is_err());
    }
}
