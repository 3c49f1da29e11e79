//! Static SVG overlay of ground-truth, drifted, and corrected
//! trajectories (top-down x/y view).

use crate::geometry::Se3;

pub struct TrajectoryPlot<'a> {
    pub ground_truth: &'a [Se3],
    pub drifted: &'a [Se3],
    pub corrected: &'a [Se3],
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 50.0;

fn polyline(points: &[(f64, f64)], color: &str, label: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!(
        "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"><title>{label}</title></polyline>\n",
        coords.join(" ")
    )
}

pub fn render_svg(plot: &TrajectoryPlot<'_>) -> String {
    let centers = |poses: &[Se3]| -> Vec<(f64, f64)> {
        poses
            .iter()
            .map(|p| {
                let c = p.camera_center();
                (c.x, c.y)
            })
            .collect()
    };
    let gt = centers(plot.ground_truth);
    let dr = centers(plot.drifted);
    let co = centers(plot.corrected);

    let all: Vec<&(f64, f64)> = gt.iter().chain(dr.iter()).chain(co.iter()).collect();
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &all {
        min_x = min_x.min(*x);
        max_x = max_x.max(*x);
        min_y = min_y.min(*y);
        max_y = max_y.max(*y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let scale = (WIDTH - 2.0 * MARGIN).min(HEIGHT - 2.0 * MARGIN) / span;
    let to_px = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
        pts.iter()
            .map(|(x, y)| {
                (
                    MARGIN + (x - min_x) * scale,
                    HEIGHT - MARGIN - (y - min_y) * scale,
                )
            })
            .collect()
    };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    svg.push_str(&polyline(&to_px(&gt), "#2a9d3f", "ground truth"));
    svg.push_str(&polyline(&to_px(&dr), "#d62728", "drifted"));
    svg.push_str(&polyline(&to_px(&co), "#1f6fd6", "corrected"));
    for (i, (label, color)) in [
        ("ground truth", "#2a9d3f"),
        ("drifted", "#d62728"),
        ("corrected", "#1f6fd6"),
    ]
    .iter()
    .enumerate()
    {
        let y = 24.0 + 20.0 * i as f64;
        svg.push_str(&format!(
            "  <rect x=\"16\" y=\"{}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n  <text x=\"36\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">{label}</text>\n",
            y, y + 5.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Quat, Vec3};

    #[test]
    fn renders_three_polylines() {
        let poses: Vec<Se3> = (0..10)
            .map(|i| {
                Se3::new(
                    Quat::identity(),
                    Vec3::new(i as f64, (i as f64).sin(), 0.0),
                )
            })
            .collect();
        let svg = render_svg(&TrajectoryPlot {
            ground_truth: &poses,
            drifted: &poses,
            corrected: &poses,
        });
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("corrected"));
    }
}
