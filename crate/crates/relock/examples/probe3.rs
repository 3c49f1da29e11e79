// scratch probe: pure pose-graph optimization on a drifted circle
use relock::geometry::Sim3;
use relock::harness::*;
use relock::map::KeyFrameId;
use relock::posegraph::*;
use relock::runtime::Runtime;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let sigma_r_deg: f64 = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let world = if sigma_r_deg > 0.0 {
        generate_world(&SyntheticWorldConfig {
            poses: 100,
            sigma_t: 0.01,
            sigma_r: sigma_r_deg.to_radians(),
            seed,
            ..Default::default()
        })
        .unwrap()
    } else {
        generate_world(&SyntheticWorldConfig { seed, ..Default::default() }).unwrap()
    };

    let n = world.config.poses;
    // vertices from drifted poses, vertex 0 fixed
    let vertices: Vec<PoseGraphVertex> = (0..n)
        .map(|k| PoseGraphVertex {
            id: KeyFrameId(k as u64),
            estimate: Sim3::from_se3(&world.drifted[k]),
            fixed: k == 0,
        })
        .collect();
    // odometry chain measurements from the drifted relative poses, plus
    // one loop edge with the ground-truth relative pose end <-> start
    let mut edges = Vec::new();
    for k in 1..n {
        edges.push(PoseGraphEdge {
            i: KeyFrameId(k as u64),
            j: KeyFrameId(k as u64 - 1),
            measurement: Sim3::from_se3(&world.drifted[k])
                .compose(&Sim3::from_se3(&world.drifted[k - 1]).inverse()),
            kind: EdgeKind::Tree,
        });
    }
    let last = n - 1;
    edges.push(PoseGraphEdge {
        i: KeyFrameId(last as u64),
        j: KeyFrameId(0),
        measurement: Sim3::from_se3(&world.ground_truth[last])
            .compose(&Sim3::from_se3(&world.ground_truth[0]).inverse()),
        kind: EdgeKind::Loop,
    });

    let problem = EssentialProblem { vertices, edges };
    let runtime = Runtime::new(2);
    let outcome = optimize(&problem, &runtime, &LmConfig::default()).unwrap();
    println!(
        "chi2 {:.3e} -> {:.3e} ({} iterations, {} accepted)",
        outcome.initial_chi2,
        outcome.final_chi2,
        outcome.trace.len(),
        outcome.trace.iter().filter(|r| r.accepted).count()
    );

    let optimized: Vec<_> = (0..n)
        .map(|k| outcome.vertices[&KeyFrameId(k as u64)].to_se3())
        .collect();
    let before = compute_ate(&world.drifted, &world.ground_truth, true).unwrap();
    let after = compute_ate(&optimized, &world.ground_truth, true).unwrap();
    println!(
        "ATE before {:.4} after {:.4} ratio {:.3}",
        before.rmse,
        after.rmse,
        after.rmse / before.rmse
    );
    for (i, chunk) in after.per_pose_errors.chunks(20).enumerate() {
        let line: Vec<String> = chunk.iter().map(|e| format!("{:5.3}", e)).collect();
        println!("kf {:>3}..: {}", i * 20, line.join(" "));
    }
}
