// scratch probe: per-pose error profile after the pipeline (removed before release)
use relock::harness::*;
use relock::runtime::Runtime;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let world = generate_world(&SyntheticWorldConfig {
        seed,
        ..Default::default()
    })
    .unwrap();
    let runtime = Runtime::new(2);
    let max_corr: usize = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(4);
    let config = PipelineConfig {
        max_corrections: max_corr,
        ..PipelineConfig::default()
    };
    let outcome = run_pipeline(&world, &config, &runtime).unwrap();
    println!(
        "before {:.4} after {:.4} ({} corrections)",
        outcome.ate_before.rmse,
        outcome.ate_after.rmse,
        outcome.report.detections.len()
    );
    for d in &outcome.report.detections {
        println!(
            "  closure {} -> {} verified {} fusion {}r/{}n chi2 {:.2e}->{:.2e}",
            d.detection.current_kf,
            d.detection.matched_kf,
            d.detection.verified_matches,
            d.fusion.replaced,
            d.fusion.new_associations,
            d.optimize_initial_chi2,
            d.optimize_final_chi2
        );
    }
    println!("  skipped: {}", outcome.report.skipped_corrections);
    let errs = &outcome.ate_after.per_pose_errors;
    for (i, chunk) in errs.chunks(10).enumerate() {
        let line: Vec<String> = chunk.iter().map(|e| format!("{:5.3}", e)).collect();
        println!("kf {:>3}..: {}", i * 10, line.join(" "));
    }
    // best-fit uniform scale between corrected and gt camera centers
    let centers = |poses: &[relock::geometry::Se3]| -> Vec<relock::geometry::Vec3> {
        poses.iter().map(|p| p.camera_center()).collect()
    };
    let est = centers(&outcome.corrected);
    let gt = centers(&world.ground_truth);
    let dr = centers(&world.drifted);
    let mu = |v: &[relock::geometry::Vec3]| {
        v.iter().fold(relock::geometry::Vec3::zero(), |a, b| a + *b)
            .scaled(1.0 / v.len() as f64)
    };
    let (me, mg) = (mu(&est), mu(&gt));
    let se: f64 = est.iter().map(|p| (*p - me).norm_squared()).sum();
    let sg: f64 = gt.iter().map(|p| (*p - mg).norm_squared()).sum();
    println!("best-fit scale gt/est: {:.5}", (sg / se).sqrt());
    let sd: f64 = {
        let md = mu(&dr);
        dr.iter().map(|p| (*p - md).norm_squared()).sum()
    };
    println!("best-fit scale gt/drifted: {:.5}", (sg / sd).sqrt());
    let zs: Vec<f64> = est.iter().map(|p| p.z).collect();
    println!(
        "est z range: {:.3}..{:.3}  gt z range: {:.3}..{:.3}",
        zs.iter().cloned().fold(f64::INFINITY, f64::min),
        zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        gt.iter().map(|p| p.z).fold(f64::INFINITY, f64::min),
        gt.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max)
    );
}
