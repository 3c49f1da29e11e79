// scratch probe: scale-drift handling in propagate/optimize/recover
use relock::correct::propagate_correction;
use relock::detect::LoopDetection;
use relock::geometry::{Se3, Sim3, Vec3};
use relock::harness::*;
use relock::map::*;
use relock::posegraph::*;
use relock::runtime::Runtime;

fn main() {
    let n = 60usize;
    // ground truth: closed circle (reuse the generator with zero noise)
    let world = generate_world(&SyntheticWorldConfig {
        poses: n,
        landmarks: 50,
        sigma_t: 0.0,
        sigma_r: 0.0,
        descriptor_noise: 0.0,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let gt = &world.ground_truth;

    // drifted poses: every step 1% longer (pure scale inflation)
    let eps = 0.01f64;
    let mut drifted = vec![gt[0]];
    for k in 1..n {
        let step = gt[k].compose(&gt[k - 1].inverse());
        let inflated = Se3::new(step.rotation, step.translation.scaled(1.0 + eps));
        drifted.push(inflated.compose(&drifted[k - 1]));
    }
    let total_scale = (1.0 + eps).powi(n as i32 - 1);

    // minimal map: featureless keyframes chained by id
    let mut map = Map::default();
    let intr = relock::geometry::CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480);
    for (k, pose) in drifted.iter().enumerate() {
        map.insert_keyframe(KeyFrame {
            id: KeyFrameId(k as u64),
            pose: *pose,
            intrinsics: intr,
            keypoints: vec![],
            descriptors: vec![],
            associations: vec![],
            word_ids: Default::default(),
        })
        .unwrap();
    }

    // perfect detection: S_cm carries the accumulated metric ratio
    let last = n - 1;
    let rel = gt[last].compose(&gt[0].inverse());
    let s_cm = Sim3::new(
        total_scale,
        rel.rotation,
        rel.translation.scaled(total_scale),
    );
    let detection = LoopDetection {
        current_kf: KeyFrameId(last as u64),
        matched_kf: KeyFrameId(0),
        s_cm,
        verified_matches: 999,
        accepted: true,
    };

    let corrected = propagate_correction(&mut map, &detection, 30).unwrap();
    let problem = build_essential_problem(&map, &corrected, &detection).unwrap();
    let runtime = Runtime::new(2);
    let outcome = optimize(&problem, &runtime, &LmConfig::default()).unwrap();
    println!(
        "chi2 {:.3e} -> {:.3e}; vertex scales:",
        outcome.initial_chi2, outcome.final_chi2
    );
    let mut scales: Vec<f64> = outcome.vertices.values().map(|s| s.scale).collect();
    scales.sort_by(f64::total_cmp);
    println!(
        "  min {:.5} median {:.5} max {:.5} (expect ramp 1 -> {:.5})",
        scales[0],
        scales[scales.len() / 2],
        scales[scales.len() - 1],
        total_scale
    );
    recover(&mut map, &problem.initial_estimates(), &outcome.vertices).unwrap();

    let final_poses: Vec<Se3> = (0..n)
        .map(|k| map.keyframe(KeyFrameId(k as u64)).unwrap().pose)
        .collect();
    let before = compute_ate(&drifted, gt, true).unwrap();
    let after = compute_ate(&final_poses, gt, true).unwrap();
    let centers = |poses: &[Se3]| -> Vec<Vec3> { poses.iter().map(|p| p.camera_center()).collect() };
    let mu = |v: &[Vec3]| v.iter().fold(Vec3::zero(), |a, b| a + *b).scaled(1.0 / v.len() as f64);
    let scale_fit = |a: &[Vec3], b: &[Vec3]| -> f64 {
        let (ma, mb) = (mu(a), mu(b));
        let sa: f64 = a.iter().map(|p| (*p - ma).norm_squared()).sum();
        let sb: f64 = b.iter().map(|p| (*p - mb).norm_squared()).sum();
        (sa / sb).sqrt()
    };
    println!(
        "ATE before {:.4} after {:.4}; scale gt/drift {:.5} gt/final {:.5}",
        before.rmse,
        after.rmse,
        scale_fit(&centers(gt), &centers(&drifted)),
        scale_fit(&centers(gt), &centers(&final_poses)),
    );
}
