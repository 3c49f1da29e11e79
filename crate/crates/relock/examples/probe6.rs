// scratch probe: ATE evolution across corrections (removed before release)
use relock::correct::fusion::FusionTarget;
use relock::correct::{apply_fusion, plan_fusion, propagate_correction};
use relock::detect::detect_loop;
use relock::geometry::{Se3, Sim3};
use relock::harness::*;
use relock::map::*;
use relock::matching::{PointView, WordProjection};
use relock::posegraph::{build_essential_problem, optimize, recover};
use relock::runtime::Runtime;
use std::collections::{BTreeMap, BTreeSet};

fn ate_now(map: &Map, world: &SyntheticWorld, upto: usize) -> f64 {
    let poses: Vec<Se3> = (0..=upto)
        .map(|k| map.keyframe(KeyFrameId(k as u64)).unwrap().pose)
        .collect();
    compute_ate(&poses, &world.ground_truth[..=upto], true)
        .unwrap()
        .rmse
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let shape = std::env::args().nth(2).map(|s| s == "f8").unwrap_or(false);
    let world = generate_world(&SyntheticWorldConfig {
        seed,
        shape: if shape { TrajectoryShape::FigureEight } else { TrajectoryShape::Circle },
        ..Default::default()
    })
    .unwrap();
    let config = PipelineConfig::default();
    let runtime = Runtime::new(2);
    let projection = WordProjection::from_seed(config.word_seed);
    let mut map = Map::new(config.map);
    let mut cooldown_until = 0usize;
    let mut corrections = 0usize;

    for index in 0..world.keyframes.len() {
        let live_pose = if index == 0 {
            world.drifted[0]
        } else {
            let step = world.drifted[index].compose(&world.drifted[index - 1].inverse());
            step.compose(&map.keyframe(KeyFrameId(index as u64 - 1)).unwrap().pose)
        };
        let live_inverse = live_pose.inverse();
        for mut point in world.points_anchored_at(index) {
            let p_cam = world.drifted[index].apply(point.position);
            point.position = live_inverse.apply(p_cam);
            point.normal = (point.position - live_inverse.translation).normalized();
            map.add_map_point(point).unwrap();
        }
        let mut kf = world.keyframe_entity(index, &projection);
        kf.pose = live_pose;
        let mut seen: BTreeSet<MapPointId> = Default::default();
        for assoc in kf.associations.iter_mut() {
            if let Some(id) = *assoc {
                let resolved = map.resolve(id);
                if map.point(resolved).is_none() || !seen.insert(resolved) {
                    *assoc = None;
                } else {
                    *assoc = Some(resolved);
                }
            }
        }
        let kf_id = kf.id;
        map.insert_keyframe(kf).unwrap();

        if index < config.detection_warmup || index < cooldown_until {
            continue;
        }
        let Ok(Some(detection)) = detect_loop(&mut map, kf_id, &config.detect, &runtime) else {
            continue;
        };
        let s_cw_old = Sim3::from_se3(&map.keyframe(detection.current_kf).unwrap().pose);
        let s_mw = Sim3::from_se3(&map.keyframe(detection.matched_kf).unwrap().pose);
        let delta = detection
            .s_cm
            .compose(&s_mw)
            .compose(&s_cw_old.inverse())
            .log()
            .map(|t| t.norm())
            .unwrap_or(f64::INFINITY);
        if delta < config.min_correction {
            cooldown_until = index + config.correction_cooldown;
            continue;
        }
        let full = delta >= config.full_correction;
        let pre = ate_now(&map, &world, index);
        let corrected = propagate_correction(&mut map, &detection, config.detect.min_index_gap).unwrap();
        let after_prop = ate_now(&map, &world, index);

        let mut loop_window: Vec<KeyFrameId> =
            map.covisibility().neighbors(detection.matched_kf);
        loop_window.push(detection.matched_kf);
        loop_window.sort_unstable();
        loop_window.dedup();
        loop_window.retain(|id| !corrected.poses.contains_key(id));
        let mut ids: BTreeSet<MapPointId> = Default::default();
        for k in &loop_window {
            ids.extend(map.keyframe(*k).unwrap().associated_points());
        }
        let loop_points: Vec<PointView> = ids
            .iter()
            .filter_map(|id| map.point(*id))
            .filter(|p| !p.is_replaced())
            .map(PointView::from_point)
            .collect();
        let mut counts: BTreeMap<MapPointId, usize> = BTreeMap::new();
        for p in &loop_points {
            counts.insert(p.id, map.point(p.id).unwrap().observation_count());
        }
        let mut targets = Vec::new();
        for (kf_id, pose) in &corrected.poses {
            let snapshot = map.snapshot(*kf_id).unwrap();
            for a in snapshot.associations.iter().flatten() {
                counts.insert(*a, map.point(*a).map(|q| q.observation_count()).unwrap_or(0));
            }
            targets.push(FusionTarget {
                snapshot,
                corrected_pose: pose.s_corrected,
            });
        }
        let plan = plan_fusion(&runtime, &targets, &loop_points, &counts, &config.fusion_params);
        let stats = apply_fusion(&mut map, &plan).unwrap();

        let (mut chi0, mut chi1) = (0.0, 0.0);
        if full {
            let problem = build_essential_problem(&map, &corrected, &detection).unwrap();
            let outcome = optimize(&problem, &runtime, &config.lm).unwrap();
            recover(&mut map, &problem.initial_estimates(), &outcome.vertices).unwrap();
            chi0 = outcome.initial_chi2;
            chi1 = outcome.final_chi2;
        }
        map.add_loop_edge(detection.current_kf, detection.matched_kf);
        let after_opt = ate_now(&map, &world, index);
        corrections += 1;
        cooldown_until = index + config.correction_cooldown;
        println!(
            "closure #{corrections} kf{} -> {} delta {:.3} {}: ATE pre {:.4} -> prop {:.4} -> end {:.4} (fusion {}r/{}n, chi2 {:.1e}->{:.1e})",
            detection.current_kf,
            detection.matched_kf,
            delta,
            if full { "FULL" } else { "loc" },
            pre,
            after_prop,
            after_opt,
            stats.replaced,
            stats.new_associations,
            chi0,
            chi1
        );
    }
    let n = world.keyframes.len() - 1;
    println!(
        "final ATE {:.4} (drift {:.4})",
        ate_now(&map, &world, n),
        compute_ate(&world.drifted, &world.ground_truth, true).unwrap().rmse
    );
}
