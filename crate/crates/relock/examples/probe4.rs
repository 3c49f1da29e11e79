// scratch probe: S_cm estimate quality (removed before release)
use relock::detect::*;
use relock::geometry::Sim3;
use relock::harness::*;
use relock::map::*;
use relock::matching::*;
use relock::runtime::Runtime;
use std::collections::BTreeSet;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let world = generate_world(&SyntheticWorldConfig {
        seed,
        ..Default::default()
    })
    .unwrap();
    let projection = WordProjection::from_seed(7);
    let mut map = Map::default();
    let runtime = Runtime::new(2);
    let config = LoopDetectConfig::default();

    // build the full drifted map (no corrections) to probe detection alone
    let n = world.keyframes.len();
    for i in 0..n {
        for p in world.points_anchored_at(i) {
            map.add_map_point(p).unwrap();
        }
        map.insert_keyframe(world.keyframe_entity(i, &projection)).unwrap();
    }

    for idx in [99usize, 105, 110, 115] {
        let current = KeyFrameId(idx as u64);
        let kf = map.keyframe(current).unwrap().clone();
        let t_cw = Sim3::from_se3(&kf.pose);
        let mut exclusion: BTreeSet<KeyFrameId> =
            map.covisibility().neighbors(current).into_iter().collect();
        exclusion.insert(current);
        let floor = current.0.saturating_sub(config.min_index_gap);
        exclusion.extend(map.keyframe_ids().filter(|id| id.0 > floor && id.0 <= current.0));
        let candidates = detect_candidates(
            map.word_index(),
            map.covisibility(),
            current,
            &kf.word_ids,
            config.num_candidates,
            &exclusion,
        );
        let Some(&matched) = candidates.first() else {
            println!("kf {idx}: no candidates");
            continue;
        };
        let mut window: Vec<KeyFrameId> = vec![matched];
        window.extend(
            map.covisibility()
                .neighbors(matched)
                .into_iter()
                .filter(|id| !exclusion.contains(id)),
        );
        window.sort_unstable();
        window.dedup();
        let mut ids: BTreeSet<MapPointId> = BTreeSet::new();
        for k in &window {
            ids.extend(map.keyframe(*k).unwrap().associated_points());
        }
        let views: Vec<PointView> = ids
            .iter()
            .filter_map(|id| map.point(*id))
            .filter(|p| !p.is_replaced())
            .map(PointView::from_point)
            .collect();
        let snap = map.snapshot(current).unwrap();
        let matches = projection_search(&runtime, &snap, &t_cw, &views, &config.ps1);
        let mut corrs = Vec::new();
        let t_mw = Sim3::from_se3(&map.keyframe(matched).unwrap().pose);
        for m in &matches {
            let Some(own_id) = kf.associations[m.feature] else { continue };
            let own = map.point(own_id).unwrap();
            let view = &views[views.binary_search_by_key(&m.point_id, |v| v.id).unwrap()];
            corrs.push(Sim3Correspondence {
                p_a: t_cw.apply(own.position),
                p_b: t_mw.apply(view.position),
                octave_a: kf.keypoints[m.feature].octave,
                octave_b: kf.keypoints[m.feature].octave,
            });
        }
        let Ok(ransac) = estimate_sim3_ransac(&corrs, &kf.intrinsics, &kf.intrinsics, &config.ransac)
        else {
            println!("kf {idx}: ransac failed ({} corrs)", corrs.len());
            continue;
        };
        let gt_center = world.ground_truth[idx].camera_center();

        let s0_cw = ransac.transform.compose(&t_mw);
        let center0 = s0_cw.camera_center();
        let refinement = refine_sim3(&runtime, &snap, &views, &s0_cw, &config.refine).unwrap();
        let center1 = refinement.transform.camera_center();
        // rotation error vs gt: compare S_cw rotation with gt T_cw rotation
        let gt_rot = world.ground_truth[idx].rotation;
        let rot_err = |s: &Sim3| {
            let d = s.rotation.compose(gt_rot.conjugate());
            d.angle().to_degrees()
        };
        // alternative: Horn refit over correspondences that survive the
        // refined transform (symmetric 3D-3D)
        let s_star = refinement.transform;
        let surviving: Vec<(relock::geometry::Vec3, relock::geometry::Vec3)> = corrs
            .iter()
            .filter(|c| {
                let mapped = s_star.compose(&t_mw.inverse()).apply(c.p_b);
                (mapped - c.p_a).norm() < 0.08 * c.p_a.z.max(1.0)
            })
            .map(|c| (c.p_a, c.p_b))
            .collect();
        let horn = relock::detect::ransac::fit_sim3(&surviving).map(|s| s.compose(&t_mw));
        let horn_desc = match &horn {
            Some(h) => format!(
                "horn {:.4} m rot {:.3} deg (n {})",
                (h.camera_center() - gt_center).norm(),
                rot_err(h),
                surviving.len()
            ),
            None => "horn failed".to_string(),
        };
        println!(
            "kf {idx} -> {matched}: corrs {} inliers {} | ransac {:.4} m rot {:.3} | refined {:.4} m rot {:.3} | {}",
            corrs.len(),
            ransac.inlier_count,
            (center0 - gt_center).norm(),
            rot_err(&s0_cw),
            (center1 - gt_center).norm(),
            rot_err(&s_star),
            horn_desc,
        );
    }
}
