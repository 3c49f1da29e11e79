// scratch probe for detection tuning (removed before release)
use relock::detect::*;
use relock::geometry::Sim3;
use relock::harness::*;
use relock::map::*;
use relock::matching::*;
use relock::runtime::Runtime;
use std::collections::BTreeSet;

fn main() {
    let world = generate_world(&SyntheticWorldConfig::default()).unwrap();
    println!("loop labels: {:?}", &world.loop_labels[..5.min(world.loop_labels.len())]);
    let projection = WordProjection::from_seed(7);
    let mut map = Map::default();
    let runtime = Runtime::new(2);
    let config = LoopDetectConfig::default();

    let n = world.keyframes.len();
    for i in 0..n {
        for p in world.points_anchored_at(i) {
            map.add_map_point(p).unwrap();
        }
        map.insert_keyframe(world.keyframe_entity(i, &projection)).unwrap();
    }
    println!("map: {} kfs, {} points", map.keyframe_count(), map.live_point_count());
    let mean_feats: f64 = (0..n)
        .map(|i| world.keyframes[i].keypoints.len() as f64)
        .sum::<f64>()
        / n as f64;
    println!("mean features per keyframe: {mean_feats:.1}");

    // probe the revisit keyframes
    for idx in (n - 12)..n {
        let current = KeyFrameId(idx as u64);
        let kf = map.keyframe(current).unwrap().clone();
        let mut exclusion: BTreeSet<KeyFrameId> =
            map.covisibility().neighbors(current).into_iter().collect();
        exclusion.insert(current);
        let candidates = detect_candidates(
            map.word_index(),
            map.covisibility(),
            current,
            &kf.word_ids,
            config.num_candidates,
            &exclusion,
        );
        print!("kf {idx}: exclusion {} candidates {candidates:?}", exclusion.len());

        if let Some(&matched) = candidates.first() {
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
            let t_cw = Sim3::from_se3(&kf.pose);
            let matches = projection_search(&runtime, &snap, &t_cw, &views, &config.ps1);
            print!(" | window {} views {} ps1 {}", window.len(), views.len(), matches.len());

            // correspondences with own associations
            let mut corr = 0;
            for m in &matches {
                if kf.associations[m.feature].is_some() {
                    corr += 1;
                }
            }
            print!(" corr {corr}");
        }
        println!();

        let det = detect_loop(&mut map, current, &config, &runtime).unwrap();
        if let Some(d) = det {
            println!("  DETECTED {} -> {} verified {}", d.current_kf, d.matched_kf, d.verified_matches);
        }
    }

    // dissect the culls for kf 108 vs candidate window of kf 0
    let current = KeyFrameId(108);
    let kf = map.keyframe(current).unwrap().clone();
    let t_cw = Sim3::from_se3(&kf.pose);
    let snap = map.snapshot(current).unwrap();
    let mut exclusion: BTreeSet<KeyFrameId> =
        map.covisibility().neighbors(current).into_iter().collect();
    exclusion.insert(current);
    let matched = KeyFrameId(0);
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
        .map(PointView::from_point)
        .collect();
    let params = &config.ps1;
    let (mut depth, mut bounds, mut dist, mut angle, mut nocand, mut noham, mut ok) =
        (0, 0, 0, 0, 0, 0, 0);
    for view in &views {
        let p_cam = t_cw.apply(view.position);
        if p_cam.z <= 1e-6 {
            depth += 1;
            continue;
        }
        let Some([u, v]) = snap.intrinsics.project(p_cam) else {
            bounds += 1;
            continue;
        };
        let d = p_cam.norm() / t_cw.scale;
        if d < 0.8 * view.d_min || d > 1.2 * view.d_max {
            dist += 1;
            continue;
        }
        let center = t_cw.camera_center();
        let dir = (view.position - center).normalized();
        if dir.dot(view.normal) < 0.5 {
            angle += 1;
            continue;
        }
        let predicted = ((view.d_max / d).ln() / params.scale_factor.ln())
            .round()
            .clamp(0.0, 7.0) as i32;
        let radius = params.radius_at(predicted as u8);
        let tol = params.octave_tolerance as i32;
        let cands = features_in_radius(&snap, u, v, radius, (predicted - tol, predicted + tol));
        if cands.is_empty() {
            nocand += 1;
            continue;
        }
        let best = cands
            .iter()
            .map(|&f| hamming(&view.descriptor, &snap.descriptors[f]))
            .min()
            .unwrap();
        if best > params.max_hamming {
            noham += 1;
        } else {
            ok += 1;
        }
    }
    println!("culls: depth {depth} bounds {bounds} dist {dist} angle {angle} nocand {nocand} noham {noham} OK {ok} / {}", views.len());

    // for window points whose landmark is also seen by kf108: true pixel
    // offset between the drifted projection and the actual feature
    let mut landmark_to_feature = std::collections::BTreeMap::new();
    for p in &world.map_points {
        for (kfi, feat) in &p.observations {
            if *kfi == 108 {
                landmark_to_feature.insert(p.landmark, *feat);
            }
        }
    }
    let mut offsets = Vec::new();
    let mut d_oct: Vec<i32> = Vec::new();
    for view in &views {
        let wp = &world.map_points[view.id.0 as usize];
        let Some(&feat) = landmark_to_feature.get(&wp.landmark) else {
            continue;
        };
        let p_cam = t_cw.apply(view.position);
        if p_cam.z <= 1e-6 {
            continue;
        }
        let Some([u, v]) = snap.intrinsics.project(p_cam) else {
            continue;
        };
        let du = u - snap.us[feat];
        let dv = v - snap.vs[feat];
        offsets.push((du * du + dv * dv).sqrt());
        let d = p_cam.norm() / t_cw.scale;
        let predicted = ((view.d_max / d).ln() / params.scale_factor.ln())
            .round()
            .clamp(0.0, 7.0) as i32;
        d_oct.push(predicted - snap.octaves[feat] as i32);
    }
    offsets.sort_by(f64::total_cmp);
    d_oct.sort();
    if !offsets.is_empty() {
        println!(
            "true-correspondence offsets px: n {} min {:.1} median {:.1} p90 {:.1} max {:.1}",
            offsets.len(),
            offsets[0],
            offsets[offsets.len() / 2],
            offsets[offsets.len() * 9 / 10],
            offsets[offsets.len() - 1]
        );
        println!(
            "octave prediction error: min {} median {} max {}",
            d_oct[0],
            d_oct[d_oct.len() / 2],
            d_oct[d_oct.len() - 1]
        );
    } else {
        println!("no shared landmarks between kf108 features and window views?!");
    }
}
