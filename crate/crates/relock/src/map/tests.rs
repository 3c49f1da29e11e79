use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::geometry::{CameraIntrinsics, Quat, Se3, Vec3};

use super::*;

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480)
}

fn keypoint(i: usize) -> KeyPoint {
    KeyPoint {
        u: ((i * 37) % 640) as f64 + 0.25,
        v: ((i * 23) % 480) as f64 + 0.25,
        octave: (i % 8) as u8,
        angle: 0.0,
    }
}

fn point(id: u64, rng: &mut StdRng) -> MapPoint {
    MapPoint::new(
        MapPointId(id),
        Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 5.0),
        Vec3::new(0.0, 0.0, -1.0),
        1.0,
        10.0,
        Descriptor(rng.gen()),
    )
}

fn keyframe(id: u64, associations: Vec<Option<MapPointId>>, rng: &mut StdRng) -> KeyFrame {
    let n = associations.len();
    KeyFrame {
        id: KeyFrameId(id),
        pose: Se3::identity(),
        intrinsics: intrinsics(),
        keypoints: (0..n).map(keypoint).collect(),
        descriptors: (0..n).map(|_| Descriptor(rng.gen())).collect(),
        associations,
        word_ids: Default::default(),
    }
}

fn assoc(ids: &[Option<u64>]) -> Vec<Option<MapPointId>> {
    ids.iter().map(|o| o.map(MapPointId)).collect()
}

#[test]
fn first_keyframe_becomes_tree_root() {
    let mut rng = StdRng::seed_from_u64(1);
    let mut map = Map::default();
    let kf = keyframe(0, vec![None; 4], &mut rng);
    let id = map.insert_keyframe(kf).unwrap();
    assert_eq!(id, KeyFrameId(0));
    assert!(map.covisibility().incident(id).is_empty());
    assert_eq!(map.essential().parent(id), None);
    map.audit().unwrap();
}

#[test]
fn duplicate_keyframe_id_rejected() {
    let mut rng = StdRng::seed_from_u64(2);
    let mut map = Map::default();
    map.insert_keyframe(keyframe(3, vec![None], &mut rng)).unwrap();
    let err = map
        .insert_keyframe(keyframe(3, vec![None], &mut rng))
        .unwrap_err();
    assert!(matches!(err, MapError::DuplicateKeyFrame(_)));
}

#[test]
fn covisibility_weights_and_parent_from_shared_points() {
    let mut rng = StdRng::seed_from_u64(3);
    let mut map = Map::default();
    for i in 0..25 {
        map.add_map_point(point(i, &mut rng)).unwrap();
    }
    // kf A observes points 0..20, kf B observes 20..25
    let a_assoc: Vec<Option<MapPointId>> = (0..20).map(|i| Some(MapPointId(i))).collect();
    let b_assoc: Vec<Option<MapPointId>> = (20..25).map(|i| Some(MapPointId(i))).collect();
    let a = map.insert_keyframe(keyframe(0, a_assoc, &mut rng)).unwrap();
    let b = map.insert_keyframe(keyframe(1, b_assoc, &mut rng)).unwrap();

    // new keyframe shares all 20 with A and all 5 with B
    let c_assoc: Vec<Option<MapPointId>> = (0..25).map(|i| Some(MapPointId(i))).collect();
    let c = map.insert_keyframe(keyframe(2, c_assoc, &mut rng)).unwrap();

    assert_eq!(map.covisibility().weight(c, a), 20);
    assert_eq!(map.covisibility().weight(c, b), 5);
    assert_eq!(map.covisibility().weight(c, a), map.shared_observation_count(c, a));
    assert_eq!(map.essential().parent(c), Some(a));
    map.audit().unwrap();
}

#[test]
fn unrelated_keyframe_falls_back_to_previous_by_id() {
    let mut rng = StdRng::seed_from_u64(4);
    let mut map = Map::default();
    map.insert_keyframe(keyframe(0, vec![None; 3], &mut rng)).unwrap();
    map.insert_keyframe(keyframe(5, vec![None; 3], &mut rng)).unwrap();
    let c = map.insert_keyframe(keyframe(9, vec![None; 3], &mut rng)).unwrap();
    assert!(map.covisibility().incident(c).is_empty());
    assert_eq!(map.essential().parent(c), Some(KeyFrameId(5)));
    map.audit().unwrap();
}

#[test]
fn update_connections_is_idempotent() {
    let mut rng = StdRng::seed_from_u64(5);
    let mut map = Map::default();
    for i in 0..30 {
        map.add_map_point(point(i, &mut rng)).unwrap();
    }
    let shared: Vec<Option<MapPointId>> = (0..30).map(|i| Some(MapPointId(i))).collect();
    let a = map.insert_keyframe(keyframe(0, shared.clone(), &mut rng)).unwrap();
    map.insert_keyframe(keyframe(1, shared, &mut rng)).unwrap();

    let first = map.update_connections(a).unwrap();
    assert!(first.is_empty(), "weights already exact after insert: {first:?}");
    let second = map.update_connections(a).unwrap();
    assert!(second.is_empty());
    map.audit().unwrap();
}

#[test]
fn update_connections_recounts_after_fusion() {
    let mut rng = StdRng::seed_from_u64(6);
    let mut map = Map::default();
    // kf A observes 0..20, kf B observes 20..40; duplicates 0..10 ~ 20..30
    for i in 0..40 {
        map.add_map_point(point(i, &mut rng)).unwrap();
    }
    let a_assoc: Vec<Option<MapPointId>> = (0..20).map(|i| Some(MapPointId(i))).collect();
    let b_assoc: Vec<Option<MapPointId>> = (20..40).map(|i| Some(MapPointId(i))).collect();
    let a = map.insert_keyframe(keyframe(0, a_assoc, &mut rng)).unwrap();
    let b = map.insert_keyframe(keyframe(1, b_assoc, &mut rng)).unwrap();
    assert_eq!(map.covisibility().weight(a, b), 0);

    // fuse 10 duplicate pairs: B's point (20+i) replaced by A's point i
    for i in 0..10 {
        map.replace_map_point(MapPointId(20 + i), MapPointId(i)).unwrap();
    }
    let changed = map.update_connections(a).unwrap();
    assert!(changed.contains(&(a.min(b), a.max(b))));
    assert_eq!(map.covisibility().weight(a, b), map.shared_observation_count(a, b));
    assert_eq!(map.covisibility().weight(a, b), 10);
    map.audit().unwrap();
}

#[test]
fn isolated_keyframe_keeps_single_strongest_edge() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut map = Map::default();
    for i in 0..12 {
        map.add_map_point(point(i, &mut rng)).unwrap();
    }
    // weight(kf2, kf0) = 4, weight(kf2, kf1) = 8; both below 15
    let kf0: Vec<Option<MapPointId>> = (0..4).map(|i| Some(MapPointId(i))).collect();
    let kf1: Vec<Option<MapPointId>> = (4..12).map(|i| Some(MapPointId(i))).collect();
    let kf2: Vec<Option<MapPointId>> = (0..12).map(|i| Some(MapPointId(i))).collect();
    let a = map.insert_keyframe(keyframe(0, kf0, &mut rng)).unwrap();
    let b = map.insert_keyframe(keyframe(1, kf1, &mut rng)).unwrap();
    let c = map.insert_keyframe(keyframe(2, kf2, &mut rng)).unwrap();

    map.update_connections(c).unwrap();
    assert_eq!(map.covisibility().weight(c, a), 0, "weak edge dropped");
    assert_eq!(map.covisibility().weight(c, b), 8, "strongest edge kept");
    map.audit().unwrap();
}

#[test]
fn replace_with_no_observations_just_tombstones() {
    let mut rng = StdRng::seed_from_u64(8);
    let mut map = Map::default();
    map.add_map_point(point(0, &mut rng)).unwrap();
    map.add_map_point(point(1, &mut rng)).unwrap();
    map.replace_map_point(MapPointId(0), MapPointId(1)).unwrap();
    assert!(map.point(MapPointId(0)).unwrap().is_replaced());
    assert_eq!(map.resolve(MapPointId(0)), MapPointId(1));
    assert!(map.point(MapPointId(1)).unwrap().observations.is_empty());
}

#[test]
fn replace_transfers_observation_to_survivor() {
    let mut rng = StdRng::seed_from_u64(9);
    let mut map = Map::default();
    map.add_map_point(point(0, &mut rng)).unwrap(); // victim
    map.add_map_point(point(1, &mut rng)).unwrap(); // survivor
    // K1 observes the victim at feature 3
    let assoc = assoc(&[None, None, None, Some(0)]);
    let k1 = map.insert_keyframe(keyframe(0, assoc, &mut rng)).unwrap();

    map.replace_map_point(MapPointId(0), MapPointId(1)).unwrap();
    let kf = map.keyframe(k1).unwrap();
    assert_eq!(kf.associations[3], Some(MapPointId(1)));
    assert_eq!(
        map.point(MapPointId(1)).unwrap().observations.get(&k1),
        Some(&3)
    );
    map.audit().unwrap();
}

#[test]
fn replace_conflict_keeps_survivor_slot_and_clears_victim() {
    let mut rng = StdRng::seed_from_u64(10);
    let mut map = Map::default();
    map.add_map_point(point(0, &mut rng)).unwrap(); // victim at f1
    map.add_map_point(point(1, &mut rng)).unwrap(); // survivor at f2
    let assoc = assoc(&[None, Some(0), Some(1)]);
    let k1 = map.insert_keyframe(keyframe(0, assoc, &mut rng)).unwrap();

    map.replace_map_point(MapPointId(0), MapPointId(1)).unwrap();
    let kf = map.keyframe(k1).unwrap();
    assert_eq!(kf.associations[1], None, "victim slot cleared");
    assert_eq!(kf.associations[2], Some(MapPointId(1)), "survivor kept");
    assert_eq!(
        map.point(MapPointId(1)).unwrap().observations.get(&k1),
        Some(&2)
    );
    map.audit().unwrap();
}

#[test]
fn replace_errors_on_bad_inputs() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut map = Map::default();
    map.add_map_point(point(0, &mut rng)).unwrap();
    map.add_map_point(point(1, &mut rng)).unwrap();
    assert!(matches!(
        map.replace_map_point(MapPointId(0), MapPointId(0)),
        Err(MapError::SelfReplace(_))
    ));
    assert!(matches!(
        map.replace_map_point(MapPointId(7), MapPointId(0)),
        Err(MapError::UnknownMapPoint(_))
    ));
    map.replace_map_point(MapPointId(0), MapPointId(1)).unwrap();
    assert!(matches!(
        map.replace_map_point(MapPointId(0), MapPointId(1)),
        Err(MapError::PointReplaced(_))
    ));
}

#[test]
fn snapshot_caches_until_mutation() {
    let mut rng = StdRng::seed_from_u64(12);
    let mut map = Map::default();
    let kf = keyframe(0, vec![None; 8], &mut rng);
    let source_descriptors = kf.descriptors.clone();
    let id = map.insert_keyframe(kf).unwrap();
    assert_eq!(map.snapshot_repacks(), 1, "staged exactly once on insert");

    let s1 = map.snapshot(id).unwrap();
    let s2 = map.snapshot(id).unwrap();
    assert_eq!(s1.version, s2.version);
    assert_eq!(map.snapshot_repacks(), 1, "no repack without mutation");
    assert_eq!(s1.descriptors, source_descriptors, "byte-exact copy");

    let new_pose = Se3::new(Quat::exp_so3(Vec3::new(0.0, 0.1, 0.0)), Vec3::new(1.0, 0.0, 0.0));
    map.set_pose(id, new_pose).unwrap();
    let s3 = map.snapshot(id).unwrap();
    assert_eq!(s3.version, s1.version + 1);
    assert_eq!(s3.pose, new_pose, "snapshot never serves stale poses");
    assert_eq!(map.snapshot_repacks(), 2);
}

#[test]
fn staging_buffers_reuse_after_first_allocation() {
    let mut rng = StdRng::seed_from_u64(13);
    let mut map = Map::default();
    let id = map
        .insert_keyframe(keyframe(0, vec![None; 16], &mut rng))
        .unwrap();
    for _ in 0..5 {
        map.set_pose(id, Se3::identity()).unwrap();
        map.snapshot(id).unwrap();
    }
    let counters = map.staging_counters();
    assert_eq!(counters.allocations, counters.distinct_shapes);
    assert!(counters.reuses >= 5);
}
