use proptest::prelude::*;
use screwdesign::motion_io::synth::{self, SyntheticMotion};
use screwdesign::motion_io::{
    extract_upper_body, parse_bvh, skeleton_fk, write_bvh, BvhMotion, ExtractOptions, JoiMap, MotionError,
};

fn motion_with(frames: Vec<Vec<f64>>) -> BvhMotion {
    BvhMotion {
        skeleton: synth::skeleton(),
        frame_time: 1.0 / 30.0,
        frames,
    }
}

fn frames() -> impl Strategy<Value = Vec<Vec<f64>>> {
    let n = synth::skeleton().channel_count();
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), 1..4)
}

proptest! {
    #[test]
    fn written_files_parse_to_the_same_poses(fs in frames()) {
        let m = motion_with(fs);
        let back = parse_bvh(&write_bvh(&m)).unwrap();
        prop_assert_eq!(back.frames.len(), m.frames.len());
        prop_assert_eq!(&back.skeleton.joints.len(), &m.skeleton.joints.len());
        for (a, b) in m.frames.iter().zip(&back.frames) {
            let pa = skeleton_fk(&m.skeleton, a).unwrap();
            let pb = skeleton_fk(&back.skeleton, b).unwrap();
            for (x, y) in pa.joints.iter().zip(&pb.joints) {
                prop_assert!((x - y).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn extraction_ignores_root_translation(dx in -50.0f64..50.0, dy in -50.0f64..50.0, dz in -50.0f64..50.0) {
        let m = synth::generate(SyntheticMotion::Swim, 5);
        let mut shifted = m.clone();
        for f in shifted.frames.iter_mut() {
            f[0] += dx;
            f[1] += dy;
            f[2] += dz;
        }
        let opts = ExtractOptions::default();
        let a = extract_upper_body(&m, &JoiMap::cmu(), &opts).unwrap();
        let b = extract_upper_body(&shifted, &JoiMap::cmu(), &opts).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (p, q) in fa.iter().zip(fb) {
                prop_assert!((p - q).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn every_synthetic_clip_round_trips_and_extracts() {
    for kind in [SyntheticMotion::Wave, SyntheticMotion::Chicken, SyntheticMotion::Swim] {
        let m = synth::generate(kind, 24);
        let back = parse_bvh(&write_bvh(&m)).unwrap();
        let a = extract_upper_body(&m, &JoiMap::cmu(), &ExtractOptions::default()).unwrap();
        let b = extract_upper_body(&back, &JoiMap::cmu(), &ExtractOptions::default()).unwrap();
        assert_eq!(a.frame_count(), 24, "{}", kind.name());
        assert_eq!(a.names, b.names);
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (p, q) in fa.iter().zip(fb) {
                assert!((p - q).norm() < 1e-6, "{}", kind.name());
            }
        }
        let root = a.track("root").unwrap();
        assert!(a.frames.iter().all(|f| f[root].norm() < 1e-12));
        assert_eq!(SyntheticMotion::from_name(kind.name()), Some(kind));
    }
}

#[test]
fn missing_tracks_are_named() {
    let m = synth::generate(SyntheticMotion::Wave, 3);
    let map = JoiMap::cmu().with("r_wrist", "NoSuchJoint");
    match extract_upper_body(&m, &map, &ExtractOptions::default()) {
        Err(MotionError::MissingJoi(name)) => assert_eq!(name, "r_wrist"),
        other => panic!("expected a missing track, got {other:?}"),
    }
}

#[test]
fn garbage_is_rejected() {
    assert!(parse_bvh("").is_err());
    assert!(parse_bvh("HIERARCHY\nROOT Hips\n{\n").is_err());
}
