use super::*;
use proptest::prelude::*;

fn b(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h)
}

fn still_spec() -> SynthSpec {
    SynthSpec {
        name: "still".into(),
        frames: 5,
        width: 48,
        height: 40,
        target_w: 12,
        target_h: 10,
        seed: 3,
        waypoints: vec![Waypoint { frame: 0, x: 20.0, y: 18.0 }],
        rotation: vec![],
        scale: vec![],
        occlusions: vec![],
        noise_sigma: 0.0,
        deformation: 0.0,
        channels: 1,
    }
}

#[test]
fn iou_cases() {
    let a = b(0.0, 0.0, 2.0, 2.0);
    assert_eq!(iou(&a, &a), 1.0);
    assert_eq!(iou(&a, &b(5.0, 5.0, 2.0, 2.0)), 0.0);
    assert!((iou(&a, &b(1.0, 0.0, 2.0, 2.0)) - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn center_error_cases() {
    let a = b(0.0, 0.0, 4.0, 4.0);
    let c = b(3.0, 4.0, 4.0, 4.0);
    assert_eq!(center_error(&a, &a), 0.0);
    assert_eq!(center_error(&a, &c), 5.0);
    assert_eq!(center_error(&c, &a), 5.0);
}

#[test]
fn perfect_tracking_metrics() {
    let gt: Vec<_> = (0..10).map(|i| b(i as f64, 2.0, 8.0, 6.0)).collect();
    let m = evaluate_ope(&gt, &gt).unwrap();
    assert_eq!(m.precision_20, 1.0);
    assert!((m.auc - 20.0 / 21.0).abs() < 1e-12);
    assert_eq!(m.mean_center_error, 0.0);
    assert_eq!(m.precision_curve.len(), 51);
    assert_eq!(m.success_curve.len(), 21);
}

#[test]
fn disjoint_tracking_metrics() {
    let gt: Vec<_> = (0..4).map(|_| b(0.0, 0.0, 5.0, 5.0)).collect();
    let res: Vec<_> = (0..4).map(|_| b(100.0, 100.0, 5.0, 5.0)).collect();
    let m = evaluate_ope(&res, &gt).unwrap();
    assert_eq!(m.precision_20, 0.0);
    assert_eq!(m.auc, 0.0);
    assert!(evaluate_ope(&res[..3], &gt).is_err());
}

proptest! {
    #[test]
    fn curves_are_monotone(offsets in proptest::collection::vec((-30.0f64..30.0, -30.0f64..30.0, 0.5f64..2.0), 1..30)) {
        let gt: Vec<_> = offsets.iter().map(|_| b(50.0, 50.0, 20.0, 20.0)).collect();
        let res: Vec<_> = offsets.iter().map(|&(dx, dy, s)| b(50.0 + dx, 50.0 + dy, 20.0 * s, 20.0 * s)).collect();
        let m = evaluate_ope(&res, &gt).unwrap();
        prop_assert!(m.precision_curve.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(m.success_curve.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((0.0..=1.0).contains(&m.auc));
        for (r, g) in res.iter().zip(&gt) {
            let o = iou(r, g);
            prop_assert!((0.0..=1.0).contains(&o));
            prop_assert_eq!(o, iou(g, r));
        }
    }
}

#[test]
fn static_spec_gives_identical_boxes() {
    let seq = synthesize_sequence(&still_spec()).unwrap();
    assert_eq!(seq.frames.len(), 5);
    assert!(seq.gt.iter().all(|g| *g == seq.gt[0]));
    assert_eq!(seq.frames[0], seq.frames[4]);
    assert_eq!(seq.frames[0].shape(), &[40, 48, 1]);
}

#[test]
fn linear_path_is_arithmetic() {
    let spec = SynthSpec {
        frames: 8,
        waypoints: vec![Waypoint { frame: 0, x: 10.0, y: 18.0 }, Waypoint { frame: 7, x: 24.0, y: 18.0 }],
        ..still_spec()
    };
    let seq = synthesize_sequence(&spec).unwrap();
    for pair in seq.gt.windows(2) {
        assert_eq!(pair[1].x - pair[0].x, 2.0);
        assert_eq!(pair[1].y, pair[0].y);
    }
}

#[test]
fn synthesis_is_deterministic() {
    let spec = SynthSpec {
        noise_sigma: 0.05,
        deformation: 1.5,
        rotation: vec![Keyframe { frame: 0, value: 0.0 }, Keyframe { frame: 4, value: 90.0 }],
        channels: 3,
        ..still_spec()
    };
    let a = synthesize_sequence(&spec).unwrap();
    let b = synthesize_sequence(&spec).unwrap();
    assert_eq!(a, b);
    let c = synthesize_sequence(&SynthSpec { seed: 4, ..spec }).unwrap();
    assert_ne!(a.frames[0], c.frames[0]);
}

#[test]
fn target_differs_from_background() {
    let seq = synthesize_sequence(&still_spec()).unwrap();
    let moved = synthesize_sequence(&SynthSpec {
        waypoints: vec![Waypoint { frame: 0, x: 30.0, y: 25.0 }],
        ..still_spec()
    })
    .unwrap();
    assert_ne!(seq.frames[0], moved.frames[0]);
}

#[test]
fn path_leaving_frame_is_rejected() {
    let spec = SynthSpec {
        waypoints: vec![Waypoint { frame: 0, x: 10.0, y: 10.0 }, Waypoint { frame: 4, x: 60.0, y: 10.0 }],
        ..still_spec()
    };
    assert!(matches!(synthesize_sequence(&spec), Err(Error::Spec(_))));
}

#[test]
fn translation_preset_moves_at_speed() {
    let spec = SynthSpec::translation("t", 100, 96, 24, 2.0, 2.0 / 255.0, 1);
    spec.validate().unwrap();
    for f in 1..100 {
        let (a, b) = (spec.center_at(f - 1), spec.center_at(f));
        let step = (b.0 - a.0).abs().max((b.1 - a.1).abs());
        assert!((step - 2.0).abs() < 1e-9, "frame {f}: {step}");
    }
}

#[test]
fn groundtruth_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("groundtruth.txt");
    std::fs::write(&p, "10,20,30,40\n").unwrap();
    let gt = read_groundtruth(&p).unwrap();
    assert_eq!(gt[0].to_external(), (10.0, 20.0, 30.0, 40.0));
    std::fs::write(&p, "10,20,30,40\n1,2,x,4\n").unwrap();
    match read_groundtruth(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn missing_frame_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synthesize_sequence(&still_spec()).unwrap();
    save_sequence(&seq, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("img/00000003.pgm")).unwrap();
    match load_sequence(dir.path()) {
        Err(Error::MissingFile(p)) => assert!(p.to_string_lossy().contains("00000003")),
        other => panic!("expected missing file, got {other:?}"),
    }
}

#[test]
fn sequence_round_trip() {
    for channels in [1, 3] {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            channels,
            noise_sigma: 0.02,
            waypoints: vec![Waypoint { frame: 0, x: 20.3, y: 18.0 }, Waypoint { frame: 4, x: 23.9, y: 21.7 }],
            scale: vec![Keyframe { frame: 0, value: 1.0 }, Keyframe { frame: 4, value: 1.13 }],
            ..still_spec()
        };
        let seq = synthesize_sequence(&spec).unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back.gt, seq.gt);
        assert_eq!(back.frames, seq.frames);
    }
}

#[test]
fn results_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let res: Vec<_> = (0..6)
        .map(|i| FrameResult {
            bbox: b(0.1 * i as f64 + 1.0 / 3.0, 2.7, 10.0 / 7.0 + i as f64, 5.5),
            score: 0.25 * i as f64 - 0.1,
        })
        .collect();
    save_results(dir.path(), &res, &serde_json::json!({"frames": 6})).unwrap();
    assert_eq!(load_results(dir.path()).unwrap(), res);
}
