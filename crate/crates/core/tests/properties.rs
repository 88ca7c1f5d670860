use std::f64::consts::PI;

use proptest::prelude::*;

use simpletrack::association::{greedy_match, hungarian_match, CostMatrix};
use simpletrack::detection::Detection;
use simpletrack::geometry::{giou_3d, iou_3d, BBox3D};
use simpletrack::io::records::{parse_tracks, render_tracks};
use simpletrack::lifecycle::StateSource;
use simpletrack::metrics::{clear_mot, interpolate_tracklets, EvalConfig};
use simpletrack::motion::{KalmanParams, KalmanState};
use simpletrack::{GtRecord, TrackRecord};

fn arb_box() -> impl Strategy<Value = BBox3D> {
    (
        -3.0..3.0f64,
        -3.0..3.0f64,
        -1.0..1.0f64,
        0.5..4.0f64,
        0.5..4.0f64,
        0.5..4.0f64,
        -PI..PI,
    )
        .prop_map(|(x, y, z, l, w, h, yaw)| BBox3D::new(x, y, z, l, w, h, yaw).unwrap())
}

fn arb_track(id_range: u64) -> impl Strategy<Value = TrackRecord> {
    (0..30u64, 0..id_range, arb_box(), 0.0..1.0f64).prop_map(|(f, id, b, s)| TrackRecord {
        sequence_id: "s".into(),
        frame_index: f,
        track_id: id,
        class: "vehicle".into(),
        score: s,
        bbox: b,
        source: StateSource::Detection,
    })
}

fn dedup_tracks(mut v: Vec<TrackRecord>) -> Vec<TrackRecord> {
    v.sort_by_key(|t| (t.frame_index, t.track_id));
    v.dedup_by_key(|t| (t.frame_index, t.track_id));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_and_giou_are_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let iou = iou_3d(&a, &b);
        let giou = giou_3d(&a, &b);
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert!((-1.0..=1.0).contains(&giou));
        prop_assert!(giou <= iou + 1e-12);
        prop_assert!((iou - iou_3d(&b, &a)).abs() < 1e-9);
        prop_assert!((giou - giou_3d(&b, &a)).abs() < 1e-9);
    }

    #[test]
    fn overlap_is_invariant_under_rigid_motion(a in arb_box(), b in arb_box(), angle in -PI..PI, dx in -50.0..50.0f64) {
        let move_box = |x: &BBox3D| x.rotated_about_origin(angle).translated(dx, -dx, 0.5);
        let (ma, mb) = (move_box(&a), move_box(&b));
        prop_assert!((iou_3d(&a, &b) - iou_3d(&ma, &mb)).abs() < 1e-7);
        prop_assert!((giou_3d(&a, &b) - giou_3d(&ma, &mb)).abs() < 1e-7);
    }

    #[test]
    fn greedy_never_beats_hungarian(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let costs = CostMatrix::dense(&m);
        let h = hungarian_match(&costs);
        let g = greedy_match(&costs);
        prop_assert_eq!(h.matches.len(), rows.min(cols));
        prop_assert!(costs.total(&g.matches) >= costs.total(&h.matches) - 1e-9);
    }

    #[test]
    fn kalman_covariance_stays_symmetric_positive(obs in prop::collection::vec(arb_box(), 1..40), gaps in prop::collection::vec(1u32..4, 40)) {
        let params = KalmanParams::default();
        let mut s = KalmanState::init(&Detection::new(obs[0], 0.9, "vehicle"), &params);
        for (b, g) in obs.iter().zip(&gaps) {
            s = s.predict(*g, &params).update(b, &params);
            let p = &s.covariance;
            prop_assert!((p - p.transpose()).abs().max() < 1e-9 * p.abs().max().max(1.0));
            prop_assert!(p.cholesky().is_some());
        }
    }

    #[test]
    fn interpolation_is_idempotent(tracks in prop::collection::vec(arb_track(4), 0..30)) {
        let tracks = dedup_tracks(tracks);
        let once = interpolate_tracklets(&tracks);
        prop_assert_eq!(interpolate_tracklets(&once), once);
    }

    #[test]
    fn reports_satisfy_mota_identity(tracks in prop::collection::vec(arb_track(5), 0..40), gts in prop::collection::vec(arb_track(5), 1..40)) {
        let tracks = dedup_tracks(tracks);
        let gts: Vec<GtRecord> = dedup_tracks(gts)
            .into_iter()
            .map(|t| GtRecord { sequence_id: t.sequence_id, frame_index: t.frame_index, gt_id: t.track_id, class: t.class, bbox: t.bbox })
            .collect();
        let r = clear_mot(&tracks, &gts, &EvalConfig::default()).unwrap();
        for c in r.classes.iter().chain([&r.overall]) {
            let mota = 1.0 - (c.fp + c.fn_ + c.ids) as f64 / c.gt_count as f64;
            prop_assert!((c.mota - mota).abs() < 1e-12);
            prop_assert_eq!(c.ids_breakdown.wrong_association + c.ids_breakdown.early_termination, c.ids);
            prop_assert_eq!(c.tp + c.fn_, c.gt_count);
        }
    }

    #[test]
    fn track_files_round_trip(tracks in prop::collection::vec(arb_track(6), 1..20)) {
        let tracks = dedup_tracks(tracks);
        let text = render_tracks(&tracks);
        let back = parse_tracks(&text).unwrap();
        prop_assert_eq!(back.len(), tracks.len());
        for (a, b) in back.iter().zip(&tracks) {
            prop_assert_eq!((a.frame_index, a.track_id), (b.frame_index, b.track_id));
            prop_assert!((a.score - b.score).abs() <= 5e-7);
            prop_assert!((a.bbox.center_x - b.bbox.center_x).abs() <= 5e-7);
        }
        prop_assert_eq!(render_tracks(&back), text);
    }
}
