use haultrack::path::{build_path, format_waypoints, parse_waypoints, wrap_angle};
use haultrack::pathgen::{generate, PathSpec, Segment, StartPose};
use proptest::prelude::*;

fn segment() -> impl Strategy<Value = Segment> {
    prop_oneof![
        (20.0f64..200.0, -0.06f64..0.06).prop_map(|(length, grade)| Segment::Straight { length, grade }),
        (40.0f64..300.0, 20.0f64..120.0, any::<bool>(), -0.06f64..0.06).prop_map(|(radius, a, left, grade)| {
            Segment::Arc { radius, angle_deg: if left { a } else { -a }, grade }
        }),
    ]
}

fn spec() -> impl Strategy<Value = PathSpec> {
    (prop::collection::vec(segment(), 1..5), -3.0f64..3.0).prop_map(|(segments, heading)| PathSpec {
        spacing: 1.0,
        start: StartPose { heading, ..Default::default() },
        segments,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn generated_geometry_round_trips(spec in spec()) {
        let wps = generate(&spec).unwrap();
        let path = build_path(&wps, 1.0).unwrap();
        let total = spec.total_length();
        // chords of arcs are slightly shorter than the arcs
        prop_assert!((path.total_length() - total).abs() <= 1e-3 * total, "{} vs {}", path.total_length(), total);

        let mut s0 = 0.0;
        let mut z0 = spec.start.altitude;
        for seg in &spec.segments {
            let len = seg.length();
            let mid = s0 + len / 2.0;
            if len > 30.0 {
                let k = path.signed_curvature_at(mid);
                prop_assert!((k - seg.curvature()).abs() <= 0.02 * seg.curvature().abs() + 1e-4,
                    "curvature {} expected {}", k, seg.curvature());
                let slope = path.slope_at(mid, 5.0).tan();
                prop_assert!((slope - seg.grade()).abs() <= 1e-3, "grade {} expected {}", slope, seg.grade());
            }
            z0 += seg.grade() * len;
            s0 += len;
        }
        prop_assert!((path.altitude_at(path.total_length()) - z0).abs() <= 0.1);
    }

    #[test]
    fn normal_offsets_project_to_signed_distance(spec in spec(), frac in 0.05f64..0.95, d in -3.0f64..3.0) {
        let path = build_path(&generate(&spec).unwrap(), 1.0).unwrap();
        let s = frac * path.total_length();
        // stay clear of the centre of curvature
        prop_assume!(d.abs() * path.curvature_at(s) < 0.2);
        let (x, y) = path.point_at(s);
        let psi = path.heading_at(s);
        let (px, py) = (x - d * psi.sin(), y + d * psi.cos());
        let pr = path.project_near(px, py, psi + 0.1, s, 10.0);
        prop_assert!((pr.rho - d).abs() <= 0.02, "rho {} expected {}", pr.rho, d);
        prop_assert!((pr.s - s).abs() <= 0.1 + 0.05 * d.abs());
        prop_assert!(wrap_angle(pr.theta - 0.1).abs() <= 0.02);
    }

    #[test]
    fn waypoint_text_round_trips(spec in spec()) {
        let wps = generate(&spec).unwrap();
        let back = parse_waypoints(&format_waypoints(&wps)).unwrap();
        prop_assert_eq!(back, wps);
    }
}
