use proptest::prelude::*;

use vtube::controller::{validate_feasibility, ControlParams, Snapshot, TubeController, Variant};
use vtube::geometry::{TrapezoidTube, Vec2};
use vtube::potentials::{sigma, BarrierParams, Panel};

fn tube() -> impl Strategy<Value = TrapezoidTube> {
    (2.0f64..30.0, 1.0f64..8.0, 0.3f64..1.3, 0.3f64..1.3, 0.0f64..std::f64::consts::TAU, -10.0f64..10.0, -10.0f64..10.0).prop_filter_map(
        "degenerate",
        |(len, w, l, r, rot, sx, sy)| {
            let f = |p: Vec2| p.rotated(rot) + Vec2::new(sx, sy);
            TrapezoidTube::new(f(Vec2::new(0.0, w)), f(Vec2::new(len, w * l)), f(Vec2::new(0.0, -w)), f(Vec2::new(len, -w * r)), 2.0).ok()
        },
    )
}

fn inside(t: &TrapezoidTube, a: f64, s: f64) -> Vec2 {
    t.left_at(a * t.length()).lerp(t.right_at(a * t.length()), s)
}

proptest! {
    #[test]
    fn unit_vectors_and_orientation(t in tube()) {
        for u in [t.t_c, t.t_l, t.t_r, t.n_c, t.n_l, t.n_r] {
            prop_assert!((u.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!(t.n_l.dot(t.t_l).abs() < 1e-12);
        prop_assert!(t.n_r.dot(t.t_r).abs() < 1e-12);
        prop_assert!(t.t_l.dot(t.t_c) > 0.0 && t.t_r.dot(t.t_c) > 0.0);
        let g = t.centroid();
        prop_assert!(t.n_l.dot(g - t.p_l1) > 0.0 && t.n_r.dot(g - t.p_r1) > 0.0);
    }

    #[test]
    fn interior_points_have_nonnegative_distances(t in tube(), a in 0.0f64..=1.0, s in 0.0f64..=1.0) {
        let p = inside(&t, a, s);
        let tol = 1e-9 * t.diameter();
        prop_assert!(t.dist_left(p) >= -tol && t.dist_right(p) >= -tol);
        prop_assert!(t.dist_to_finish(p) >= -tol);
        prop_assert!(t.inset(p) >= -tol);
    }

    #[test]
    fn sigma_is_nonincreasing_and_bounded(d1 in 0.1f64..2.0, w in 0.05f64..2.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let d2 = d1 + w;
        let (x, y) = (d1 - 0.5 + a * (w + 1.0), d1 - 0.5 + b * (w + 1.0));
        let (sx, sy) = (sigma(x, d1, d2).unwrap(), sigma(y, d1, d2).unwrap());
        prop_assert!((0.0..=1.0).contains(&sx));
        if x <= y {
            prop_assert!(sx >= sy - 1e-12);
        }
    }

    #[test]
    fn barrier_is_nonincreasing_and_nonnegative(d1 in 0.1f64..1.0, f in 1.1f64..3.0, a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let p = BarrierParams::new(1.0, d1, d1 * f, 1e-6, 1e-6).unwrap();
        let (x, y) = (a * 1.2 * p.d2, b * 1.2 * p.d2);
        let (vx, vy) = (p.value(x).unwrap(), p.value(y).unwrap());
        prop_assert!(vx >= 0.0 && vy >= 0.0);
        prop_assert!(p.deriv(x).unwrap() <= 0.0);
        if x <= y {
            prop_assert!(vx >= vy * (1.0 - 1e-12));
        }
    }

    #[test]
    fn panel_gradient_points_away(len in 0.5f64..20.0, r in 0.0f64..0.5, along in -0.5f64..1.5, gap in 0.01f64..5.0, side in prop::bool::ANY) {
        let panel = Panel::new(Vec2::ZERO, Vec2::new(len, 0.0), r).unwrap();
        let foot = Vec2::new((along * len).clamp(0.0, len), 0.0);
        let dir = (Vec2::new(along * len, if side { 1.0 } else { -1.0 }) - foot).normalized().unwrap();
        let p = foot + dir * (r + gap);
        let g = panel.grad(p).unwrap();
        // The log kernel grows with distance: its gradient has a positive
        // component away from the nearest point of the panel.
        prop_assert!(g.dot(p - foot) > 0.0);
    }

    #[test]
    fn lone_agent_moves_downstream(t in tube(), a in 0.05f64..0.95, s in 0.1f64..0.9) {
        let params = ControlParams::default();
        let p = inside(&t, a, s);
        prop_assume!(t.dist_left(p) > params.r_s && t.dist_right(p) > params.r_s);
        prop_assume!(validate_feasibility(&t, &params, Variant::Modified).passed());
        let c = TubeController::new(t.clone(), params, Variant::Modified).unwrap();
        let u = c.command(&Snapshot::new(vec![p]), 0).unwrap();
        prop_assert!(u.dot(t.t_c) > 0.0);
        prop_assert!(u.norm() >= params.v - params.v_max_prime && u.norm() <= params.v + params.v_max_prime);
    }
}
