//! Property-based invariants of the library, checked against independent
//! constructions where one exists.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Rotation3, Unit, Vector3};
use proptest::prelude::*;

use mfac::analysis::{closed_loop_matrix, stability_check};
use mfac::controller::{mfac_step, scheduled_lambda, BoxConstraints, Weighting};
use mfac::edlm::{Dimensions, PseudoJacobian, RegressorWindow};
use mfac::kinematics::{
    angle_axis_error, euler_from_rotation, forward_kinematics, ik_solve, rotation_from_euler, task_jacobian,
    KinematicChain, TaskVector,
};
use mfac::pathgen::{
    euler_to_quat, generate_path, orientation_arc_length, quat_geodesic, quintic_eval, quintic_solve, PathSpec,
};

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI { r + 2.0 * PI } else { r }
}

fn joints() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI..PI, 6)
}

fn unit_axis() -> impl Strategy<Value = Vector3<f64>> {
    (0.0..PI, -PI..PI).prop_map(|(polar, azimuth)| {
        Vector3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos())
    })
}

fn task() -> impl Strategy<Value = TaskVector> {
    (
        prop::array::uniform3(-500.0..500.0f64),
        -PI..PI,
        -1.4..1.4f64,
        -PI..PI,
    )
        .prop_map(|([x, y, z], alpha, beta, gamma)| TaskVector {
            x,
            y,
            z,
            alpha,
            beta,
            gamma,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn forward_kinematics_yields_proper_rotations(q in joints()) {
        let pose = forward_kinematics(&KinematicChain::table_one(), &q).unwrap();
        let r = pose.rotation;
        prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_round_trip(alpha in -PI..PI, beta in -1.47..1.47f64, gamma in -PI..PI) {
        let (a, b, g) = euler_from_rotation(&rotation_from_euler(alpha, beta, gamma)).unwrap();
        prop_assert!(wrap(a - alpha).abs() < 1e-9);
        prop_assert!((b - beta).abs() < 1e-9);
        prop_assert!(wrap(g - gamma).abs() < 1e-9);
    }

    #[test]
    fn euler_matrix_matches_axis_composition(alpha in -PI..PI, beta in -PI..PI, gamma in -PI..PI) {
        let oracle = Rotation3::from_axis_angle(&Vector3::z_axis(), gamma)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), beta)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), alpha);
        prop_assert!((rotation_from_euler(alpha, beta, gamma) - oracle.matrix()).abs().max() < 1e-12);
        prop_assert!((euler_to_quat(alpha, beta, gamma).rotation() - oracle.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn angle_axis_error_recovers_relative_rotation(
        axis in unit_axis(),
        theta in 1e-6..(PI - 1e-3),
        base in (unit_axis(), -PI..PI),
    ) {
        let current = Rotation3::from_axis_angle(&Unit::new_normalize(base.0), base.1);
        let delta = Rotation3::from_axis_angle(&Unit::new_normalize(axis), theta);
        let desired = delta * current;
        let e = angle_axis_error(desired.matrix(), current.matrix()).unwrap();
        prop_assert!((e.norm() - theta).abs() < 1e-9);
        prop_assert!((e - axis * theta).norm() < 1e-8);
    }

    #[test]
    fn box_projection_is_feasible_and_idempotent(
        lo in prop::collection::vec(-5.0..0.0f64, 3),
        width in prop::collection::vec(0.0..5.0f64, 3),
        u in prop::collection::vec(-20.0..20.0f64, 3),
    ) {
        let lower = DVector::from_vec(lo);
        let upper = &lower + DVector::from_vec(width);
        let b = BoxConstraints::new(lower, upper).unwrap();
        let u = DVector::from_vec(u);
        let p = b.project(&u);
        prop_assert!(b.contains(&p));
        prop_assert_eq!(b.violations(&p), 0);
        prop_assert_eq!(b.project(&p), p.clone());
        if b.contains(&u) {
            prop_assert_eq!(p, u);
        }
    }

    #[test]
    fn quintic_meets_its_boundary_conditions(
        s in -100.0..100.0f64,
        v0 in -10.0..10.0f64,
        a0 in -10.0..10.0f64,
        vf in -10.0..10.0f64,
        af in -10.0..10.0f64,
        tf in 0.2..20.0f64,
    ) {
        let c = quintic_solve(s, v0, a0, vf, af, tf).unwrap();
        let scale = 1.0 + s.abs() + v0.abs() + a0.abs() + vf.abs() + af.abs();
        let (s0, sd0, sdd0) = quintic_eval(&c, 0.0);
        let (s1, sd1, sdd1) = quintic_eval(&c, tf);
        prop_assert_eq!((s0, sd0, sdd0), (0.0, v0, a0));
        prop_assert!((s1 - s).abs() < 1e-9 * scale);
        prop_assert!((sd1 - vf).abs() < 1e-9 * scale);
        prop_assert!((sdd1 - af).abs() < 1e-9 * scale);
    }

    #[test]
    fn geodesic_advances_linearly_in_angle(a in task(), b in task(), tau in 0.0..1.0f64) {
        let q0 = euler_to_quat(a.alpha, a.beta, a.gamma);
        let qf = euler_to_quat(b.alpha, b.beta, b.gamma);
        let arc = orientation_arc_length(&q0, &qf);
        prop_assume!(arc > 1e-6 && arc < PI - 1e-6);
        let q = quat_geodesic(&q0, &qf, tau);
        prop_assert!((orientation_arc_length(&q0, &q) - tau * arc).abs() < 1e-9);
        prop_assert!((orientation_arc_length(&q, &qf) - (1.0 - tau) * arc).abs() < 1e-9);
    }

    #[test]
    fn scheduled_lambda_is_monotone(c1 in 0.0..1e6f64, c2 in 0.0..1e6f64) {
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        prop_assert!(scheduled_lambda(lo) <= scheduled_lambda(hi));
        prop_assert!([0.0, 0.05, 0.1].contains(&scheduled_lambda(c1)));
    }

    #[test]
    fn scalar_loop_root_is_lambda_over_one_plus_lambda(lambda in 0.0..50.0f64) {
        let dims = Dimensions::new(1, 1, 0, 1).unwrap();
        let pjm = PseudoJacobian::filled(&dims, 1.0);
        let report = stability_check(&closed_loop_matrix(&pjm, &Weighting::uniform(lambda, 1).unwrap()).unwrap()).unwrap();
        prop_assert!(report.stable);
        prop_assert!((report.max_root() - lambda / (1.0 + lambda)).abs() < 1e-9);
    }
}

fn leading_block_pjm(phi: &[f64]) -> PseudoJacobian {
    let dims = Dimensions::new(2, 2, 0, 1).unwrap();
    PseudoJacobian::from_flat(&dims, &DMatrix::from_row_slice(2, 2, phi)).unwrap()
}

fn invertible_2x2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 4).prop_filter("well conditioned", |m| {
        let d = DMatrix::from_row_slice(2, 2, m);
        mfac::linalg::condition_number(&d) < 50.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unweighted_law_hits_the_predicted_target(
        phi in invertible_2x2(),
        y in prop::collection::vec(-3.0..3.0f64, 2),
        r in prop::collection::vec(-3.0..3.0f64, 2),
    ) {
        let pjm = leading_block_pjm(&phi);
        let window = RegressorWindow::zeros(2, 2, 1, 1, 5);
        let (y, r) = (DVector::from_vec(y), DVector::from_vec(r));
        let d = mfac_step(&pjm, &window, &y, &r, &Weighting::uniform(0.0, 2).unwrap()).unwrap();
        let predicted = &y + pjm.leading_input_block() * &d.delta_u;
        prop_assert!((predicted - &r).amax() < 1e-10 * (1.0 + d.delta_u.amax()));
    }

    #[test]
    fn weighting_shrinks_the_move(
        phi in invertible_2x2(),
        e in prop::collection::vec(-3.0..3.0f64, 2),
        l1 in 0.0..5.0f64,
        l2 in 0.0..5.0f64,
    ) {
        let (small, large) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let pjm = leading_block_pjm(&phi);
        let window = RegressorWindow::zeros(2, 2, 1, 1, 5);
        let y = DVector::zeros(2);
        let r = DVector::from_vec(e);
        let step = |l: f64| mfac_step(&pjm, &window, &y, &r, &Weighting::uniform(l, 2).unwrap()).unwrap().delta_u.norm();
        prop_assert!(step(large) <= step(small) * (1.0 + 1e-12) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn task_jacobian_matches_finite_rotation_vectors(q in joints()) {
        let chain = KinematicChain::table_one();
        let jac = task_jacobian(&chain, &q).unwrap();
        let h = 1e-7;
        let base = forward_kinematics(&chain, &q).unwrap();
        for j in 0..6 {
            let mut qp = q.clone();
            qp[j] += h;
            let moved = forward_kinematics(&chain, &qp).unwrap();
            let dp = (moved.position - base.position) / h;
            // skew part of the relative rotation is sin(θ)·k, which is θ·k to O(h³)
            let rel = moved.rotation * base.rotation.transpose();
            let dr = Vector3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]) / (2.0 * h);
            let scale = 1.0 + dp.norm();
            prop_assert!((jac.fixed_view::<3, 1>(0, j) - dp).norm() < 1e-3 * scale, "position column {}", j);
            prop_assert!((jac.fixed_view::<3, 1>(3, j) - dr).norm() < 1e-5, "orientation column {}", j);
        }
    }

    #[test]
    fn ik_uses_only_scheduled_damping(q in joints(), offset in prop::collection::vec(-0.3..0.3f64, 6)) {
        let chain = KinematicChain::table_one();
        let target_q: Vec<f64> = q.iter().zip(&offset).map(|(a, b)| a + b).collect();
        let target = forward_kinematics(&chain, &target_q).unwrap();
        let res = ik_solve(&chain, &q, &target, 10).unwrap();
        prop_assert!(res.iterations <= 10);
        prop_assert_eq!(res.lambda_trace.len(), res.iterations);
        prop_assert!(res.lambda_trace.iter().all(|l| [0.0, 0.05, 0.1].contains(l)));
    }

    #[test]
    fn paths_are_straight_and_monotone(a in task(), b in task(), tf in 0.5..5.0f64) {
        let (p0, pf) = (a.position(), b.position());
        let length = (pf - p0).norm();
        prop_assume!(length > 1.0);
        let t0 = tf / 64.0;
        let path = generate_path(&PathSpec::rest_to_rest(a, b, tf, t0)).unwrap();
        prop_assert_eq!(path.len(), 65);
        let dir = (pf - p0) / length;
        let q0 = euler_to_quat(a.alpha, a.beta, a.gamma);
        let qf = euler_to_quat(b.alpha, b.beta, b.gamma);
        let arc = orientation_arc_length(&q0, &qf);
        // peak speed of a rest-to-rest quintic is 15/8 of the mean
        let max_step = 15.0 / 8.0 * arc / tf * t0 * (1.0 + 1e-6) + 1e-9;
        let mut prev_s = 0.0;
        let mut prev_q = q0;
        let mut prev_angle = 0.0;
        for sample in &path.samples {
            let p = sample.task.position();
            let s = (p - p0).dot(&dir);
            prop_assert!((p - p0 - dir * s).norm() < 1e-9 * (1.0 + length));
            prop_assert!(s >= prev_s - 1e-9 && s <= length + 1e-9);
            prev_s = s;
            let q = euler_to_quat(sample.task.alpha, sample.task.beta, sample.task.gamma);
            let angle = orientation_arc_length(&q0, &q);
            prop_assert!(angle >= prev_angle - 1e-7);
            prop_assert!(orientation_arc_length(&prev_q, &q) <= max_step + 1e-7);
            prev_angle = angle;
            prev_q = q;
        }
    }
}
