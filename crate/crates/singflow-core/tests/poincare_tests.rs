//! Linear and sectional Poincaré flow checks: closed forms on linear
//! fields, cocycle identities on Lorenz, Floquet multipliers on the
//! suspension saddle, and the finite-difference linearization law.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use singflow_core::field::{FieldSpec, Region};
use singflow_core::flow::flow;
use singflow_core::poincare::{
    holonomy_radius, linear_poincare_matrix, normal_frame, rescaled_linear_poincare_matrix,
    rescaled_sectional_poincare, sectional_poincare, NormalVector,
};
use singflow_core::{Error, DEFAULT_TOL};

fn diag_field() -> FieldSpec {
    let a = Matrix3::from_diagonal(&Vector3::new(-2.0, -1.0, 1.0));
    FieldSpec::linear(a, Region::new([[-2.0, 2.0]; 3]).unwrap()).unwrap()
}

#[test]
fn linear_poincare_is_diagonal_on_the_z_axis_orbit() {
    // On the z-axis the flow direction is e_z, the normal frame is
    // (e_x, e_y), and the x/y dynamics decouple exactly.
    let field = diag_field();
    let x0 = Vector3::new(0.0, 0.0, 0.1);
    for t in [0.5, 1.0, 2.0, 3.0] {
        let (psi, fx, fy) = linear_poincare_matrix(&field, &x0, t, 1e-12).unwrap();
        assert!((fx.e1 - Vector3::x()).norm() < 1e-12);
        assert!((fx.e2 - Vector3::y()).norm() < 1e-12);
        assert!((fy.e1 - Vector3::x()).norm() < 1e-12);
        let exact = Matrix2::new((-2.0 * t).exp(), 0.0, 0.0, (-t).exp());
        assert!((psi - exact).norm() < 1e-8, "t={t}: {}", (psi - exact).norm());
    }
}

#[test]
fn rescaled_linear_poincare_divides_by_speed_growth() {
    // Speed on the z-axis grows like e^t, so psi* = e^{-t} psi.
    let field = diag_field();
    let x0 = Vector3::new(0.0, 0.0, 0.1);
    for t in [0.5, 1.0, 2.0] {
        let (psi_star, _, _) = rescaled_linear_poincare_matrix(&field, &x0, t, 1e-12).unwrap();
        let exact = Matrix2::new((-3.0 * t).exp(), 0.0, 0.0, (-2.0 * t).exp());
        assert!((psi_star - exact).norm() < 1e-8, "t={t}");
    }
}

fn lorenz_attractor_point() -> (FieldSpec, Vector3<f64>) {
    let field = FieldSpec::lorenz_classic();
    let x = flow(&field, &Vector3::new(1.0, 1.0, 1.0), 30.0, DEFAULT_TOL).unwrap();
    (field, x)
}

#[test]
fn normal_frames_are_orthonormal_and_oriented() {
    let (field, mut x) = lorenz_attractor_point();
    for _ in 0..8 {
        let f = normal_frame(&field, &x).unwrap();
        assert!((f.e1.norm() - 1.0).abs() < 1e-12);
        assert!((f.e2.norm() - 1.0).abs() < 1e-12);
        assert!(f.e1.dot(&f.e2).abs() < 1e-12);
        let n = field.evaluate(&x) / field.evaluate(&x).norm();
        assert!((f.e1.cross(&f.e2) - n).norm() < 1e-12);
        assert!(f.e1.dot(&n).abs() < 1e-12 && f.e2.dot(&n).abs() < 1e-12);
        assert!((f.speed - field.evaluate(&x).norm()).abs() < 1e-12);
        x = flow(&field, &x, 0.7, DEFAULT_TOL).unwrap();
    }
}

#[test]
fn linear_poincare_cocycle_telescopes_on_lorenz() {
    let (field, x) = lorenz_attractor_point();
    for (s, t) in [(0.6, 0.9), (1.2, 0.4)] {
        let (psi_t, _, _) = linear_poincare_matrix(&field, &x, t, DEFAULT_TOL).unwrap();
        let mid = flow(&field, &x, t, DEFAULT_TOL).unwrap();
        let (psi_s, _, _) = linear_poincare_matrix(&field, &mid, s, DEFAULT_TOL).unwrap();
        let (psi_st, _, _) = linear_poincare_matrix(&field, &x, s + t, DEFAULT_TOL).unwrap();
        let rel = (psi_s * psi_t - psi_st).norm() / psi_st.norm();
        assert!(rel < 1e-5, "s={s} t={t}: psi telescoping error {rel}");
    }
}

#[test]
fn rescaled_cocycle_telescopes_on_lorenz() {
    let (field, x) = lorenz_attractor_point();
    for (s, t) in [(0.6, 0.9), (1.2, 0.4)] {
        let (p_t, _, _) = rescaled_linear_poincare_matrix(&field, &x, t, DEFAULT_TOL).unwrap();
        let mid = flow(&field, &x, t, DEFAULT_TOL).unwrap();
        let (p_s, _, _) = rescaled_linear_poincare_matrix(&field, &mid, s, DEFAULT_TOL).unwrap();
        let (p_st, _, _) = rescaled_linear_poincare_matrix(&field, &x, s + t, DEFAULT_TOL).unwrap();
        let rel = (p_s * p_t - p_st).norm() / p_st.norm();
        assert!(rel < 1e-5, "s={s} t={t}: psi* telescoping error {rel}");
    }
}

/// FD derivative of the sectional flow against the linear Poincaré flow:
/// the quotient error ‖P_t(h v) − h ψ_t v‖ / h must shrink linearly in h.
fn fd_ratios(
    field: &FieldSpec,
    x: &Vector3<f64>,
    t: f64,
    coords: Vector2<f64>,
    rescaled: bool,
) -> Vec<f64> {
    let frame = normal_frame(field, x).unwrap();
    let (psi, _, _) = if rescaled {
        rescaled_linear_poincare_matrix(field, x, t, DEFAULT_TOL).unwrap()
    } else {
        linear_poincare_matrix(field, x, t, DEFAULT_TOL).unwrap()
    };
    let mut errs = Vec::new();
    for h in [1e-3, 5e-4, 2.5e-4] {
        let v = NormalVector { frame, coords: coords * h };
        let image = if rescaled {
            rescaled_sectional_poincare(field, x, t, &v, DEFAULT_TOL).unwrap()
        } else {
            sectional_poincare(field, x, t, &v, DEFAULT_TOL).unwrap()
        };
        errs.push((image.coords - psi * (coords * h)).norm() / h);
    }
    errs.windows(2).map(|w| w[1] / w[0]).collect()
}

#[test]
fn sectional_flow_linearizes_to_linear_poincare() {
    let (field, mut x) = lorenz_attractor_point();
    for i in 0..3 {
        for rescaled in [false, true] {
            let dir = if i % 2 == 0 { Vector2::new(1.0, 0.0) } else { Vector2::new(0.0, 1.0) };
            for r in fd_ratios(&field, &x, 1.0, dir, rescaled) {
                assert!(
                    (0.35..=0.65).contains(&r),
                    "sample {i} rescaled={rescaled}: halving ratio {r}"
                );
            }
        }
        x = flow(&field, &x, 1.3, DEFAULT_TOL).unwrap();
    }
}

#[test]
fn sectional_return_map_has_the_floquet_multipliers() {
    // The unit circle of the suspension saddle is a period-1 orbit with
    // multipliers e^{-2 lambda} = 1/2 (radial) and e^{mu} = 2 (axial).
    let field = FieldSpec::suspension_saddle_default();
    let x = Vector3::new(1.0, 0.0, 0.0);
    let frame = normal_frame(&field, &x).unwrap();
    // Frame here: flow direction e_y, e1 = e_x (radial), e2 = -e_z.
    assert!((frame.e1 - Vector3::x()).norm() < 1e-12);
    let h = 1e-5;
    let mut dp = Matrix2::zeros();
    for (j, coords) in [Vector2::new(h, 0.0), Vector2::new(0.0, h)].iter().enumerate() {
        let v = NormalVector { frame, coords: *coords };
        let image = sectional_poincare(&field, &x, 1.0, &v, 1e-11).unwrap();
        dp.set_column(j, &(image.coords / h));
    }
    let exact = Matrix2::new(0.5, 0.0, 0.0, 2.0);
    assert!((dp - exact).norm() < 5e-3, "DP = {dp}");
}

#[test]
fn offsets_beyond_the_holonomy_radius_are_rejected() {
    let (field, x) = lorenz_attractor_point();
    let radius = holonomy_radius(&field, &x).unwrap();
    assert!(radius > 0.0);
    let frame = normal_frame(&field, &x).unwrap();
    let v = NormalVector { frame, coords: Vector2::new(2.0 * radius, 0.0) };
    match sectional_poincare(&field, &x, 1.0, &v, DEFAULT_TOL) {
        Err(Error::HolonomyRadius { requested, radius: r }) => {
            assert!(requested > r);
        }
        other => panic!("expected HolonomyRadius, got {other:?}"),
    }
}

#[test]
fn zero_time_sectional_is_the_identity() {
    let (field, x) = lorenz_attractor_point();
    let frame = normal_frame(&field, &x).unwrap();
    let radius = holonomy_radius(&field, &x).unwrap();
    let coords = Vector2::new(0.3 * radius, -0.2 * radius);
    let v = NormalVector { frame, coords };
    let image = sectional_poincare(&field, &x, 0.0, &v, DEFAULT_TOL).unwrap();
    assert_eq!(image.coords, coords);
}
