//! Singularity classification and certificate checks, exercised on fields
//! whose spectra, splittings, and rates are known in closed form.

use nalgebra::{Matrix3, Vector3};
use singflow_core::chainrec::{build_box_cover, BoxCover, BoxSet};
use singflow_core::field::{FieldSpec, Region};
use singflow_core::flow::{flow, tangent_flow};
use singflow_core::hypcheck::{
    check_domination, check_equivalence, check_hyperbolic, check_singular_hyperbolic,
    check_strong_stable_disjoint, class_seeds, classify_singularity, estimate_splitting,
    ClassVerdict, FlowKind, Orientation, SeedPlan, SingularityClass, SplitVerdict, WssOutcome,
};
use singflow_core::Error;

const LN2: f64 = std::f64::consts::LN_2;

fn diag_field(a: f64, b: f64, c: f64) -> FieldSpec {
    let m = Matrix3::from_diagonal(&Vector3::new(a, b, c));
    FieldSpec::linear(m, Region::new([[-2.0, 2.0]; 3]).unwrap()).unwrap()
}

// --- classification ------------------------------------------------------

#[test]
fn lorenz_origin_has_the_textbook_spectrum() {
    let field = FieldSpec::lorenz_classic();
    let rec = classify_singularity(&field, &Vector3::zeros()).unwrap();

    // Eigenvalues of [[-10,10,0],[28,-1,0],[0,0,-8/3]]: the 2x2 block gives
    // (-11 ± sqrt(1201))/2, the z-axis gives -8/3.
    let disc = 1201.0f64.sqrt();
    let expect = [(-11.0 - disc) / 2.0, -8.0 / 3.0, (-11.0 + disc) / 2.0];
    for (got, want) in rec.eigenvalues.iter().zip(expect) {
        assert!((got[0] - want).abs() < 1e-9, "re {} vs {want}", got[0]);
        assert!(got[1].abs() < 1e-9);
    }
    assert_eq!(rec.classification, SingularityClass::LorenzLikeForX);
    assert!(!rec.resolution_limited);
    assert!(!rec.non_diagonalizable);

    // Eigenvectors satisfy the eigen equation.
    let j = field.jacobian(&Vector3::zeros());
    for (k, v) in rec.eigenvectors.iter().enumerate() {
        let v = Vector3::from(v.expect("real spectrum"));
        let lam = rec.eigenvalues[k][0];
        assert!((j * v - lam * v).norm() < 1e-8, "eigenvector residual at {lam}");
    }
    // The z-axis direction goes with -8/3.
    assert!((Vector3::from(rec.eigenvectors[1].unwrap()).dot(&Vector3::z())).abs() > 1.0 - 1e-12);
}

#[test]
fn lorenz_wings_are_spiral_saddles() {
    let field = FieldSpec::lorenz_classic();
    let r = (8.0 / 3.0 * 27.0f64).sqrt();
    for sign in [1.0, -1.0] {
        let wing = Vector3::new(sign * r, sign * r, 27.0);
        let rec = classify_singularity(&field, &wing).unwrap();
        assert_eq!(rec.classification, SingularityClass::HyperbolicOther);
        // One real stable direction plus a complex pair.
        let ims: Vec<f64> = rec.eigenvalues.iter().map(|e| e[1]).collect();
        assert!(ims.iter().filter(|i| i.abs() > 1e-6).count() == 2, "{ims:?}");
    }
}

#[test]
fn spectra_on_the_decision_boundary_are_flagged() {
    // -2 < -1 < 0 < 1 with lambda_3 + lambda_2 = 0 exactly: the strict read
    // says hyperbolic_other, a hair of leniency says lorenz-like.
    let rec = classify_singularity(&diag_field(-2.0, -1.0, 1.0), &Vector3::zeros()).unwrap();
    assert_eq!(rec.classification, SingularityClass::HyperbolicOther);
    assert!(rec.resolution_limited);

    // A kernel direction is non-hyperbolic and likewise a boundary case.
    let rec = classify_singularity(&diag_field(-1.0, 0.0, 1.0), &Vector3::zeros()).unwrap();
    assert_eq!(rec.classification, SingularityClass::NonHyperbolic);
    assert!(rec.resolution_limited);

    // Comfortably interior: no flag.
    let rec = classify_singularity(&diag_field(-3.0, -1.0, 2.0), &Vector3::zeros()).unwrap();
    assert_eq!(rec.classification, SingularityClass::LorenzLikeForX);
    assert!(!rec.resolution_limited);
    assert_eq!(rec.eigenvectors[0], Some([1.0, 0.0, 0.0]));
    assert_eq!(rec.eigenvectors[1], Some([0.0, 1.0, 0.0]));
    assert_eq!(rec.eigenvectors[2], Some([0.0, 0.0, 1.0]));
}

#[test]
fn orientation_classes_mirror_under_negation_and_reversal() {
    // Spectrum (-2, 1, 3): negated and reversed it is (-3, -1, 2).
    let rec = classify_singularity(&diag_field(-2.0, 1.0, 3.0), &Vector3::zeros()).unwrap();
    assert_eq!(rec.classification, SingularityClass::LorenzLikeForMinusX);

    let field = diag_field(-3.0, -1.0, 2.0);
    let rec = classify_singularity(&field.reverse(), &Vector3::zeros()).unwrap();
    assert_eq!(rec.classification, SingularityClass::LorenzLikeForMinusX);
}

#[test]
fn classification_is_scale_invariant() {
    for c in [0.1, 7.0] {
        let m = Matrix3::from_diagonal(&Vector3::new(-3.0 * c, -1.0 * c, 2.0 * c));
        let field = FieldSpec::linear(m, Region::new([[-2.0, 2.0]; 3]).unwrap()).unwrap();
        let rec = classify_singularity(&field, &Vector3::zeros()).unwrap();
        assert_eq!(rec.classification, SingularityClass::LorenzLikeForX, "scale {c}");
        assert!(!rec.resolution_limited);
    }
}

#[test]
fn defective_eigenspaces_are_reported() {
    let jordan = Matrix3::new(-1.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -2.0);
    let field = FieldSpec::linear(jordan, Region::new([[-2.0, 2.0]; 3]).unwrap()).unwrap();
    let rec = classify_singularity(&field, &Vector3::zeros()).unwrap();
    assert!(rec.non_diagonalizable);
    assert_eq!(rec.classification, SingularityClass::HyperbolicOther);

    // Repeated but diagonalizable: no flag.
    let rec = classify_singularity(&diag_field(-1.0, -1.0, -2.0), &Vector3::zeros()).unwrap();
    assert!(!rec.non_diagonalizable);
}

#[test]
fn classify_rejects_regular_points() {
    let field = FieldSpec::lorenz_classic();
    let err = classify_singularity(&field, &Vector3::new(1.0, 1.0, 1.0)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn double_sink_zeros_are_found_and_classified() {
    let field = FieldSpec::double_sink(Region::new([[-2.0, 2.0]; 3]).unwrap());
    let mut zeros = field.find_singularities(8).unwrap();
    zeros.sort_by(|a, b| a.point().x.partial_cmp(&b.point().x).unwrap());
    assert_eq!(zeros.len(), 3);
    let xs: Vec<f64> = zeros.iter().map(|z| z.point().x).collect();
    for (got, want) in xs.iter().zip([-1.0, 0.0, 1.0]) {
        assert!((got - want).abs() < 1e-9, "{xs:?}");
    }
    for z in &zeros {
        let rec = classify_singularity(&field, &z.point()).unwrap();
        assert_eq!(rec.classification, SingularityClass::HyperbolicOther);
    }
}

// --- splitting estimation and rate laws -----------------------------------

/// diag(-2,-1,1) seen from a z-axis orbit: the normal frame is (e_x, e_y)
/// and psi_t = diag(e^{-2t}, e^{-t}) exactly, so E = e_x, F = e_y, and the
/// domination rate is exactly 1.
#[test]
fn axis_orbit_directions_come_out_exact() {
    let field = diag_field(-2.0, -1.0, 1.0);
    let seeds = [Vector3::new(0.0, 0.0, 0.1), Vector3::new(0.0, 0.0, -0.1)];

    let est = estimate_splitting(&field, &seeds, 3.0, FlowKind::LinearPoincare).unwrap();
    assert_eq!(est.n_samples, 2);
    for s in &est.samples {
        assert!((s.e[0] - 1.0).abs() < 1e-6 && s.e[1].abs() < 1e-6, "E = {:?}", s.e);
        assert!(s.f[0][1].abs() > 1.0 - 1e-6, "F = {:?}", s.f);
        assert!((s.t_window - 3.0).abs() < 1e-9);
    }

    let est = estimate_splitting(&field, &seeds[..1], 3.0, FlowKind::Tangent).unwrap();
    let s = &est.samples[0];
    assert!((s.e[0] - 1.0).abs() < 1e-6, "E = {:?}", s.e);
    // F-plane = [flow direction, growing direction] = [e_z, e_y].
    assert!(s.f[0][2].abs() > 1.0 - 1e-9);
    assert!(s.f[1][1].abs() > 1.0 - 1e-6);
}

#[test]
fn domination_rate_fits_the_known_exponent() {
    let field = diag_field(-2.0, -1.0, 1.0);
    let seeds = [
        Vector3::new(0.0, 0.0, 0.1),
        Vector3::new(0.0, 0.0, -0.1),
        Vector3::new(0.0, 0.0, 0.05),
    ];
    let est = estimate_splitting(&field, &seeds, 3.0, FlowKind::LinearPoincare).unwrap();
    let cert = check_domination(&field, &est, &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
    assert_eq!(cert.verdict, Some(SplitVerdict::Dominated));
    let fit = cert.fitted.unwrap();
    assert!((fit.lambda - 1.0).abs() < 0.01, "lambda = {}", fit.lambda);
    assert!((fit.c - 1.0).abs() < 0.05, "C = {}", fit.c);
    assert!((cert.margin.unwrap() - (fit.lambda - 0.05)).abs() < 1e-12);

    // The fit does not depend on which checkpoints witnessed it.
    for subset in [[0.5, 1.0, 1.5], [1.0, 2.0, 3.0], [0.5, 1.5, 3.0]] {
        let c = check_domination(&field, &est, &subset).unwrap();
        assert_eq!(c.verdict, Some(SplitVerdict::Dominated));
        assert!((c.fitted.unwrap().lambda - 1.0).abs() < 0.02);
    }
}

#[test]
fn drift_field_has_no_domination() {
    let field = FieldSpec::translation(
        Vector3::new(1.0, 0.0, 0.0),
        Region::new([[-2.0, 2.0]; 3]).unwrap(),
    )
    .unwrap();
    let seeds = [Vector3::new(-1.5, 0.0, 0.0), Vector3::new(-1.0, 0.3, 0.0)];
    let est = estimate_splitting(&field, &seeds, 2.0, FlowKind::LinearPoincare).unwrap();
    let cert = check_domination(&field, &est, &[0.5, 1.0, 1.5, 2.0]).unwrap();
    assert_eq!(cert.verdict, Some(SplitVerdict::Failed));
    assert!(cert.fitted.unwrap().lambda.abs() < 1e-6);
    assert!(cert.margin.unwrap() < 0.0);
    assert!(!cert.passed());
}

#[test]
fn equivalence_agrees_when_both_flows_fail() {
    let region = Region::new([[-2.0, 2.0]; 3]).unwrap();
    let field = FieldSpec::translation(Vector3::new(1.0, 0.0, 0.0), region.clone()).unwrap();
    let cover = build_box_cover(region, 0.5, 1 << 20).unwrap();
    let empty = BoxSet::new(cover, Vec::new());
    let seeds = [Vector3::new(-1.5, 0.0, 0.0), Vector3::new(-1.0, 0.3, 0.0)];
    let rep = check_equivalence(&field, &empty, &seeds, 3.0).unwrap();
    assert!(rep.agree);
    assert_eq!(rep.tangent.verdict, Some(SplitVerdict::Failed));
    assert_eq!(rep.linear_poincare.verdict, Some(SplitVerdict::Failed));
}

/// det Dφ_t = exp(t · div X) for constant-divergence fields; on Lorenz
/// div X = -(sigma + 1 + beta). An independent check that the variational
/// integration preserves volume bookkeeping.
#[test]
fn tangent_flow_determinant_tracks_the_divergence() {
    let field = FieldSpec::lorenz_classic();
    let div = -(10.0 + 1.0 + 8.0 / 3.0);
    let x0 = flow(&field, &Vector3::new(1.0, 1.0, 1.0), 30.0, 1e-9).unwrap();
    // Longer windows are ruled out by conditioning, not integration: at
    // t = 2 the determinant is ~1e-12 against matrix entries of order 10,
    // so the f64 cancellation alone eats several digits.
    for t in [0.25, 0.5, 1.0] {
        let (_, m) = tangent_flow(&field, &x0, t, 1e-12).unwrap();
        let got = m.determinant();
        let want = (div * t).exp();
        assert!((got / want - 1.0).abs() < 1e-5, "t={t}: det {got} vs {want}");
    }
}

#[test]
fn estimation_and_checkpoint_arguments_are_validated() {
    let field = diag_field(-2.0, -1.0, 1.0);
    let seeds = [Vector3::new(0.0, 0.0, 0.1)];
    assert!(estimate_splitting(&field, &seeds, 0.0, FlowKind::Tangent).is_err());
    assert!(estimate_splitting(&field, &seeds, -1.0, FlowKind::Tangent).is_err());

    let est = estimate_splitting(&field, &seeds, 3.0, FlowKind::LinearPoincare).unwrap();
    for bad in [vec![1.0, 2.0], vec![1.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.0]] {
        assert!(check_domination(&field, &est, &bad).is_err(), "{bad:?}");
    }

    // A seed pinned at the singularity yields nothing to fit.
    let est = estimate_splitting(&field, &[Vector3::zeros()], 3.0, FlowKind::LinearPoincare)
        .unwrap();
    assert_eq!((est.n_samples, est.n_failures), (0, 1));
    let err = check_domination(&field, &est, &[1.0, 2.0, 3.0]).unwrap_err();
    assert!(matches!(err, Error::InsufficientData(_)), "got {err:?}");
}

#[test]
fn certificates_serialize_with_stable_names() {
    let field = diag_field(-2.0, -1.0, 1.0);
    let seeds = [Vector3::new(0.0, 0.0, 0.1)];
    let est = estimate_splitting(&field, &seeds, 2.0, FlowKind::RescaledLinearPoincare).unwrap();
    let v = serde_json::to_value(&est).unwrap();
    assert_eq!(v["flow_kind"], "rescaled_linear_poincare");
    let field2 = FieldSpec::lorenz_classic();
    let rec = classify_singularity(&field2, &Vector3::zeros()).unwrap();
    let v = serde_json::to_value(&rec).unwrap();
    assert_eq!(v["classification"], "lorenz_like_for_X");
    let cert = check_domination(
        &field,
        &estimate_splitting(
            &field,
            &[Vector3::new(0.0, 0.0, 0.1), Vector3::new(0.0, 0.0, -0.1), Vector3::new(0.0, 0.0, 0.2)],
            2.0,
            FlowKind::LinearPoincare,
        )
        .unwrap(),
        &[0.5, 1.0, 2.0],
    )
    .unwrap();
    let v = serde_json::to_value(&cert).unwrap();
    assert!(v["fitted"]["C"].is_number(), "{v}");
    assert_eq!(v["verdict"], "dominated");
}

// --- class certificates ----------------------------------------------------

/// The suspension saddle's unit circle is a hyperbolic periodic orbit with
/// Floquet multipliers 1/2 (radial) and 2 (axial) per period 1, so both
/// Poincaré rates are exactly ln 2.
fn ring_fixture() -> (FieldSpec, BoxCover, BoxSet, Vec<Vector3<f64>>) {
    let field = FieldSpec::suspension_saddle_default();
    let cover = build_box_cover(Region::new([[-2.0, 2.0]; 3]).unwrap(), 0.25, 1 << 20).unwrap();
    let ids: Vec<u32> = (0..cover.box_count() as u32)
        .filter(|&b| {
            let c = cover.box_center(b);
            (c.x.hypot(c.y) - 1.0).abs() <= 0.25 && c.z.abs() <= 0.13
        })
        .collect();
    assert!(!ids.is_empty());
    let class = BoxSet::new(cover.clone(), ids);
    let seeds: Vec<Vector3<f64>> = (0..12)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * f64::from(k) / 12.0;
            Vector3::new(th.cos(), th.sin(), 0.0)
        })
        .collect();
    (field, cover, class, seeds)
}

#[test]
fn periodic_ring_certifies_as_hyperbolic() {
    let (field, _, class, seeds) = ring_fixture();
    let cert = check_hyperbolic(&field, &class, &seeds, 8.0).unwrap();
    assert_eq!(cert.verdict, ClassVerdict::Hyperbolic);
    assert_eq!(cert.n_failures, 0);
    let contraction = cert.contraction.as_ref().unwrap();
    let expansion = cert.expansion.as_ref().unwrap();
    assert!((contraction.fitted.unwrap().lambda - LN2).abs() < 0.01);
    assert!((expansion.fitted.unwrap().lambda - LN2).abs() < 0.01);
    assert!((cert.margin - (LN2 - 0.05)).abs() < 0.02, "margin {}", cert.margin);
    assert!(cert.area_expansion.is_none());
    assert!(!cert.assumptions_unchecked.is_empty());
}

#[test]
fn classes_route_to_the_matching_checker() {
    // A class holding the Lorenz origin belongs to the singular checker...
    let field = FieldSpec::lorenz_classic();
    let cover = build_box_cover(
        Region::new([[-30.0, 30.0], [-30.0, 30.0], [-5.0, 55.0]]).unwrap(),
        5.0,
        1 << 20,
    )
    .unwrap();
    let origin_box = cover.box_of_point(&Vector3::zeros()).unwrap();
    let class = BoxSet::new(cover, vec![origin_box]);
    let err = check_hyperbolic(&field, &class, &[], 5.0).unwrap_err();
    assert!(matches!(err, Error::WrongChecker { .. }), "got {err:?}");

    // ...and a singularity-free ring to the hyperbolic one.
    let (field, _, ring, seeds) = ring_fixture();
    let err = check_singular_hyperbolic(&field, &ring, &seeds, 5.0, Orientation::Forward)
        .unwrap_err();
    match err {
        Error::InvalidArgument(msg) => assert!(msg.contains("hyperbolic checker"), "{msg}"),
        other => panic!("got {other:?}"),
    }

    // Empty classes are rejected outright.
    let (_, cover, _, _) = ring_fixture();
    let empty = BoxSet::new(cover, Vec::new());
    assert!(check_hyperbolic(&field, &empty, &seeds, 5.0).is_err());
}

#[test]
fn lone_lorenz_like_singularity_is_reported_isolated() {
    let field = diag_field(-3.0, -1.0, 2.0);
    let cover = build_box_cover(Region::new([[-2.0, 2.0]; 3]).unwrap(), 0.25, 1 << 20).unwrap();
    let b = cover.box_of_point(&Vector3::zeros()).unwrap();
    let class = BoxSet::new(cover, vec![b]);
    let cert =
        check_singular_hyperbolic(&field, &class, &[], 5.0, Orientation::Forward).unwrap();
    assert_eq!(cert.verdict, ClassVerdict::IsolatedSingularity);
    assert_eq!(cert.singularities.len(), 1);
    let wss = cert.singularities[0].wss_check.as_ref().unwrap();
    // The strong stable axis leaves the region immediately in backward time.
    assert!(wss.pass);
    for b in &wss.branches {
        assert!(matches!(b.outcome, WssOutcome::Escaped | WssOutcome::Clear), "{b:?}");
    }
}

#[test]
fn sink_spectrum_fails_structurally() {
    // At rho = 1/2 the Lorenz origin is a sink: eigenvalues
    // (-11 ± sqrt(101))/2 and -8/3, nothing lorenz-like about it.
    let region = Region::new([[-30.0, 30.0], [-30.0, 30.0], [-5.0, 55.0]]).unwrap();
    let field = FieldSpec::lorenz(10.0, 0.5, 8.0 / 3.0, region.clone()).unwrap();
    let cover = build_box_cover(region, 5.0, 1 << 20).unwrap();
    let b = cover.box_of_point(&Vector3::zeros()).unwrap();
    let class = BoxSet::new(cover, vec![b]);
    let cert = check_singular_hyperbolic(&field, &class, &[], 10.0, Orientation::Forward)
        .unwrap();
    assert_eq!(cert.verdict, ClassVerdict::StructuralFailure);
    let msg = cert.structural_failure.unwrap();
    assert!(msg.contains("expected"), "{msg}");
    assert_eq!(cert.singularities[0].classification, SingularityClass::HyperbolicOther);
}

// --- strong stable manifold heuristic ---------------------------------------

#[test]
fn wss_trace_flags_classes_sitting_on_the_stable_axis() {
    let m = Matrix3::from_diagonal(&Vector3::new(-3.0, -1.0, 2.0));
    let field = FieldSpec::linear(m, Region::new([[-1.0, 1.0]; 3]).unwrap()).unwrap();
    let rec = classify_singularity(&field, &Vector3::zeros()).unwrap();
    let cover = build_box_cover(Region::new([[-1.0, 1.0]; 3]).unwrap(), 0.1, 1 << 20).unwrap();

    // W^ss(0) is the x-axis; park the class right on it at x ≈ 0.5.
    let on_axis: Vec<u32> = [
        Vector3::new(0.45, 0.01, 0.01),
        Vector3::new(0.55, 0.01, 0.01),
        Vector3::new(0.45, -0.01, -0.01),
        Vector3::new(0.55, -0.01, -0.01),
    ]
    .iter()
    .filter_map(|p| cover.box_of_point(p))
    .collect();
    let blocking = BoxSet::new(cover.clone(), on_axis);
    let wss = check_strong_stable_disjoint(&field, &rec, &blocking, 1e-3).unwrap();
    assert!(!wss.pass);
    let outcomes: Vec<_> = wss.branches.iter().map(|b| b.outcome).collect();
    assert!(outcomes.contains(&WssOutcome::HitClass), "{outcomes:?}");

    // A class away from the axis never meets the trace.
    let b = cover.box_of_point(&Vector3::new(0.0, 0.8, 0.0)).unwrap();
    let clear = BoxSet::new(cover, vec![b]);
    let wss = check_strong_stable_disjoint(&field, &rec, &clear, 1e-3).unwrap();
    assert!(wss.pass, "{wss:?}");

    // Argument checks: the offset must be positive, the leading eigenvalue
    // real and negative.
    assert!(check_strong_stable_disjoint(&field, &rec, &clear, 0.0).is_err());
    let saddle = FieldSpec::suspension_saddle_default();
    let spiral = classify_singularity(&saddle, &Vector3::zeros()).unwrap();
    assert!(check_strong_stable_disjoint(&saddle, &spiral, &clear, 1e-3).is_err());
}

// --- seed selection ----------------------------------------------------------

#[test]
fn class_seeds_are_deterministic_and_in_class() {
    let (field, _, class, _) = ring_fixture();
    let plan = SeedPlan { transient: 3.0, orbit_budget: 30.0, ..SeedPlan::default() };
    let a = class_seeds(&field, &class, &plan);
    let b = class_seeds(&field, &class, &plan);
    assert_eq!(a, b);
    assert!(!a.is_empty());
    for s in &a {
        assert!(class.contains_point_padded(s, 1), "seed {s:?} outside the padded class");
        assert!(field.evaluate(s).norm() >= 1e-8);
    }

    // The empty class yields no seeds rather than an error.
    let empty = BoxSet::new(class.cover.clone(), Vec::new());
    assert!(class_seeds(&field, &empty, &plan).is_empty());
}

// --- determinant identity ------------------------------------------------

/// On a linear field the area factor of Dφ_t on the invariant 2-plane must
/// match det Dφ_t divided by the stretch of the remaining stable direction
/// — the algebra behind reading contraction rates off the determinant.
#[test]
fn cu_area_matches_determinant_over_stable_stretch() {
    for (a, b, c) in [(-2.0, -1.0, 1.0), (-3.0, -1.0, 2.0)] {
        let field = diag_field(a, b, c);
        // Start low enough on the expanding axis to stay in the region.
        let x = Vector3::new(0.3, -0.4, 1.5 * (-c * 3.0_f64).exp());
        for t in [0.5, 1.0, 2.0, 3.0] {
            let (_, m) = tangent_flow(&field, &x, t, 1e-10).unwrap();
            let area = (m * Vector3::y()).cross(&(m * Vector3::z())).norm();
            let want = m.determinant() / (m * Vector3::x()).norm();
            assert!(
                (area / want - 1.0).abs() < 1e-4,
                "({a},{b},{c}) t={t}: area {area} vs det/stretch {want}"
            );
        }
    }
}
