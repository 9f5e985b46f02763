//! Temporary: measure criteria 7/8 values with the acceptance code paths.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;

use nalgebra::Vector3;
use singflow_core::chainrec::{build_box_cover, BoxSet};
use singflow_core::flow::sample_orbit;
use singflow_core::hypcheck::{
    check_domination, check_equivalence_with, check_singular_hyperbolic, class_seeds,
    estimate_splitting, ClassOptions, FlowKind, Orientation, SeedPlan,
};
use singflow_core::{FieldSpec, DEFAULT_TOL};

fn say(msg: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{msg}").unwrap();
}

fn attractor_points(field: &FieldSpec, n: usize, spacing: f64) -> Vec<Vector3<f64>> {
    let seg = sample_orbit(field, &Vector3::new(1.0, 1.0, 1.0), 250.0, 0.05, DEFAULT_TOL).unwrap();
    let mut pts = Vec::new();
    let mut last: Option<Vector3<f64>> = None;
    for (t, p) in seg.times.iter().zip(seg.points.iter()) {
        if *t < 50.0 {
            continue;
        }
        if last.map_or(true, |q| (p - q).norm() >= spacing) {
            pts.push(*p);
            last = Some(*p);
            if pts.len() == n {
                break;
            }
        }
    }
    pts
}

#[test]
fn pin_measure() {
    let lorenz = FieldSpec::lorenz_classic();

    // criterion 7
    let t0 = std::time::Instant::now();
    let seeds = attractor_points(&lorenz, 100, 2.0);
    let est = estimate_splitting(&lorenz, &seeds, 10.0, FlowKind::LinearPoincare).unwrap();
    let checkpoints: Vec<f64> = (2..=10).map(|k| k as f64).collect();
    let dom = check_domination(&lorenz, &est, &checkpoints).unwrap();
    say(&format!(
        "c7 lpf: verdict {:?} lambda {:?} C {:?} samples {} failures {} in {:?}",
        dom.verdict,
        dom.fitted.as_ref().map(|f| f.lambda),
        dom.fitted.as_ref().map(|f| f.c),
        dom.n_samples,
        dom.n_failures,
        t0.elapsed()
    ));
    let cover = build_box_cover(lorenz.region.clone(), 0.5, 8_000_000).unwrap();
    let eq_opts = ClassOptions { checkpoints: Some(checkpoints), ..Default::default() };
    let empty = BoxSet::new(cover.clone(), Vec::new());
    let eq = check_equivalence_with(&lorenz, &empty, &seeds, 10.0, &eq_opts).unwrap();
    say(&format!(
        "c7 eq: agree {} tangent {:?} ({:?}) lpf {:?} ({:?}) in {:?}",
        eq.agree,
        eq.tangent.verdict,
        eq.tangent.fitted.as_ref().map(|f| f.lambda),
        eq.linear_poincare.verdict,
        eq.linear_poincare.fitted.as_ref().map(|f| f.lambda),
        t0.elapsed()
    ));

    // criterion 8, class from the existing run artifacts
    let t0 = std::time::Instant::now();
    let scc: BTreeMap<u32, i64> = std::fs::read_to_string("/tmp/c6run/scc.csv")
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let mut it = line.split(',');
            let id: u32 = it.next().unwrap().parse().unwrap();
            let class: i64 = it.next().unwrap().parse().unwrap();
            (id, class)
        })
        .collect();
    let origin_box = cover.box_of_point(&Vector3::zeros()).unwrap();
    let origin_class = scc.get(&origin_box).copied();
    say(&format!("origin box {origin_box} class {origin_class:?}"));
    let seg = sample_orbit(&lorenz, &Vector3::new(1.0, 1.0, 1.0), 200.0, 0.01, DEFAULT_TOL).unwrap();
    let visited: BTreeSet<u32> = seg
        .times
        .iter()
        .zip(seg.points.iter())
        .filter(|(t, _)| **t >= 50.0)
        .filter_map(|(_, p)| cover.box_of_point(p))
        .collect();
    let in_class = visited.iter().filter(|b| scc.get(b).copied() == origin_class).count();
    say(&format!(
        "visited {} in-class {} coverage {:.4}",
        visited.len(),
        in_class,
        in_class as f64 / visited.len() as f64
    ));
    let mut ids: Vec<u32> = visited
        .iter()
        .filter(|b| scc.get(b).copied() == origin_class)
        .copied()
        .collect();
    ids.push(origin_box);
    let class = BoxSet::new(cover.clone(), ids);
    say(&format!("class boxes {}", class.len()));
    let seeds8 = class_seeds(&lorenz, &class, &SeedPlan::default());
    say(&format!("class seeds {}", seeds8.len()));
    let cert =
        check_singular_hyperbolic(&lorenz, &class, &seeds8, 10.0, Orientation::Forward).unwrap();
    let ss = cert.contraction.as_ref().and_then(|c| c.fitted.as_ref());
    let area = cert.area_expansion.as_ref().and_then(|a| a.fitted.as_ref());
    say(&format!(
        "c8: verdict {:?} margin {:.4} ss {:?} area {:?} n_sing {} wss {:?} in {:?}",
        cert.verdict,
        cert.margin,
        ss.map(|f| f.lambda),
        area.map(|f| f.lambda),
        cert.singularities.len(),
        cert.singularities.iter().map(|s| s.wss_check.as_ref().map(|w| w.pass)).collect::<Vec<_>>(),
        t0.elapsed()
    ));
}
