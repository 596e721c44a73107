use super::*;
use crate::autodiff::{mixed_jet, AnalyticField};
use proptest::prelude::*;

fn all_specs() -> Vec<ProblemSpec> {
    let mut v: Vec<ProblemSpec> = Problem::benchmarks().iter().map(Problem::spec).collect();
    v.push(plane_wave_problem(&[3.0], 0.4));
    v
}

#[test]
fn registry_round_trips_names() {
    for name in Problem::NAMES {
        assert_eq!(Problem::from_name(name).unwrap().name(), name);
    }
    assert!(matches!(Problem::from_name("nosuch"), Err(Error::Config(_))));
    let json = serde_json::to_string(&Problem::DiskRobin { biot: 2.0 }).unwrap();
    assert_eq!(serde_json::from_str::<Problem>(&json).unwrap(), Problem::DiskRobin { biot: 2.0 });
}

#[test]
fn reference_values() {
    assert_eq!(Problem::Advection1d.spec().reference(&[0.0, 0.0]), 6.0);
    assert_eq!(Problem::Laplace2d.spec().reference(&[0.3, 0.7]), 0.7);
    assert_eq!(Problem::DiskRobin { biot: 1.0 }.spec().reference(&[0.0, 0.0]), 0.75);
    assert_eq!(beam_source(0.5, 0.0), 1.75);
}

#[test]
fn advection_residual_of_linear_field() {
    let spec = Problem::Advection1d.spec();
    let f = AnalyticField::new(2, |x: &[JetValue]| x[1]);
    let r = residual(&spec, &f, &[0.7, 0.0]).unwrap();
    assert!((r - 1.0).abs() < 1e-15);
    let r = residual(&spec, &f, &[0.7, 0.5]).unwrap();
    assert!((r - 1.25).abs() < 1e-15);
    assert!(matches!(residual(&spec, &f, &[2.5, 0.5]), Err(Error::Domain(_))));
}

#[test]
fn constraint_examples() {
    let lap = Problem::Laplace2d.spec();
    let y = AnalyticField::new(2, |x: &[JetValue]| x[1]);
    assert_eq!(constraint_residual(&lap, &y, 2, &[0.4, 1.0]).unwrap(), 0.0);
    assert!(matches!(constraint_residual(&lap, &y, 2, &[0.4, 0.9]), Err(Error::Domain(_))));
    assert!(matches!(constraint_residual(&lap, &y, 0, &[0.4, 1.0]), Err(Error::Config(_))));

    let disk = Problem::DiskRobin { biot: 1.0 }.spec();
    let r = constraint_residual(&disk, disk.reference.as_field(), 1, &[0.0, 1.0]).unwrap();
    assert!(r.abs() < 1e-10);

    let beam = Problem::PoissonBeam.spec();
    let r = constraint_residual(&beam, beam.reference.as_field(), 3, &[0.5, 0.0]).unwrap();
    assert!(r.abs() < 1e-15);
}

#[test]
fn disk_normal_derivative_of_reference() {
    let f = |x: &[JetValue]| JetValue::constant(0.75) - (x[0] * x[0] + x[1] * x[1]) * 0.25;
    let d = mixed_jet(f, &[1.0, 0.0], &[vec![1.0, 0.0]]).unwrap();
    assert!((d + 0.5).abs() < 1e-15);
}

#[test]
fn flipped_normal_breaks_robin_consistency() {
    let mut disk = Problem::DiskRobin { biot: 1.0 }.spec();
    disk.terms[1].parts[0].coeff = 1.0;
    let r = constraint_residual(&disk, disk.reference.as_field(), 1, &[0.6, 0.8]).unwrap();
    assert!(r.abs() > 0.5);
}

#[test]
fn sampling_cardinalities_and_loci() {
    let counts = |p: Problem| sample(&p.spec(), 3).sets.iter().map(|s| s.nrows()).collect::<Vec<_>>();
    assert_eq!(counts(Problem::Advection1d), vec![3000, 250, 250]);
    assert_eq!(counts(Problem::Laplace2d), vec![1000; 5]);
    assert_eq!(counts(Problem::DiskRobin { biot: 1.0 }), vec![3000, 500]);
    assert_eq!(counts(Problem::PoissonBeam), vec![1000; 7]);

    let disk = Problem::DiskRobin { biot: 1.0 }.spec();
    let s = sample(&disk, 9);
    assert!(s.sets[0].rows().into_iter().all(|p| p[0] * p[0] + p[1] * p[1] <= 1.0));
    assert!(s.sets[1].rows().into_iter().all(|p| (p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12));
    for spec in all_specs() {
        let s = sample(&spec, 5);
        for (t, set) in s.sets.iter().enumerate() {
            assert!(set.rows().into_iter().all(|p| spec.on_locus(t, &p.to_vec())), "{} term {t}", spec.name);
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    let spec = Problem::PoissonBeam.spec();
    assert_eq!(sample(&spec, 4), sample(&spec, 4));
    assert_eq!(sample(&spec, 4).digest(), sample(&spec, 4).digest());
    assert_ne!(sample(&spec, 4).digest(), sample(&spec, 5).digest());
}

#[test]
fn interior_means_match_centroids() {
    for spec in all_specs() {
        let s = sample(&spec, 21);
        let set = &s.sets[0];
        let n = set.nrows() as f64;
        let centroid = spec.domain.centroid();
        for (axis, c) in centroid.iter().enumerate() {
            let col = set.column(axis);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((mean - c).abs() < 3.0 * (var / n).sqrt() + 1e-12, "{} axis {axis}", spec.name);
        }
    }
}

#[test]
fn references_zero_every_residual() {
    for spec in all_specs() {
        let s = sample(&spec, 77);
        for (t, set) in s.sets.iter().enumerate() {
            let pts = set.slice(ndarray::s![..set.nrows().min(1000), ..]);
            let r = term_residuals(&spec, spec.reference.as_field(), t, pts).unwrap();
            let worst = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(worst < 1e-9, "{} term {t}: {worst:e}", spec.name);
        }
    }
}

#[test]
fn constraint_targets_match_reference_operator() {
    // A target is the constraint operator applied to the reference, so
    // replacing it by zero must leave exactly the operator value behind.
    let beam = Problem::PoissonBeam.spec();
    let s = sample(&beam, 2);
    let p = s.sets[4].row(0).to_vec();
    let mut stripped = Problem::PoissonBeam.spec();
    stripped.terms[4].target = Box::new(|_| 0.0);
    let r = constraint_residual(&stripped, beam.reference.as_field(), 4, &p).unwrap();
    assert!((r - p[0] * p[0] / E).abs() < 1e-13);
}

#[test]
fn plane_wave_examples() {
    let f0 = plane_wave_target(&[0.0], 0.0);
    assert_eq!(f0(&[0.3]), 0.0);
    let f = plane_wave_target(&[1.0], PI / 2.0);
    assert!((f(&[0.0]) - 1.0).abs() < 1e-15);
    let grid = Grid::Line { lo: -1.0, hi: 1.0, n: PLANE_WAVE_GRID }.points();
    for k in 1..=24 {
        let f = plane_wave_target(&[k as f64], 0.0);
        let mean_sq = grid.column(0).iter().map(|&x| f(&[x]).powi(2)).sum::<f64>() / grid.nrows() as f64;
        // ∫_{-1}^{1} sin² = 1, so the L² norm is 1 = (1/√2)·|Ω|^{1/2}.
        assert!((2.0 * mean_sq).sqrt() - 1.0 < 1e-12);
    }
}

#[test]
fn grids_have_expected_sizes() {
    assert_eq!(Problem::Advection1d.spec().grid.points().nrows(), 201 * 101);
    assert_eq!(Problem::Laplace2d.spec().grid.points().nrows(), 201 * 201);
    let disk = Problem::DiskRobin { biot: 1.0 }.spec().grid.points();
    assert_eq!(disk.nrows(), 101 * 256);
    assert!(disk.rows().into_iter().all(|p| p[0].hypot(p[1]) <= 1.0 + 1e-15));
}

proptest! {
    #[test]
    fn sine_jet_matches_closed_form(x in -3.0f64..3.0, s in -2.0f64..2.0) {
        let j = sin_jet(JetValue::variable(x, s));
        let expect = [x.sin(), s * x.cos(), -s * s * x.sin(), -s.powi(3) * x.cos(), s.powi(4) * x.sin()];
        for (k, e) in expect.iter().enumerate() {
            prop_assert!((j.derivative(k) - e).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_reference_solves_radial_problem(biot in 0.2f64..5.0, t in 0.0f64..6.283) {
        let spec = Problem::DiskRobin { biot }.spec();
        let p = [t.cos(), t.sin()];
        if spec.on_locus(1, &p) {
            let r = constraint_residual(&spec, spec.reference.as_field(), 1, &p).unwrap();
            prop_assert!(r.abs() < 1e-12);
        }
        prop_assert!((spec.reference(&[0.0, 0.0]) - disk_reference(biot, 0.0)).abs() < 1e-15);
    }
}
