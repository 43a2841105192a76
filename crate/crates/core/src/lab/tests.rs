use super::*;
use crate::kernels::{builtin_kernel, KernelParams};
use crate::operators::OperatorKind;
use crate::spaces::{bmo_seminorm, BallFamily, BallPolicy};

fn grid(nn: usize) -> GridSpec {
    GridSpec::new(1, nn, 8.0).unwrap()
}

fn tog2() -> crate::kernels::KernelSpec {
    builtin_kernel("tensor-odd-gaussian", &KernelParams { m: Some(2), n: Some(1) }).unwrap()
}

fn small_cfg(nn: usize) -> StudyConfig {
    let mut cfg = StudyConfig::new(grid(nn), tog2());
    cfg.tgrid.count = 16;
    cfg.lambda = Some(8.0);
    cfg
}

#[test]
fn generation_is_deterministic() {
    let fam = TestFamily::new(FamilyKind::DyadicMartingale { depth: 5, sigma: 1.0 }, 3, 11);
    let a = generate(&fam, 1).unwrap();
    let b = generate(&fam, 1).unwrap();
    assert_eq!(a, b);
    let sa = a[1].sample(&grid(256)).unwrap().gf;
    let sb = b[1].sample(&grid(256)).unwrap().gf;
    assert_eq!(sa.samples(), sb.samples());
    assert_ne!(a[0], a[1]);
}

#[test]
fn bump_maximum_is_exact() {
    for c in [0.5, 2.0, 7.25] {
        let fam = TestFamily::new(FamilyKind::SmoothBump { width: 1.3, height: c }, 4, 1);
        for f in generate(&fam, 1).unwrap() {
            for nn in [64, 256, 1024] {
                assert_eq!(f.sample(&grid(nn)).unwrap().gf.max_abs(), c);
            }
        }
    }
    let f2 = generate(&TestFamily::new(FamilyKind::SmoothBump { width: 2.0, height: 3.0 }, 1, 0), 2).unwrap();
    assert_eq!(f2[0].sample(&GridSpec::new(2, 32, 8.0).unwrap()).unwrap().gf.max_abs(), 3.0);
}

#[test]
fn martingale_bmo_is_bounded_and_positive() {
    let (depth, sigma) = (6, 0.7);
    let fam = TestFamily::new(FamilyKind::DyadicMartingale { depth, sigma }, 5, 3);
    for f in generate(&fam, 1).unwrap() {
        let gf = f.sample(&grid(512)).unwrap().gf;
        let bmo = bmo_seminorm(&gf, &BallFamily::new(&gf, BallPolicy::DyadicAllCenters).unwrap()).unwrap().value;
        assert!(bmo > 0.0 && bmo <= 2.0 * sigma * depth as f64, "{bmo}");
    }
}

#[test]
fn log_on_a_node_is_shifted() {
    let g = grid(64);
    let node = -8.0 + 10.5 * g.spacing();
    let f = TestFunction::new("log", Generator::Log { a: vec![node], sign: 1.0, scale: 1.0 });
    let s = f.sample(&g).unwrap();
    assert_eq!(s.notes.len(), 1);
    assert!(s.gf.samples().iter().all(|v| v.is_finite()));
    let off = TestFunction::new("log", Generator::Log { a: vec![0.0], sign: 1.0, scale: 1.0 });
    assert!(off.sample(&g).unwrap().notes.is_empty());
}

#[test]
fn log_is_bmo_but_not_bounded() {
    let fam = TestFamily::new(FamilyKind::LogSingularity { a: 0.0, sign: -1.0, scale: 1.0 }, 1, 0);
    let f = &generate(&fam, 1).unwrap()[0];
    let mut prev_linf = 0.0;
    let mut bmos = Vec::new();
    for nn in [256, 1024, 4096] {
        let gf = f.sample(&grid(nn)).unwrap().gf;
        let linf = gf.max_abs();
        assert!(linf > prev_linf);
        prev_linf = linf;
        bmos.push(bmo_seminorm(&gf, &BallFamily::new(&gf, BallPolicy::DyadicAllCenters).unwrap()).unwrap().value);
    }
    assert!((bmos[2] - bmos[0]).abs() < 0.1 * bmos[0], "{bmos:?}");
}

#[test]
fn family_specs_parse() {
    let (k, c) = parse_family("martingale:depth=4,sigma=0.5,count=7").unwrap();
    assert_eq!(k, FamilyKind::DyadicMartingale { depth: 4, sigma: 0.5 });
    assert_eq!(c, Some(7));
    assert_eq!(parse_family("half-indicator").unwrap().0, FamilyKind::HalfIndicator);
    assert!(parse_family("bump:radius=2").is_err());
    assert!(parse_family("spline").is_err());
    let k: FamilyKind = "log:a=0.5,sign=-1".parse().unwrap();
    assert_eq!(k.to_string().parse::<FamilyKind>().unwrap(), k);
}

#[test]
fn constant_tuples_are_excluded() {
    let c = TestFunction::new("const", Generator::Constant(2.0));
    let b = generate(&TestFamily::new(FamilyKind::SmoothBump { width: 1.0, height: 1.0 }, 1, 0), 1).unwrap().remove(0);
    let tuples = vec![vec![c.clone(), c.clone()], vec![c.clone(), b.clone()], vec![b.clone(), b.clone()]];
    let r = bmo_blo_ratio_study(OperatorKind::G, &tuples, &small_cfg(128)).unwrap();
    assert_eq!(r.excluded, 2);
    assert_eq!(r.rows.len() + r.excluded, r.requested);
    assert!(r.checks_hold() && r.all_finite());
}

#[test]
fn linf_study_refuses_unbounded_inputs() {
    let fam = TestFamily::new(FamilyKind::LogSingularity { a: 0.0, sign: 1.0, scale: 1.0 }, 1, 0);
    let f = generate(&fam, 1).unwrap().remove(0);
    assert!(linf_blo_ratio_study(OperatorKind::G, &[vec![f.clone(), f]], &small_cfg(64)).is_err());
}

#[test]
fn linf_rows_are_consistent() {
    let bumps = generate(&TestFamily::new(FamilyKind::SmoothBump { width: 1.0, height: 1.5 }, 2, 4), 1).unwrap();
    let halves = generate(&TestFamily::new(FamilyKind::HalfIndicator, 2, 0), 1).unwrap();
    let pool: Vec<TestFunction> = bumps.into_iter().chain(halves).collect();
    let tuples = random_tuples(&pool, 2, 4, 9);
    let reps = ratio_studies(&[OperatorKind::G, OperatorKind::S], Denominator::Linf, &tuples, &small_cfg(128)).unwrap();
    for r in &reps {
        assert!(r.rows.iter().all(|row| row.consistency_ok == Some(true) && row.chain_ok));
        assert!(r.rows.iter().all(|row| row.witness.is_some()));
    }
}

#[test]
fn reports_are_deterministic() {
    let fam = TestFamily::new(FamilyKind::DyadicMartingale { depth: 4, sigma: 1.0 }, 3, 5);
    let pool = generate(&fam, 1).unwrap();
    let tuples = random_tuples(&pool, 2, 3, 2);
    let a = bmo_blo_ratio_study(OperatorKind::GStar, &tuples, &small_cfg(128)).unwrap();
    let b = bmo_blo_ratio_study(OperatorKind::GStar, &tuples, &small_cfg(128)).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv().lines().count(), 4);
}

#[test]
fn holder_exponents() {
    assert_eq!(holder_exponent(&[4.0, 4.0], None).unwrap(), 2.0);
    assert_eq!(holder_exponent(&[1.0, 1.0], Some(0.5)).unwrap(), 0.5);
    assert!(holder_exponent(&[4.0, 4.0], Some(3.0)).is_err());
    assert!(holder_exponent(&[0.5, 4.0], None).is_err());
}

#[test]
fn lp_sanity_requires_integrable_inputs() {
    let h = generate(&TestFamily::new(FamilyKind::HalfIndicator, 1, 0), 1).unwrap().remove(0);
    let cfg = small_cfg(64);
    assert!(lp_sanity(OperatorKind::G, &[vec![h.clone(), h]], &[4.0, 4.0], None, &[0.5, 1.0, 2.0], &cfg).is_err());
}

#[test]
fn refinement_of_constants_has_zero_drift() {
    let c = TestFunction::new("const", Generator::Constant(1.0));
    let plan = RefinementPlan::new(small_cfg(64), vec![OperatorKind::G], Denominator::Bmo, vec![vec![c.clone(), c]]);
    let rep = refinement_study(&plan).unwrap();
    assert!(rep.passed());
    assert!(rep.rows.iter().all(|r| r.drift == 0.0));
}

#[test]
fn refinement_records_omissions() {
    let c = TestFunction::new("const", Generator::Constant(1.0));
    let mut plan = RefinementPlan::new(small_cfg(64), vec![OperatorKind::G], Denominator::Bmo, vec![vec![c.clone(), c]]);
    plan.max_points_per_axis = 64;
    let rep = refinement_study(&plan).unwrap();
    assert_eq!(rep.omissions.len(), 2);
    assert!(rep.rows.is_empty());
}

#[test]
fn t_range_rescaling_keeps_density() {
    let g = grid(512);
    let spec = TGridSpec::default();
    let wide = spec.rescaled(&g, 0.5, 2.0).unwrap();
    let base = spec.resolve(&g).unwrap();
    let tg = wide.resolve(&g).unwrap();
    assert!((tg.t_min() - base.t_min() / 2.0).abs() < 1e-15);
    assert!((tg.weights()[0] - base.weights()[0]).abs() < 0.02 * base.weights()[0]);
}
