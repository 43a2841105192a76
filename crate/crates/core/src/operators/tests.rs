use super::*;
use crate::grid::{GridBox, Tail};
use crate::kernels::{as_non_convolution, builtin_kernel, KernelParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernel(name: &str, m: usize, n: usize) -> KernelSpec {
    builtin_kernel(name, &KernelParams { m: Some(m), n: Some(n) }).unwrap()
}

fn random_gf(n: usize, nn: usize, hw: f64, ext: Extension, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (0..nn.pow(n as u32)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GridFunction::from_samples(GridBox::cube(n, hw).unwrap(), nn, s, ext).unwrap()
}

fn constant(n: usize, nn: usize, hw: f64, c: f64) -> GridFunction {
    GridFunction::from_samples(GridBox::cube(n, hw).unwrap(), nn, vec![c; nn.pow(n as u32)], Extension::EdgeHold)
        .unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / max_abs(b).max(f64::MIN_POSITIVE)
}

#[test]
fn tgrid_integrates_dt_over_t() {
    let tg = TGrid::new(0.01, 4.0, 32).unwrap();
    assert!(tg.nodes().windows(2).all(|w| w[0] < w[1]));
    let total: f64 = tg.weights().iter().sum();
    assert!((total - (4.0f64 / 0.01).ln()).abs() < 1e-12);
    assert!(TGrid::new(1.0, 0.5, 16).is_err());
    assert!(TGrid::new(0.1, 1.0, 7).is_err());
}

#[test]
fn cone_truncation_covers_cone() {
    let c = ConeSpec::new(8.0).unwrap();
    assert!((c.truncation_radius(1.0, 1) - 9.0).abs() < 1e-12);
    let steep = ConeSpec::new(40.0).unwrap();
    assert_eq!(steep.truncation_radius(2.0, 1), 2.0);
    assert!(ConeSpec::new(1.0).is_err());
    assert!(ConeSpec::new(0.5).is_err());
}

#[test]
fn regime_warnings() {
    let k = kernel("tensor-odd-gaussian", 2, 1);
    assert_eq!(ConeSpec::new(3.0).unwrap().warnings(&k).len(), 2);
    assert_eq!(ConeSpec::new(5.0).unwrap().warnings(&k).len(), 1);
    assert!(ConeSpec::new(8.0).unwrap().warnings(&k).is_empty());
}

#[test]
fn offsets_are_symmetric_discs() {
    let o = slot_offsets(2, 0.5, 1.6);
    assert!(o.iter().all(|p| o.contains(&[-p[0], -p[1]])));
    assert!(o.contains(&[3, 0]) && !o.contains(&[3, 2]) && o.contains(&[3, 1]) && o.contains(&[2, 2]));
    assert_eq!(slot_offsets(1, 0.25, 1.0).len(), 9);
}

#[test]
fn fft_correlation_matches_direct() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ext: Vec<f64> = (0..700).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let taps: Vec<f64> = (0..201).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = correlate_1d_direct(&ext, &taps);
    let b = correlate_1d_fft(&ext, &taps);
    assert_eq!(a.len(), 500);
    assert!(rel_diff(&b, &a) < 1e-12);
}

#[test]
fn fast_path_matches_direct_1d() {
    let k = kernel("tensor-odd-gaussian", 2, 1);
    for (seed, ext) in [(1, Extension::Periodic), (2, Extension::Zero), (3, Extension::EdgeHold)] {
        let f1 = random_gf(1, 64, 4.0, ext.clone(), seed);
        let f2 = random_gf(1, 64, 4.0, ext, seed + 10);
        for t in [0.2, 1.0, 3.0] {
            let d = gt_field(&k, &[&f1, &f2], t).unwrap();
            let f = tensor_fast_gt(&k, &[&f1, &f2], t).unwrap();
            assert!(rel_diff(f.samples(), d.samples()) < 1e-12, "t={t}");
        }
    }
}

#[test]
fn fast_path_matches_direct_2d_and_m3() {
    let k = kernel("tensor-odd-gaussian", 1, 2);
    for ext in [Extension::Periodic, Extension::Zero, Extension::EdgeHold] {
        let f = random_gf(2, 12, 3.0, ext, 5);
        for t in [0.4, 1.5] {
            let d = gt_field(&k, &[&f], t).unwrap();
            let fast = tensor_fast_gt(&k, &[&f], t).unwrap();
            assert!(rel_diff(fast.samples(), d.samples()) < 1e-12);
        }
    }
    let k3 = kernel("tensor-odd-gaussian", 3, 1);
    let fs: Vec<GridFunction> = (0..3).map(|s| random_gf(1, 16, 2.0, Extension::Zero, s)).collect();
    let refs: Vec<&GridFunction> = fs.iter().collect();
    let d = gt_field(&k3, &refs, 0.5).unwrap();
    let f = tensor_fast_gt(&k3, &refs, 0.5).unwrap();
    assert!(rel_diff(f.samples(), d.samples()) < 1e-12);
}

#[test]
fn factored_path_matches_direct() {
    let k = kernel("shifted-nonconv", 2, 1);
    let f1 = random_gf(1, 32, 4.0, Extension::Periodic, 8);
    let f2 = random_gf(1, 32, 4.0, Extension::Periodic, 9);
    for t in [0.3, 1.2] {
        let d = gt_field(&k, &[&f1, &f2], t).unwrap();
        let f = factored_fast_gt(&k, &[&f1, &f2], t).unwrap();
        assert!(rel_diff(f.samples(), d.samples()) < 1e-12);
    }
    assert!(tensor_fast_gt(&k, &[&f1, &f2], 1.0).is_err());
    assert!(gt(&kernel("mexican-hat", 1, 1), &[&f1], 1.0, GtPath::Fast).is_ok());
}

#[test]
fn rejects_bad_inputs() {
    let k = kernel("tensor-odd-gaussian", 2, 1);
    let a = random_gf(1, 32, 4.0, Extension::Zero, 1);
    let b = random_gf(1, 64, 4.0, Extension::Zero, 1);
    assert!(matches!(gt_field(&k, &[&a, &b], 1.0), Err(LabError::GridMismatch(_))));
    assert!(gt_field(&k, &[&a, &a], 0.0).is_err());
    assert!(gt_field(&k, &[&a], 1.0).is_err());
}

#[test]
fn single_node_indicator_product() {
    // nodes at multiples of h, so x = 0 is a node
    let nn = 64;
    let h = 0.125;
    let bx = GridBox::new(vec![h / 2.0], 4.0).unwrap();
    let ind = crate::grid::make_grid_function(bx, nn, |x| if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 }, Extension::Zero)
        .unwrap();
    let k = kernel("tensor-odd-gaussian", 2, 1);
    let t = 0.5;
    let field = gt_field(&k, &[&ind, &ind], t).unwrap();
    let x0 = (0..nn).find(|&i| ind.node(i)[0].abs() < 1e-12).unwrap();
    // 1-D oracle: Σ_y ψ_t(0 − y) 1_[0,1](y) h
    let psi_t = |u: f64| (u / t) * (-(u / t) * (u / t)).exp() / t;
    let one: f64 = (0..nn)
        .map(|i| ind.node(i)[0])
        .filter(|y| (0.0..=1.0).contains(y))
        .map(|y| psi_t(-y) * h)
        .sum();
    assert!((field.samples()[x0] - one * one).abs() < 1e-12);
    let closed = 0.25 * (1.0 - (-4.0f64).exp()).powi(2);
    assert!((field.samples()[x0] - closed).abs() < 0.02 * closed);
}

#[test]
fn constants_and_zeros_are_annihilated() {
    let k = kernel("tensor-odd-gaussian", 2, 1);
    let c = constant(1, 64, 8.0, 3.0);
    let f2 = random_gf(1, 64, 8.0, Extension::Periodic, 4);
    let tg = TGrid::new(0.25, 16.0, 12).unwrap();
    let sf = ScaleFields::compute(&k, &[&c, &f2], &tg, GtPath::Auto).unwrap();
    let bound = 1e-12 * 3.0 * max_abs(f2.samples());
    for f in [sf.g().unwrap(), sf.area().unwrap(), sf.g_star(&ConeSpec::new(8.0).unwrap(), &k).unwrap()] {
        assert!(max_abs(f.samples()) <= bound, "{}", f.kind());
    }
    let zero = constant(1, 64, 8.0, 0.0);
    let g = g_function(&k, &[&zero, &f2], &tg).unwrap();
    assert!(g.samples().iter().all(|&v| v == 0.0));
}

#[test]
fn operator_relations() {
    let k = kernel("tensor-odd-gaussian", 2, 1);
    let f1 = random_gf(1, 64, 8.0, Extension::Periodic, 21);
    let f2 = random_gf(1, 64, 8.0, Extension::Periodic, 22);
    let tg = TGrid::default_for(&f1).unwrap();
    let sf = ScaleFields::compute(&k, &[&f1, &f2], &tg, GtPath::Auto).unwrap();
    let g = sf.g().unwrap();
    let s = sf.area().unwrap();
    assert!(g.is_nonnegative() && s.is_nonnegative());
    for lambda in [3.0, 5.0, 8.0] {
        let gs = sf.g_star(&ConeSpec::new(lambda).unwrap(), &k).unwrap();
        let factor = 2f64.powf(lambda / 2.0);
        for (a, b) in s.samples().iter().zip(gs.samples()) {
            assert!(*a <= factor * b, "cone domination at λ={lambda}");
        }
        let steeper = sf.g_star(&ConeSpec::new(lambda + 1.0).unwrap(), &k).unwrap();
        assert!(steeper.samples().iter().zip(gs.samples()).all(|(a, b)| a <= b));
    }
    // homogeneity
    let scaled1 = f1.map(|v| -2.0 * v, Extension::Periodic).unwrap();
    let scaled2 = f2.map(|v| 0.5 * v, Extension::Periodic).unwrap();
    let gh = g_function(&k, &[&scaled1, &scaled2], &tg).unwrap();
    assert!(rel_diff(gh.samples(), g.samples()) < 1e-12);
    // split
    let (g0, ginf) = sf.split(1.0).unwrap();
    for ((a, b), c) in g0.samples().iter().zip(ginf.samples()).zip(g.samples()) {
        assert!((a * a + b * b - c * c).abs() <= 1e-12 * (c * c).max(1e-300));
    }
    let (all, none) = sf.split(tg.t_max()).unwrap();
    assert_eq!(all.samples(), g.samples());
    assert!(none.samples().iter().all(|&v| v == 0.0));
    assert!(sf.split(tg.t_min()).is_err());
    assert!(sf.split(2.0 * tg.t_max()).is_err());
}

/// Independent naive loops: 𝒢 from the closed-form kernel, then cone sums.
fn naive_fields(f1: &GridFunction, f2: &GridFunction, tg: &TGrid, radius: f64, lambda: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nn = f1.points_per_axis() as i64;
    let h = f1.spacing();
    let psi = |u: f64| u * (-u * u).exp();
    let mut g2 = vec![0.0; nn as usize];
    let mut s2 = vec![0.0; nn as usize];
    let mut gs2 = vec![0.0; nn as usize];
    for (&t, &w) in tg.nodes().iter().zip(tg.weights()) {
        let r = (t * radius / h).floor() as i64 + 1;
        let mut gt = vec![0.0; nn as usize];
        for x in 0..nn {
            let mut acc = 0.0;
            for a in -r..=r {
                if ((a * a) as f64) * h * h > (t * radius) * (t * radius) {
                    continue;
                }
                for b in -r..=r {
                    if ((b * b) as f64) * h * h > (t * radius) * (t * radius) {
                        continue;
                    }
                    let k = psi(-(a as f64) * h / t) * psi(-(b as f64) * h / t) / (t * t);
                    acc += k * f1.value_at_lattice(&[x + a]) * f2.value_at_lattice(&[x + b]) * h * h;
                }
            }
            gt[x as usize] = acc;
        }
        for x in 0..nn as usize {
            g2[x] += gt[x] * gt[x] * w;
            for z in 0..nn as usize {
                let d = (x as f64 - z as f64).abs() * h;
                let a = gt[z] * gt[z] * w * h / t;
                if d < t {
                    s2[x] += a;
                }
                if d <= (t * (1e-8f64.powf(-1.0 / lambda) - 1.0)).max(t) {
                    gs2[x] += (t / (t + d)).powf(lambda) * a;
                }
            }
        }
    }
    let sq = |v: Vec<f64>| v.into_iter().map(f64::sqrt).collect();
    (sq(g2), sq(s2), sq(gs2))
}

#[test]
fn brute_force_agreement_small() {
    let k = kernel("tensor-odd-gaussian", 2, 1);
    let f1 = random_gf(1, 32, 4.0, Extension::Zero, 31);
    let f2 = random_gf(1, 32, 4.0, Extension::Zero, 32);
    let tg = TGrid::new(f1.spacing(), 8.0, 8).unwrap();
    let sf = ScaleFields::compute(&k, &[&f1, &f2], &tg, GtPath::Direct).unwrap();
    let (g, s, gs) = naive_fields(&f1, &f2, &tg, k.support_radius_hint, 5.0);
    assert!(rel_diff(sf.g().unwrap().samples(), &g) < 1e-10);
    assert!(rel_diff(sf.area().unwrap().samples(), &s) < 1e-10);
    assert!(rel_diff(sf.g_star(&ConeSpec::new(5.0).unwrap(), &k).unwrap().samples(), &gs) < 1e-10);
}

#[test]
fn non_convolution_reduction_reproduces_fields() {
    let k0 = kernel("tensor-odd-gaussian", 2, 1);
    let k = as_non_convolution(&k0).unwrap();
    let f1 = random_gf(1, 32, 4.0, Extension::Periodic, 41);
    let f2 = random_gf(1, 32, 4.0, Extension::Periodic, 42);
    let tg = TGrid::new(f1.spacing(), 8.0, 8).unwrap();
    let a = ScaleFields::compute(&k0, &[&f1, &f2], &tg, GtPath::Direct).unwrap();
    let b = ScaleFields::compute(&k, &[&f1, &f2], &tg, GtPath::Auto).unwrap();
    let cone = ConeSpec::new(8.0).unwrap();
    assert!(rel_diff(b.g().unwrap().samples(), a.g().unwrap().samples()) < 1e-12);
    assert!(rel_diff(b.area().unwrap().samples(), a.area().unwrap().samples()) < 1e-12);
    let gss = b.g_star(&cone, &k).unwrap();
    assert_eq!(gss.kind(), OperatorKind::GStarStar);
    assert!(rel_diff(gss.samples(), a.g_star(&cone, &k0).unwrap().samples()) < 1e-12);
}

#[test]
fn evaluate_checks_kind_and_lambda() {
    let k = kernel("tensor-odd-gaussian", 2, 1);
    let f = random_gf(1, 32, 4.0, Extension::Zero, 1);
    let tg = TGrid::new(0.25, 8.0, 8).unwrap();
    assert!(evaluate(OperatorKind::GPrime, &k, &[&f, &f], &tg, None, GtPath::Auto).is_err());
    assert!(evaluate(OperatorKind::GStar, &k, &[&f, &f], &tg, None, GtPath::Auto).is_err());
    assert!(evaluate(OperatorKind::GStar, &k, &[&f, &f], &tg, Some(0.5), GtPath::Auto).is_err());
    let g = evaluate(OperatorKind::GStar, &k, &[&f, &f], &tg, Some(3.0), GtPath::Auto).unwrap();
    assert_eq!(g.meta.warnings.len(), 2);
    assert_eq!("g**".parse::<OperatorKind>().unwrap(), OperatorKind::GStarStar);
}

#[test]
fn field_round_trips_with_sidecar() {
    let k = kernel("mexican-hat", 1, 1);
    let f = GridFunction::from_tail(GridBox::cube(1, 4.0).unwrap(), 32, Tail::Log { a: vec![0.0], sign: 1.0, scale: 1.0 })
        .unwrap();
    let tg = TGrid::new(0.25, 8.0, 8).unwrap();
    let field = evaluate(OperatorKind::GStar, &k, &[&f], &tg, Some(2.5), GtPath::Auto).unwrap();
    let dir = tempfile::tempdir().unwrap();
    field.write(dir.path(), "gstar").unwrap();
    let back = OperatorField::read(dir.path(), "gstar").unwrap();
    assert_eq!(back.meta, field.meta);
    assert_eq!(back.samples(), field.samples());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn homogeneity_is_exact_up_to_rounding(c1 in -3.0f64..3.0, c2 in -3.0f64..3.0, seed in 0u64..1000) {
        let k = kernel("tensor-odd-gaussian", 2, 1);
        let f1 = random_gf(1, 32, 4.0, Extension::Periodic, seed);
        let f2 = random_gf(1, 32, 4.0, Extension::Periodic, seed + 1);
        let tg = TGrid::new(0.125, 8.0, 8).unwrap();
        let base = g_function(&k, &[&f1, &f2], &tg).unwrap();
        let s1 = f1.map(|v| c1 * v, Extension::Periodic).unwrap();
        let s2 = f2.map(|v| c2 * v, Extension::Periodic).unwrap();
        let scaled = g_function(&k, &[&s1, &s2], &tg).unwrap();
        let want: Vec<f64> = base.samples().iter().map(|v| v * (c1 * c2).abs()).collect();
        let scale = max_abs(&want).max(1e-300);
        let d = scaled.samples().iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(d <= 1e-12 * scale);
    }
}
