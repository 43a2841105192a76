//! Sampled certification of the vanishing, size and smoothness conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{KernelSpec, SizeCentering};
use crate::error::{LabError, Result};
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbePlan {
    /// Half-width of the per-variable quadrature cube; must cover the support hint.
    pub extent: f64,
    /// Midpoint nodes per axis for the vanishing quadrature.
    pub quadrature_points: usize,
    /// Slices (fixed values of the other variables, and of `x`) per vanishing check.
    pub slices: usize,
    pub size_probes: usize,
    pub smooth_probes: usize,
    /// Base displacement; smoothness uses `{h, 2h, 4h}`.
    pub spacing: f64,
    /// Probes are drawn from `[-probe_range, probe_range]` per coordinate.
    pub probe_range: f64,
    pub seed: u64,
    pub vanishing_tol: f64,
    pub ratio_tol: f64,
}

impl Default for ProbePlan {
    fn default() -> Self {
        Self {
            extent: 14.0,
            quadrature_points: 2048,
            slices: 8,
            size_probes: 20_000,
            smooth_probes: 20_000,
            spacing: 0.125,
            probe_range: 6.0,
            seed: 7,
            vanishing_tol: 1e-6,
            ratio_tol: 1e-3,
        }
    }
}

impl ProbePlan {
    /// Smaller plan for quick checks.
    pub fn quick() -> Self {
        Self { quadrature_points: 1024, slices: 4, size_probes: 4000, smooth_probes: 4000, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub condition: String,
    /// Defect (vanishing) or ratio against the declared constant.
    pub value: f64,
    pub probes: usize,
    pub discards: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelValidationReport {
    pub kernel_id: String,
    /// Per variable, max over slices of `|∫ K dy_i|`.
    pub vanishing_defects: Vec<f64>,
    /// Analytic bound on the mass of `|K|` outside the quadrature cube.
    pub vanishing_tail_bound: f64,
    pub size_ratio: f64,
    pub smoothness_ratio: f64,
    pub smoothness_x_ratio: Option<f64>,
    pub gradient_ratio: Option<f64>,
    pub conditions: Vec<ConditionResult>,
}

impl KernelValidationReport {
    pub const CSV_HEADER: &'static str = "condition,value,probes,discards,pass";

    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.condition == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.conditions {
            out.push_str(&format!("{},{:e},{},{},{}\n", c.condition, c.value, c.probes, c.discards, c.pass));
        }
        out
    }
}

/// Smallest constants passing the sampled checks for the declared `δ, γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedConstants {
    pub c_size: f64,
    pub delta: f64,
    pub c_smooth: f64,
    pub c_smooth_x: Option<f64>,
    pub gamma: f64,
    pub gradient: Option<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `∫_{|y|>R} (1+|y|)^{-p} dy` in R^n.
fn radial_tail(n: usize, r: f64, p: f64) -> f64 {
    let a = 1.0 + r;
    match n {
        1 => 2.0 * a.powf(1.0 - p) / (p - 1.0),
        _ => 2.0 * std::f64::consts::PI * (a.powf(2.0 - p) / (p - 2.0) - a.powf(1.0 - p) / (p - 1.0)),
    }
}

fn random_dir(rng: &mut ChaCha8Rng, n: usize) -> [f64; 2] {
    if n == 1 {
        [if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0]
    } else {
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        [th.cos(), th.sin()]
    }
}

/// Draws a coordinate mixing uniform and log-radial sampling so both the
/// core and the tail are probed.
fn draw(rng: &mut ChaCha8Rng, range: f64) -> f64 {
    if rng.gen::<bool>() {
        rng.gen_range(-range..range)
    } else {
        let r = (rng.gen_range((1e-3f64).ln()..(4.0 * range).ln())).exp();
        if rng.gen::<bool>() { r } else { -r }
    }
}

struct Raw {
    vanishing: Vec<f64>,
    tail: f64,
    slices: usize,
    size: f64,
    size_probes: usize,
    smooth: f64,
    smooth_probes: usize,
    smooth_discards: usize,
    smooth_x: Option<(f64, usize, usize)>,
    gradient: Option<(f64, usize)>,
}

/// Decay weight with exponent for size/smoothness, honouring the centring.
fn weight(k: &KernelSpec, x: &[f64], y: &[f64], p: f64) -> f64 {
    let x = (k.size_centering == SizeCentering::AtX).then_some(x);
    k.decay_base(x, y).powf(p)
}

fn sample(k: &KernelSpec, plan: &ProbePlan) -> Result<Raw> {
    if !(plan.extent >= k.support_radius_hint) {
        return Err(LabError::ProbePlan(format!(
            "quadrature extent {} is smaller than the support radius hint {}",
            plan.extent, k.support_radius_hint
        )));
    }
    if plan.quadrature_points < 2 || plan.slices == 0 || plan.size_probes == 0 || plan.smooth_probes == 0 {
        return Err(LabError::ProbePlan("probe counts must be positive".into()));
    }
    if !(plan.spacing > 0.0) {
        return Err(LabError::ProbePlan("displacement spacing must be positive".into()));
    }
    let (m, n) = (k.m, k.n);
    let mn = m * n;
    let nonconv = !k.form.is_convolution();
    let at_x = nonconv && k.size_centering == SizeCentering::AtX;
    let c = k.constants;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);

    // vanishing: per variable, per slice, midpoint quadrature over the cube
    let q = plan.quadrature_points;
    let hq = 2.0 * plan.extent / q as f64;
    let cell = hq.powi(n as i32);
    let slices: Vec<(Vec<f64>, Vec<f64>)> = (0..plan.slices)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..mn).map(|_| rng.gen_range(-1.5..1.5)).collect();
            (x, y)
        })
        .collect();
    let mut vanishing = vec![0.0f64; m];
    for (i, v) in vanishing.iter_mut().enumerate() {
        let worst = slices
            .par_iter()
            .map(|(x, y0)| {
                let centre: Vec<f64> = if at_x { x.clone() } else { vec![0.0; n] };
                let mut y = y0.clone();
                let mut acc = NeumaierSum::new();
                let total = q.pow(n as u32);
                for flat in 0..total {
                    let (a0, a1) = (flat / q.pow(n as u32 - 1), flat % q);
                    let idx = [a0, a1];
                    for a in 0..n {
                        let ia = if n == 1 { flat } else { idx[a] };
                        y[i * n + a] = centre[a] - plan.extent + (ia as f64 + 0.5) * hq;
                    }
                    acc.add(k.eval_raw(x, &y) * cell);
                }
                acc.value().abs()
            })
            .reduce(|| 0.0, f64::max);
        *v = worst;
    }
    let tail = c.c_size * radial_tail(n, plan.extent, (mn as f64) + c.delta);

    let probe_x = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect() };

    // size
    let pts: Vec<(Vec<f64>, Vec<f64>)> = (0..plan.size_probes)
        .map(|_| {
            let x = probe_x(&mut rng);
            let y: Vec<f64> = (0..mn)
                .map(|j| draw(&mut rng, plan.probe_range) + if at_x { x[j % n] } else { 0.0 })
                .collect();
            (x, y)
        })
        .collect();
    let p_size = mn as f64 + c.delta;
    let size = pts
        .par_iter()
        .map(|(x, y)| k.eval_raw(x, y).abs() * weight(k, x, y, p_size))
        .reduce(|| 0.0, f64::max);

    // smoothness in each y_i
    let p_smooth = mn as f64 + c.delta + c.gamma;
    let steps = [plan.spacing, 2.0 * plan.spacing, 4.0 * plan.spacing];
    let probes: Vec<(Vec<f64>, Vec<f64>, usize, f64, [f64; 2])> = (0..plan.smooth_probes)
        .map(|_| {
            let x = probe_x(&mut rng);
            let y: Vec<f64> = (0..mn)
                .map(|j| draw(&mut rng, plan.probe_range) + if at_x { x[j % n] } else { 0.0 })
                .collect();
            let i = rng.gen_range(0..m);
            let d = steps[rng.gen_range(0..3)];
            (x, y, i, d, random_dir(&mut rng, n))
        })
        .collect();
    let smooth_eval: Vec<Option<f64>> = probes
        .par_iter()
        .map(|(x, y, i, d, dir)| {
            let slot = |j: usize| &y[j * n..(j + 1) * n];
            let admissible = if nonconv {
                let rel: Vec<f64> = slot(*i).iter().zip(x).map(|(a, b)| a - b).collect();
                2.0 * d <= norm(&rel)
            } else {
                2.0 * d <= (0..m).map(|j| norm(slot(j))).fold(0.0, f64::max)
            };
            if !admissible {
                return None;
            }
            let mut y2 = y.clone();
            for a in 0..n {
                y2[i * n + a] += d * dir[a];
            }
            let diff = (k.eval_raw(x, y) - k.eval_raw(x, &y2)).abs();
            // the smoothness weight is centred at x for non-convolution kernels
            let base = if nonconv {
                1.0 + (0..m)
                    .map(|j| norm(&slot(j).iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>()))
                    .sum::<f64>()
            } else {
                k.decay_base(None, y)
            };
            Some(diff * base.powf(p_smooth) / d.powf(c.gamma))
        })
        .collect();
    let smooth_discards = smooth_eval.iter().filter(|v| v.is_none()).count();
    let smooth = smooth_eval.iter().flatten().fold(0.0f64, |a, &b| a.max(b));

    // smoothness in x
    let smooth_x = if nonconv {
        let probes: Vec<(Vec<f64>, Vec<f64>, f64, [f64; 2])> = (0..plan.smooth_probes)
            .map(|_| {
                let x = probe_x(&mut rng);
                let y: Vec<f64> = (0..mn).map(|j| draw(&mut rng, plan.probe_range) + x[j % n]).collect();
                let d = steps[rng.gen_range(0..3)];
                (x, y, d, random_dir(&mut rng, n))
            })
            .collect();
        let vals: Vec<Option<f64>> = probes
            .par_iter()
            .map(|(x, y, d, dir)| {
                let dist: Vec<f64> = (0..m)
                    .map(|j| norm(&y[j * n..(j + 1) * n].iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>()))
                    .collect();
                if 2.0 * d > dist.iter().cloned().fold(0.0, f64::max) {
                    return None;
                }
                let x2: Vec<f64> = (0..n).map(|a| x[a] + d * dir[a]).collect();
                let diff = (k.eval_raw(x, y) - k.eval_raw(&x2, y)).abs();
                let base = 1.0 + dist.iter().sum::<f64>();
                Some(diff * base.powf(p_smooth) / d.powf(c.gamma))
            })
            .collect();
        let discards = vals.iter().filter(|v| v.is_none()).count();
        let worst = vals.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        Some((worst, vals.len() - discards, discards))
    } else {
        None
    };

    // gradient bound for linear kernels, by central differences
    let gradient = if m == 1 && k.gradient_bound.is_some() {
        let fd = 1e-5;
        let pts: Vec<Vec<f64>> = (0..plan.size_probes).map(|_| (0..n).map(|_| draw(&mut rng, plan.probe_range)).collect()).collect();
        let worst = pts
            .par_iter()
            .map(|y| {
                let x0 = vec![0.0; n];
                let mut g2 = 0.0;
                for a in 0..n {
                    let (mut yp, mut ym) = (y.clone(), y.clone());
                    yp[a] += fd;
                    ym[a] -= fd;
                    let d = (k.eval_raw(&x0, &yp) - k.eval_raw(&x0, &ym)) / (2.0 * fd);
                    g2 += d * d;
                }
                g2.sqrt() * (1.0 + norm(y)).powi(n as i32 + 2)
            })
            .reduce(|| 0.0, f64::max);
        Some((worst, pts.len()))
    } else {
        None
    };

    Ok(Raw {
        vanishing,
        tail,
        slices: plan.slices,
        size,
        size_probes: plan.size_probes,
        smooth,
        smooth_probes: plan.smooth_probes - smooth_discards,
        smooth_discards,
        smooth_x,
        gradient,
    })
}

/// Certifies the declared constants of `k` on the probes of `plan`.
pub fn validate_kernel(k: &KernelSpec, plan: &ProbePlan) -> Result<KernelValidationReport> {
    let raw = sample(k, plan)?;
    let c = k.constants;
    let ratio_ok = |r: f64| r <= 1.0 + plan.ratio_tol;
    let mut conditions = Vec::new();
    for (i, d) in raw.vanishing.iter().enumerate() {
        conditions.push(ConditionResult {
            condition: format!("vanishing_y{}", i + 1),
            value: *d,
            probes: raw.slices,
            discards: 0,
            pass: *d <= plan.vanishing_tol * c.c_size,
        });
    }
    let size_ratio = raw.size / c.c_size;
    conditions.push(ConditionResult {
        condition: "size".into(),
        value: size_ratio,
        probes: raw.size_probes,
        discards: 0,
        pass: ratio_ok(size_ratio),
    });
    let smoothness_ratio = raw.smooth / c.c_smooth;
    conditions.push(ConditionResult {
        condition: "smoothness_y".into(),
        value: smoothness_ratio,
        probes: raw.smooth_probes,
        discards: raw.smooth_discards,
        pass: ratio_ok(smoothness_ratio),
    });
    let smoothness_x_ratio = raw.smooth_x.map(|(v, probes, discards)| {
        let r = v / c.c_smooth;
        conditions.push(ConditionResult {
            condition: "smoothness_x".into(),
            value: r,
            probes,
            discards,
            pass: ratio_ok(r),
        });
        r
    });
    let gradient_ratio = match (raw.gradient, k.gradient_bound) {
        (Some((g, probes)), Some(bound)) => {
            let r = g / bound;
            conditions.push(ConditionResult {
                condition: "gradient".into(),
                value: r,
                probes,
                discards: 0,
                pass: ratio_ok(r),
            });
            Some(r)
        }
        _ => None,
    };
    Ok(KernelValidationReport {
        kernel_id: k.id.clone(),
        vanishing_defects: raw.vanishing,
        vanishing_tail_bound: raw.tail,
        size_ratio,
        smoothness_ratio,
        smoothness_x_ratio,
        gradient_ratio,
        conditions,
    })
}

/// Reports the smallest `C_size`, `C_smooth` (and gradient bound) the probes
/// of `plan` support for the declared exponents.
pub fn fit_constants(k: &KernelSpec, plan: &ProbePlan) -> Result<FittedConstants> {
    let raw = sample(k, plan)?;
    Ok(FittedConstants {
        c_size: raw.size,
        delta: k.constants.delta,
        c_smooth: raw.smooth,
        c_smooth_x: raw.smooth_x.map(|v| v.0),
        gamma: k.constants.gamma,
        gradient: raw.gradient.map(|v| v.0),
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{builtin_kernel, KernelParams, BUILTIN_NAMES};

    fn params(m: usize, n: usize) -> KernelParams {
        KernelParams { m: Some(m), n: Some(n) }
    }

    #[test]
    fn tail_integral_closed_form() {
        // n=1, p=2: 2/(1+R)
        assert!((radial_tail(1, 3.0, 2.0) - 0.5).abs() < 1e-15);
        // n=2, p=3: 2π[(1+R)^{-1} − (1+R)^{-2}/2]
        let expect = 2.0 * std::f64::consts::PI * (0.25 - 1.0 / 32.0);
        assert!((radial_tail(2, 3.0, 3.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn refuses_short_extent() {
        let k = builtin_kernel("mexican-hat", &KernelParams::default()).unwrap();
        let plan = ProbePlan { extent: 5.0, ..ProbePlan::quick() };
        assert!(matches!(validate_kernel(&k, &plan), Err(LabError::ProbePlan(_))));
    }

    #[test]
    fn gaussian_without_vanishing_is_flagged() {
        let k = builtin_kernel("gaussian-no-vanish", &KernelParams::default()).unwrap();
        let r = validate_kernel(&k, &ProbePlan::quick()).unwrap();
        assert!((r.vanishing_defects[0] - std::f64::consts::PI.sqrt()).abs() < 1e-10);
        assert!(!r.condition("vanishing_y1").unwrap().pass);
        assert!(r.condition("size").unwrap().pass);
        assert!(!r.passed());
    }

    #[test]
    fn deterministic_given_seed() {
        let k = builtin_kernel("tensor-odd-gaussian", &params(2, 1)).unwrap();
        let a = validate_kernel(&k, &ProbePlan::quick()).unwrap();
        let b = validate_kernel(&k, &ProbePlan::quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn builtins_certify_their_declared_constants() {
        for name in BUILTIN_NAMES.iter().filter(|n| **n != "gaussian-no-vanish") {
            let ms: &[usize] = if matches!(*name, "tensor-odd-gaussian" | "shifted-nonconv") { &[1, 2, 3] } else { &[1] };
            for &m in ms {
                for n in [1, 2] {
                    let k = builtin_kernel(name, &params(m, n)).unwrap();
                    let r = validate_kernel(&k, &ProbePlan::quick()).unwrap();
                    assert!(r.passed(), "{}: {:?}", k.id, r.conditions);
                }
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_condition() {
        let k = builtin_kernel("shifted-nonconv", &params(2, 1)).unwrap();
        let r = validate_kernel(&k, &ProbePlan::quick()).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + r.conditions.len());
        assert!(csv.contains("smoothness_x"));
    }
}
