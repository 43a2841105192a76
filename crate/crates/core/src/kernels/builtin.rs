//! Built-in kernels with their declared constants.
//!
//! | name | m | form | δ | γ |
//! |------|---|------|---|---|
//! | `mexican-hat` | 1 | `ψ = −Δφ`, `ψ̂(ξ) = |ξ|² e^{−|ξ|²}` | 1 | 1 |
//! | `odd-gaussian` | 1 | `ψ(x) = x₁ e^{−|x|²}` | 1 | 1 |
//! | `tensor-odd-gaussian` | 1–3 | `∏ y_{i,1} e^{−|y_i|²}` | 1/2 | 1/4 |
//! | `gaussian-no-vanish` | 1 | `e^{−|x|²}` (violates vanishing) | 1 | 1 |
//! | `shifted-nonconv` | 1–3 | `w(x) ∏ ψ(y_i − x)`, `w = 1 + cos(x₁)/2` | 1/2 | 1/4 |
//!
//! `C_size` and `C_smooth` were obtained with [`super::fit_constants`] on a
//! dense probe plan and rounded up by about 30%.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{Factored, JointFn, KernelConstants, KernelForm, KernelSpec, PointFn};
use crate::error::{invalid, LabError, Result};

pub const BUILTIN_NAMES: [&str; 5] = [
    "mexican-hat",
    "odd-gaussian",
    "tensor-odd-gaussian",
    "gaussian-no-vanish",
    "shifted-nonconv",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelParams {
    pub m: Option<usize>,
    pub n: Option<usize>,
}

/// Parses `name[:m=<int>,n=<int>]`.
pub fn parse_kernel_arg(arg: &str) -> Result<(String, KernelParams)> {
    let (name, rest) = match arg.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b)),
        None => (arg.trim(), None),
    };
    let mut params = KernelParams::default();
    if let Some(rest) = rest {
        for kv in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("bad kernel parameter `{kv}`")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("kernel parameter `{k}` must be an integer")))?;
            match k.trim() {
                "m" => params.m = Some(v),
                "n" => params.n = Some(v),
                other => return Err(invalid(format!("unknown kernel parameter `{other}`"))),
            }
        }
    }
    Ok((name.to_string(), params))
}

fn norm2(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum()
}

fn odd_gaussian() -> PointFn {
    Arc::new(|y: &[f64]| y[0] * (-norm2(y)).exp())
}

fn mexican_hat(n: usize) -> PointFn {
    let norm = (4.0 * PI).powf(-(n as f64) / 2.0);
    let half_n = n as f64 / 2.0;
    Arc::new(move |y: &[f64]| {
        let r2 = norm2(y);
        (half_n - 0.25 * r2) * norm * (-0.25 * r2).exp()
    })
}

fn gaussian() -> PointFn {
    Arc::new(|y: &[f64]| (-norm2(y)).exp())
}

fn constants(c_size: f64, delta: f64, c_smooth: f64, gamma: f64) -> KernelConstants {
    KernelConstants { c_size, delta, c_smooth, gamma }
}

fn out_of_range(name: &str, m: usize, n: usize) -> LabError {
    invalid(format!("kernel `{name}` has no documented constants for m={m}, n={n}"))
}

pub fn builtin_kernel(name: &str, params: &KernelParams) -> Result<KernelSpec> {
    let n = params.n.unwrap_or(1);
    if !(1..=2).contains(&n) {
        return Err(invalid(format!("n must be 1 or 2, got {n}")));
    }
    match name {
        "mexican-hat" | "odd-gaussian" | "gaussian-no-vanish" => {
            let m = params.m.unwrap_or(1);
            if m != 1 {
                return Err(out_of_range(name, m, n));
            }
            let (profile, c, radius, grad) = match (name, n) {
                ("mexican-hat", 1) => (mexican_hat(1), constants(1.1, 1.0, 5.2, 1.0), 12.5, Some(4.5)),
                ("mexican-hat", _) => (mexican_hat(2), constants(0.94, 1.0, 5.8, 1.0), 12.5, Some(4.8)),
                ("odd-gaussian", 1) => (odd_gaussian(), constants(2.0, 1.0, 9.8, 1.0), 6.0, None),
                ("odd-gaussian", _) => (odd_gaussian(), constants(4.0, 1.0, 27.0, 1.0), 6.0, None),
                (_, 1) => (gaussian(), constants(2.4, 1.0, 11.0, 1.0), 6.0, None),
                _ => (gaussian(), constants(4.1, 1.0, 27.0, 1.0), 6.0, None),
            };
            let mut spec = KernelSpec::new(
                format!("{name}:m=1,n={n}"),
                1,
                n,
                KernelForm::Tensor(vec![profile]),
                c,
                radius,
            )?;
            if name == "mexican-hat" {
                spec.gradient_bound = grad;
            }
            Ok(spec)
        }
        "tensor-odd-gaussian" => {
            let m = params.m.unwrap_or(2);
            let c = match (m, n) {
                (1, 1) => constants(1.4, 0.5, 1.7, 0.25),
                (2, 1) => constants(2.8, 0.5, 4.0, 0.25),
                (3, 1) => constants(8.4, 0.5, 13.0, 0.25),
                (1, 2) => constants(2.8, 0.5, 4.6, 0.25),
                (2, 2) => constants(27.0, 0.5, 52.0, 0.25),
                (3, 2) => constants(580.0, 0.5, 1100.0, 0.25),
                _ => return Err(out_of_range(name, m, n)),
            };
            KernelSpec::new(
                format!("{name}:m={m},n={n}"),
                m,
                n,
                KernelForm::Tensor(vec![odd_gaussian(); m]),
                c,
                6.0,
            )
        }
        "shifted-nonconv" => {
            let m = params.m.unwrap_or(2);
            let c = match (m, n) {
                (1, 1) => constants(2.1, 0.5, 2.7, 0.25),
                (2, 1) => constants(4.2, 0.5, 12.0, 0.25),
                (3, 1) => constants(12.0, 0.5, 55.0, 0.25),
                (1, 2) => constants(4.1, 0.5, 6.8, 0.25),
                (2, 2) => constants(39.0, 0.5, 160.0, 0.25),
                (3, 2) => constants(820.0, 0.5, 2400.0, 0.25),
                _ => return Err(out_of_range(name, m, n)),
            };
            let weight: PointFn = Arc::new(|x: &[f64]| 1.0 + 0.5 * x[0].cos());
            let psi = odd_gaussian();
            let (w2, p2) = (weight.clone(), psi.clone());
            let eval: JointFn = Arc::new(move |x: &[f64], y: &[f64]| {
                let mut acc = w2(x);
                let mut d = [0.0f64; 2];
                for j in 0..m {
                    for a in 0..n {
                        d[a] = y[j * n + a] - x[a];
                    }
                    acc *= p2(&d[..n]);
                }
                acc
            });
            KernelSpec::new(
                format!("{name}:m={m},n={n}"),
                m,
                n,
                KernelForm::NonConvolution {
                    eval,
                    factored: Some(Factored { weight, factors: vec![psi; m] }),
                },
                c,
                6.0,
            )
        }
        other => Err(LabError::UnknownKernel(other.to_string())),
    }
}
