//! Multilinear Littlewood–Paley kernels: construction, dilation and
//! numerical certification of the vanishing, size and smoothness conditions.

mod builtin;
mod validate;

pub use builtin::{builtin_kernel, parse_kernel_arg, KernelParams, BUILTIN_NAMES};
pub use validate::{fit_constants, validate_kernel, ConditionResult, FittedConstants, KernelValidationReport, ProbePlan};

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, LabError, Result};

/// Function of one point in R^n, or of `m` points flattened to length `m·n`.
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Function of `(x, y⃗)` with `y⃗` flattened.
pub type JointFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// `K(x, y⃗) = weight(x) · ∏ factors_i(y_i − x)`.
#[derive(Clone)]
pub struct Factored {
    pub weight: PointFn,
    pub factors: Vec<PointFn>,
}

#[derive(Clone)]
pub enum KernelForm {
    /// `K(y_1, …, y_m)`, applied to `x − y_i`.
    Convolution(PointFn),
    /// `K(x, y_1, …, y_m)`; `factored` enables the separable fast path.
    NonConvolution { eval: JointFn, factored: Option<Factored> },
    /// `K(y⃗) = ∏ ψ_i(y_i)` with mean-zero profiles.
    Tensor(Vec<PointFn>),
}

impl KernelForm {
    pub fn is_convolution(&self) -> bool {
        !matches!(self, KernelForm::NonConvolution { .. })
    }
}

/// Constants of the size and smoothness conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub c_size: f64,
    pub delta: f64,
    pub c_smooth: f64,
    pub gamma: f64,
}

/// Where the decay weight `(1 + Σ|·|)` is centred for non-convolution kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeCentering {
    /// `(1 + Σ|y_j|)`
    Origin,
    /// `(1 + Σ|x − y_j|)`
    AtX,
}

#[derive(Clone)]
pub struct KernelSpec {
    pub id: String,
    pub m: usize,
    pub n: usize,
    pub form: KernelForm,
    pub constants: KernelConstants,
    /// Per-slot radius beyond which `|K|` is below ~1e-15.
    pub support_radius_hint: f64,
    pub size_centering: SizeCentering,
    /// Bound `C` in `|∇ψ(x)| ≤ C (1+|x|)^{-(n+2)}`, linear kernels only.
    pub gradient_bound: Option<f64>,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            KernelForm::Convolution(_) => "convolution",
            KernelForm::NonConvolution { factored: Some(_), .. } => "non-convolution(factored)",
            KernelForm::NonConvolution { .. } => "non-convolution",
            KernelForm::Tensor(_) => "tensor",
        };
        f.debug_struct("KernelSpec")
            .field("id", &self.id)
            .field("m", &self.m)
            .field("n", &self.n)
            .field("form", &form)
            .field("constants", &self.constants)
            .field("support_radius_hint", &self.support_radius_hint)
            .field("size_centering", &self.size_centering)
            .finish()
    }
}

impl KernelSpec {
    pub fn new(
        id: impl Into<String>,
        m: usize,
        n: usize,
        form: KernelForm,
        constants: KernelConstants,
        support_radius_hint: f64,
    ) -> Result<Self> {
        if m == 0 || !(1..=2).contains(&n) {
            return Err(invalid(format!("unsupported kernel shape m={m}, n={n}")));
        }
        if !(constants.delta > 0.0 && constants.gamma > 0.0) {
            return Err(invalid("declared delta and gamma must be positive"));
        }
        if !(support_radius_hint > 0.0) {
            return Err(invalid("support radius hint must be positive"));
        }
        match &form {
            KernelForm::Tensor(f) if f.len() != m => {
                return Err(invalid(format!("tensor kernel needs {m} factors, got {}", f.len())))
            }
            KernelForm::NonConvolution { factored: Some(fc), .. } if fc.factors.len() != m => {
                return Err(invalid("factored kernel needs m factors"))
            }
            _ => {}
        }
        let size_centering = if form.is_convolution() { SizeCentering::Origin } else { SizeCentering::AtX };
        Ok(Self {
            id: id.into(),
            m,
            n,
            form,
            constants,
            support_radius_hint,
            size_centering,
            gradient_bound: None,
        })
    }

    pub fn is_tensor(&self) -> bool {
        matches!(self.form, KernelForm::Tensor(_))
    }

    /// Undilated kernel. `x` is required for non-convolution kernels and
    /// ignored otherwise; `y` has length `m·n`.
    pub fn eval(&self, x: Option<&[f64]>, y: &[f64]) -> Result<f64> {
        if y.len() != self.m * self.n {
            return Err(invalid(format!("expected {} y-coordinates, got {}", self.m * self.n, y.len())));
        }
        match &self.form {
            KernelForm::Convolution(k) => Ok(k(y)),
            KernelForm::Tensor(fs) => Ok(self.eval_tensor(fs, y)),
            KernelForm::NonConvolution { eval, .. } => {
                let x = x.ok_or_else(|| invalid("non-convolution kernel needs x"))?;
                if x.len() != self.n {
                    return Err(invalid("x has wrong dimension"));
                }
                Ok(eval(x, y))
            }
        }
    }

    #[inline]
    fn eval_tensor(&self, fs: &[PointFn], y: &[f64]) -> f64 {
        fs.iter()
            .enumerate()
            .map(|(i, f)| f(&y[i * self.n..(i + 1) * self.n]))
            .product()
    }

    /// Unchecked evaluation used on hot paths.
    #[inline]
    pub(crate) fn eval_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.form {
            KernelForm::Convolution(k) => k(y),
            KernelForm::Tensor(fs) => self.eval_tensor(fs, y),
            KernelForm::NonConvolution { eval, .. } => eval(x, y),
        }
    }

    pub fn dilation_factor(&self, t: f64) -> f64 {
        t.powi(-((self.m * self.n) as i32))
    }

    /// `t^{-mn} K(y⃗/t)`, or `t^{-mn} K(x/t, y⃗/t)` for non-convolution kernels.
    pub fn eval_dilated(&self, t: f64, x: Option<&[f64]>, y: &[f64]) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("scale t must be positive, got {t}")));
        }
        let ys: Vec<f64> = y.iter().map(|v| v / t).collect();
        let xs: Option<Vec<f64>> = x.map(|x| x.iter().map(|v| v / t).collect());
        Ok(self.dilation_factor(t) * self.eval(xs.as_deref(), &ys)?)
    }

    /// Decay weight `1 + Σ_j |y_j − c|` with the configured centring.
    pub(crate) fn decay_base(&self, x: Option<&[f64]>, y: &[f64]) -> f64 {
        let centre = match (self.size_centering, x) {
            (SizeCentering::AtX, Some(x)) => Some(x),
            _ => None,
        };
        1.0 + (0..self.m)
            .map(|j| {
                let yj = &y[j * self.n..(j + 1) * self.n];
                let d2: f64 = match centre {
                    Some(c) => yj.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
                    None => yj.iter().map(|a| a * a).sum(),
                };
                d2.sqrt()
            })
            .sum::<f64>()
    }

    pub fn with_size_centering(mut self, c: SizeCentering) -> Self {
        self.size_centering = c;
        self
    }
}

/// The non-convolution kernel `K(x, y⃗) := K₀(x − y_1, …, x − y_m)`.
pub fn as_non_convolution(k0: &KernelSpec) -> Result<KernelSpec> {
    if !k0.form.is_convolution() {
        return Err(LabError::UnsupportedKernel("kernel is already non-convolution".into()));
    }
    let (m, n) = (k0.m, k0.n);
    if m * n > 8 {
        return Err(invalid("as_non_convolution supports m·n ≤ 8"));
    }
    let base = k0.clone();
    let eval: JointFn = Arc::new(move |x: &[f64], y: &[f64]| {
        let mut d = [0.0f64; 8];
        let d = &mut d[..m * n];
        for j in 0..m {
            for a in 0..n {
                d[j * n + a] = x[a] - y[j * n + a];
            }
        }
        base.eval_raw(x, d)
    });
    let mut spec = KernelSpec::new(
        format!("{}+as-nonconv", k0.id),
        m,
        n,
        KernelForm::NonConvolution { eval, factored: None },
        k0.constants,
        k0.support_radius_hint,
    )?;
    spec.size_centering = SizeCentering::AtX;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tog(m: usize) -> KernelSpec {
        builtin_kernel("tensor-odd-gaussian", &KernelParams { m: Some(m), n: Some(1) }).unwrap()
    }

    #[test]
    fn identity_dilation() {
        let k = tog(2);
        for y in [[0.3, -1.2], [2.0, 0.1], [0.0, 0.7]] {
            assert_eq!(k.eval_dilated(1.0, None, &y).unwrap(), k.eval(None, &y).unwrap());
        }
    }

    #[test]
    fn scaling_law() {
        let k = tog(2);
        let (t, y) = (0.37, [0.4, -0.9]);
        let lhs = k.eval_dilated(2.0 * t, None, &[2.0 * y[0], 2.0 * y[1]]).unwrap();
        let rhs = 0.25 * k.eval_dilated(t, None, &y).unwrap();
        assert!((lhs - rhs).abs() <= 1e-15 * rhs.abs());
    }

    #[test]
    fn hand_evaluated_value() {
        let v = tog(2).eval_dilated(0.5, None, &[0.5, 0.5]).unwrap();
        let expect = 4.0 * (-2.0f64).exp();
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 0.5413).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(tog(2).eval_dilated(0.0, None, &[0.1, 0.1]).is_err());
        assert!(tog(2).eval_dilated(-1.0, None, &[0.1, 0.1]).is_err());
    }

    #[test]
    fn tensor_equals_product_of_profiles() {
        let k = tog(3);
        let y = [0.2, -0.7, 1.3];
        let psi = |u: f64| u * (-u * u).exp();
        let direct = psi(y[0]) * psi(y[1]) * psi(y[2]);
        assert!((k.eval(None, &y).unwrap() - direct).abs() <= 1e-16);
    }

    #[test]
    fn dilation_preserves_integral() {
        // ∫ K_t over t·Q equals ∫ K over Q, checked on a product grid
        let k = builtin_kernel("gaussian-no-vanish", &KernelParams::default()).unwrap();
        let integrate = |t: f64| {
            let np = 4000;
            let h = 2.0 * 6.0 * t / np as f64;
            (0..np)
                .map(|i| {
                    let y = -6.0 * t + (i as f64 + 0.5) * h;
                    k.eval_dilated(t, None, &[y]).unwrap() * h
                })
                .sum::<f64>()
        };
        let base = integrate(1.0);
        for t in [0.25, 3.0] {
            assert!((integrate(t) - base).abs() <= 1e-10 * base);
        }
    }

    #[test]
    fn non_convolution_reduction_agrees_pointwise() {
        let k0 = tog(2);
        let k = as_non_convolution(&k0).unwrap();
        let x = [0.3];
        let y = [0.1, -0.4];
        let a = k.eval_dilated(0.7, Some(&x), &y).unwrap();
        let b = k0.eval_dilated(0.7, None, &[x[0] - y[0], x[0] - y[1]]).unwrap();
        assert!((a - b).abs() <= 1e-15);
        assert!(k.eval(None, &y).is_err());
    }
}
