//! Separable evaluation: `𝒢_t = ∏ (ψ_i)_t * f_i` for tensor kernels and
//! `w(x/t) ∏ (φ_i)_t ⋆ f_i` for factored non-convolution kernels.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{check_inputs, scale_offsets};
use crate::error::{LabError, Result};
use crate::grid::{Extension, GridFunction};
use crate::kernels::{KernelForm, KernelSpec, PointFn};
use crate::sum::NeumaierSum;

/// Below this many taps the 1-D correlation is summed directly.
const FFT_MIN_TAPS: usize = 65;

/// `u[x] = Σ_j taps[j] · ext[x + j]` for `x < ext.len() − taps.len() + 1`.
pub fn correlate_1d_direct(ext: &[f64], taps: &[f64]) -> Vec<f64> {
    let out = ext.len() + 1 - taps.len();
    (0..out)
        .map(|x| {
            let mut acc = NeumaierSum::new();
            for (j, &c) in taps.iter().enumerate() {
                acc.add(c * ext[x + j]);
            }
            acc.value()
        })
        .collect()
}

/// Same as [`correlate_1d_direct`] through a zero-padded FFT.
pub fn correlate_1d_fft(ext: &[f64], taps: &[f64]) -> Vec<f64> {
    let out = ext.len() + 1 - taps.len();
    let size = (ext.len() + taps.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex<f64>> = ext.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(size, Complex::new(0.0, 0.0));
    // reversed taps turn the convolution into a correlation
    let mut b: Vec<Complex<f64>> = taps.iter().rev().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    let shift = taps.len() - 1;
    (0..out).map(|x| a[x + shift].re * scale).collect()
}

/// `u(x) = Σ_o taps(o) f(x + o)` over the offsets of one slot.
fn correlate(f: &GridFunction, offs: &[[i64; 2]], taps: &[f64]) -> Vec<f64> {
    let nn = f.points_per_axis() as i64;
    if f.dim() == 1 {
        let r = offs.iter().map(|o| o[0]).max().unwrap_or(0);
        let ext: Vec<f64> = (-r..nn + r).map(|i| f.value_at_lattice(&[i])).collect();
        if taps.len() < FFT_MIN_TAPS {
            correlate_1d_direct(&ext, taps)
        } else {
            correlate_1d_fft(&ext, taps)
        }
    } else {
        correlate_2d(f, offs, taps)
    }
}

fn correlate_2d(f: &GridFunction, offs: &[[i64; 2]], taps: &[f64]) -> Vec<f64> {
    let nn = f.points_per_axis() as i64;
    let nu = nn as usize;
    let r = offs.iter().map(|o| o[0].abs().max(o[1].abs())).max().unwrap_or(0);
    let side = (2 * r + 1) as usize;
    let samples = f.samples();
    match f.extension() {
        Extension::Periodic => {
            // fold the taps onto one period
            let mut folded = vec![0.0; nu * nu];
            for (o, &c) in offs.iter().zip(taps) {
                let p0 = o[0].rem_euclid(nn) as usize;
                let p1 = o[1].rem_euclid(nn) as usize;
                folded[p0 * nu + p1] += c;
            }
            (0..nu * nu)
                .map(|x| {
                    let (x0, x1) = (x / nu, x % nu);
                    let mut acc = NeumaierSum::new();
                    for p0 in 0..nu {
                        for p1 in 0..nu {
                            let c = folded[p0 * nu + p1];
                            if c != 0.0 {
                                acc.add(c * samples[((x0 + p0) % nu) * nu + (x1 + p1) % nu]);
                            }
                        }
                    }
                    acc.value()
                })
                .collect()
        }
        ext => {
            let mut grid = vec![0.0; side * side];
            for (o, &c) in offs.iter().zip(taps) {
                grid[((o[0] + r) as usize) * side + (o[1] + r) as usize] = c;
            }
            let zero = matches!(ext, Extension::Zero);
            (0..nu * nu)
                .map(|x| {
                    let (x0, x1) = ((x / nu) as i64, (x % nu) as i64);
                    let (lo0, hi0, lo1, hi1) = if zero {
                        ((-r).max(-x0), r.min(nn - 1 - x0), (-r).max(-x1), r.min(nn - 1 - x1))
                    } else {
                        (-r, r, -r, r)
                    };
                    let mut acc = NeumaierSum::new();
                    for o0 in lo0..=hi0 {
                        for o1 in lo1..=hi1 {
                            let c = grid[((o0 + r) as usize) * side + (o1 + r) as usize];
                            if c != 0.0 {
                                acc.add(c * f.value_at_lattice(&[x0 + o0, x1 + o1]));
                            }
                        }
                    }
                    acc.value()
                })
                .collect()
        }
    }
}

/// `h^n · t^{-n} φ(s·o·h/t)` per offset.
fn taps(phi: &PointFn, offs: &[[i64; 2]], n: usize, h: f64, t: f64, sign: f64) -> Vec<f64> {
    let scale = h.powi(n as i32) * t.powi(-(n as i32));
    offs.iter()
        .map(|o| {
            let y = [sign * o[0] as f64 * h / t, sign * o[1] as f64 * h / t];
            scale * phi(&y[..n])
        })
        .collect()
}

pub(crate) fn fast_samples(k: &KernelSpec, fs: &[&GridFunction], t: f64) -> Result<Vec<f64>> {
    let gf = fs[0];
    let n = k.n;
    let h = gf.spacing();
    let offs = scale_offsets(k, gf, t);
    let (factors, sign, weight) = match &k.form {
        // K_t(x − y) with y = x + o·h
        KernelForm::Tensor(fs) => (fs, -1.0, None),
        // K_t(x, y) = t^{-mn} w(x/t) ∏ φ((y − x)/t)
        KernelForm::NonConvolution { factored: Some(fc), .. } => (&fc.factors, 1.0, Some(&fc.weight)),
        _ => return Err(LabError::UnsupportedKernel(format!("{} has no separable fast path", k.id))),
    };
    let mut out = vec![1.0; gf.len()];
    for (phi, f) in factors.iter().zip(fs) {
        let u = correlate(f, &offs, &taps(phi, &offs, n, h, t, sign));
        for (o, v) in out.iter_mut().zip(u) {
            *o *= v;
        }
    }
    if let Some(w) = weight {
        for (flat, o) in out.iter_mut().enumerate() {
            let x: Vec<f64> = gf.node(flat).iter().map(|v| v / t).collect();
            *o *= w(&x);
        }
    }
    Ok(out)
}

/// `𝒢_t(f⃗)` for a tensor kernel as a product of per-slot convolutions.
pub fn tensor_fast_gt(k: &KernelSpec, fs: &[&GridFunction], t: f64) -> Result<GridFunction> {
    if !k.is_tensor() {
        return Err(LabError::UnsupportedKernel(format!("{} is not a tensor kernel", k.id)));
    }
    let gf = check_inputs(k, fs)?;
    super::check_scale(t)?;
    gf.with_samples(fast_samples(k, fs, t)?, Extension::Zero)
}

/// `𝒢_t(f⃗)` for a factored non-convolution kernel.
pub fn factored_fast_gt(k: &KernelSpec, fs: &[&GridFunction], t: f64) -> Result<GridFunction> {
    if !matches!(k.form, KernelForm::NonConvolution { factored: Some(_), .. }) {
        return Err(LabError::UnsupportedKernel(format!("{} is not a factored kernel", k.id)));
    }
    let gf = check_inputs(k, fs)?;
    super::check_scale(t)?;
    gf.with_samples(fast_samples(k, fs, t)?, Extension::Zero)
}
