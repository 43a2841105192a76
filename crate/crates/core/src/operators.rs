//! 𝒢_t and the square functions g, S and g*_λ built from it.
//!
//! Every square function is assembled from the same per-scale fields
//! [`ScaleFields`], so S and g*_λ share one discretization and the cone
//! domination `S ≤ 2^{λn/2} g*_λ` holds term by term.

mod fast;
mod field;

pub use fast::{correlate_1d_direct, correlate_1d_fft, factored_fast_gt, tensor_fast_gt};
pub use field::{OperatorField, OperatorMeta};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, LabError, Result};
use crate::grid::{Extension, GridFunction};
use crate::kernels::{KernelForm, KernelSpec};
use crate::sum::NeumaierSum;

/// Largest kernel table (entries) the direct path will build.
const DIRECT_TABLE_LIMIT: usize = 1 << 26;

/// Log-midpoint discretization of `∫ · dt/t` over `[t_min, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TGrid {
    t_min: f64,
    t_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl TGrid {
    pub const DEFAULT_COUNT: usize = 64;

    pub fn new(t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(invalid(format!("need 0 < t_min < t_max, got [{t_min}, {t_max}]")));
        }
        if count < 8 {
            return Err(invalid(format!("t-grid needs at least 8 nodes, got {count}")));
        }
        let (a, b) = (t_min.ln(), t_max.ln());
        let step = (b - a) / count as f64;
        let nodes = (0..count).map(|k| (a + (k as f64 + 0.5) * step).exp()).collect();
        Ok(Self { t_min, t_max, nodes, weights: vec![step; count] })
    }

    /// `[h, 2L]` with the default node count.
    pub fn default_for(gf: &GridFunction) -> Result<Self> {
        Self::new(gf.spacing(), 2.0 * gf.grid_box().half_width(), Self::DEFAULT_COUNT)
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Aperture-1 cone and the truncation of the g*_λ weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSpec {
    pub lambda: f64,
    pub weight_eps: f64,
}

impl ConeSpec {
    pub const DEFAULT_WEIGHT_EPS: f64 = 1e-8;

    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_eps(lambda, Self::DEFAULT_WEIGHT_EPS)
    }

    pub fn with_eps(lambda: f64, weight_eps: f64) -> Result<Self> {
        if !(lambda > 1.0) || !lambda.is_finite() {
            return Err(invalid(format!("g*_λ requires λ > 1, got {lambda}")));
        }
        if !(weight_eps > 0.0 && weight_eps < 1.0) {
            return Err(invalid("weight_eps must lie in (0, 1)"));
        }
        Ok(Self { lambda, weight_eps })
    }

    /// Radius beyond which `(t/(t+|x−z|))^{λn} < weight_eps`. Never smaller
    /// than the cone itself, so the cone is always fully covered.
    pub fn truncation_radius(&self, t: f64, n: usize) -> f64 {
        let r = t * (self.weight_eps.powf(-1.0 / (self.lambda * n as f64)) - 1.0);
        r.max(t)
    }

    /// Regime notes for the chosen λ (reported, never fatal).
    pub fn warnings(&self, k: &KernelSpec) -> Vec<String> {
        let m = k.m as f64;
        let c = k.constants;
        let mut out = Vec::new();
        if self.lambda <= 2.0 * m {
            out.push(format!("lambda {} <= 2m = {}: outside the L^p bound regime", self.lambda, 2.0 * m));
        }
        let t38 = 3.0 * m + (2.0 * c.delta + 2.0 * c.gamma) / k.n as f64;
        if self.lambda <= t38 {
            out.push(format!("lambda {} <= 3m + (2delta+2gamma)/n = {t38}: outside the BMO->BLO regime", self.lambda));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    G,
    S,
    GStar,
    /// Non-convolution counterparts.
    GPrime,
    SPrime,
    GStarStar,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [Self::G, Self::S, Self::GStar, Self::GPrime, Self::SPrime, Self::GStarStar];

    pub fn name(self) -> &'static str {
        match self {
            Self::G => "g",
            Self::S => "S",
            Self::GStar => "g*",
            Self::GPrime => "g'",
            Self::SPrime => "S'",
            Self::GStarStar => "g**",
        }
    }

    pub fn is_non_convolution(self) -> bool {
        matches!(self, Self::GPrime | Self::SPrime | Self::GStarStar)
    }

    pub fn needs_lambda(self) -> bool {
        matches!(self, Self::GStar | Self::GStarStar)
    }

    /// The kind matching the kernel's form.
    pub fn for_kernel(self, k: &KernelSpec) -> Self {
        let nonconv = !k.form.is_convolution();
        match (self, nonconv) {
            (Self::G | Self::GPrime, false) => Self::G,
            (Self::G | Self::GPrime, true) => Self::GPrime,
            (Self::S | Self::SPrime, false) => Self::S,
            (Self::S | Self::SPrime, true) => Self::SPrime,
            (Self::GStar | Self::GStarStar, false) => Self::GStar,
            (Self::GStar | Self::GStarStar, true) => Self::GStarStar,
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "g" => Self::G,
            "S" | "s" | "area" => Self::S,
            "g*" | "gstar" | "g*_lambda" => Self::GStar,
            "g'" | "gprime" => Self::GPrime,
            "S'" | "sprime" => Self::SPrime,
            "g**" | "gstarstar" | "g**_lambda" => Self::GStarStar,
            other => return Err(invalid(format!("unknown operator `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GtPath {
    /// Fast path when the kernel is separable, direct otherwise.
    #[default]
    Auto,
    Direct,
    Fast,
}

impl GtPath {
    pub fn name(self) -> &'static str {
        match self {
            GtPath::Auto => "auto",
            GtPath::Direct => "direct",
            GtPath::Fast => "fast",
        }
    }
}

impl FromStr for GtPath {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(GtPath::Auto),
            "direct" => Ok(GtPath::Direct),
            "fast" => Ok(GtPath::Fast),
            other => Err(invalid(format!("unknown evaluation path `{other}`"))),
        }
    }
}

/// Lattice offsets `o` with `|o|·h ≤ radius` (row-major, symmetric).
pub(crate) fn slot_offsets(n: usize, h: f64, radius: f64) -> Vec<[i64; 2]> {
    let r = (radius / h).floor() as i64 + 1;
    let lim = radius * radius;
    let inside = |q: i64| (q as f64) * h * h <= lim;
    match n {
        1 => (-r..=r).filter(|&o| inside(o * o)).map(|o| [o, 0]).collect(),
        _ => {
            let mut out = Vec::new();
            for a in -r..=r {
                for b in -r..=r {
                    if inside(a * a + b * b) {
                        out.push([a, b]);
                    }
                }
            }
            out
        }
    }
}

pub(crate) fn check_inputs<'a>(k: &KernelSpec, fs: &[&'a GridFunction]) -> Result<&'a GridFunction> {
    if fs.len() != k.m {
        return Err(invalid(format!("kernel is {}-linear but {} inputs were given", k.m, fs.len())));
    }
    let first = fs[0];
    if first.dim() != k.n {
        return Err(LabError::GridMismatch(format!("kernel dimension {} vs grid dimension {}", k.n, first.dim())));
    }
    if fs.iter().any(|f| !f.same_grid(first)) {
        return Err(LabError::GridMismatch("inputs must share box and resolution".into()));
    }
    Ok(first)
}

fn check_scale(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("scale t must be positive, got {t}")));
    }
    Ok(())
}

/// Offsets for one slot at scale `t`; beyond the box only non-zero
/// extensions contribute.
pub(crate) fn scale_offsets(k: &KernelSpec, gf: &GridFunction, t: f64) -> Vec<[i64; 2]> {
    let h = gf.spacing();
    let mut offs = slot_offsets(k.n, h, t * k.support_radius_hint);
    if matches!(gf.extension(), Extension::Zero) {
        let big = gf.points_per_axis() as i64;
        offs.retain(|o| o[0].abs() < big && o[1].abs() < big);
    }
    offs
}

/// Samples of each input at `x + o` for every offset.
fn gather(fs: &[&GridFunction], base: [usize; 2], offs: &[[i64; 2]]) -> Vec<Vec<f64>> {
    let n = fs[0].dim();
    fs.iter()
        .map(|f| {
            offs.iter()
                .map(|o| {
                    let idx = [base[0] as i64 + o[0], base[1] as i64 + o[1]];
                    f.value_at_lattice(&idx[..n])
                })
                .collect()
        })
        .collect()
}

/// `Σ_{a_1..a_m} table[a_1,…,a_m] ∏ vals_i[a_i]`.
fn contract(table: &[f64], vals: &[Vec<f64>]) -> f64 {
    let width = vals[0].len();
    let mut acc = NeumaierSum::new();
    if vals.len() == 1 {
        for (t, v) in table.iter().zip(&vals[0]) {
            if *v != 0.0 {
                acc.add(t * v);
            }
        }
    } else {
        let stride = table.len() / width;
        for (a, v) in vals[0].iter().enumerate() {
            if *v != 0.0 {
                acc.add(v * contract(&table[a * stride..(a + 1) * stride], &vals[1..]));
            }
        }
    }
    acc.value()
}

fn table_len(width: usize, m: usize) -> Result<usize> {
    width
        .checked_pow(m as u32)
        .filter(|&l| l <= DIRECT_TABLE_LIMIT)
        .ok_or_else(|| LabError::ResourceLimit(format!("direct path would need a {width}^{m} kernel table")))
}

/// Direct midpoint quadrature of `𝒢_t(f⃗)` at every node.
///
/// Each slot is summed over lattice offsets within `t · support_radius_hint`;
/// points outside the box take their values from the extension policy.
pub fn gt_field(k: &KernelSpec, fs: &[&GridFunction], t: f64) -> Result<GridFunction> {
    let gf = check_inputs(k, fs)?;
    check_scale(t)?;
    let samples = gt_direct(k, fs, t)?;
    gf.with_samples(samples, Extension::Zero)
}

fn gt_direct(k: &KernelSpec, fs: &[&GridFunction], t: f64) -> Result<Vec<f64>> {
    let gf = fs[0];
    let (m, n) = (k.m, k.n);
    let h = gf.spacing();
    let offs = scale_offsets(k, gf, t);
    let width = offs.len();
    let len = table_len(width, m)?;
    let vol = gf.cell_volume().powi(m as i32);
    let dil = k.dilation_factor(t);

    match &k.form {
        KernelForm::NonConvolution { eval, .. } => {
            let nodes: Vec<usize> = (0..gf.len()).collect();
            Ok(nodes
                .par_iter()
                .map(|&flat| {
                    let base = gf.multi_index(flat);
                    let vals = gather(fs, base, &offs);
                    let x: Vec<f64> = (0..n).map(|a| gf.lattice_coord(a, base[a] as i64) / t).collect();
                    let mut y = vec![0.0; m * n];
                    let mut rec = Recursion { eval: eval.as_ref(), x: &x, offs: &offs, gf, base, t, n };
                    dil * vol * rec.sum(0, &mut y, &vals)
                })
                .collect())
        }
        _ => {
            // the table depends only on the offsets, so it is shared by every x
            let mut table = vec![0.0; len];
            table.par_chunks_mut(width).enumerate().for_each(|(row, chunk)| {
                let mut y = vec![0.0; m * n];
                let mut rest = row;
                for slot in (0..m - 1).rev() {
                    let o = offs[rest % width];
                    rest /= width;
                    for a in 0..n {
                        y[slot * n + a] = -(o[a] as f64) * h / t;
                    }
                }
                for (c, o) in chunk.iter_mut().zip(&offs) {
                    for a in 0..n {
                        y[(m - 1) * n + a] = -(o[a] as f64) * h / t;
                    }
                    *c = dil * vol * k.eval_raw(&[], &y);
                }
            });
            Ok((0..gf.len())
                .into_par_iter()
                .map(|flat| contract(&table, &gather(fs, gf.multi_index(flat), &offs)))
                .collect())
        }
    }
}

struct Recursion<'a> {
    eval: &'a (dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync),
    x: &'a [f64],
    offs: &'a [[i64; 2]],
    gf: &'a GridFunction,
    base: [usize; 2],
    t: f64,
    n: usize,
}

impl Recursion<'_> {
    fn sum(&mut self, slot: usize, y: &mut [f64], vals: &[Vec<f64>]) -> f64 {
        let mut acc = NeumaierSum::new();
        let last = slot + 1 == vals.len();
        for (a, o) in self.offs.iter().enumerate() {
            let v = vals[slot][a];
            if v == 0.0 {
                continue;
            }
            for ax in 0..self.n {
                y[slot * self.n + ax] = self.gf.lattice_coord(ax, self.base[ax] as i64 + o[ax]) / self.t;
            }
            let inner = if last { (self.eval)(self.x, y) } else { self.sum(slot + 1, y, vals) };
            acc.add(v * inner);
        }
        acc.value()
    }
}

/// `𝒢_t(f⃗)` by the requested path.
pub fn gt(k: &KernelSpec, fs: &[&GridFunction], t: f64, path: GtPath) -> Result<GridFunction> {
    let gf = check_inputs(k, fs)?;
    check_scale(t)?;
    let fast_ok = fast_available(k);
    match path {
        GtPath::Direct => gt_field(k, fs, t),
        GtPath::Fast if !fast_ok => Err(LabError::UnsupportedKernel(format!("{} has no separable fast path", k.id))),
        GtPath::Auto if !fast_ok => gt_field(k, fs, t),
        _ => {
            let s = fast::fast_samples(k, fs, t)?;
            gf.with_samples(s, Extension::Zero)
        }
    }
}

pub fn fast_available(k: &KernelSpec) -> bool {
    matches!(k.form, KernelForm::Tensor(_) | KernelForm::NonConvolution { factored: Some(_), .. })
}

/// `𝒢_{t_k}(f⃗)` on the whole grid for every node of the t-grid; the single
/// source of truth for g, S and g*_λ.
#[derive(Debug, Clone)]
pub struct ScaleFields {
    template: GridFunction,
    kernel_id: String,
    non_convolution: bool,
    tgrid: TGrid,
    path: GtPath,
    fields: Vec<Vec<f64>>,
}

impl ScaleFields {
    pub fn compute(k: &KernelSpec, fs: &[&GridFunction], tg: &TGrid, path: GtPath) -> Result<Self> {
        let gf = check_inputs(k, fs)?;
        let resolved = match path {
            GtPath::Auto if fast_available(k) => GtPath::Fast,
            GtPath::Auto => GtPath::Direct,
            p => p,
        };
        let fields = tg
            .nodes()
            .iter()
            .map(|&t| gt(k, fs, t, resolved).map(|g| g.samples().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            template: gf.clone(),
            kernel_id: k.id.clone(),
            non_convolution: !k.form.is_convolution(),
            tgrid: tg.clone(),
            path: resolved,
            fields,
        })
    }

    pub fn tgrid(&self) -> &TGrid {
        &self.tgrid
    }

    pub fn field(&self, k: usize) -> &[f64] {
        &self.fields[k]
    }

    fn kind(&self, base: OperatorKind) -> OperatorKind {
        match (base, self.non_convolution) {
            (OperatorKind::G, true) => OperatorKind::GPrime,
            (OperatorKind::S, true) => OperatorKind::SPrime,
            (OperatorKind::GStar, true) => OperatorKind::GStarStar,
            (b, _) => b,
        }
    }

    fn meta(&self, base: OperatorKind, cone: Option<&ConeSpec>, warnings: Vec<String>) -> OperatorMeta {
        OperatorMeta {
            kernel_id: self.kernel_id.clone(),
            kind: self.kind(base),
            t_min: self.tgrid.t_min(),
            t_max: self.tgrid.t_max(),
            t_count: self.tgrid.len(),
            lambda: cone.map(|c| c.lambda),
            weight_eps: cone.map(|c| c.weight_eps),
            path: self.path,
            split_radius: None,
            warnings,
        }
    }

    fn finish(&self, squares: Vec<f64>, meta: OperatorMeta) -> Result<OperatorField> {
        let values = squares.into_iter().map(|s| s.max(0.0).sqrt()).collect();
        Ok(OperatorField { values: self.template.with_samples(values, Extension::EdgeHold)?, meta })
    }

    fn g_squares(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let w = self.tgrid.weights();
        (0..self.template.len())
            .into_par_iter()
            .map(|x| {
                let mut acc = NeumaierSum::new();
                for k in range.clone() {
                    let v = self.fields[k][x];
                    acc.add(v * v * w[k]);
                }
                acc.value()
            })
            .collect()
    }

    pub fn g(&self) -> Result<OperatorField> {
        let sq = self.g_squares(0..self.tgrid.len());
        self.finish(sq, self.meta(OperatorKind::G, None, Vec::new()))
    }

    /// `(g₀, g_∞)` over t-nodes `≤ r` and `> r`.
    pub fn split(&self, r: f64) -> Result<(OperatorField, OperatorField)> {
        if !(r > self.tgrid.t_min() && r <= self.tgrid.t_max()) {
            return Err(invalid(format!(
                "split radius {r} outside ({}, {}]",
                self.tgrid.t_min(),
                self.tgrid.t_max()
            )));
        }
        let cut = self.tgrid.nodes().partition_point(|&t| t <= r);
        let mut meta = self.meta(OperatorKind::G, None, Vec::new());
        meta.split_radius = Some(r);
        let g0 = self.finish(self.g_squares(0..cut), meta.clone())?;
        let ginf = self.finish(self.g_squares(cut..self.tgrid.len()), meta)?;
        Ok((g0, ginf))
    }

    /// `a_k(z) = |𝒢_{t_k}(z)|² · w_k · h^n / t_k^n`.
    fn cone_terms(&self) -> Vec<Vec<f64>> {
        let n = self.template.dim() as i32;
        let cell = self.template.cell_volume();
        self.tgrid
            .nodes()
            .iter()
            .zip(self.tgrid.weights())
            .zip(&self.fields)
            .map(|((&t, &w), f)| {
                let c = w * cell / t.powi(n);
                f.iter().map(|v| v * v * c).collect()
            })
            .collect()
    }

    /// Sum over box nodes `z` with `|z − x|² ≤ r2_max` (in cells²), weighted by `weight(k, |z−x|²)`.
    fn accumulate<W>(&self, terms: &[Vec<f64>], radii2: &[i64], weight: W) -> Vec<f64>
    where
        W: Fn(usize, i64) -> f64 + Sync,
    {
        let gf = &self.template;
        let nn = gf.points_per_axis() as i64;
        let dim = gf.dim();
        (0..gf.len())
            .into_par_iter()
            .map(|x| {
                let xi = gf.multi_index(x);
                let mut acc = NeumaierSum::new();
                for (k, a) in terms.iter().enumerate() {
                    let r2 = radii2[k];
                    let r = (r2 as f64).sqrt().floor() as i64 + 1;
                    let (x0, x1) = (xi[0] as i64, xi[1] as i64);
                    let lo0 = (x0 - r).max(0);
                    let hi0 = (x0 + r).min(nn - 1);
                    for z0 in lo0..=hi0 {
                        let d0 = z0 - x0;
                        if dim == 1 {
                            let q = d0 * d0;
                            if q <= r2 {
                                acc.add(weight(k, q) * a[z0 as usize]);
                            }
                        } else {
                            let lo1 = (x1 - r).max(0);
                            let hi1 = (x1 + r).min(nn - 1);
                            for z1 in lo1..=hi1 {
                                let d1 = z1 - x1;
                                let q = d0 * d0 + d1 * d1;
                                if q <= r2 {
                                    acc.add(weight(k, q) * a[(z0 * nn + z1) as usize]);
                                }
                            }
                        }
                    }
                }
                acc.value()
            })
            .collect()
    }

    /// Largest `q` (cells²) with `q·h² < t²`.
    fn cone_radius2(&self, t: f64) -> i64 {
        let h = self.template.spacing();
        let mut q = ((t / h) * (t / h)).floor() as i64 + 1;
        while q >= 0 && (q as f64) * h * h >= t * t {
            q -= 1;
        }
        q
    }

    pub fn area(&self) -> Result<OperatorField> {
        let terms = self.cone_terms();
        let radii: Vec<i64> = self.tgrid.nodes().iter().map(|&t| self.cone_radius2(t)).collect();
        let sq = self.accumulate(&terms, &radii, |_, _| 1.0);
        self.finish(sq, self.meta(OperatorKind::S, None, Vec::new()))
    }

    pub fn g_star(&self, cone: &ConeSpec, k: &KernelSpec) -> Result<OperatorField> {
        let terms = self.cone_terms();
        let h = self.template.spacing();
        let n = self.template.dim();
        let nn = self.template.points_per_axis() as i64;
        let box_r2 = (n as i64) * nn * nn;
        let ln = cone.lambda * n as f64;
        let floor_w = 0.5f64.powf(ln);
        let nodes = self.tgrid.nodes();
        let radii: Vec<i64> = nodes
            .iter()
            .map(|&t| {
                let r = cone.truncation_radius(t, n) / h;
                ((r * r).floor() as i64).min(box_r2)
            })
            .collect();
        let cone_r2: Vec<i64> = nodes.iter().map(|&t| self.cone_radius2(t)).collect();
        // weight per (k, q); inside the cone it is never below 2^{-λn}
        let tables: Vec<Vec<f64>> = nodes
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                (0..=radii[k])
                    .map(|q| {
                        let w = (t / (t + (q as f64).sqrt() * h)).powf(ln);
                        if q <= cone_r2[k] {
                            w.max(floor_w)
                        } else {
                            w
                        }
                    })
                    .collect()
            })
            .collect();
        let sq = self.accumulate(&terms, &radii, |k, q| tables[k][q as usize]);
        self.finish(sq, self.meta(OperatorKind::GStar, Some(cone), cone.warnings(k)))
    }
}

pub fn g_function(k: &KernelSpec, fs: &[&GridFunction], tg: &TGrid) -> Result<OperatorField> {
    ScaleFields::compute(k, fs, tg, GtPath::Auto)?.g()
}

pub fn area_integral(k: &KernelSpec, fs: &[&GridFunction], tg: &TGrid) -> Result<OperatorField> {
    ScaleFields::compute(k, fs, tg, GtPath::Auto)?.area()
}

pub fn g_star_lambda(k: &KernelSpec, fs: &[&GridFunction], tg: &TGrid, lambda: f64) -> Result<OperatorField> {
    let cone = ConeSpec::new(lambda)?;
    ScaleFields::compute(k, fs, tg, GtPath::Auto)?.g_star(&cone, k)
}

pub fn split_g(k: &KernelSpec, fs: &[&GridFunction], tg: &TGrid, r: f64) -> Result<(OperatorField, OperatorField)> {
    if !(r > tg.t_min() && r <= tg.t_max()) {
        return Err(invalid(format!("split radius {r} outside ({}, {}]", tg.t_min(), tg.t_max())));
    }
    ScaleFields::compute(k, fs, tg, GtPath::Auto)?.split(r)
}

/// Evaluates one operator kind; λ is required for the g*-type kinds.
pub fn evaluate(
    kind: OperatorKind,
    k: &KernelSpec,
    fs: &[&GridFunction],
    tg: &TGrid,
    lambda: Option<f64>,
    path: GtPath,
) -> Result<OperatorField> {
    if kind.for_kernel(k) != kind {
        return Err(LabError::UnsupportedKernel(format!(
            "operator {kind} does not match the form of kernel {}",
            k.id
        )));
    }
    let cone = if kind.needs_lambda() {
        Some(ConeSpec::new(lambda.ok_or_else(|| invalid(format!("operator {kind} needs lambda")))?)?)
    } else {
        None
    };
    let sf = ScaleFields::compute(k, fs, tg, path)?;
    match kind {
        OperatorKind::G | OperatorKind::GPrime => sf.g(),
        OperatorKind::S | OperatorKind::SPrime => sf.area(),
        _ => sf.g_star(cone.as_ref().expect("checked above"), k),
    }
}

#[cfg(test)]
mod tests;
