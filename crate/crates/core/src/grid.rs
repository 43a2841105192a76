//! Uniform cell-centred grids on boxes in R^n (n = 1 or 2), with an
//! extension policy for evaluation outside the sampled box.

mod io;

pub use io::{read_any, read_binary, read_csv, write_binary, write_csv, GF_MAGIC};

use rayon::prelude::*;

use crate::error::{invalid, LabError, Result};
use crate::sum::compensated_sum;

/// Axis-aligned cube `center ± half_width` in R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBox {
    center: Vec<f64>,
    half_width: f64,
}

impl GridBox {
    pub fn new(center: Vec<f64>, half_width: f64) -> Result<Self> {
        if center.is_empty() || center.len() > 2 {
            return Err(invalid(format!("dimension {} not in {{1, 2}}", center.len())));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid(format!("half_width must be positive, got {half_width}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("box center must be finite"));
        }
        Ok(Self { center, half_width })
    }

    /// `[-half_width, half_width]^n`.
    pub fn cube(n: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![0.0; n], half_width)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_width
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim() as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(xi, ci)| (xi - ci).abs() <= self.half_width)
    }
}

/// Closed-form continuation of a generator beyond the box.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// `sign · scale · log|x − a|`
    Log { a: Vec<f64>, sign: f64, scale: f64 },
}

impl Tail {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Tail::Log { a, sign, scale } => {
                let r2: f64 = x.iter().zip(a).map(|(xi, ai)| (xi - ai) * (xi - ai)).sum();
                sign * scale * 0.5 * r2.ln()
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Tail::Log { .. } => "log",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extension {
    Periodic,
    EdgeHold,
    Zero,
    AnalyticTail(Tail),
}

impl Extension {
    pub fn name(&self) -> &'static str {
        match self {
            Extension::Periodic => "periodic",
            Extension::EdgeHold => "edge-hold",
            Extension::Zero => "zero",
            Extension::AnalyticTail(_) => "analytic-tail",
        }
    }
}

/// Midpoint rule on the grid cells: every sample carries weight `h^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureRule {
    pub cell_volume: f64,
    pub count: usize,
}

impl QuadratureRule {
    pub fn weights_sum(&self) -> f64 {
        self.cell_volume * self.count as f64
    }
}

/// A real function sampled at the cell centres of a uniform grid.
///
/// Samples are stored row-major: for n = 2 the flat index is `i0 * N + i1`.
/// The value is treated as piecewise constant on each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    bx: GridBox,
    points_per_axis: usize,
    samples: Vec<f64>,
    extension: Extension,
}

pub const MIN_POINTS_PER_AXIS: usize = 4;

fn check_points(points_per_axis: usize) -> Result<()> {
    if points_per_axis < MIN_POINTS_PER_AXIS {
        return Err(invalid(format!(
            "points_per_axis must be at least {MIN_POINTS_PER_AXIS}, got {points_per_axis}"
        )));
    }
    Ok(())
}

/// Samples `rule` at every cell centre of `bx`.
///
/// Analytic tails are attached only through [`GridFunction::from_tail`], which
/// samples the tail formula itself.
pub fn make_grid_function<F>(
    bx: GridBox,
    points_per_axis: usize,
    rule: F,
    extension: Extension,
) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if let Extension::AnalyticTail(_) = extension {
        return Err(invalid(
            "analytic-tail extension must come from its generator (use GridFunction::from_tail)",
        ));
    }
    sample_rule(bx, points_per_axis, rule, extension)
}

fn sample_rule<F>(bx: GridBox, points_per_axis: usize, rule: F, extension: Extension) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_points(points_per_axis)?;
    let n = bx.dim();
    let total = points_per_axis.pow(n as u32);
    let mut gf = GridFunction {
        bx,
        points_per_axis,
        samples: Vec::new(),
        extension,
    };
    let samples: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| rule(&gf.node(flat)))
        .collect();
    if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
        return Err(LabError::NonFiniteSample {
            node: gf.node(bad),
            value: samples[bad],
        });
    }
    gf.samples = samples;
    Ok(gf)
}

impl GridFunction {
    pub fn from_tail(bx: GridBox, points_per_axis: usize, tail: Tail) -> Result<Self> {
        let t = tail.clone();
        sample_rule(bx, points_per_axis, move |x| t.eval(x), Extension::AnalyticTail(tail))
    }

    pub fn from_samples(
        bx: GridBox,
        points_per_axis: usize,
        samples: Vec<f64>,
        extension: Extension,
    ) -> Result<Self> {
        check_points(points_per_axis)?;
        let expected = points_per_axis.pow(bx.dim() as u32);
        if samples.len() != expected {
            return Err(invalid(format!(
                "expected {expected} samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite sample at flat index {bad}")));
        }
        Ok(Self { bx, points_per_axis, samples, extension })
    }

    /// Same grid, new samples. Analytic tails do not survive arbitrary
    /// pointwise maps, so the caller picks the new extension.
    pub fn with_samples(&self, samples: Vec<f64>, extension: Extension) -> Result<Self> {
        Self::from_samples(self.bx.clone(), self.points_per_axis, samples, extension)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64, extension: Extension) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|&v| f(v)).collect(), extension)
    }

    pub fn grid_box(&self) -> &GridBox {
        &self.bx
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn extension(&self) -> &Extension {
        &self.extension
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.bx.half_width / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    pub fn quadrature(&self) -> QuadratureRule {
        QuadratureRule { cell_volume: self.cell_volume(), count: self.len() }
    }

    /// Coordinate of lattice index `i` along `axis`; `i` may lie outside the box.
    #[inline]
    pub fn lattice_coord(&self, axis: usize, i: i64) -> f64 {
        self.bx.lower(axis) + (i as f64 + 0.5) * self.spacing()
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        let np = self.points_per_axis;
        if self.dim() == 1 {
            [flat, 0]
        } else {
            [flat / np, flat % np]
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] * self.points_per_axis + idx[1]
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mi = self.multi_index(flat);
        (0..self.dim()).map(|a| self.lattice_coord(a, mi[a] as i64)).collect()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.bx == other.bx && self.points_per_axis == other.points_per_axis
    }

    /// Value at an integer lattice position, applying the extension policy
    /// when the position falls outside the box.
    pub fn value_at_lattice(&self, idx: &[i64]) -> f64 {
        let np = self.points_per_axis as i64;
        let n = self.dim();
        if idx[..n].iter().all(|&i| (0..np).contains(&i)) {
            return self.samples[self.flat_from_i64(idx)];
        }
        match &self.extension {
            Extension::Zero => 0.0,
            Extension::EdgeHold => {
                let c: Vec<i64> = idx[..n].iter().map(|&i| i.clamp(0, np - 1)).collect();
                self.samples[self.flat_from_i64(&c)]
            }
            Extension::Periodic => {
                let c: Vec<i64> = idx[..n].iter().map(|&i| i.rem_euclid(np)).collect();
                self.samples[self.flat_from_i64(&c)]
            }
            Extension::AnalyticTail(tail) => {
                let x: Vec<f64> = (0..n).map(|a| self.lattice_coord(a, idx[a])).collect();
                tail.eval(&x)
            }
        }
    }

    fn flat_from_i64(&self, idx: &[i64]) -> usize {
        if self.dim() == 1 {
            idx[0] as usize
        } else {
            idx[0] as usize * self.points_per_axis + idx[1] as usize
        }
    }

    /// Piecewise-constant evaluation at an arbitrary point.
    pub fn evaluate_extended(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let h = self.spacing();
        let np = self.points_per_axis as i64;
        let width = 2.0 * self.bx.half_width;
        let inside = self.bx.contains(x);
        if !inside {
            match &self.extension {
                Extension::Zero => return 0.0,
                Extension::AnalyticTail(tail) => return tail.eval(x),
                Extension::Periodic => {
                    let idx: Vec<i64> = (0..n)
                        .map(|a| {
                            let lo = self.bx.lower(a);
                            let wrapped = (x[a] - lo).rem_euclid(width);
                            ((wrapped / h).floor() as i64).clamp(0, np - 1)
                        })
                        .collect();
                    return self.samples[self.flat_from_i64(&idx)];
                }
                Extension::EdgeHold => {}
            }
        }
        let idx: Vec<i64> = (0..n)
            .map(|a| (((x[a] - self.bx.lower(a)) / h).floor() as i64).clamp(0, np - 1))
            .collect();
        self.samples[self.flat_from_i64(&idx)]
    }

    /// Midpoint rule `Σ samples · h^n`.
    pub fn integrate(&self) -> f64 {
        compensated_sum(self.samples.iter().copied()) * self.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_1d() -> GridBox {
        GridBox::cube(1, 1.0).unwrap()
    }

    #[test]
    fn zero_function() {
        let gf = make_grid_function(GridBox::cube(2, 3.0).unwrap(), 8, |_| 0.0, Extension::Zero).unwrap();
        assert!(gf.samples().iter().all(|&v| v == 0.0));
        assert_eq!(gf.len(), 64);
    }

    #[test]
    fn identity_samples_at_cell_centres() {
        let gf = make_grid_function(unit_1d(), 4, |x| x[0], Extension::Zero).unwrap();
        assert_eq!(gf.samples(), &[-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn log_is_total_on_even_grids() {
        let tail = Tail::Log { a: vec![0.0], sign: 1.0, scale: 1.0 };
        let gf = GridFunction::from_tail(unit_1d(), 1024, tail).unwrap();
        assert!(gf.samples().iter().all(|v| v.is_finite()));
        let (imin, _) = gf
            .samples()
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        assert!(imin == 511 || imin == 512);
    }

    #[test]
    fn singular_node_rejected() {
        // odd N puts a node at 0
        let err = make_grid_function(unit_1d(), 5, |x| x[0].abs().ln(), Extension::Zero).unwrap_err();
        match err {
            LabError::NonFiniteSample { node, .. } => assert!(node[0].abs() < 1e-15),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn too_few_points() {
        assert!(make_grid_function(unit_1d(), 2, |_| 1.0, Extension::Zero).is_err());
    }

    #[test]
    fn analytic_tail_requires_generator() {
        let tail = Tail::Log { a: vec![0.0], sign: 1.0, scale: 1.0 };
        assert!(make_grid_function(unit_1d(), 8, |_| 1.0, Extension::AnalyticTail(tail)).is_err());
    }

    #[test]
    fn extension_policies() {
        let bx = GridBox::cube(1, 1.0).unwrap();
        let rule = |x: &[f64]| x[0] * x[0] + x[0];
        let zero = make_grid_function(bx.clone(), 16, rule, Extension::Zero).unwrap();
        assert_eq!(zero.evaluate_extended(&[3.0]), 0.0);
        assert_eq!(zero.value_at_lattice(&[-1]), 0.0);

        let per = make_grid_function(bx.clone(), 16, rule, Extension::Periodic).unwrap();
        for flat in 0..16 {
            let x = per.node(flat)[0];
            assert_eq!(per.evaluate_extended(&[x + 2.0]), per.samples()[flat]);
            assert_eq!(per.evaluate_extended(&[x - 4.0]), per.samples()[flat]);
            assert_eq!(per.value_at_lattice(&[flat as i64 + 16]), per.samples()[flat]);
        }

        let edge = make_grid_function(bx, 16, rule, Extension::EdgeHold).unwrap();
        assert_eq!(edge.evaluate_extended(&[5.0]), edge.samples()[15]);
        assert_eq!(edge.value_at_lattice(&[-7]), edge.samples()[0]);

        let tail = Tail::Log { a: vec![0.3], sign: -1.0, scale: 2.0 };
        let lg = GridFunction::from_tail(GridBox::cube(1, 1.0).unwrap(), 16, tail).unwrap();
        let x = 1.0 + 2.0;
        assert_eq!(lg.evaluate_extended(&[x]), -2.0 * (x - 0.3_f64).abs().ln());
    }

    #[test]
    fn nodes_reproduce_samples() {
        let bx = GridBox::new(vec![0.5, -1.0], 2.0).unwrap();
        let gf = make_grid_function(bx, 8, |x| x[0].sin() + 3.0 * x[1], Extension::Zero).unwrap();
        for flat in 0..gf.len() {
            assert_eq!(gf.evaluate_extended(&gf.node(flat)), gf.samples()[flat]);
        }
    }

    #[test]
    fn integration() {
        let bx = GridBox::cube(2, 1.5).unwrap();
        let c = make_grid_function(bx.clone(), 8, |_| 2.5, Extension::Zero).unwrap();
        assert_eq!(c.integrate(), 2.5 * bx.volume());
        assert!((c.quadrature().weights_sum() - bx.volume()).abs() <= 1e-12 * bx.volume());

        let odd = make_grid_function(bx, 32, |x| x[0].powi(3) - x[1], Extension::Zero).unwrap();
        assert!(odd.integrate().abs() <= 1e-12 * odd.max_abs() * 9.0);

        let sq = make_grid_function(GridBox::cube(1, 1.0).unwrap(), 4096, |x| x[0] * x[0], Extension::Zero)
            .unwrap();
        assert!((sq.integrate() - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_construction() {
        let bx = GridBox::cube(2, 1.0).unwrap();
        let a = make_grid_function(bx.clone(), 32, |x| (x[0] * 7.0).sin() * x[1].exp(), Extension::Zero).unwrap();
        let b = make_grid_function(bx, 32, |x| (x[0] * 7.0).sin() * x[1].exp(), Extension::Zero).unwrap();
        assert!(a.samples().iter().zip(b.samples()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
