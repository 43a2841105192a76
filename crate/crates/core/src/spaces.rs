//! Discrete BMO, BLO and Lebesgue quantities of grid functions.
//!
//! Suprema over balls are taken over a finite [`BallFamily`]. A ball is
//! centred at a grid node with a radius of `k` cells and contains the nodes at
//! strictly smaller distance; membership is decided on integer offsets, so it
//! is exact. The essential infimum over a ball is the minimum member sample.

use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::error::{invalid, LabError, Result};
use crate::grid::GridFunction;
use crate::sum::NeumaierSum;

/// Open ball `{x : |x − center| < radius_cells · h}` on the node lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ball {
    center: [usize; 2],
    radius_cells: usize,
    dim: usize,
    points_per_axis: usize,
}

/// Largest `w ≥ 0` with `w² < bound`, for `bound ≥ 1`.
fn strict_isqrt(bound: i64) -> i64 {
    let mut w = ((bound as f64).sqrt()) as i64;
    while w * w >= bound {
        w -= 1;
    }
    while (w + 1) * (w + 1) < bound {
        w += 1;
    }
    w
}

impl Ball {
    /// Ball on the grid of `gf`; every member node must lie inside the box.
    pub fn new(gf: &GridFunction, center: &[usize], radius_cells: usize) -> Result<Self> {
        let dim = gf.dim();
        let np = gf.points_per_axis();
        if center.len() != dim {
            return Err(invalid("ball center dimension mismatch"));
        }
        if radius_cells == 0 {
            return Err(LabError::EmptyBall);
        }
        let reach = radius_cells - 1;
        for &c in center {
            if c < reach || c + reach >= np {
                return Err(invalid(format!(
                    "ball of radius {radius_cells} cells at index {c} leaves the box"
                )));
            }
        }
        let mut cc = [0usize; 2];
        cc[..dim].copy_from_slice(center);
        Ok(Self { center: cc, radius_cells, dim, points_per_axis: np })
    }

    pub fn center_index(&self) -> &[usize] {
        &self.center[..self.dim]
    }

    pub fn radius_cells(&self) -> usize {
        self.radius_cells
    }

    pub fn radius(&self, gf: &GridFunction) -> f64 {
        self.radius_cells as f64 * gf.spacing()
    }

    pub fn center_point(&self, gf: &GridFunction) -> Vec<f64> {
        (0..self.dim)
            .map(|a| gf.lattice_coord(a, self.center[a] as i64))
            .collect()
    }

    /// `2^k`-dilate with the same centre, if it still fits in the box.
    pub fn dilate(&self, gf: &GridFunction, factor: usize) -> Result<Ball> {
        Ball::new(gf, self.center_index(), self.radius_cells * factor)
    }

    fn fits(&self, gf: &GridFunction) -> Result<()> {
        if gf.dim() != self.dim || gf.points_per_axis() != self.points_per_axis {
            return Err(LabError::GridMismatch("ball was built for a different grid".into()));
        }
        Ok(())
    }

    /// Members as contiguous runs of flat indices (one run per grid row).
    pub fn rows(&self) -> Vec<RangeInclusive<usize>> {
        let k = self.radius_cells as i64;
        let reach = k - 1;
        match self.dim {
            1 => {
                let c = self.center[0] as i64;
                vec![(c - reach) as usize..=(c + reach) as usize]
            }
            _ => {
                let np = self.points_per_axis as i64;
                let (c0, c1) = (self.center[0] as i64, self.center[1] as i64);
                (-reach..=reach)
                    .map(|o| {
                        let w = strict_isqrt(k * k - o * o);
                        let row = (c0 + o) * np;
                        (row + c1 - w) as usize..=(row + c1 + w) as usize
                    })
                    .collect()
            }
        }
    }

    pub fn member_indices(&self) -> Vec<usize> {
        self.rows().into_iter().flatten().collect()
    }

    pub fn member_count(&self) -> usize {
        self.rows().into_iter().map(|r| r.end() - r.start() + 1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallPolicy {
    /// Radii `h·2^j`, every node that admits the ball as centre.
    DyadicAllCenters,
    /// Radii `h·2^j`, centres on a sub-lattice of the given stride.
    DyadicStrided(usize),
    /// Every integer radius and every centre. Oracle only; N ≤ 512.
    AllRadiiAllCenters,
}

pub const BRUTE_FORCE_MAX_POINTS: usize = 512;

#[derive(Debug, Clone)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
    pub policy: BallPolicy,
}

impl BallFamily {
    pub fn new(gf: &GridFunction, policy: BallPolicy) -> Result<Self> {
        let np = gf.points_per_axis();
        let max_j = (np / 2).ilog2();
        let (radii, stride): (Vec<usize>, usize) = match policy {
            BallPolicy::DyadicAllCenters => ((0..=max_j).map(|j| 1usize << j).collect(), 1),
            BallPolicy::DyadicStrided(s) => {
                if s == 0 {
                    return Err(invalid("stride must be positive"));
                }
                ((0..=max_j).map(|j| 1usize << j).collect(), s)
            }
            BallPolicy::AllRadiiAllCenters => {
                if np > BRUTE_FORCE_MAX_POINTS {
                    return Err(LabError::ResourceLimit(format!(
                        "full ball family limited to N <= {BRUTE_FORCE_MAX_POINTS}"
                    )));
                }
                ((1..=np / 2).collect(), 1)
            }
        };
        let mut balls = Vec::new();
        for k in radii {
            let lo = k - 1;
            if lo + k > np {
                continue;
            }
            let hi = np - k;
            let centres: Vec<usize> = (lo..=hi).step_by(stride).collect();
            match gf.dim() {
                1 => {
                    for &c in &centres {
                        balls.push(Ball::new(gf, &[c], k)?);
                    }
                }
                _ => {
                    for &c0 in &centres {
                        for &c1 in &centres {
                            balls.push(Ball::new(gf, &[c0, c1], k)?);
                        }
                    }
                }
            }
        }
        Ok(Self { balls, policy })
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
}

/// A discrete supremum together with the ball attaining it (first in family
/// order on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct Supremum {
    pub value: f64,
    pub witness: Option<Ball>,
}

struct BallStats {
    mean: f64,
    min: f64,
    count: usize,
}

fn ball_stats(samples: &[f64], ball: &Ball) -> BallStats {
    let mut sum = NeumaierSum::new();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut count = 0;
    for row in ball.rows() {
        for &v in &samples[row] {
            sum.add(v);
            min = min.min(v);
            max = max.max(v);
            count += 1;
        }
    }
    // the true mean lies in [min, max]; keep rounding from leaving it
    let mean = (sum.value() / count as f64).clamp(min, max);
    BallStats { mean, min, count }
}

fn mean_abs_dev(samples: &[f64], ball: &Ball, about: f64, count: usize) -> f64 {
    let mut sum = NeumaierSum::new();
    for row in ball.rows() {
        for &v in &samples[row] {
            sum.add((v - about).abs());
        }
    }
    sum.value() / count as f64
}

/// Arithmetic mean of the member samples.
pub fn mean_over(gf: &GridFunction, ball: &Ball) -> Result<f64> {
    ball.fits(gf)?;
    if ball.member_count() == 0 {
        return Err(LabError::EmptyBall);
    }
    Ok(ball_stats(gf.samples(), ball).mean)
}

/// Mean of `|f − f_B|` over `ball`.
pub fn oscillation(gf: &GridFunction, ball: &Ball) -> Result<f64> {
    ball.fits(gf)?;
    let st = ball_stats(gf.samples(), ball);
    Ok(mean_abs_dev(gf.samples(), ball, st.mean, st.count))
}

/// `f_B − min_B f`.
pub fn lower_oscillation(gf: &GridFunction, ball: &Ball) -> Result<f64> {
    ball.fits(gf)?;
    let st = ball_stats(gf.samples(), ball);
    Ok(st.mean - st.min)
}

fn sweep(gf: &GridFunction, fam: &BallFamily, stat: impl Fn(&Ball) -> f64 + Sync) -> Result<Supremum> {
    if let Some(b) = fam.balls.first() {
        b.fits(gf)?;
    }
    let values: Vec<f64> = fam.balls.par_iter().map(&stat).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    Ok(match best {
        Some((i, v)) => Supremum { value: v, witness: Some(fam.balls[i].clone()) },
        None => Supremum { value: 0.0, witness: None },
    })
}

/// `sup_B mean_B |f − f_B|` over the family.
pub fn bmo_seminorm(gf: &GridFunction, fam: &BallFamily) -> Result<Supremum> {
    let s = gf.samples();
    sweep(gf, fam, |b| {
        let st = ball_stats(s, b);
        mean_abs_dev(s, b, st.mean, st.count)
    })
}

/// `sup_B (f_B − min_B f)` over the family.
pub fn blo_constant(gf: &GridFunction, fam: &BallFamily) -> Result<Supremum> {
    let s = gf.samples();
    sweep(gf, fam, |b| {
        let st = ball_stats(s, b);
        st.mean - st.min
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LebesgueNorms {
    pub p: f64,
    pub lp: f64,
    pub linf: f64,
    pub weak_lp: f64,
}

/// `L^p`, `L^∞` and weak-`L^p` quasinorms of the step function.
///
/// The distribution function is a step function of the level, so the weak
/// supremum is attained just below one of the sample magnitudes.
pub fn lebesgue_norms(gf: &GridFunction, p: f64) -> Result<LebesgueNorms> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("p must be positive and finite, got {p}")));
    }
    let cell = gf.cell_volume();
    let mut mags: Vec<f64> = gf.samples().iter().map(|v| v.abs()).collect();
    let lp = (mags.iter().map(|m| m.powf(p)).collect::<NeumaierSum>().value() * cell).powf(1.0 / p);
    mags.sort_by(|a, b| b.total_cmp(a));
    let linf = mags.first().copied().unwrap_or(0.0);
    let mut weak = 0.0_f64;
    let mut i = 0;
    while i < mags.len() && mags[i] > 0.0 {
        let level = mags[i];
        let mut j = i;
        while j < mags.len() && mags[j] == level {
            j += 1;
        }
        // #{|f| > level − ε} = j
        weak = weak.max(level * (cell * j as f64).powf(1.0 / p));
        i = j;
    }
    Ok(LebesgueNorms { p, lp, linf, weak_lp: weak })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationStep {
    pub k: u32,
    /// mean over `2^k B` of `|f − f_B|`
    pub oscillation: f64,
    /// `|f_{2^k B} − f_B|`
    pub mean_shift: f64,
}

/// Oscillation of `f` on the dilates `2^k B` against the base mean `f_B`.
pub fn oscillation_growth(gf: &GridFunction, base: &Ball, k_max: u32) -> Result<Vec<OscillationStep>> {
    base.fits(gf)?;
    let mut dilates = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        match base.dilate(gf, 1usize << k) {
            Ok(b) => dilates.push(b),
            Err(_) => {
                return Err(LabError::DilationEscapesBox {
                    largest_valid_k: k.checked_sub(1),
                })
            }
        }
    }
    let s = gf.samples();
    let base_mean = ball_stats(s, base).mean;
    Ok(dilates
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let st = ball_stats(s, b);
            OscillationStep {
                k: k as u32,
                oscillation: mean_abs_dev(s, b, base_mean, st.count),
                mean_shift: (st.mean - base_mean).abs(),
            }
        })
        .collect())
}

/// Least-squares slope of oscillation against `k`.
pub fn growth_slope(steps: &[OscillationStep]) -> f64 {
    let n = steps.len() as f64;
    if steps.len() < 2 {
        return 0.0;
    }
    let mk = steps.iter().map(|s| s.k as f64).sum::<f64>() / n;
    let mo = steps.iter().map(|s| s.oscillation).sum::<f64>() / n;
    let num: f64 = steps.iter().map(|s| (s.k as f64 - mk) * (s.oscillation - mo)).sum();
    let den: f64 = steps.iter().map(|s| (s.k as f64 - mk).powi(2)).sum();
    num / den
}

/// For every member `x`: `F(x) − min_B F ≤ max_{y∈B} |F(x) − F(y)|`.
pub fn essinf_relation_holds(gf: &GridFunction, ball: &Ball) -> Result<bool> {
    ball.fits(gf)?;
    let s = gf.samples();
    let members = ball.member_indices();
    let min = members.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
    Ok(members.iter().all(|&i| {
        let fx = s[i];
        let sup = members.iter().map(|&j| (fx - s[j]).abs()).fold(0.0, f64::max);
        fx - min <= sup
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub function_id: String,
    pub bmo: Supremum,
    pub blo: Supremum,
    pub norms: LebesgueNorms,
}

impl NormReport {
    pub fn compute(function_id: impl Into<String>, gf: &GridFunction, fam: &BallFamily, p: f64) -> Result<Self> {
        Ok(Self {
            function_id: function_id.into(),
            bmo: bmo_seminorm(gf, fam)?,
            blo: blo_constant(gf, fam)?,
            norms: lebesgue_norms(gf, p)?,
        })
    }

    /// `bmo ≤ 2·blo`, `blo ≤ 2·linf`, and weak ≤ strong up to a few ulps.
    pub fn invariants_hold(&self) -> bool {
        self.bmo.value <= 2.0 * self.blo.value
            && self.blo.value <= 2.0 * self.norms.linf
            && self.norms.weak_lp <= self.norms.lp * (1.0 + 1e-12)
    }

    pub const CSV_HEADER: &'static str =
        "function_id,bmo,blo,linf,p,lp,weak_lp,witness_center,witness_radius";

    pub fn csv_row(&self, gf: &GridFunction) -> String {
        let (wc, wr) = match &self.bmo.witness {
            Some(b) => (
                b.center_point(gf).iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "),
                format!("{:?}", b.radius(gf)),
            ),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
            self.function_id,
            self.bmo.value,
            self.blo.value,
            self.norms.linf,
            self.norms.p,
            self.norms.lp,
            self.norms.weak_lp,
            wc,
            wr
        )
    }
}
