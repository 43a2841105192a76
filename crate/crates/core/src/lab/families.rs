//! Test-function families. Each instance is an analytic rule on R^n, so the
//! same instance can be sampled onto any box and resolution.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, LabError, Result};
use crate::grid::{make_grid_function, Extension, GridBox, GridFunction, Tail};

/// Box and resolution an instance is sampled on.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub points_per_axis: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, points_per_axis: usize, half_width: f64) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(invalid(format!("n must be 1 or 2, got {n}")));
        }
        if points_per_axis < 4 {
            return Err(invalid("points_per_axis must be at least 4"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid("half_width must be positive"));
        }
        Ok(Self { n, points_per_axis, half_width })
    }

    pub fn grid_box(&self) -> Result<GridBox> {
        GridBox::cube(self.n, self.half_width)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    /// Twice the resolution on the same box.
    pub fn refined(&self) -> Self {
        Self { points_per_axis: 2 * self.points_per_axis, ..self.clone() }
    }

    /// Twice the box at the same spacing.
    pub fn widened(&self) -> Self {
        Self { points_per_axis: 2 * self.points_per_axis, half_width: 2.0 * self.half_width, ..self.clone() }
    }

    fn node_coord(&self, x: f64) -> f64 {
        let h = self.spacing();
        let lo = -self.half_width;
        let i = ((x - lo) / h - 0.5).round().clamp(0.0, self.points_per_axis as f64 - 1.0);
        lo + (i + 0.5) * h
    }

    fn on_node(&self, x: f64) -> bool {
        let u = (x + self.half_width) / self.spacing() - 0.5;
        (u - u.round()).abs() < 1e-9
    }
}

/// Half-width of the box the martingale is generated on; it repeats
/// periodically outside.
pub const MARTINGALE_PERIOD_HALF_WIDTH: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Martingale {
    n: usize,
    sigma: f64,
    /// `signs[l][cell]` for levels `1..=depth`.
    signs: Vec<Vec<f64>>,
}

impl Martingale {
    pub fn new(n: usize, depth: u32, sigma: f64, seed: u64) -> Result<Self> {
        let max_depth = if n == 1 { 14 } else { 8 };
        if depth == 0 || depth > max_depth {
            return Err(invalid(format!("martingale depth must be in 1..={max_depth}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("martingale sigma must be nonnegative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = (1..=depth)
            .map(|l| {
                let cells = 1usize << (l as usize * n);
                (0..cells).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
            })
            .collect();
        Ok(Self { n, sigma, signs })
    }

    pub fn depth(&self) -> u32 {
        self.signs.len() as u32
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let period = 2.0 * MARTINGALE_PERIOD_HALF_WIDTH;
        let u: Vec<f64> = x[..self.n]
            .iter()
            .map(|v| (v + MARTINGALE_PERIOD_HALF_WIDTH).rem_euclid(period) / period)
            .collect();
        let mut acc = 0.0;
        for (l, signs) in self.signs.iter().enumerate() {
            let cells = 1usize << (l + 1);
            let idx = u.iter().fold(0usize, |a, &v| a * cells + ((v * cells as f64) as usize).min(cells - 1));
            acc += self.sigma * signs[idx];
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// `sign · scale · log|x − a|`
    Log { a: Vec<f64>, sign: f64, scale: f64 },
    Martingale(Arc<Martingale>),
    /// `height · exp(1 − 1/(1 − |x−c|²/w²))` inside the ball of radius `w`.
    Bump { center: Vec<f64>, width: f64, height: f64 },
    /// Indicator of `{sign · x₁ > 0}`.
    HalfIndicator { sign: f64 },
    /// Indicator of the cube `|x_i − c_i| ≤ w`.
    CubeIndicator { center: Vec<f64>, half_width: f64 },
    Constant(f64),
    Custom(Arc<GridFunction>),
}

impl Generator {
    pub fn is_bounded(&self) -> bool {
        matches!(
            self,
            Generator::Bump { .. } | Generator::HalfIndicator { .. } | Generator::CubeIndicator { .. } | Generator::Constant(_)
        )
    }

    pub fn is_integrable(&self) -> bool {
        matches!(self, Generator::Bump { .. } | Generator::CubeIndicator { .. })
    }

    fn extension(&self) -> Extension {
        match self {
            Generator::Martingale(_) => Extension::Periodic,
            Generator::Bump { .. } | Generator::CubeIndicator { .. } => Extension::Zero,
            _ => Extension::EdgeHold,
        }
    }

    /// `x ↦ f(x/s)`; available for the compactly described bounded kinds.
    pub fn dilated(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("dilation factor must be positive"));
        }
        Ok(match self {
            Generator::Bump { center, width, height } => Generator::Bump {
                center: center.iter().map(|c| c * s).collect(),
                width: width * s,
                height: *height,
            },
            Generator::CubeIndicator { center, half_width } => Generator::CubeIndicator {
                center: center.iter().map(|c| c * s).collect(),
                half_width: half_width * s,
            },
            g @ (Generator::HalfIndicator { .. } | Generator::Constant(_)) => g.clone(),
            _ => return Err(invalid("dilation is only defined for bump, indicator and constant inputs")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub id: String,
    pub generator: Generator,
}

/// A sampled instance and anything changed to make it sampleable.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub gf: GridFunction,
    pub notes: Vec<String>,
}

impl TestFunction {
    pub fn new(id: impl Into<String>, generator: Generator) -> Self {
        Self { id: id.into(), generator }
    }

    pub fn sample(&self, grid: &GridSpec) -> Result<Sampled> {
        let bx = grid.grid_box()?;
        let nn = grid.points_per_axis;
        let mut notes = Vec::new();
        let gf = match &self.generator {
            Generator::Log { a, sign, scale } => {
                if a.len() != grid.n {
                    return Err(invalid("log centre has the wrong dimension"));
                }
                let mut a = a.clone();
                if a.iter().all(|&v| grid.on_node(v)) {
                    let shift = grid.spacing() / 4.0;
                    a.iter_mut().for_each(|v| *v += shift);
                    notes.push(format!("singularity moved off a node by h/4 = {shift:?}"));
                }
                GridFunction::from_tail(bx, nn, Tail::Log { a, sign: *sign, scale: *scale })?
            }
            Generator::Bump { center, width, height } => {
                // centring on a node makes the maximum sample exactly `height`
                let c: Vec<f64> = center.iter().map(|&v| grid.node_coord(v)).collect();
                if c != *center {
                    notes.push(format!("bump centre snapped to node {c:?}"));
                }
                let (w2, ht) = (width * width, *height);
                make_grid_function(
                    bx,
                    nn,
                    move |x| {
                        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                        if r2 < w2 {
                            ht * (1.0 - 1.0 / (1.0 - r2 / w2)).exp()
                        } else {
                            0.0
                        }
                    },
                    Extension::Zero,
                )?
            }
            Generator::Custom(gf) => {
                let want = grid.grid_box()?;
                if gf.grid_box() == &want && gf.points_per_axis() == nn {
                    (**gf).clone()
                } else {
                    notes.push("custom input resampled by nearest sample".into());
                    let src = gf.clone();
                    make_grid_function(want, nn, move |x| src.evaluate_extended(x), Extension::EdgeHold)?
                }
            }
            g => {
                let g2 = g.clone();
                make_grid_function(
                    bx,
                    nn,
                    move |x| match &g2 {
                        Generator::Martingale(m) => m.eval(x),
                        Generator::HalfIndicator { sign } => f64::from(sign * x[0] > 0.0),
                        Generator::CubeIndicator { center, half_width } => {
                            f64::from(x.iter().zip(center).all(|(a, c)| (a - c).abs() <= *half_width))
                        }
                        Generator::Constant(c) => *c,
                        _ => unreachable!(),
                    },
                    g.extension(),
                )?
            }
        };
        Ok(Sampled { gf, notes })
    }

    pub fn dilated(&self, s: f64) -> Result<Self> {
        Ok(Self { id: format!("{}@s={s}", self.id), generator: self.generator.dilated(s)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    /// Instance 0 is centred at `a`; later instances are jittered around it.
    LogSingularity { a: f64, sign: f64, scale: f64 },
    DyadicMartingale { depth: u32, sigma: f64 },
    SmoothBump { width: f64, height: f64 },
    HalfIndicator,
    CubeIndicator { half_width: f64 },
    CustomFile(PathBuf),
}

impl FamilyKind {
    pub fn tag(&self) -> &'static str {
        match self {
            FamilyKind::LogSingularity { .. } => "log",
            FamilyKind::DyadicMartingale { .. } => "martingale",
            FamilyKind::SmoothBump { .. } => "bump",
            FamilyKind::HalfIndicator => "half-indicator",
            FamilyKind::CubeIndicator { .. } => "indicator",
            FamilyKind::CustomFile(_) => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFamily {
    pub kind: FamilyKind,
    pub count: usize,
    pub seed: u64,
}

impl TestFamily {
    pub fn new(kind: FamilyKind, count: usize, seed: u64) -> Self {
        Self { kind, count, seed }
    }
}

/// Deterministic instances of `family` in dimension `n`.
pub fn generate(family: &TestFamily, n: usize) -> Result<Vec<TestFunction>> {
    if family.count == 0 {
        return Err(invalid("family count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(family.seed ^ 0x5eed_0ffa_u64);
    let tag = family.kind.tag();
    let jitter = |rng: &mut ChaCha8Rng, i: usize, base: f64| -> Vec<f64> {
        (0..n).map(|_| if i == 0 { base } else { base + rng.gen_range(-2.0..2.0) }).collect()
    };
    (0..family.count)
        .map(|i| {
            let id = format!("{tag}-{i}");
            let g = match &family.kind {
                FamilyKind::LogSingularity { a, sign, scale } => {
                    if *sign != 1.0 && *sign != -1.0 {
                        return Err(invalid("log sign must be +1 or -1"));
                    }
                    if !(*scale > 0.0) {
                        return Err(invalid("log scale must be positive"));
                    }
                    Generator::Log { a: jitter(&mut rng, i, *a), sign: *sign, scale: *scale }
                }
                FamilyKind::DyadicMartingale { depth, sigma } => {
                    let seed = family.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                    Generator::Martingale(Arc::new(Martingale::new(n, *depth, *sigma, seed)?))
                }
                FamilyKind::SmoothBump { width, height } => {
                    if !(*width > 0.0) {
                        return Err(invalid("bump width must be positive"));
                    }
                    Generator::Bump { center: jitter(&mut rng, i, 0.0), width: *width, height: *height }
                }
                FamilyKind::HalfIndicator => Generator::HalfIndicator { sign: if i % 2 == 0 { 1.0 } else { -1.0 } },
                FamilyKind::CubeIndicator { half_width } => {
                    if !(*half_width > 0.0) {
                        return Err(invalid("indicator half-width must be positive"));
                    }
                    Generator::CubeIndicator { center: jitter(&mut rng, i, 0.0), half_width: *half_width }
                }
                FamilyKind::CustomFile(path) => {
                    let gf = crate::grid::read_any(path)?;
                    if gf.dim() != n {
                        return Err(LabError::GridMismatch(format!("{} is {}-dimensional", path.display(), gf.dim())));
                    }
                    Generator::Custom(Arc::new(gf))
                }
            };
            Ok(TestFunction::new(id, g))
        })
        .collect()
}

/// `count` m-tuples drawn with replacement from `pool`.
pub fn random_tuples(pool: &[TestFunction], m: usize, count: usize, seed: u64) -> Vec<Vec<TestFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..m).map(|_| pool.choose(&mut rng).expect("non-empty pool").clone()).collect())
        .collect()
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::LogSingularity { a, sign, scale } => write!(f, "log:a={a:?},sign={sign:?},scale={scale:?}"),
            FamilyKind::DyadicMartingale { depth, sigma } => write!(f, "martingale:depth={depth},sigma={sigma:?}"),
            FamilyKind::SmoothBump { width, height } => write!(f, "bump:width={width:?},height={height:?}"),
            FamilyKind::HalfIndicator => write!(f, "half-indicator"),
            FamilyKind::CubeIndicator { half_width } => write!(f, "indicator:half_width={half_width:?}"),
            FamilyKind::CustomFile(p) => write!(f, "custom:path={}", p.display()),
        }
    }
}

/// Parses `kind[:key=value,...]`, where `count` is accepted as a key and
/// returned separately.
pub fn parse_family(spec: &str) -> Result<(FamilyKind, Option<usize>)> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut kv: Vec<(String, String)> = Vec::new();
    for part in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| invalid(format!("bad family parameter `{part}`")))?;
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut count = None;
    let mut take = |key: &str| -> Option<String> {
        kv.iter().position(|(k, _)| k == key).map(|i| kv.remove(i).1)
    };
    if let Some(c) = take("count") {
        count = Some(c.parse().map_err(|_| invalid("family count must be an integer"))?);
    }
    let num = |v: Option<String>, default: f64, key: &str| -> Result<f64> {
        v.map_or(Ok(default), |s| s.parse().map_err(|_| invalid(format!("family parameter `{key}` must be a number"))))
    };
    let kind = match name.trim() {
        "log" => FamilyKind::LogSingularity {
            a: num(take("a"), 0.0, "a")?,
            sign: num(take("sign"), 1.0, "sign")?,
            scale: num(take("scale"), 1.0, "scale")?,
        },
        "martingale" => FamilyKind::DyadicMartingale {
            depth: num(take("depth"), 6.0, "depth")? as u32,
            sigma: num(take("sigma"), 1.0, "sigma")?,
        },
        "bump" => FamilyKind::SmoothBump {
            width: num(take("width"), 1.0, "width")?,
            height: num(take("height"), 1.0, "height")?,
        },
        "half-indicator" => FamilyKind::HalfIndicator,
        "indicator" => FamilyKind::CubeIndicator { half_width: num(take("half_width"), 1.0, "half_width")? },
        "custom" => FamilyKind::CustomFile(PathBuf::from(
            take("path").ok_or_else(|| invalid("custom family needs path=<file>"))?,
        )),
        other => return Err(invalid(format!("unknown family `{other}`"))),
    };
    if let Some((k, _)) = kv.first() {
        return Err(invalid(format!("unknown parameter `{k}` for family `{name}`")));
    }
    Ok((kind, count))
}

impl FromStr for FamilyKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        parse_family(s).map(|(k, _)| k)
    }
}
