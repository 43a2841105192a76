//! Ratio studies: BLO of squared operator fields against products of input
//! norms.

use std::collections::HashMap;

use crate::error::{invalid, LabError, Result};
use crate::grid::{Extension, GridFunction};
use crate::kernels::{builtin_kernel, KernelParams, KernelSpec};
use crate::operators::{ConeSpec, GtPath, OperatorField, OperatorKind, ScaleFields, TGrid};
use crate::spaces::{blo_constant, bmo_seminorm, lebesgue_norms, BallFamily, BallPolicy};

use super::families::{GridSpec, Sampled, TestFunction};

/// t-grid parameters; unset ends default to `[h, 2L]` of whatever grid the
/// study runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct TGridSpec {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub count: usize,
}

impl Default for TGridSpec {
    fn default() -> Self {
        Self { t_min: None, t_max: None, count: TGrid::DEFAULT_COUNT }
    }
}

impl TGridSpec {
    pub fn resolve(&self, grid: &GridSpec) -> Result<TGrid> {
        let lo = self.t_min.unwrap_or(grid.spacing());
        let hi = self.t_max.unwrap_or(2.0 * grid.half_width);
        TGrid::new(lo, hi, self.count)
    }

    /// Explicit range scaled by the given factors, keeping the node density
    /// in `log t`.
    pub fn rescaled(&self, grid: &GridSpec, lo_factor: f64, hi_factor: f64) -> Result<Self> {
        let base = self.resolve(grid)?;
        let (lo, hi) = (base.t_min() * lo_factor, base.t_max() * hi_factor);
        let per_log = self.count as f64 / (base.t_max() / base.t_min()).ln();
        let count = ((hi / lo).ln() * per_log).round() as usize;
        Ok(Self { t_min: Some(lo), t_max: Some(hi), count: count.max(8) })
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub tgrid: TGridSpec,
    pub lambda: Option<f64>,
    pub policy: BallPolicy,
    pub path: GtPath,
    /// Replaces each family's own extension when set.
    pub extension: Option<Extension>,
}

impl StudyConfig {
    pub fn new(grid: GridSpec, kernel: KernelSpec) -> Self {
        Self {
            grid,
            kernel,
            tgrid: TGridSpec::default(),
            lambda: None,
            policy: BallPolicy::DyadicAllCenters,
            path: GtPath::Auto,
            extension: None,
        }
    }

    pub fn with_grid(&self, grid: GridSpec) -> Self {
        Self { grid, ..self.clone() }
    }

    /// Samples `f` on the study grid, applying the extension override.
    pub fn sample(&self, f: &TestFunction) -> Result<Sampled> {
        let mut s = f.sample(&self.grid)?;
        if let Some(e) = &self.extension {
            s.gf = s.gf.with_samples(s.gf.samples().to_vec(), e.clone())?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denominator {
    /// `∏ ‖f_i‖²_BMO`
    Bmo,
    /// `∏ ‖f_i‖²_∞`
    Linf,
}

impl Denominator {
    pub fn name(self) -> &'static str {
        match self {
            Denominator::Bmo => "bmo",
            Denominator::Linf => "linf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub inputs: Vec<String>,
    /// `blo(F²)`
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    /// Centre and radius of the ball attaining `blo(F²)`.
    pub witness: Option<(Vec<f64>, f64)>,
    /// `blo(F)² ≤ blo(F²)` up to rounding.
    pub chain_ok: bool,
    /// L∞ studies: the inclusion-chain consistency with the BMO ratio.
    pub consistency_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub kind: OperatorKind,
    pub denominator: Denominator,
    pub kernel_id: String,
    pub grid: GridSpec,
    pub lambda: Option<f64>,
    pub rows: Vec<RatioRow>,
    pub excluded: usize,
    pub requested: usize,
    pub notes: Vec<String>,
}

impl RatioReport {
    pub const CSV_HEADER: &'static str =
        "instance,inputs,numerator,denominator,ratio,witness_center,witness_radius,chain_ok,consistency_ok";

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn median_ratio(&self) -> f64 {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.ratio).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| r.ratio.is_finite())
    }

    pub fn checks_hold(&self) -> bool {
        self.rows.iter().all(|r| r.chain_ok && r.consistency_ok.unwrap_or(true))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, r) in self.rows.iter().enumerate() {
            let (wc, wr) = match &r.witness {
                Some((c, rad)) => (c.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "), format!("{rad:?}")),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{i},{},{:?},{:?},{:?},{wc},{wr},{},{}\n",
                r.inputs.join(" "),
                r.numerator,
                r.denominator,
                r.ratio,
                r.chain_ok,
                r.consistency_ok.map_or_else(String::new, |b| b.to_string()),
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "operator={} denominator={} kernel={} n={} N={} L={:?} lambda={} rows={} excluded={} requested={} max_ratio={:?} median_ratio={:?}",
            self.kind,
            self.denominator.name(),
            self.kernel_id,
            self.grid.n,
            self.grid.points_per_axis,
            self.grid.half_width,
            self.lambda.map_or_else(|| "none".into(), |l| format!("{l:?}")),
            self.rows.len(),
            self.excluded,
            self.requested,
            self.max_ratio(),
            self.median_ratio(),
        )
    }
}

/// Relative tolerance for `blo(F)² ≤ blo(F²)`.
pub const SQUARE_CHAIN_TOL: f64 = 1e-12;

pub fn square_chain_holds(blo_f: f64, blo_f2: f64) -> bool {
    blo_f * blo_f <= blo_f2 + SQUARE_CHAIN_TOL * blo_f2.max(1.0)
}

struct InputStats {
    gf: GridFunction,
    bmo: f64,
    linf: f64,
}

/// Operator fields for one tuple, sharing the per-scale fields.
pub fn operator_fields(
    kinds: &[OperatorKind],
    cfg: &StudyConfig,
    inputs: &[&GridFunction],
) -> Result<Vec<OperatorField>> {
    let tg = cfg.tgrid.resolve(&cfg.grid)?;
    let cone = kinds
        .iter()
        .any(|k| k.needs_lambda())
        .then(|| ConeSpec::new(cfg.lambda.ok_or_else(|| invalid("g*-type operators need lambda"))?))
        .transpose()?;
    for k in kinds {
        if k.for_kernel(&cfg.kernel) != *k {
            return Err(LabError::UnsupportedKernel(format!("operator {k} does not match kernel {}", cfg.kernel.id)));
        }
    }
    let sf = ScaleFields::compute(&cfg.kernel, inputs, &tg, cfg.path)?;
    kinds
        .iter()
        .map(|k| match k {
            OperatorKind::G | OperatorKind::GPrime => sf.g(),
            OperatorKind::S | OperatorKind::SPrime => sf.area(),
            _ => sf.g_star(cone.as_ref().expect("checked"), &cfg.kernel),
        })
        .collect()
}

/// One report per operator kind over the same tuples.
pub fn ratio_studies(
    kinds: &[OperatorKind],
    denominator: Denominator,
    tuples: &[Vec<TestFunction>],
    cfg: &StudyConfig,
) -> Result<Vec<RatioReport>> {
    if denominator == Denominator::Linf {
        if let Some(f) = tuples.iter().flatten().find(|f| !f.generator.is_bounded()) {
            return Err(invalid(format!("L∞ study needs bounded inputs; `{}` is unbounded", f.id)));
        }
    }
    let fam_for = |gf: &GridFunction| BallFamily::new(gf, cfg.policy);
    let mut cache: HashMap<String, InputStats> = HashMap::new();
    let mut notes = Vec::new();
    let mut reports: Vec<RatioReport> = kinds
        .iter()
        .map(|&kind| RatioReport {
            kind,
            denominator,
            kernel_id: cfg.kernel.id.clone(),
            grid: cfg.grid.clone(),
            lambda: if kind.needs_lambda() { cfg.lambda } else { None },
            rows: Vec::new(),
            excluded: 0,
            requested: tuples.len(),
            notes: Vec::new(),
        })
        .collect();
    for tuple in tuples {
        if tuple.len() != cfg.kernel.m {
            return Err(invalid(format!("tuple of {} inputs for a {}-linear kernel", tuple.len(), cfg.kernel.m)));
        }
        for f in tuple {
            if !cache.contains_key(&f.id) {
                let s = cfg.sample(f)?;
                notes.extend(s.notes.iter().map(|n| format!("{}: {n}", f.id)));
                let fam = fam_for(&s.gf)?;
                let bmo = bmo_seminorm(&s.gf, &fam)?.value;
                let linf = s.gf.max_abs();
                cache.insert(f.id.clone(), InputStats { gf: s.gf, bmo, linf });
            }
        }
        let stats: Vec<&InputStats> = tuple.iter().map(|f| &cache[&f.id]).collect();
        let bmo_prod: f64 = stats.iter().map(|s| s.bmo * s.bmo).product();
        let linf_prod: f64 = stats.iter().map(|s| s.linf * s.linf).product();
        let denom = match denominator {
            Denominator::Bmo => bmo_prod,
            Denominator::Linf => linf_prod,
        };
        if !(denom > 0.0) {
            reports.iter_mut().for_each(|r| r.excluded += 1);
            continue;
        }
        let gfs: Vec<&GridFunction> = stats.iter().map(|s| &s.gf).collect();
        let fields = operator_fields(kinds, cfg, &gfs)?;
        for (report, field) in reports.iter_mut().zip(&fields) {
            let sq = field.squared()?;
            let fam = fam_for(&sq)?;
            let blo2 = blo_constant(&sq, &fam)?;
            let blo1 = blo_constant(&field.values, &fam)?.value;
            let ratio = blo2.value / denom;
            let consistency_ok = (denominator == Denominator::Linf).then(|| {
                // bmo ≤ 2·blo ≤ 4·linf per factor, hence the BMO ratio bounds this one
                let per_factor = stats.iter().all(|s| s.bmo <= 4.0 * s.linf);
                let implied = bmo_prod == 0.0
                    || blo2.value <= (blo2.value / bmo_prod) * stats.iter().map(|s| (4.0 * s.linf).powi(2)).product::<f64>();
                per_factor && implied
            });
            report.rows.push(RatioRow {
                inputs: tuple.iter().map(|f| f.id.clone()).collect(),
                numerator: blo2.value,
                denominator: denom,
                ratio,
                witness: blo2.witness.as_ref().map(|b| (b.center_point(&sq), b.radius(&sq))),
                chain_ok: square_chain_holds(blo1, blo2.value),
                consistency_ok,
            });
        }
    }
    for r in &mut reports {
        r.notes = notes.clone();
    }
    Ok(reports)
}

pub fn bmo_blo_ratio_study(kind: OperatorKind, tuples: &[Vec<TestFunction>], cfg: &StudyConfig) -> Result<RatioReport> {
    Ok(ratio_studies(&[kind], Denominator::Bmo, tuples, cfg)?.remove(0))
}

pub fn linf_blo_ratio_study(kind: OperatorKind, tuples: &[Vec<TestFunction>], cfg: &StudyConfig) -> Result<RatioReport> {
    Ok(ratio_studies(&[kind], Denominator::Linf, tuples, cfg)?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub dilation: f64,
    pub inputs: Vec<String>,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpReport {
    pub kind: OperatorKind,
    pub input_exponents: Vec<f64>,
    pub p: f64,
    /// Endpoint case: weak quasinorm against `∏ ‖f_i‖_1`.
    pub weak: bool,
    pub rows: Vec<LpRow>,
    pub excluded: usize,
    /// Per tuple, max over dilations of `|r_s / r_1 − 1|`; the report keeps the worst.
    pub max_drift: f64,
    pub threshold: f64,
}

impl LpReport {
    pub const CSV_HEADER: &'static str = "dilation,inputs,numerator,denominator,ratio";

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.ratio.is_finite()) && self.max_drift <= self.threshold
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{:?},{},{:?},{:?},{:?}\n",
                r.dilation,
                r.inputs.join(" "),
                r.numerator,
                r.denominator,
                r.ratio
            ));
        }
        out
    }
}

pub const DEFAULT_DRIFT_THRESHOLD: f64 = 0.25;

/// Hölder exponent `p` with `1/p = Σ 1/p_i`, checked against `p` if given.
pub fn holder_exponent(input_exponents: &[f64], p: Option<f64>) -> Result<f64> {
    if input_exponents.iter().any(|&q| !(q >= 1.0) || !q.is_finite()) {
        return Err(invalid("input exponents must be finite and at least 1"));
    }
    let inv: f64 = input_exponents.iter().map(|q| 1.0 / q).sum();
    let want = 1.0 / inv;
    if let Some(p) = p {
        if (p - want).abs() > 1e-12 * want {
            return Err(invalid(format!("1/p = Σ 1/p_i requires p = {want}, got {p}")));
        }
    }
    Ok(want)
}

/// `‖F‖_p / ∏‖f_i‖_{p_i}` (or the weak endpoint) for dilated inputs.
pub fn lp_sanity(
    kind: OperatorKind,
    tuples: &[Vec<TestFunction>],
    input_exponents: &[f64],
    p: Option<f64>,
    dilations: &[f64],
    cfg: &StudyConfig,
) -> Result<LpReport> {
    if input_exponents.len() != cfg.kernel.m {
        return Err(invalid(format!("need {} input exponents", cfg.kernel.m)));
    }
    let p = holder_exponent(input_exponents, p)?;
    let weak = input_exponents.iter().all(|&q| q == 1.0);
    if let Some(f) = tuples.iter().flatten().find(|f| !f.generator.is_integrable()) {
        return Err(invalid(format!("`{}` is not an integrable input", f.id)));
    }
    if !dilations.contains(&1.0) {
        return Err(invalid("dilations must include 1"));
    }
    let mut rows = Vec::new();
    let mut excluded = 0;
    let mut max_drift = 0.0f64;
    for tuple in tuples {
        let mut by_s = Vec::new();
        for &s in dilations {
            let dil: Vec<TestFunction> = tuple.iter().map(|f| f.dilated(s)).collect::<Result<_>>()?;
            let gfs: Vec<GridFunction> = dil.iter().map(|f| cfg.sample(f).map(|x| x.gf)).collect::<Result<_>>()?;
            let denom: f64 = gfs
                .iter()
                .zip(input_exponents)
                .map(|(g, &q)| lebesgue_norms(g, q).map(|n| n.lp))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .product();
            if !(denom > 0.0) {
                excluded += 1;
                continue;
            }
            let refs: Vec<&GridFunction> = gfs.iter().collect();
            let field = operator_fields(&[kind], cfg, &refs)?.remove(0);
            let norms = lebesgue_norms(&field.values, p)?;
            let numerator = if weak { norms.weak_lp } else { norms.lp };
            let ratio = numerator / denom;
            by_s.push((s, ratio));
            rows.push(LpRow { dilation: s, inputs: dil.iter().map(|f| f.id.clone()).collect(), numerator, denominator: denom, ratio });
        }
        if let Some(&(_, r1)) = by_s.iter().find(|(s, _)| *s == 1.0) {
            for &(_, r) in &by_s {
                max_drift = max_drift.max((r / r1 - 1.0).abs());
            }
        }
    }
    Ok(LpReport {
        kind,
        input_exponents: input_exponents.to_vec(),
        p,
        weak,
        rows,
        excluded,
        max_drift,
        threshold: DEFAULT_DRIFT_THRESHOLD,
    })
}

/// `c_ψ` for the mexican hat normalised by `ψ̂(ξ) = |ξ|² e^{−|ξ|²}`.
pub const MEXICAN_HAT_PLANCHEREL: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlancherelResult {
    pub ratio: f64,
    /// `ratio / c_ψ`
    pub normalized: f64,
}

/// `‖g_ψ f‖₂² / ‖f‖₂²` for `f = exp(−|x|²/(2σ²))` and the mexican hat.
pub fn plancherel_ratio(grid: &GridSpec, sigma: f64, tg: &TGridSpec) -> Result<PlancherelResult> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma must be positive"));
    }
    let k = builtin_kernel("mexican-hat", &KernelParams { m: Some(1), n: Some(grid.n) })?;
    let s2 = 2.0 * sigma * sigma;
    let f = crate::grid::make_grid_function(
        grid.grid_box()?,
        grid.points_per_axis,
        move |x| (-x.iter().map(|v| v * v).sum::<f64>() / s2).exp(),
        Extension::Zero,
    )?;
    let tgrid = tg.resolve(grid)?;
    let g = ScaleFields::compute(&k, &[&f], &tgrid, GtPath::Auto)?.g()?;
    let l2sq = |gf: &GridFunction| lebesgue_norms(gf, 2.0).map(|n| n.lp * n.lp);
    let ratio = l2sq(&g.values)? / l2sq(&f)?;
    Ok(PlancherelResult { ratio, normalized: ratio / MEXICAN_HAT_PLANCHEREL })
}
