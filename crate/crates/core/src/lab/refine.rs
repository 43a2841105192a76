//! Sensitivity of measured ratios to resolution, box size and t-range.

use std::fmt;

use crate::error::{LabError, Result};
use crate::operators::OperatorKind;

use super::families::TestFunction;
use super::study::{ratio_studies, Denominator, RatioReport, StudyConfig, DEFAULT_DRIFT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `N → 2N` on the same box.
    RefineN,
    /// `L → 2L` at the same spacing.
    WidenL,
    /// `t_min → t_min / 2`.
    LowerTMin,
    /// `t_max → 2 t_max`.
    RaiseTMax,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::RefineN, Variant::WidenL, Variant::LowerTMin, Variant::RaiseTMax];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RefineN => "N->2N",
            Variant::WidenL => "L->2L",
            Variant::LowerTMin => "t_min/2",
            Variant::RaiseTMax => "2t_max",
        }
    }

    fn is_t_range(self) -> bool {
        matches!(self, Variant::LowerTMin | Variant::RaiseTMax)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct RefinementPlan {
    pub base: StudyConfig,
    pub kinds: Vec<OperatorKind>,
    pub denominator: Denominator,
    pub tuples: Vec<Vec<TestFunction>>,
    pub variants: Vec<Variant>,
    /// Drift allowed for the grid variants.
    pub threshold: f64,
    /// Drift allowed when the t-range is doubled.
    pub t_threshold: f64,
    /// Variants needing more points per axis are omitted.
    pub max_points_per_axis: usize,
}

impl RefinementPlan {
    pub fn new(base: StudyConfig, kinds: Vec<OperatorKind>, denominator: Denominator, tuples: Vec<Vec<TestFunction>>) -> Self {
        Self {
            base,
            kinds,
            denominator,
            tuples,
            variants: vec![Variant::RefineN, Variant::WidenL],
            threshold: DEFAULT_DRIFT_THRESHOLD,
            t_threshold: 0.10,
            max_points_per_axis: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub quantity: String,
    pub variant: Variant,
    pub base: f64,
    pub value: f64,
    pub drift: f64,
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rows: Vec<DriftRow>,
    pub omissions: Vec<String>,
    pub base_reports: Vec<RatioReport>,
    pub variant_reports: Vec<(Variant, Vec<RatioReport>)>,
}

impl StabilityReport {
    pub const CSV_HEADER: &'static str = "quantity,variant,base,value,drift,threshold,flagged";

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged)
    }

    pub fn max_drift(&self, quantity: &str) -> Option<f64> {
        self.rows.iter().filter(|r| r.quantity == quantity).map(|r| r.drift).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{}\n",
                r.quantity, r.variant, r.base, r.value, r.drift, r.threshold, r.flagged
            ));
        }
        for o in &self.omissions {
            out.push_str(&format!("# omitted: {o}\n"));
        }
        out
    }
}

/// `|b − a| / |a|`, zero when both vanish.
pub fn relative_drift(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a == 0.0 {
        f64::INFINITY
    } else {
        (b - a).abs() / a.abs()
    }
}

fn quantity(r: &RatioReport) -> String {
    format!("max_ratio[{}/{}]", r.kind, r.denominator.name())
}

pub fn refinement_study(plan: &RefinementPlan) -> Result<StabilityReport> {
    let base = ratio_studies(&plan.kinds, plan.denominator, &plan.tuples, &plan.base)?;
    let mut rows = Vec::new();
    let mut omissions = Vec::new();
    let mut variant_reports = Vec::new();
    for &v in &plan.variants {
        let mut cfg = plan.base.clone();
        match v {
            Variant::RefineN => cfg.grid = cfg.grid.refined(),
            Variant::WidenL => cfg.grid = cfg.grid.widened(),
            Variant::LowerTMin => cfg.tgrid = cfg.tgrid.rescaled(&cfg.grid, 0.5, 1.0)?,
            Variant::RaiseTMax => cfg.tgrid = cfg.tgrid.rescaled(&cfg.grid, 1.0, 2.0)?,
        }
        if cfg.grid.points_per_axis > plan.max_points_per_axis {
            omissions.push(format!(
                "{v}: needs {} points per axis, limit {}",
                cfg.grid.points_per_axis, plan.max_points_per_axis
            ));
            continue;
        }
        // explicit t ranges stay fixed under grid changes; defaults follow the grid
        let reports = match ratio_studies(&plan.kinds, plan.denominator, &plan.tuples, &cfg) {
            Ok(r) => r,
            Err(LabError::ResourceLimit(msg)) => {
                omissions.push(format!("{v}: {msg}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let threshold = if v.is_t_range() { plan.t_threshold } else { plan.threshold };
        for (b, r) in base.iter().zip(&reports) {
            let drift = relative_drift(b.max_ratio(), r.max_ratio());
            rows.push(DriftRow {
                quantity: quantity(b),
                variant: v,
                base: b.max_ratio(),
                value: r.max_ratio(),
                drift,
                threshold,
                flagged: !(drift <= threshold),
            });
        }
        variant_reports.push((v, reports));
    }
    Ok(StabilityReport { rows, omissions, base_reports: base, variant_reports })
}
