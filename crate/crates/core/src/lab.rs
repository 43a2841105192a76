//! Test-function generation and the verification experiments built on the
//! operators: BMO→BLO and L∞→BLO ratio studies, L^p sanity under dilation,
//! the Plancherel check and refinement studies.

mod families;
mod refine;
mod study;

pub use families::{
    generate, parse_family, random_tuples, FamilyKind, Generator, GridSpec, Martingale, Sampled, TestFamily,
    TestFunction, MARTINGALE_PERIOD_HALF_WIDTH,
};
pub use refine::{refinement_study, relative_drift, DriftRow, RefinementPlan, StabilityReport, Variant};
pub use study::{
    bmo_blo_ratio_study, holder_exponent, linf_blo_ratio_study, lp_sanity, operator_fields, plancherel_ratio,
    ratio_studies, square_chain_holds, Denominator, LpReport, LpRow, PlancherelResult, RatioReport, RatioRow,
    StudyConfig, TGridSpec, DEFAULT_DRIFT_THRESHOLD, MEXICAN_HAT_PLANCHEREL, SQUARE_CHAIN_TOL,
};

#[cfg(test)]
mod tests;
