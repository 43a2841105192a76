//! Batch front-end: configuration parsing, experiment dispatch and artifact
//! emission.
//!
//! # Config grammar
//!
//! A config is UTF-8 text made of `key=value` pairs. Pairs are separated by
//! whitespace or newlines, spaces around `=` are allowed, and `#` starts a
//! comment that runs to the end of the line. Values never contain
//! whitespace. `family` and `input` may repeat; every other key may appear
//! at most once. Unknown keys are errors. Every key not given takes its
//! value from [`DEFAULTS`], and the fully resolved config
//! ([`RunConfig::to_text`]) parses back to the same config.
//!
//! `auto` values are resolved per command; see the table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;

use crate::error::{LabError, Result};
use crate::grid::{write_csv, Extension, GridFunction};
use crate::kernels::{builtin_kernel, parse_kernel_arg, validate_kernel, KernelParams, KernelSpec, ProbePlan};
use crate::lab::{
    generate, parse_family, random_tuples, ratio_studies, refinement_study, square_chain_holds, Denominator,
    FamilyKind, GridSpec, RefinementPlan, StudyConfig, TGridSpec, TestFamily, TestFunction, Variant,
};
use crate::operators::{ConeSpec, GtPath, OperatorField, OperatorKind};
use crate::spaces::{blo_constant, BallFamily, BallPolicy, NormReport};

/// `(key, default, meaning)`; the documented defaults table.
pub const DEFAULTS: &[(&str, &str, &str)] = &[
    ("command", "", "validate-kernel | compute | norms | verify | sweep | refine (required)"),
    ("kernel", "tensor-odd-gaussian", "builtin kernel name"),
    ("m", "auto", "multilinearity; auto = the kernel's default"),
    ("n", "1", "dimension, 1 or 2"),
    ("N", "512", "points per axis"),
    ("L", "8", "box half-width"),
    ("extension", "family", "family | periodic | edge-hold | zero"),
    ("t_min", "auto", "smallest scale; auto = h"),
    ("t_max", "auto", "largest scale; auto = 2L"),
    ("t_count", "64", "log-spaced scale nodes"),
    ("lambda", "8", "aperture exponent of g*-type operators, > 1"),
    ("lambdas", "3,5,8,12", "sweep values of lambda"),
    ("op", "auto", "comma list of g,S,g*,g',S',g**; auto = g for compute, g* for sweep, g,S,g* otherwise"),
    ("family", "auto", "test family spec kind[:key=value,...]; repeatable"),
    ("family_count", "4", "instances per family without count="),
    ("input", "none", "grid-function file (CSV or binary); repeatable"),
    ("denominator", "bmo", "bmo | linf"),
    ("tuples", "auto", "input tuples; auto = 1 for compute, 20 otherwise"),
    ("seed", "1", "seed for every random draw"),
    ("p", "2", "Lebesgue exponent for norms"),
    ("balls", "dyadic", "dyadic | strided:<s> | all"),
    ("path", "auto", "auto | direct | fast"),
    ("variants", "N,L", "refinement variants from N,L,t_min,t_max"),
    ("drift_threshold", "0.25", "allowed drift under N and L variants"),
    ("t_drift_threshold", "0.1", "allowed drift under t-range variants"),
    ("probe", "default", "validator probe plan: default | quick"),
    ("vanishing_tol", "1e-6", "validator vanishing tolerance (relative to C_size)"),
    ("ratio_tol", "1e-3", "validator slack on size/smoothness ratios"),
    ("out", "none", "output directory"),
];

const REPEATABLE: [&str; 2] = ["family", "input"];

fn config_err(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ValidateKernel,
    Compute,
    Norms,
    Verify,
    Sweep,
    Refine,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ValidateKernel => "validate-kernel",
            Command::Compute => "compute",
            Command::Norms => "norms",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Refine => "refine",
        }
    }

    /// Commands whose results only exist as files need `out`.
    pub fn requires_out(self) -> bool {
        matches!(self, Command::Compute | Command::Norms | Command::Sweep | Command::Refine)
    }
}

impl FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "validate-kernel" => Command::ValidateKernel,
            "compute" => Command::Compute,
            "norms" => Command::Norms,
            "verify" => Command::Verify,
            "sweep" => Command::Sweep,
            "refine" => Command::Refine,
            "" => return Err(config_err("command required")),
            other => return Err(config_err(format!("unknown command `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeLevel {
    Default,
    Quick,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub kernel: String,
    pub m: usize,
    pub n: usize,
    pub points: usize,
    pub half_width: f64,
    pub extension: Option<Extension>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub t_count: usize,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub ops: Vec<OperatorKind>,
    pub families: Vec<(FamilyKind, usize)>,
    pub inputs: Vec<PathBuf>,
    pub denominator: Denominator,
    pub tuples: usize,
    pub seed: u64,
    pub p: f64,
    pub balls: BallPolicy,
    pub path: GtPath,
    pub variants: Vec<Variant>,
    pub drift_threshold: f64,
    pub t_drift_threshold: f64,
    pub probe: ProbeLevel,
    pub vanishing_tol: f64,
    pub ratio_tol: f64,
    pub out: Option<PathBuf>,
}

/// Splits config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        // glue `a = b` into `a=b`
        let mut glued = String::with_capacity(line.len());
        let mut chars = line.trim().chars().peekable();
        while let Some(c) = chars.next() {
            if c.is_whitespace() {
                while chars.peek().is_some_and(|d| d.is_whitespace()) {
                    chars.next();
                }
                if chars.peek() == Some(&'=') || glued.ends_with('=') {
                    continue;
                }
                glued.push(' ');
            } else {
                glued.push(c);
            }
        }
        for tok in glued.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key=value, got `{tok}`", lineno + 1)))?;
            if k.is_empty() {
                return Err(config_err(format!("line {}: empty key", lineno + 1)));
            }
            pairs.push((k.to_string(), v.to_string()));
        }
    }
    Ok(pairs)
}

/// `base` with every key present in `overrides` replaced by its override(s).
pub fn merge_pairs(base: Vec<(String, String)>, overrides: Vec<(String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = base.into_iter().filter(|(k, _)| !overrides.iter().any(|(o, _)| o == k)).collect();
    out.extend(overrides);
    out
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    resolve(&parse_pairs(text)?)
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| config_err(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.is_empty()).map(|s| parse_num(key, s)).collect()
}

fn opt_auto(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(format!("`{key}` must be positive and finite, got {v}")))
    }
}

fn parse_extension(v: &str) -> Result<Option<Extension>> {
    Ok(match v {
        "family" => None,
        "periodic" => Some(Extension::Periodic),
        "edge-hold" => Some(Extension::EdgeHold),
        "zero" => Some(Extension::Zero),
        other => return Err(config_err(format!("unknown extension `{other}`"))),
    })
}

fn parse_balls(v: &str) -> Result<BallPolicy> {
    match v {
        "dyadic" => Ok(BallPolicy::DyadicAllCenters),
        "all" => Ok(BallPolicy::AllRadiiAllCenters),
        _ => match v.strip_prefix("strided:") {
            Some(s) => {
                let s: usize = parse_num("balls", s)?;
                if s == 0 {
                    return Err(config_err("`balls` stride must be positive"));
                }
                Ok(BallPolicy::DyadicStrided(s))
            }
            None => Err(config_err(format!("unknown ball policy `{v}`"))),
        },
    }
}

fn balls_name(b: BallPolicy) -> String {
    match b {
        BallPolicy::DyadicAllCenters => "dyadic".into(),
        BallPolicy::DyadicStrided(s) => format!("strided:{s}"),
        BallPolicy::AllRadiiAllCenters => "all".into(),
    }
}

fn parse_variant(v: &str) -> Result<Variant> {
    Ok(match v {
        "N" => Variant::RefineN,
        "L" => Variant::WidenL,
        "t_min" => Variant::LowerTMin,
        "t_max" => Variant::RaiseTMax,
        other => return Err(config_err(format!("unknown refinement variant `{other}`"))),
    })
}

fn variant_key(v: Variant) -> &'static str {
    match v {
        Variant::RefineN => "N",
        Variant::WidenL => "L",
        Variant::LowerTMin => "t_min",
        Variant::RaiseTMax => "t_max",
    }
}

fn default_families(command: Command, denominator: Denominator) -> Vec<&'static str> {
    match (command, denominator) {
        (Command::Norms | Command::Verify, _) => vec![
            "log:a=0,sign=1",
            "log:a=0,sign=-1",
            "martingale:depth=6,sigma=1",
            "bump:width=1,height=1",
            "half-indicator",
            "indicator:half_width=1",
        ],
        (_, Denominator::Bmo) => vec!["log:a=0,sign=1", "log:a=0,sign=-1", "martingale:depth=6,sigma=1"],
        (_, Denominator::Linf) => vec!["bump:width=1,height=1", "half-indicator"],
    }
}

fn resolve(pairs: &[(String, String)]) -> Result<RunConfig> {
    for (i, (k, _)) in pairs.iter().enumerate() {
        if !DEFAULTS.iter().any(|(d, _, _)| d == k) {
            return Err(config_err(format!("unknown key `{k}`")));
        }
        if !REPEATABLE.contains(&k.as_str()) && pairs[..i].iter().any(|(p, _)| p == k) {
            return Err(config_err(format!("key `{k}` given twice")));
        }
    }
    let get = |key: &str| -> &str {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| DEFAULTS.iter().find(|(k, _, _)| *k == key).expect("documented key").1)
    };
    let all = |key: &str| -> Vec<&str> { pairs.iter().filter(|(k, _)| k == key).map(|(_, v)| v.as_str()).collect() };

    let command: Command = get("command").parse()?;
    let kernel = get("kernel").to_string();
    let n: usize = parse_num("n", get("n"))?;
    if !(1..=2).contains(&n) {
        return Err(config_err(format!("`n` must be 1 or 2, got {n}")));
    }
    let m = match get("m") {
        "auto" => None,
        v => Some(parse_num::<usize>("m", v)?),
    };
    let (kname, kparams) = parse_kernel_arg(&kernel)?;
    if kparams != KernelParams::default() {
        return Err(config_err("give m and n as their own keys, not in `kernel`"));
    }
    let k = builtin_kernel(&kname, &KernelParams { m, n: Some(n) })?;
    let points: usize = parse_num("N", get("N"))?;
    if points < 4 {
        return Err(config_err(format!("`N` must be at least 4, got {points}")));
    }
    let half_width = positive("L", parse_num("L", get("L"))?)?;
    let t_min = opt_auto("t_min", get("t_min"))?.map(|v| positive("t_min", v)).transpose()?;
    let t_max = opt_auto("t_max", get("t_max"))?.map(|v| positive("t_max", v)).transpose()?;
    let t_count: usize = parse_num("t_count", get("t_count"))?;
    if t_count == 0 {
        return Err(config_err("`t_count` must be positive"));
    }
    let lambda: f64 = parse_num("lambda", get("lambda"))?;
    let lambdas: Vec<f64> = parse_list("lambdas", get("lambdas"))?;
    let denominator = match get("denominator") {
        "bmo" => Denominator::Bmo,
        "linf" => Denominator::Linf,
        other => return Err(config_err(format!("unknown denominator `{other}`"))),
    };
    let ops: Vec<OperatorKind> = match get("op") {
        "auto" => match command {
            Command::Compute => vec![OperatorKind::G],
            Command::Sweep => vec![OperatorKind::GStar],
            _ => vec![OperatorKind::G, OperatorKind::S, OperatorKind::GStar],
        },
        v => parse_list("op", v)?,
    };
    if ops.is_empty() {
        return Err(config_err("`op` is empty"));
    }
    let ops: Vec<OperatorKind> = ops.into_iter().map(|o| o.for_kernel(&k)).collect();
    if ops.iter().any(|o| o.needs_lambda()) && !(lambda > 1.0) {
        return Err(config_err(format!("lambda must exceed 1 for g*-type operators, got {lambda}")));
    }
    if command == Command::Sweep {
        if !ops.iter().any(|o| o.needs_lambda()) {
            return Err(config_err("sweep needs a g*-type operator"));
        }
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 1.0)) {
            return Err(config_err("sweep lambdas must all exceed 1"));
        }
    }
    let family_count: usize = parse_num("family_count", get("family_count"))?;
    if family_count == 0 {
        return Err(config_err("`family_count` must be positive"));
    }
    let inputs: Vec<PathBuf> = all("input").into_iter().filter(|v| *v != "none").map(PathBuf::from).collect();
    let fam_specs = all("family");
    let fam_specs: Vec<&str> = if fam_specs.is_empty() || fam_specs == ["auto"] {
        if inputs.is_empty() {
            default_families(command, denominator)
        } else {
            Vec::new()
        }
    } else {
        fam_specs
    };
    let families = fam_specs
        .iter()
        .map(|s| parse_family(s).map(|(k, c)| (k, c.unwrap_or(family_count))))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| config_err(e.to_string()))?;
    if families.iter().any(|(_, c)| *c == 0) {
        return Err(config_err("family count must be positive"));
    }
    let tuples = match get("tuples") {
        "auto" => {
            if command == Command::Compute {
                1
            } else {
                20
            }
        }
        v => parse_num("tuples", v)?,
    };
    if tuples == 0 {
        return Err(config_err("`tuples` must be positive"));
    }
    let probe = match get("probe") {
        "default" => ProbeLevel::Default,
        "quick" => ProbeLevel::Quick,
        other => return Err(config_err(format!("unknown probe plan `{other}`"))),
    };
    let out = match get("out") {
        "none" => None,
        v => Some(PathBuf::from(v)),
    };
    Ok(RunConfig {
        command,
        kernel: kname,
        m: k.m,
        n,
        points,
        half_width,
        extension: parse_extension(get("extension"))?,
        t_min,
        t_max,
        t_count,
        lambda,
        lambdas,
        ops,
        families,
        inputs,
        denominator,
        tuples,
        seed: parse_num("seed", get("seed"))?,
        p: positive("p", parse_num("p", get("p"))?)?,
        balls: parse_balls(get("balls"))?,
        path: get("path").parse().map_err(|e: LabError| config_err(e.to_string()))?,
        variants: get("variants").split(',').filter(|s| !s.is_empty()).map(parse_variant).collect::<Result<_>>()?,
        drift_threshold: positive("drift_threshold", parse_num("drift_threshold", get("drift_threshold"))?)?,
        t_drift_threshold: positive("t_drift_threshold", parse_num("t_drift_threshold", get("t_drift_threshold"))?)?,
        probe,
        vanishing_tol: positive("vanishing_tol", parse_num("vanishing_tol", get("vanishing_tol"))?)?,
        ratio_tol: parse_num("ratio_tol", get("ratio_tol"))?,
        out,
    })
}

fn join<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every key with its resolved value, one per line; parses back to `self`.
    pub fn to_text(&self) -> String {
        let auto = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |x| format!("{x:?}"));
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("command", self.command.name().into());
        kv("kernel", self.kernel.clone());
        kv("m", self.m.to_string());
        kv("n", self.n.to_string());
        kv("N", self.points.to_string());
        kv("L", format!("{:?}", self.half_width));
        kv("extension", self.extension.as_ref().map_or("family", |e| e.name()).into());
        kv("t_min", auto(self.t_min));
        kv("t_max", auto(self.t_max));
        kv("t_count", self.t_count.to_string());
        kv("lambda", format!("{:?}", self.lambda));
        kv("lambdas", join(&self.lambdas, |l| format!("{l:?}")));
        kv("op", join(&self.ops, |o| o.name().to_string()));
        for (f, c) in &self.families {
            let spec = f.to_string();
            let sep = if spec.contains(':') { ',' } else { ':' };
            kv("family", format!("{spec}{sep}count={c}"));
        }
        if self.families.is_empty() && self.inputs.is_empty() {
            kv("family", "auto".into());
        }
        for p in &self.inputs {
            kv("input", p.display().to_string());
        }
        kv("denominator", self.denominator.name().into());
        kv("tuples", self.tuples.to_string());
        kv("seed", self.seed.to_string());
        kv("p", format!("{:?}", self.p));
        kv("balls", balls_name(self.balls));
        kv("path", self.path.name().into());
        kv("variants", join(&self.variants, |v| variant_key(*v).to_string()));
        kv("drift_threshold", format!("{:?}", self.drift_threshold));
        kv("t_drift_threshold", format!("{:?}", self.t_drift_threshold));
        kv("probe", if self.probe == ProbeLevel::Quick { "quick" } else { "default" }.into());
        kv("vanishing_tol", format!("{:e}", self.vanishing_tol));
        kv("ratio_tol", format!("{:e}", self.ratio_tol));
        kv("out", self.out.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string()));
        s
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        builtin_kernel(&self.kernel, &KernelParams { m: Some(self.m), n: Some(self.n) })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.points, self.half_width)
    }

    pub fn study(&self) -> Result<StudyConfig> {
        let mut cfg = StudyConfig::new(self.grid()?, self.kernel_spec()?);
        cfg.tgrid = TGridSpec { t_min: self.t_min, t_max: self.t_max, count: self.t_count };
        cfg.lambda = Some(self.lambda);
        cfg.policy = self.balls;
        cfg.path = self.path;
        cfg.extension = self.extension.clone();
        Ok(cfg)
    }

    /// Instances of every family and input file, with ids unique across them.
    pub fn pool(&self) -> Result<Vec<TestFunction>> {
        let mut pool = Vec::new();
        for (j, (kind, count)) in self.families.iter().enumerate() {
            let fam = TestFamily::new(kind.clone(), *count, self.seed.wrapping_add(j as u64));
            pool.extend(generate(&fam, self.n)?.into_iter().map(|mut f| {
                f.id = format!("f{j}-{}", f.id);
                f
            }));
        }
        for (j, path) in self.inputs.iter().enumerate() {
            let mut f = generate(&TestFamily::new(FamilyKind::CustomFile(path.clone()), 1, 0), self.n)?.remove(0);
            f.id = format!("in{j}");
            pool.push(f);
        }
        if pool.is_empty() {
            return Err(config_err("no test functions: give a family or an input"));
        }
        Ok(pool)
    }

    /// Exactly the input files in order when there are `m` of them and no
    /// families; otherwise random draws from the pool.
    pub fn tuples_from(&self, pool: &[TestFunction]) -> Vec<Vec<TestFunction>> {
        if self.families.is_empty() && self.inputs.len() == self.m {
            vec![pool.to_vec()]
        } else {
            random_tuples(pool, self.m, self.tuples, self.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summary: Vec<String>,
    pub failures: Vec<Failure>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, check: impl Into<String>, detail: impl Into<String>) {
        self.failures.push(Failure { check: check.into(), detail: detail.into() });
    }

    pub fn failures_csv(&self) -> String {
        let mut s = String::from("check,detail\n");
        for f in &self.failures {
            let _ = writeln!(s, "{},{}", f.check, f.detail.replace(',', ";"));
        }
        s
    }
}

struct Sink<'a> {
    dir: Option<&'a Path>,
    seed: u64,
}

impl Sink<'_> {
    /// Report CSVs carry a leading `# seed=` comment line.
    fn csv(&self, out: &mut Outcome, name: &str, body: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            let path = dir.join(name);
            fs::write(&path, format!("# seed={}\n{body}", self.seed))?;
            out.artifacts.push(path);
        }
        Ok(())
    }

    fn field(&self, out: &mut Outcome, f: &OperatorField, stem: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            let (a, b) = f.write(dir, stem)?;
            out.artifacts.extend([a, b]);
        }
        Ok(())
    }

    fn grid_function(&self, out: &mut Outcome, gf: &GridFunction, stem: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            let path = dir.join(format!("{stem}.csv"));
            let mut buf = Vec::new();
            write_csv(gf, &mut buf)?;
            fs::write(&path, buf)?;
            out.artifacts.push(path);
        }
        Ok(())
    }
}

fn op_stem(k: OperatorKind) -> &'static str {
    match k {
        OperatorKind::G => "g",
        OperatorKind::S => "S",
        OperatorKind::GStar => "gstar",
        OperatorKind::GPrime => "gprime",
        OperatorKind::SPrime => "sprime",
        OperatorKind::GStarStar => "gstarstar",
    }
}

/// Runs `cfg`, writing artifacts under `cfg.out`. `source` is echoed
/// verbatim next to the resolved config.
pub fn run(cfg: &RunConfig, source: &str) -> Result<Outcome> {
    if cfg.command.requires_out() && cfg.out.is_none() {
        return Err(config_err(format!("`{}` writes artifacts and needs --out <dir>", cfg.command.name())));
    }
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.txt"), cfg.to_text())?;
        fs::write(dir.join("config.source.txt"), source)?;
    }
    let sink = Sink { dir: cfg.out.as_deref(), seed: cfg.seed };
    let mut out = Outcome::default();
    match cfg.command {
        Command::ValidateKernel => validate_cmd(cfg, &sink, &mut out)?,
        Command::Compute => compute_cmd(cfg, &sink, &mut out)?,
        Command::Norms => norms_cmd(cfg, &sink, &mut out)?,
        Command::Verify => verify_cmd(cfg, &sink, &mut out)?,
        Command::Sweep => sweep_cmd(cfg, &sink, &mut out)?,
        Command::Refine => refine_cmd(cfg, &sink, &mut out)?,
    }
    if let Some(dir) = &cfg.out {
        let mut summary = out.summary.join("\n");
        summary.push('\n');
        fs::write(dir.join("summary.txt"), summary)?;
        fs::write(dir.join("failures.csv"), out.failures_csv())?;
    }
    Ok(out)
}

fn validate_cmd(cfg: &RunConfig, sink: &Sink, out: &mut Outcome) -> Result<()> {
    let k = cfg.kernel_spec()?;
    let base = match cfg.probe {
        ProbeLevel::Default => ProbePlan::default(),
        ProbeLevel::Quick => ProbePlan::quick(),
    };
    let plan = ProbePlan { seed: cfg.seed, vanishing_tol: cfg.vanishing_tol, ratio_tol: cfg.ratio_tol, ..base };
    let rep = validate_kernel(&k, &plan)?;
    sink.csv(out, "validation.csv", &rep.to_csv())?;
    out.summary.push(format!("kernel={} m={} n={} passed={}", k.id, k.m, k.n, rep.passed()));
    out.summary.push(format!("vanishing_tail_bound={:e}", rep.vanishing_tail_bound));
    for c in &rep.conditions {
        out.summary.push(format!("{}={:e} probes={} discards={} pass={}", c.condition, c.value, c.probes, c.discards, c.pass));
        if !c.pass {
            out.fail(format!("kernel:{}", c.condition), format!("value {:e}", c.value));
        }
    }
    Ok(())
}

fn cone_domination(s: &OperatorField, gs: &OperatorField, lambda: f64, n: usize) -> Option<usize> {
    let c = 2f64.powf(lambda * n as f64 / 2.0);
    s.samples().iter().zip(gs.samples()).position(|(a, b)| *a > c * b)
}

fn compute_cmd(cfg: &RunConfig, sink: &Sink, out: &mut Outcome) -> Result<()> {
    let study = cfg.study()?;
    let pool = cfg.pool()?;
    let tuples = cfg.tuples_from(&pool);
    let k = &study.kernel;
    if cfg.ops.iter().any(|o| o.needs_lambda()) {
        out.summary.extend(ConeSpec::new(cfg.lambda)?.warnings(k).into_iter().map(|w| format!("warning: {w}")));
    }
    for (i, tuple) in tuples.iter().enumerate() {
        let mut gfs = Vec::new();
        for (j, f) in tuple.iter().enumerate() {
            let s = study.sample(f)?;
            out.summary.extend(s.notes.iter().map(|n| format!("t{i} {}: {n}", f.id)));
            sink.grid_function(out, &s.gf, &format!("t{i}_input{j}"))?;
            gfs.push(s.gf);
        }
        let refs: Vec<&GridFunction> = gfs.iter().collect();
        let fields = crate::lab::operator_fields(&cfg.ops, &study, &refs)?;
        for (kind, f) in cfg.ops.iter().zip(&fields) {
            sink.field(out, f, &format!("t{i}_{}", op_stem(*kind)))?;
            let sq = f.squared()?;
            let fam = BallFamily::new(&sq, cfg.balls)?;
            let (b1, b2) = (blo_constant(&f.values, &fam)?.value, blo_constant(&sq, &fam)?.value);
            let ids: Vec<&str> = tuple.iter().map(|f| f.id.as_str()).collect();
            out.summary.push(format!(
                "t{i} op={kind} inputs={} max={:?} blo={b1:?} blo_sq={b2:?}",
                ids.join(" "),
                f.values.max_abs()
            ));
            if !f.is_nonnegative() {
                out.fail("nonnegative", format!("t{i} {kind}"));
            }
            if !square_chain_holds(b1, b2) {
                out.fail("square_chain", format!("t{i} {kind}: {b1:?}^2 > {b2:?}"));
            }
        }
        let find = |want: fn(&OperatorKind) -> bool| cfg.ops.iter().position(want).map(|p| &fields[p]);
        if let (Some(s), Some(gs)) = (
            find(|o| matches!(o, OperatorKind::S | OperatorKind::SPrime)),
            find(|o| o.needs_lambda()),
        ) {
            if let Some(node) = cone_domination(s, gs, cfg.lambda, cfg.n) {
                out.fail("cone_domination", format!("t{i} node {node}"));
            }
        }
    }
    Ok(())
}

fn norm_reports(cfg: &RunConfig, sink: &Sink, out: &mut Outcome) -> Result<()> {
    let study = cfg.study()?;
    let mut csv = format!("{}\n", NormReport::CSV_HEADER);
    for f in cfg.pool()? {
        let s = study.sample(&f)?;
        out.summary.extend(s.notes.iter().map(|n| format!("{}: {n}", f.id)));
        let fam = BallFamily::new(&s.gf, cfg.balls)?;
        let rep = NormReport::compute(&f.id, &s.gf, &fam, cfg.p)?;
        csv.push_str(&rep.csv_row(&s.gf));
        csv.push('\n');
        if !rep.invariants_hold() {
            out.fail(
                "norm_inclusions",
                format!("{}: bmo={:?} blo={:?} linf={:?}", f.id, rep.bmo.value, rep.blo.value, rep.norms.linf),
            );
        }
    }
    out.summary.push(format!("norms: {} functions, p={:?}", csv.lines().count() - 1, cfg.p));
    sink.csv(out, "norms.csv", &csv)
}

fn norms_cmd(cfg: &RunConfig, sink: &Sink, out: &mut Outcome) -> Result<()> {
    norm_reports(cfg, sink, out)
}

/// The exact discrete inequality suite: inclusions on every function, then
/// square chain, nonnegativity and cone domination on operator fields.
fn verify_cmd(cfg: &RunConfig, sink: &Sink, out: &mut Outcome) -> Result<()> {
    norm_reports(cfg, sink, out)?;
    let study = cfg.study()?;
    let k = &study.kernel;
    let kinds: Vec<OperatorKind> =
        [OperatorKind::G, OperatorKind::S, OperatorKind::GStar].iter().map(|o| o.for_kernel(k)).collect();
    let pool = cfg.pool()?;
    let tuples = cfg.tuples_from(&pool);
    let mut csv = String::from("check,subject,lhs,rhs,pass\n");
    let mut checked = 0;
    for (i, tuple) in tuples.iter().enumerate() {
        let gfs: Vec<GridFunction> = tuple.iter().map(|f| study.sample(f).map(|s| s.gf)).collect::<Result<_>>()?;
        let refs: Vec<&GridFunction> = gfs.iter().collect();
        let fields = crate::lab::operator_fields(&kinds, &study, &refs)?;
        for (kind, f) in kinds.iter().zip(&fields) {
            let sq = f.squared()?;
            let fam = BallFamily::new(&sq, cfg.balls)?;
            let (b1, b2) = (blo_constant(&f.values, &fam)?.value, blo_constant(&sq, &fam)?.value);
            let ok = f.is_nonnegative() && square_chain_holds(b1, b2);
            let _ = writeln!(csv, "square_chain,t{i}/{kind},{:?},{b2:?},{ok}", b1 * b1);
            if !ok {
                out.fail("square_chain", format!("t{i} {kind}"));
            }
            checked += 1;
        }
        let bad = cone_domination(&fields[1], &fields[2], cfg.lambda, cfg.n);
        let _ = writeln!(csv, "cone_domination,t{i},,,{}", bad.is_none());
        if let Some(node) = bad {
            out.fail("cone_domination", format!("t{i} node {node}"));
        }
    }
    out.summary.push(format!("operator checks: {checked} fields over {} tuples, lambda={:?}", tuples.len(), cfg.lambda));
    out.summary.push(format!("passed={}", out.failures.is_empty()));
    sink.csv(out, "verify.csv", &csv)
}

fn sweep_cmd(cfg: &RunConfig, sink: &Sink, out: &mut Outcome) -> Result<()> {
    let kinds: Vec<OperatorKind> = cfg.ops.iter().copied().filter(|o| o.needs_lambda()).collect();
    let pool = cfg.pool()?;
    let tuples = cfg.tuples_from(&pool);
    for &lambda in &cfg.lambdas {
        let mut study = cfg.study()?;
        study.lambda = Some(lambda);
        out.summary.extend(ConeSpec::new(lambda)?.warnings(&study.kernel).into_iter().map(|w| format!("warning: {w}")));
        for rep in ratio_studies(&kinds, cfg.denominator, &tuples, &study)? {
            sink.csv(out, &format!("ratio_{}_lambda{lambda}.csv", op_stem(rep.kind)), &rep.to_csv())?;
            out.summary.push(rep.summary());
            if !rep.all_finite() {
                out.fail("finite_ratio", format!("{} lambda={lambda:?}", rep.kind));
            }
            if !rep.checks_hold() {
                out.fail("ratio_checks", format!("{} lambda={lambda:?}", rep.kind));
            }
        }
    }
    Ok(())
}

fn refine_cmd(cfg: &RunConfig, sink: &Sink, out: &mut Outcome) -> Result<()> {
    let pool = cfg.pool()?;
    let tuples = cfg.tuples_from(&pool);
    let mut plan = RefinementPlan::new(cfg.study()?, cfg.ops.clone(), cfg.denominator, tuples);
    plan.variants = cfg.variants.clone();
    plan.threshold = cfg.drift_threshold;
    plan.t_threshold = cfg.t_drift_threshold;
    let rep = refinement_study(&plan)?;
    sink.csv(out, "drift.csv", &rep.to_csv())?;
    for r in &rep.base_reports {
        sink.csv(out, &format!("ratio_{}_base.csv", op_stem(r.kind)), &r.to_csv())?;
        out.summary.push(r.summary());
        if !r.all_finite() {
            out.fail("finite_ratio", r.kind.to_string());
        }
        if !r.checks_hold() {
            out.fail("ratio_checks", r.kind.to_string());
        }
    }
    for row in &rep.rows {
        out.summary.push(format!(
            "drift {} {}: {:?} -> {:?} ({:.4} vs {:?})",
            row.quantity, row.variant, row.base, row.value, row.drift, row.threshold
        ));
        if row.flagged {
            out.fail("drift", format!("{} {} drift {:?} > {:?}", row.quantity, row.variant, row.drift, row.threshold));
        }
    }
    out.summary.extend(rep.omissions.iter().map(|o| format!("omitted: {o}")));
    Ok(())
}

/// Command-line flags. Flags override keys from `--config`; `--set` accepts
/// any key.
#[derive(Debug, Parser)]
#[command(name = "mlp-lab", version, about = "Multilinear Littlewood-Paley operator lab")]
pub struct Cli {
    /// validate-kernel, compute, norms, verify, sweep or refine.
    pub command: Option<String>,
    /// Config file of key=value pairs.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub op: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<String>,
    /// Test family spec; repeatable.
    #[arg(long = "family")]
    pub families: Vec<String>,
    /// Input grid-function file; repeatable.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Any config key as KEY=VALUE; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Cli {
    /// Config-file text (verbatim) and the merged pairs.
    pub fn config_pairs(&self) -> Result<(String, Vec<(String, String)>)> {
        let source = match &self.config {
            Some(p) => fs::read_to_string(p)?,
            None => String::new(),
        };
        let mut over: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| over.push((k.to_string(), v));
        if let Some(c) = &self.command {
            push("command", c.clone());
        }
        if let Some(o) = &self.out {
            push("out", o.display().to_string());
        }
        if let Some(v) = &self.kernel {
            push("kernel", v.clone());
        }
        if let Some(v) = &self.op {
            push("op", v.clone());
        }
        if let Some(v) = self.seed {
            push("seed", v.to_string());
        }
        if let Some(v) = &self.lambda {
            push("lambda", v.clone());
        }
        for f in &self.families {
            push("family", f.clone());
        }
        for p in &self.inputs {
            push("input", p.display().to_string());
        }
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| config_err(format!("--set expects KEY=VALUE, got `{s}`")))?;
            push(k.trim(), v.trim().to_string());
        }
        Ok((source.clone(), merge_pairs(parse_pairs(&source)?, over)))
    }
}

/// Parses, runs and reports; returns the process exit code (0 pass,
/// 1 failed checks, 2 errors).
pub fn main_with(cli: &Cli) -> i32 {
    let result = cli.config_pairs().and_then(|(source, pairs)| {
        let cfg = resolve(&pairs)?;
        run(&cfg, &source)
    });
    match result {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.failures {
                println!("FAIL {}: {}", f.check, f.detail);
            }
            i32::from(!out.passed())
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_required() {
        let e = parse_config("").unwrap_err();
        assert!(e.to_string().contains("command required"), "{e}");
        assert!(parse_config("command=").unwrap_err().to_string().contains("command required"));
    }

    #[test]
    fn defaults_fill_unset_keys() {
        let c = parse_config("command=compute kernel=tensor-odd-gaussian m=2 n=1 N=512 op=g").unwrap();
        assert_eq!(c.command, Command::Compute);
        assert_eq!((c.m, c.n, c.points, c.half_width, c.t_count), (2, 1, 512, 8.0, 64));
        assert_eq!(c.ops, vec![OperatorKind::G]);
        assert_eq!(c.tuples, 1);
        assert_eq!(c.lambdas, vec![3.0, 5.0, 8.0, 12.0]);
        assert_eq!(c.families.len(), 3);
        assert_eq!(c.out, None);
    }

    #[test]
    fn small_lambda_is_rejected_for_g_star() {
        let e = parse_config("command=compute op=g* lambda=0.5").unwrap_err();
        assert!(e.to_string().contains("lambda"), "{e}");
        assert!(parse_config("command=compute op=g lambda=0.5").is_ok());
        assert!(parse_config("command=compute op=g* lambda=1").is_err());
    }

    #[test]
    fn unknown_and_repeated_keys_are_errors() {
        assert!(parse_config("command=verify colour=red").unwrap_err().to_string().contains("unknown key"));
        assert!(parse_config("command=verify N=64 N=128").is_err());
        assert!(parse_config("command=verify N=2").is_err());
        assert!(parse_config("command=launch").is_err());
        assert!(parse_config("command verify").is_err());
    }

    #[test]
    fn grammar_allows_spaces_comments_and_lines() {
        let c = parse_config("# a run\ncommand = norms   # trailing\nN =64\nfamily= bump:width=2\nfamily=half-indicator:count=2\n").unwrap();
        assert_eq!(c.points, 64);
        assert_eq!(c.families.len(), 2);
        assert_eq!(c.families[1], (FamilyKind::HalfIndicator, 2));
    }

    #[test]
    fn resolved_text_round_trips() {
        for text in [
            "command=sweep N=128 denominator=linf",
            "command=refine variants=N,t_min extension=zero t_min=0.01 balls=strided:2",
            "command=validate-kernel kernel=shifted-nonconv m=1 n=2 probe=quick",
            "command=compute kernel=shifted-nonconv op=g,S,g* out=/tmp/x",
        ] {
            let c = parse_config(text).unwrap();
            assert_eq!(parse_config(&c.to_text()).unwrap(), c, "{text}");
        }
    }

    #[test]
    fn operators_follow_the_kernel_form() {
        let c = parse_config("command=verify kernel=shifted-nonconv m=2").unwrap();
        assert_eq!(c.ops, vec![OperatorKind::GPrime, OperatorKind::SPrime, OperatorKind::GStarStar]);
        assert!(parse_config("command=sweep op=g,S").is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let cli = Cli::try_parse_from(["mlp-lab", "verify", "--set", "N=32", "--family", "bump"]).unwrap();
        let (_, pairs) = cli.config_pairs().unwrap();
        let c = resolve(&merge_pairs(parse_pairs("command=norms N=64 family=log").unwrap(), pairs)).unwrap();
        assert_eq!(c.command, Command::Verify);
        assert_eq!(c.points, 32);
        assert_eq!(c.families.len(), 1);
    }

    #[test]
    fn artifact_commands_need_out() {
        let c = parse_config("command=norms N=16").unwrap();
        assert!(run(&c, "").unwrap_err().to_string().contains("--out"));
    }
}
