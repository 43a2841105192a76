//! Operator output plus its `key=value` metadata sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{GtPath, OperatorKind};
use crate::error::{LabError, Result};
use crate::grid::{read_csv, write_csv, Extension, GridFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMeta {
    pub kernel_id: String,
    pub kind: OperatorKind,
    pub t_min: f64,
    pub t_max: f64,
    pub t_count: usize,
    pub lambda: Option<f64>,
    pub weight_eps: Option<f64>,
    pub path: GtPath,
    /// Set on the two halves produced by a split at this radius.
    pub split_radius: Option<f64>,
    pub warnings: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:?}"))
}

impl OperatorMeta {
    pub fn to_sidecar(&self) -> String {
        let mut s = format!(
            "kernel={}\nkind={}\nt_min={:?}\nt_max={:?}\nt_count={}\nlambda={}\nweight_eps={}\npath={}\nsplit_radius={}\n",
            self.kernel_id,
            self.kind,
            self.t_min,
            self.t_max,
            self.t_count,
            opt(self.lambda),
            opt(self.weight_eps),
            self.path.name(),
            opt(self.split_radius),
        );
        for w in &self.warnings {
            s.push_str(&format!("warning={w}\n"));
        }
        s
    }

    pub fn from_sidecar(text: &str) -> Result<Self> {
        let bad = |m: String| LabError::Format(m);
        let mut kv = std::collections::HashMap::new();
        let mut warnings = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad sidecar line `{line}`")))?;
            if k == "warning" {
                warnings.push(v.to_string());
            } else if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(bad(format!("duplicate sidecar key `{k}`")));
            }
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| bad(format!("sidecar is missing `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("bad number for `{k}`"))) };
        let optnum = |k: &str| -> Result<Option<f64>> {
            match get(k)?.as_str() {
                "none" => Ok(None),
                v => v.parse().map(Some).map_err(|_| bad(format!("bad number for `{k}`"))),
            }
        };
        Ok(Self {
            kernel_id: get("kernel")?.clone(),
            kind: get("kind")?.parse()?,
            t_min: num("t_min")?,
            t_max: num("t_max")?,
            t_count: get("t_count")?.parse().map_err(|_| bad("bad t_count".into()))?,
            lambda: optnum("lambda")?,
            weight_eps: optnum("weight_eps")?,
            path: get("path")?.parse()?,
            split_radius: optnum("split_radius")?,
            warnings,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorField {
    pub values: GridFunction,
    pub meta: OperatorMeta,
}

impl OperatorField {
    pub fn kind(&self) -> OperatorKind {
        self.meta.kind
    }

    pub fn samples(&self) -> &[f64] {
        self.values.samples()
    }

    /// `F²` as a grid function.
    pub fn squared(&self) -> Result<GridFunction> {
        self.values.map(|v| v * v, Extension::EdgeHold)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.samples().iter().all(|&v| v >= 0.0)
    }

    /// Writes `<stem>.csv` and `<stem>.meta`; returns both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let csv = dir.join(format!("{stem}.csv"));
        let meta = dir.join(format!("{stem}.meta"));
        let mut w = BufWriter::new(File::create(&csv)?);
        write_csv(&self.values, &mut w)?;
        w.flush()?;
        std::fs::write(&meta, self.meta.to_sidecar())?;
        Ok((csv, meta))
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let values = read_csv(BufReader::new(File::open(dir.join(format!("{stem}.csv")))?))?;
        let meta = OperatorMeta::from_sidecar(&std::fs::read_to_string(dir.join(format!("{stem}.meta")))?)?;
        Ok(Self { values, meta })
    }
}
