//! Text and binary serialization of grid functions. Both formats round-trip
//! samples and metadata bit-exactly.

use std::io::{BufRead, BufReader, Read, Write};

use super::{Extension, GridBox, GridFunction, Tail};
use crate::error::{LabError, Result};

pub const GF_MAGIC: [u8; 16] = *b"MLPLABGF\0\0\0\0\0\0\0\x01";

const CSV_HEADER: &str = "# box_center, box_half_width, n, points_per_axis, extension";

fn fmt_err(msg: impl Into<String>) -> LabError {
    LabError::Format(msg.into())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| fmt_err(format!("bad number `{s}`")))
}

fn join_point(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(parse_f64).collect()
}

pub(crate) fn extension_token(ext: &Extension) -> String {
    match ext {
        Extension::AnalyticTail(Tail::Log { a, sign, scale }) => {
            format!("analytic-tail:log:a={}:sign={sign:?}:scale={scale:?}", join_point(a).replace(' ', ";"))
        }
        other => other.name().to_string(),
    }
}

pub(crate) fn parse_extension(tok: &str) -> Result<Extension> {
    match tok.trim() {
        "periodic" => Ok(Extension::Periodic),
        "edge-hold" => Ok(Extension::EdgeHold),
        "zero" => Ok(Extension::Zero),
        t if t.starts_with("analytic-tail:log:") => {
            let mut a = None;
            let mut sign = None;
            let mut scale = None;
            for part in t["analytic-tail:log:".len()..].split(':') {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| fmt_err(format!("bad tail parameter `{part}`")))?;
                match k {
                    "a" => a = Some(v.split(';').map(parse_f64).collect::<Result<Vec<_>>>()?),
                    "sign" => sign = Some(parse_f64(v)?),
                    "scale" => scale = Some(parse_f64(v)?),
                    _ => return Err(fmt_err(format!("unknown tail parameter `{k}`"))),
                }
            }
            match (a, sign, scale) {
                (Some(a), Some(sign), Some(scale)) => Ok(Extension::AnalyticTail(Tail::Log { a, sign, scale })),
                _ => Err(fmt_err("incomplete log tail")),
            }
        }
        other => Err(fmt_err(format!("unknown extension `{other}`"))),
    }
}

pub fn write_csv<W: Write>(gf: &GridFunction, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(
        w,
        "# {}, {:?}, {}, {}, {}",
        join_point(gf.grid_box().center()),
        gf.grid_box().half_width(),
        gf.dim(),
        gf.points_per_axis(),
        extension_token(gf.extension())
    )?;
    for v in gf.samples() {
        writeln!(w, "{v:?}")?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<GridFunction> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| fmt_err("empty file"))??;
    if header.trim() != CSV_HEADER {
        return Err(fmt_err("missing grid-function header"));
    }
    let meta = lines.next().ok_or_else(|| fmt_err("missing metadata line"))??;
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| fmt_err("metadata line must start with `#`"))?;
    let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(fmt_err("metadata line needs 5 fields"));
    }
    let center = parse_point(fields[0])?;
    let half_width = parse_f64(fields[1])?;
    let n: usize = fields[2].parse().map_err(|_| fmt_err("bad n"))?;
    let np: usize = fields[3].parse().map_err(|_| fmt_err("bad points_per_axis"))?;
    let extension = parse_extension(fields[4])?;
    if center.len() != n {
        return Err(fmt_err("center dimension does not match n"));
    }
    let mut samples = Vec::with_capacity(np.pow(n as u32));
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_f64(&line)?);
    }
    GridFunction::from_samples(GridBox::new(center, half_width)?, np, samples, extension)
}

fn ext_code(ext: &Extension) -> f64 {
    match ext {
        Extension::Periodic => 0.0,
        Extension::EdgeHold => 1.0,
        Extension::Zero => 2.0,
        Extension::AnalyticTail(Tail::Log { .. }) => 3.0,
    }
}

/// Layout after the magic: `meta_len` (f64), then `meta_len` f64 values
/// `[n, N, half_width, center.., ext_code, sign, scale, a..]`, then samples.
pub fn write_binary<W: Write>(gf: &GridFunction, mut w: W) -> Result<()> {
    let n = gf.dim();
    let mut meta = vec![n as f64, gf.points_per_axis() as f64, gf.grid_box().half_width()];
    meta.extend_from_slice(gf.grid_box().center());
    meta.push(ext_code(gf.extension()));
    match gf.extension() {
        Extension::AnalyticTail(Tail::Log { a, sign, scale }) => {
            meta.push(*sign);
            meta.push(*scale);
            meta.extend_from_slice(a);
        }
        _ => meta.extend(std::iter::repeat_n(0.0, 2 + n)),
    }
    w.write_all(&GF_MAGIC)?;
    w.write_all(&(meta.len() as f64).to_le_bytes())?;
    for v in meta.iter().chain(gf.samples()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<GridFunction> {
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if magic != GF_MAGIC {
        return Err(fmt_err("bad magic"));
    }
    let meta_len = read_f64(&mut r)? as usize;
    if !(3..=64).contains(&meta_len) {
        return Err(fmt_err("bad metadata length"));
    }
    let meta = (0..meta_len).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let n = meta[0] as usize;
    let np = meta[1] as usize;
    if !(1..=2).contains(&n) || meta_len != 3 + n + 1 + 2 + n {
        return Err(fmt_err("inconsistent metadata block"));
    }
    let half_width = meta[2];
    let center = meta[3..3 + n].to_vec();
    let code = meta[3 + n];
    let extension = match code as u32 {
        0 => Extension::Periodic,
        1 => Extension::EdgeHold,
        2 => Extension::Zero,
        3 => Extension::AnalyticTail(Tail::Log {
            sign: meta[4 + n],
            scale: meta[5 + n],
            a: meta[6 + n..6 + 2 * n].to_vec(),
        }),
        _ => return Err(fmt_err("unknown extension code")),
    };
    let count = np
        .checked_pow(n as u32)
        .ok_or_else(|| fmt_err("grid too large"))?;
    let samples = (0..count).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    GridFunction::from_samples(GridBox::new(center, half_width)?, np, samples, extension)
}

/// Reads a grid function from `path`, binary if it starts with the magic
/// bytes and CSV otherwise.
pub fn read_any(path: &std::path::Path) -> Result<GridFunction> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(&GF_MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        read_csv(bytes.as_slice())
    }
}
