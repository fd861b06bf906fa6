//! Field, table and point-set files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use tkwfp::engine::{ConvergenceRow, DecayReport};
use tkwfp::oracle::FieldSnapshot;
use tkwfp::scenarios::{Signal, Source};

pub const FIELD_MAGIC: &[u8; 4] = b"TKWF";
pub const FIELD_VERSION: u32 = 1;

/// Twelve significant digits.
fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV with header `x,y,z,u`.
pub fn write_field_csv(path: &Path, snap: &FieldSnapshot) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(f, "x,y,z,u")?;
    for (p, u) in snap.targets.iter().zip(&snap.values) {
        writeln!(f, "{},{},{},{}", num(p[0]), num(p[1]), num(p[2]), num(*u))?;
    }
    f.flush()?;
    Ok(())
}

/// `TKWF`, version `u32`, then `t: f64`, `n: u64` and `n` values, all little-endian.
pub fn encode_field(snap: &FieldSnapshot) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * snap.values.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.extend_from_slice(&snap.t.to_le_bytes());
    out.extend_from_slice(&(snap.values.len() as u64).to_le_bytes());
    for v in &snap.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_field`]: `(t, values)`.
pub fn decode_field(bytes: &[u8]) -> Result<(f64, Vec<f64>)> {
    if bytes.len() < 24 || &bytes[..4] != FIELD_MAGIC {
        bail!("not a TKWF field file");
    }
    let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().expect("8 bytes") };
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FIELD_VERSION {
        bail!("unsupported field format version {version}");
    }
    let t = f64::from_le_bytes(word(8));
    let n = u64::from_le_bytes(word(16)) as usize;
    if bytes.len() != 24 + 8 * n {
        bail!("field file holds {} bytes, expected {}", bytes.len(), 24 + 8 * n);
    }
    let values = (0..n).map(|i| f64::from_le_bytes(word(24 + 8 * i))).collect();
    Ok((t, values))
}

pub fn write_field_bin(path: &Path, snap: &FieldSnapshot) -> Result<()> {
    fs::write(path, encode_field(snap)).with_context(|| format!("writing {}", path.display()))
}

/// CSV with header `dt,abs_err,rel_err,wall_seconds`.
pub fn write_error_table(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut s = String::from("dt,abs_err,rel_err,wall_seconds\n");
    for r in rows {
        s += &format!("{},{},{},{}\n", num(r.dt), num(r.abs_err), opt(r.rel_err), num(r.wall_seconds));
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn write_decay_csv(path: &Path, report: &DecayReport) -> Result<()> {
    let mut s = String::from("bin,kappa,max_abs,bound\n");
    for r in &report.rows {
        s += &format!("{},{},{},{}\n", r.bin, num(r.kappa), num(r.max_abs), num(r.bound));
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
        // header rows start with a non-numeric field
        .filter(|(_, f): &(usize, Vec<&str>)| f[0].parse::<f64>().is_ok())
}

fn number(field: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .with_context(|| format!("line {line}: `{field}` is not a number"))
}

/// Points as `x,y,z` rows; an optional header row is skipped.
pub fn read_points_csv(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (line, f) in data_lines(&text) {
        if f.len() < 3 {
            bail!("{}: line {line}: expected x,y,z", path.display());
        }
        out.push([number(f[0], line)?, number(f[1], line)?, number(f[2], line)?]);
    }
    Ok(out)
}

/// Sources as `x,y,z,family,amplitude,t0,p1[,p2]` rows.
///
/// `gaussian`: `p1` is the width parameter `mu`. `erfsine`: `p1` is the slope, `p2` the
/// angular frequency.
pub fn read_sources_csv(path: &Path) -> Result<Vec<Source>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (line, f) in data_lines(&text) {
        if f.len() < 7 {
            bail!("{}: line {line}: expected x,y,z,family,amplitude,t0,p1[,p2]", path.display());
        }
        let position = [number(f[0], line)?, number(f[1], line)?, number(f[2], line)?];
        let amplitude = number(f[4], line)?;
        let t0 = number(f[5], line)?;
        let p1 = number(f[6], line)?;
        let signal = match f[3] {
            "gaussian" => Signal::Gaussian { amplitude, mu: p1, t0 },
            "erfsine" => {
                let omega = number(f.get(7).copied().unwrap_or(""), line)?;
                Signal::ErfSine {
                    amplitude,
                    slope: p1,
                    t0,
                    omega,
                }
            }
            other => bail!("{}: line {line}: unknown signal family `{other}`", path.display()),
        };
        out.push(Source { position, signal });
    }
    if out.is_empty() {
        bail!("{}: no sources", path.display());
    }
    Ok(out)
}
