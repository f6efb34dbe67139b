//! Text descriptors for maps, domains and points.
//!
//! A descriptor is `kind[:key=value]...`; vector values are comma separated
//! and matrix rows are separated by `/`. Maps compose with `*`, outer first:
//! `linear:diag=2,1,1*stretch:a=1` is `x ↦ L(|x| x)`.
//!
//! Maps: `identity`, `stretch:a=A`, `linear:diag=D1,..,Dn`,
//! `linear:rows=R1/R2/..`.
//!
//! Domains: `ball[:n=N][:r=R][:c=C]`, `cube[:n=N][:s=S][:c=C]`,
//! `stretch-image[:n=N]:a=A`, `grid:file=PATH` (JSON-encoded grid mask), and
//! the aliases `square` (unit square), `disk`/`ball2`, `ball3` (unit balls)
//! and `qcube[:n=N]` (the cube `{|x_k| < √2/2}`).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::domains::{Domain, GridMask};
use crate::qc_maps::QcMap;
use crate::{Error, Result};

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

/// Splits `kind:k=v:k=v` into the kind and its key/value pairs.
fn split_descriptor(desc: &str) -> Result<(String, BTreeMap<String, String>)> {
    let mut parts = desc.trim().split(':');
    let kind = parts.next().unwrap_or_default().trim().to_ascii_lowercase();
    if kind.is_empty() {
        return parse_err(format!("empty descriptor '{desc}'"));
    }
    let mut keys = BTreeMap::new();
    for part in parts {
        let Some((k, v)) = part.split_once('=') else {
            return parse_err(format!("expected key=value in '{desc}', got '{part}'"));
        };
        if keys.insert(k.trim().to_ascii_lowercase(), v.trim().to_string()).is_some() {
            return parse_err(format!("key '{}' repeated in '{desc}'", k.trim()));
        }
    }
    Ok((kind, keys))
}

pub fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse(format!("'{s}' is not a number")))?;
    if !v.is_finite() {
        return parse_err(format!("'{s}' is not finite"));
    }
    Ok(v)
}

/// Comma-separated coordinates.
pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

fn take_usize(keys: &mut BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    keys.remove(key)
        .map(|v| v.parse::<usize>().map_err(|_| Error::Parse(format!("{key}={v} is not a non-negative integer"))))
        .transpose()
}

fn take_f64(keys: &mut BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    keys.remove(key).map(|v| parse_f64(&v)).transpose()
}

fn finish(kind: &str, keys: BTreeMap<String, String>) -> Result<()> {
    if let Some(k) = keys.keys().next() {
        return parse_err(format!("unknown key '{k}' for '{kind}'"));
    }
    Ok(())
}

fn resolve_dim(kind: &str, given: Option<usize>, default: Option<usize>) -> Result<usize> {
    match (given, default) {
        (Some(a), Some(b)) if a != b => parse_err(format!("'{kind}' has n={a} but the command uses n={b}")),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => parse_err(format!("'{kind}' needs a dimension (n=...)")),
    }
}

/// Parses a map descriptor in dimension `n`.
pub fn parse_map(desc: &str, n: usize) -> Result<QcMap> {
    if let Some((outer, inner)) = desc.split_once('*') {
        return QcMap::compose(parse_map(outer, n)?, parse_map(inner, n)?);
    }
    let (kind, mut keys) = split_descriptor(desc)?;
    let map = match kind.as_str() {
        "identity" | "id" => QcMap::identity(n),
        "stretch" | "radial" => {
            let a = take_f64(&mut keys, "a")?.ok_or_else(|| Error::Parse("stretch needs a=...".into()))?;
            QcMap::stretch(n, a)?
        }
        "linear" => match (keys.remove("diag"), keys.remove("rows")) {
            (Some(d), None) => {
                let diag = parse_point(&d)?;
                if diag.len() != n {
                    return parse_err(format!("diag has {} entries, expected {n}", diag.len()));
                }
                QcMap::diagonal(&diag)?
            }
            (None, Some(r)) => {
                let rows: Vec<Vec<f64>> = r.split('/').map(parse_point).collect::<Result<_>>()?;
                if rows.len() != n || rows.iter().any(|row| row.len() != n) {
                    return parse_err(format!("rows must form a {n}x{n} matrix"));
                }
                QcMap::linear(&DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))?
            }
            _ => return parse_err("linear needs exactly one of diag=... or rows=..."),
        },
        other => return parse_err(format!("unknown map kind '{other}'")),
    };
    finish(&kind, keys)?;
    Ok(map)
}

/// Parses a domain descriptor; `n` is the dimension implied by the command,
/// if any.
pub fn parse_domain(desc: &str, n: Option<usize>) -> Result<Domain> {
    let (kind, mut keys) = split_descriptor(desc)?;
    let given = take_usize(&mut keys, "n")?;
    let domain = match kind.as_str() {
        "square" => {
            resolve_dim(&kind, given.or(Some(2)), n)?;
            Domain::unit_square()
        }
        "disk" | "ball2" => {
            resolve_dim(&kind, given.or(Some(2)), n)?;
            Domain::unit_ball(2)
        }
        "ball3" => {
            resolve_dim(&kind, given.or(Some(3)), n)?;
            Domain::unit_ball(3)
        }
        "qcube" => Domain::cube_q(resolve_dim(&kind, given, n)?),
        "ball" | "cube" => {
            let center = keys.remove("c").map(|c| parse_point(&c)).transpose()?;
            let dim = resolve_dim(&kind, given.or(center.as_ref().map(Vec::len)), n)?;
            let center = center.unwrap_or_else(|| vec![0.0; dim]);
            if center.len() != dim {
                return parse_err(format!("centre has {} coordinates, expected {dim}", center.len()));
            }
            if kind == "ball" {
                Domain::ball(center, take_f64(&mut keys, "r")?.unwrap_or(1.0))?
            } else {
                Domain::cube(center, take_f64(&mut keys, "s")?.unwrap_or(1.0))?
            }
        }
        "stretch-image" => {
            let a = take_f64(&mut keys, "a")?.ok_or_else(|| Error::Parse("stretch-image needs a=...".into()))?;
            Domain::stretch_image(resolve_dim(&kind, given, n)?, a)?
        }
        "grid" => {
            let path = keys.remove("file").ok_or_else(|| Error::Parse("grid needs file=...".into()))?;
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Parse(format!("cannot read {path}: {e}")))?;
            let raw: GridMask =
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{path} is not a grid mask: {e}")))?;
            let g = GridMask::new(raw.origin, raw.h, raw.shape, raw.mask)?;
            resolve_dim(&kind, Some(g.dim()), n.or(given))?;
            Domain::GridMask(g)
        }
        other => return parse_err(format!("unknown domain kind '{other}'")),
    };
    finish(&kind, keys)?;
    Ok(domain)
}
