//! One-line textual descriptors for modular functions, norm specifications,
//! regions, weights and boundary traces.
//!
//! * modular functions: `power:p=2`, `plaplace:p=2`, `zygmund:p=2,alpha=1`,
//!   `table:<path>` (two-column text, strictly increasing t);
//! * norm specs: `lebesgue:q=2`, `lorentz:q=1.2,s=2`, `marcinkiewicz:q=1.5`,
//!   `morrey:q=1.5,theta=2.5`, `lorentz-morrey:t=1.5,q=1.2,theta=2.5`,
//!   `marcinkiewicz-morrey:t=1.5,theta=2.5`, `llogl`, `llogl:theta=2`;
//!   append `,averaged` and/or `,bracketed`;
//! * regions: `all`, `ball:cx,cy[,cz],r`, `box:lo.../hi...`,
//!   `annulus:cx,cy[,cz],rin,rout`;
//! * weights: `const:c` or `field:<path>`;
//! * boundary traces: `zero`, `affine:a,b[,c][;offset]`, `field:<path>`.

use crate::fieldfile;
use crate::{LabError, Result};
use orlicz_core::grid::{Ball, Grid, Region};
use orlicz_core::norms::{NormFamily, NormSpec};
use orlicz_core::solver::{BoundaryTrace, Omega};
use orlicz_core::young::YoungFunction;
use std::collections::BTreeMap;
use std::path::Path;

fn parse_kv(body: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                map.insert(part.to_string(), String::new());
            }
        }
    }
    Ok(map)
}

fn need_f64(map: &BTreeMap<String, String>, key: &str, what: &str) -> Result<f64> {
    map.get(key)
        .ok_or_else(|| LabError::Parse(format!("{what} needs `{key}=`")))?
        .parse()
        .map_err(|_| LabError::Parse(format!("{what}: `{key}` is not a number")))
}

/// Parse a modular-function descriptor; `table:` paths resolve relative to
/// `base`.
pub fn parse_modular(text: &str, base: &Path) -> Result<YoungFunction> {
    let (kind, body) = text.split_once(':').unwrap_or((text, ""));
    match kind.trim() {
        "power" => {
            let map = parse_kv(body)?;
            Ok(YoungFunction::power(need_f64(&map, "p", "power")?)?)
        }
        "plaplace" => {
            let map = parse_kv(body)?;
            Ok(YoungFunction::plaplace(need_f64(&map, "p", "plaplace")?)?)
        }
        "zygmund" => {
            let map = parse_kv(body)?;
            Ok(YoungFunction::zygmund(
                need_f64(&map, "p", "zygmund")?,
                need_f64(&map, "alpha", "zygmund")?,
            )?)
        }
        "table" => {
            let path = base.join(body.trim());
            let text = std::fs::read_to_string(&path)?;
            let mut pts = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut it = line.split_whitespace();
                let t: f64 = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| LabError::Parse(format!("table line {}: bad t", lineno + 1)))?;
                let g: f64 = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| LabError::Parse(format!("table line {}: bad g", lineno + 1)))?;
                pts.push((t, g));
            }
            Ok(YoungFunction::from_table(&pts)?)
        }
        other => Err(LabError::Parse(format!("unknown modular kind `{other}`"))),
    }
}

fn parse_second_index(v: &str) -> Result<f64> {
    if v == "inf" || v == "infinity" {
        Ok(f64::INFINITY)
    } else {
        v.parse().map_err(|_| LabError::Parse(format!("bad index `{v}`")))
    }
}

/// Parse a compact norm-spec string.
pub fn parse_norm_spec(text: &str) -> Result<NormSpec> {
    let (kind, body) = text.split_once(':').unwrap_or((text, ""));
    let map = parse_kv(body)?;
    let averaged = map.contains_key("averaged");
    let bracketed = map.contains_key("bracketed");
    let family = match kind.trim() {
        "lebesgue" => NormFamily::Lebesgue { q: need_f64(&map, "q", "lebesgue")? },
        "lorentz" => NormFamily::Lorentz {
            q: need_f64(&map, "q", "lorentz")?,
            s: parse_second_index(
                map.get("s").ok_or_else(|| LabError::Parse("lorentz needs `s=`".into()))?,
            )?,
        },
        "marcinkiewicz" => NormFamily::Marcinkiewicz { q: need_f64(&map, "q", "marcinkiewicz")? },
        "morrey" => NormFamily::Morrey {
            q: need_f64(&map, "q", "morrey")?,
            theta: need_f64(&map, "theta", "morrey")?,
        },
        "lorentz-morrey" => NormFamily::LorentzMorrey {
            t: need_f64(&map, "t", "lorentz-morrey")?,
            q: need_f64(&map, "q", "lorentz-morrey")?,
            theta: need_f64(&map, "theta", "lorentz-morrey")?,
        },
        "marcinkiewicz-morrey" => NormFamily::MarcinkiewiczMorrey {
            t: need_f64(&map, "t", "marcinkiewicz-morrey")?,
            theta: need_f64(&map, "theta", "marcinkiewicz-morrey")?,
        },
        "llogl" => match map.get("theta") {
            Some(v) => NormFamily::LlogLTheta {
                theta: v.parse().map_err(|_| LabError::Parse("bad theta".into()))?,
            },
            None => NormFamily::LlogL,
        },
        other => return Err(LabError::Parse(format!("unknown norm family `{other}`"))),
    };
    Ok(NormSpec { family, averaged, bracketed })
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| LabError::Parse(format!("bad number `{v}`"))))
        .collect()
}

/// Parse a region descriptor for a given dimension.
pub fn parse_region(text: &str, n: usize) -> Result<Region> {
    let (kind, body) = text.split_once(':').unwrap_or((text, ""));
    match kind.trim() {
        "all" => Ok(Region::All),
        "ball" => {
            let vals = parse_floats(body)?;
            if vals.len() != n + 1 {
                return Err(LabError::Parse(format!("ball needs {} numbers", n + 1)));
            }
            Ok(Region::Ball(Ball::new(&vals[..n], vals[n])?))
        }
        "box" => {
            let (lo_s, hi_s) = body
                .split_once('/')
                .ok_or_else(|| LabError::Parse("box needs lo.../hi...".into()))?;
            let lo_v = parse_floats(lo_s)?;
            let hi_v = parse_floats(hi_s)?;
            if lo_v.len() != n || hi_v.len() != n {
                return Err(LabError::Parse(format!("box corners need {n} numbers each")));
            }
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            lo[..n].copy_from_slice(&lo_v);
            hi[..n].copy_from_slice(&hi_v);
            Ok(Region::Box { lo, hi })
        }
        "annulus" => {
            let vals = parse_floats(body)?;
            if vals.len() != n + 2 {
                return Err(LabError::Parse(format!("annulus needs {} numbers", n + 2)));
            }
            let mut center = [0.0; 3];
            center[..n].copy_from_slice(&vals[..n]);
            Ok(Region::Annulus { center, r_inner: vals[n], r_outer: vals[n + 1] })
        }
        other => Err(LabError::Parse(format!("unknown region `{other}`"))),
    }
}

/// Parse a weight descriptor.
pub fn parse_omega(text: &str, base: &Path, grid: &Grid) -> Result<Omega> {
    let (kind, body) = text.split_once(':').unwrap_or((text, ""));
    match kind.trim() {
        "const" => {
            let c: f64 =
                body.trim().parse().map_err(|_| LabError::Parse("bad constant weight".into()))?;
            Ok(Omega::Const(c))
        }
        "field" => {
            let f = fieldfile::read_field(&base.join(body.trim()))?;
            let f = if f.grid() == grid { f } else { f.resample(grid)? };
            Ok(Omega::Field(f))
        }
        other => Err(LabError::Parse(format!("unknown weight `{other}`"))),
    }
}

/// Parse a boundary-trace descriptor.
pub fn parse_boundary(text: &str, base: &Path, grid: &Grid) -> Result<BoundaryTrace> {
    let (kind, body) = text.split_once(':').unwrap_or((text, ""));
    match kind.trim() {
        "zero" => Ok(BoundaryTrace::Zero),
        "affine" => {
            let (coef_s, offset_s) = match body.split_once(';') {
                Some((a, b)) => (a, b.trim().parse::<f64>().map_err(|_| {
                    LabError::Parse("bad affine offset".into())
                })?),
                None => (body, 0.0),
            };
            let vals = parse_floats(coef_s)?;
            if vals.len() != grid.dim() {
                return Err(LabError::Parse(format!(
                    "affine trace needs {} coefficients",
                    grid.dim()
                )));
            }
            let mut coef = [0.0; 3];
            coef[..vals.len()].copy_from_slice(&vals);
            Ok(BoundaryTrace::Affine { coef, offset: offset_s })
        }
        "field" => {
            let f = fieldfile::read_field(&base.join(body.trim()))?;
            Ok(BoundaryTrace::Nodal(if f.grid() == grid { f } else { f.resample(grid)? }))
        }
        other => Err(LabError::Parse(format!("unknown boundary trace `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modular_round_trip() {
        let base = Path::new(".");
        let f = parse_modular("power:p=2", base).unwrap();
        assert!((f.big_g(3.0) - 9.0).abs() < 1e-12);
        let z = parse_modular("zygmund:p=2,alpha=1", base).unwrap();
        assert!(z.big_g(5.0) > 25.0);
        assert!(parse_modular("power:p=0.5", base).is_err());
        assert!(parse_modular("nope:p=2", base).is_err());
    }

    #[test]
    fn norm_specs_parse() {
        let s = parse_norm_spec("lorentz:q=1.2,s=2").unwrap();
        assert_eq!(s.family, NormFamily::Lorentz { q: 1.2, s: 2.0 });
        let s = parse_norm_spec("lorentz:q=1.2,s=inf,averaged").unwrap();
        assert!(s.averaged);
        assert!(matches!(s.family, NormFamily::Lorentz { s, .. } if s.is_infinite()));
        let s = parse_norm_spec("morrey:q=1.5,theta=2.5,bracketed").unwrap();
        assert!(s.bracketed);
        assert!(parse_norm_spec("llogl").is_ok());
        assert!(parse_norm_spec("llogl:theta=2").is_ok());
        assert!(parse_norm_spec("weird:q=1").is_err());
    }

    #[test]
    fn regions_parse() {
        assert!(matches!(parse_region("all", 2).unwrap(), Region::All));
        assert!(matches!(parse_region("ball:0,0,0.5", 2).unwrap(), Region::Ball(_)));
        assert!(matches!(parse_region("box:-1,-1/1,1", 2).unwrap(), Region::Box { .. }));
        assert!(matches!(parse_region("annulus:0,0,0.1,0.4", 2).unwrap(), Region::Annulus { .. }));
        assert!(parse_region("ball:0,0", 2).is_err());
    }
}
