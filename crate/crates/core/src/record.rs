//! Text record for region shapes.
//!
//! One line, a variant keyword followed by space-separated `key=value`
//! fields in a fixed order:
//!
//! ```text
//! ball n=3
//! annulus n=1 N=3
//! rhombus w=4 h=4
//! halfplane-annulus n=0 N=128
//! torus n=8
//! domain delta=0.0625 polygon=0,0;1,0;0.5,0.8660254037844386 marks=0,0;1,0
//! ```
//!
//! Reals are written in Rust's shortest round-trip decimal form, so
//! `parse(format(s)) == s` bit for bit. `marks=` may be empty.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{DomainSpec, Shape};

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Ball { n } => write!(f, "ball n={n}"),
            Shape::Annulus { inner, outer } => write!(f, "annulus n={inner} N={outer}"),
            Shape::Rhombus { w, h } => write!(f, "rhombus w={w} h={h}"),
            Shape::HalfPlaneAnnulus { inner, outer } => write!(f, "halfplane-annulus n={inner} N={outer}"),
            Shape::Torus { n } => write!(f, "torus n={n}"),
            Shape::Domain(d) => write!(
                f,
                "domain delta={} polygon={} marks={}",
                d.delta,
                points(&d.polygon),
                points(&d.marks)
            ),
        }
    }
}

fn points(ps: &[Complex64]) -> String {
    ps.iter().map(|z| format!("{},{}", z.re, z.im)).collect::<Vec<_>>().join(";")
}

fn parse_points(s: &str) -> Result<Vec<Complex64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| Error::parse(format!("point `{pair}` is not `x,y`")))?;
            Ok(Complex64::new(parse_real(x)?, parse_real(y)?))
        })
        .collect()
}

fn parse_real(s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::parse(format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(format!("`{s}` is not finite")));
    }
    Ok(v)
}

/// Splits `key=value` fields and checks they appear exactly as `keys`.
pub(crate) fn fields<'a>(parts: &[&'a str], keys: &[&str]) -> Result<Vec<&'a str>> {
    if parts.len() != keys.len() {
        return Err(Error::parse(format!("expected fields {keys:?}, got {} fields", parts.len())));
    }
    parts
        .iter()
        .zip(keys)
        .map(|(part, key)| {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("field `{part}` is not key=value")))?;
            if k != *key {
                return Err(Error::parse(format!("expected key `{key}`, found `{k}`")));
            }
            Ok(v)
        })
        .collect()
}

pub(crate) fn parse_u32(s: &str) -> Result<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::parse(format!("`{s}` is not a nonnegative integer")));
    }
    s.parse().map_err(|_| Error::parse(format!("`{s}` is out of range")))
}

/// Largest radius or side accepted from text, keeping site counts sane.
pub const MAX_EXTENT: u32 = 1 << 14;

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Shape> {
        let parts: Vec<&str> = s.split(' ').collect();
        let (kind, rest) = parts.split_first().ok_or_else(|| Error::parse("empty record"))?;
        let shape = match *kind {
            "ball" => {
                let v = fields(rest, &["n"])?;
                Shape::Ball { n: parse_u32(v[0])? }
            }
            "annulus" | "halfplane-annulus" => {
                let v = fields(rest, &["n", "N"])?;
                let (inner, outer) = (parse_u32(v[0])?, parse_u32(v[1])?);
                if inner >= outer {
                    return Err(Error::parse("annulus needs n < N"));
                }
                if *kind == "annulus" {
                    Shape::Annulus { inner, outer }
                } else {
                    Shape::HalfPlaneAnnulus { inner, outer }
                }
            }
            "rhombus" => {
                let v = fields(rest, &["w", "h"])?;
                Shape::Rhombus { w: parse_u32(v[0])?, h: parse_u32(v[1])? }
            }
            "torus" => {
                let v = fields(rest, &["n"])?;
                let n = parse_u32(v[0])?;
                if n == 0 {
                    return Err(Error::parse("torus needs n > 0"));
                }
                Shape::Torus { n }
            }
            "domain" => {
                let v = fields(rest, &["delta", "polygon", "marks"])?;
                let delta = parse_real(v[0])?;
                if delta <= 0.0 {
                    return Err(Error::parse("delta must be positive"));
                }
                Shape::Domain(DomainSpec { delta, polygon: parse_points(v[1])?, marks: parse_points(v[2])? })
            }
            other => return Err(Error::parse(format!("unknown region kind `{other}`"))),
        };
        let too_big = match &shape {
            Shape::Ball { n } | Shape::Torus { n } => *n > MAX_EXTENT,
            Shape::Annulus { outer, .. } | Shape::HalfPlaneAnnulus { outer, .. } => *outer > MAX_EXTENT,
            Shape::Rhombus { w, h } => *w > MAX_EXTENT || *h > MAX_EXTENT,
            Shape::Domain(_) => false,
        };
        if too_big {
            return Err(Error::Capacity(format!("region extent above {MAX_EXTENT}")));
        }
        Ok(shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::unit_triangle;

    #[test]
    fn round_trips() {
        let shapes = [
            Shape::Ball { n: 3 },
            Shape::Annulus { inner: 1, outer: 3 },
            Shape::Rhombus { w: 4, h: 0 },
            Shape::HalfPlaneAnnulus { inner: 0, outer: 128 },
            Shape::Torus { n: 8 },
            Shape::Domain(DomainSpec { polygon: unit_triangle(), delta: 1.0 / 3.0, marks: unit_triangle() }),
            Shape::Domain(DomainSpec { polygon: unit_triangle(), delta: 0.1, marks: vec![] }),
        ];
        for s in shapes {
            let text = s.to_string();
            assert_eq!(text.parse::<Shape>().unwrap(), s, "{text}");
        }
    }

    #[test]
    fn exact_text() {
        assert_eq!(Shape::Annulus { inner: 1, outer: 3 }.to_string(), "annulus n=1 N=3");
        assert_eq!(
            "domain delta=0.5 polygon=0,0;1,0;0,1 marks=".parse::<Shape>().unwrap().to_string(),
            "domain delta=0.5 polygon=0,0;1,0;0,1 marks="
        );
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "ball",
            "ball n=-1",
            "ball m=3",
            "ball n=3 extra=1",
            "annulus n=3 N=3",
            "torus n=0",
            "hexagon n=2",
            "domain delta=0 polygon=0,0 marks=",
            "domain delta=nan polygon=0,0 marks=",
            "domain delta=1 polygon=0;1 marks=",
            "ball n=99999999999",
        ] {
            assert!(bad.parse::<Shape>().is_err(), "{bad:?}");
        }
    }
}
