//! Plain-text `SUPPORTBODY v1` serialization.
//!
//! ```text
//! SUPPORTBODY v1 lmax=2 axisym=1
//! 0 0 3.5449077018110318e0
//! 1 -1 0.0000000000000000e0
//! ...
//! ```
//! One `l m value` line per coefficient, degree-major, `m` ascending.

use std::fmt::Write as _;
use std::path::Path;

use super::harmonics::{degree_order, harmonic_count, harmonic_index};
use super::support::SupportBody;
use crate::error::{Error, Result};

pub fn write_support_body(body: &SupportBody) -> String {
    let mut out = format!(
        "SUPPORTBODY v1 lmax={} axisym={}\n",
        body.lmax(),
        u8::from(body.is_axisymmetric())
    );
    for (k, c) in body.coeffs().iter().enumerate() {
        let (l, m) = degree_order(k);
        // 17 significant digits round-trip every f64
        writeln!(out, "{l} {m} {c:.16e}").expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_support_body(text: &str) -> Result<SupportBody> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty body file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "SUPPORTBODY" || fields[1] != "v1" {
        return Err(Error::Parse(format!("bad header line: {header:?}")));
    }
    let lmax: usize = fields[2]
        .strip_prefix("lmax=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad lmax field: {:?}", fields[2])))?;
    let axisymmetric = match fields[3] {
        "axisym=0" => false,
        "axisym=1" => true,
        other => return Err(Error::Parse(format!("bad axisym field: {other:?}"))),
    };
    let mut coeffs = vec![0.0; harmonic_count(lmax)];
    for (n, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Parse(format!("bad coefficient line {}: {line:?}", n + 2));
        if parts.len() != 3 {
            return Err(bad());
        }
        let l: usize = parts[0].parse().map_err(|_| bad())?;
        let m: i64 = parts[1].parse().map_err(|_| bad())?;
        let value: f64 = parts[2].parse().map_err(|_| bad())?;
        if l > lmax || m.unsigned_abs() as usize > l {
            return Err(bad());
        }
        coeffs[harmonic_index(l, m)] = value;
    }
    SupportBody::new(lmax, coeffs, axisymmetric)
}

pub fn read_support_body(path: &Path) -> Result<SupportBody> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read body file {}: {e}", path.display())))?;
    parse_support_body(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_body::SphereQuadrature;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let text = write_support_body(&SupportBody::ball(1.0));
        assert!(text.starts_with("SUPPORTBODY v1 lmax=0 axisym=1\n0 0 3.5449077018110318e0"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_support_body("").is_err());
        assert!(parse_support_body("SUPPORTBODY v2 lmax=0 axisym=0\n").is_err());
        assert!(parse_support_body("SUPPORTBODY v1 lmax=0 axisym=0\n1 0 2.0\n").is_err());
        assert!(parse_support_body("SUPPORTBODY v1 lmax=1 axisym=1\n1 1 2.0\n").is_err());
    }

    #[test]
    fn ellipsoid_roundtrip_bit_exact() {
        let q = SphereQuadrature::fibonacci(512);
        let body = SupportBody::ellipsoid(&q, 5, 1.1, 0.9, 1.4);
        assert_eq!(
            parse_support_body(&write_support_body(&body)).unwrap(),
            body
        );
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(coeffs in proptest::collection::vec(-1e3f64..1e3, 9)) {
            let body = SupportBody::new(2, coeffs, false).unwrap();
            prop_assert_eq!(parse_support_body(&write_support_body(&body)).unwrap(), body);
        }
    }
}
