//! Plain-text site files.
//!
//! ```text
//! # optional comment lines
//! d N
//! x_1 ... x_d [w]
//! ```
//!
//! The weight column is optional but must be present on all lines or none.
//! Floats are written with 17 significant digits so they parse back exactly.

use std::io::{BufRead, Write};

use crate::diagram::SiteSet;
use crate::Error;

/// Writes sites, with weights if `with_weights` is set.
pub fn write_sites<W: Write>(
    mut out: W,
    sites: &SiteSet,
    with_weights: bool,
    comments: &[String],
) -> Result<(), Error> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{} {}", sites.dim(), sites.len())?;
    for i in 0..sites.len() {
        let mut line = sites
            .point(i)
            .iter()
            .map(|x| format!("{x:.16e}"))
            .collect::<Vec<_>>()
            .join(" ");
        if with_weights {
            line.push_str(&format!(" {:.16e}", sites.weight(i)));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads a site file; missing weights are zero.
pub fn read_sites<R: BufRead>(input: R) -> Result<SiteSet, Error> {
    let mut header: Option<(usize, usize)> = None;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut has_weights: Option<bool> = None;
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let Some((dim, n)) = header else {
            if fields.len() != 2 {
                return Err(parse_err(lineno, "expected header 'd N'"));
            }
            let dim = fields[0].parse().map_err(|_| parse_err(lineno, "bad dimension"))?;
            let n = fields[1].parse().map_err(|_| parse_err(lineno, "bad site count"))?;
            header = Some((dim, n));
            continue;
        };
        if weights.len() == n {
            return Err(parse_err(lineno, format!("more than {n} site lines")));
        }
        let w = match fields.len() {
            l if l == dim => false,
            l if l == dim + 1 => true,
            l => return Err(parse_err(lineno, format!("expected {dim} or {} values, found {l}", dim + 1))),
        };
        if *has_weights.get_or_insert(w) != w {
            return Err(parse_err(lineno, "weight column must be on every line or none"));
        }
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| parse_err(lineno, format!("bad number '{f}'")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, "non-finite value"));
            }
        }
        let vals: Vec<f64> = fields.iter().map(|f| f.parse().unwrap()).collect();
        points.extend_from_slice(&vals[..dim]);
        weights.push(if w { vals[dim] } else { 0.0 });
    }
    let Some((dim, n)) = header else {
        return Err(parse_err(0, "missing header"));
    };
    if weights.len() != n {
        return Err(parse_err(0, format!("header announces {n} sites, found {}", weights.len())));
    }
    SiteSet::with_weights(dim, points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let sites = SiteSet::with_weights(3, vec![0.1, 1.0 / 3.0, 2e-300, 0.7, 0.123456789012345678, 1.0], vec![0.25, -1e-17])
            .unwrap();
        let mut buf = Vec::new();
        write_sites(&mut buf, &sites, true, &["seed = 4".into()]).unwrap();
        let back = read_sites(buf.as_slice()).unwrap();
        assert_eq!(back, sites);

        let mut buf = Vec::new();
        write_sites(&mut buf, &sites, false, &[]).unwrap();
        let back = read_sites(buf.as_slice()).unwrap();
        assert_eq!(back.points(), sites.points());
        assert!(back.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn rejects_malformed_files() {
        for text in [
            "",
            "2\n0.1 0.2\n",
            "2 2\n0.1 0.2\n",
            "2 1\n0.1 0.2 0.3 0.4\n",
            "2 2\n0.1 0.2\n0.1 0.2 0.5\n",
            "2 1\n0.1 abc\n",
            "2 1\n0.1 NaN\n",
            "2 1\n0.1 0.2\n0.3 0.4\n",
        ] {
            assert!(read_sites(text.as_bytes()).is_err(), "{text:?}");
        }
    }

    #[test]
    fn parse_error_reports_line() {
        let err = read_sites("# c\n2 1\n0.1 x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
