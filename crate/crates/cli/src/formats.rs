//! Plain-text formats: trace and spectrum CSVs, orbit logs, and the small
//! argument grammars (`x,y,s`, time lists, energy grids).

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use supermix_core::schrodinger::{Localization, PotentialTrace};
use supermix_core::Error as CoreError;

pub fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("csv row");
    }
    w.into_inner().expect("csv flush")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: i64,
    #[serde(rename = "V")]
    pub v: f64,
}

pub fn trace_csv(t: &PotentialTrace) -> Vec<u8> {
    let w = t.window as i64;
    csv_bytes((-w..=w).map(|n| TraceRow { n, v: t.at(n) }))
}

/// Reads `n,V` rows. The indices must run over `−W..=W` without gaps, in
/// any order.
pub fn parse_trace(text: &str, provenance: &str) -> Result<PotentialTrace, String> {
    let mut rows: Vec<TraceRow> = csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| format!("trace: {e}"))?;
    rows.sort_by_key(|r| r.n);
    let w = rows.len() / 2;
    if rows.len() % 2 == 0 || rows.iter().enumerate().any(|(i, r)| r.n != i as i64 - w as i64) {
        return Err("trace: indices must cover -W..=W exactly once".into());
    }
    PotentialTrace::from_values(rows.into_iter().map(|r| r.v).collect(), provenance).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub index: usize,
    pub eigenvalue: f64,
    #[serde(rename = "IPR")]
    pub ipr: f64,
    pub decay_rate: f64,
    pub edge_mass: f64,
}

pub fn spectrum_rows(eigenvalues: &[f64], loc: &[Localization]) -> Vec<SpectrumRow> {
    eigenvalues
        .iter()
        .zip(loc)
        .enumerate()
        .map(|(index, (&eigenvalue, l))| SpectrumRow {
            index,
            eigenvalue,
            ipr: l.ipr,
            decay_rate: l.decay_rate,
            edge_mass: l.edge_mass,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    pub t: String,
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub distance: f64,
    pub flag: String,
}

/// `x,y,s`.
pub fn parse_point(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("point `{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok((x, y, z)),
        _ => Err(format!("point `{s}`: expected x,y,s")),
    }
}

/// One requested orbit time: exact when written as an integer.
#[derive(Clone, Debug, PartialEq)]
pub enum OrbitTime {
    Integer(BigInt),
    Real(f64),
}

impl std::fmt::Display for OrbitTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrbitTime::Integer(t) => write!(f, "{t}"),
            OrbitTime::Real(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimeSpec {
    List(Vec<OrbitTime>),
    /// The recurrence times of the first so many levels.
    Auto(usize),
}

pub fn parse_times(s: &str) -> Result<TimeSpec, String> {
    if let Some(rest) = s.strip_prefix("auto") {
        let levels = match rest.strip_prefix(':') {
            Some(l) => l.parse().map_err(|e| format!("times `{s}`: {e}"))?,
            None if rest.is_empty() => usize::MAX,
            None => return Err(format!("times `{s}`: expected auto or auto:<levels>")),
        };
        return Ok(TimeSpec::Auto(levels));
    }
    s.split(',')
        .map(|p| {
            let p = p.trim();
            if let Ok(b) = p.parse::<BigInt>() {
                return Ok(OrbitTime::Integer(b));
            }
            match p.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(OrbitTime::Real(v)),
                _ => Err(format!("times: `{p}` is not a number")),
            }
        })
        .collect::<Result<_, _>>()
        .map(TimeSpec::List)
}

/// Comma list, or `lo:hi:count` for an evenly spaced grid.
pub fn parse_energies(s: &str) -> Result<Vec<f64>, String> {
    let bad = |e: &dyn std::fmt::Display| format!("energies `{s}`: {e}");
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|e| bad(&e))?;
        let hi: f64 = parts[1].trim().parse().map_err(|e| bad(&e))?;
        let n: usize = parts[2].trim().parse().map_err(|e| bad(&e))?;
        if n == 0 || !(lo <= hi) {
            return Err(bad(&"need lo <= hi and count >= 1"));
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        return Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect());
    }
    if parts.len() != 1 {
        return Err(bad(&"expected a comma list or lo:hi:count"));
    }
    s.split(',')
        .map(|p| match p.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(bad(&"non-finite energy")),
            Err(e) => Err(bad(&e)),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Candidates {
    Auto,
    List(Vec<usize>),
}

pub fn parse_candidates(s: &str) -> Result<Candidates, String> {
    if s == "auto" {
        return Ok(Candidates::Auto);
    }
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("candidates `{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.contains(&0) {
        return Err(format!("candidates `{s}`: periods must be positive"));
    }
    Ok(Candidates::List(v))
}

/// Maps core errors onto the CLI exit codes.
pub fn exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::PrecisionInsufficient(_) => 4,
        _ => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let t = PotentialTrace::from_values(vec![0.5, -1.25, 3.0, 1e-300, 2.0], "t").unwrap();
        let text = String::from_utf8(trace_csv(&t)).unwrap();
        assert!(text.starts_with("n,V\n-2,0.5\n"));
        let back = parse_trace(&text, "t").unwrap();
        assert_eq!(back.samples, t.samples);
        assert!(parse_trace("n,V\n0,1\n2,1\n-1,1\n", "t").is_err());
        assert!(parse_trace("n,V\n0,1\n1,1\n", "t").is_err());
    }

    #[test]
    fn grammars() {
        assert_eq!(parse_point("0.1, 0.2,0").unwrap(), (0.1, 0.2, 0.0));
        assert!(parse_point("0.1,0.2").is_err());
        assert_eq!(parse_times("auto:3").unwrap(), TimeSpec::Auto(3));
        assert_eq!(parse_times("auto").unwrap(), TimeSpec::Auto(usize::MAX));
        assert_eq!(
            parse_times("1,2.5,123456789012345678901234567890").unwrap(),
            TimeSpec::List(vec![
                OrbitTime::Integer(1.into()),
                OrbitTime::Real(2.5),
                OrbitTime::Integer("123456789012345678901234567890".parse().unwrap()),
            ])
        );
        assert!(parse_times("1,x").is_err());
        assert_eq!(parse_energies("-1:1:5").unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(parse_energies("0.5,2").unwrap(), vec![0.5, 2.0]);
        assert!(parse_energies("1:0:3").is_err());
        assert!(parse_energies("1:2").is_err());
        assert_eq!(parse_candidates("auto").unwrap(), Candidates::Auto);
        assert_eq!(parse_candidates("4,8").unwrap(), Candidates::List(vec![4, 8]));
        assert!(parse_candidates("0").is_err());
    }
}
