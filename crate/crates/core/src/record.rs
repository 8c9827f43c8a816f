//! The sweep CSV schema.
//!
//! One header line, then one row per `(source, parameter point, seed)`.
//! Floats are written in shortest round-trip decimal form; missing values are
//! the literal `nan`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::Decomposition;

pub const CSV_HEADER: &str =
    "source,lambda0,gamma,alpha,sigma0_sq,kappa,d,n,p,trials,seed,bias_sq,var_clean,var_noise,risk";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Analytic,
    Quadrature,
    Mc,
    Estimator,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Analytic => "analytic",
            Source::Quadrature => "quadrature",
            Source::Mc => "mc",
            Source::Estimator => "estimator",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Source::Analytic),
            "quadrature" => Ok(Source::Quadrature),
            "mc" => Ok(Source::Mc),
            "estimator" => Ok(Source::Estimator),
            other => Err(Error::Config(format!("unknown source '{other}'"))),
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub source: Source,
    pub lambda0: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub sigma0_sq: f64,
    /// `NaN` when the q/d variant is not in use.
    pub kappa: f64,
    pub d: u64,
    pub n: u64,
    pub p: u64,
    pub trials: u64,
    pub seed: u64,
    pub bias_sq: f64,
    pub var_clean: f64,
    pub var_noise: f64,
    pub risk: f64,
}

impl SweepRecord {
    /// A row for a size-free source (analytic or quadrature): counts and seed are zero.
    pub fn asymptotic(
        source: Source,
        lambda0: f64,
        gamma: f64,
        alpha: f64,
        sigma0_sq: f64,
        kappa: Option<f64>,
        dec: Decomposition<f64>,
    ) -> Self {
        Self {
            source,
            lambda0,
            gamma,
            alpha,
            sigma0_sq,
            kappa: kappa.unwrap_or(f64::NAN),
            d: 0,
            n: 0,
            p: 0,
            trials: 0,
            seed: 0,
            bias_sq: dec.bias_sq,
            var_clean: dec.var_clean,
            var_noise: dec.var_noise,
            risk: dec.risk,
        }
    }

    pub fn decomposition(&self) -> Decomposition<f64> {
        Decomposition {
            bias_sq: self.bias_sq,
            var_clean: self.var_clean,
            var_noise: self.var_noise,
            risk: self.risk,
        }
    }

    pub fn to_csv_line(&self) -> String {
        let mut s = String::with_capacity(160);
        s.push_str(self.source.as_str());
        for x in [self.lambda0, self.gamma, self.alpha, self.sigma0_sq, self.kappa] {
            s.push(',');
            s.push_str(&format_float(x));
        }
        for c in [self.d, self.n, self.p, self.trials, self.seed] {
            s.push(',');
            s.push_str(&c.to_string());
        }
        for x in [self.bias_sq, self.var_clean, self.var_noise, self.risk] {
            s.push(',');
            s.push_str(&format_float(x));
        }
        s
    }

    pub fn parse_csv_line(line: &str, line_no: usize) -> Result<Self> {
        let err = |msg: String| Error::Csv { line: line_no, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(err(format!("expected 15 fields, found {}", fields.len())));
        }
        let float = |i: usize| -> Result<f64> {
            parse_float(fields[i]).ok_or_else(|| err(format!("bad float '{}' in column {}", fields[i], i + 1)))
        };
        let count = |i: usize| -> Result<u64> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| err(format!("bad count '{}' in column {}", fields[i], i + 1)))
        };
        Ok(Self {
            source: fields[0].parse().map_err(|e: Error| err(e.to_string()))?,
            lambda0: float(1)?,
            gamma: float(2)?,
            alpha: float(3)?,
            sigma0_sq: float(4)?,
            kappa: float(5)?,
            d: count(6)?,
            n: count(7)?,
            p: count(8)?,
            trials: count(9)?,
            seed: count(10)?,
            bias_sq: float(11)?,
            var_clean: float(12)?,
            var_noise: float(13)?,
            risk: float(14)?,
        })
    }
}

/// Shortest round-trip decimal rendering; non-finite values as `nan`, `inf`, `-inf`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

fn parse_float(s: &str) -> Option<f64> {
    if s.is_empty() || s.trim() != s {
        return None;
    }
    s.parse::<f64>().ok()
}

pub fn write_csv<W: Write>(mut out: W, records: &[SweepRecord]) -> std::io::Result<()> {
    out.write_all(CSV_HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    for r in records {
        out.write_all(r.to_csv_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_csv_string(records: &[SweepRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is ASCII")
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<SweepRecord>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Csv { line: 1, msg: "empty input".into() })?
        .map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
    if header != CSV_HEADER {
        return Err(Error::Csv { line: 1, msg: format!("unexpected header '{header}'") });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::Csv { line: line_no, msg: e.to_string() })?;
        if line.is_empty() {
            continue;
        }
        out.push(SweepRecord::parse_csv_line(&line, line_no)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits_eq(a: &SweepRecord, b: &SweepRecord) -> bool {
        let fa = [a.lambda0, a.gamma, a.alpha, a.sigma0_sq, a.kappa, a.bias_sq, a.var_clean, a.var_noise, a.risk];
        let fb = [b.lambda0, b.gamma, b.alpha, b.sigma0_sq, b.kappa, b.bias_sq, b.var_clean, b.var_noise, b.risk];
        a.source == b.source
            && (a.d, a.n, a.p, a.trials, a.seed) == (b.d, b.n, b.p, b.trials, b.seed)
            && fa.iter().zip(fb.iter()).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
    }

    fn sample() -> SweepRecord {
        SweepRecord::asymptotic(
            Source::Analytic,
            0.1,
            1.0,
            1.0,
            1.0,
            None,
            Decomposition::from_parts(0.072984, 0.083189, 0.615861),
        )
    }

    #[test]
    fn header_and_nan_kappa() {
        let csv = to_csv_string(&[sample()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row = lines.next().unwrap();
        assert!(row.starts_with("analytic,0.1,1,1,1,nan,0,0,0,0,0,"), "{row}");
        assert!(!row.contains(' '));
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn rejects_bad_header_and_rows() {
        assert!(read_csv("a,b\n".as_bytes()).is_err());
        let bad = format!("{CSV_HEADER}\nmc,1,2\n");
        assert!(matches!(read_csv(bad.as_bytes()), Err(Error::Csv { line: 2, .. })));
        let bad_source = format!("{CSV_HEADER}\nfoo,1,1,1,1,nan,0,0,0,0,0,1,1,1,1\n");
        assert!(read_csv(bad_source.as_bytes()).is_err());
    }

    #[test]
    fn nan_var_noise_roundtrips() {
        let mut r = sample();
        r.source = Source::Estimator;
        r.var_noise = f64::NAN;
        let back = read_csv(to_csv_string(&[r]).as_bytes()).unwrap();
        assert!(bits_eq(&r, &back[0]));
        assert!(to_csv_string(&[r]).contains(",nan,"));
    }

    fn any_source() -> impl Strategy<Value = Source> {
        prop_oneof![
            Just(Source::Analytic),
            Just(Source::Quadrature),
            Just(Source::Mc),
            Just(Source::Estimator)
        ]
    }

    proptest! {
        #[test]
        fn csv_roundtrip(
            source in any_source(),
            floats in proptest::array::uniform9(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO),
            counts in proptest::array::uniform5(any::<u64>()),
        ) {
            let r = SweepRecord {
                source,
                lambda0: floats[0], gamma: floats[1], alpha: floats[2], sigma0_sq: floats[3], kappa: floats[4],
                d: counts[0], n: counts[1], p: counts[2], trials: counts[3], seed: counts[4],
                bias_sq: floats[5], var_clean: floats[6], var_noise: floats[7], risk: floats[8],
            };
            let back = read_csv(to_csv_string(&[r]).as_bytes()).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert!(bits_eq(&r, &back[0]));
        }
    }
}
