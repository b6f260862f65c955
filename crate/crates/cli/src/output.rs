//! CSV result rows and number formatting.

use std::io::Write;

use crate::CliError;

pub const CSV_HEADER: [&str; 6] = ["p", "p_block", "e_sojourn", "stable", "source", "ci_halfwidth"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    FormulaSfj,
    FormulaExact,
    BoundLower,
    BoundUpper,
    Oracle,
    Simulation,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::FormulaSfj => "formula-sfj",
            Source::FormulaExact => "formula-exact",
            Source::BoundLower => "bound-lower",
            Source::BoundUpper => "bound-upper",
            Source::Oracle => "oracle",
            Source::Simulation => "simulation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub p: Option<f64>,
    pub p_block: f64,
    pub e_sojourn: Option<f64>,
    pub stable: bool,
    pub source: Source,
    pub ci_halfwidth: Option<f64>,
}

/// `printf("%.12g")`: 12 significant digits, trailing zeros dropped,
/// exponent form outside `1e-4 <= |x| < 1e12`.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g12).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| CliError::io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            opt(r.p),
            fmt_g12(r.p_block),
            opt(r.e_sojourn),
            r.stable.to_string(),
            r.source.as_str().to_string(),
            opt(r.ci_halfwidth),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g12_matches_printf() {
        assert_eq!(fmt_g12(1.0), "1");
        assert_eq!(fmt_g12(0.1), "0.1");
        assert_eq!(fmt_g12(21.867283950617), "21.8672839506");
        assert_eq!(fmt_g12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g12(0.00015540), "0.0001554");
        assert_eq!(fmt_g12(1.5e-5), "1.5e-05");
        assert_eq!(fmt_g12(-2.5e13), "-2.5e+13");
        assert_eq!(fmt_g12(123456789012.0), "123456789012");
        assert_eq!(fmt_g12(0.0), "0");
    }

    #[test]
    fn g12_round_trips_to_twelve_digits() {
        for &x in &[
            0.019054,
            21.867283950617284,
            1.0 / 7.0,
            6.02e23,
            3.3e-9,
            0.99999999999951,
        ] {
            let back: f64 = fmt_g12(x).parse().unwrap();
            assert!(((back - x) / x).abs() <= 5e-12, "{x} -> {back}");
        }
    }

    #[test]
    fn csv_layout() {
        let rows = [ResultRow {
            p: None,
            p_block: 0.5,
            e_sojourn: None,
            stable: false,
            source: Source::FormulaSfj,
            ci_halfwidth: None,
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "p,p_block,e_sojourn,stable,source,ci_halfwidth\n,0.5,,false,formula-sfj,\n"
        );
    }
}
