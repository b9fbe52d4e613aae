//! Number and CSV formatting shared by every emitted artifact.

use std::fmt::Write as _;

/// `%.6g`-style rendering: six significant digits, trailing zeros removed,
/// scientific notation (`1.5e-05`) for exponents below -4 or above 5.
pub fn sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Minimal CSV builder: header row, LF line endings, numbers through [`sig6`].
#[derive(Debug, Default)]
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Self::default();
        csv.out.push_str(&header.join(","));
        csv.out.push('\n');
        csv
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.out.push(',');
            }
            match c {
                Cell::Num(v) => self.out.push_str(&sig6(*v)),
                Cell::Int(v) => {
                    let _ = write!(self.out, "{v}");
                }
                Cell::Text(t) => self.out.push_str(&quote(t)),
            }
        }
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Cell<'a> {
    Num(f64),
    Int(usize),
    Text(&'a str),
}

fn quote(t: &str) -> String {
    if t.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", t.replace('"', "\"\""))
    } else {
        t.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (0.1 + 0.2, "0.3"),
            (2.0 / 3.0, "0.666667"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (0.15000000000000002, "0.15"),
            (52.74, "52.74"),
        ];
        for (v, want) in cases {
            assert_eq!(sig6(v), want, "{v}");
        }
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["id", "delta", "n"]);
        csv.row(&[Cell::Text("a,b"), Cell::Num(0.25), Cell::Int(3)]);
        assert_eq!(csv.finish(), "id,delta,n\n\"a,b\",0.25,3\n");
    }
}
