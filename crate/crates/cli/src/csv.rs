//! CSV number formatting, parsing and atomic file output.
//!
//! Numbers are written in plain decimal with 9 significant digits and
//! trailing zeros removed; NaN marks a missing value. Lines end in LF.

use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const SIG_DIGITS: usize = 9;

/// `x` rounded to 9 significant digits, plain decimal notation.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();

    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat('0').take((-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            out.push_str(&digits);
            out.extend(std::iter::repeat('0').take(int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    trim_zeros(out)
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// The value a reader of [`fmt_sig`] output will see.
pub fn quantize(x: f64) -> f64 {
    fmt_sig(x).parse().expect("fmt_sig output parses")
}

/// Exact decimal sum of two plain decimal strings.
pub fn decimal_add(a: &str, b: &str) -> Option<String> {
    let (ma, sa) = parse_decimal(a)?;
    let (mb, sb) = parse_decimal(b)?;
    let scale = sa.max(sb);
    let ma = ma.checked_mul(10i128.checked_pow(scale - sa)?)?;
    let mb = mb.checked_mul(10i128.checked_pow(scale - sb)?)?;
    Some(render_decimal(ma.checked_add(mb)?, scale))
}

fn parse_decimal(s: &str) -> Option<(i128, u32)> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() || !int.bytes().chain(frac.bytes()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut m: i128 = 0;
    for c in int.bytes().chain(frac.bytes()) {
        m = m.checked_mul(10)?.checked_add((c - b'0') as i128)?;
    }
    Some((if neg { -m } else { m }, frac.len() as u32))
}

fn render_decimal(m: i128, scale: u32) -> String {
    let digits = m.unsigned_abs().to_string();
    let scale = scale as usize;
    let padded = if digits.len() <= scale {
        format!("{}{}", "0".repeat(scale + 1 - digits.len()), digits)
    } else {
        digits
    };
    let split = padded.len() - scale;
    let mut out = String::new();
    if m < 0 {
        out.push('-');
    }
    out.push_str(&padded[..split]);
    if scale > 0 {
        out.push('.');
        out.push_str(&padded[split..]);
    }
    trim_zeros(out)
}

/// IAE, ITAE and cost columns. IAE and ITAE are rounded to 9 significant
/// digits and the cost is their exact decimal sum, so `cost = iae + itae`
/// holds digit for digit in the file.
pub fn cost_triplet(iae: f64, itae: f64) -> [String; 3] {
    let (a, b) = (fmt_sig(iae), fmt_sig(itae));
    let cost = decimal_add(&a, &b).unwrap_or_else(|| fmt_sig(quantize(iae) + quantize(itae)));
    [a, b, cost]
}

/// A parsed CSV file: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = match lines.next() {
            Some(h) => h.split(',').map(str::to_string).collect(),
            None => return Err(CliError::config(origin, "empty CSV file")),
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(CliError::config(
                    origin,
                    format!("line {}: expected {} fields, found {}", i + 2, header.len(), row.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn column(&self, name: &str, origin: &Path) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(origin, format!("missing column '{name}'")))
    }

    pub fn expect_header(&self, expected: &[&str], origin: &Path) -> CliResult<()> {
        if self.header.iter().map(String::as_str).eq(expected.iter().copied()) {
            Ok(())
        } else {
            Err(CliError::config(
                origin,
                format!("unexpected header '{}', expected '{}'", self.header.join(","), expected.join(",")),
            ))
        }
    }
}

pub fn parse_number(cell: &str, origin: &Path) -> CliResult<f64> {
    cell.parse()
        .map_err(|_| CliError::config(origin, format!("'{cell}' is not a number")))
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(50.0), "50");
        assert_eq!(fmt_sig(0.01), "0.01");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(244.86213711167883), "244.862137");
        assert_eq!(fmt_sig(-2.0 / 3.0), "-0.666666667");
        assert_eq!(fmt_sig(123456789012.0), "123456789000");
        assert_eq!(fmt_sig(9.9999999999), "10");
        assert_eq!(fmt_sig(1.5e-12), "0.0000000000015");
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig(f64::NAN), "NaN");
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [1.0 / 7.0, 12345.6789012, 3.0e-7 / 9.0, 29.990000000000002] {
            let q = quantize(x);
            assert_eq!(quantize(q), q);
            assert_eq!(fmt_sig(q), fmt_sig(x));
        }
    }

    #[test]
    fn decimal_sums_are_exact() {
        assert_eq!(decimal_add("0.1", "0.2").unwrap(), "0.3");
        assert_eq!(decimal_add("68.3643674", "176.49777").unwrap(), "244.8621374");
        assert_eq!(decimal_add("1", "0.000000001").unwrap(), "1.000000001");
        assert_eq!(decimal_add("0", "0").unwrap(), "0");
        assert_eq!(decimal_add("-1.5", "0.25").unwrap(), "-1.25");
        assert_eq!(decimal_add("0.5", "0.5").unwrap(), "1");
        assert!(decimal_add("1e3", "1").is_none());
    }

    #[test]
    fn triplet_holds_in_decimal() {
        let [iae, itae, cost] = cost_triplet(32.11202524720005, 26.12453839107439);
        assert_eq!((iae.as_str(), itae.as_str()), ("32.1120252", "26.1245384"));
        assert_eq!(cost, "58.2365636");
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "NaN".into()]);
        let text = t.render();
        assert_eq!(text, "a,b\n1,NaN\n");
        assert_eq!(Table::parse(&text, Path::new("t")).unwrap(), t);
        assert!(Table::parse("a,b\n1\n", Path::new("t")).is_err());
    }
}
