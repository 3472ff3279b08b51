//! Number formatting and small CSV helpers shared by every text output.

/// Formats `x` with 12 significant digits, `%.12g` style.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let e: i32 = exp.parse().expect("exponent is an integer");
    if !(-4..12).contains(&e) {
        let mant = strip_zeros(mant);
        return format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs());
    }
    let decimals = (11 - e).max(0) as usize;
    strip_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Joins already formatted fields into one CSV line (no quoting needed for numbers and tags).
pub fn csv_line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(f.as_ref());
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(1.0), "1");
        assert_eq!(fmt12(0.98987649812345678), "0.989876498123");
        assert_eq!(fmt12(-2.5), "-2.5");
        assert_eq!(fmt12(123456.7890123456), "123456.789012");
        assert_eq!(fmt12(2.25e-8), "2.25e-08");
        assert_eq!(fmt12(3.2e-29), "3.2e-29");
        assert_eq!(fmt12(1e15), "1e+15");
        assert_eq!(fmt12(0.00012345), "0.00012345");
    }

    #[test]
    fn round_trips_to_twelve_digits() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23, 1.602e-19] {
            let y: f64 = fmt12(x).parse().unwrap();
            assert!(((y - x) / x).abs() < 1e-11);
        }
    }
}
