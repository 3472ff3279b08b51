//! Minimal SVG scatter plot of a constellation.

use std::fmt::Write;

use cutoff_core::report::fmt12;
use cutoff_core::shaping::Constellation;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 30.0;

/// Points as circles with radius proportional to probability, the power
/// budget circle `|s| = sqrt(P0)` dashed, and the two axes.
pub fn constellation_svg(c: &Constellation, p0: f64, title: &str) -> String {
    let extent = c
        .points
        .iter()
        .map(|s| s[0].abs().max(s[1].abs()))
        .fold(p0.sqrt(), f64::max)
        * 1.1;
    let half = 0.5 * SIZE - MARGIN;
    let scale = half / extent;
    let cx = 0.5 * SIZE;
    let px = |x: f64| fmt12(cx + x * scale);
    let py = |y: f64| fmt12(cx - y * scale);
    let pmax = c.probs.iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{cx}" x2="{}" y2="{cx}" stroke="#888" stroke-width="1"/>"##,
        SIZE - MARGIN
    );
    let _ = writeln!(
        out,
        r##"<line x1="{cx}" y1="{MARGIN}" x2="{cx}" y2="{}" stroke="#888" stroke-width="1"/>"##,
        SIZE - MARGIN
    );
    let _ = writeln!(
        out,
        r##"<circle cx="{cx}" cy="{cx}" r="{}" fill="none" stroke="#c33" stroke-dasharray="4 3"/>"##,
        fmt12(p0.sqrt() * scale)
    );
    for (s, p) in c.points.iter().zip(&c.probs) {
        let r = 12.0 * p / pmax;
        if r <= 0.0 {
            continue;
        }
        let _ = writeln!(
            out,
            r##"<circle cx="{}" cy="{}" r="{}" fill="#2463b4" fill-opacity="0.8"/>"##,
            px(s[0]),
            py(s[1]),
            fmt12(r)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(title)
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_tracks_probability() {
        let c = Constellation::new(vec![[1.0, 0.0], [-1.0, 0.0]], vec![0.75, 0.25]).unwrap();
        let svg = constellation_svg(&c, 1.0, "a < b");
        assert!(svg.contains(r#"r="12""#));
        assert!(svg.contains(r#"r="4""#));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("a &lt; b"));
    }
}
