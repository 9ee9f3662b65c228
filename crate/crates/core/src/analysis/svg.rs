//! Minimal standalone SVG line plot of a group signature with a shaded
//! mean +/- std band.

use std::fmt::Write;

use super::signature::GroupSignature;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn signature_svg(title: &str, sig: &GroupSignature, note: Option<&str>) -> String {
    let upper: Vec<f64> = sig.mean_curve.iter().zip(&sig.std_curve).map(|(m, s)| m + s).collect();
    let lower: Vec<f64> = sig.mean_curve.iter().zip(&sig.std_curve).map(|(m, s)| m - s).collect();
    let mut lo = lower.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() || hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let last = (sig.length.max(2) - 1) as f64;
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / last;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut band = String::new();
    for (i, v) in upper.iter().enumerate() {
        let _ = write!(band, "{:.2},{:.2} ", x(i), y(*v));
    }
    for (i, v) in lower.iter().enumerate().rev() {
        let _ = write!(band, "{:.2},{:.2} ", x(i), y(*v));
    }
    let mut line = String::new();
    for (i, v) in sig.mean_curve.iter().enumerate() {
        let _ = write!(line, "{:.2},{:.2} ", x(i), y(*v));
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    if let Some(note) = note {
        let _ = writeln!(out, "<!-- {} -->", escape(note).replace("--", "- -"));
    }
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##,
        band.trim_end()
    );
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
        line.trim_end()
    );
    let zero = y(0.0);
    if (MARGIN..=HEIGHT - MARGIN).contains(&zero) {
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
            WIDTH - MARGIN
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{} (n = {})</text>"##,
        escape(title),
        sig.n_members
    );
    let _ = writeln!(
        out,
        r##"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="11" fill="#555">first mention</text>"##,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11" fill="#555" text-anchor="end">incorporation</text>"##,
        WIDTH - MARGIN,
        HEIGHT - 12.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_band_and_line() {
        let sig = GroupSignature {
            length: 3,
            mean_curve: vec![0.0, 1.0, -1.0],
            std_curve: vec![0.5, 0.5, 0.0],
            n_members: 4,
        };
        let svg = signature_svg("EB <early>", &sig, Some("config abc"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("EB &lt;early&gt; (n = 4)"));
        assert!(svg.contains("<!-- config abc -->"));
    }

    #[test]
    fn flat_signature_does_not_divide_by_zero() {
        let sig = GroupSignature {
            length: 2,
            mean_curve: vec![0.0, 0.0],
            std_curve: vec![0.0, 0.0],
            n_members: 1,
        };
        assert!(!signature_svg("flat", &sig, None).contains("NaN"));
    }
}
