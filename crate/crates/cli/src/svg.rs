//! Minimal static SVG charts for the cost-effectiveness plane and the
//! acceptability curve.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }
}

/// Symmetric range around zero that covers `values`, padded by 10%.
fn symmetric(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let m = values.filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    let m = if m > 0.0 { m * 1.1 } else { 1.0 };
    (-m, m)
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
}

fn axes_labels(s: &mut String, x: &str, y: &str) {
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{y}</text>"#,
        H / 2.0,
        H / 2.0
    );
}

/// Scatter of bootstrap (ΔE, ΔC) pairs with a willingness-to-pay line.
pub fn ce_plane(points: &[(f64, f64)], threshold: f64) -> String {
    let f = Frame { x: symmetric(points.iter().map(|p| p.1)), y: symmetric(points.iter().map(|p| p.0)) };
    let mut s = String::new();
    header(&mut s, "Cost-effectiveness plane");
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(s, r##"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##, x1 - x0, y0 - y1);
    let _ = writeln!(s, r##"<line x1="{x0:.1}" y1="{:.1}" x2="{x1:.1}" y2="{:.1}" stroke="#999"/>"##, f.py(0.0), f.py(0.0));
    let _ = writeln!(s, r##"<line x1="{:.1}" y1="{y0:.1}" x2="{:.1}" y2="{y1:.1}" stroke="#999"/>"##, f.px(0.0), f.px(0.0));
    // ΔC = λ·ΔE, clipped to the frame.
    let e_lim = f.x.1.min(f.y.1 / threshold);
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c33" stroke-dasharray="4 3"/>"##,
        f.px(-e_lim),
        f.py(-e_lim * threshold),
        f.px(e_lim),
        f.py(e_lim * threshold)
    );
    for &(dc, de) in points {
        let _ = writeln!(s, r##"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="#3366aa" fill-opacity="0.4"/>"##, f.px(de), f.py(dc));
    }
    let _ = writeln!(s, r#"<text x="{x0:.1}" y="{:.1}">{:.4}</text>"#, y0 + 16.0, f.x.0);
    let _ = writeln!(s, r#"<text x="{x1:.1}" y="{:.1}" text-anchor="end">{:.4}</text>"#, y0 + 16.0, f.x.1);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{y1:.1}" text-anchor="end">{:.0}</text>"#, x0 - 4.0, f.y.1);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{y0:.1}" text-anchor="end">{:.0}</text>"#, x0 - 4.0, f.y.0);
    axes_labels(&mut s, "Incremental QALYs", "Incremental cost");
    s.push_str("</svg>\n");
    s
}

/// Acceptability curve: probability cost-effective against threshold.
pub fn ceac(curve: &[(f64, f64)]) -> String {
    let hi = curve.iter().map(|p| p.0).fold(0.0f64, f64::max).max(1.0);
    let f = Frame { x: (0.0, hi), y: (0.0, 1.0) };
    let mut s = String::new();
    header(&mut s, "Cost-effectiveness acceptability curve");
    let (x0, x1) = (f.px(0.0), f.px(hi));
    let (y0, y1) = (f.py(0.0), f.py(1.0));
    let _ = writeln!(s, r##"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##, x1 - x0, y0 - y1);
    for k in 0..=4 {
        let p = k as f64 / 4.0;
        let _ = writeln!(s, r##"<line x1="{x0:.1}" y1="{:.1}" x2="{x1:.1}" y2="{:.1}" stroke="#ddd"/>"##, f.py(p), f.py(p));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{p:.2}</text>"#, x0 - 4.0, f.py(p) + 4.0);
    }
    let pts: Vec<String> = curve.iter().map(|&(l, p)| format!("{:.1},{:.1}", f.px(l), f.py(p))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#3366aa" stroke-width="2"/>"##, pts.join(" "));
    let _ = writeln!(s, r#"<text x="{x0:.1}" y="{:.1}">0</text>"#, y0 + 16.0);
    let _ = writeln!(s, r#"<text x="{x1:.1}" y="{:.1}" text-anchor="end">{hi:.0}</text>"#, y0 + 16.0);
    axes_labels(&mut s, "Threshold per QALY", "Probability cost-effective");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_has_one_marker_per_point() {
        let svg = ce_plane(&[(-100.0, 0.01), (50.0, -0.002), (0.0, 0.0)], 15_000.0);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn curve_is_one_polyline() {
        let svg = ceac(&[(0.0, 0.2), (500.0, 0.4), (1000.0, 0.9)]);
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
