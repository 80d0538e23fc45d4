//! Minimal 2-D scatter plot writer.

use std::fmt::Write as _;

use ndarray::ArrayView2;

pub struct Layer<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: ArrayView2<'a, f64>,
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 24.0;

/// Overlays the layers on shared axes (first two coordinates). Output is a
/// pure function of the inputs.
pub fn scatter(title: &str, layers: &[Layer<'_>]) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for l in layers {
        for r in l.points.rows() {
            x0 = x0.min(r[0]);
            x1 = x1.max(r[0]);
            let y = r.get(1).copied().unwrap_or(0.0);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let inner = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / span * inner;
    let py = |y: f64| SIZE - MARGIN - (y - y0) / span * inner;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="16" font-family="sans-serif" font-size="12">{}</text>"#, escape(title));
    for (i, l) in layers.iter().enumerate() {
        let _ = writeln!(s, r#"<g fill="{}" fill-opacity="0.5">"#, l.color);
        for r in l.points.rows() {
            let y = r.get(1).copied().unwrap_or(0.0);
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, px(r[0]), py(y));
        }
        let _ = writeln!(s, "</g>");
        let ly = 32.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{ly}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            SIZE - 140.0,
            l.color,
            escape(l.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
