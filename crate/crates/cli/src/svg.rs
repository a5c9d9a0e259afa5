//! Minimal SVG scatter plots: an 800x800 canvas, radius-1 markers and axes
//! labelled with the plotted ranges.

use std::fmt::Write;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 70.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (SIZE - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        SIZE - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (SIZE - 2.0 * MARGIN)
    }
}

fn open(out: &mut String, frame: &Frame, x_name: &str, y_name: &str) {
    let (lo, hi) = (MARGIN, SIZE - MARGIN);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">"#
    );
    let _ = writeln!(out, r#"<rect width="800" height="800" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{lo}" y1="{hi}" x2="{hi}" y2="{hi}"/><line x1="{lo}" y1="{hi}" x2="{lo}" y2="{lo}"/></g>"#
    );
    let _ = writeln!(out, r#"<g font-family="sans-serif" font-size="14" fill="black">"#);
    let _ = writeln!(out, r#"<text x="{lo}" y="{}" text-anchor="middle">{}</text>"#, hi + 22.0, frame.x.0);
    let _ = writeln!(out, r#"<text x="{hi}" y="{}" text-anchor="middle">{}</text>"#, hi + 22.0, frame.x.1);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_name}</text>"#, SIZE / 2.0, hi + 44.0);
    let _ = writeln!(out, r#"<text x="{}" y="{hi}" text-anchor="end" dominant-baseline="middle">{}</text>"#, lo - 8.0, frame.y.0);
    let _ = writeln!(out, r#"<text x="{}" y="{lo}" text-anchor="end" dominant-baseline="middle">{}</text>"#, lo - 8.0, frame.y.1);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{y_name}</text>"#,
        lo - 44.0,
        SIZE / 2.0,
        lo - 44.0,
        SIZE / 2.0
    );
    let _ = writeln!(out, "</g>");
}

fn circle(out: &mut String, frame: &Frame, x: f64, y: f64) {
    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="1"/>"#, frame.px(x), frame.py(y));
}

/// Scatter of two-dimensional samples over their box.
pub fn scatter(names: [&str; 2], x: (f64, f64), y: (f64, f64), rows: impl Iterator<Item = [f64; 2]>) -> String {
    let frame = Frame { x, y };
    let mut out = String::new();
    open(&mut out, &frame, names[0], names[1]);
    out.push_str("<g fill=\"black\">\n");
    for [a, b] in rows {
        circle(&mut out, &frame, a, b);
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// One-dimensional view: proposals `(x, y)` under the envelope, accepted ones
/// in black and rejected ones in grey, with the density curve on top.
pub fn proposals(name: &str, x: (f64, f64), c: f64, points: &[(f64, f64, bool)], curve: &[(f64, f64)]) -> String {
    let frame = Frame { x, y: (0.0, c) };
    let mut out = String::new();
    open(&mut out, &frame, name, "y");
    for (fill, wanted) in [("#b0b0b0", false), ("black", true)] {
        let _ = writeln!(out, r#"<g fill="{fill}">"#);
        for &(px, py, acc) in points {
            if acc == wanted {
                circle(&mut out, &frame, px, py);
            }
        }
        out.push_str("</g>\n");
    }
    let path: Vec<String> = curve
        .iter()
        .map(|&(a, b)| format!("{:.2},{:.2}", frame.px(a), frame.py(b)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="red" stroke-width="2" points="{}"/>"#,
        path.join(" ")
    );
    out.push_str("</svg>\n");
    out
}
