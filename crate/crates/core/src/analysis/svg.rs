use std::fmt::Write as _;

use super::{RegressionLine, ScatterData};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

const FLAGGED: &str = "#d62728";
const INLIER: &str = "#1f1f1f";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else {
        0.5_f64.max(lo.abs() * 0.05)
    };
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn line(&self, out: &mut String, l: &RegressionLine, color: &str, dash: &str) {
        let (x0, x1) = self.x;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash} clip-path="url(#plot)"/>"#,
            self.px(x0),
            self.py(l.predict(x0)),
            self.px(x1),
            self.py(l.predict(x1)),
        );
    }
}

/// SVG 1.1 scatter plot: flagged queries in red, the all-queries regression
/// as a solid red line and the non-flagged regression as a dashed black line.
pub fn render_scatter_svg(data: &ScatterData) -> String {
    let frame = Frame {
        x: padded_range(data.points.iter().map(|p| p.x)),
        y: padded_range(data.points.iter().map(|p| p.y)),
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath></defs>
<rect width="100%" height="100%" fill="white"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    let flagged = data.points.iter().filter(|p| p.flagged).count();
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{} vs {} ({} of {} flagged)</text>"#,
        WIDTH / 2.0,
        escape(&data.predictor),
        escape(&data.measure),
        flagged,
        data.points.len()
    );
    let (bx, by) = (HEIGHT - BOTTOM, LEFT);
    let _ = writeln!(
        out,
        r#"<g stroke="black" fill="none"><line x1="{LEFT}" y1="{bx}" x2="{}" y2="{bx}"/><line x1="{by}" y1="{TOP}" x2="{by}" y2="{bx}"/></g>"#,
        WIDTH - RIGHT
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let (px, py) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{bx}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bx + 5.0,
            bx + 18.0,
            format_tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{by}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            by - 5.0,
            by - 8.0,
            py + 4.0,
            format_tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 15.0,
        escape(&data.predictor)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        escape(&data.measure)
    );
    // Inliers first so flagged points stay on top.
    for flagged_pass in [false, true] {
        for p in data.points.iter().filter(|p| p.flagged == flagged_pass) {
            let color = if p.flagged { FLAGGED } else { INLIER };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"><title>{}</title></circle>"#,
                frame.px(p.x),
                frame.py(p.y),
                escape(&p.query_id)
            );
        }
    }
    frame.line(&mut out, &data.all_line, FLAGGED, "");
    if let Ok(clean) = &data.clean_line {
        frame.line(&mut out, clean, INLIER, r#" stroke-dasharray="6 4""#);
    }
    out.push_str("</svg>\n");
    out
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
