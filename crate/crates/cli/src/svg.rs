//! Minimal SVG line charts on a fixed 800x600 canvas.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 70.0;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bar per point.
    pub errors: Option<Vec<f64>>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal reference line with its label.
    pub reference: Option<(f64, String)>,
}

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl Chart {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
                xs.push(x);
                ys.extend([y - e, y + e]);
            }
        }
        if let Some((r, _)) = self.reference {
            ys.push(r);
        }
        let lo_hi = |v: &[f64]| {
            let lo = v
                .iter()
                .copied()
                .filter(|x| x.is_finite())
                .fold(f64::INFINITY, f64::min);
            let hi = v
                .iter()
                .copied()
                .filter(|x| x.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = lo_hi(&xs);
        let (y0, y1) = lo_hi(&ys);
        (x0, x1, y0, y1)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="14">"#
        );
        let _ = writeln!(
            out,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="30" text-anchor="middle" font-size="18">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let y = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                fmt(left - 8.0),
                fmt(py(y) + 5.0),
                tick(y)
            );
        }
        let mut x_ticks: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .collect();
        x_ticks.sort_by(f64::total_cmp);
        x_ticks.dedup();
        for x in x_ticks {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                fmt(px(x)),
                fmt(bottom + 22.0),
                tick(x)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        if let Some((r, label)) = &self.reference {
            let y = fmt(py(*r));
            let _ = writeln!(
                out,
                r##"<line x1="{left}" y1="{y}" x2="{right}" y2="{y}" stroke="#555" stroke-dasharray="6 4"/>"##
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                right,
                fmt(py(*r) - 6.0),
                escape(label)
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = palette[k % palette.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y))))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if let Some(e) = s.errors.as_ref().map(|e| e[i]) {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{color}"/>"#,
                        fmt(py(y - e)),
                        fmt(py(y + e)),
                        x = fmt(px(x))
                    );
                }
                let _ = writeln!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#,
                    fmt(px(x)),
                    fmt(py(y))
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                left + 10.0,
                top + 20.0 * (k + 1) as f64,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
