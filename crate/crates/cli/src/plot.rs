//! Minimal self-contained SVG line plots and heatmaps.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Line plot of one or more series sharing axes.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let xs = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (Some((x0, x1)), Some((y0, y1))) = (xs, ys) else {
        out.push_str("<text x=\"50%\" y=\"50%\" text-anchor=\"middle\">no finite data</text>\n</svg>\n");
        return out;
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"##,
            sx(xv),
            TOP,
            TOP + ph,
            TOP + ph + 16.0,
            label(xv)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="#ddd"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"##,
            LEFT,
            LEFT + pw,
            sy(yv),
            LEFT - 6.0,
            sy(yv) + 4.0,
            label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        // Break the line at non-finite values.
        let mut path = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.8"/>"#,
            path.trim_end()
        );
        if s.points.len() <= 30 {
            for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
        if !s.label.is_empty() {
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Blue-white-red colour for `t` in `[0, 1]`.
fn colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (
            59.0 + u * (247.0 - 59.0),
            76.0 + u * (247.0 - 76.0),
            192.0 + u * (247.0 - 192.0),
        )
    } else {
        let u = (t - 0.5) / 0.5;
        (
            247.0 - u * (247.0 - 180.0),
            247.0 - u * (247.0 - 4.0),
            247.0 - u * (247.0 - 38.0),
        )
    };
    format!("rgb({},{},{})", r.round(), g.round(), b.round())
}

/// Heatmap of `values[i * cols.len() + j]` with `rows` down the vertical
/// axis (first value at the bottom) and `cols` across.
pub fn heatmap(title: &str, row_label: &str, rows: &[f64], col_label: &str, cols: &[f64], values: &[f64]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let cw = pw / cols.len() as f64;
    let ch = ph / rows.len() as f64;
    let range = finite_range(values.iter().copied());
    for (i, _) in rows.iter().enumerate() {
        for (j, _) in cols.iter().enumerate() {
            let v = values[i * cols.len() + j];
            let fill = match range {
                Some((lo, hi)) if v.is_finite() => colour((v - lo) / (hi - lo)),
                _ => "#999".to_string(),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"><title>{}</title></rect>"#,
                LEFT + j as f64 * cw,
                TOP + ph - (i + 1) as f64 * ch,
                cw + 0.5,
                ch + 0.5,
                label(v)
            );
        }
    }
    let every = |n: usize| n.div_ceil(8).max(1);
    for (j, &c) in cols.iter().enumerate().step_by(every(cols.len())) {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + (j as f64 + 0.5) * cw,
            TOP + ph + 16.0,
            label(c)
        );
    }
    for (i, &r) in rows.iter().enumerate().step_by(every(rows.len())) {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            TOP + ph - (i as f64 + 0.5) * ch + 4.0,
            label(r)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(col_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(row_label)
    );
    if let Some((lo, hi)) = range {
        let x = LEFT + pw + 20.0;
        for k in 0..50 {
            let t = k as f64 / 49.0;
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
                TOP + ph - (k + 1) as f64 * ph / 50.0,
                ph / 50.0 + 0.5,
                colour(t)
            );
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 22.0, TOP + 10.0, label(hi));
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 22.0, TOP + ph, label(lo));
    }
    out.push_str("</svg>\n");
    out
}
