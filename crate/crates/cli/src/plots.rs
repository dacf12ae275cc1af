//! Deterministic SVG emission: no timestamps, fixed float formatting.

use std::fmt::Write as _;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

/// Line plot with optional log-y and vertical marker lines.
pub fn line_plot(
    title: &str,
    series: &[Series],
    log_y: bool,
    x_markers: &[(f64, &str)],
) -> String {
    let mut xs: Vec<f64> = vec![];
    let mut ys: Vec<f64> = vec![];
    for s in series {
        for &(x, y) in &s.points {
            let yv = if log_y { y.max(1e-300).log10() } else { y };
            if x.is_finite() && yv.is_finite() {
                xs.push(x);
                ys.push(yv);
            }
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0).max(1e-300) * (W - 2.0 * MARGIN);
    let py = |y: f64| {
        let yv = if log_y { y.max(1e-300).log10() } else { y };
        H - MARGIN - (yv - y0) / (y1 - y0).max(1e-300) * (H - 2.0 * MARGIN)
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    let _ = write!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n");
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        MARGIN, title
    );
    // axes
    let _ = write!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    );
    // axis labels
    for frac in [0.0, 0.5, 1.0] {
        let xv = x0 + frac * (x1 - x0);
        let yv = y0 + frac * (y1 - y0);
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            px(xv),
            H - MARGIN + 16.0,
            fmt(xv)
        );
        let ylabel = if log_y { format!("1e{}", fmt(yv)) } else { fmt(yv) };
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            MARGIN - 6.0,
            H - MARGIN - frac * (H - 2.0 * MARGIN) + 4.0,
            ylabel
        );
    }
    for (xm, label) in x_markers {
        if *xm >= x0 && *xm <= x1 {
            let _ = write!(
                svg,
                "<line x1=\"{x}\" y1=\"{t}\" x2=\"{x}\" y2=\"{b}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n<text x=\"{x}\" y=\"{ty}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{label}</text>\n",
                x = px(*xm),
                t = MARGIN,
                b = H - MARGIN,
                ty = MARGIN - 6.0
            );
        }
    }
    for (si, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let mut path = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(path, "{}{},{} ", if i == 0 { "M" } else { "L" }, fmt(px(x)), fmt(py(y)));
        }
        let _ = write!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            path.trim(),
            s.color
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            W - MARGIN - 150.0,
            MARGIN + 16.0 * (si as f64 + 1.0),
            s.color,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Horizontal bar chart (used for the Reynolds part breakdown).
pub fn bar_plot(title: &str, bars: &[(String, f64)]) -> String {
    let maxv = bars.iter().map(|b| b.1).fold(1e-300, f64::max);
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    let _ = write!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n");
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        MARGIN, title
    );
    let bh = (H - 2.0 * MARGIN) / bars.len().max(1) as f64;
    for (i, (name, v)) in bars.iter().enumerate() {
        let y = MARGIN + i as f64 * bh;
        // log scale across 12 decades below the max
        let frac = ((v.max(1e-300) / maxv).log10() / 12.0 + 1.0).clamp(0.0, 1.0);
        let w = frac * (W - 2.0 * MARGIN - 120.0);
        let _ = write!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"steelblue\"/>\n",
            MARGIN + 110.0,
            fmt(y + 2.0),
            fmt(w.max(1.0)),
            fmt(bh - 6.0)
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN + 100.0,
            fmt(y + bh / 2.0 + 4.0),
            name
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\">{:.3e}</text>\n",
            MARGIN + 116.0 + w,
            fmt(y + bh / 2.0 + 4.0),
            v
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 1.0);
    }
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
