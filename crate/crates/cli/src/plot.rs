//! Minimal SVG line plots with a log-scale y axis.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Plots `ys` against `xs` on a log10 y axis. Non-positive or non-finite
/// values are dropped from the polyline.
pub fn log_plot(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> String {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **y > 0.0)
        .map(|(x, y)| (*x, y.log10()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(svg, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );

    if !pts.is_empty() {
        let (mut xmin, mut xmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (mut dmin, mut dmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        if xmax <= xmin {
            xmin -= 0.5;
            xmax += 0.5;
        }
        dmin = dmin.floor();
        dmax = dmax.ceil();
        if dmax <= dmin {
            dmax = dmin + 1.0;
        }
        let sx = |x: f64| x0 + (x - xmin) / (xmax - xmin) * (x1 - x0);
        let sy = |d: f64| y0 - (d - dmin) / (dmax - dmin) * (y0 - y1);

        let step = ((dmax - dmin) / 8.0).ceil().max(1.0);
        let mut d = dmin;
        while d <= dmax + 1e-9 {
            let y = sy(d);
            let _ = writeln!(svg, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/>"##);
            let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#, x0 - 6.0, y + 4.0, d as i64);
            d += step;
        }
        for x in [xmin, (xmin + xmax) / 2.0, xmax] {
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, sx(x), y0 + 18.0, x.round());
        }
        let mut line = String::new();
        for (i, (x, d)) in pts.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{:.2},{:.2}", sx(*x), sy(*d));
        }
        let _ = writeln!(svg, r##"<polyline points="{line}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##);
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_nonpositive_points() {
        let svg = log_plot("t", "x", "y", &[0.0, 1.0, 2.0], &[1.0, 0.0, 1e-3]);
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(poly.matches(',').count(), 2);
        assert!(svg.contains("1e-3") && svg.contains("1e0"));
    }

    #[test]
    fn empty_series_still_renders() {
        let svg = log_plot("a < b", "x", "y", &[], &[]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("<polyline"));
    }
}
