//! Minimal static SVG plots: scatter and polyline series on linear axes.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Points,
    Lines,
}

/// One data series: a set of paths, each drawn as a polyline or as points.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub style: Style,
    pub paths: Vec<Vec<(f64, f64)>>,
}

impl Series {
    pub fn points(label: &str, pts: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), style: Style::Points, paths: vec![pts] }
    }

    pub fn line(label: &str, pts: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), style: Style::Lines, paths: vec![pts] }
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Forces equal scales on both axes, for constellations.
    pub square: bool,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new(), square: false }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in self.series.iter().flat_map(|s| s.paths.iter().flatten()) {
            if x.is_finite() && y.is_finite() {
                b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
            }
        }
        if !b.0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if self.square {
            let m = b.0.abs().max(b.1.abs()).max(b.2.abs()).max(b.3.abs());
            b = (-m, m, -m, m);
        }
        let pad = |lo: f64, hi: f64| {
            let d = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - d, hi + d)
        };
        let (x0, x1) = pad(b.0, b.1);
        let (y0, y1) = pad(b.2, b.3);
        (x0, x1, y0, y1)
    }

    /// Renders the plot. `comment` is placed at the top of the document.
    pub fn render(&self, comment: &str) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(s, "<!-- {} -->", comment.replace("--", "- -"));
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(xv), b + 16.0, tick(xv));
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 4.0, sy(yv) + 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(s, r#"<g fill="{color}" stroke="{color}"><title>{}</title>"#, escape(&series.label));
            for path in &series.paths {
                let pts = path.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
                match series.style {
                    Style::Points => {
                        for &(x, y) in pts {
                            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="1.2" stroke="none"/>"#, sx(x), sy(y));
                        }
                    }
                    Style::Lines => {
                        let d: Vec<String> = pts.map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
                        if d.len() > 1 {
                            let _ = writeln!(s, r#"<polyline fill="none" stroke-width="0.8" points="{}"/>"#, d.join(" "));
                        }
                    }
                }
            }
            let _ = writeln!(s, "</g>");
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                r - 120.0,
                t + 16.0 + 14.0 * i as f64,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Keeps at most `max` evenly spaced items.
pub fn thin<T: Copy>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max || max == 0 {
        return items.to_vec();
    }
    let step = items.len().div_ceil(max);
    items.iter().step_by(step).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_comment() {
        let p = Plot::new("t <1>", "x", "y")
            .with(Series::points("a", vec![(0.0, 0.0), (1.0, 2.0)]))
            .with(Series::line("b", vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 0.5)]));
        let s = p.render("hdr -- x");
        assert!(s.starts_with("<!-- hdr - - x -->\n<svg"));
        assert_eq!(s.matches("<circle").count(), 2);
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(s.contains("t &lt;1&gt;"));
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn thinning_bounds_size() {
        let v: Vec<usize> = (0..1000).collect();
        assert!(thin(&v, 300).len() <= 300);
        assert_eq!(thin(&v[..10], 300).len(), 10);
    }
}
