//! Minimal deterministic SVG scatter plots.

use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn color(group: usize) -> &'static str {
    PALETTE[group % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Marker {
    pub x: f64,
    pub y: f64,
    pub label: String,
    pub group: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Scatter {
    pub title: String,
    pub points: Vec<Marker>,
    /// Index pairs into `points`.
    pub edges: Vec<(usize, usize)>,
    /// Drawn as diamonds.
    pub centroids: Vec<Marker>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl Scatter {
    pub fn render(&self, width: u32, height: u32) -> String {
        let (w, h) = (f64::from(width), f64::from(height));
        let margin = 30.0;
        let all = self.points.iter().chain(&self.centroids);
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for m in all {
            x0 = x0.min(m.x);
            x1 = x1.max(m.x);
            y0 = y0.min(m.y);
            y1 = y1.max(m.y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let sx = if x1 > x0 {
            (w - 2.0 * margin) / (x1 - x0)
        } else {
            1.0
        };
        let sy = if y1 > y0 {
            (h - 2.0 * margin) / (y1 - y0)
        } else {
            1.0
        };
        let px = |x: f64| margin + (x - x0) * sx;
        let py = |y: f64| h - margin - (y - y0) * sy;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        if !self.title.is_empty() {
            let _ = writeln!(
                s,
                r#"<text x="{margin}" y="18" font-family="sans-serif" font-size="13">{}</text>"#,
                esc(&self.title)
            );
        }
        let _ = writeln!(s, r##"<g stroke="#999" stroke-width="1">"##);
        for &(a, b) in &self.edges {
            let (p, q) = (&self.points[a], &self.points[b]);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                px(p.x),
                py(p.y),
                px(q.x),
                py(q.y)
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, "<g>");
        for m in &self.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"><title>{}</title></circle>"#,
                px(m.x),
                py(m.y),
                color(m.group),
                esc(&m.label)
            );
        }
        for m in &self.centroids {
            let (cx, cy, r) = (px(m.x), py(m.y), 7.0);
            let _ = writeln!(
                s,
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{}" stroke="black"><title>{}</title></polygon>"#,
                cx,
                cy - r,
                cx + r,
                cy,
                cx,
                cy + r,
                cx - r,
                cy,
                color(m.group),
                esc(&m.label)
            );
        }
        let _ = writeln!(s, "</g>\n</svg>");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker(x: f64, y: f64, label: &str, group: usize) -> Marker {
        Marker {
            x,
            y,
            label: label.into(),
            group,
        }
    }

    #[test]
    fn renders_points_edges_and_diamonds() {
        let plot = Scatter {
            title: "a<b".into(),
            points: vec![marker(0.0, 0.0, "p", 0), marker(1.0, 1.0, "q", 1)],
            edges: vec![(0, 1)],
            centroids: vec![marker(0.5, 0.5, "c", 0)],
        };
        let svg = plot.render(100, 100);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<line").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains(r#"cx="30.00" cy="70.00""#));
        assert_eq!(svg, plot.render(100, 100));
    }

    #[test]
    fn degenerate_extent() {
        let plot = Scatter {
            points: vec![marker(2.0, 2.0, "p", 0)],
            ..Scatter::default()
        };
        assert!(plot.render(50, 50).contains("<circle"));
    }
}
