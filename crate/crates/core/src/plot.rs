//! Minimal deterministic SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// A vertical line at `x` with a label.
#[derive(Debug, Clone)]
pub struct Marker {
    pub x: f64,
    pub label: String,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders the series and markers. Output depends only on the input.
pub fn render_svg(title: &str, series: &[Series], markers: &[Marker]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Precondition("nothing to plot: the series is empty".into()));
    }
    let pts = series.iter().flat_map(|s| s.points.iter());
    let finite: Vec<(f64, f64)> = pts.filter(|(x, y)| x.is_finite() && y.is_finite()).cloned().collect();
    if finite.is_empty() {
        return Err(Error::Precondition("no finite points to plot".into()));
    }
    let mut x0 = finite.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut x1 = finite.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    for m in markers {
        x0 = x0.min(m.x);
        x1 = x1.max(m.x);
    }
    let mut y0 = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
    let mut y1 = finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if x1 - x0 < 1e-12 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>",
        W / 2.0,
        escape(title)
    );
    // axes with min/max tick labels
    let _ = writeln!(
        s,
        "<path d=\"M{:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2}\" stroke=\"black\" fill=\"none\"/>",
        PAD,
        PAD,
        PAD,
        H - PAD,
        W - PAD,
        H - PAD
    );
    for (v, x, y, anchor) in [
        (x0, sx(x0), H - PAD + 18.0, "middle"),
        (x1, sx(x1), H - PAD + 18.0, "middle"),
        (y0, PAD - 6.0, sy(y0) + 4.0, "end"),
        (y1, PAD - 6.0, sy(y1) + 4.0, "end"),
    ] {
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            tick(v)
        );
    }
    for m in markers {
        let x = sx(m.x);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>",
            PAD,
            H - PAD
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"gray\">{}</text>",
            x + 4.0,
            PAD + 12.0,
            escape(&m.label)
        );
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let good: Vec<&(f64, f64)> = ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        if good.len() > 1 {
            let mut d = String::new();
            for (k, (x, y)) in good.iter().enumerate() {
                let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { " L" }, sx(*x), sy(*y));
            }
            let _ = writeln!(s, "<path d=\"{d}\" stroke=\"{color}\" fill=\"none\" stroke-width=\"1.5\"/>");
        }
        for (x, y) in &good {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                sx(*x),
                sy(*y)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            W - PAD - 120.0,
            PAD + 16.0 * (i as f64 + 1.0),
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(path: &Path, title: &str, series: &[Series], markers: &[Marker]) -> Result<()> {
    let svg = render_svg(title, series, markers)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{}", (v * 1000.0).round() / 1000.0)
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_gives_one_marker() {
        let s = Series {
            name: "a".into(),
            points: vec![(1.0, 2.0)],
        };
        let svg = render_svg("t", &[s.clone()], &[]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg, render_svg("t", &[s], &[]).unwrap());
    }

    #[test]
    fn endpoint_marker_and_empty_series() {
        let s = Series {
            name: "max ratio".into(),
            points: vec![(2.0, 1.1), (3.0, 1.3), (3.9, 1.6)],
        };
        let m = Marker {
            x: 4.0,
            label: "p = 4".into(),
        };
        let svg = render_svg("sweep", &[s], &[m]).unwrap();
        assert!(svg.contains("stroke-dasharray") && svg.contains("p = 4"));
        let empty = Series {
            name: "e".into(),
            points: vec![],
        };
        assert!(matches!(render_svg("x", &[empty], &[]), Err(Error::Precondition(_))));
        assert!(render_svg("x", &[], &[]).is_err());
    }
}
