//! Minimal SVG charts for CLI outputs.
//!
//! Charts are emitted as self-contained SVG strings with fixed-precision
//! coordinates, so rerunning a command on the same data produces the same
//! bytes and the files diff cleanly. Only the two shapes the CLI needs
//! are provided: multi-series line charts and single-series bar charts.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("no data to plot")]
    Empty,
    #[error("non-finite value in series {0:?}")]
    NonFinite(String),
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 58.0;
const TICK_TARGET: usize = 5;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Widens a degenerate range so a flat series still gets a visible axis.
fn pad_range(min: f64, max: f64) -> (f64, f64) {
    if min < max {
        (min, max)
    } else {
        let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.05 };
        (min - pad, max + pad)
    }
}

/// Tick positions on a 1-2-5 grid covering [min, max].
fn ticks(min: f64, max: f64) -> Vec<f64> {
    let raw = (max - min) / (TICK_TARGET - 1) as f64;
    let magnitude = 10f64.powf(raw.log10().floor());
    let normalized = raw / magnitude;
    let nice = if normalized <= 1.0 {
        1.0
    } else if normalized <= 2.0 {
        2.0
    } else if normalized <= 5.0 {
        5.0
    } else {
        10.0
    };
    let step = nice * magnitude;
    let mut t = (min / step).ceil() * step;
    let mut out = Vec::new();
    while t <= max + step * 1e-9 {
        // snap values like 0.30000000000000004 back onto the grid
        out.push((t / step).round() * step);
        t += step;
    }
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(0.01..10000.0).contains(&a) {
        return format!("{v:.1e}");
    }
    let mut s = format!("{v:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn open_svg(title: &str) -> String {
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    );
    let _ = write!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    );
    svg
}

fn axes(svg: &mut String, frame: &Frame, x_label: &str, y_label: &str, with_x_ticks: bool) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    for t in ticks(frame.y_min, frame.y_max) {
        let y = frame.y(t);
        let _ = write!(
            svg,
            "<line x1=\"{x0:.2}\" y1=\"{y:.2}\" x2=\"{x1:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            x0 - 6.0,
            y + 4.0,
            format_tick(t)
        );
    }
    if with_x_ticks {
        for t in ticks(frame.x_min, frame.x_max) {
            let x = frame.x(t);
            let _ = write!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>\n\
                 <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                y1,
                y0 + 16.0,
                format_tick(t)
            );
        }
    }
    let _ = write!(
        svg,
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n\
         <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Renders one or more (x, y) series as polylines with a shared frame.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<String, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::Empty);
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                return Err(PlotError::NonFinite(s.name.clone()));
            }
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    let (x_min, x_max) = pad_range(x_min, x_max);
    let (y_min, y_max) = pad_range(y_min, y_max);
    let frame = Frame { x_min, x_max, y_min, y_max };

    let mut svg = open_svg(title);
    axes(&mut svg, &frame, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for &(x, y) in &s.points {
            let _ = write!(points, "{:.2},{:.2} ", frame.x(x), frame.y(y));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            points.trim_end()
        );
        if series.len() > 1 {
            let ly = MARGIN_TOP + 14.0 * i as f64;
            let _ = write!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
                 stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
                 <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>\n",
                WIDTH - MARGIN_RIGHT - 130.0,
                WIDTH - MARGIN_RIGHT - 106.0,
                WIDTH - MARGIN_RIGHT - 100.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders labeled values as bars from a zero baseline.
pub fn bar_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    bars: &[(String, f64)],
) -> Result<String, PlotError> {
    if bars.is_empty() {
        return Err(PlotError::Empty);
    }
    let mut y_min = 0.0f64;
    let mut y_max = 0.0f64;
    for (label, v) in bars {
        if !v.is_finite() {
            return Err(PlotError::NonFinite(label.clone()));
        }
        y_min = y_min.min(*v);
        y_max = y_max.max(*v);
    }
    let (y_min, y_max) = pad_range(y_min, y_max);
    let frame = Frame { x_min: 0.0, x_max: bars.len() as f64, y_min, y_max };

    let mut svg = open_svg(title);
    axes(&mut svg, &frame, x_label, y_label, false);
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / bars.len() as f64;
    let bar_width = slot * 0.8;
    let baseline = frame.y(0.0);
    // crowded label rows thin out to roughly a dozen
    let label_stride = bars.len().div_ceil(12);
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = frame.x(i as f64) + slot * 0.1;
        let top = frame.y(*v);
        let (y, height) = if *v >= 0.0 {
            (top, baseline - top)
        } else {
            (baseline, top - baseline)
        };
        let _ = write!(
            svg,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_width:.2}\" height=\"{height:.2}\" \
             fill=\"{}\"/>\n",
            PALETTE[0]
        );
        if i % label_stride == 0 {
            let _ = write!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
                x + bar_width / 2.0,
                HEIGHT - MARGIN_BOTTOM + 16.0,
                escape(label)
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_renders_each_series_and_escapes_markup() {
        let series = [
            Series {
                name: "a<b".to_string(),
                points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)],
            },
            Series {
                name: "c&d".to_string(),
                points: vec![(0.0, 0.5), (2.0, 3.0)],
            },
        ];
        let svg = line_chart("x & y", "input", "output", &series).unwrap();
        assert!(svg.starts_with("<svg xmlns"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("x &amp; y"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("c&amp;d"));
        assert!(!svg.contains("a<b"));
    }

    #[test]
    fn flat_series_still_produce_a_frame() {
        let series = [Series {
            name: "flat".to_string(),
            points: vec![(1.0, 2.0), (1.0, 2.0)],
        }];
        let svg = line_chart("t", "x", "y", &series).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }

    #[test]
    fn bar_heights_scale_with_values() {
        let bars = vec![
            ("a".to_string(), 1.0),
            ("b".to_string(), 2.0),
            ("c".to_string(), 2.0),
        ];
        let svg = bar_chart("t", "bin", "mean", &bars).unwrap();
        let heights: Vec<f64> = svg
            .lines()
            .filter(|l| l.starts_with("<rect") && !l.contains("fill=\"white\""))
            .map(|l| {
                let tail = l.split("height=\"").nth(1).unwrap();
                tail.split('"').next().unwrap().parse().unwrap()
            })
            .collect();
        assert_eq!(heights.len(), 3);
        assert!((heights[1] - heights[2]).abs() < 1e-9);
        assert!((heights[1] - 2.0 * heights[0]).abs() < 0.02 * heights[1]);
    }

    #[test]
    fn negative_bars_hang_below_the_baseline() {
        let bars = vec![("up".to_string(), 1.0), ("down".to_string(), -1.0)];
        let svg = bar_chart("t", "x", "y", &bars).unwrap();
        assert_eq!(
            svg.lines()
                .filter(|l| l.starts_with("<rect") && !l.contains("fill=\"white\""))
                .count(),
            2
        );
        assert!(!svg.contains("height=\"-"));
    }

    #[test]
    fn empty_and_non_finite_inputs_are_rejected() {
        assert_eq!(line_chart("t", "x", "y", &[]), Err(PlotError::Empty));
        assert_eq!(bar_chart("t", "x", "y", &[]), Err(PlotError::Empty));
        let bad = [Series {
            name: "bad".to_string(),
            points: vec![(0.0, f64::NAN)],
        }];
        assert!(matches!(
            line_chart("t", "x", "y", &bad),
            Err(PlotError::NonFinite(_))
        ));
    }
}
