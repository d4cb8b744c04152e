//! Minimal SVG plots written as plain text.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const BLUE: &str = "#1f77b4";
pub const ORANGE: &str = "#ff7f0e";
pub const GREEN: &str = "#2ca02c";
pub const BLACK: &str = "#222222";

#[derive(Clone, Debug)]
pub struct Series<'a> {
    pub label: &'a str,
    pub y: &'a [f64],
    pub color: &'a str,
    pub dashed: bool,
}

#[derive(Clone, Debug)]
pub struct Band<'a> {
    pub label: &'a str,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

/// Data-to-pixel transform of the plotting area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    right: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Frame {
            x: widen(x),
            y: widen(y),
            right: RIGHT,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - self.right)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str) {
        let (x0, x1) = (LEFT, WIDTH - self.right);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="{BLACK}"/>"#,
            x1 - x0,
            y0 - y1
        );
        for t in ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(
                out,
                r#"<line x1="{p:.2}" y1="{y0}" x2="{p:.2}" y2="{}" stroke="{BLACK}"/><text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 20.0,
                fmt_tick(t)
            );
        }
        for t in ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="{BLACK}"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                p + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 10.0,
            escape(xlabel)
        );
    }

    fn legend_entry(&self, out: &mut String, row: usize, color: &str, label: &str, dashed: bool) {
        let x = WIDTH - self.right + 12.0;
        let y = TOP + 12.0 + 20.0 * row as f64;
        let dash = if dashed { r#" stroke-dasharray="6,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            x + 22.0,
            x + 28.0,
            y + 4.0,
            escape(label)
        );
    }
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn range<'a>(values: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn padded(r: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = widen(r);
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// About five round tick positions inside `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(t: f64) -> String {
    if t == 0.0 {
        return "0".into();
    }
    let a = t.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{t:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{t:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn polyline(frame: &Frame, x: &[f64], y: &[f64]) -> String {
    let mut pts = String::new();
    for (&xi, &yi) in x.iter().zip(y) {
        if xi.is_finite() && yi.is_finite() {
            let _ = write!(pts, "{:.2},{:.2} ", frame.px(xi), frame.py(yi));
        }
    }
    pts
}

/// Curves over a common abscissa, optionally with a shaded band behind them.
pub fn line_plot(title: &str, xlabel: &str, x: &[f64], series: &[Series], band: Option<&Band>) -> String {
    let xr = range(x);
    let mut ys: Vec<&f64> = series.iter().flat_map(|s| s.y.iter()).collect();
    if let Some(b) = band {
        ys.extend(b.lower.iter().chain(b.upper));
    }
    let frame = Frame::new(xr, padded(range(ys)));
    let mut out = String::new();
    open(&mut out);
    let mut row = 0;
    if let Some(b) = band {
        let mut pts = polyline(&frame, x, b.upper);
        let rev_x: Vec<f64> = x.iter().rev().copied().collect();
        let rev_l: Vec<f64> = b.lower.iter().rev().copied().collect();
        pts.push_str(&polyline(&frame, &rev_x, &rev_l));
        let _ = writeln!(out, r#"<polygon points="{}" fill="{BLUE}" fill-opacity="0.25" stroke="none"/>"#, pts.trim_end());
        let x0 = WIDTH - frame.right + 12.0;
        let y0 = TOP + 6.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{y0}" width="22" height="12" fill="{BLUE}" fill-opacity="0.25"/><text x="{}" y="{}">{}</text>"#,
            x0 + 28.0,
            y0 + 10.0,
            escape(b.label)
        );
        row += 1;
    }
    for s in series {
        let dash = if s.dashed { r#" stroke-dasharray="6,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8"{dash}/>"#,
            polyline(&frame, x, s.y).trim_end(),
            s.color
        );
        frame.legend_entry(&mut out, row, s.color, s.label, s.dashed);
        row += 1;
    }
    frame.axes(&mut out, title, xlabel);
    out.push_str("</svg>\n");
    out
}

/// Per-coefficient mean with interval bars and optional true values.
pub fn coefficient_plot(title: &str, mean: &[f64], lower: &[f64], upper: &[f64], truth: Option<&[f64]>) -> String {
    let n = mean.len();
    let mut ys: Vec<&f64> = mean.iter().chain(lower).chain(upper).collect();
    if let Some(t) = truth {
        ys.extend(t);
    }
    let frame = Frame::new((0.5, n as f64 + 0.5), padded(range(ys)));
    let mut out = String::new();
    open(&mut out);
    for i in 0..n {
        let x = frame.px(i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{BLUE}" stroke-width="2"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{BLUE}"/>"#,
            frame.py(lower[i]),
            frame.py(upper[i]),
            frame.py(mean[i])
        );
        if let Some(t) = truth {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="{ORANGE}"/>"#,
                x - 3.0,
                frame.py(t[i]) - 3.0
            );
        }
    }
    frame.legend_entry(&mut out, 0, BLUE, "mean and CI", false);
    if truth.is_some() {
        frame.legend_entry(&mut out, 1, ORANGE, "truth", false);
    }
    frame.axes(&mut out, title, "coefficient");
    out.push_str("</svg>\n");
    out
}

/// Maps `t ∈ [0, 1]` to a blue-to-yellow ramp.
fn color(t: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.5, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let k = STOPS.iter().position(|s| s.0 >= t).unwrap_or(4).max(1);
    let (a, ca) = STOPS[k - 1];
    let (b, cb) = STOPS[k];
    let w = (t - a) / (b - a);
    let c: Vec<u8> = (0..3).map(|i| (ca[i] + w * (cb[i] - ca[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn colorbar(out: &mut String, frame: &Frame, lo: f64, hi: f64) {
    let x = WIDTH - frame.right + 20.0;
    let h = HEIGHT - TOP - BOTTOM;
    let steps = 40;
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let y = TOP + h * (1.0 - (k + 1) as f64 / steps as f64);
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{y:.2}" width="18" height="{:.2}" fill="{}"/>"#,
            h / steps as f64 + 0.5,
            color(t)
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 22.0, TOP + 10.0, fmt_tick(hi));
    let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 22.0, TOP + h, fmt_tick(lo));
}

fn square_frame(xr: (f64, f64), yr: (f64, f64)) -> Frame {
    let (xr, yr) = (widen(xr), widen(yr));
    let mut frame = Frame::new(xr, yr);
    // Equal aspect: shrink the plotting width to match the data ratio.
    let plot_h = HEIGHT - TOP - BOTTOM;
    let ratio = (xr.1 - xr.0) / (yr.1 - yr.0);
    let plot_w = (plot_h * ratio).min(WIDTH - LEFT - 90.0);
    frame.right = WIDTH - LEFT - plot_w;
    frame
}

/// Nodal field on a triangle mesh; each triangle takes its vertex average.
pub fn tri_heatmap(title: &str, vertices: &[[f64; 2]], triangles: &[[usize; 3]], values: &[f64]) -> String {
    let (lo, hi) = widen(range(values));
    let frame = square_frame(range(vertices.iter().map(|v| &v[0])), range(vertices.iter().map(|v| &v[1])));
    let mut out = String::new();
    open(&mut out);
    for tri in triangles {
        let v = tri.iter().map(|&i| values[i]).sum::<f64>() / 3.0;
        let c = color((v - lo) / (hi - lo));
        let pts: Vec<String> = tri
            .iter()
            .map(|&i| format!("{:.2},{:.2}", frame.px(vertices[i][0]), frame.py(vertices[i][1])))
            .collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="{c}" stroke="{c}" stroke-width="0.3"/>"#, pts.join(" "));
    }
    colorbar(&mut out, &frame, lo, hi);
    frame.axes(&mut out, title, "x");
    out.push_str("</svg>\n");
    out
}

/// Tensor-grid field; `values` runs fastest along `x`.
pub fn grid_heatmap(title: &str, xlabel: &str, x: &[f64], y: &[f64], values: &[f64]) -> String {
    let (lo, hi) = widen(range(values));
    let cell = |nodes: &[f64], i: usize| {
        let a = if i == 0 { nodes[0] } else { 0.5 * (nodes[i - 1] + nodes[i]) };
        let b = if i + 1 == nodes.len() { nodes[i] } else { 0.5 * (nodes[i] + nodes[i + 1]) };
        (a, b)
    };
    let mut frame = Frame::new(range(x), range(y));
    frame.right = RIGHT;
    let mut out = String::new();
    open(&mut out);
    for j in 0..y.len() {
        let (y0, y1) = if y.len() == 1 { (frame.y.0, frame.y.1) } else { cell(y, j) };
        for i in 0..x.len() {
            let (x0, x1) = cell(x, i);
            let c = color((values[j * x.len() + i] - lo) / (hi - lo));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{c}"/>"#,
                frame.px(x0),
                frame.py(y1),
                (frame.px(x1) - frame.px(x0)).max(0.5),
                (frame.py(y0) - frame.py(y1)).max(0.5)
            );
        }
    }
    colorbar(&mut out, &frame, lo, hi);
    frame.axes(&mut out, title, xlabel);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert!((t[1] - 0.2).abs() < 1e-12);
        for v in ticks(-3.7, 12.2) {
            assert!((-3.7..=12.2).contains(&v));
        }
    }

    #[test]
    fn plots_are_well_formed_svg() {
        let x = [0.0, 0.5, 1.0];
        let y = [1.0, 2.0, 1.5];
        let lo = [0.5, 1.5, 1.0];
        let hi = [1.5, 2.5, 2.0];
        let docs = [
            line_plot(
                "a < b",
                "ξ",
                &x,
                &[Series {
                    label: "mean",
                    y: &y,
                    color: BLUE,
                    dashed: false,
                }],
                Some(&Band {
                    label: "95% CI",
                    lower: &lo,
                    upper: &hi,
                }),
            ),
            coefficient_plot("c", &y, &lo, &hi, Some(&x)),
            tri_heatmap("t", &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0, 1, 2]], &[0.0, 1.0, 2.0]),
            grid_heatmap("g", "τ", &x, &[0.0, 1.0], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
        ];
        for doc in docs {
            assert!(doc.starts_with("<svg"));
            assert!(doc.trim_end().ends_with("</svg>"));
            assert!(!doc.contains("NaN"));
            assert_eq!(doc.matches("<svg").count(), 1);
        }
    }

    #[test]
    fn constant_data_does_not_divide_by_zero() {
        let doc = line_plot(
            "flat",
            "x",
            &[0.0, 1.0],
            &[Series {
                label: "c",
                y: &[3.0, 3.0],
                color: BLUE,
                dashed: true,
            }],
            None,
        );
        assert!(!doc.contains("NaN") && !doc.contains("inf"));
    }

    #[test]
    fn color_ramp_endpoints() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(f64::NAN), "#440154");
    }
}
