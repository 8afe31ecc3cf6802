//! Static SVG charts: stacked event-time panels and histograms.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 200.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const PANEL_GAP: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Default)]
pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Shaded `(x, lo, hi)` band drawn under the line.
    pub band: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub lines: Vec<Line>,
    /// Bars from zero, e.g. counts per bin.
    pub bars: Vec<(f64, f64)>,
    /// Horizontal reference line.
    pub reference: Option<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.05 } else { 1.0 };
        return Some((lo - pad, hi + pad));
    }
    let pad = (hi - lo) * 0.05;
    Some((lo - pad, hi + pad))
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, out: &mut String, title: &str) {
        let (x0, y0, w, h) = (self.x0, self.y0, self.w, self.h);
        let _ = writeln!(out, r##"<rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#444"/>"##);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="13">{}</text>"#, x0, y0 - 8.0, escape(title));
        for i in 0..=4 {
            let v = self.yr.0 + (self.yr.1 - self.yr.0) * i as f64 / 4.0;
            let y = self.y(v);
            let _ = writeln!(out, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#444"/>"##, x0 - 4.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, x0 - 6.0, y + 3.0, tick_label(v));
        }
        for i in 0..=6 {
            let v = self.xr.0 + (self.xr.1 - self.xr.0) * i as f64 / 6.0;
            let x = self.x(v);
            let yb = y0 + h;
            let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##, yb + 4.0);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#, yb + 16.0, tick_label(v));
        }
    }

    fn hline(&self, out: &mut String, v: f64, style: &str) {
        if v < self.yr.0 || v > self.yr.1 {
            return;
        }
        let y = self.y(v);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" {style}/>"#, self.x0, self.x0 + self.w);
    }

    fn vline(&self, out: &mut String, v: f64, style: &str) {
        if v < self.xr.0 || v > self.xr.1 {
            return;
        }
        let x = self.x(v);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" {style}/>"#, self.y0, self.y0 + self.h);
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn header(height: f64, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="20" font-size="15" font-weight="bold">{}</text>"#, MARGIN_LEFT, escape(title));
    out
}

/// Vertically stacked panels sharing an event-time x axis, with a dashed
/// marker at x = 0.
pub fn event_chart(title: &str, x_label: &str, panels: &[Panel]) -> String {
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP) + 10.0;
    let mut out = header(height, title);
    let xs = panels.iter().flat_map(|p| {
        p.lines.iter().flat_map(|l| l.points.iter().map(|q| q.0)).chain(p.bars.iter().map(|b| b.0))
    });
    let xr = extent(xs).unwrap_or((-1.0, 1.0));
    for (i, p) in panels.iter().enumerate() {
        let ys = p
            .lines
            .iter()
            .flat_map(|l| l.points.iter().map(|q| q.1).chain(l.band.iter().flat_map(|b| [b.1, b.2])))
            .chain(p.bars.iter().flat_map(|b| [0.0, b.1]))
            .chain(p.reference);
        let yr = extent(ys).unwrap_or((-1.0, 1.0));
        let f = Frame {
            x0: MARGIN_LEFT,
            y0: MARGIN_TOP + i as f64 * (PANEL_HEIGHT + PANEL_GAP) + 20.0,
            w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            h: PANEL_HEIGHT - 20.0,
            xr,
            yr,
        };
        f.axes(&mut out, &p.title);
        if !p.bars.is_empty() {
            let step = f.w / p.bars.len().max(1) as f64 * 0.8;
            for (x, y) in &p.bars {
                let (top, bottom) = (f.y(y.max(0.0)), f.y(y.min(0.0)));
                let _ = writeln!(
                    out,
                    r##"<rect x="{:.2}" y="{top:.2}" width="{step:.2}" height="{:.2}" fill="#999"/>"##,
                    f.x(*x) - step / 2.0,
                    bottom - top
                );
            }
        }
        for (j, l) in p.lines.iter().enumerate() {
            let color = COLORS[j % COLORS.len()];
            if !l.band.is_empty() {
                let mut d = String::new();
                for (x, _, hi) in &l.band {
                    let _ = write!(d, "{:.2},{:.2} ", f.x(*x), f.y(*hi));
                }
                for (x, lo, _) in l.band.iter().rev() {
                    let _ = write!(d, "{:.2},{:.2} ", f.x(*x), f.y(*lo));
                }
                let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, d.trim_end());
            }
            let mut d = String::new();
            for (x, y) in l.points.iter().filter(|q| q.1.is_finite()) {
                let _ = write!(d, "{:.2},{:.2} ", f.x(*x), f.y(*y));
            }
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
            if !l.label.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{color}" text-anchor="end">{}</text>"#,
                    f.x0 + f.w - 4.0,
                    f.y0 + 12.0 + 12.0 * j as f64,
                    escape(&l.label)
                );
            }
        }
        if let Some(r) = p.reference {
            f.hline(&mut out, r, r##"stroke="#666" stroke-dasharray="2,3""##);
        }
        f.vline(&mut out, 0.0, r##"stroke="#000" stroke-dasharray="5,4""##);
        if i + 1 == panels.len() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                f.x0 + f.w / 2.0,
                f.y0 + f.h + 32.0,
                escape(x_label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram of `values` with the observed value marked.
pub fn histogram(title: &str, values: &[f64], observed: f64, nbins: usize) -> String {
    let height = MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP;
    let mut out = header(height, title);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let xr = extent(finite.iter().copied().chain(std::iter::once(observed))).unwrap_or((-1.0, 1.0));
    let nbins = nbins.max(1);
    let step = (xr.1 - xr.0) / nbins as f64;
    let mut counts = vec![0usize; nbins];
    for v in &finite {
        counts[(((v - xr.0) / step) as usize).min(nbins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame {
        x0: MARGIN_LEFT,
        y0: MARGIN_TOP + 20.0,
        w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        h: PANEL_HEIGHT - 20.0,
        xr,
        yr: (0.0, top * 1.05),
    };
    f.axes(&mut out, &format!("{} draws", finite.len()));
    for (i, c) in counts.iter().enumerate() {
        let x = xr.0 + step * i as f64;
        let (x1, x2) = (f.x(x), f.x(x + step));
        let y = f.y(*c as f64);
        let _ = writeln!(
            out,
            r##"<rect x="{x1:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#9ab" stroke="#567"/>"##,
            (x2 - x1).max(0.0),
            f.y0 + f.h - y
        );
    }
    f.vline(&mut out, observed, r##"stroke="#d62728" stroke-width="2""##);
    out.push_str("</svg>\n");
    out
}
