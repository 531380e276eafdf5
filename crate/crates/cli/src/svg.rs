//! Minimal SVG line charts and heatmaps for the figure data.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

enum Mark {
    Line,
    Points,
}

struct Series {
    name: String,
    pts: Vec<(f64, f64)>,
    mark: Mark,
}

pub struct Chart {
    title: String,
    xlabel: String,
    ylabel: String,
    log_x: bool,
    series: Vec<Series>,
    vlines: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl Chart {
    pub fn new(title: &str, xlabel: &str, ylabel: &str) -> Self {
        Chart {
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            log_x: false,
            series: Vec::new(),
            vlines: Vec::new(),
        }
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn line(&mut self, name: &str, pts: Vec<(f64, f64)>) {
        self.series.push(Series { name: name.into(), pts, mark: Mark::Line });
    }

    pub fn points(&mut self, name: &str, pts: Vec<(f64, f64)>) {
        self.series.push(Series { name: name.into(), pts, mark: Mark::Points });
    }

    pub fn vline(&mut self, x: f64) {
        if x.is_finite() {
            self.vlines.push(x);
        }
    }

    fn fx(&self, x: f64) -> f64 {
        if self.log_x {
            x.log10()
        } else {
            x
        }
    }

    pub fn render(&self) -> String {
        let xs = self.series.iter().flat_map(|s| s.pts.iter().map(|p| self.fx(p.0)));
        let (x0, x1) = range(xs.chain(self.vlines.iter().map(|&v| self.fx(v))));
        let (ymin, ymax) = range(self.series.iter().flat_map(|s| s.pts.iter().map(|p| p.1)));
        let y0 = ymin.min(0.0);
        let y1 = if ymax > y0 { ymax } else { y0 + 1.0 };
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (self.fx(x) - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
        let mut out = String::new();
        header(&mut out, &self.title);
        let _ = writeln!(out, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let label = if self.log_x { format!("{:.3}", 10f64.powf(fx)) } else { format!("{fx:.3}") };
            let px = LEFT + pw * k as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="middle">{label}</text>"#, TOP + ph + 15.0);
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let py = TOP + ph - ph * k as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{:.2}" y="{py:.2}" font-size="11" text-anchor="end">{fy:.3}</text>"#, LEFT - 5.0);
        }
        axis_labels(&mut out, &self.xlabel, &self.ylabel);
        for &v in &self.vlines {
            let px = sx(v);
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="5,4"/>"##,
                TOP + ph
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<(f64, f64)> =
                s.pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
            match s.mark {
                Mark::Line => {
                    let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        d.join(" ")
                    );
                }
                Mark::Points => {
                    for (x, y) in &pts {
                        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                    }
                }
            }
            let ly = TOP + 14.0 * i as f64 + 8.0;
            let lx = W - RIGHT + 10.0;
            let _ = writeln!(out, r#"<rect x="{lx}" y="{:.2}" width="10" height="3" fill="{color}"/>"#, ly - 3.0);
            let _ = writeln!(out, r#"<text x="{}" y="{ly:.2}" font-size="11">{}</text>"#, lx + 14.0, escape(&s.name));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="18" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
}

fn axis_labels(out: &mut String, xlabel: &str, ylabel: &str) {
    let ph = H - TOP - BOTTOM;
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        LEFT + (W - LEFT - RIGHT) / 2.0,
        H - 8.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );
}

/// Cells on a rectangular grid shaded by a value in `[0, 1]`, with an overlaid curve.
pub struct Heatmap {
    title: String,
    xlabel: String,
    ylabel: String,
    cells: Vec<(f64, f64, f64)>,
    curve: Vec<(f64, f64)>,
}

impl Heatmap {
    pub fn new(title: &str, xlabel: &str, ylabel: &str) -> Self {
        Heatmap { title: title.into(), xlabel: xlabel.into(), ylabel: ylabel.into(), cells: Vec::new(), curve: Vec::new() }
    }

    pub fn cell(&mut self, x: f64, y: f64, v: f64) {
        self.cells.push((x, y, v));
    }

    pub fn curve(&mut self, pts: Vec<(f64, f64)>) {
        self.curve = pts;
    }

    pub fn render(&self) -> String {
        let mut xs: Vec<f64> = self.cells.iter().map(|c| c.0).collect();
        let mut ys: Vec<f64> = self.cells.iter().map(|c| c.1).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let cw = pw / xs.len().max(1) as f64;
        let ch = ph / ys.len().max(1) as f64;
        let idx = |v: &[f64], x: f64| v.iter().position(|&a| a == x).unwrap_or(0) as f64;
        let mut out = String::new();
        header(&mut out, &self.title);
        for &(x, y, v) in &self.cells {
            let px = LEFT + idx(&xs, x) * cw;
            let py = TOP + ph - (idx(&ys, y) + 1.0) * ch;
            let fill = if v.is_finite() {
                let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
                format!("rgb({g},{g},{g})")
            } else {
                "#f0c0c0".to_string()
            };
            let _ = writeln!(out, r#"<rect x="{px:.2}" y="{py:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}"/>"#);
        }
        for (k, x) in xs.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{x}</text>"#,
                LEFT + (k as f64 + 0.5) * cw,
                TOP + ph + 14.0
            );
        }
        for (k, y) in ys.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{y}</text>"#,
                LEFT - 4.0,
                TOP + ph - (k as f64 + 0.5) * ch + 3.0
            );
        }
        // boundary in cell coordinates, interpolating between grid rows
        let ypos = |y: f64| -> Option<f64> {
            if ys.len() < 2 || !y.is_finite() {
                return None;
            }
            let j = ys.windows(2).position(|w| y >= w[0] && y <= w[1])?;
            let frac = (y - ys[j]) / (ys[j + 1] - ys[j]);
            Some(TOP + ph - (j as f64 + 0.5 + frac) * ch)
        };
        let d: Vec<String> = self
            .curve
            .iter()
            .filter_map(|&(x, y)| Some(format!("{:.2},{:.2}", LEFT + (idx(&xs, x) + 0.5) * cw, ypos(y)?)))
            .collect();
        if d.len() > 1 {
            let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, d.join(" "));
        }
        axis_labels(&mut out, &self.xlabel, &self.ylabel);
        out.push_str("</svg>\n");
        out
    }
}
