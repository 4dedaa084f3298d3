//! Minimal standalone SVG charts: line and scatter series on linear or
//! log-scaled axes.

use std::fmt::Write;

use eisdrt::{CalibrationModel, CalibrationPoint, DrtResult, ImpedanceSpectrum, Peak};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 56.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub mark: Mark,
    pub color: &'static str,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    px0: f64,
    px1: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log { (v.log10(), self.lo.log10(), self.hi.log10()) } else { (v, self.lo, self.hi) };
        self.px0 + (v - lo) / (hi - lo) * (self.px1 - self.px0)
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn linear_range(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0)) };
    let step = nice_step(hi - lo);
    let (a, b) = ((lo / step).floor() * step, (hi / step).ceil() * step);
    let n = ((b - a) / step).round() as usize;
    (a, b, (0..=n).map(|i| a + i as f64 * step).collect())
}

fn log_range(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (a, b) = (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0));
    let ticks = (a as i32..=b as i32).map(|k| 10f64.powi(k)).collect();
    (10f64.powf(a), 10f64.powf(b), ticks)
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.log10().round() as i32)
    } else if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(chart: &Chart) -> String {
    let finite = |v: &f64, log: bool| v.is_finite() && (!log || *v > 0.0);
    let xs: Vec<f64> =
        chart.series.iter().flat_map(|s| s.xs.iter().copied()).filter(|v| finite(v, chart.log_x)).collect();
    let ys: Vec<f64> = chart.series.iter().flat_map(|s| s.ys.iter().copied()).filter(|v| v.is_finite()).collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if xs.is_empty() { (1.0, 10.0) } else { (min(&xs), max(&xs)) };
    let (y_lo, y_hi) = if ys.is_empty() { (0.0, 1.0) } else { (min(&ys), max(&ys)) };
    let (x_lo, x_hi, x_ticks) = if chart.log_x { log_range(x_lo, x_hi) } else { linear_range(x_lo, x_hi) };
    let (y_lo, y_hi, y_ticks) = linear_range(y_lo, y_hi);
    let sx = Scale { lo: x_lo, hi: x_hi, log: chart.log_x, px0: MARGIN_L, px1: WIDTH - MARGIN_R };
    let sy = Scale { lo: y_lo, hi: y_hi, log: false, px0: HEIGHT - MARGIN_B, px1: MARGIN_T };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&chart.title)
    );

    for &t in &x_ticks {
        let x = sx.map(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
            sy.px1, sy.px0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sy.px0 + 16.0,
            tick_label(t, chart.log_x)
        );
    }
    for &t in &y_ticks {
        let y = sy.map(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            sx.px0, sx.px1
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            sx.px0 - 6.0,
            y + 4.0,
            tick_label(t, false)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        sx.px0,
        sy.px1,
        sx.px1 - sx.px0,
        sy.px0 - sy.px1
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (sx.px0 + sx.px1) / 2.0,
        HEIGHT - 14.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (sy.px0 + sy.px1) / 2.0,
        escape(&chart.y_label)
    );

    for (k, s) in chart.series.iter().enumerate() {
        let pts: Vec<(f64, f64)> =
            s.xs.iter()
                .zip(&s.ys)
                .filter(|(x, y)| finite(x, chart.log_x) && y.is_finite())
                .map(|(&x, &y)| (sx.map(x), sy.map(y)))
                .collect();
        match s.mark {
            Mark::Line => {
                let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.8" points="{}"/>"#,
                    s.color,
                    d.join(" ")
                );
            }
            Mark::Points => {
                for (x, y) in pts {
                    let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}"/>"#, s.color);
                }
            }
        }
        let ly = MARGIN_T + 16.0 + 16.0 * k as f64;
        let lx = sx.px1 - 150.0;
        let _ = writeln!(svg, r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#, ly - 9.0, s.color);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 16.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn drt_chart(title: &str, result: &DrtResult, peaks: &[Peak]) -> Chart {
    let mut series = vec![Series {
        label: "γ(τ)".into(),
        xs: result.grid.taus().to_vec(),
        ys: result.gamma.clone(),
        mark: Mark::Line,
        color: "#1f5fa8",
    }];
    if !peaks.is_empty() {
        series.push(Series {
            label: "peaks".into(),
            xs: peaks.iter().map(|p| p.tau).collect(),
            ys: peaks.iter().map(|p| p.height).collect(),
            mark: Mark::Points,
            color: "#c0392b",
        });
    }
    Chart { title: title.into(), x_label: "τ (s)".into(), y_label: "γ (Ω)".into(), log_x: true, series }
}

pub fn calibration_chart(points: &[CalibrationPoint], model: &CalibrationModel) -> Chart {
    let taus: Vec<f64> = points.iter().map(|p| p.tau).collect();
    let lo = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = taus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let line_x = vec![lo * 1e6, hi * 1e6];
    let line_y = vec![eisdrt::predict(model, lo), eisdrt::predict(model, hi)];
    Chart {
        title: format!("calibration: r² = {:.4}", model.r_squared),
        x_label: "τ (µs)".into(),
        y_label: "κ (wt.%)".into(),
        log_x: false,
        series: vec![
            Series {
                label: "samples".into(),
                xs: taus.iter().map(|t| t * 1e6).collect(),
                ys: points.iter().map(|p| p.kappa).collect(),
                mark: Mark::Points,
                color: "#1f5fa8",
            },
            Series {
                label: format!("{:.3} wt.%/µs", eisdrt::sensitivity(model)),
                xs: line_x,
                ys: line_y,
                mark: Mark::Line,
                color: "#c0392b",
            },
        ],
    }
}

pub fn nyquist_chart(title: &str, spectrum: &ImpedanceSpectrum) -> Chart {
    Chart {
        title: title.into(),
        x_label: "Re Z (Ω)".into(),
        y_label: "-Im Z (Ω)".into(),
        log_x: false,
        series: vec![Series {
            label: "Z".into(),
            xs: spectrum.values().iter().map(|z| z.re).collect(),
            ys: spectrum.values().iter().map(|z| -z.im).collect(),
            mark: Mark::Points,
            color: "#1f5fa8",
        }],
    }
}
