//! Trial-averaged convergence curves rendered as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{parse_trace_csv, TraceRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Iteration,
    Seconds,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::Iteration => "iteration",
            Axis::Seconds => "seconds",
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            Axis::Iteration => "iterations.svg",
            Axis::Seconds => "seconds.svg",
        }
    }

    fn of(self, r: &TraceRow) -> f64 {
        match self {
            Axis::Iteration => r.iteration as f64,
            Axis::Seconds => r.seconds,
        }
    }
}

/// Cap on points per polyline.
const MAX_POINTS: usize = 400;
/// Floor applied before taking `log10` of the RSE.
const RSE_FLOOR: f64 = 1e-300;

/// Mean RSE across trials on the union of the trials' x-values, per method
/// (sorted by name). A trial that has finished keeps contributing its final
/// value.
pub fn averaged_series(rows: &[TraceRow], axis: Axis) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut by_method: BTreeMap<&str, BTreeMap<usize, Vec<(f64, f64)>>> = BTreeMap::new();
    for r in rows {
        by_method
            .entry(r.method.as_str())
            .or_default()
            .entry(r.trial)
            .or_default()
            .push((axis.of(r), r.rse));
    }
    by_method
        .into_iter()
        .map(|(method, trials)| {
            let mut curves: Vec<Vec<(f64, f64)>> = trials.into_values().collect();
            for c in &mut curves {
                c.sort_by(|p, q| p.0.total_cmp(&q.0));
            }
            let mut grid: Vec<f64> = curves.iter().flatten().map(|p| p.0).collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let mut cursor = vec![0usize; curves.len()];
            let pts = grid
                .into_iter()
                .map(|x| {
                    let mut sum = 0.0;
                    for (c, k) in curves.iter().zip(cursor.iter_mut()) {
                        while *k + 1 < c.len() && c[*k + 1].0 <= x {
                            *k += 1;
                        }
                        sum += c[*k].1;
                    }
                    (x, sum / curves.len() as f64)
                })
                .collect();
            (method.to_string(), thin(pts))
        })
        .collect()
}

fn thin(pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if pts.len() <= MAX_POINTS {
        return pts;
    }
    let last = pts.len() - 1;
    (0..MAX_POINTS)
        .map(|k| pts[k * last / (MAX_POINTS - 1)])
        .collect()
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Renders one polyline per series with a log-scaled RSE axis and a legend
/// labelled by method name.
pub fn render_svg(series: &[(String, Vec<(f64, f64)>)], axis: Axis) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (80.0, 170.0, 30.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, r) in all {
        let ly = r.max(RSE_FLOOR).log10();
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ly);
        y1 = y1.max(ly);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    let (y0, y1) = (y0.floor(), if y1.ceil() > y0.floor() { y1.ceil() } else { y0.floor() + 1.0 });
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |ly: f64| top + (y1 - ly) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    // decade ticks, thinned to at most ~10 labels
    let decades = (y1 - y0) as i64;
    let step = ((decades + 9) / 10).max(1);
    let mut d = y0 as i64;
    while d <= y1 as i64 {
        let y = sy(d as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            left - 5.0,
            left - 8.0,
            y + 4.0
        );
        d += step;
    }
    for k in 0..=5 {
        let xv = x0 + (x1 - x0) * k as f64 / 5.0;
        let x = sx(xv);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0,
            tick_label(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 15.0,
        axis.label()
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">RSE</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, r)| format!("{:.3},{:.3}", sx(x), sy(r.max(RSE_FLOOR).log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-method="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(name),
            coords.join(" ")
        );
        let ly = top + 15.0 + 18.0 * k as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Reads `trace.csv` text and writes `iterations.svg` and `seconds.svg`
/// into `dir`.
pub fn plot_trace(trace_text: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = parse_trace_csv(trace_text)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "trace has no data rows".into(),
        });
    }
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for axis in [Axis::Iteration, Axis::Seconds] {
        let path = dir.join(axis.file_name());
        fs::write(&path, render_svg(&averaged_series(&rows, axis), axis))?;
        out.push(path);
    }
    Ok(out)
}
