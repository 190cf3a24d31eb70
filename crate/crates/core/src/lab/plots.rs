//! Deterministic SVG line plots of the diagnostics tables.
//!
//! Axis policy: x spans the data range; y spans the finite data range padded
//! by 5% on both sides (a flat series gets ±10% of its value, or ±1 at zero).
//! Five ticks per axis, labels in `{:.3e}`. Non-finite samples break the line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::lab::output::read_columns;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo <= hi).then_some((lo, hi))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    /// `None` when there is nothing finite to draw.
    pub fn render(&self) -> Option<String> {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = range(all().filter(|p| p.1.is_finite()).map(|p| p.0))?;
        let (y0, y1) = range(all().map(|p| p.1))?;
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x1 + 1.0) };
        let (y0, y1) = if y1 > y0 {
            let pad = 0.05 * (y1 - y0);
            (y0 - pad, y1 + pad)
        } else if y0 != 0.0 {
            (y0 - 0.1 * y0.abs(), y1 + 0.1 * y1.abs())
        } else {
            (-1.0, 1.0)
        };
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ccc"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3e}</text>"##,
                TOP,
                TOP + ph,
                TOP + ph + 16.0
            );
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ccc"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3e}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut runs: Vec<Vec<(f64, f64)>> = vec![vec![]];
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    runs.last_mut().unwrap().push((sx(x), sy(y)));
                } else if !runs.last().unwrap().is_empty() {
                    runs.push(vec![]);
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 14.0 * i as f64 + 10.0;
            let lx = WIDTH - RIGHT + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 16.0,
                lx + 20.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        Some(out)
    }
}

struct Spec {
    csv: &'static str,
    svg: &'static str,
    title: &'static str,
    /// Column-name prefixes to draw.
    columns: &'static [&'static str],
}

const SPECS: &[Spec] = &[
    Spec {
        csv: "energies.csv",
        svg: "energy.svg",
        title: "energy",
        columns: &["energy", "e_norm"],
    },
    Spec {
        csv: "modulation.csv",
        svg: "d.svg",
        title: "proximity d(t)",
        columns: &["d"],
    },
    Spec {
        csv: "modulation.csv",
        svg: "lambda.svg",
        title: "scales",
        columns: &["lambda_"],
    },
    Spec {
        csv: "modulation.csv",
        svg: "components.svg",
        title: "spectral components",
        columns: &["a_minus_", "a_plus_"],
    },
    Spec {
        csv: "virial.csv",
        svg: "virial.svg",
        title: "virial residuals",
        columns: &["residual_"],
    },
    Spec {
        csv: "exterior.csv",
        svg: "exterior.svg",
        title: "exterior energy",
        columns: &["exterior"],
    },
    Spec {
        csv: "trapping.csv",
        svg: "trapping.svg",
        title: "Nehari K and modified energy",
        columns: &["k", "etilde"],
    },
];

fn matches(col: &str, pat: &str) -> bool {
    if pat.ends_with('_') {
        col.starts_with(pat)
    } else {
        col == pat
    }
}

/// Render every plot whose table exists in `run_dir` as (file name, contents).
/// Tables of disabled diagnostics are simply absent and skipped.
pub fn render_plots(run_dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = vec![];
    for spec in SPECS {
        let path = run_dir.join(spec.csv);
        if !path.exists() {
            continue;
        }
        let (header, cols) = read_columns(&path)?;
        let Some(tcol) = header.iter().position(|h| h == "t") else {
            eprintln!("warning: {} has no t column, skipping {}", spec.csv, spec.svg);
            continue;
        };
        let series: Vec<Series> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| spec.columns.iter().any(|p| matches(h, p)))
            .map(|(k, h)| Series {
                name: h.clone(),
                points: cols[tcol].iter().zip(&cols[k]).map(|(t, v)| (*t, *v)).collect(),
            })
            .collect();
        let plot = LinePlot {
            title: spec.title.to_string(),
            x_label: "t".to_string(),
            series,
        };
        if let Some(svg) = plot.render() {
            out.push((spec.svg.to_string(), svg));
        }
    }
    Ok(out)
}

/// Write the plots into `run_dir/plots`.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let plots = render_plots(run_dir)?;
    let dir = run_dir.join("plots");
    let mut written = vec![];
    if !plots.is_empty() {
        std::fs::create_dir_all(&dir)?;
    }
    for (name, svg) in plots {
        let p = dir.join(name);
        std::fs::write(&p, svg)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_breaks_on_nan() {
        let plot = LinePlot {
            title: "a<b".into(),
            x_label: "t".into(),
            series: vec![Series {
                name: "s".into(),
                points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0), (3.0, 2.0)],
            }],
        };
        let svg = plot.render().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg, plot.render().unwrap());
    }

    #[test]
    fn empty_input_draws_nothing() {
        let plot = LinePlot {
            title: "x".into(),
            x_label: "t".into(),
            series: vec![],
        };
        assert!(plot.render().is_none());
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plots(dir.path()).unwrap().is_empty());
    }
}
