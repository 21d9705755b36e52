//! Self-contained SVG trajectory plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::output::{self, Summary, TrajectoryTable};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("missing trajectory file {0}")]
    MissingTrajectory(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

const PANEL: f64 = 420.0;
const MARGIN: f64 = 48.0;
const SEGMENTS: usize = 48;
const MAX_POINTS: usize = 1500;
const START: (f64, f64, f64) = (255.0, 140.0, 0.0);
const END: (f64, f64, f64) = (106.0, 27.0, 154.0);

/// Orange-to-purple color at progress `t` in `[0, 1]`.
fn progress_color(t: f64) -> String {
    let mix = |a: f64, b: f64| (a + (b - a) * t.clamp(0.0, 1.0)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(START.0, END.0), mix(START.1, END.1), mix(START.2, END.2))
}

struct Bounds {
    x: (f64, f64),
    y: (f64, f64),
}

impl Bounds {
    fn of<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut b = Bounds {
            x: (f64::INFINITY, f64::NEG_INFINITY),
            y: (f64::INFINITY, f64::NEG_INFINITY),
        };
        for &(x, y) in points {
            b.x = (b.x.0.min(x), b.x.1.max(x));
            b.y = (b.y.0.min(y), b.y.1.max(y));
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                return (0.0, 1.0);
            }
            let w = (hi - lo).max(1e-12 * lo.abs().max(1.0));
            (lo - 0.05 * w, hi + 0.05 * w)
        };
        Bounds {
            x: pad(b.x),
            y: pad(b.y),
        }
    }
}

/// One scatter panel of polylines; each series is a list of (x, y) points.
fn panel(svg: &mut String, class: &str, origin_x: f64, labels: (&str, &str), series: &[Vec<(f64, f64)>]) {
    let b = Bounds::of(series.iter().flatten());
    let to_px = |(x, y): (f64, f64)| {
        (
            origin_x + MARGIN + (x - b.x.0) / (b.x.1 - b.x.0) * (PANEL - 2.0 * MARGIN),
            PANEL - MARGIN - (y - b.y.0) / (b.y.1 - b.y.0) * (PANEL - 2.0 * MARGIN),
        )
    };
    let _ = writeln!(svg, r#"<g class="panel {class}">"#);
    let inner = PANEL - 2.0 * MARGIN;
    let _ = writeln!(
        svg,
        r##"<rect x="{:.1}" y="{MARGIN:.1}" width="{inner:.1}" height="{inner:.1}" fill="none" stroke="#444"/>"##,
        origin_x + MARGIN
    );
    let text = |svg: &mut String, x: f64, y: f64, anchor: &str, s: &str| {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="11" font-family="sans-serif" text-anchor="{anchor}">{s}</text>"#
        );
    };
    let (x0, x1, y0) = (origin_x + MARGIN, origin_x + PANEL - MARGIN, PANEL - MARGIN);
    text(svg, x0, y0 + 14.0, "start", &format!("{:.3}", b.x.0));
    text(svg, x1, y0 + 14.0, "end", &format!("{:.3}", b.x.1));
    text(svg, x0 - 4.0, y0, "end", &format!("{:.3}", b.y.0));
    text(svg, x0 - 4.0, MARGIN + 8.0, "end", &format!("{:.3}", b.y.1));
    text(svg, (x0 + x1) / 2.0, y0 + 30.0, "middle", labels.0);
    text(svg, origin_x + 14.0, PANEL / 2.0, "middle", labels.1);

    for (i, pts) in series.iter().enumerate() {
        let _ = writeln!(svg, r#"<g class="trajectory" data-init="{i}">"#);
        let n = pts.len();
        if n >= 2 {
            let stride = n.div_ceil(MAX_POINTS).max(1);
            let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
            if *idx.last().expect("non-empty") != n - 1 {
                idx.push(n - 1);
            }
            let segs = SEGMENTS.min(idx.len() - 1);
            for s in 0..segs {
                let a = s * (idx.len() - 1) / segs;
                let z = (s + 1) * (idx.len() - 1) / segs;
                let coords: Vec<String> = idx[a..=z]
                    .iter()
                    .map(|&j| {
                        let (px, py) = to_px(pts[j]);
                        format!("{px:.2},{py:.2}")
                    })
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke-width="1.6" stroke="{}" points="{}"/>"#,
                    progress_color((s as f64 + 0.5) / segs as f64),
                    coords.join(" ")
                );
            }
        }
        if let Some(&p0) = pts.first() {
            let (px, py) = to_px(p0);
            let _ = writeln!(svg, r#"<circle class="init" cx="{px:.2}" cy="{py:.2}" r="3.5" fill="black"/>"#);
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</g>");
}

/// Renders the trajectories of one aggregator: a loss-space panel and, for
/// two-dimensional problems, a parameter-space panel.
pub fn render(aggregator: &str, trajectories: &[TrajectoryTable]) -> String {
    let two_d = trajectories.first().is_some_and(|t| t.dim == 2);
    let panels = if two_d { 2.0 } else { 1.0 };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = PANEL * panels,
        h = PANEL + 20.0
    );
    let _ = writeln!(svg, "<title>{aggregator}</title>");
    let _ = writeln!(
        svg,
        r#"<text x="8" y="16" font-size="13" font-family="sans-serif">{aggregator}</text>"#
    );
    let losses: Vec<Vec<(f64, f64)>> = trajectories
        .iter()
        .map(|t| {
            t.losses
                .iter()
                .map(|l| (l[0], l.get(1).copied().unwrap_or(0.0)))
                .collect()
        })
        .collect();
    panel(&mut svg, "loss", 0.0, ("loss_0", "loss_1"), &losses);
    if two_d {
        let params: Vec<Vec<(f64, f64)>> =
            trajectories.iter().map(|t| t.theta.iter().map(|p| (p[0], p[1])).collect()).collect();
        panel(&mut svg, "parameter", PANEL, ("theta_0", "theta_1"), &params);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes one `<aggregator>.svg` per aggregator in `summary` into `out_dir`.
/// Trajectory files are looked up next to the summary.
pub fn plot_summary(summary_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PlotError::Io { path, source }
    };
    let summary: Summary = output::read_json(summary_path).map_err(io_err(summary_path))?;
    let base = summary_path.parent().unwrap_or(Path::new("."));
    let mut by_agg: BTreeMap<&str, Vec<&output::CellSummary>> = BTreeMap::new();
    for c in &summary.cells {
        by_agg.entry(c.aggregator.as_str()).or_default().push(c);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    for (agg, mut cells) in by_agg {
        cells.sort_by_key(|c| c.init_index);
        let mut tables = Vec::with_capacity(cells.len());
        for c in cells {
            let path = base.join(&c.trajectory_file);
            if !path.exists() {
                return Err(PlotError::MissingTrajectory(path));
            }
            tables.push(output::read_trajectory_file(&path).map_err(io_err(&path))?);
        }
        let path = out_dir.join(format!("{agg}.svg"));
        fs::write(&path, render(agg, &tables)).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
