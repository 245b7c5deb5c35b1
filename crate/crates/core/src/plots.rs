//! Static SVG plots of a completed run.
//!
//! Output is a pure function of the trajectory: coordinates are printed with a
//! fixed number of decimals and no timestamps are embedded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::grid_curve::reconstruct_curve_in;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
/// Longest polyline drawn for time series; longer series are strided.
const MAX_POINTS: usize = 2000;

#[derive(Clone, Copy, Debug)]
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, equal_aspect: bool) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let w = hi - lo;
            let p = if w > 0.0 { 0.05 * w } else { 0.5 * lo.abs().max(1e-12) };
            (lo - p, hi + p)
        };
        let (mut x, mut y) = (pad(x0, x1), pad(y0, y1));
        if equal_aspect {
            let sx = (x.1 - x.0) / (WIDTH - 2.0 * MARGIN);
            let sy = (y.1 - y.0) / (HEIGHT - 2.0 * MARGIN);
            let s = sx.max(sy);
            let (cx, cy) = ((x.0 + x.1) / 2.0, (y.0 + y.1) / 2.0);
            x = (cx - s * (WIDTH / 2.0 - MARGIN), cx + s * (WIDTH / 2.0 - MARGIN));
            y = (cy - s * (HEIGHT / 2.0 - MARGIN), cy + s * (HEIGHT / 2.0 - MARGIN));
        }
        Self { x, y }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(body, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#,
            WIDTH / 2.0
        );
        Self { body }
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            self.body,
            r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for i in 0..=4 {
            let a = i as f64 / 4.0;
            let xv = f.x.0 + a * (f.x.1 - f.x.0);
            let yv = f.y.0 + a * (f.y.1 - f.y.0);
            let (xp, yp) = (f.px(xv), f.py(yv));
            let _ = writeln!(
                self.body,
                r#"<text x="{xp:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                b + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                self.body,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                l - 4.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            self.body,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{xlabel}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0
        );
        let _ = writeln!(
            self.body,
            r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{ylabel}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        );
    }

    fn polyline(&mut self, f: &Frame, pts: impl Iterator<Item = (f64, f64)>, color: &str) {
        let mut coords = String::new();
        for (x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(coords, "{:.2},{:.2} ", f.px(x), f.py(y));
        }
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.trim_end()
        );
    }

    fn finish(mut self, path: &Path) -> Result<PathBuf> {
        self.body.push_str("</svg>\n");
        std::fs::write(path, self.body).map_err(|e| Error::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Blue (early) to red (late).
fn graded(a: f64) -> String {
    let a = a.clamp(0.0, 1.0);
    let r = (40.0 + 200.0 * a).round() as u8;
    let b = (240.0 - 200.0 * a).round() as u8;
    format!("#{r:02x}30{b:02x}")
}

fn strided<T: Copy>(v: &[T]) -> impl Iterator<Item = T> + '_ {
    let stride = v.len().div_ceil(MAX_POINTS).max(1);
    let last = v.len().saturating_sub(1);
    v.iter().enumerate().filter(move |(i, _)| i % stride == 0 || *i == last).map(|(_, x)| *x)
}

/// Write `curves.svg`, `energy.svg` and `residual.svg` into `dir`.
///
/// A trajectory without snapshots produces no files and an empty list.
pub fn emit_plots(traj: &FlowTrajectory, p_minus: [f64; 2], dir: &Path) -> Result<Vec<PathBuf>> {
    if traj.snapshots.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(3);

    let curves = traj
        .snapshots
        .iter()
        .map(|f| reconstruct_curve_in(f, p_minus, traj.config.mode))
        .collect::<Result<Vec<_>>>()?;
    let frame = Frame::fit(curves.iter().flat_map(|c| c.positions.iter().map(|p| (p[0], p[1]))), true);
    let (t_first, t_last) = (traj.snapshots[0].time(), traj.snapshots[traj.snapshots.len() - 1].time());
    let mut svg = Svg::new(&format!("curve snapshots, t = {} .. {}", tick(t_first), tick(t_last)));
    svg.axes(&frame, "x", "y");
    for (c, f) in curves.iter().zip(&traj.snapshots) {
        let a = if t_last > t_first { (f.time() - t_first) / (t_last - t_first) } else { 1.0 };
        svg.polyline(&frame, c.positions.iter().map(|p| (p[0], p[1])), &graded(a));
    }
    out.push(svg.finish(&dir.join("curves.svg"))?);

    let energy: Vec<(f64, f64)> = traj.diagnostics.iter().map(|r| (r.t, r.energy)).collect();
    let frame = Frame::fit(energy.iter().copied(), false);
    let mut svg = Svg::new("bending energy");
    svg.axes(&frame, "t", "F");
    svg.polyline(&frame, strided(&energy), "#1f4fb4");
    out.push(svg.finish(&dir.join("energy.svg"))?);

    let residual: Vec<(f64, f64)> = traj.diagnostics.iter().map(|r| (r.t, r.residual_eq.max(1e-300).log10())).collect();
    let frame = Frame::fit(residual.iter().copied(), false);
    let mut svg = Svg::new("equilibrium residual");
    svg.axes(&frame, "t", "log10 residual");
    svg.polyline(&frame, strided(&residual), "#b41f4f");
    out.push(svg.finish(&dir.join("residual.svg"))?);
    Ok(out)
}
