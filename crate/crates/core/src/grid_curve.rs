//! Arclength grids, tangent-angle fields and the curve quantities derived from them.
//!
//! All integrals use the composite trapezoid rule with weights `h/2` at the two
//! end nodes and `h` elsewhere; all derivatives are second-order finite
//! differences.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of grid intervals.
pub const MIN_INTERVALS: usize = 8;

/// Uniform grid `s_i = i·h`, `i = 0..=N`, on `[0, L]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    length: f64,
    intervals: usize,
}

impl Grid {
    pub fn new(length: f64, intervals: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidState(format!("grid length must be positive, got {length}")));
        }
        if intervals < MIN_INTERVALS {
            return Err(Error::InvalidState(format!("grid needs at least {MIN_INTERVALS} intervals, got {intervals}")));
        }
        Ok(Self { length, intervals })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes, `N + 1`.
    pub fn nodes_len(&self) -> usize {
        self.intervals + 1
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.intervals as f64
    }

    /// Node `s_i`; the last node is `L` exactly.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.length
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i == self.intervals {
            0.5 * h
        } else {
            h
        }
    }

    /// Composite trapezoid rule for nodal `values`.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes_len());
        let n = self.intervals;
        let interior: f64 = values[1..n].iter().sum();
        self.spacing() * (interior + 0.5 * (values[0] + values[n]))
    }

    /// Trapezoid rule for `f(i)` evaluated at every node.
    pub fn trapezoid_by(&self, f: impl Fn(usize) -> f64) -> f64 {
        let n = self.intervals;
        let interior: f64 = (1..n).map(&f).sum();
        self.spacing() * (interior + 0.5 * (f(0) + f(n)))
    }
}

/// Boundary treatment of a curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMode {
    /// Open curve, hinged ends: Neumann condition on the angle.
    #[default]
    OpenHinged,
    /// Closed curve; `phi[N] = phi[0] + 2π·winding`.
    ClosedPeriodic,
}

/// Tangent-angle samples on a grid at time `t`. Angles are stored unwrapped.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleField {
    grid: Grid,
    phi: Vec<f64>,
    t: f64,
}

impl AngleField {
    pub fn new(grid: Grid, phi: Vec<f64>, t: f64) -> Result<Self> {
        if phi.len() != grid.nodes_len() {
            return Err(Error::InvalidState(format!("expected {} angle samples, got {}", grid.nodes_len(), phi.len())));
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite angle at node {i}")));
        }
        if !t.is_finite() {
            return Err(Error::InvalidState("non-finite time stamp".into()));
        }
        Ok(Self { grid, phi, t })
    }

    /// Sample `f` at the grid nodes.
    pub fn from_fn(grid: Grid, t: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let phi = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, phi, t)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn into_phi(self) -> Vec<f64> {
        self.phi
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// Number of full turns of the tangent between the two ends.
    pub fn winding(&self) -> i64 {
        let n = self.grid.intervals;
        ((self.phi[n] - self.phi[0]) / TAU).round() as i64
    }

    pub fn to_json(&self) -> String {
        let rec = AngleFieldRecord {
            length: self.grid.length,
            intervals: self.grid.intervals,
            t: self.t,
            phi: self.phi.clone(),
        };
        serde_json::to_string_pretty(&rec).expect("angle field serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: AngleFieldRecord = serde_json::from_str(text)
            .map_err(|e| Error::Parse { path: "<angle field>".into(), message: e.to_string() })?;
        Self::new(Grid::new(rec.length, rec.intervals)?, rec.phi, rec.t)
    }
}

#[derive(Serialize, Deserialize)]
struct AngleFieldRecord {
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "N")]
    intervals: usize,
    t: f64,
    phi: Vec<f64>,
}

/// Prescribed endpoint displacement `Δp = p₊ − p₋` for a curve of length `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    delta_p: [f64; 2],
    length: f64,
}

impl ConstraintSpec {
    /// Requires `ΔL = L − |Δp| > 0`.
    pub fn new(delta_p: [f64; 2], length: f64) -> Result<Self> {
        if !(delta_p.iter().all(|v| v.is_finite()) && length.is_finite() && length > 0.0) {
            return Err(Error::Constraint(format!(
                "displacement {delta_p:?} and length {length} must be finite with L > 0"
            )));
        }
        let c = Self { delta_p, length };
        if c.delta_l() <= 0.0 {
            return Err(Error::Constraint(format!(
                "slack L - |dp| = {:.3e} must be strictly positive (L = {length}, |dp| = {})",
                c.delta_l(),
                c.distance()
            )));
        }
        Ok(c)
    }

    pub fn delta_p(&self) -> [f64; 2] {
        self.delta_p
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `|Δp|`.
    pub fn distance(&self) -> f64 {
        self.delta_p[0].hypot(self.delta_p[1])
    }

    /// Slack `ΔL = L − |Δp|`.
    pub fn delta_l(&self) -> f64 {
        self.length - self.distance()
    }
}

/// A reconstructed curve: positions, frame and signed curvature at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSample {
    pub s: Vec<f64>,
    pub phi: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub tangents: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub signed_curvature: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CurveRow {
    s: f64,
    x: f64,
    y: f64,
    phi: f64,
    k: f64,
}

impl CurveSample {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// CSV with header `s,x,y,phi,k`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            w.serialize(CurveRow {
                s: self.s[i],
                x: self.positions[i][0],
                y: self.positions[i][1],
                phi: self.phi[i],
                k: self.signed_curvature[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`CurveSample::write_csv`]; the frame is recomputed from `phi`.
    pub fn read_csv<R: Read>(input: R) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut out = CurveSample {
            s: Vec::new(),
            phi: Vec::new(),
            positions: Vec::new(),
            tangents: Vec::new(),
            normals: Vec::new(),
            signed_curvature: Vec::new(),
        };
        for row in r.deserialize() {
            let row: CurveRow = row?;
            let (sin, cos) = row.phi.sin_cos();
            out.s.push(row.s);
            out.phi.push(row.phi);
            out.positions.push([row.x, row.y]);
            out.tangents.push([cos, sin]);
            out.normals.push([-sin, cos]);
            out.signed_curvature.push(row.k);
        }
        Ok(out)
    }
}

fn check_finite(field: &AngleField) -> Result<()> {
    match field.phi.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidState(format!("non-finite angle at node {i}"))),
        None => Ok(()),
    }
}

/// Integrate the tangent from `p_minus`; curvature uses the open-curve stencils.
pub fn reconstruct_curve(field: &AngleField, p_minus: [f64; 2]) -> Result<CurveSample> {
    reconstruct_curve_in(field, p_minus, CurveMode::OpenHinged)
}

/// As [`reconstruct_curve`], with the curvature stencil matching `mode`.
pub fn reconstruct_curve_in(field: &AngleField, p_minus: [f64; 2], mode: CurveMode) -> Result<CurveSample> {
    check_finite(field)?;
    let h = field.grid.spacing();
    let tangents: Vec<[f64; 2]> = field
        .phi
        .iter()
        .map(|p| {
            let (s, c) = p.sin_cos();
            [c, s]
        })
        .collect();
    let normals = tangents.iter().map(|t| [-t[1], t[0]]).collect();
    let mut positions = Vec::with_capacity(tangents.len());
    let mut f = p_minus;
    positions.push(f);
    for w in tangents.windows(2) {
        f[0] += 0.5 * h * (w[0][0] + w[1][0]);
        f[1] += 0.5 * h * (w[0][1] + w[1][1]);
        positions.push(f);
    }
    Ok(CurveSample {
        s: field.grid.nodes(),
        phi: field.phi.clone(),
        positions,
        tangents,
        normals,
        signed_curvature: curvature(field, mode),
    })
}

/// One-sided slope at the left end of `v` (mirror for the right end).
///
/// Second order in general, and exact on `1, s, s², s⁴, s⁶`: at an end where
/// the data is even (a hinged end) the boundary curvature is resolved to
/// `O(h⁷)` instead of the nominal `O(h²)`.
fn left_slope(v: [f64; 5], h: f64) -> f64 {
    let d = |j: usize| v[j] - v[0];
    (2.8 * d(1) - 1.4 * d(2) + 0.4 * d(3) - 0.05 * d(4)) / h
}

/// Signed curvature `k = ∂ₛφ`: centered differences inside, second-order
/// one-sided differences at both ends.
pub fn signed_curvature(field: &AngleField) -> Vec<f64> {
    let p = &field.phi;
    let n = field.grid.intervals;
    let h = field.grid.spacing();
    let mut k = vec![0.0; n + 1];
    for i in 1..n {
        k[i] = (p[i + 1] - p[i - 1]) / (2.0 * h);
    }
    k[0] = left_slope([p[0], p[1], p[2], p[3], p[4]], h);
    k[n] = -left_slope([p[n], p[n - 1], p[n - 2], p[n - 3], p[n - 4]], h);
    k
}

/// Signed curvature of a closed curve, wrapping the stencil across the seam.
pub fn signed_curvature_periodic(field: &AngleField) -> Vec<f64> {
    let p = &field.phi;
    let n = field.grid.intervals;
    let h = field.grid.spacing();
    let jump = TAU * field.winding() as f64;
    let mut k = vec![0.0; n + 1];
    for i in 1..n {
        k[i] = (p[i + 1] - p[i - 1]) / (2.0 * h);
    }
    k[0] = (p[1] - (p[n - 1] - jump)) / (2.0 * h);
    k[n] = k[0];
    k
}

/// Curvature with the stencil appropriate for `mode`.
pub fn curvature(field: &AngleField, mode: CurveMode) -> Vec<f64> {
    match mode {
        CurveMode::OpenHinged => signed_curvature(field),
        CurveMode::ClosedPeriodic => signed_curvature_periodic(field),
    }
}

/// Nodal derivative of `v`: centered inside, `(−3, 4, −1)/2h` at the ends.
pub fn derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len() - 1;
    let mut d = vec![0.0; n + 1];
    for i in 1..n {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n] = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h);
    d
}

/// Centered derivative of periodic nodal data (`v[N]` duplicates `v[0]`).
pub fn derivative_periodic(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len() - 1;
    let mut d = vec![0.0; n + 1];
    for i in 1..n {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d[0] = (v[1] - v[n - 1]) / (2.0 * h);
    d[n] = d[0];
    d
}

/// `½∫k² ds` over the open-curve curvature.
pub fn bending_energy(field: &AngleField) -> f64 {
    bending_energy_in(field, CurveMode::OpenHinged)
}

pub fn bending_energy_in(field: &AngleField, mode: CurveMode) -> f64 {
    let k = curvature(field, mode);
    0.5 * field.grid.trapezoid_by(|i| k[i] * k[i])
}

/// `∫(cos φ, sin φ) ds`.
pub fn tangent_integral(field: &AngleField) -> [f64; 2] {
    let g = &field.grid;
    let n = g.intervals;
    let (mut cx, mut cy) = (0.0, 0.0);
    for (i, p) in field.phi.iter().enumerate() {
        let (s, c) = p.sin_cos();
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        cx += w * c;
        cy += w * s;
    }
    let h = g.spacing();
    [h * cx, h * cy]
}

/// `∫T ds − Δp`.
pub fn constraint_residual(field: &AngleField, c: &ConstraintSpec) -> [f64; 2] {
    let t = tangent_integral(field);
    [t[0] - c.delta_p[0], t[1] - c.delta_p[1]]
}

/// Even, `2L`-periodic extension of an angle field.
///
/// Grid nodes return the stored sample verbatim; elsewhere a cubic Lagrange
/// interpolant through reflected neighbours is used.
#[derive(Clone, Debug, PartialEq)]
pub struct EvenPeriodicExtension {
    grid: Grid,
    samples: Vec<f64>,
}

pub fn extend_even_periodic(phi0: &AngleField) -> EvenPeriodicExtension {
    EvenPeriodicExtension { grid: phi0.grid, samples: phi0.phi.clone() }
}

impl EvenPeriodicExtension {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn period(&self) -> f64 {
        2.0 * self.grid.length
    }

    /// Fold `s` into `[0, L]`.
    pub fn fold(&self, s: f64) -> f64 {
        let l = self.grid.length;
        // fold |s| so that evaluation is exactly even
        let r = s.abs().rem_euclid(2.0 * l);
        if r > l {
            2.0 * l - r
        } else {
            r
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.grid.intervals;
        let x = self.fold(s) / self.grid.spacing();
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 {
            return self.samples[(nearest as usize).min(n)];
        }
        let n_i = n as i64;
        let reflect = |j: i64| -> usize {
            let j = if j < 0 { -j } else { j };
            (if j > n_i { 2 * n_i - j } else { j }) as usize
        };
        let base = x.floor() as i64 - 1;
        let mut acc = 0.0;
        for a in 0..4 {
            let mut lag = 1.0;
            for b in 0..4 {
                if a != b {
                    lag *= (x - (base + b) as f64) / (a - b) as f64;
                }
            }
            acc += lag * self.samples[reflect(base + a)];
        }
        acc
    }
}
