//! Per-step and per-run checks of the identities satisfied by the flow.

use serde::{Deserialize, Serialize};

use crate::flow::{equilibrium_residual, reference_multipliers, FlowTrajectory, Termination};
use crate::grid_curve::{
    bending_energy_in, constraint_residual, curvature, AngleField, ConstraintSpec, CurveMode, Grid,
};
use crate::multipliers::{det_gram, det_lower_bound, gram_matrix, MultiplierMethod};

/// Relative threshold used by [`inflection_count`] when none is given.
pub const INFLECTION_REL_THRESHOLD: f64 = 1e-7;

/// Everything monitored at one time level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    /// Bending energy.
    pub energy: f64,
    /// `(F_n − F_{n−1})/dt`.
    pub df_dt: Option<f64>,
    /// `−∫|∂ₜT|² ds` over the last step.
    pub dissipation: Option<f64>,
    pub constraint_res: [f64; 2],
    pub lambda: [f64; 2],
    pub det_a: f64,
    /// `None` when no valid certificate exists (e.g. closed curves).
    pub c1: Option<f64>,
    pub k_bdry: [f64; 2],
    /// `∂ₛ²k` at both ends; open curves only.
    pub k2_bdry: Option<[f64; 2]>,
    pub inflections: usize,
    pub min_k: f64,
    pub residual_eq: f64,
    /// `‖κ‖_{m,2}` for `m = 0, 1, 2`; snapshot steps only.
    pub sobolev: Option<Vec<f64>>,
    /// Defects of the first- and second-order energy identities; snapshot steps only.
    pub higher_energy_defect: Option<[f64; 2]>,
}

impl DiagnosticsRecord {
    /// `|dF/dt + ∫|∂ₜT|²|` for the step that produced this record.
    pub fn identity_defect(&self) -> Option<f64> {
        Some((self.df_dt? - self.dissipation?).abs())
    }
}

/// Fixed inputs shared by all records of one run.
#[derive(Clone, Copy, Debug)]
pub struct RecordContext {
    pub constraint: ConstraintSpec,
    pub mode: CurveMode,
    pub dt: f64,
    pub method: MultiplierMethod,
}

/// Build the record for `cur`, optionally reached from `prev` with multipliers `lambda`.
pub fn record_state(
    ctx: &RecordContext,
    step: usize,
    prev: Option<&AngleField>,
    cur: &AngleField,
    lambda: Option<[f64; 2]>,
    full: bool,
) -> DiagnosticsRecord {
    let grid = cur.grid();
    let n = grid.intervals();
    let k = curvature(cur, ctx.mode);
    let energy = bending_energy_in(cur, ctx.mode);
    let (df_dt, dissipation) = match prev {
        Some(p) => (Some((energy - bending_energy_in(p, ctx.mode)) / ctx.dt), Some(-dissipation(p, cur, ctx.dt))),
        None => (None, None),
    };
    let reference = reference_multipliers(cur, ctx.method, ctx.mode);
    let lambda = lambda.or_else(|| reference.as_ref().ok().copied()).unwrap_or([0.0, 0.0]);
    let residual_eq = equilibrium_residual(cur, reference.unwrap_or(lambda), ctx.mode);
    let k2_bdry = boundary_parity_check(cur, 1, ctx.mode).map(|r| r[1]);
    let higher_energy_defect = match (full, prev) {
        (true, Some(p)) => Some([
            higher_energy_defect(1, p, cur, ctx.dt, lambda, ctx.mode),
            higher_energy_defect(2, p, cur, ctx.dt, lambda, ctx.mode),
        ]),
        _ => None,
    };
    DiagnosticsRecord {
        step,
        t: cur.time(),
        energy,
        df_dt,
        dissipation,
        constraint_res: constraint_residual(cur, &ctx.constraint),
        lambda,
        det_a: det_gram(&gram_matrix(cur)),
        c1: det_lower_bound(cur, &ctx.constraint).ok().map(|c| c.c1),
        k_bdry: [k[0], k[n]],
        k2_bdry,
        inflections: inflection_count(&k, default_inflection_threshold(&k)),
        min_k: k.iter().copied().fold(f64::INFINITY, f64::min),
        residual_eq,
        sobolev: full.then(|| sobolev_norms(&k, grid, 2, 2.0, ctx.mode)),
        higher_energy_defect,
    }
}

/// `u = ∫|∂ₜT|² ds = ∫((φ_{n+1} − φ_n)/dt)² ds`.
pub fn dissipation(prev: &AngleField, next: &AngleField, dt: f64) -> f64 {
    let (a, b) = (prev.phi(), next.phi());
    next.grid().trapezoid_by(|i| ((b[i] - a[i]) / dt).powi(2))
}

/// `|(F_{n+1} − F_n)/dt + ∫|∂ₜT|² ds|` for a consecutive pair.
pub fn energy_identity_defect(prev: &AngleField, next: &AngleField, dt: f64, mode: CurveMode) -> f64 {
    let df = (bending_energy_in(next, mode) - bending_energy_in(prev, mode)) / dt;
    (df + dissipation(prev, next, dt)).abs()
}

/// Fourth-order first derivative: centered inside, one-sided at the two
/// nodes nearest each end, so repeated application stays accurate there.
fn derivative4(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len() - 1;
    let c = 1.0 / (12.0 * h);
    let mut d = vec![0.0; n + 1];
    for i in 2..n - 1 {
        d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) * c;
    }
    let end0 = |w: [f64; 5]| (-25.0 * w[0] + 48.0 * w[1] - 36.0 * w[2] + 16.0 * w[3] - 3.0 * w[4]) * c;
    let end1 = |w: [f64; 5]| (-3.0 * w[0] - 10.0 * w[1] + 18.0 * w[2] - 6.0 * w[3] + w[4]) * c;
    let left = [v[0], v[1], v[2], v[3], v[4]];
    let right = [v[n], v[n - 1], v[n - 2], v[n - 3], v[n - 4]];
    d[0] = end0(left);
    d[1] = end1(left);
    d[n] = -end0(right);
    d[n - 1] = -end1(right);
    d
}

/// Fourth-order centered derivative of periodic samples (`v[n]` repeats `v[0]`).
fn derivative4_periodic(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len() - 1;
    let at = |i: isize| v[i.rem_euclid(n as isize) as usize];
    let mut d: Vec<f64> =
        (0..n as isize).map(|i| (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) / (12.0 * h)).collect();
    d.push(d[0]);
    d
}

/// `m` repeated discrete derivatives.
fn derivatives(v: &[f64], h: f64, m: usize, mode: CurveMode) -> Vec<f64> {
    let mut out = v.to_vec();
    for _ in 0..m {
        out = match mode {
            CurveMode::OpenHinged => derivative4(&out, h),
            CurveMode::ClosedPeriodic => derivative4_periodic(&out, h),
        };
    }
    out
}

/// Defect of the `m`-th order energy identity (`m ∈ {1, 2}`) over one step:
/// `(E_m(next) − E_m(prev))/dt + ∫(∂ₛ^{m+1}k)² + ∫∂ₛ^{m+1}k·∂ₛ^{m−1}(⟨λ,T⟩k)`,
/// with `E_m = ½∫(∂ₛᵐk)²` and the spatial terms taken at `next`.
pub fn higher_energy_defect(
    m: usize,
    prev: &AngleField,
    next: &AngleField,
    dt: f64,
    lambda: [f64; 2],
    mode: CurveMode,
) -> f64 {
    assert!((1..=2).contains(&m), "higher-order identities are implemented for m = 1, 2");
    let grid = next.grid();
    let h = grid.spacing();
    let e_m = |f: &AngleField| {
        let d = derivatives(&curvature(f, mode), h, m, mode);
        0.5 * grid.trapezoid_by(|i| d[i] * d[i])
    };
    let k = curvature(next, mode);
    let top = derivatives(&k, h, m + 1, mode);
    let forced: Vec<f64> =
        next.phi().iter().zip(&k).map(|(p, k)| (lambda[0] * p.cos() + lambda[1] * p.sin()) * k).collect();
    let low = derivatives(&forced, h, m - 1, mode);
    let rate = if prev.phi() == next.phi() { 0.0 } else { (e_m(next) - e_m(prev)) / dt };
    let lhs = rate + grid.trapezoid_by(|i| top[i] * top[i]);
    let rhs = -grid.trapezoid_by(|i| top[i] * low[i]);
    (lhs - rhs).abs()
}

/// One-sided estimates of `|∂ₛ^{2ℓ}k|` at both ends for `ℓ = 0..=ell_max`
/// (`ell_max ≤ 2`); `None` for closed curves, where there is no boundary.
pub fn boundary_parity_check(field: &AngleField, ell_max: usize, mode: CurveMode) -> Option<Vec<[f64; 2]>> {
    if mode == CurveMode::ClosedPeriodic {
        return None;
    }
    assert!(ell_max <= 2, "stencil width limits ell_max to 2");
    let k = curvature(field, mode);
    let n = field.grid().intervals();
    let h = field.grid().spacing();
    let at = |j: usize, right: bool| if right { k[n - j] } else { k[j] };
    let d2 = |r: bool| (2.0 * at(0, r) - 5.0 * at(1, r) + 4.0 * at(2, r) - at(3, r)) / (h * h);
    let d4 = |r: bool| {
        (3.0 * at(0, r) - 14.0 * at(1, r) + 26.0 * at(2, r) - 24.0 * at(3, r) + 11.0 * at(4, r) - 2.0 * at(5, r))
            / h.powi(4)
    };
    let mut out = vec![[k[0].abs(), k[n].abs()]];
    if ell_max >= 1 {
        out.push([d2(false).abs(), d2(true).abs()]);
    }
    if ell_max >= 2 {
        out.push([d4(false).abs(), d4(true).abs()]);
    }
    Some(out)
}

pub fn default_inflection_threshold(k: &[f64]) -> f64 {
    let max = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (INFLECTION_REL_THRESHOLD * max).max(f64::MIN_POSITIVE)
}

/// Sign changes of `k` over the interior nodes after zeroing `|kᵢ| < threshold`.
pub fn inflection_count(k: &[f64], threshold: f64) -> usize {
    let n = k.len();
    if n < 3 {
        return 0;
    }
    let mut count = 0;
    let mut last = 0i8;
    for &v in &k[1..n - 1] {
        let sign = if v.abs() < threshold {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        };
        if sign != 0 {
            if last != 0 && sign != last {
                count += 1;
            }
            last = sign;
        }
    }
    count
}

/// Scale-invariant norms `‖∂ₛⁱk‖_p = L^{i+1−1/p}(∫|∂ₛⁱk|^p)^{1/p}` for `i = 0..=m_max`.
pub fn sobolev_norms(k: &[f64], grid: &Grid, m_max: usize, p: f64, mode: CurveMode) -> Vec<f64> {
    assert!(m_max <= 3, "derivatives beyond third order are not supported");
    let l = grid.length();
    let h = grid.spacing();
    let mut d = k.to_vec();
    let mut out = Vec::with_capacity(m_max + 1);
    for i in 0..=m_max {
        if i > 0 {
            d = derivatives(&d, h, 1, mode);
        }
        let integral = grid.trapezoid_by(|j| d[j].abs().powf(p));
        out.push(l.powf(i as f64 + 1.0 - 1.0 / p) * integral.powf(1.0 / p));
    }
    out
}

/// `‖κ‖_{m,p} = Σ_{i≤m} ‖∂ₛⁱk‖_p` from the output of [`sobolev_norms`].
pub fn sobolev_total(norms: &[f64], m: usize) -> f64 {
    norms.iter().take(m + 1).sum()
}

/// Run-level aggregates of the per-step records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub termination: Termination,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Largest `F_{n+1} − F_n` (negative when strictly dissipative).
    pub max_energy_increase: f64,
    pub max_constraint_residual: f64,
    /// Smallest `det A − C1` over records with a valid certificate.
    pub min_det_margin: Option<f64>,
    pub min_c1: Option<f64>,
    pub max_k_bdry: f64,
    pub max_k2_bdry: Option<f64>,
    pub max_identity_defect: f64,
    pub max_dissipation: f64,
    /// `max defect / max u`.
    pub relative_identity_defect: f64,
    /// `|F_end − F_0 + ∫u dt| / ∫u dt`.
    pub energy_budget_defect: f64,
    /// `∫u dt` by the rectangle rule matching the scheme.
    pub dissipated: f64,
    pub final_residual: f64,
    pub final_dissipation: f64,
    pub max_inflections: usize,
    pub min_curvature: f64,
    pub max_sobolev: Option<f64>,
}

pub fn summarize(traj: &FlowTrajectory) -> RunSummary {
    let recs = &traj.diagnostics;
    let dt = traj.config.dt;
    let mut s = RunSummary {
        steps: traj.steps,
        termination: traj.termination,
        initial_energy: recs.first().map_or(f64::NAN, |r| r.energy),
        final_energy: recs.last().map_or(f64::NAN, |r| r.energy),
        max_energy_increase: f64::NEG_INFINITY,
        max_constraint_residual: 0.0,
        min_det_margin: None,
        min_c1: None,
        max_k_bdry: 0.0,
        max_k2_bdry: None,
        max_identity_defect: 0.0,
        max_dissipation: 0.0,
        relative_identity_defect: 0.0,
        energy_budget_defect: 0.0,
        dissipated: 0.0,
        final_residual: recs.last().map_or(f64::NAN, |r| r.residual_eq),
        final_dissipation: recs.last().and_then(|r| r.dissipation).map_or(0.0, |d| -d),
        max_inflections: 0,
        min_curvature: f64::INFINITY,
        max_sobolev: None,
    };
    let min_opt = |a: Option<f64>, b: f64| Some(a.map_or(b, |a| a.min(b)));
    let max_opt = |a: Option<f64>, b: f64| Some(a.map_or(b, |a| a.max(b)));
    for (i, r) in recs.iter().enumerate() {
        if i > 0 {
            s.max_energy_increase = s.max_energy_increase.max(r.energy - recs[i - 1].energy);
        }
        s.max_constraint_residual = s.max_constraint_residual.max(r.constraint_res[0].hypot(r.constraint_res[1]));
        if let Some(c1) = r.c1 {
            s.min_c1 = min_opt(s.min_c1, c1);
            s.min_det_margin = min_opt(s.min_det_margin, r.det_a - c1);
        }
        s.max_k_bdry = s.max_k_bdry.max(r.k_bdry[0].abs()).max(r.k_bdry[1].abs());
        if let Some(k2) = r.k2_bdry {
            s.max_k2_bdry = max_opt(s.max_k2_bdry, k2[0].max(k2[1]));
        }
        if let Some(d) = r.identity_defect() {
            s.max_identity_defect = s.max_identity_defect.max(d);
        }
        if let Some(d) = r.dissipation {
            let u = -d;
            s.max_dissipation = s.max_dissipation.max(u);
            s.dissipated += u * dt;
        }
        s.max_inflections = s.max_inflections.max(r.inflections);
        s.min_curvature = s.min_curvature.min(r.min_k);
        if let Some(norms) = &r.sobolev {
            s.max_sobolev = max_opt(s.max_sobolev, sobolev_total(norms, norms.len() - 1));
        }
    }
    if s.max_dissipation > 0.0 {
        s.relative_identity_defect = s.max_identity_defect / s.max_dissipation;
    }
    if s.dissipated > 0.0 {
        s.energy_budget_defect = (s.final_energy - s.initial_energy + s.dissipated).abs() / s.dissipated;
    }
    if recs.len() < 2 {
        s.max_energy_increase = 0.0;
    }
    s
}
