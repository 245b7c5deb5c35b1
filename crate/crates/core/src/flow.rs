//! Time stepping of `∂ₜφ = ∂ₛ²φ + λ₁ sin φ − λ₂ cos φ`.
//!
//! Open curves use the ghost-reflection Neumann Laplacian, closed curves the
//! periodic Laplacian with the winding jump `2π·w` across the seam.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{record_state, DiagnosticsRecord, RecordContext};
use crate::error::{Error, Result};
use crate::grid_curve::{curvature, AngleField, ConstraintSpec, CurveMode, Grid};
use crate::linalg::{CyclicTridiagonal, Tridiagonal};
use crate::multipliers::{
    constrained_multipliers, det_gram, gram_matrix, lambdas_continuous, linearized_lambdas, AffineUpdate,
    MultiplierMethod, MultiplierState,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExplicitEuler,
    #[default]
    Imex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedTEnd,
    Equilibrium,
    DegenerateGram,
    Instability,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub mode: CurveMode,
    pub multiplier_method: MultiplierMethod,
    pub equilibrium_tol: f64,
    pub snapshot_stride: usize,
    pub stability_guard: bool,
}

impl FlowConfig {
    pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-8;
    pub const DEFAULT_SNAPSHOT_STRIDE: usize = 100;

    /// IMEX, discrete-constraint multipliers, open hinged ends.
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            scheme: Scheme::Imex,
            dt,
            t_end,
            mode: CurveMode::OpenHinged,
            multiplier_method: MultiplierMethod::DiscreteConstraint,
            equilibrium_tol: Self::DEFAULT_EQUILIBRIUM_TOL,
            snapshot_stride: Self::DEFAULT_SNAPSHOT_STRIDE,
            stability_guard: true,
        }
    }

    /// `h²/4`.
    pub fn default_dt(grid: &Grid) -> f64 {
        let h = grid.spacing();
        0.25 * h * h
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_mode(mut self, mode: CurveMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_multipliers(mut self, method: MultiplierMethod) -> Self {
        self.multiplier_method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.dt) {
            return Err(Error::Precondition(format!("dt must be positive, got {}", self.dt)));
        }
        if !positive(self.t_end) {
            return Err(Error::Precondition(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !positive(self.equilibrium_tol) {
            return Err(Error::Precondition(format!("equilibrium_tol must be positive, got {}", self.equilibrium_tol)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Precondition("snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_end`. Steps keep the fixed size `dt`,
    /// so the final time may pass `t_end` by less than one step.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

fn winding_jump(field: &AngleField) -> f64 {
    TAU * field.winding() as f64
}

/// Discrete `∂ₛ²φ` for the given boundary mode.
pub fn laplacian(field: &AngleField, mode: CurveMode) -> Vec<f64> {
    let p = field.phi();
    let n = field.grid().intervals();
    let h2 = field.grid().spacing().powi(2);
    let mut out = vec![0.0; n + 1];
    for i in 1..n {
        out[i] = (p[i + 1] - 2.0 * p[i] + p[i - 1]) / h2;
    }
    match mode {
        CurveMode::OpenHinged => {
            out[0] = 2.0 * (p[1] - p[0]) / h2;
            out[n] = 2.0 * (p[n - 1] - p[n]) / h2;
        }
        CurveMode::ClosedPeriodic => {
            let jump = winding_jump(field);
            out[0] = (p[1] - 2.0 * p[0] + (p[n - 1] - jump)) / h2;
            out[n] = out[0];
        }
    }
    out
}

/// Right-hand side `∂ₛ²φ + λ₁ sin φ − λ₂ cos φ`.
pub fn rhs(field: &AngleField, lambda: [f64; 2], mode: CurveMode) -> Vec<f64> {
    let mut out = laplacian(field, mode);
    for (o, p) in out.iter_mut().zip(field.phi()) {
        let (s, c) = p.sin_cos();
        *o += lambda[0] * s - lambda[1] * c;
    }
    out
}

/// Trapezoid `L²` norm of [`rhs`].
pub fn equilibrium_residual(field: &AngleField, lambda: [f64; 2], mode: CurveMode) -> f64 {
    let r = rhs(field, lambda, mode);
    field.grid().trapezoid_by(|i| r[i] * r[i]).sqrt()
}

/// The multipliers against which stationarity is measured: the projection of
/// the Laplacian onto the constraint directions (or the closed form / zero).
pub fn reference_multipliers(field: &AngleField, method: MultiplierMethod, mode: CurveMode) -> Result<[f64; 2]> {
    match method {
        MultiplierMethod::Zero => Ok([0.0, 0.0]),
        MultiplierMethod::ContinuousFormula => Ok(lambdas_continuous(field)?.lambda),
        MultiplierMethod::DiscreteConstraint => Ok(linearized_lambdas(field, &laplacian(field, mode))?.lambda),
    }
}

enum LinearSolve {
    None,
    Open(Tridiagonal),
    Closed(CyclicTridiagonal),
}

/// Single-step integrator with a cached factorization of `I − dt·Δ`.
pub struct Stepper {
    cfg: FlowConfig,
    grid: Grid,
    solve: LinearSolve,
}

impl Stepper {
    pub fn new(grid: Grid, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let h = grid.spacing();
        let limit = 0.5 * h * h;
        if cfg.scheme == Scheme::ExplicitEuler && cfg.stability_guard && cfg.dt > limit {
            return Err(Error::Instability { dt: cfg.dt, limit });
        }
        let solve = match cfg.scheme {
            Scheme::ExplicitEuler => LinearSolve::None,
            Scheme::Imex => {
                let c = cfg.dt / (h * h);
                let n = grid.intervals();
                let broken = || Error::InvalidState("implicit operator could not be factored".into());
                match cfg.mode {
                    CurveMode::OpenHinged => {
                        let mut lower = vec![-c; n + 1];
                        let mut upper = vec![-c; n + 1];
                        upper[0] = -2.0 * c;
                        lower[n] = -2.0 * c;
                        let diag = vec![1.0 + 2.0 * c; n + 1];
                        LinearSolve::Open(Tridiagonal::factor(&lower, &diag, &upper).ok_or_else(broken)?)
                    }
                    CurveMode::ClosedPeriodic => {
                        LinearSolve::Closed(CyclicTridiagonal::circulant(n, 1.0 + 2.0 * c, -c).ok_or_else(broken)?)
                    }
                }
            }
        };
        Ok(Self { cfg, grid, solve })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    fn apply_inverse(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.solve {
            LinearSolve::None => rhs.to_vec(),
            LinearSolve::Open(t) => t.solve(rhs),
            LinearSolve::Closed(t) => {
                let n = self.grid.intervals();
                let mut x = t.solve(&rhs[..n]);
                x.push(0.0);
                x
            }
        }
    }

    /// The update as an affine function of λ.
    pub fn affine_update(&self, field: &AngleField) -> AffineUpdate {
        let dt = self.cfg.dt;
        let phi = field.phi();
        match self.cfg.scheme {
            Scheme::ExplicitEuler => AffineUpdate::explicit(phi, &laplacian(field, self.cfg.mode), dt),
            Scheme::Imex => {
                let n = self.grid.intervals();
                let mut src = phi.to_vec();
                if self.cfg.mode == CurveMode::ClosedPeriodic {
                    let jump = winding_jump(field) * dt / self.grid.spacing().powi(2);
                    src[0] -= jump;
                    src[n - 1] += jump;
                }
                let s: Vec<f64> = phi.iter().map(|p| dt * p.sin()).collect();
                let c: Vec<f64> = phi.iter().map(|p| -dt * p.cos()).collect();
                let mut update = AffineUpdate {
                    base: self.apply_inverse(&src),
                    directions: [self.apply_inverse(&s), self.apply_inverse(&c)],
                };
                if self.cfg.mode == CurveMode::ClosedPeriodic {
                    update.base[n] = update.base[0] + winding_jump(field);
                    update.directions[0][n] = update.directions[0][0];
                    update.directions[1][n] = update.directions[1][0];
                }
                update
            }
        }
    }

    /// Multipliers for the step out of `field`.
    pub fn multipliers(&self, field: &AngleField, update: &AffineUpdate) -> Result<MultiplierState> {
        let method = self.cfg.multiplier_method;
        match method {
            MultiplierMethod::ContinuousFormula => lambdas_continuous(field),
            MultiplierMethod::Zero => {
                let a = gram_matrix(field);
                Ok(MultiplierState { a, det_a: det_gram(&a), lambda: [0.0, 0.0], method })
            }
            MultiplierMethod::DiscreteConstraint => {
                let a = gram_matrix(field);
                let det = det_gram(&a);
                let floor = crate::multipliers::det_floor(self.grid.length());
                if det.is_nan() || det < floor {
                    return Err(Error::DegenerateGram { det, floor });
                }
                let target = crate::grid_curve::tangent_integral(field);
                let lambda = constrained_multipliers(field, update, target)?;
                Ok(MultiplierState { a, det_a: det, lambda, method })
            }
        }
    }

    /// Advance one step; the returned field carries time `t + dt`.
    pub fn step(&self, field: &AngleField) -> Result<(AngleField, MultiplierState)> {
        let update = self.affine_update(field);
        let m = self.multipliers(field, &update)?;
        let mut phi = update.evaluate(m.lambda);
        if self.cfg.mode == CurveMode::ClosedPeriodic {
            let n = self.grid.intervals();
            phi[n] = phi[0] + winding_jump(field);
        }
        if phi.iter().any(|v| !v.is_finite()) {
            let h = self.grid.spacing();
            return Err(Error::Instability { dt: self.cfg.dt, limit: 0.5 * h * h });
        }
        Ok((AngleField::new(self.grid, phi, field.time() + self.cfg.dt)?, m))
    }
}

/// One forward-Euler step.
pub fn step_explicit(field: &AngleField, cfg: &FlowConfig) -> Result<AngleField> {
    let cfg = cfg.with_scheme(Scheme::ExplicitEuler);
    Ok(Stepper::new(*field.grid(), cfg)?.step(field)?.0)
}

/// One step with implicit diffusion and explicit multiplier terms.
pub fn step_imex(field: &AngleField, cfg: &FlowConfig) -> Result<AngleField> {
    let cfg = cfg.with_scheme(Scheme::Imex);
    Ok(Stepper::new(*field.grid(), cfg)?.step(field)?.0)
}

/// Time-ordered snapshots plus one diagnostics record per step.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub config: FlowConfig,
    pub constraint: ConstraintSpec,
    pub snapshots: Vec<AngleField>,
    /// Step index of each snapshot.
    pub snapshot_steps: Vec<usize>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    pub steps: usize,
}

impl FlowTrajectory {
    pub fn final_state(&self) -> Option<&AngleField> {
        self.snapshots.last()
    }
}

/// Integrate from `phi0` until `t_end` or equilibrium.
pub fn run_flow(phi0: &AngleField, c: &ConstraintSpec, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    cfg.validate()?;
    let grid = *phi0.grid();
    if (c.length() - grid.length()).abs() > 1e-12 * grid.length() {
        return Err(Error::Precondition(format!(
            "constraint length {} differs from grid length {}",
            c.length(),
            grid.length()
        )));
    }
    if cfg.mode == CurveMode::OpenHinged {
        let k = curvature(phi0, cfg.mode);
        let (k0, kl) = (k[0].abs(), k[grid.intervals()].abs());
        if k0 > 1e-8 || kl > 1e-8 {
            return Err(Error::Precondition(format!(
                "initial data violates the hinged condition: |k(0)| = {k0:.3e}, |k(L)| = {kl:.3e} (need <= 1e-8)"
            )));
        }
    }
    let r = crate::grid_curve::constraint_residual(phi0, c);
    if r[0].hypot(r[1]) > 1e-6 * grid.length() {
        return Err(Error::Precondition(format!(
            "initial constraint residual ({:.3e}, {:.3e}) exceeds 1e-6·L",
            r[0], r[1]
        )));
    }

    let stepper = Stepper::new(grid, *cfg)?;
    let ctx = RecordContext { constraint: *c, mode: cfg.mode, dt: cfg.dt, method: cfg.multiplier_method };
    let total = cfg.step_count();
    let mut traj = FlowTrajectory {
        config: *cfg,
        constraint: *c,
        snapshots: vec![phi0.clone()],
        snapshot_steps: vec![0],
        diagnostics: Vec::with_capacity(total.min(1 << 20) + 1),
        termination: Termination::ReachedTEnd,
        steps: 0,
    };
    let mut cur = phi0.clone();
    let mut prev: Option<(AngleField, [f64; 2])> = None;
    let first = record_state(&ctx, 0, None, &cur, None, true);
    let mut residual = first.residual_eq;
    traj.diagnostics.push(first);
    let t0 = phi0.time();
    let mut n = 0usize;
    loop {
        if residual <= cfg.equilibrium_tol {
            traj.termination = Termination::Equilibrium;
            break;
        }
        if !residual.is_finite() {
            traj.termination = Termination::Instability;
            break;
        }
        if n >= total {
            traj.termination = Termination::ReachedTEnd;
            break;
        }
        let (next, m) = match stepper.step(&cur) {
            Ok(v) => v,
            Err(Error::DegenerateGram { .. }) => {
                traj.termination = Termination::DegenerateGram;
                break;
            }
            Err(Error::Instability { .. }) => {
                traj.termination = Termination::Instability;
                break;
            }
            Err(e) => return Err(e),
        };
        n += 1;
        let next = next.with_time(t0 + n as f64 * cfg.dt);
        let snapshot = n.is_multiple_of(cfg.snapshot_stride);
        let rec = record_state(&ctx, n, Some(&cur), &next, Some(m.lambda), snapshot);
        residual = rec.residual_eq;
        traj.diagnostics.push(rec);
        if snapshot {
            traj.snapshots.push(next.clone());
            traj.snapshot_steps.push(n);
        }
        prev = Some((std::mem::replace(&mut cur, next), m.lambda));
    }
    traj.steps = n;
    if traj.snapshot_steps.last() != Some(&n) {
        // the terminal state always carries the full set of diagnostics
        if let Some((p, lambda)) = &prev {
            let full = record_state(&ctx, n, Some(p), &cur, Some(*lambda), true);
            *traj.diagnostics.last_mut().expect("records exist") = full;
        }
        traj.snapshots.push(cur);
        traj.snapshot_steps.push(n);
    }
    Ok(traj)
}
