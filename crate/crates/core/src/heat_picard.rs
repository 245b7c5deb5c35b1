//! Short-time solution by heat-kernel fixed-point iteration.
//!
//! The initial angle is extended evenly and `2L`-periodically, so every
//! convolution with the heat kernel automatically satisfies the Neumann
//! condition at `s = 0` and `s = L`. Iterates live on the periodic grid
//! `ξ_q = −L + q·Δ`, `Δ = 2L/Q`, at uniform time slices over `[0, t₀]`:
//!
//! ```text
//! ψ_{n+1}(τᵢ) = K(τᵢ)∗φ̃₀ + Σⱼ wᵢⱼ K(τᵢ − τⱼ)∗h(ψₙ(τⱼ)),   h(ψ) = λ₁ sin ψ − λ₂ cos ψ
//! ```
//!
//! Spatial convolutions are circulant: the periodic image sum of the sampled
//! kernel is applied through the FFT. Lags shorter than `t_floor`, where the
//! sampled Gaussian is under-resolved, use the exact Fourier multiplier.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowConfig};
use crate::grid_curve::{
    constraint_residual, extend_even_periodic, signed_curvature, AngleField, ConstraintSpec, EvenPeriodicExtension,
    Grid,
};
use crate::multipliers::{lambdas_continuous, MultiplierMethod};
use crate::par::{map_indices, sum_indices, Execution};

/// `(4πt)^{-1/2} exp(−x²/4t)`.
pub fn heat_kernel(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(kernel(x, t))
}

/// `∂ₓK(x, t)`.
pub fn heat_kernel_dx(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(-x / (2.0 * t) * kernel(x, t))
}

#[inline]
fn kernel(x: f64, t: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// Discretization of the periodic image sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Images `m` with `|m| ≤ image_count` are summed.
    pub image_count: usize,
    /// Quadrature nodes per period `2L`.
    pub quad_nodes: usize,
    /// Below this lag the sampled kernel is replaced by its Fourier multiplier.
    pub t_floor: f64,
}

impl KernelParams {
    pub const DEFAULT_IMAGES: usize = 5;

    /// Five images, `4N` nodes per period, `t_floor = 2Δ²`.
    pub fn for_grid(grid: &Grid) -> Self {
        Self::with_nodes(grid.length(), 4 * grid.intervals())
    }

    pub fn with_nodes(length: f64, quad_nodes: usize) -> Self {
        let delta = 2.0 * length / quad_nodes as f64;
        Self { image_count: Self::DEFAULT_IMAGES, quad_nodes, t_floor: 2.0 * delta * delta }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.image_count < 3 {
            return Err(Error::Precondition(format!("image_count must be at least 3, got {}", self.image_count)));
        }
        if self.quad_nodes < 4 * grid.intervals() || !self.quad_nodes.is_multiple_of(2) {
            return Err(Error::Precondition(format!(
                "quad_nodes must be even and at least 4·N = {}, got {}",
                4 * grid.intervals(),
                self.quad_nodes
            )));
        }
        if !(self.t_floor >= 0.0) {
            return Err(Error::Precondition("t_floor must be nonnegative".into()));
        }
        Ok(())
    }

    /// Bound on the contribution of the images that were left out.
    pub fn truncation_bound(&self, length: f64, t: f64) -> f64 {
        let r = 2.0 * length * self.image_count as f64;
        (-(r * r) / (8.0 * t)).exp()
    }
}

/// Uniform periodic grid on `[−L, L)`.
#[derive(Clone, Copy, Debug)]
struct PeriodicGrid {
    length: f64,
    q: usize,
}

impl PeriodicGrid {
    fn delta(&self) -> f64 {
        2.0 * self.length / self.q as f64
    }

    fn xi(&self, i: usize) -> f64 {
        -self.length + i as f64 * self.delta()
    }

    /// Signed angular frequency of FFT bin `k` (Nyquist mapped to zero).
    fn omega(&self, k: usize) -> f64 {
        let q = self.q;
        let w = PI / self.length;
        if 2 * k < q {
            w * k as f64
        } else if 2 * k == q {
            0.0
        } else {
            -w * (q - k) as f64
        }
    }

    /// `|ω|` of bin `k` including the Nyquist bin (used by decay multipliers).
    fn abs_omega(&self, k: usize) -> f64 {
        PI / self.length * k.min(self.q - k) as f64
    }

    /// Sample index of `ξ = s` for `s ∈ [0, L]` on the half grid.
    fn restrict(&self, v: &[f64]) -> Vec<f64> {
        let half = self.q / 2;
        (0..=half).map(|j| v[(half + j) % self.q]).collect()
    }
}

#[derive(Clone)]
struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    grid: PeriodicGrid,
}

impl Spectral {
    fn new(grid: PeriodicGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self { forward: planner.plan_fft_forward(grid.q), inverse: planner.plan_fft_inverse(grid.q), grid }
    }

    fn forward(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let scale = 1.0 / self.grid.q as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    fn derivative_of_spectrum(&self, spec: &[Complex64]) -> Vec<f64> {
        let d = spec.iter().enumerate().map(|(k, c)| c * Complex64::new(0.0, self.grid.omega(k))).collect();
        self.inverse_real(d)
    }

    fn derivative(&self, v: &[f64]) -> Vec<f64> {
        self.derivative_of_spectrum(&self.forward(v))
    }

    /// Real Fourier multiplier of convolution with the heat kernel at `lag`.
    fn heat_multiplier(&self, params: &KernelParams, lag: f64) -> Vec<f64> {
        let g = self.grid;
        if lag <= 0.0 {
            return vec![1.0; g.q];
        }
        if lag < params.t_floor {
            return (0..g.q).map(|k| (-(g.abs_omega(k).powi(2)) * lag).exp()).collect();
        }
        let delta = g.delta();
        let period = 2.0 * g.length;
        let m = params.image_count as i64;
        let taps: Vec<f64> = (0..g.q)
            .map(|d| {
                let x = if 2 * d <= g.q { d as f64 } else { d as f64 - g.q as f64 } * delta;
                delta * (-m..=m).map(|j| kernel(x - period * j as f64, lag)).sum::<f64>()
            })
            .collect();
        self.forward(&taps).into_iter().map(|c| c.re).collect()
    }
}

/// Samples of the extension on the quadrature grid.
///
/// When the quadrature grid refines the `2N` curve nodes per period, the node
/// values are trigonometrically interpolated (FFT zero padding); the even
/// extension of a hinged field is smooth, so this is spectrally accurate.
/// Otherwise the extension's local interpolant is used.
fn periodic_samples(ext: &EvenPeriodicExtension, g: PeriodicGrid) -> Vec<f64> {
    let n2 = 2 * ext.grid().intervals();
    if !g.q.is_multiple_of(n2) {
        return (0..g.q).map(|i| ext.eval(g.xi(i))).collect();
    }
    let coarse = PeriodicGrid { length: g.length, q: n2 };
    let nodes: Vec<Complex64> = (0..n2).map(|i| Complex64::new(ext.eval(coarse.xi(i)), 0.0)).collect();
    let mut planner = FftPlanner::new();
    let mut spec = nodes;
    planner.plan_fft_forward(n2).process(&mut spec);
    let half = n2 / 2;
    let mut padded = vec![Complex64::new(0.0, 0.0); g.q];
    padded[..half].copy_from_slice(&spec[..half]);
    for k in half + 1..n2 {
        padded[g.q - n2 + k] = spec[k];
    }
    // split the Nyquist bin symmetrically so the interpolant stays real and even
    padded[half] = spec[half] * 0.5;
    padded[g.q - half] = spec[half] * 0.5;
    planner.plan_fft_inverse(g.q).process(&mut padded);
    let scale = 1.0 / n2 as f64;
    padded.into_iter().map(|c| c.re * scale).collect()
}

fn apply_multiplier(spec: &[Complex64], mult: &[f64]) -> Vec<Complex64> {
    spec.iter().zip(mult).map(|(c, m)| c * *m).collect()
}

/// `(K(·, t) ∗ φ̃₀)(s)` by the truncated image sum.
pub fn free_heat(ext: &EvenPeriodicExtension, s: f64, t: f64, params: &KernelParams) -> Result<f64> {
    if t == 0.0 {
        return Ok(ext.eval(s));
    }
    let g = PeriodicGrid { length: ext.grid().length(), q: params.quad_nodes };
    let samples = periodic_samples(ext, g);
    point_convolution(g, params, &samples, s, t, Execution::Sequential, false)
}

/// `∂ₛ(K(·, t) ∗ φ̃₀)(s)`.
pub fn free_heat_slope(ext: &EvenPeriodicExtension, s: f64, t: f64, params: &KernelParams) -> Result<f64> {
    let g = PeriodicGrid { length: ext.grid().length(), q: params.quad_nodes };
    let samples = periodic_samples(ext, g);
    point_convolution(g, params, &samples, s, t, Execution::Sequential, true)
}

/// Heat convolution of periodic samples evaluated at a single point.
fn point_convolution(
    g: PeriodicGrid,
    params: &KernelParams,
    samples: &[f64],
    s: f64,
    t: f64,
    exec: Execution,
    slope: bool,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("convolution time must be nonnegative, got {t}")));
    }
    if t < params.t_floor.max(f64::MIN_POSITIVE) {
        return Ok(cosine_series(g, samples, s, t, slope));
    }
    let delta = g.delta();
    let period = 2.0 * g.length;
    let m = params.image_count as i64;
    let value = sum_indices(exec, g.q, |i| {
        let x = s - g.xi(i);
        let k: f64 = (-m..=m)
            .map(|j| {
                let y = x - period * j as f64;
                if slope {
                    -y / (2.0 * t) * kernel(y, t)
                } else {
                    kernel(y, t)
                }
            })
            .sum();
        delta * k * samples[i]
    });
    Ok(value)
}

/// Trigonometric interpolant of even samples, propagated by `e^{tΔ}`, at `s`.
fn cosine_series(g: PeriodicGrid, samples: &[f64], s: f64, t: f64, slope: bool) -> f64 {
    let q = g.q;
    let half = q / 2;
    let mut acc = 0.0;
    for k in 0..=half {
        let w = PI * k as f64 / g.length;
        let coeff: f64 = (0..q).map(|i| samples[i] * (w * g.xi(i)).cos()).sum::<f64>()
            * if k == 0 || k == half { 1.0 } else { 2.0 }
            / q as f64;
        let decay = (-w * w * t).exp();
        acc += coeff * decay * if slope { -w * (w * s).sin() } else { (w * s).cos() };
    }
    acc
}

/// Configuration of [`picard_solve`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    /// Final time; `None` searches down from `L²/16` by halving.
    pub t0: Option<f64>,
    pub n_max: usize,
    pub tol: f64,
    pub time_slices: usize,
    /// `None` derives the defaults from the input grid.
    pub kernel: Option<KernelParams>,
    pub multipliers: MultiplierMethod,
    pub c4_samples: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            t0: None,
            n_max: 50,
            tol: 1e-10,
            time_slices: 64,
            kernel: None,
            multipliers: MultiplierMethod::ContinuousFormula,
            c4_samples: 8,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

/// Multipliers and source samples at every slice.
type SliceSources = (Vec<[f64; 2]>, Vec<Vec<f64>>);

/// Current iterate on all time slices plus contraction bookkeeping.
#[derive(Clone, Debug)]
pub struct PicardState {
    length: f64,
    params: KernelParams,
    method: MultiplierMethod,
    /// Slice times `τⱼ = j·t₀/n`.
    pub times: Vec<f64>,
    /// `ψₙ(·, τⱼ)` on `ξ_q = −L + q·Δ`.
    pub psi: Vec<Vec<f64>>,
    pub n: usize,
    pub d0: f64,
    pub m0: f64,
    pub contraction_q: Option<f64>,
}

impl PicardState {
    pub fn quad_nodes(&self) -> usize {
        self.params.quad_nodes
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Node `ξ_q` of the periodic grid.
    pub fn xi(&self, q: usize) -> f64 {
        self.periodic().xi(q)
    }

    fn periodic(&self) -> PeriodicGrid {
        PeriodicGrid { length: self.length, q: self.params.quad_nodes }
    }

    /// Slice `j` restricted to `[0, L]` as an angle field on `Q/2` intervals.
    pub fn slice_field(&self, j: usize) -> Result<AngleField> {
        let g = self.periodic();
        AngleField::new(Grid::new(self.length, g.q / 2)?, g.restrict(&self.psi[j]), self.times[j])
    }

    /// `(λ(τⱼ), h(ψ(τⱼ)))` for every slice.
    fn sources(&self, exec: Execution) -> Result<SliceSources> {
        let out = map_indices(exec, self.psi.len(), |j| -> Result<([f64; 2], Vec<f64>)> {
            let lambda = match self.method {
                MultiplierMethod::Zero => [0.0, 0.0],
                _ => lambdas_continuous(&self.slice_field(j)?)?.lambda,
            };
            let h = self.psi[j].iter().map(|p| lambda[0] * p.sin() - lambda[1] * p.cos()).collect();
            Ok((lambda, h))
        });
        let mut lambdas = Vec::with_capacity(out.len());
        let mut sources = Vec::with_capacity(out.len());
        for r in out {
            let (l, h) = r?;
            lambdas.push(l);
            sources.push(h);
        }
        Ok((lambdas, sources))
    }
}

/// Duhamel term `∫₀ᵗ (K(t−τ) ∗ h(ψ(τ)))(s) dτ` of the state's iterate, by
/// direct quadrature: trapezoid in `τ` with as many nodes as stored slices,
/// sources linearly interpolated between slices.
pub fn duhamel(state: &PicardState, s: f64, t: f64) -> Result<f64> {
    let t_end = *state.times.last().expect("at least one slice");
    if !(t > 0.0 && t <= t_end * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("Duhamel time must lie in (0, {t_end}], got {t}")));
    }
    let (_, sources) = state.sources(Execution::Sequential)?;
    let g = state.periodic();
    let slices = state.times.len() - 1;
    let dtau = t_end / slices as f64;
    let source_at = |tau: f64| -> Vec<f64> {
        let x = (tau / dtau).min(slices as f64);
        let j = (x.floor() as usize).min(slices.saturating_sub(1));
        let w = x - j as f64;
        if w == 0.0 {
            return sources[j].clone();
        }
        sources[j].iter().zip(&sources[j + 1]).map(|(a, b)| (1.0 - w) * a + w * b).collect()
    };
    duhamel_quadrature(g, &state.params, s, t, slices, source_at, Execution::Sequential)
}

/// Trapezoid in `τ` (`slices` intervals) of point convolutions of `source(τ)`.
fn duhamel_quadrature(
    g: PeriodicGrid,
    params: &KernelParams,
    s: f64,
    t: f64,
    slices: usize,
    source: impl Fn(f64) -> Vec<f64>,
    exec: Execution,
) -> Result<f64> {
    let dtau = t / slices as f64;
    let mut acc = 0.0;
    for j in 0..=slices {
        let tau = j as f64 * dtau;
        let w = if j == 0 || j == slices { 0.5 } else { 1.0 };
        let lag = if j == slices { 0.0 } else { t - tau };
        acc += w * point_convolution(g, params, &source(tau), s, lag, exec, false)?;
    }
    Ok(acc * dtau)
}

/// Duhamel quadrature for an arbitrary source `h(ξ, τ)` on a periodic grid of
/// `quad_nodes` points; exposed for refinement studies.
pub fn duhamel_of(
    length: f64,
    params: &KernelParams,
    source: impl Fn(f64, f64) -> f64,
    s: f64,
    t: f64,
    slices: usize,
    exec: Execution,
) -> Result<f64> {
    let g = PeriodicGrid { length, q: params.quad_nodes };
    duhamel_quadrature(g, params, s, t, slices, |tau| (0..g.q).map(|i| source(g.xi(i), tau)).collect(), exec)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub increment_norm: f64,
    /// `‖ψ_{n+1} − ψ_n‖ / ‖ψ_n − ψ_{n−1}‖`; undefined for the first iterate.
    pub q_n: Option<f64>,
    pub apriori_q: f64,
}

/// Worst observed ratios against the potential estimates `|H| ≤ t·C₃`,
/// `|∂ₛH| ≤ 2√(t/π)·C₃`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    pub evaluated: usize,
    pub violations: usize,
    pub max_value_ratio: f64,
    pub max_slope_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub t0: f64,
    pub d0: f64,
    pub m0: f64,
    pub c3: f64,
    pub c4: f64,
    pub apriori_q: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub bounds: BoundChecks,
    pub max_evenness_defect: f64,
    pub max_boundary_slope: f64,
    /// Every stored slice kept oscillation ≥ d₀ and slope ≤ M₀.
    pub admissible: bool,
    pub truncation_bound: f64,
    pub kernel: KernelParams,
}

#[derive(Clone, Debug)]
pub struct PicardSolution {
    /// Final iterate restricted to `[0, L]` at every slice time.
    pub slices: Vec<AngleField>,
    pub report: ContractionReport,
    pub state: PicardState,
}

impl PicardSolution {
    pub fn final_slice(&self) -> &AngleField {
        self.slices.last().expect("at least one slice")
    }
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn oscillation(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

/// The source map `ψ ↦ h(ψ)` at a single time level.
fn source_map(g: PeriodicGrid, method: MultiplierMethod, psi: &[f64]) -> Result<Vec<f64>> {
    let lambda = match method {
        MultiplierMethod::Zero => [0.0, 0.0],
        _ => {
            let f = AngleField::new(Grid::new(g.length, g.q / 2)?, g.restrict(psi), 0.0)?;
            lambdas_continuous(&f)?.lambda
        }
    };
    Ok(psi.iter().map(|p| lambda[0] * p.sin() - lambda[1] * p.cos()).collect())
}

/// Lipschitz constant of `h` in the value-plus-slope norm, from directional
/// difference quotients along random smooth even perturbations (×1.5).
fn estimate_c4(
    spectral: &Spectral,
    method: MultiplierMethod,
    psi: &[f64],
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    if method == MultiplierMethod::Zero {
        return Ok(0.0);
    }
    let g = spectral.grid;
    let base = source_map(g, method, psi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions: Vec<Vec<f64>> = (0..samples.max(1))
        .map(|_| {
            let coeffs: Vec<f64> = (0..6).map(|j| rng.gen_range(-1.0..1.0) / (1.0 + j as f64)).collect();
            let eta: Vec<f64> = (0..g.q)
                .map(|i| {
                    let x = PI * g.xi(i) / g.length;
                    coeffs.iter().enumerate().map(|(j, c)| c * (j as f64 * x).cos()).sum()
                })
                .collect();
            let norm = sup_abs(&eta) + sup_abs(&spectral.derivative(&eta));
            eta.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    let eps = 1e-6;
    let quotients = map_indices(exec, directions.len(), |r| -> Result<f64> {
        let shifted: Vec<f64> = psi.iter().zip(&directions[r]).map(|(p, e)| p + eps * e).collect();
        let h = source_map(g, method, &shifted)?;
        Ok(h.iter().zip(&base).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / eps)
    });
    let mut c4 = 0.0f64;
    for q in quotients {
        c4 = c4.max(q?);
    }
    Ok(1.5 * c4)
}

/// `C₄(t₀ + 2√(t₀/π))`.
pub fn apriori_factor(c4: f64, t0: f64) -> f64 {
    c4 * (t0 + 2.0 * (t0 / PI).sqrt())
}

/// Largest `t₀ = L²/16 · 2^{-j}` whose a priori factor is below one.
pub fn search_t0(length: f64, c4: f64) -> f64 {
    let mut t0 = length * length / 16.0;
    for _ in 0..200 {
        if apriori_factor(c4, t0) < 1.0 {
            break;
        }
        t0 *= 0.5;
    }
    t0
}

/// Iterate `ψ_{n+1} = U_{φ₀} + H(ψₙ)` on `[0, t₀]`.
pub fn picard_solve(phi0: &AngleField, c: &ConstraintSpec, cfg: &PicardConfig) -> Result<PicardSolution> {
    let grid = *phi0.grid();
    if (c.length() - grid.length()).abs() > 1e-12 * grid.length() {
        return Err(Error::Precondition(format!(
            "constraint length {} differs from grid length {}",
            c.length(),
            grid.length()
        )));
    }
    let r = constraint_residual(phi0, c);
    if r[0].hypot(r[1]) > 1e-6 * grid.length() {
        return Err(Error::Precondition(format!(
            "initial constraint residual ({:.3e}, {:.3e}) exceeds 1e-6·L",
            r[0], r[1]
        )));
    }
    if cfg.time_slices < 1 || cfg.n_max < 1 || !(cfg.tol > 0.0) {
        return Err(Error::Precondition("time_slices, n_max and tol must be positive".into()));
    }
    let params = cfg.kernel.unwrap_or_else(|| KernelParams::for_grid(&grid));
    params.validate(&grid)?;
    let exec = cfg.execution;
    let length = grid.length();
    let g = PeriodicGrid { length, q: params.quad_nodes };
    let spectral = Spectral::new(g);

    let ext = extend_even_periodic(phi0);
    let initial = periodic_samples(&ext, g);
    let d0 = 0.5 * oscillation(phi0.phi());
    let m0 = 2.0 * sup_abs(&signed_curvature(phi0));

    let c4 = estimate_c4(&spectral, cfg.multipliers, &initial, cfg.c4_samples, cfg.seed, exec)?;
    let t0 = match cfg.t0 {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::Precondition(format!("t0 must be positive, got {t}"))),
        None => search_t0(length, c4),
    };
    let apriori_q = apriori_factor(c4, t0);
    let slices = cfg.time_slices;
    let dtau = t0 / slices as f64;
    let times: Vec<f64> = (0..=slices).map(|j| if j == slices { t0 } else { j as f64 * dtau }).collect();

    // multiplier for every lag j·Δτ
    let multipliers = map_indices(exec, slices + 1, |j| spectral.heat_multiplier(&params, j as f64 * dtau));
    let initial_hat = spectral.forward(&initial);
    let free: Vec<Vec<f64>> =
        map_indices(exec, slices + 1, |i| spectral.inverse_real(apply_multiplier(&initial_hat, &multipliers[i])));

    let mut state = PicardState {
        length,
        params,
        method: cfg.multipliers,
        times: times.clone(),
        psi: vec![initial.clone(); slices + 1],
        n: 0,
        d0,
        m0,
        contraction_q: None,
    };
    let mut report = ContractionReport {
        t0,
        d0,
        m0,
        c3: 0.0,
        c4,
        apriori_q,
        iterations: Vec::new(),
        converged: false,
        bounds: BoundChecks::default(),
        max_evenness_defect: 0.0,
        max_boundary_slope: 0.0,
        admissible: true,
        truncation_bound: params.truncation_bound(length, t0),
        kernel: params,
    };
    let scale = 1.0 + sup_abs(&initial);
    let mut prev_increment: Option<f64> = None;
    let mut non_contracting = 0usize;

    for n in 1..=cfg.n_max {
        let (_, sources) = state.sources(exec)?;
        let source_hat: Vec<Vec<Complex64>> = map_indices(exec, slices + 1, |j| spectral.forward(&sources[j]));
        let sup_h: Vec<f64> = sources.iter().map(|h| sup_abs(h)).collect();
        // Duhamel term at every slice, accumulated in the spectral domain
        let duhamel_slices: Vec<(Vec<f64>, Vec<f64>)> = map_indices(exec, slices + 1, |i| {
            if i == 0 {
                return (vec![0.0; g.q], vec![0.0; g.q]);
            }
            let mut acc = vec![Complex64::new(0.0, 0.0); g.q];
            for j in 0..=i {
                let w = if j == 0 || j == i { 0.5 } else { 1.0 } * dtau;
                let m = &multipliers[i - j];
                for ((a, s), m) in acc.iter_mut().zip(&source_hat[j]).zip(m) {
                    *a += s * (w * m);
                }
            }
            let slope = spectral.derivative_of_spectrum(&acc);
            (spectral.inverse_real(acc), slope)
        });

        let mut next = Vec::with_capacity(slices + 1);
        let mut increment_value = 0.0f64;
        let mut running_c3 = 0.0f64;
        for i in 0..=slices {
            running_c3 = running_c3.max(sup_h[i]);
            let (h_val, h_slope) = &duhamel_slices[i];
            let tau = times[i];
            let value_bound = tau * running_c3;
            let slope_bound = 2.0 * (tau / PI).sqrt() * running_c3;
            let slack = 1e-12 * (1.0 + running_c3);
            for (v, d) in h_val.iter().zip(h_slope) {
                report.bounds.evaluated += 1;
                if value_bound > 0.0 {
                    report.bounds.max_value_ratio = report.bounds.max_value_ratio.max(v.abs() / value_bound);
                    report.bounds.max_slope_ratio = report.bounds.max_slope_ratio.max(d.abs() / slope_bound);
                }
                if v.abs() > value_bound * (1.0 + 1e-9) + slack || d.abs() > slope_bound * (1.0 + 1e-9) + slack {
                    report.bounds.violations += 1;
                }
            }
            let psi_i: Vec<f64> = free[i].iter().zip(h_val).map(|(u, h)| u + h).collect();
            increment_value =
                increment_value.max(psi_i.iter().zip(&state.psi[i]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
            next.push(psi_i);
        }
        report.c3 = running_c3;

        let slopes: Vec<Vec<f64>> = map_indices(exec, slices + 1, |i| spectral.derivative(&next[i]));
        let diff_slopes: Vec<Vec<f64>> = map_indices(exec, slices + 1, |i| {
            let d: Vec<f64> = next[i].iter().zip(&state.psi[i]).map(|(a, b)| a - b).collect();
            spectral.derivative(&d)
        });
        let increment_slope = diff_slopes.iter().fold(0.0f64, |m, d| m.max(sup_abs(d)));
        let increment = increment_value + increment_slope;

        // structural invariants of the iterate
        let half = g.q / 2;
        for (i, psi) in next.iter().enumerate() {
            for j in 1..half {
                report.max_evenness_defect = report.max_evenness_defect.max((psi[half + j] - psi[half - j]).abs());
            }
            report.max_boundary_slope = report.max_boundary_slope.max(slopes[i][half].abs()).max(slopes[i][0].abs());
            let restricted = g.restrict(psi);
            if oscillation(&restricted) < d0 * (1.0 - 1e-12) || sup_abs(&slopes[i]) > m0 * (1.0 + 1e-12) {
                report.admissible = false;
            }
        }

        let q_n = prev_increment.map(|p| if p > 0.0 { increment / p } else { 0.0 });
        report.iterations.push(IterationRecord { n, increment_norm: increment, q_n, apriori_q });
        state.psi = next;
        state.n = n;
        state.contraction_q = q_n;

        let floor = 64.0 * f64::EPSILON * scale;
        if increment <= cfg.tol || increment <= floor {
            report.converged = true;
            break;
        }
        match q_n {
            Some(q) if q >= 1.0 => {
                non_contracting += 1;
                if non_contracting >= 3 {
                    return Err(Error::NoContraction { t0, consecutive: non_contracting });
                }
            }
            _ => non_contracting = 0,
        }
        prev_increment = Some(increment);
    }

    let slices_out = (0..=slices).map(|j| state.slice_field(j)).collect::<Result<Vec<_>>>()?;
    Ok(PicardSolution { slices: slices_out, report, state })
}

/// One row of the flow-versus-Picard table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub sup_diff: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub picard: PicardSolution,
    pub flow_steps: usize,
    pub flow_dt: f64,
}

impl Comparison {
    pub fn final_difference(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.sup_diff)
    }
}

/// Solve by Picard iteration, then integrate the flow on `phi0`'s grid with a
/// step dividing the slice spacing and at most `base.dt`; compare at every slice
/// time on the common nodes.
pub fn compare_with_flow(
    phi0: &AngleField,
    c: &ConstraintSpec,
    picard: &PicardConfig,
    base: &FlowConfig,
) -> Result<Comparison> {
    let sol = picard_solve(phi0, c, picard)?;
    let t0 = sol.report.t0;
    let slices = sol.slices.len() - 1;
    let dtau = t0 / slices as f64;
    let per_slice = (dtau / base.dt).ceil().max(1.0) as usize;
    let mut cfg = *base;
    cfg.dt = dtau / per_slice as f64;
    cfg.t_end = t0;
    cfg.snapshot_stride = per_slice;
    cfg.equilibrium_tol = f64::MIN_POSITIVE;
    let traj = run_flow(phi0, c, &cfg)?;
    let n = phi0.grid().intervals();
    let ratio = sol.slices[0].grid().intervals() / n;
    let mut rows = Vec::with_capacity(slices + 1);
    for (snap, step) in traj.snapshots.iter().zip(&traj.snapshot_steps) {
        if step % per_slice != 0 {
            continue;
        }
        let j = step / per_slice;
        if j > slices {
            break;
        }
        let p = sol.slices[j].phi();
        let sup = snap.phi().iter().enumerate().fold(0.0f64, |m, (i, v)| m.max((v - p[i * ratio]).abs()));
        rows.push(ComparisonRow { t: sol.slices[j].time(), sup_diff: sup });
    }
    Ok(Comparison { rows, picard: sol, flow_steps: traj.steps, flow_dt: cfg.dt })
}
