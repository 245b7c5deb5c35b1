//! Gram matrix of the tangent, Lagrange multipliers and the determinant certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_curve::{signed_curvature, tangent_integral, AngleField, ConstraintSpec};
use crate::linalg::{solve2, Mat2};

/// Quadrature-noise floor below which the Gram matrix is treated as singular.
pub fn det_floor(length: f64) -> f64 {
    1e-10 * length * length
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierMethod {
    /// Closed-form multipliers of the continuous problem.
    ContinuousFormula,
    /// Multipliers that make the discrete update preserve `∫T ds` exactly.
    #[default]
    DiscreteConstraint,
    /// `λ ≡ 0`: unconstrained heat flow of the angle.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiplierState {
    pub a: Mat2,
    pub det_a: f64,
    pub lambda: [f64; 2],
    pub method: MultiplierMethod,
}

/// Constants of the lower bound `det A ≥ C1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetBoundCertificate {
    pub delta_l: f64,
    pub delta_phi: f64,
    /// Curvature `L²` norm the bound was built from.
    pub m: f64,
    pub c0: f64,
    pub delta0: f64,
    pub c1: f64,
    /// `δ₀` exceeded `L` and was clamped.
    pub clamped: bool,
}

/// `A = [[∫sin², −∫sin cos], [−∫sin cos, ∫cos²]]`.
pub fn gram_matrix(field: &AngleField) -> Mat2 {
    let g = field.grid();
    let n = g.intervals();
    let (mut ss, mut sc, mut cc) = (0.0, 0.0, 0.0);
    for (i, p) in field.phi().iter().enumerate() {
        let (s, c) = p.sin_cos();
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        ss += w * s * s;
        sc += w * s * c;
        cc += w * c * c;
    }
    let h = g.spacing();
    let off = -h * sc;
    [[h * ss, off], [off, h * cc]]
}

pub fn det_gram(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

fn checked_gram(field: &AngleField) -> Result<(Mat2, f64)> {
    let a = gram_matrix(field);
    let det = det_gram(&a);
    let floor = det_floor(field.grid().length());
    if det.is_nan() || det < floor {
        return Err(Error::DegenerateGram { det, floor });
    }
    Ok((a, det))
}

/// Closed-form multipliers from `∫k² cos φ`, `∫k² sin φ` and the Gram entries.
pub fn lambdas_continuous(field: &AngleField) -> Result<MultiplierState> {
    let (a, det) = checked_gram(field)?;
    let k = signed_curvature(field);
    let g = field.grid();
    let phi = field.phi();
    let kc = g.trapezoid_by(|i| k[i] * k[i] * phi[i].cos());
    let ks = g.trapezoid_by(|i| k[i] * k[i] * phi[i].sin());
    let (s2, c2, sc) = (a[0][0], a[1][1], -a[0][1]);
    let lambda = [(kc * c2 + ks * sc) / det, (kc * sc + ks * s2) / det];
    Ok(MultiplierState { a, det_a: det, lambda, method: MultiplierMethod::ContinuousFormula })
}

/// A candidate update `φ_new = base + λ₁·d₁ + λ₂·d₂`, affine in the multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineUpdate {
    pub base: Vec<f64>,
    pub directions: [Vec<f64>; 2],
}

impl AffineUpdate {
    /// Forward-Euler update `φ + dt·(u + λ₁ sin φ − λ₂ cos φ)`.
    pub fn explicit(phi: &[f64], increment: &[f64], dt: f64) -> Self {
        let base = phi.iter().zip(increment).map(|(p, u)| p + dt * u).collect();
        let d1 = phi.iter().map(|p| dt * p.sin()).collect();
        let d2 = phi.iter().map(|p| -dt * p.cos()).collect();
        Self { base, directions: [d1, d2] }
    }

    pub fn evaluate(&self, lambda: [f64; 2]) -> Vec<f64> {
        let [d1, d2] = &self.directions;
        self.base.iter().zip(d1.iter().zip(d2)).map(|(b, (x, y))| b + lambda[0] * x + lambda[1] * y).collect()
    }
}

/// Multipliers making `∫T ds` of the explicit update equal to its current value.
///
/// `proposed_update` is the unconstrained rate (typically the discrete
/// Laplacian); the result preserves the trapezoid tangent integral to roundoff.
pub fn lambdas_discrete(field: &AngleField, proposed_update: &[f64], dt: f64) -> Result<MultiplierState> {
    let (a, det) = checked_gram(field)?;
    let update = AffineUpdate::explicit(field.phi(), proposed_update, dt);
    let lambda = constrained_multipliers(field, &update, tangent_integral(field))?;
    Ok(MultiplierState { a, det_a: det, lambda, method: MultiplierMethod::DiscreteConstraint })
}

/// Least-squares multipliers of the linearized constraint: `A λ = ∫ u·T⊥ ds`.
pub fn linearized_lambdas(field: &AngleField, rate: &[f64]) -> Result<MultiplierState> {
    let (a, det) = checked_gram(field)?;
    let g = field.grid();
    let phi = field.phi();
    let rhs = [g.trapezoid_by(|i| -rate[i] * phi[i].sin()), g.trapezoid_by(|i| rate[i] * phi[i].cos())];
    let lambda = solve2(&a, rhs).ok_or(Error::DegenerateGram { det, floor: det_floor(g.length()) })?;
    Ok(MultiplierState { a, det_a: det, lambda, method: MultiplierMethod::DiscreteConstraint })
}

/// Newton solve of `∫T(update(λ)) ds = target` for λ.
pub fn constrained_multipliers(field: &AngleField, update: &AffineUpdate, target: [f64; 2]) -> Result<[f64; 2]> {
    let g = field.grid();
    let n = g.intervals();
    let h = g.spacing();
    let floor = det_floor(g.length());
    let [d1, d2] = &update.directions;
    // (residual, Jacobian) at the given multipliers
    let eval = |lambda: [f64; 2]| {
        let (mut rx, mut ry) = (0.0, 0.0);
        let mut j = [[0.0; 2]; 2];
        for i in 0..=n {
            let q = update.base[i] + lambda[0] * d1[i] + lambda[1] * d2[i];
            let (s, c) = q.sin_cos();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            rx += w * c;
            ry += w * s;
            j[0][0] -= w * s * d1[i];
            j[0][1] -= w * s * d2[i];
            j[1][0] += w * c * d1[i];
            j[1][1] += w * c * d2[i];
        }
        for row in j.iter_mut() {
            for v in row.iter_mut() {
                *v *= h;
            }
        }
        ([h * rx - target[0], h * ry - target[1]], j)
    };

    let mut lambda = [0.0, 0.0];
    let (mut r, mut j) = eval(lambda);
    let tol = 4.0 * f64::EPSILON * g.length();
    for _ in 0..25 {
        if r[0].abs().max(r[1].abs()) <= tol {
            break;
        }
        let step = solve2(&j, [-r[0], -r[1]]).ok_or(Error::DegenerateGram { det: det_gram(&j), floor })?;
        let next = [lambda[0] + step[0], lambda[1] + step[1]];
        let (rn, jn) = eval(next);
        // stop once roundoff dominates
        if rn[0].abs().max(rn[1].abs()) >= r[0].abs().max(r[1].abs()) {
            break;
        }
        lambda = next;
        r = rn;
        j = jn;
    }
    if !(lambda[0].is_finite() && lambda[1].is_finite()) {
        return Err(Error::DegenerateGram { det: det_gram(&j), floor });
    }
    Ok(lambda)
}

/// Constructive lower bound on `det A` for the current state.
pub fn det_lower_bound(field: &AngleField, c: &ConstraintSpec) -> Result<DetBoundCertificate> {
    let k = signed_curvature(field);
    let m = field.grid().trapezoid_by(|i| k[i] * k[i]).sqrt();
    certificate(c, m)
}

/// Certificate for a given curvature norm `m`.
pub fn certificate(c: &ConstraintSpec, m: f64) -> Result<DetBoundCertificate> {
    let l = c.length();
    let delta_l = c.delta_l();
    if !(delta_l > 0.0) {
        return Err(Error::CertificateInvalid(format!("slack {delta_l:.3e} is not positive")));
    }
    let delta_phi = (1.0 - delta_l / l).acos();
    if !(delta_phi > 0.0 && delta_phi < std::f64::consts::FRAC_PI_2) {
        return Err(Error::CertificateInvalid(format!("angle spread {delta_phi} is outside (0, pi/2)")));
    }
    let c0 = 1.0;
    let mut delta0 = (delta_phi / (3.0 * c0 * m)).powi(2);
    let clamped = !(delta0 <= l);
    if clamped {
        delta0 = l;
    }
    let c1 = 0.5 * (delta0 * (delta_phi / 3.0).sin()).powi(2);
    Ok(DetBoundCertificate { delta_l, delta_phi, m, c0, delta0, c1, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_curve::Grid;
    use std::f64::consts::{PI, TAU};

    fn field(l: f64, n: usize, f: impl Fn(f64) -> f64) -> AngleField {
        AngleField::from_fn(Grid::new(l, n).unwrap(), 0.0, f).unwrap()
    }

    #[test]
    fn gram_of_trivial_fields() {
        let a = gram_matrix(&field(1.0, 16, |_| 0.0));
        assert_eq!(a, [[0.0, 0.0], [0.0, 1.0]]);
        let a = gram_matrix(&field(TAU, 128, |s| s));
        assert!((a[0][0] - PI).abs() < 1e-12 && (a[1][1] - PI).abs() < 1e-12);
        assert!(a[0][1].abs() < 1e-12 && a[0][1] == a[1][0]);
        assert!((det_gram(&a) - PI * PI).abs() < 1e-10);
        for c in [0.0, 0.3, PI / 4.0, 2.0] {
            assert!(det_gram(&gram_matrix(&field(1.0, 64, |_| c))).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_constant_angle() {
        let err = lambdas_continuous(&field(1.0, 64, |_| PI / 4.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateGram { .. }));
    }

    #[test]
    fn circle_has_zero_multipliers() {
        let f = field(TAU, 256, |s| s);
        let m = lambdas_continuous(&f).unwrap();
        assert!(m.lambda[0].abs() < 1e-10 && m.lambda[1].abs() < 1e-10);
        assert_eq!(m.method, MultiplierMethod::ContinuousFormula);
    }

    #[test]
    fn determinant_identity_double_integral() {
        // 2·det A = ∬ sin²(φ(σ) − φ(s)) holds exactly for any weights
        let f = field(1.3, 40, |s| 0.9 * (2.0 * s).sin() + s * s);
        let g = f.grid();
        let phi = f.phi();
        let dbl: f64 = (0..=40).map(|i| g.weight(i) * g.trapezoid_by(|j| (phi[j] - phi[i]).sin().powi(2))).sum();
        assert!((2.0 * det_gram(&gram_matrix(&f)) - dbl).abs() < 1e-13);
    }

    #[test]
    fn certificate_closed_form() {
        let l = 2.0;
        let dl = l * (1.0 - (PI / 4.0).cos());
        let c = ConstraintSpec::new([l - dl, 0.0], l).unwrap();
        let cert = certificate(&c, 3.0).unwrap();
        assert!((cert.delta_phi - PI / 4.0).abs() < 1e-14);
        assert_eq!(cert.c0, 1.0);
        let mut last = f64::INFINITY;
        for m in [1.0, 2.0, 5.0, 50.0, 500.0] {
            let c1 = certificate(&c, m).unwrap().c1;
            assert!(c1 > 0.0 && c1 < last);
            last = c1;
        }
        let tiny = certificate(&c, 1e-3).unwrap();
        assert!(tiny.clamped && tiny.delta0 == l);
    }

    #[test]
    fn discrete_multipliers_preserve_integral() {
        let f = field(1.0, 256, |s| 0.8 * (PI * s).cos() + 0.2 * (2.0 * PI * s).cos() + 0.1);
        let h = f.grid().spacing();
        let lap = crate::flow::laplacian(&f, crate::grid_curve::CurveMode::OpenHinged);
        let dt = h * h / 4.0;
        let m = lambdas_discrete(&f, &lap, dt).unwrap();
        let update = AffineUpdate::explicit(f.phi(), &lap, dt);
        let next = AngleField::new(*f.grid(), update.evaluate(m.lambda), dt).unwrap();
        let (a, b) = (tangent_integral(&f), tangent_integral(&next));
        assert!((a[0] - b[0]).abs() <= 1e-13 && (a[1] - b[1]).abs() <= 1e-13);
    }

    #[test]
    fn zero_laplacian_gives_zero_multipliers() {
        let f = field(TAU, 128, |s| s);
        let lap = vec![0.0; 129];
        let m = lambdas_discrete(&f, &lap, 1e-4).unwrap();
        assert!(m.lambda[0].abs() < 1e-12 && m.lambda[1].abs() < 1e-12);
    }
}
