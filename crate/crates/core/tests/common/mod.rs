//! Independent oracles for the integration tests. Nothing here uses the
//! library: quadrature and ODE integration are written from scratch.

#![allow(dead_code)]

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson(a: f64, b: f64, m: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(m.is_multiple_of(2));
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Hinged elastica `φ'' = μ₁ sin φ − μ₂ cos φ`, `φ'(0) = φ'(L) = 0`,
/// `∫(cos φ, sin φ) ds = Δp`, found by shooting from `s = 0`.
#[derive(Clone, Debug)]
pub struct Elastica {
    pub length: f64,
    pub phi0: f64,
    pub mu: [f64; 2],
    /// `φ` at `steps + 1` equispaced points.
    pub phi: Vec<f64>,
    /// `φ'` at the same points.
    pub slope: Vec<f64>,
}

impl Elastica {
    /// `φ` at the nodes of a uniform grid with `n` intervals (`n` must divide the step count).
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let steps = self.phi.len() - 1;
        assert!(steps.is_multiple_of(n), "{n} does not divide {steps}");
        let stride = steps / n;
        (0..=n).map(|i| self.phi[i * stride]).collect()
    }
}

type State = [f64; 4];

fn field(y: &State, mu: [f64; 2]) -> State {
    let (s, c) = y[0].sin_cos();
    [y[1], mu[0] * s - mu[1] * c, c, s]
}

/// Classical RK4 from `φ(0) = a`, `φ'(0) = 0`; returns the full path.
fn integrate(length: f64, a: f64, mu: [f64; 2], steps: usize) -> Vec<State> {
    let h = length / steps as f64;
    let mut y: State = [a, 0.0, 0.0, 0.0];
    let mut path = Vec::with_capacity(steps + 1);
    path.push(y);
    let add = |y: &State, k: &State, w: f64| -> State {
        [y[0] + w * k[0], y[1] + w * k[1], y[2] + w * k[2], y[3] + w * k[3]]
    };
    for _ in 0..steps {
        let k1 = field(&y, mu);
        let k2 = field(&add(&y, &k1, h / 2.0), mu);
        let k3 = field(&add(&y, &k2, h / 2.0), mu);
        let k4 = field(&add(&y, &k3, h), mu);
        for j in 0..4 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        path.push(y);
    }
    path
}

fn endpoint_conditions(length: f64, dp: [f64; 2], x: [f64; 3], steps: usize) -> [f64; 3] {
    let end = *integrate(length, x[0], [x[1], x[2]], steps).last().unwrap();
    [end[1], end[2] - dp[0], end[3] - dp[1]]
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let mut x = [0.0; 3];
    for (col, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][col] = b[r];
        }
        *xc = det(m) / d;
    }
    x
}

/// Newton on `(φ(0), μ₁, μ₂)` with a central-difference Jacobian.
///
/// The default guess is the first buckling mode `φ ≈ a·cos(πs/L)` of the
/// small-slope theory: `a = 2√(ΔL/L)`, `μ = (−(π/L)², 0)`, rotated towards `Δp`.
pub fn shoot_elastica(length: f64, dp: [f64; 2], steps: usize) -> Elastica {
    let dl = length - dp[0].hypot(dp[1]);
    let pi = std::f64::consts::PI;
    let theta = dp[1].atan2(dp[0]);
    let mut x = [
        theta + 2.0 * (dl / length).sqrt(),
        -(pi / length).powi(2) * theta.cos(),
        -(pi / length).powi(2) * theta.sin(),
    ];
    let norm = |r: [f64; 3]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut r = endpoint_conditions(length, dp, x, steps);
    for _ in 0..100 {
        if norm(r) < 1e-13 {
            break;
        }
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let eps = 1e-7 * (1.0 + x[j].abs());
            let (mut xp, mut xm) = (x, x);
            xp[j] += eps;
            xm[j] -= eps;
            let (rp, rm) = (endpoint_conditions(length, dp, xp, steps), endpoint_conditions(length, dp, xm, steps));
            for i in 0..3 {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * eps);
            }
        }
        let step = solve3(jac, [-r[0], -r[1], -r[2]]);
        let mut t = 1.0;
        loop {
            let trial = [x[0] + t * step[0], x[1] + t * step[1], x[2] + t * step[2]];
            let rt = endpoint_conditions(length, dp, trial, steps);
            if norm(rt) < norm(r) || t < 1e-6 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    assert!(norm(r) < 1e-10, "shooting did not converge: residual {r:?}");
    let path = integrate(length, x[0], [x[1], x[2]], steps);
    Elastica {
        length,
        phi0: x[0],
        mu: [x[1], x[2]],
        phi: path.iter().map(|y| y[0]).collect(),
        slope: path.iter().map(|y| y[1]).collect(),
    }
}
