//! Small dense and banded solvers.

pub type Mat2 = [[f64; 2]; 2];

/// Solve the 2×2 system `a·x = b`; `None` when `a` is numerically singular.
pub fn solve2(a: &Mat2, b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = (a[0][0].abs() + a[0][1].abs()) * (a[1][0].abs() + a[1][1].abs());
    if !(det.abs() > 1e-300 && det.abs() > 1e-15 * scale) {
        return None;
    }
    Some([(b[0] * a[1][1] - a[0][1] * b[1]) / det, (a[0][0] * b[1] - b[0] * a[1][0]) / det])
}

/// LU factors of a diagonally dominant tridiagonal matrix (Thomas algorithm).
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    pivots: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` unused), `upper[i]`
    /// multiplies `x[i+1]` (last entry unused).
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Option<Self> {
        let n = diag.len();
        let mut upper_mod = vec![0.0; n];
        let mut pivots = vec![0.0; n];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { lower[i] };
            let p = diag[i] - l * prev_upper;
            if !(p.abs() > f64::MIN_POSITIVE) || !p.is_finite() {
                return None;
            }
            pivots[i] = p;
            upper_mod[i] = if i + 1 < n { upper[i] / p } else { 0.0 };
            prev_upper = upper_mod[i];
        }
        Some(Self { lower: lower.to_vec(), upper_mod, pivots })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut x = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { self.lower[i] };
            x[i] = (rhs[i] - l * prev) / self.pivots[i];
            prev = x[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.upper_mod[i] * x[i + 1];
        }
        x
    }
}

/// Cyclic tridiagonal solve via Sherman–Morrison on top of [`Tridiagonal`].
#[derive(Clone, Debug)]
pub struct CyclicTridiagonal {
    inner: Tridiagonal,
    z: Vec<f64>,
    gamma: f64,
    corner: f64,
}

impl CyclicTridiagonal {
    /// Constant-coefficient circulant with stencil `(off, diag, off)`.
    pub fn circulant(n: usize, diag: f64, off: f64) -> Option<Self> {
        if n < 3 {
            return None;
        }
        let gamma = -diag;
        let mut d = vec![diag; n];
        d[0] = diag - gamma;
        d[n - 1] = diag - off * off / gamma;
        let inner = Tridiagonal::factor(&vec![off; n], &d, &vec![off; n])?;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        let z = inner.solve(&u);
        Some(Self { inner, z, gamma, corner: off })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.inner.len();
        let y = self.inner.solve(rhs);
        // rank-one correction with v = (1, 0, …, 0, corner/γ)
        let vy = y[0] + self.corner / self.gamma * y[n - 1];
        let vz = self.z[0] + self.corner / self.gamma * self.z[n - 1];
        let f = vy / (1.0 + vz);
        y.iter().zip(&self.z).map(|(a, b)| a - f * b).collect()
    }
}
