//! Initial angle fields that satisfy the constraint and the hinged condition.
//!
//! Open presets have the form `φ₀ = θ + a·g(s)` where the shape `g` has
//! vanishing odd derivatives at both ends (cosine modes, or bumps supported
//! strictly inside the curve). The rotation `θ` and amplitude `a` are then
//! fitted by Newton's method so that `∫T ds = Δp`.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_curve::{constraint_residual, signed_curvature, AngleField, ConstraintSpec, Grid};
use crate::linalg::solve2;

/// Names accepted in the `preset` field.
pub const PRESET_NAMES: [&str; 5] =
    ["straight-plus-bump", "perturbed-arc", "closed-circle", "closed-ellipse-angle", "from-file"];

/// Required accuracy of the fitted constraint, relative to `L`.
pub const FIT_TOLERANCE: f64 = 1e-9;

/// Largest discrete boundary curvature accepted for open presets.
pub const HINGE_TOLERANCE: f64 = 1e-8;

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn tenth() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// Straight segment plus a smooth compactly supported bump.
    StraightPlusBump {
        /// Starting amplitude for the fit; `0` picks the small-slope estimate.
        #[serde(default = "half")]
        amplitude: f64,
        /// Bump centre as a fraction of `L`.
        #[serde(default = "half")]
        center: f64,
        /// Bump support width as a fraction of `L`.
        #[serde(default = "half")]
        width: f64,
    },
    /// `θ + a·(cos(πs/L) + c₂·cos(2πs/L) + random higher modes)`.
    PerturbedArc {
        /// Sign picks the bulge side; magnitude scales the starting amplitude.
        #[serde(default = "one")]
        bend: f64,
        #[serde(default = "tenth")]
        second_mode: f64,
        /// Number of seeded random cosine modes added from `3π/L` upward.
        #[serde(default)]
        random_modes: usize,
        #[serde(default)]
        random_amplitude: f64,
    },
    /// `φ₀ = 2πs/L + rotation`.
    ClosedCircle {
        #[serde(default)]
        rotation: f64,
    },
    /// `φ₀ = x + ε·sin 2x + rotation`, `x = 2πs/L`: a convex oval for `ε < 1/2`.
    ClosedEllipseAngle {
        #[serde(default = "tenth")]
        eccentricity: f64,
        #[serde(default)]
        rotation: f64,
    },
    /// Angle field stored as JSON `{L, N, t, phi}`.
    FromFile { path: PathBuf },
}

impl InitialData {
    pub fn name(&self) -> &'static str {
        match self {
            InitialData::StraightPlusBump { .. } => PRESET_NAMES[0],
            InitialData::PerturbedArc { .. } => PRESET_NAMES[1],
            InitialData::ClosedCircle { .. } => PRESET_NAMES[2],
            InitialData::ClosedEllipseAngle { .. } => PRESET_NAMES[3],
            InitialData::FromFile { .. } => PRESET_NAMES[4],
        }
    }

    pub fn perturbed_arc() -> Self {
        InitialData::PerturbedArc { bend: 1.0, second_mode: 0.1, random_modes: 0, random_amplitude: 0.0 }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, InitialData::ClosedCircle { .. } | InitialData::ClosedEllipseAngle { .. })
    }
}

/// `exp(1 − 1/(1 − r²))` on `|r| < 1`, zero outside; smooth with peak 1.
fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

/// Build the initial field; relative `from-file` paths resolve against `base_dir`.
pub fn make_initial(
    init: &InitialData,
    grid: Grid,
    c: &ConstraintSpec,
    seed: u64,
    base_dir: &Path,
) -> Result<AngleField> {
    let name = init.name();
    let infeasible = |reason: String| Error::PresetInfeasible { preset: name.into(), reason };
    let l = grid.length();
    if (c.length() - l).abs() > 1e-12 * l {
        return Err(infeasible(format!("constraint length {} differs from grid length {l}", c.length())));
    }
    match init {
        InitialData::StraightPlusBump { amplitude, center, width } => {
            let (lo, hi) = (center - width / 2.0, center + width / 2.0);
            if !(*width > 0.0 && lo > 0.0 && hi < 1.0) {
                return Err(infeasible(format!("bump support [{lo}, {hi}] must lie strictly inside (0, 1)")));
            }
            let shape: Vec<f64> = grid.nodes().iter().map(|s| bump((s / l - center) / (width / 2.0))).collect();
            fit_rotation_amplitude(name, grid, c, &shape, *amplitude)
        }
        InitialData::PerturbedArc { bend, second_mode, random_modes, random_amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let extra: Vec<f64> =
                (0..*random_modes).map(|j| random_amplitude * rng.gen_range(-1.0..1.0) / (j + 3) as f64).collect();
            let shape: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|s| {
                    let x = PI * s / l;
                    let mut v = x.cos() + second_mode * (2.0 * x).cos();
                    for (j, e) in extra.iter().enumerate() {
                        v += e * ((j + 3) as f64 * x).cos();
                    }
                    v
                })
                .collect();
            let guess = if *bend == 0.0 { 1.0 } else { *bend };
            fit_rotation_amplitude(name, grid, c, &shape, guess * small_slope_amplitude(grid, c, &shape))
        }
        InitialData::ClosedCircle { rotation } => closed(name, grid, c, |s| s * (TAU / l) + rotation),
        InitialData::ClosedEllipseAngle { eccentricity, rotation } => {
            if !(eccentricity.abs() < 0.5) {
                return Err(infeasible(format!("eccentricity {eccentricity} must satisfy |e| < 1/2")));
            }
            closed(name, grid, c, |s| {
                let x = s * (TAU / l);
                x + eccentricity * (2.0 * x).sin() + rotation
            })
        }
        InitialData::FromFile { path } => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
            let field = AngleField::from_json(&text).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse { path: full.clone(), message },
                other => other,
            })?;
            if field.grid() != &grid {
                return Err(infeasible(format!(
                    "file grid (L = {}, N = {}) does not match the manifest (L = {l}, N = {})",
                    field.grid().length(),
                    field.grid().intervals(),
                    grid.intervals()
                )));
            }
            Ok(field)
        }
    }
}

fn closed(name: &str, grid: Grid, c: &ConstraintSpec, f: impl Fn(f64) -> f64) -> Result<AngleField> {
    let field = AngleField::from_fn(grid, 0.0, f)?;
    let r = constraint_residual(&field, c);
    if r[0].hypot(r[1]) > FIT_TOLERANCE * grid.length() {
        return Err(Error::PresetInfeasible {
            preset: name.into(),
            reason: format!("closed curves need dp = (0, 0); residual is ({:.3e}, {:.3e})", r[0], r[1]),
        });
    }
    Ok(field)
}

/// Amplitude at which `½a²∫(g − ḡ)² ≈ ΔL`.
fn small_slope_amplitude(grid: Grid, c: &ConstraintSpec, shape: &[f64]) -> f64 {
    let l = grid.length();
    let mean = grid.trapezoid(shape) / l;
    let var = grid.trapezoid_by(|i| (shape[i] - mean).powi(2));
    if var > 0.0 {
        (2.0 * c.delta_l() / var).sqrt()
    } else {
        0.0
    }
}

/// Newton on `(θ, a)` for `∫(cos, sin)(θ + a·g) ds = Δp`.
fn fit_rotation_amplitude(
    name: &str,
    grid: Grid,
    c: &ConstraintSpec,
    shape: &[f64],
    amplitude: f64,
) -> Result<AngleField> {
    let l = grid.length();
    let dp = c.delta_p();
    let mut a = if amplitude == 0.0 { small_slope_amplitude(grid, c, shape) } else { amplitude };
    let mean = grid.trapezoid(shape) / l;
    let mut theta = dp[1].atan2(dp[0]) - a * mean;
    let eval = |theta: f64, a: f64| {
        let mut r = [-dp[0], -dp[1]];
        let mut j = [[0.0; 2]; 2];
        for (i, g) in shape.iter().enumerate() {
            let (s, co) = (theta + a * g).sin_cos();
            let w = grid.weight(i);
            r[0] += w * co;
            r[1] += w * s;
            j[0][0] -= w * s;
            j[0][1] -= w * s * g;
            j[1][0] += w * co;
            j[1][1] += w * co * g;
        }
        (r, j)
    };
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let (mut r, mut j) = eval(theta, a);
    for _ in 0..50 {
        if norm(r) <= 1e-14 * l {
            break;
        }
        let Some(step) = solve2(&j, [-r[0], -r[1]]) else { break };
        // damped step: halve until the residual decreases
        let mut factor = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (t_new, a_new) = (theta + factor * step[0], a + factor * step[1]);
            let (r_new, j_new) = eval(t_new, a_new);
            if norm(r_new) < norm(r) {
                theta = t_new;
                a = a_new;
                r = r_new;
                j = j_new;
                accepted = true;
                break;
            }
            factor *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !(norm(r) <= FIT_TOLERANCE * l) {
        return Err(Error::PresetInfeasible {
            preset: name.into(),
            reason: format!("constraint fit stalled at residual {:.3e} after 50 Newton iterations", norm(r)),
        });
    }
    let field = AngleField::new(grid, shape.iter().map(|g| theta + a * g).collect(), 0.0)?;
    // the smooth shape is hinged exactly; its one-sided discrete curvature is
    // not, and on coarse grids it exceeds what the flow accepts
    let k = signed_curvature(&field);
    let kb = k[0].abs().max(k[grid.intervals()].abs());
    if kb > HINGE_TOLERANCE {
        return Err(Error::PresetInfeasible {
            preset: name.into(),
            reason: format!(
                "discrete boundary curvature {kb:.3e} exceeds {HINGE_TOLERANCE:e} on N = {}; refine the grid",
                grid.intervals()
            ),
        });
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(l: f64, n: usize, dp: [f64; 2]) -> (Grid, ConstraintSpec) {
        (Grid::new(l, n).unwrap(), ConstraintSpec::new(dp, l).unwrap())
    }

    #[test]
    fn circle_is_arclength() {
        let (g, c) = setup(TAU, 64, [0.0, 0.0]);
        let f = make_initial(&InitialData::ClosedCircle { rotation: 0.0 }, g, &c, 0, Path::new(".")).unwrap();
        for (phi, s) in f.phi().iter().zip(g.nodes()) {
            assert_eq!(*phi, s);
        }
    }

    #[test]
    fn closed_presets_need_zero_displacement() {
        let (g, c) = setup(1.0, 64, [0.5, 0.0]);
        let e = make_initial(&InitialData::ClosedCircle { rotation: 0.0 }, g, &c, 0, Path::new("."));
        assert!(matches!(e, Err(Error::PresetInfeasible { .. })));
    }

    #[test]
    fn ellipse_closes_by_symmetry() {
        let (g, c) = setup(3.0, 128, [0.0, 0.0]);
        let init = InitialData::ClosedEllipseAngle { eccentricity: 0.2, rotation: 0.4 };
        let f = make_initial(&init, g, &c, 0, Path::new(".")).unwrap();
        let r = constraint_residual(&f, &c);
        assert!(r[0].hypot(r[1]) < 1e-13);
    }

    #[test]
    fn bump_on_straight_line_bends_into_constraint() {
        let (g, c) = setup(1.0, 128, [0.9, 0.0]);
        let init = InitialData::StraightPlusBump { amplitude: 0.0, center: 0.5, width: 0.6 };
        let f = make_initial(&init, g, &c, 0, Path::new(".")).unwrap();
        let r = constraint_residual(&f, &c);
        assert!(r[0].hypot(r[1]) <= 1e-9);
        let k = signed_curvature(&f);
        assert!(k[0].abs() < 1e-12 && k[128].abs() < 1e-12);
    }

    #[test]
    fn perturbed_arc_is_hinged_and_fitted() {
        for n in [128, 256] {
            let (g, c) = setup(1.0, n, [0.8, 0.0]);
            let f = make_initial(&InitialData::perturbed_arc(), g, &c, 0, Path::new(".")).unwrap();
            let r = constraint_residual(&f, &c);
            assert!(r[0].hypot(r[1]) <= 1e-9);
            let k = signed_curvature(&f);
            assert!(k[0].abs() < 1e-10 && k[n].abs() < 1e-10, "{} {}", k[0], k[n]);
        }
    }

    #[test]
    fn random_modes_follow_the_seed() {
        let (g, c) = setup(1.0, 512, [0.7, 0.1]);
        let init = InitialData::PerturbedArc { bend: 1.0, second_mode: 0.1, random_modes: 4, random_amplitude: 0.3 };
        let a = make_initial(&init, g, &c, 7, Path::new(".")).unwrap();
        let b = make_initial(&init, g, &c, 7, Path::new(".")).unwrap();
        let d = make_initial(&init, g, &c, 8, Path::new(".")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
    }

    #[test]
    fn coarse_grids_are_rejected_for_the_arc() {
        let (g, c) = setup(1.0, 32, [0.8, 0.0]);
        let e = make_initial(&InitialData::perturbed_arc(), g, &c, 0, Path::new("."));
        assert!(matches!(e, Err(Error::PresetInfeasible { .. })), "{e:?}");
    }

    #[test]
    fn impossible_fit_is_reported() {
        // a narrow bump cannot absorb almost all of the length
        let (g, c) = setup(1.0, 64, [0.01, 0.0]);
        let init = InitialData::StraightPlusBump { amplitude: 0.1, center: 0.5, width: 0.1 };
        let e = make_initial(&init, g, &c, 0, Path::new("."));
        assert!(matches!(e, Err(Error::PresetInfeasible { .. })));
    }
}
