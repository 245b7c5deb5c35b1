use std::f64::consts::TAU;
use std::path::Path;

use elastica_flow::diagnostics::{energy_identity_defect, higher_energy_defect, summarize};
use elastica_flow::flow::step_imex;
use elastica_flow::presets::{make_initial, InitialData};
use elastica_flow::{run_flow, AngleField, ConstraintSpec, CurveMode, FlowConfig, Grid, MultiplierMethod};

fn arc(n: usize) -> (AngleField, ConstraintSpec) {
    let g = Grid::new(1.0, n).unwrap();
    let c = ConstraintSpec::new([0.8, 0.0], 1.0).unwrap();
    (make_initial(&InitialData::perturbed_arc(), g, &c, 0, Path::new(".")).unwrap(), c)
}

fn orders(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn energy_identity_defect_is_first_order_in_time() {
    let g = Grid::new(TAU, 1024).unwrap();
    let phi0 = AngleField::from_fn(g, 0.0, |s| s + 0.1 * s.sin()).unwrap();
    let defects: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
        .iter()
        .map(|&dt| {
            let cfg =
                FlowConfig::new(dt, 1.0).with_mode(CurveMode::ClosedPeriodic).with_multipliers(MultiplierMethod::Zero);
            let next = step_imex(&phi0, &cfg).unwrap();
            energy_identity_defect(&phi0, &next, dt, CurveMode::ClosedPeriodic)
        })
        .collect();
    for p in orders(&defects) {
        assert!(p >= 0.9, "{defects:?}");
    }
}

#[test]
fn higher_identities_hold_at_equilibrium_to_second_order() {
    let mut defects = [Vec::new(), Vec::new()];
    for n in [64, 128, 256] {
        let (phi0, c) = arc(n);
        let mut cfg = FlowConfig::new(FlowConfig::default_dt(phi0.grid()), 10.0);
        cfg.snapshot_stride = usize::MAX;
        let traj = run_flow(&phi0, &c, &cfg).unwrap();
        let eq = traj.final_state().unwrap();
        let lambda = traj.diagnostics.last().unwrap().lambda;
        for (m, d) in defects.iter_mut().enumerate() {
            d.push(higher_energy_defect(m + 1, eq, eq, cfg.dt, lambda, CurveMode::OpenHinged));
        }
    }
    for d in &defects {
        assert!(d.windows(2).all(|w| w[0] / w[1] > 3.0), "{d:?}");
        assert!(d[2] < 1e-2, "{d:?}");
    }
}

#[test]
fn higher_identities_converge_along_a_run() {
    let mut defects = [Vec::new(), Vec::new()];
    for n in [64, 128, 256] {
        let (phi0, c) = arc(n);
        let mut cfg = FlowConfig::new(FlowConfig::default_dt(phi0.grid()), 0.01);
        cfg.snapshot_stride = 1;
        cfg.equilibrium_tol = f64::MIN_POSITIVE;
        let traj = run_flow(&phi0, &c, &cfg).unwrap();
        let k = traj.snapshots.len();
        let (prev, next) = (&traj.snapshots[k - 2], &traj.snapshots[k - 1]);
        let lambda = traj.diagnostics.last().unwrap().lambda;
        for (m, d) in defects.iter_mut().enumerate() {
            d.push(higher_energy_defect(m + 1, prev, next, cfg.dt, lambda, CurveMode::OpenHinged));
        }
    }
    for d in &defects {
        for p in orders(d) {
            assert!(p >= 1.0, "{d:?}");
        }
    }
}

#[test]
fn closed_convex_run_stays_convex() {
    let g = Grid::new(TAU, 96).unwrap();
    let c = ConstraintSpec::new([0.0, 0.0], TAU).unwrap();
    let phi0 =
        make_initial(&InitialData::ClosedEllipseAngle { eccentricity: 0.2, rotation: 0.4 }, g, &c, 0, Path::new("."))
            .unwrap();
    let cfg = FlowConfig::new(FlowConfig::default_dt(&g), 0.5).with_mode(CurveMode::ClosedPeriodic);
    let traj = run_flow(&phi0, &c, &cfg).unwrap();
    assert!(traj.diagnostics.iter().all(|r| r.inflections == 0 && r.min_k > 0.0));
    let s = summarize(&traj);
    assert!(s.max_energy_increase <= 1e-12);
    assert!(s.final_energy < s.initial_energy);
    assert!(traj.diagnostics.iter().all(|r| r.c1.is_none() && r.k2_bdry.is_none()));
}

#[test]
fn residual_of_a_moving_curve_decreases() {
    let (phi0, c) = arc(64);
    let mut cfg = FlowConfig::new(FlowConfig::default_dt(phi0.grid()), 0.2);
    cfg.equilibrium_tol = f64::MIN_POSITIVE;
    let traj = run_flow(&phi0, &c, &cfg).unwrap();
    let res: Vec<f64> = traj.diagnostics.iter().map(|r| r.residual_eq).collect();
    assert!(res.iter().all(|&r| r > 0.0));
    assert!(res.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "residual increased");
}
