//! Run directories: writing trajectories and reading them back.
//!
//! A flow run directory holds
//! - `meta.json`: resolved manifest, termination tag, step count, snapshot index, summary;
//! - `energy.csv`: one row per time step;
//! - `snap_<k>.csv`: curve samples (`s,x,y,phi,k`) of the `k`-th stored snapshot;
//! - `curves.svg`, `energy.svg`, `residual.svg`.
//!
//! Floats are written in shortest round-trip form, so re-reading is lossless.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{record_state, summarize, DiagnosticsRecord, RecordContext, RunSummary};
use crate::error::{Error, Result};
use crate::flow::{FlowTrajectory, Termination};
use crate::grid_curve::{reconstruct_curve_in, AngleField, CurveSample};
use crate::heat_picard::{Comparison, PicardSolution};
use crate::manifest::RunManifest;

pub const ENERGY_HEADER: [&str; 12] = [
    "t",
    "F",
    "residual_eq",
    "residual_constraint_x",
    "residual_constraint_y",
    "lambda1",
    "lambda2",
    "detA",
    "C1",
    "k0",
    "kL",
    "inflections",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub step: usize,
    pub t: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub manifest: Value,
    pub termination: Termination,
    pub steps: usize,
    pub snapshots: Vec<SnapshotEntry>,
    pub summary: RunSummary,
}

/// One row of `energy.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub energy: f64,
    pub residual_eq: f64,
    pub constraint_res: [f64; 2],
    pub lambda: [f64; 2],
    pub det_a: f64,
    pub c1: Option<f64>,
    pub k_bdry: [f64; 2],
    pub inflections: usize,
}

impl From<&DiagnosticsRecord> for EnergyRow {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            t: r.t,
            energy: r.energy,
            residual_eq: r.residual_eq,
            constraint_res: r.constraint_res,
            lambda: r.lambda,
            det_a: r.det_a,
            c1: r.c1,
            k_bdry: r.k_bdry,
            inflections: r.inflections,
        }
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_energy_csv(path: &Path, rows: impl IntoIterator<Item = EnergyRow>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(ENERGY_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let c1 = r.c1.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.t.to_string(),
            r.energy.to_string(),
            r.residual_eq.to_string(),
            r.constraint_res[0].to_string(),
            r.constraint_res[1].to_string(),
            r.lambda[0].to_string(),
            r.lambda[1].to_string(),
            r.det_a.to_string(),
            c1,
            r.k_bdry[0].to_string(),
            r.k_bdry[1].to_string(),
            r.inflections.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergyRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::Reader::from_reader(file);
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(ENERGY_HEADER) {
        return Err(Error::Parse { path: path.to_path_buf(), message: format!("unexpected header {header:?}") });
    }
    let bad =
        |line: usize, what: &str| Error::Parse { path: path.to_path_buf(), message: format!("row {line}: bad {what}") };
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(line + 1, ENERGY_HEADER[i]));
        rows.push(EnergyRow {
            t: f(0)?,
            energy: f(1)?,
            residual_eq: f(2)?,
            constraint_res: [f(3)?, f(4)?],
            lambda: [f(5)?, f(6)?],
            det_a: f(7)?,
            c1: if rec[8].is_empty() { None } else { Some(f(8)?) },
            k_bdry: [f(9)?, f(10)?],
            inflections: rec[11].parse().map_err(|_| bad(line + 1, "inflections"))?,
        });
    }
    Ok(rows)
}

pub fn write_curve_csv(path: &Path, sample: &CurveSample) -> Result<()> {
    let mut w = create(path)?;
    sample.write_csv(&mut w).map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<CurveSample> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CurveSample::read_csv(file).map_err(|e| csv_err(path, e))
}

/// Write a completed flow run (data files and plots) into `dir`.
pub fn write_run(dir: &Path, manifest: &RunManifest, traj: &FlowTrajectory) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let mut snapshots = Vec::with_capacity(traj.snapshots.len());
    for (k, (field, step)) in traj.snapshots.iter().zip(&traj.snapshot_steps).enumerate() {
        let file = format!("snap_{k}.csv");
        let path = dir.join(&file);
        let sample = reconstruct_curve_in(field, manifest.p_minus, traj.config.mode)?;
        write_curve_csv(&path, &sample)?;
        written.push(path);
        snapshots.push(SnapshotEntry { index: k, step: *step, t: field.time(), file });
    }
    let energy = dir.join("energy.csv");
    write_energy_csv(&energy, traj.diagnostics.iter().map(EnergyRow::from))?;
    written.push(energy);
    let meta = RunMeta {
        manifest: manifest.to_json(),
        termination: traj.termination,
        steps: traj.steps,
        snapshots,
        summary: summarize(traj),
    };
    let meta_path = dir.join("meta.json");
    write_json(&meta_path, &meta)?;
    written.push(meta_path);
    written.extend(crate::plots::emit_plots(traj, manifest.p_minus, dir)?);
    Ok(written)
}

/// A run directory read back from disk.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub meta: RunMeta,
    pub energy: Vec<EnergyRow>,
    pub snapshots: Vec<AngleField>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let meta_path = dir.join("meta.json");
    let meta: RunMeta = read_json(&meta_path)?;
    let manifest = RunManifest::parse(&meta.manifest.to_string(), dir, "run").map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { path: meta_path.clone(), message },
        other => other,
    })?;
    let energy = read_energy_csv(&dir.join("energy.csv"))?;
    let grid = manifest.grid;
    let mut snapshots = Vec::with_capacity(meta.snapshots.len());
    for entry in &meta.snapshots {
        let path = dir.join(&entry.file);
        let sample = read_curve_csv(&path)?;
        if sample.len() != grid.nodes_len() {
            return Err(Error::Parse {
                path,
                message: format!("{} rows, expected {}", sample.len(), grid.nodes_len()),
            });
        }
        snapshots.push(AngleField::new(grid, sample.phi, entry.t)?);
    }
    Ok(LoadedRun { manifest, meta, energy, snapshots })
}

/// Diagnostics recomputed from a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagReport {
    pub termination: Termination,
    pub steps: usize,
    pub rows: usize,
    pub snapshots: usize,
    pub max_energy_increase: f64,
    pub max_constraint_residual: f64,
    pub min_det_margin: Option<f64>,
    pub max_k_bdry: f64,
    pub max_inflections: usize,
    pub final_energy: f64,
    pub final_residual: f64,
    /// Largest mismatch between stored rows and values recomputed from snapshots.
    pub snapshot_mismatch: f64,
    /// Per-snapshot records recomputed from the stored angles.
    pub records: Vec<DiagnosticsRecord>,
}

/// Recompute diagnostics of a stored run and cross-check them against `energy.csv`.
pub fn diagnose(run: &LoadedRun) -> DiagReport {
    let m = &run.manifest;
    let ctx =
        RecordContext { constraint: m.constraint, mode: m.flow.mode, dt: m.flow.dt, method: m.flow.multiplier_method };
    let rows = &run.energy;
    let mut mismatch = 0.0f64;
    let mut records = Vec::with_capacity(run.snapshots.len());
    for (field, entry) in run.snapshots.iter().zip(&run.meta.snapshots) {
        let rec = record_state(&ctx, entry.step, None, field, None, true);
        if let Some(row) = rows.get(entry.step) {
            mismatch = mismatch
                .max((row.energy - rec.energy).abs())
                .max((row.det_a - rec.det_a).abs())
                .max((row.constraint_res[0] - rec.constraint_res[0]).abs())
                .max((row.constraint_res[1] - rec.constraint_res[1]).abs());
        } else {
            mismatch = f64::INFINITY;
        }
        records.push(rec);
    }
    let mut report = DiagReport {
        termination: run.meta.termination,
        steps: run.meta.steps,
        rows: rows.len(),
        snapshots: run.snapshots.len(),
        max_energy_increase: f64::NEG_INFINITY,
        max_constraint_residual: 0.0,
        min_det_margin: None,
        max_k_bdry: 0.0,
        max_inflections: 0,
        final_energy: rows.last().map_or(f64::NAN, |r| r.energy),
        final_residual: rows.last().map_or(f64::NAN, |r| r.residual_eq),
        snapshot_mismatch: mismatch,
        records,
    };
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            report.max_energy_increase = report.max_energy_increase.max(r.energy - rows[i - 1].energy);
        }
        report.max_constraint_residual =
            report.max_constraint_residual.max(r.constraint_res[0].hypot(r.constraint_res[1]));
        if let Some(c1) = r.c1 {
            let margin = r.det_a - c1;
            report.min_det_margin = Some(report.min_det_margin.map_or(margin, |m| m.min(margin)));
        }
        report.max_k_bdry = report.max_k_bdry.max(r.k_bdry[0].abs()).max(r.k_bdry[1].abs());
        report.max_inflections = report.max_inflections.max(r.inflections);
    }
    report
}

/// Picard outputs: `picard_report.csv`, `picard.json`, `picard_slice_<j>.csv`.
pub fn write_picard(dir: &Path, manifest: &RunManifest, sol: &PicardSolution) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let report = dir.join("picard_report.csv");
    {
        let mut w = csv::Writer::from_writer(create(&report)?);
        w.write_record(["n", "increment_norm", "q_n", "apriori_q"]).map_err(|e| csv_err(&report, e))?;
        for it in &sol.report.iterations {
            w.write_record([
                it.n.to_string(),
                it.increment_norm.to_string(),
                it.q_n.map(|q| q.to_string()).unwrap_or_default(),
                it.apriori_q.to_string(),
            ])
            .map_err(|e| csv_err(&report, e))?;
        }
        w.flush().map_err(|e| Error::io(&report, e))?;
    }
    written.push(report);
    let mut slices = Vec::with_capacity(sol.slices.len());
    for (j, field) in sol.slices.iter().enumerate() {
        let file = format!("picard_slice_{j}.csv");
        let path = dir.join(&file);
        write_curve_csv(&path, &reconstruct_curve_in(field, manifest.p_minus, manifest.flow.mode)?)?;
        written.push(path);
        slices.push(SnapshotEntry { index: j, step: j, t: field.time(), file });
    }
    let meta = dir.join("picard.json");
    write_json(&meta, &serde_json::json!({ "manifest": manifest.to_json(), "report": sol.report, "slices": slices }))?;
    written.push(meta);
    Ok(written)
}

/// Flow-versus-Picard table `compare.csv` (`t,sup_diff`) plus the Picard outputs.
pub fn write_comparison(dir: &Path, manifest: &RunManifest, cmp: &Comparison) -> Result<Vec<PathBuf>> {
    let mut written = write_picard(dir, manifest, &cmp.picard)?;
    let path = dir.join("compare.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["t", "sup_diff"]).map_err(|e| csv_err(&path, e))?;
    for row in &cmp.rows {
        w.write_record([row.t.to_string(), row.sup_diff.to_string()]).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
