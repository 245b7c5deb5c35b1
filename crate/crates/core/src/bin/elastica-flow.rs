use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use elastica_flow::heat_picard::{compare_with_flow, picard_solve};
use elastica_flow::manifest::RunManifest;
use elastica_flow::output::{diagnose, load_run, write_comparison, write_picard, write_run};
use elastica_flow::presets::make_initial;
use elastica_flow::{diagnostics, run_flow, Error};

#[derive(Parser, Debug)]
#[command(name = "elastica-flow", version, about = "L2 flow of inextensible elastic curves with hinged ends")]
struct Cli {
    /// Number of manifests processed concurrently (also sizes the worker pool).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Override the snapshot stride of every manifest.
    #[arg(long, global = true)]
    snapshot_stride: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the flow and write a run directory.
    Run { manifests: Vec<PathBuf> },
    /// Solve the short-time problem by heat-kernel Picard iteration.
    Picard { manifests: Vec<PathBuf> },
    /// Compare the flow with the Picard solution up to the certified time.
    Compare { manifests: Vec<PathBuf> },
    /// Recompute diagnostics of existing run directories.
    Diag { run_dirs: Vec<PathBuf> },
}

fn load(path: &Path, stride: Option<usize>) -> Result<RunManifest> {
    let mut m = RunManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?;
    if let Some(k) = stride {
        anyhow::ensure!(
            k > 0,
            Error::Manifest { field: "--snapshot-stride".into(), expected: "a positive integer".into() }
        );
        m.flow.snapshot_stride = k;
    }
    Ok(m)
}

fn run_one(path: &Path, cli: &Cli) -> Result<()> {
    let m = load(path, cli.snapshot_stride)?;
    let phi0 = make_initial(&m.initial, m.grid, &m.constraint, m.seed, &m.base_dir)?;
    let traj = run_flow(&phi0, &m.constraint, &m.flow)?;
    let dir = m.resolved_output_dir();
    write_run(&dir, &m, &traj)?;
    if !cli.quiet {
        let s = diagnostics::summarize(&traj);
        println!(
            "{}: {:?} after {} steps (t = {:.6}), F = {:.10} -> {:.10}, residual {:.3e}, max |constraint| {:.3e} -> {}",
            path.display(),
            traj.termination,
            traj.steps,
            traj.final_state().map_or(0.0, |f| f.time()),
            s.initial_energy,
            s.final_energy,
            s.final_residual,
            s.max_constraint_residual,
            dir.display()
        );
        if traj.snapshots.is_empty() {
            eprintln!("warning: no snapshots stored, plots skipped");
        }
    }
    Ok(())
}

fn picard_one(path: &Path, cli: &Cli) -> Result<()> {
    let m = load(path, cli.snapshot_stride)?;
    let phi0 = make_initial(&m.initial, m.grid, &m.constraint, m.seed, &m.base_dir)?;
    let sol = picard_solve(&phi0, &m.constraint, &m.picard)?;
    let dir = m.resolved_output_dir();
    write_picard(&dir, &m, &sol)?;
    if !cli.quiet {
        let r = &sol.report;
        println!(
            "{}: t0 = {:.4e}, C4 = {:.3}, a priori factor {:.3}, {} iterations, converged = {} -> {}",
            path.display(),
            r.t0,
            r.c4,
            r.apriori_q,
            r.iterations.len(),
            r.converged,
            dir.display()
        );
    }
    Ok(())
}

fn compare_one(path: &Path, cli: &Cli) -> Result<()> {
    let m = load(path, cli.snapshot_stride)?;
    let phi0 = make_initial(&m.initial, m.grid, &m.constraint, m.seed, &m.base_dir)?;
    let cmp = compare_with_flow(&phi0, &m.constraint, &m.picard, &m.flow)?;
    let dir = m.resolved_output_dir();
    write_comparison(&dir, &m, &cmp)?;
    if !cli.quiet {
        println!(
            "{}: t0 = {:.4e}, sup |flow - picard| at t0 = {:.3e} ({} flow steps of {:.3e}) -> {}",
            path.display(),
            cmp.picard.report.t0,
            cmp.final_difference(),
            cmp.flow_steps,
            cmp.flow_dt,
            dir.display()
        );
    }
    Ok(())
}

fn diag_one(dir: &Path, cli: &Cli) -> Result<()> {
    let run = load_run(dir).with_context(|| format!("reading run directory {}", dir.display()))?;
    let report = diagnose(&run);
    let out = dir.join("diag.json");
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&out, text + "\n").map_err(|e| Error::Io { path: out.clone(), source: e })?;
    if !cli.quiet {
        println!(
            "{}: {:?}, {} rows, {} snapshots; max energy increase {:.3e}; max |constraint| {:.3e}; \
             min detA - C1 {}; max |k(bdry)| {:.3e}; max inflections {}; snapshot mismatch {:.3e}",
            dir.display(),
            report.termination,
            report.rows,
            report.snapshots,
            report.max_energy_increase,
            report.max_constraint_residual,
            report.min_det_margin.map_or("n/a".into(), |v| format!("{v:.3e}")),
            report.max_k_bdry,
            report.max_inflections,
            report.snapshot_mismatch
        );
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(|e| e.downcast_ref::<Error>()).map_or(3, |e| e.exit_code() as u8)
}

type Job = fn(&Path, &Cli) -> Result<()>;

fn process(items: &[PathBuf], cli: &Cli, f: Job) -> Vec<(PathBuf, Result<()>)> {
    #[cfg(feature = "parallel")]
    if cli.jobs > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(|p| (p.clone(), f(p, cli))).collect();
    }
    items.iter().map(|p| (p.clone(), f(p, cli))).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.jobs > 1 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let (items, f): (&[PathBuf], Job) = match &cli.command {
        Command::Run { manifests } => (manifests, run_one),
        Command::Picard { manifests } => (manifests, picard_one),
        Command::Compare { manifests } => (manifests, compare_one),
        Command::Diag { run_dirs } => (run_dirs, diag_one),
    };
    if items.is_empty() {
        eprintln!("error: nothing to do (pass at least one manifest or run directory)");
        return ExitCode::from(2);
    }
    let mut code = 0u8;
    for (path, result) in process(items, &cli, f) {
        if let Err(e) = result {
            eprintln!("error: {}: {e:#}", path.display());
            if code == 0 {
                code = exit_code(&e);
            }
        }
    }
    ExitCode::from(code)
}
