//! Command-line front end: orchestrates the pipeline, persists branches,
//! and emits tables and plot data as CSV.

use crate::cable::{self, CableProfile};
use crate::dynamics::{self, State};
use crate::floquet::{self, FloquetOptions};
use crate::galerkin::{self, GalerkinSystem};
use crate::modes::{self, Branch, BranchOptions, ModeOptions, PeriodicMode};
use crate::params::{self, BridgeParams};
use crate::par::map_maybe_parallel;
use crate::reference;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "narrows", version, about = "Suspension-bridge mode and stability laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Flat JSON configuration file; missing keys default to the TNB values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Replace the solved cable by the horizontal fixture.
    #[arg(long)]
    pub flat_cable: bool,
    /// Integrator tolerance.
    #[arg(long, default_value_t = dynamics::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linearized spectrum against the reference small-energy periods.
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of branches to report.
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        /// Basis truncation.
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// Continue branches of nonlinear modes and persist them.
    Branch {
        #[command(flatten)]
        common: CommonArgs,
        /// Branch indices, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = (1..=10usize).collect::<Vec<_>>())]
        k: Vec<usize>,
        /// Basis truncation override (default 10 for k <= 6, 16 above).
        #[arg(long)]
        n: Option<usize>,
        /// Continuation ceiling on the period.
        #[arg(long)]
        t_max: Option<f64>,
        /// Stop once the branch energy exceeds this many MJ (default 1.5x
        /// the reference threshold).
        #[arg(long)]
        energy_cap_mj: Option<f64>,
    },
    /// Expansion rates along a persisted branch, plus its threshold.
    Stability {
        #[command(flatten)]
        common: CommonArgs,
        /// Persisted branch file.
        #[arg(long)]
        branch_file: PathBuf,
        /// Torsional truncation (default: the branch truncation).
        #[arg(long)]
        nu: Option<usize>,
        /// Instability tolerance on the expansion rate.
        #[arg(long, default_value_t = 1e-4)]
        tol_instab: f64,
    },
    /// Thresholds of instability for a set of branches.
    Thresholds {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_values_t = (1..=10usize).collect::<Vec<_>>())]
        k: Vec<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        tol_instab: f64,
    },
    /// Full reproduction run: spectrum, branches, stability, thresholds.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Subset of branches; the summary marks the rest skipped.
        #[arg(long, value_delimiter = ',', default_values_t = (1..=10usize).collect::<Vec<_>>())]
        branches: Vec<usize>,
    },
}

/// Exit-code contract: all checks pass / numerical deviation / usage error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Deviations,
    UsageError,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Clean => 0,
            Outcome::Deviations => 1,
            Outcome::UsageError => 2,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    params_fingerprint: String,
    tolerances: ManifestTolerances,
    truncations: Vec<usize>,
    outputs: Vec<String>,
    wall_clock_s: f64,
    version: String,
}

#[derive(Debug, Serialize)]
struct ManifestTolerances {
    integrator: f64,
    monodromy: f64,
    tol_instab: f64,
}

fn load_params(common: &CommonArgs) -> Result<BridgeParams> {
    match &common.config {
        None => Ok(params::default_tnb()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            Ok(params::load_config(&text)?)
        }
    }
}

fn build_profile(params: &BridgeParams, flat: bool) -> Result<CableProfile> {
    if flat {
        Ok(cable::flat(params, cable::DEFAULT_NODES))
    } else {
        Ok(cable::solve_cable_shape(params, cable::DEFAULT_NODES)?)
    }
}

pub fn default_truncation(k: usize) -> usize {
    if k <= 6 {
        10
    } else {
        16
    }
}

fn write_output(dir: &Path, name: &str, content: &str, outputs: &mut Vec<String>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(name.to_string());
    Ok(())
}

fn write_manifest(
    dir: &Path,
    command: &str,
    params: &BridgeParams,
    tols: ManifestTolerances,
    truncations: Vec<usize>,
    outputs: Vec<String>,
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        params_fingerprint: params.fingerprint(),
        tolerances: tols,
        truncations,
        outputs,
        wall_clock_s: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(format!("manifest_{command}.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Prints and writes the spectrum table; returns true when every reported
/// period is within 2% of the reference.
pub fn cmd_spectrum(common: &CommonArgs, k_max: usize, n: usize) -> Result<Outcome> {
    let started = Instant::now();
    let params = load_params(common)?;
    if k_max > n {
        bail!("truncation too small: k_max {k_max} > n {n}");
    }
    let profile = build_profile(&params, common.flat_cable)?;
    let system = galerkin::assemble(&params, &profile, n)?;
    let spectrum = system.linear_spectrum(n)?;

    let mut csv = String::from("k,lambda,period_s,reference_s,rel_dev\n");
    let mut all_ok = true;
    println!("  k   lambda(1/s^2)   period(s)   reference(s)   deviation");
    for k in 1..=k_max {
        let (lam, _) = spectrum
            .branch_eigenpair(k)
            .ok_or_else(|| anyhow!("no eigenpair with dominant component {k}"))?;
        let period = 2.0 * std::f64::consts::PI / lam.sqrt();
        let (reference, dev) = if !common.flat_cable && k <= 10 {
            let r = reference::SMALL_ENERGY_PERIODS_S[k - 1];
            (r, (period - r) / r)
        } else {
            let r = 2.0 * std::f64::consts::PI / galerkin::flat_cable_eigenvalue(&params, k).sqrt();
            (r, (period - r) / r)
        };
        if dev.abs() > 0.02 {
            all_ok = false;
        }
        println!("  {k:2}   {lam:12.6}   {period:9.4}   {reference:9.4}      {:+7.2}%", dev * 100.0);
        csv.push_str(&format!("{k},{lam},{period},{reference},{dev}\n"));
    }
    if common.flat_cable {
        // closed-form cross-check column
        for k in 1..=k_max {
            let exact = galerkin::flat_cable_eigenvalue(&params, k);
            let got = spectrum.eigenvalues[k - 1];
            if (got - exact).abs() / exact > 1e-10 {
                all_ok = false;
                println!("  flat-cable mismatch at k = {k}: {got} vs {exact}");
            }
        }
    }
    let mut outputs = Vec::new();
    write_output(&common.out, "spectrum.csv", &csv, &mut outputs)?;
    write_manifest(
        &common.out,
        "spectrum",
        &params,
        ManifestTolerances {
            integrator: common.tol,
            monodromy: 0.0,
            tol_instab: 0.0,
        },
        vec![n],
        outputs,
        started,
    )?;
    Ok(if all_ok {
        Outcome::Clean
    } else {
        Outcome::Deviations
    })
}

fn branch_options(
    k: usize,
    tol: f64,
    t_max: Option<f64>,
    energy_cap_mj: Option<f64>,
) -> BranchOptions {
    let cap = energy_cap_mj
        .map(|mj| mj * 1e6)
        .unwrap_or(2.0 * reference::THRESHOLDS[(k - 1).min(9)].0 * 1e6);
    BranchOptions {
        t_max,
        energy_cap: Some(cap),
        mode_opts: ModeOptions {
            tol,
            ..ModeOptions::default()
        },
        ..BranchOptions::default()
    }
}

fn snapshot_csv(system: &GalerkinSystem, y0: &DVector<f64>) -> String {
    let mut out = String::from("x,y\n");
    let nx = 512;
    for i in 0..=nx {
        let x = system.span * i as f64 / nx as f64;
        let mut y = 0.0;
        for (j, &wk) in system.wavenumbers.iter().enumerate() {
            y += y0[j] * (wk * x).sin();
        }
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}

fn components_csv(system: &GalerkinSystem, mode: &PeriodicMode, tol: f64) -> Result<String> {
    let traj = dynamics::integrate(
        system,
        &State::new(0.0, mode.y0.clone(), DVector::zeros(system.n)),
        mode.period,
        tol.max(1e-11),
        257,
    )?;
    let mut out = String::from("t");
    for j in 1..=system.n {
        out.push_str(&format!(",y_{j}"));
    }
    out.push('\n');
    for st in &traj.states {
        out.push_str(&format!("{}", st.t));
        for j in 0..system.n {
            out.push_str(&format!(",{}", st.y[j]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Builds one branch with the standard options and writes its artifacts.
fn run_one_branch(
    params: &BridgeParams,
    profile: &CableProfile,
    k: usize,
    n: usize,
    tol: f64,
    t_max: Option<f64>,
    energy_cap_mj: Option<f64>,
) -> Result<(GalerkinSystem, Branch)> {
    let system = galerkin::assemble(params, profile, n)?;
    let spectrum = system.linear_spectrum(n)?;
    let opts = branch_options(k, tol, t_max, energy_cap_mj);
    let branch = modes::continue_branch(&system, &spectrum, k, &params.fingerprint(), &opts)?;
    Ok((system, branch))
}

pub fn cmd_branch(
    common: &CommonArgs,
    ks: &[usize],
    n_override: Option<usize>,
    t_max: Option<f64>,
    energy_cap_mj: Option<f64>,
) -> Result<Outcome> {
    let started = Instant::now();
    let params = load_params(common)?;
    let profile = build_profile(&params, common.flat_cable)?;
    let mut outputs = Vec::new();
    let mut truncations = Vec::new();
    for &k in ks {
        if !(1..=16).contains(&k) {
            bail!("branch index {k} outside 1..=16");
        }
        let n = n_override.unwrap_or_else(|| default_truncation(k));
        truncations.push(n);
        let (system, branch) =
            run_one_branch(&params, &profile, k, n, common.tol, t_max, energy_cap_mj)?;
        println!(
            "branch {k}: {} modes, T in [{:.4}, {:.4}] s, E up to {:.2} MJ ({:?})",
            branch.modes.len(),
            branch.modes.first().map(|m| m.period).unwrap_or(f64::NAN),
            branch.modes.last().map(|m| m.period).unwrap_or(f64::NAN),
            branch.modes.last().map(|m| m.energy).unwrap_or(0.0) / 1e6,
            branch.stop,
        );
        write_output(
            &common.out,
            &format!("branch_{k}.json"),
            &modes::branch_to_json(&branch),
            &mut outputs,
        )?;
        if let Some(first) = branch.modes.first() {
            write_output(
                &common.out,
                &format!("branch_{k}_snapshot_small.csv"),
                &snapshot_csv(&system, &first.y0),
                &mut outputs,
            )?;
        }
        if let Some(last) = branch.modes.last() {
            write_output(
                &common.out,
                &format!("branch_{k}_snapshot_large.csv"),
                &snapshot_csv(&system, &last.y0),
                &mut outputs,
            )?;
            write_output(
                &common.out,
                &format!("branch_{k}_components.csv"),
                &components_csv(&system, last, common.tol)?,
                &mut outputs,
            )?;
        }
    }
    write_manifest(
        &common.out,
        "branch",
        &params,
        ManifestTolerances {
            integrator: common.tol,
            monodromy: 0.0,
            tol_instab: 0.0,
        },
        truncations,
        outputs,
        started,
    )?;
    Ok(Outcome::Clean)
}

/// Re-converges a branch point at a prescribed energy (0.5% relative) by
/// bisecting in the period between stored points.
fn mode_at_energy(
    system: &GalerkinSystem,
    branch: &Branch,
    energy_j: f64,
    tol: f64,
) -> Result<Option<PeriodicMode>> {
    let first = branch.modes.first().ok_or_else(|| anyhow!("empty branch"))?;
    let last = branch.modes.last().unwrap();
    if energy_j < first.energy || energy_j > last.energy {
        return Ok(None);
    }
    let idx = branch
        .modes
        .windows(2)
        .position(|w| w[0].energy <= energy_j && energy_j <= w[1].energy)
        .ok_or_else(|| anyhow!("branch energies not monotone"))?;
    let mut lo = branch.modes[idx].clone();
    let mut hi = branch.modes[idx + 1].clone();
    let opts = ModeOptions {
        tol,
        ..ModeOptions::default()
    };
    for _ in 0..60 {
        let best = if (lo.energy - energy_j).abs() < (hi.energy - energy_j).abs() {
            &lo
        } else {
            &hi
        };
        if (best.energy - energy_j).abs() <= 0.005 * energy_j {
            return Ok(Some(best.clone()));
        }
        // secant in T against the energy target, clamped inside the bracket
        let w = (energy_j - lo.energy) / (hi.energy - lo.energy);
        let t_mid = (lo.period + w.clamp(0.05, 0.95) * (hi.period - lo.period)).clamp(
            lo.period + 1e-12,
            hi.period - 1e-12,
        );
        let wgt = (t_mid - lo.period) / (hi.period - lo.period);
        let guess = &lo.y0 * (1.0 - wgt) + &hi.y0 * wgt;
        let mid = modes::newton_mode(system, branch.k, t_mid, &guess, &opts)
            .map_err(|e| anyhow!("re-convergence at E = {energy_j}: {e}"))?;
        if mid.energy < energy_j {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(if (lo.energy - energy_j).abs() < (hi.energy - energy_j).abs() {
        lo
    } else {
        hi
    }))
}

struct StabilityArtifacts {
    series_csv: String,
    threshold: Option<floquet::Threshold>,
    grid: Vec<(f64, Option<f64>)>,
}

/// Every stride-th point plus the endpoints; the threshold bisection
/// re-converges interior modes, so scanning a subset loses no accuracy.
pub fn thin_branch(branch: &Branch, max_points: usize) -> Branch {
    if branch.modes.len() <= max_points {
        return branch.clone();
    }
    let stride = branch.modes.len().div_ceil(max_points);
    let mut modes: Vec<PeriodicMode> = branch.modes.iter().step_by(stride).cloned().collect();
    if modes.last().map(|m| m.period) != branch.modes.last().map(|m| m.period) {
        modes.push(branch.modes.last().unwrap().clone());
    }
    Branch {
        modes,
        fingerprint: branch.fingerprint.clone(),
        ..*branch
    }
}

fn stability_for_branch(
    system: &GalerkinSystem,
    branch: &Branch,
    nu: usize,
    tol_instab: f64,
    fl_opts: &FloquetOptions,
) -> Result<StabilityArtifacts> {
    if branch.modes.is_empty() {
        bail!("zero-length branch");
    }
    let rates = floquet::branch_expansion_rates(system, branch, nu, fl_opts)?;
    let mut series_csv = String::from("T,energy_MJ,delta_m,ER");
    let max_mult = rates.first().map(|r| r.multipliers.len()).unwrap_or(0);
    for i in 1..=max_mult {
        series_csv.push_str(&format!(",mult_{i}"));
    }
    series_csv.push('\n');
    for (mode, mono) in branch.modes.iter().zip(&rates) {
        series_csv.push_str(&format!(
            "{},{},{},{}",
            mode.period,
            mode.energy / 1e6,
            mode.delta,
            mono.expansion_rate
        ));
        let mut moduli: Vec<f64> = mono.multipliers.iter().map(|m| m.norm()).collect();
        moduli.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for m in moduli {
            series_csv.push_str(&format!(",{m}"));
        }
        series_csv.push('\n');
    }
    let threshold = match floquet::find_threshold(system, branch, nu, tol_instab, fl_opts) {
        Ok(t) => Some(t),
        Err(floquet::FloquetError::NoThresholdInRange(_)) => None,
        Err(e) => return Err(e.into()),
    };
    // expansion rate at the prescribed energy grid
    let mut grid = Vec::new();
    for &e_mj in &reference::ER_ENERGY_GRID_MJ {
        let er = match mode_at_energy(system, branch, e_mj * 1e6, fl_opts.tol.min(1e-11))? {
            None => None,
            Some(mode) => {
                let torsys = floquet::assemble_torsional(system, &mode, nu, fl_opts)?;
                Some(floquet::monodromy(&torsys, fl_opts)?.expansion_rate)
            }
        };
        grid.push((e_mj, er));
    }
    Ok(StabilityArtifacts {
        series_csv,
        threshold,
        grid,
    })
}

pub fn cmd_stability(
    common: &CommonArgs,
    branch_file: &Path,
    nu: Option<usize>,
    tol_instab: f64,
) -> Result<Outcome> {
    let started = Instant::now();
    let params = load_params(common)?;
    let profile = build_profile(&params, common.flat_cable)?;
    let text = fs::read_to_string(branch_file)
        .with_context(|| format!("reading branch file {}", branch_file.display()))?;
    let branch = modes::branch_from_json(&text, &params.fingerprint())?;
    if branch.modes.is_empty() {
        bail!("zero-length branch");
    }
    let system = galerkin::assemble(&params, &profile, branch.n)?;
    let nu = nu.unwrap_or(branch.n);
    let fl_opts = FloquetOptions {
        tol: common.tol.max(1e-12).min(1e-9),
        ..FloquetOptions::default()
    };
    let art = stability_for_branch(&system, &branch, nu, tol_instab, &fl_opts)?;
    let mut outputs = Vec::new();
    write_output(
        &common.out,
        &format!("stability_{}.csv", branch.k),
        &art.series_csv,
        &mut outputs,
    )?;
    let mut grid_csv = String::from("energy_MJ,ER\n");
    for (e, er) in &art.grid {
        match er {
            Some(er) => grid_csv.push_str(&format!("{e},{er}\n")),
            None => grid_csv.push_str(&format!("{e},\n")),
        }
    }
    write_output(
        &common.out,
        &format!("er_grid_{}.csv", branch.k),
        &grid_csv,
        &mut outputs,
    )?;
    match &art.threshold {
        Some(t) => println!(
            "branch {}: threshold E = {:.2} MJ at T = {:.4} s, delta = {:.2} m",
            branch.k,
            t.energy_j / 1e6,
            t.t_at_threshold,
            t.delta_m
        ),
        None => println!("branch {}: no threshold in range", branch.k),
    }
    write_manifest(
        &common.out,
        "stability",
        &params,
        ManifestTolerances {
            integrator: common.tol,
            monodromy: fl_opts.tol,
            tol_instab,
        },
        vec![branch.n, nu],
        outputs,
        started,
    )?;
    Ok(Outcome::Clean)
}

fn threshold_summary_csv(rows: &[(usize, Option<floquet::Threshold>)]) -> String {
    let mut out = String::from("branch,energy_MJ,period_s,delta_m\n");
    for (k, t) in rows {
        match t {
            Some(t) => out.push_str(&format!(
                "{k},{},{},{}\n",
                t.energy_j / 1e6,
                t.t_at_threshold,
                t.delta_m
            )),
            None => out.push_str(&format!("{k},,,\n")),
        }
    }
    out
}

pub fn cmd_thresholds(
    common: &CommonArgs,
    ks: &[usize],
    n_override: Option<usize>,
    tol_instab: f64,
) -> Result<Outcome> {
    let started = Instant::now();
    let params = load_params(common)?;
    let profile = build_profile(&params, common.flat_cable)?;
    let fl_opts = FloquetOptions::default();
    let rows: Vec<Result<(usize, Option<floquet::Threshold>)>> =
        map_maybe_parallel(true, ks.to_vec(), |k| {
            let n = n_override.unwrap_or_else(|| default_truncation(k));
            let (system, branch) =
                run_one_branch(&params, &profile, k, n, common.tol, None, None)?;
            let scan = thin_branch(&branch, 48);
            let t = match floquet::find_threshold(&system, &scan, n, tol_instab, &fl_opts) {
                Ok(t) => Some(t),
                Err(floquet::FloquetError::NoThresholdInRange(_)) => None,
                Err(e) => return Err(e.into()),
            };
            Ok((k, t))
        });
    let rows: Result<Vec<_>> = rows.into_iter().collect();
    let rows = rows?;
    for (k, t) in &rows {
        match t {
            Some(t) => println!(
                "branch {k}: threshold E = {:.2} MJ at T = {:.4} s, delta = {:.2} m",
                t.energy_j / 1e6,
                t.t_at_threshold,
                t.delta_m
            ),
            None => println!("branch {k}: no threshold in range"),
        }
    }
    let mut outputs = Vec::new();
    write_output(
        &common.out,
        "thresholds.csv",
        &threshold_summary_csv(&rows),
        &mut outputs,
    )?;
    write_manifest(
        &common.out,
        "thresholds",
        &params,
        ManifestTolerances {
            integrator: common.tol,
            monodromy: fl_opts.tol,
            tol_instab,
        },
        ks.iter()
            .map(|&k| n_override.unwrap_or_else(|| default_truncation(k)))
            .collect(),
        outputs,
        started,
    )?;
    Ok(Outcome::Clean)
}

pub fn cmd_report(common: &CommonArgs, branches: &[usize]) -> Result<Outcome> {
    let started = Instant::now();
    let params = load_params(common)?;
    let profile = build_profile(&params, common.flat_cable)?;
    let mut outputs = Vec::new();
    let mut deviations = false;

    // spectrum table
    let sys16 = galerkin::assemble(&params, &profile, 16)?;
    let spectrum = sys16.linear_spectrum(16)?;
    let mut summary = String::new();
    summary.push_str("section,branch,quantity,computed,reference,rel_dev,status\n");
    println!("== small-energy periods ==");
    for k in 1..=10 {
        let Some((lam, _)) = spectrum.branch_eigenpair(k) else {
            bail!("missing eigenpair for branch {k}");
        };
        let period = 2.0 * std::f64::consts::PI / lam.sqrt();
        let reference = reference::SMALL_ENERGY_PERIODS_S[k - 1];
        let dev = (period - reference) / reference;
        let ok = dev.abs() <= 0.02;
        deviations |= !ok;
        println!(
            "  branch {k:2}: T0 = {period:7.4} s vs {reference:6.2} s ({:+6.2}%) {}",
            dev * 100.0,
            if ok { "ok" } else { "DEVIATION" }
        );
        summary.push_str(&format!(
            "spectrum,{k},period_s,{period},{reference},{dev},{}\n",
            if ok { "ok" } else { "deviation" }
        ));
    }

    // branches, stability, thresholds (branch-level parallelism; ordered output)
    let fl_opts = FloquetOptions::default();
    type BranchOut = (usize, GalerkinSystem, Branch, StabilityArtifacts);
    let results: Vec<Result<BranchOut>> =
        map_maybe_parallel(true, branches.to_vec(), |k| {
            let n = default_truncation(k);
            let (system, branch) =
                run_one_branch(&params, &profile, k, n, common.tol, None, None)?;
            let art = stability_for_branch(&system, &thin_branch(&branch, 48), n, 1e-4, &fl_opts)?;
            Ok((k, system, branch, art))
        });

    println!("== thresholds of instability ==");
    let mut threshold_rows = Vec::new();
    for result in results {
        let (k, system, branch, art) = result?;
        write_output(
            &common.out,
            &format!("branch_{k}.json"),
            &modes::branch_to_json(&branch),
            &mut outputs,
        )?;
        write_output(
            &common.out,
            &format!("stability_{k}.csv"),
            &art.series_csv,
            &mut outputs,
        )?;
        if let Some(first) = branch.modes.first() {
            write_output(
                &common.out,
                &format!("branch_{k}_snapshot_small.csv"),
                &snapshot_csv(&system, &first.y0),
                &mut outputs,
            )?;
        }
        let (e_ref, t_ref, d_ref) = reference::THRESHOLDS[k - 1];
        match &art.threshold {
            Some(t) => {
                let e_mj = t.energy_j / 1e6;
                let de = (e_mj - e_ref) / e_ref;
                let dt = (t.t_at_threshold - t_ref) / t_ref;
                let dd = (t.delta_m - d_ref) / d_ref;
                let ok = de.abs() <= 0.15 && dt.abs() <= 0.05 && dd.abs() <= 0.15;
                deviations |= !ok;
                println!(
                    "  branch {k:2}: E = {e_mj:7.2} MJ ({:+6.1}%), T = {:7.4} s ({:+6.1}%), delta = {:5.2} m ({:+6.1}%) {}",
                    de * 100.0,
                    t.t_at_threshold,
                    dt * 100.0,
                    t.delta_m,
                    dd * 100.0,
                    if ok { "ok" } else { "DEVIATION" }
                );
                summary.push_str(&format!(
                    "threshold,{k},energy_MJ,{e_mj},{e_ref},{de},{}\n",
                    if de.abs() <= 0.15 { "ok" } else { "deviation" }
                ));
                summary.push_str(&format!(
                    "threshold,{k},period_s,{},{t_ref},{dt},{}\n",
                    t.t_at_threshold,
                    if dt.abs() <= 0.05 { "ok" } else { "deviation" }
                ));
                summary.push_str(&format!(
                    "threshold,{k},delta_m,{},{d_ref},{dd},{}\n",
                    t.delta_m,
                    if dd.abs() <= 0.15 { "ok" } else { "deviation" }
                ));
            }
            None => {
                deviations = true;
                println!("  branch {k:2}: no threshold in range (reference {e_ref} MJ)");
                summary.push_str(&format!(
                    "threshold,{k},energy_MJ,,{e_ref},,missing\n"
                ));
            }
        }
        threshold_rows.push((k, art.threshold.clone()));

        // expansion-rate grid rows
        for (e_mj, er) in &art.grid {
            let idx = reference::ER_ENERGY_GRID_MJ
                .iter()
                .position(|e| e == e_mj)
                .unwrap();
            let r = reference::EXPANSION_RATES[k - 1][idx];
            summary.push_str(&format!(
                "er_grid,{k},er_at_{e_mj}MJ,{},{},,\n",
                er.map(|v| v.to_string()).unwrap_or_default(),
                r.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
    }
    for k in 1..=10 {
        if !branches.contains(&k) {
            println!("  branch {k:2}: skipped");
            summary.push_str(&format!("threshold,{k},energy_MJ,,,,skipped\n"));
        }
    }
    write_output(
        &common.out,
        "thresholds.csv",
        &threshold_summary_csv(&threshold_rows),
        &mut outputs,
    )?;
    write_output(&common.out, "summary.csv", &summary, &mut outputs)?;
    write_manifest(
        &common.out,
        "report",
        &params,
        ManifestTolerances {
            integrator: common.tol,
            monodromy: fl_opts.tol,
            tol_instab: 1e-4,
        },
        branches.iter().map(|&k| default_truncation(k)).collect(),
        outputs,
        started,
    )?;
    Ok(if deviations {
        Outcome::Deviations
    } else {
        Outcome::Clean
    })
}

/// Dispatches a parsed command line; maps config errors to the usage exit
/// code and lets numerical failures surface as deviations.
pub fn run(cli: Cli) -> Outcome {
    let result = match &cli.command {
        Command::Spectrum { common, k_max, n } => cmd_spectrum(common, *k_max, *n),
        Command::Branch {
            common,
            k,
            n,
            t_max,
            energy_cap_mj,
        } => cmd_branch(common, k, *n, *t_max, *energy_cap_mj),
        Command::Stability {
            common,
            branch_file,
            nu,
            tol_instab,
        } => cmd_stability(common, branch_file, *nu, *tol_instab),
        Command::Thresholds {
            common,
            k,
            n,
            tol_instab,
        } => cmd_thresholds(common, k, *n, *tol_instab),
        Command::Report { common, branches } => cmd_report(common, branches),
    };
    match result {
        Ok(outcome) => outcome,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err.downcast_ref::<params::ParamsError>().is_some()
                || err.downcast_ref::<std::io::Error>().is_some()
                || err.to_string().contains("truncation too small")
                || err
                    .downcast_ref::<modes::ModeError>()
                    .map(|e| matches!(e, modes::ModeError::FingerprintMismatch { .. }))
                    .unwrap_or(false)
                || err.to_string().contains("zero-length branch");
            if usage {
                Outcome::UsageError
            } else {
                Outcome::Deviations
            }
        }
    }
}
