//! Orchestration: solve, simulate, check, and emit the artifact tree.
//!
//! Artifact layout for `run`:
//!
//! ```text
//! <out>/manifest.json          resolved config + version
//! <out>/report.jsonl           one row per time step
//! <out>/report.csv             same rows, flat
//! <out>/summary.json           scalar summaries + pass flags
//! <out>/fields/t_#####.csv     x,u,eta,chi at each snapshot time
//! <out>/ensemble/t_#####.csv   t,quantile,position at each snapshot time
//! ```
//!
//! Everything is a pure function of the config (and seed), so a re-run
//! reproduces the artifacts byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use degdiff_core::diagnostics::{
    chi_field, invariant_report, DiagnosticsReport, SnapshotRow,
};
use degdiff_core::field::{
    integrate, l1_distance, linf_norm, total_variation, GridField,
};
use degdiff_core::oracles;
use degdiff_core::particles::{
    self, fourth_moment_scaling, law_distance, mean_drift, EnsemblePath, InitSampling,
};
use degdiff_core::semigroup::{epsilon_continuation, evolve, Trajectory};

use crate::config::RunConfig;
use crate::io;

/// Environment variable that reroots relative output directories.
pub const OUT_ROOT_ENV: &str = "DEGDIFF_OUT_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub resolved_snapshot_times: Vec<f64>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportRow {
    t: f64,
    mass: f64,
    linf: f64,
    energy: f64,
    total_variation: f64,
    min_u: f64,
    boundary_abs: f64,
    chi_max: Option<f64>,
    chi_max_jump: Option<f64>,
    grad_sq: f64,
}

impl ReportRow {
    fn from_snapshot(r: &SnapshotRow) -> ReportRow {
        ReportRow {
            t: r.time,
            mass: r.mass,
            linf: r.linf,
            energy: r.energy,
            total_variation: r.total_variation,
            min_u: r.min_u,
            boundary_abs: r.boundary_abs,
            chi_max: r.chi_max.is_finite().then_some(r.chi_max),
            chi_max_jump: r.chi_max_jump.is_finite().then_some(r.chi_max_jump),
            grad_sq: r.grad_sq,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleErrorRow {
    pub t: f64,
    pub l1: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub name: String,
    pub rows: Vec<OracleErrorRow>,
    pub final_l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParticleSummary {
    pub mode: String,
    pub count: usize,
    pub substeps: usize,
    pub seed: u64,
    pub final_ks: f64,
    pub final_wasserstein1: f64,
    pub final_histogram_l1: f64,
    pub mean_drift: f64,
    pub mean_drift_bound: f64,
    pub fourth_moment_ratio: f64,
    pub fourth_moment_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSummary {
    pub eps: Vec<f64>,
    pub sup_l1_distances: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub passed: bool,
    pub violations: Vec<String>,
    pub mass_initial: f64,
    pub mass_drift_rel: f64,
    pub min_u: f64,
    pub linf_excess: f64,
    pub tv_excess: f64,
    pub dissipation_residual: f64,
    pub max_energy_violation: f64,
    pub max_chi_jump: f64,
    pub max_grad_sq: f64,
    pub elliptic_sweeps_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_continuation: Option<EpsilonSummary>,
}

/// Outcome handed to the CLI for exit-status mapping.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub passed: bool,
    pub violations: Vec<String>,
}

/// Resolve the output directory, honoring [`OUT_ROOT_ENV`].
pub fn resolve_out_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if !cfg.output.dir.is_absolute() => {
            PathBuf::from(root).join(&cfg.output.dir)
        }
        _ => cfg.output.dir.clone(),
    }
}

/// Reference solution implied by a (graph, initial datum) pairing, if
/// this run has one.
fn infer_oracle(cfg: &RunConfig, u0: &GridField) -> Option<(String, oracles::ExactSolution)> {
    match (cfg.graph.kind.as_str(), cfg.initial.profile.as_str()) {
        ("linear", "gaussian") if cfg.graph.slope == Some(1.0) => Some((
            "heat".into(),
            oracles::ExactSolution::Heat { sigma0: cfg.initial.sigma? },
        )),
        ("power", "barenblatt") if cfg.graph.exponent == cfg.initial.exponent => {
            // the profile's clock already ran to t0; shift handled below
            Some((
                "barenblatt".into(),
                oracles::ExactSolution::Barenblatt {
                    m: cfg.graph.exponent?,
                    mass: cfg.initial.mass.unwrap_or(1.0),
                },
            ))
        }
        ("heaviside", _) if linf_norm(u0) < cfg.graph.threshold? => Some((
            "stationary".into(),
            oracles::ExactSolution::Stationary { profile: u0.clone() },
        )),
        _ => None,
    }
}

/// The oracle's own time for solver time `t` ("barenblatt" profiles
/// start their clock at `t0`).
fn oracle_time(cfg: &RunConfig, name: &str, t: f64) -> f64 {
    if name == "barenblatt" {
        cfg.initial.t0.unwrap_or(0.0) + t
    } else {
        t
    }
}

fn snapshot_path(dir: &Path, sub: &str, idx: usize) -> PathBuf {
    dir.join(sub).join(format!("t_{idx:05}.csv"))
}

/// Execute a full run and write its artifact tree. `Ok` means the solver
/// finished; inspect [`RunOutcome::passed`] for the invariant verdict.
pub fn run(config_path: &Path, seed_override: Option<u64>) -> Result<RunOutcome> {
    let mut cfg = RunConfig::load(config_path)?;
    if let (Some(seed), Some(p)) = (seed_override, cfg.particles.as_mut()) {
        p.seed = seed;
    }
    let base_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out_dir = resolve_out_dir(&cfg);

    let graph = cfg.build_graph()?;
    let u0 = cfg.build_initial(&base_dir)?;
    if !(integrate(&u0) > 0.0) {
        bail!("initial datum has no mass");
    }
    let snapshot_idx = cfg.snapshot_indices();
    let dt = cfg.time.horizon / cfg.time.steps as f64;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.particles.as_ref().map(|p| p.seed).unwrap_or(0),
        resolved_snapshot_times: snapshot_idx.iter().map(|&j| j as f64 * dt).collect(),
        config: cfg.clone(),
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;

    let traj = match evolve(&graph, &u0, cfg.time.horizon, cfg.time.steps) {
        Ok(t) => t,
        Err(e) => {
            // leave a diagnostic trail before surfacing the failure
            io::write_json(
                &out_dir.join("summary.json"),
                &serde_json::json!({ "passed": false, "error": e.to_string() }),
            )?;
            return Err(e).context("time stepping failed");
        }
    };

    let report = invariant_report(&traj);
    let mut violations: Vec<String> = report
        .violations
        .iter()
        .map(|v| format!("t[{}]: {}", v.time_index, v.what))
        .collect();

    let rows: Vec<ReportRow> = report.rows.iter().map(ReportRow::from_snapshot).collect();
    io::write_jsonl(&out_dir.join("report.jsonl"), &rows)?;
    write_report_csv(&out_dir.join("report.csv"), &rows)?;

    for &j in &snapshot_idx {
        let chi = chi_field(traj.u(j), traj.w(j))?;
        io::write_snapshot_csv(&snapshot_path(&out_dir, "fields", j), traj.u(j), traj.w(j), &chi)?;
    }

    let oracle = infer_oracle(&cfg, &u0).map(|(name, sol)| {
        let rows: Vec<OracleErrorRow> = snapshot_idx
            .iter()
            .map(|&j| {
                let t = traj.time(j);
                let exact = sol.sample(u0.grid(), oracle_time(&cfg, &name, t).max(1e-300));
                OracleErrorRow {
                    t,
                    l1: l1_distance(traj.u(j), &exact),
                    linf: linf_norm(&diff(traj.u(j), &exact)),
                }
            })
            .collect();
        let final_l1 = rows.last().map(|r| r.l1).unwrap_or(f64::NAN);
        OracleSummary { name, rows, final_l1 }
    });

    let particle_summary = match &cfg.particles {
        Some(p) => Some(run_particles(&cfg, p, &graph, &u0, &traj, &out_dir, &snapshot_idx, &mut violations)?),
        None => None,
    };

    let eps_summary = match &cfg.epsilon_list {
        Some(eps) => {
            let (_, dists) =
                epsilon_continuation(&graph, &u0, cfg.time.horizon, cfg.time.steps, eps)?;
            Some(EpsilonSummary { eps: eps.clone(), sup_l1_distances: dists })
        }
        None => None,
    };

    let summary = build_summary(
        &traj,
        &report,
        violations,
        oracle,
        particle_summary,
        eps_summary,
    );
    io::write_json(&out_dir.join("summary.json"), &summary)?;

    Ok(RunOutcome { out_dir, passed: summary.passed, violations: summary.violations })
}

fn diff(a: &GridField, b: &GridField) -> GridField {
    GridField::new(
        a.grid(),
        a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect(),
    )
    .expect("same grid")
}

#[allow(clippy::too_many_arguments)]
fn run_particles(
    cfg: &RunConfig,
    p: &crate::config::ParticleConfig,
    graph: &degdiff_core::graph::MonotoneGraph,
    u0: &GridField,
    traj: &Trajectory,
    out_dir: &Path,
    snapshot_idx: &[usize],
    violations: &mut Vec<String>,
) -> Result<ParticleSummary> {
    let init = if p.iid_init { InitSampling::Iid } else { InitSampling::Stratified };
    let path: EnsemblePath = match p.mode.as_str() {
        "coupled" => particles::simulate_coupled_with(traj, p.count, p.substeps, p.seed, init)?,
        "selfconsistent" => {
            let bandwidth = match p.bandwidth {
                Some(b) => b,
                None => {
                    let qs: Vec<f64> =
                        (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
                    let sample = degdiff_core::field::sample_inverse_cdf(u0, &qs)?;
                    particles::default_bandwidth(&sample)
                }
            };
            particles::simulate_selfconsistent(
                graph,
                u0,
                cfg.time.horizon,
                cfg.time.steps,
                p.count,
                bandwidth,
                p.seed,
            )?
        }
        other => bail!("unknown particle mode {other:?}"),
    };

    for &j in snapshot_idx {
        let ens = path.at(j);
        io::write_ensemble_csv(
            &snapshot_path(out_dir, "ensemble", j),
            ens.time,
            &ens.positions,
            p.full_dump,
        )?;
    }

    let law = law_distance(path.terminal(), traj.final_u())?;
    let (drift, bound) = mean_drift(&path);
    if drift > bound {
        violations.push(format!("particle mean drift {drift:.3e} exceeds bound {bound:.3e}"));
    }
    let c = graph.growth_constant_on(linf_norm(traj.u(0)).max(f64::MIN_POSITIVE));
    let m4_ratio = fourth_moment_scaling(&path);
    let m4_bound = 4.0 * c * c;
    if m4_ratio > m4_bound {
        violations.push(format!(
            "fourth-moment ratio {m4_ratio:.3e} exceeds martingale bound {m4_bound:.3e}"
        ));
    }

    Ok(ParticleSummary {
        mode: p.mode.clone(),
        count: p.count,
        substeps: p.substeps,
        seed: p.seed,
        final_ks: law.ks,
        final_wasserstein1: law.wasserstein1,
        final_histogram_l1: law.histogram_l1,
        mean_drift: drift,
        mean_drift_bound: bound,
        fourth_moment_ratio: m4_ratio,
        fourth_moment_bound: m4_bound,
    })
}

fn build_summary(
    traj: &Trajectory,
    report: &DiagnosticsReport,
    violations: Vec<String>,
    oracle: Option<OracleSummary>,
    particles: Option<ParticleSummary>,
    epsilon_continuation: Option<EpsilonSummary>,
) -> Summary {
    let mass0 = report.rows[0].mass;
    let mass_drift_rel = report
        .rows
        .iter()
        .map(|r| (r.mass - mass0).abs())
        .fold(0.0, f64::max)
        / mass0.abs().max(f64::MIN_POSITIVE);
    let linf0 = report.rows[0].linf;
    let tv0 = report.rows[0].total_variation;
    Summary {
        passed: violations.is_empty(),
        violations,
        mass_initial: mass0,
        mass_drift_rel,
        min_u: report.rows.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min),
        linf_excess: report.rows.iter().map(|r| r.linf - linf0).fold(0.0, f64::max),
        tv_excess: report
            .rows
            .iter()
            .map(|r| r.total_variation - tv0)
            .fold(f64::NEG_INFINITY, f64::max),
        dissipation_residual: report.dissipation_residual,
        max_energy_violation: report.max_energy_violation,
        max_chi_jump: report.max_chi_jump,
        max_grad_sq: report.max_grad_sq,
        elliptic_sweeps_total: traj.steps(),
        oracle,
        particles,
        epsilon_continuation,
    }
}

fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "t,mass,linf,energy,total_variation,min_u,boundary_abs,chi_max,chi_max_jump,grad_sq"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.mass,
            r.linf,
            r.energy,
            r.total_variation,
            r.min_u,
            r.boundary_abs,
            r.chi_max.map(|v| v.to_string()).unwrap_or_default(),
            r.chi_max_jump.map(|v| v.to_string()).unwrap_or_default(),
            r.grad_sq
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRung {
    pub cells: usize,
    pub steps: usize,
    pub rows: Vec<OracleErrorRow>,
    pub final_l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareTable {
    pub oracle: String,
    pub rungs: Vec<CompareRung>,
    /// `log2(e_k / e_{k+1})` between consecutive final-time errors.
    pub observed_orders: Vec<f64>,
}

/// Run the solver against a named oracle over a doubling refinement
/// ladder starting at the config resolution.
pub fn compare(config_path: &Path, oracle_name: &str, rungs: usize) -> Result<CompareTable> {
    let cfg = RunConfig::load(config_path)?;
    let base_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    if cfg.initial.profile == "csv" {
        bail!("refinement ladders need an analytic initial profile, not csv");
    }
    if rungs == 0 {
        bail!("need at least one rung");
    }

    let mut table_rungs = Vec::with_capacity(rungs);
    for k in 0..rungs {
        let mut rung_cfg = cfg.clone();
        rung_cfg.grid.cells = cfg.grid.cells << k;
        rung_cfg.time.steps = cfg.time.steps << k;
        let graph = rung_cfg.build_graph()?;
        let u0 = rung_cfg.build_initial(&base_dir)?;
        let (name, sol) =
            infer_oracle(&rung_cfg, &u0).context("this config has no reference solution")?;
        if name != oracle_name {
            bail!("config implies oracle {name:?}, not {oracle_name:?}");
        }
        let traj = evolve(&graph, &u0, rung_cfg.time.horizon, rung_cfg.time.steps)?;
        let rows: Vec<OracleErrorRow> = rung_cfg
            .snapshot_indices()
            .iter()
            .map(|&j| {
                let t = traj.time(j);
                let exact = sol.sample(u0.grid(), oracle_time(&rung_cfg, &name, t).max(1e-300));
                OracleErrorRow {
                    t,
                    l1: l1_distance(traj.u(j), &exact),
                    linf: linf_norm(&diff(traj.u(j), &exact)),
                }
            })
            .collect();
        let final_l1 = rows.last().map(|r| r.l1).unwrap_or(f64::NAN);
        table_rungs.push(CompareRung {
            cells: rung_cfg.grid.cells,
            steps: rung_cfg.time.steps,
            rows,
            final_l1,
        });
    }
    let observed_orders = table_rungs
        .windows(2)
        .map(|p| (p[0].final_l1 / p[1].final_l1).log2())
        .collect();
    let table =
        CompareTable { oracle: oracle_name.to_string(), rungs: table_rungs, observed_orders };
    let out_dir = resolve_out_dir(&cfg);
    io::write_json(&out_dir.join(format!("compare_{oracle_name}.json")), &table)?;
    Ok(table)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseRow {
    pub file: String,
    pub t: f64,
    pub mass: f64,
    pub linf: f64,
    pub energy: f64,
    pub total_variation: f64,
    pub min_u: f64,
    pub chi_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub rows: Vec<DiagnoseRow>,
    pub violations: Vec<String>,
    pub passed: bool,
}

/// Re-examine a written artifact tree: recompute the snapshot statistics
/// from the field CSVs and check them against the stored manifest.
pub fn diagnose(artifact_dir: &Path) -> Result<DiagnoseReport> {
    let manifest: Manifest = serde_json::from_reader(
        std::fs::File::open(artifact_dir.join("manifest.json"))
            .with_context(|| format!("no manifest.json under {}", artifact_dir.display()))?,
    )?;
    let graph = manifest.config.build_graph()?;
    let grid = manifest.config.build_grid()?;
    let h = grid.spacing();

    let fields_dir = artifact_dir.join("fields");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&fields_dir)
        .with_context(|| format!("no fields/ under {}", artifact_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.len() != manifest.resolved_snapshot_times.len() {
        bail!(
            "manifest lists {} snapshots but fields/ holds {}",
            manifest.resolved_snapshot_times.len(),
            files.len()
        );
    }

    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let chi_bound = graph
        .growth_constant_on(1e6) // refined below from the data itself
        .sqrt();
    let mut first: Option<(f64, f64, f64)> = None; // mass, linf, tv
    let mut prev_energy = f64::INFINITY;
    for (k, file) in files.iter().enumerate() {
        let (xs, u, eta, chi) = io::read_snapshot_csv(file)?;
        if xs.len() != grid.len() {
            bail!("{}: {} rows for a {}-cell grid", file.display(), xs.len(), grid.len());
        }
        let uf = GridField::new(grid, u.clone())?;
        let ef = GridField::new(grid, eta.clone())?;
        let mass = integrate(&uf);
        let linf = linf_norm(&uf);
        let tv = total_variation(&uf);
        let min_u = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let energy = h * u.iter().map(|&v| graph.potential(v)).sum::<f64>();
        let chi_max = chi.iter().cloned().fold(0.0, f64::max);

        let (mass0, linf0, tv0) = *first.get_or_insert((mass, linf, tv));
        if (mass - mass0).abs() > 1e-12 * mass0.abs() {
            violations.push(format!("{}: mass drift {:.3e}", file.display(), mass - mass0));
        }
        if min_u < -1e-12 {
            violations.push(format!("{}: negative density {min_u:.3e}", file.display()));
        }
        if linf > linf0 + 1e-10 {
            violations.push(format!("{}: sup norm grew by {:.3e}", file.display(), linf - linf0));
        }
        if tv > tv0 + 1e-8 {
            violations
                .push(format!("{}: total variation grew by {:.3e}", file.display(), tv - tv0));
        }
        if energy > prev_energy + 1e-10 {
            violations.push(format!(
                "{}: energy grew by {:.3e}",
                file.display(),
                energy - prev_energy
            ));
        }
        prev_energy = energy;
        let local_bound = graph.growth_constant_on(linf.max(f64::MIN_POSITIVE)).sqrt();
        if chi_max > local_bound.min(chi_bound) + 1e-9 {
            violations.push(format!("{}: chi max {chi_max:.3e} above bound", file.display()));
        }
        // stored chi must be reproducible from (u, eta)
        match chi_field(&uf, &ef) {
            Ok(rebuilt) => {
                let worst = rebuilt
                    .values()
                    .iter()
                    .zip(&chi)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if worst > 1e-9 {
                    violations.push(format!(
                        "{}: stored chi deviates from (u, eta) by {worst:.3e}",
                        file.display()
                    ));
                }
            }
            Err(e) => violations.push(format!("{}: {e}", file.display())),
        }

        rows.push(DiagnoseRow {
            file: file.file_name().unwrap().to_string_lossy().into_owned(),
            t: manifest.resolved_snapshot_times[k],
            mass,
            linf,
            energy,
            total_variation: tv,
            min_u,
            chi_max,
        });
    }

    let report = DiagnoseReport { rows, passed: violations.is_empty(), violations };
    io::write_json(&artifact_dir.join("diagnose.json"), &report)?;
    Ok(report)
}
