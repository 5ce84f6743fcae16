use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::Utc;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigErrors, ExperimentConfig, Mode};
use super::hypotheses::check_hypotheses;
use super::initial::initial_density;
use super::output::{fmt_f64, sha256_hex, DiagnosticOutcome, RunManifest, RunWriter, Severity};
use crate::density_solver::{solve_density, FluxForm, TimeScheme, Trajectory};
use crate::energetics::{moment_bound_check, w11_equicontinuity};
use crate::mass_solver::{
    check_viscosity_inequalities, detect_concentration, solve_mass, ConcentrationStatus, MassRun,
};
use crate::model::{DensityState, MassProfile, Problem};
use crate::stationary_solver::{
    flux_sign_probe, quadratic_w_reduction, self_consistency_residual, solve_stationary,
};
use crate::{ModelError, SolverError, StationaryError};

/// Environment variable naming the directory under which runs are written.
pub const OUTPUT_ROOT_VAR: &str = "FDAGG_OUTPUT_ROOT";

fn step_suffix(step: &Option<usize>) -> String {
    step.map_or_else(String::new, |s| format!(", step {s}"))
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("run {run_id}: hypothesis {name} fails and blocks the run: {detail}")]
    Blocked {
        run_id: String,
        name: String,
        detail: String,
    },
    #[error("run {run_id}: initial condition: {reason}")]
    Initial { run_id: String, reason: String },
    #[error("run {run_id}: {source}")]
    Model { run_id: String, source: ModelError },
    #[error("run {run_id}{}: {source}", step_suffix(.step))]
    Solver {
        run_id: String,
        step: Option<usize>,
        source: SolverError,
    },
    #[error("run {run_id}: {source}")]
    Stationary {
        run_id: String,
        source: StationaryError,
    },
    #[error("run {run_id}: {path}: {source}")]
    Io {
        run_id: String,
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub fn run_id(&self) -> Option<&str> {
        match self {
            ExperimentError::Config(_) => None,
            ExperimentError::Blocked { run_id, .. }
            | ExperimentError::Initial { run_id, .. }
            | ExperimentError::Model { run_id, .. }
            | ExperimentError::Solver { run_id, .. }
            | ExperimentError::Stationary { run_id, .. }
            | ExperimentError::Io { run_id, .. } => Some(run_id),
        }
    }
}

pub type ExperimentResult<T> = Result<T, ExperimentError>;

/// Hash of the canonical config text.
pub fn config_hash(config: &ExperimentConfig) -> String {
    sha256_hex(config.canonical_text().as_bytes())
}

/// First 12 hex digits of the config hash; identical configs share a run id.
pub fn run_id(config: &ExperimentConfig) -> String {
    config_hash(config)[..12].to_string()
}

/// The output root from the environment, or `fdagg-output` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("fdagg-output"), PathBuf::from)
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    id: String,
}

impl Ctx<'_> {
    fn solver(&self, source: SolverError) -> ExperimentError {
        let step = match &source {
            SolverError::RetriesExhausted { step, .. } => Some(*step),
            _ => None,
        };
        ExperimentError::Solver {
            run_id: self.id.clone(),
            step,
            source,
        }
    }

    fn io(&self, path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io {
            run_id: self.id.clone(),
            path: path.clone(),
            source,
        }
    }

    fn problem(&self, n_cells: usize) -> ExperimentResult<Problem> {
        let c = self.config;
        Problem::new(c.params, c.potential.clone(), n_cells).map_err(|source| {
            ExperimentError::Model {
                run_id: self.id.clone(),
                source,
            }
        })
    }

    fn initial(&self, problem: &Problem) -> ExperimentResult<DensityState> {
        let rho =
            initial_density(self.config, problem).map_err(|reason| ExperimentError::Initial {
                run_id: self.id.clone(),
                reason,
            })?;
        DensityState::new(0.0, rho).map_err(|source| ExperimentError::Model {
            run_id: self.id.clone(),
            source,
        })
    }
}

/// Runs `config` under the output root from the environment.
pub fn run(config: &ExperimentConfig) -> ExperimentResult<RunManifest> {
    run_in(config, &output_root())
}

/// Runs `config`, writing into `root/<output.dir>/<run id>/`.
pub fn run_in(config: &ExperimentConfig, root: &Path) -> ExperimentResult<RunManifest> {
    let dir = root.join(&config.output.dir).join(run_id(config));
    run_at(config, &dir)
}

fn run_at(config: &ExperimentConfig, dir: &Path) -> ExperimentResult<RunManifest> {
    let started = Utc::now().to_rfc3339();
    let ctx = Ctx {
        config,
        id: run_id(config),
    };
    let hypotheses = check_hypotheses(config);
    if let Some((name, v)) = hypotheses.blocking().first() {
        return Err(ExperimentError::Blocked {
            run_id: ctx.id.clone(),
            name: name.to_string(),
            detail: v.detail.clone(),
        });
    }
    let mut w = RunWriter::create(dir).map_err(ctx.io(dir))?;
    let mut diagnostics = Vec::new();
    let mut summary = BTreeMap::new();
    let mut children = Vec::new();
    w.text("config.txt", &config.canonical_text())
        .map_err(ctx.io(dir))?;
    w.json("hypotheses.json", &hypotheses)
        .map_err(ctx.io(dir))?;
    match config.mode {
        Mode::Density => {
            let problem = ctx.problem(config.n_cells)?;
            density_mode(&ctx, &problem, &mut w, &mut diagnostics)?;
        }
        Mode::Mass => {
            let problem = ctx.problem(config.n_cells)?;
            mass_mode(&ctx, &problem, &mut w, &mut diagnostics, &mut summary)?;
        }
        Mode::Both => {
            let problem = ctx.problem(config.n_cells)?;
            let traj = density_mode(&ctx, &problem, &mut w, &mut diagnostics)?;
            let run = mass_mode(&ctx, &problem, &mut w, &mut diagnostics, &mut summary)?;
            let gap = sup_gap(
                &traj.last().to_mass_profile(&problem.grid),
                run.profiles.last().expect("nonempty run"),
            );
            diagnostics.push(DiagnosticOutcome::info(
                "solver_gap",
                gap,
                "sup |M_density - M_mass| at the final time",
            ));
            summary.insert("solver_gap".into(), gap);
        }
        Mode::Stationary => {
            let problem = ctx.problem(config.n_cells)?;
            stationary_mode(&ctx, &problem, &mut w, &mut diagnostics, &mut summary)?;
        }
        Mode::Convergence => {
            let table = study(&ctx, config.levels)?;
            write_table(&ctx, &table, &mut w)?;
            table_diagnostics(&table, &mut diagnostics, &mut summary);
        }
        Mode::Sweep => {
            sweep_mode(&ctx, &mut w, &mut diagnostics, &mut children)?;
        }
    }
    let manifest = RunManifest {
        run_id: ctx.id.clone(),
        config_hash: config_hash(config),
        mode: config.mode.as_str().to_string(),
        started,
        finished: Utc::now().to_rfc3339(),
        directory: dir.to_path_buf(),
        files: w.files().to_vec(),
        diagnostics,
        hypotheses,
        summary,
        children,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(ctx.io(&path))?;
    Ok(manifest)
}

fn mass_tolerance(scheme: TimeScheme, newton_tol: f64) -> f64 {
    match scheme {
        TimeScheme::Explicit => 1e-12,
        TimeScheme::Implicit => newton_tol.max(1e-12),
    }
}

/// The entropy flux dissipates the discrete free energy; the upwind flux only does so up to O(h).
fn energy_severity(flux: FluxForm) -> Severity {
    match flux {
        FluxForm::Entropy => Severity::Hard,
        FluxForm::Upwind => Severity::Soft,
    }
}

/// Worst relative increase F_{j+1} - F_j - slack|F_j|, over |F_j|.
fn energy_increase(f: &[f64], slack: f64) -> f64 {
    f.windows(2)
        .map(|w| (w[1] - w[0] - slack * w[0].abs()) / w[0].abs().max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn sup_gap(a: &MassProfile, b: &MassProfile) -> f64 {
    a.m.iter()
        .zip(&b.m)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn density_mode(
    ctx: &Ctx,
    problem: &Problem,
    w: &mut RunWriter,
    diagnostics: &mut Vec<DiagnosticOutcome>,
) -> ExperimentResult<Trajectory> {
    let c = ctx.config;
    let rho0 = ctx.initial(problem)?;
    let traj = solve_density(&rho0, problem, &c.solver, c.output.record_every)
        .map_err(|e| ctx.solver(e))?;
    let g = &problem.grid;
    let dir = w.dir().to_path_buf();
    let rows = traj.states.iter().flat_map(|s| {
        g.v_centers()
            .iter()
            .zip(&s.rho)
            .map(move |(&v, &r)| vec![s.t, v, r])
    });
    w.csv("density.csv", &["t", "v_center", "rho"], rows)
        .map_err(ctx.io(&dir))?;
    let rows = traj.diagnostics.iter().map(|d| {
        let e = &d.energy;
        vec![
            e.t,
            e.e_diff,
            e.e_conf,
            e.e_int,
            e.f,
            e.d,
            d.moments.m2,
            d.moments.mp,
        ]
    });
    w.csv(
        "energy.csv",
        &["t", "E_diff", "E_conf", "E_int", "F", "D", "m2", "mp"],
        rows,
    )
    .map_err(ctx.io(&dir))?;
    #[derive(Serialize)]
    struct Meta<'a> {
        run_id: &'a str,
        params: &'a crate::model::ModelParams,
        n_cells: usize,
        solver: &'a crate::density_solver::SolverConfig,
        v: &'a str,
        w: &'a str,
        initial: String,
        stats: &'a crate::density_solver::RunStats,
    }
    let meta = Meta {
        run_id: &ctx.id,
        params: &c.params,
        n_cells: c.n_cells,
        solver: &c.solver,
        v: &c.v_source,
        w: &c.w_source,
        initial: c.initial.to_string(),
        stats: &traj.stats,
    };
    w.json("density_meta.json", &meta).map_err(ctx.io(&dir))?;

    let tol = mass_tolerance(c.solver.scheme, c.solver.newton_tol);
    diagnostics.push(DiagnosticOutcome::at_most(
        "density.mass_conservation",
        Severity::Hard,
        traj.stats.max_step_mass_drift,
        tol,
        "largest relative mass change over one accepted step",
    ));
    let min_rho = traj
        .states
        .iter()
        .flat_map(|s| s.rho.iter().copied())
        .fold(f64::INFINITY, f64::min);
    diagnostics.push(DiagnosticOutcome::at_least(
        "density.nonnegative",
        Severity::Hard,
        min_rho,
        0.0,
        "smallest recorded cell value",
    ));
    let f: Vec<f64> = traj.diagnostics.iter().map(|d| d.energy.f).collect();
    diagnostics.push(DiagnosticOutcome::at_most(
        "density.energy_monotone",
        energy_severity(c.solver.flux),
        energy_increase(&f, c.diagnostics.energy_slack),
        0.0,
        format!(
            "worst relative free-energy increase between records, slack {}",
            c.diagnostics.energy_slack
        ),
    ));
    if c.solver.track_dissipation {
        let last = traj.diagnostics.last().expect("nonempty");
        let drop = f[0] - last.energy.f;
        let residual = (drop - last.dissipation_integral).abs() / drop.abs().max(f64::MIN_POSITIVE);
        diagnostics.push(DiagnosticOutcome::at_most(
            "density.dissipation_identity",
            Severity::Soft,
            residual,
            0.05,
            "|F(0) - F(T) - ∫D| / |F(0) - F(T)|",
        ));
    }
    let moments = moment_bound_check(&traj, problem);
    diagnostics.push(DiagnosticOutcome::at_least(
        "density.moment_bounds",
        Severity::Soft,
        moments.m2_margin.min(moments.mp_margin),
        0.0,
        "smallest margin of the m2 and mp growth bounds",
    ));
    if traj.len() >= 3 {
        let (i, j) = (traj.len() / 2, traj.len() - 1);
        let eq = w11_equicontinuity(&traj, problem, i, j);
        diagnostics.push(DiagnosticOutcome::at_most(
            "density.w11_equicontinuity",
            Severity::Soft,
            eq.surrogate,
            eq.bound,
            format!("∫|M_t - M_s| dv on [{}, {}]", traj.times[i], traj.times[j]),
        ));
    }
    Ok(traj)
}

fn mass_mode(
    ctx: &Ctx,
    problem: &Problem,
    w: &mut RunWriter,
    diagnostics: &mut Vec<DiagnosticOutcome>,
    summary: &mut BTreeMap<String, f64>,
) -> ExperimentResult<MassRun> {
    let c = ctx.config;
    let g = &problem.grid;
    let m0 = ctx.initial(problem)?.to_mass_profile(g);
    let run = solve_mass(&m0, problem, &c.mass_solver, c.output.record_every)
        .map_err(|e| ctx.solver(e))?;
    let dir = w.dir().to_path_buf();
    let rows = run.profiles.iter().flat_map(|p| {
        g.v_edges()
            .iter()
            .zip(&p.m)
            .map(move |(&v, &m)| vec![p.t, v, m])
    });
    w.csv("mass.csv", &["t", "v_edge", "M"], rows)
        .map_err(ctx.io(&dir))?;
    w.csv(
        "mass_energy.csv",
        &["t", "F"],
        run.times
            .iter()
            .zip(&run.free_energy)
            .map(|(&t, &f)| vec![t, f]),
    )
    .map_err(ctx.io(&dir))?;
    let report = detect_concentration(&run, g, &c.mass_solver);
    let status = match report.status {
        ConcentrationStatus::Conclusive => "conclusive".to_string(),
        ConcentrationStatus::NotStationary { .. } => "not-stationary".to_string(),
    };
    w.record(
        "concentration.txt",
        &[
            ("status", status),
            ("alpha", fmt_f64(report.alpha)),
            (
                "t_detect",
                report.t_detect.map_or_else(|| "none".to_string(), fmt_f64),
            ),
            ("energy_slope", fmt_f64(report.energy_slope)),
        ],
    )
    .map_err(ctx.io(&dir))?;
    let rows = g
        .v_centers()
        .iter()
        .zip(&report.profile_ac)
        .map(|(&v, &r)| vec![v, r]);
    w.csv("concentration_profile.csv", &["v_center", "rho_ac"], rows)
        .map_err(ctx.io(&dir))?;
    summary.insert("alpha".into(), report.alpha);

    let mass0 = c.params.mass0;
    let drift = run
        .profiles
        .iter()
        .map(|p| (p.total() - mass0).abs() / mass0)
        .fold(0.0, f64::max);
    let tol = mass_tolerance(
        c.mass_solver.scheme,
        c.mass_solver.density_config().newton_tol,
    ) * (run.accepted_steps.max(1) as f64);
    diagnostics.push(DiagnosticOutcome::at_most(
        "mass.mass_conservation",
        Severity::Hard,
        drift,
        tol,
        "largest |M(R_v) - mass0| / mass0 over records, against the per-step tolerance times the step count",
    ));
    let non_monotone = run
        .profiles
        .iter()
        .filter(|p| !p.is_nondecreasing())
        .count();
    diagnostics.push(DiagnosticOutcome::at_most(
        "mass.monotone_profiles",
        Severity::Hard,
        non_monotone as f64,
        0.0,
        "recorded profiles that decrease somewhere",
    ));
    diagnostics.push(DiagnosticOutcome::at_most(
        "mass.energy_monotone",
        energy_severity(c.mass_solver.flux),
        energy_increase(&run.free_energy, c.diagnostics.energy_slack),
        0.0,
        "worst relative free-energy increase between records",
    ));
    if run.profiles.len() >= 3 && c.diagnostics.viscosity_samples > 0 {
        let v = check_viscosity_inequalities(
            &run.profiles,
            problem,
            c.diagnostics.viscosity_samples,
            c.mass_solver.slope_floor,
            c.diagnostics.seed,
        )
        .map_err(|e| ctx.solver(e))?;
        diagnostics.push(DiagnosticOutcome::at_most(
            "mass.viscosity_monotone_stencil",
            Severity::Soft,
            v.non_monotone as f64,
            0.0,
            "samples where the discrete stencil was not monotone",
        ));
        diagnostics.push(DiagnosticOutcome::info(
            "mass.viscosity_worst_violation",
            v.worst_violation,
            format!("{} samples, {} degenerate", v.samples, v.skipped_degenerate),
        ));
    }
    diagnostics.push(DiagnosticOutcome::info(
        "mass.concentration_alpha",
        report.alpha,
        if report.is_conclusive() {
            "conclusive"
        } else {
            "free energy still moving"
        },
    ));
    Ok(run)
}

fn stationary_mode(
    ctx: &Ctx,
    problem: &Problem,
    w: &mut RunWriter,
    diagnostics: &mut Vec<DiagnosticOutcome>,
    summary: &mut BTreeMap<String, f64>,
) -> ExperimentResult<()> {
    let c = ctx.config;
    let state =
        solve_stationary(problem, &c.stationary).map_err(|source| ExperimentError::Stationary {
            run_id: ctx.id.clone(),
            source,
        })?;
    let g = &problem.grid;
    let dir = w.dir().to_path_buf();
    w.record(
        "stationary.txt",
        &[
            ("h", fmt_f64(state.h)),
            ("alpha", fmt_f64(state.alpha)),
            ("boundary_slope", fmt_f64(state.boundary_slope)),
            ("residual", fmt_f64(state.residual)),
        ],
    )
    .map_err(ctx.io(&dir))?;
    let rows = (0..g.n_cells()).map(|i| vec![g.r_centers()[i], g.v_centers()[i], state.rho_hat[i]]);
    w.csv(
        "stationary_profile.csv",
        &["r_center", "v_center", "rho_hat"],
        rows,
    )
    .map_err(ctx.io(&dir))?;
    summary.insert("h".into(), state.h);
    summary.insert("alpha".into(), state.alpha);

    let residual = self_consistency_residual(&state, problem);
    diagnostics.push(DiagnosticOutcome::at_most(
        "stationary.self_consistency",
        Severity::Hard,
        residual,
        (1e3 * c.stationary.tol).max(1e-8),
        "relative sup-norm gap between ρ̂ and the profile map applied to ρ̂",
    ));
    let mass0 = c.params.mass0;
    let mass_err = (state.alpha + g.integrate(&state.rho_hat) - mass0).abs() / mass0;
    diagnostics.push(DiagnosticOutcome::at_most(
        "stationary.mass_constraint",
        Severity::Hard,
        mass_err,
        1e-8,
        "|α + ∫ρ̂ - mass0| / mass0",
    ));
    let sign = flux_sign_probe(&state, problem);
    diagnostics.push(DiagnosticOutcome::info(
        "stationary.min_drift",
        sign.min_drift,
        format!(
            "at r = {}, negative on {:.3} of the edges",
            sign.r_min, sign.negative_fraction
        ),
    ));
    if let Ok(red) = quadratic_w_reduction(problem) {
        diagnostics.push(DiagnosticOutcome::info(
            "stationary.reduction_alpha_gap",
            (red.alpha - state.alpha).abs(),
            "|α(reduction) - α(solver)|",
        ));
    }
    Ok(())
}

/// Errors of one grid level in a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub n_cells: usize,
    pub h: f64,
    pub mass_drift: f64,
    pub energy_residual: f64,
    pub solver_gap: f64,
    pub stationary_error: f64,
}

pub const QUANTITIES: [&str; 4] = [
    "mass_drift",
    "energy_residual",
    "solver_gap",
    "stationary_error",
];

impl LevelRow {
    pub fn quantity(&self, name: &str) -> f64 {
        match name {
            "mass_drift" => self.mass_drift,
            "energy_residual" => self.energy_residual,
            "solver_gap" => self.solver_gap,
            "stationary_error" => self.stationary_error,
            _ => f64::NAN,
        }
    }
}

/// Rows per level and observed orders log(e_l/e_{l+1})/log(h_l/h_{l+1}) per quantity.
/// Orders are NaN where the errors sit at rounding level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<LevelRow>,
    pub orders: BTreeMap<String, Vec<f64>>,
}

impl ConvergenceTable {
    /// Smallest finite observed order of a quantity, if any.
    pub fn min_order(&self, name: &str) -> Option<f64> {
        self.orders
            .get(name)?
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .reduce(f64::min)
    }
}

/// Below this, an error is treated as rounding and gets no order.
const ROUNDING: f64 = 1e-12;

pub fn observed_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    (1..h.len())
        .map(|i| {
            if e[i - 1] < ROUNDING || e[i] < ROUNDING {
                f64::NAN
            } else {
                (e[i - 1] / e[i]).ln() / (h[i - 1] / h[i]).ln()
            }
        })
        .collect()
}

/// Runs `levels` grids, doubling `n_cells` and halving both time steps at each level,
/// with density and mass solves plus the stationary solve on each.
pub fn convergence_study(
    config: &ExperimentConfig,
    levels: usize,
) -> ExperimentResult<ConvergenceTable> {
    study(
        &Ctx {
            config,
            id: run_id(config),
        },
        levels,
    )
}

fn study(ctx: &Ctx, levels: usize) -> ExperimentResult<ConvergenceTable> {
    let c = ctx.config;
    let levels = levels.max(3);
    let rows: Vec<LevelRow> = (0..levels)
        .into_par_iter()
        .map(|l| level_row(ctx, c.n_cells << l, 0.5f64.powi(l as i32)))
        .collect::<ExperimentResult<_>>()?;
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let orders = QUANTITIES
        .iter()
        .map(|q| {
            (
                q.to_string(),
                observed_orders(&h, &rows.iter().map(|r| r.quantity(q)).collect::<Vec<_>>()),
            )
        })
        .collect();
    Ok(ConvergenceTable { rows, orders })
}

fn level_row(ctx: &Ctx, n_cells: usize, dt_scale: f64) -> ExperimentResult<LevelRow> {
    let c = ctx.config;
    let problem = ctx.problem(n_cells)?;
    let g = &problem.grid;
    let rho0 = ctx.initial(&problem)?;
    let solver = crate::density_solver::SolverConfig {
        track_dissipation: true,
        dt: c.solver.dt * dt_scale,
        ..c.solver.clone()
    };
    let mass_solver = crate::mass_solver::MassSolverConfig {
        dt: c.mass_solver.dt * dt_scale,
        ..c.mass_solver.clone()
    };
    let record = c.params.horizon;
    let traj = solve_density(&rho0, &problem, &solver, record).map_err(|e| ctx.solver(e))?;
    let run = solve_mass(&rho0.to_mass_profile(g), &problem, &mass_solver, record)
        .map_err(|e| ctx.solver(e))?;
    let state = solve_stationary(&problem, &c.stationary).map_err(|source| {
        ExperimentError::Stationary {
            run_id: ctx.id.clone(),
            source,
        }
    })?;
    let first = &traj.diagnostics[0];
    let last = traj.diagnostics.last().expect("nonempty");
    let drop = first.energy.f - last.energy.f;
    let rho_t = &traj.last().rho;
    Ok(LevelRow {
        n_cells,
        h: g.dv(),
        mass_drift: traj.stats.max_step_mass_drift,
        energy_residual: (drop - last.dissipation_integral).abs()
            / drop.abs().max(f64::MIN_POSITIVE),
        solver_gap: sup_gap(
            &traj.last().to_mass_profile(g),
            run.profiles.last().expect("nonempty run"),
        ),
        stationary_error: rho_t
            .iter()
            .zip(&state.rho_hat)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * g.dv(),
    })
}

fn write_table(ctx: &Ctx, table: &ConvergenceTable, w: &mut RunWriter) -> ExperimentResult<()> {
    let dir = w.dir().to_path_buf();
    let rows = table.rows.iter().map(|r| {
        vec![
            r.n_cells as f64,
            r.h,
            r.mass_drift,
            r.energy_residual,
            r.solver_gap,
            r.stationary_error,
        ]
    });
    let mut header = vec!["n_cells", "h"];
    header.extend(QUANTITIES);
    w.csv("convergence.csv", &header, rows)
        .map_err(ctx.io(&dir))?;
    let mut text = String::from("quantity,n_coarse,n_fine,order\n");
    for q in QUANTITIES {
        for (i, o) in table.orders[q].iter().enumerate() {
            text.push_str(&format!(
                "{q},{},{},{}\n",
                table.rows[i].n_cells,
                table.rows[i + 1].n_cells,
                fmt_f64(*o)
            ));
        }
    }
    w.text("orders.csv", &text).map_err(ctx.io(&dir))
}

fn table_diagnostics(
    table: &ConvergenceTable,
    diagnostics: &mut Vec<DiagnosticOutcome>,
    summary: &mut BTreeMap<String, f64>,
) {
    let worst_drift = table.rows.iter().map(|r| r.mass_drift).fold(0.0, f64::max);
    diagnostics.push(DiagnosticOutcome::at_most(
        "convergence.mass_conservation",
        Severity::Hard,
        worst_drift,
        1e-10,
        "largest per-step relative mass change over all levels",
    ));
    for q in QUANTITIES.iter().skip(1) {
        let order = table.min_order(q).unwrap_or(f64::NAN);
        summary.insert(format!("order.{q}"), order);
        if order.is_finite() {
            diagnostics.push(DiagnosticOutcome::at_least(
                &format!("convergence.order.{q}"),
                Severity::Soft,
                order,
                0.9,
                "smallest observed order between consecutive levels",
            ));
        } else {
            diagnostics.push(DiagnosticOutcome::info(
                &format!("convergence.order.{q}"),
                order,
                "errors at rounding level",
            ));
        }
    }
}

fn sweep_points(config: &ExperimentConfig) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for axis in &config.sweep {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn sweep_mode(
    ctx: &Ctx,
    w: &mut RunWriter,
    diagnostics: &mut Vec<DiagnosticOutcome>,
    children: &mut Vec<String>,
) -> ExperimentResult<()> {
    let c = ctx.config;
    let points = sweep_points(c);
    let mode = c.sweep_mode.as_str();
    let dir = w.dir().to_path_buf();
    // each point gets its own config, without the sweep lists
    let mut configs = Vec::with_capacity(points.len());
    for p in &points {
        let mut over: Vec<(&str, &str)> = p.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        over.push(("mode", mode));
        let mut point = c.with_overrides(&over)?;
        point.sweep.clear();
        configs.push(point);
    }
    let results: Vec<ExperimentResult<RunManifest>> = configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| run_at(cfg, &dir.join(format!("point_{i:03}"))))
        .collect();
    let mut rows = String::from("index,run_id,passed");
    for axis in &c.sweep {
        rows.push(',');
        rows.push_str(&axis.key);
    }
    rows.push('\n');
    for (i, (res, p)) in results.into_iter().zip(&points).enumerate() {
        let name = format!("point_{i:03}");
        let (id, passed) = match res {
            Ok(m) => {
                for f in &m.files {
                    w.adopt(&format!("{name}/{}", f.path))
                        .map_err(ctx.io(&dir))?;
                }
                w.adopt(&format!("{name}/manifest.json"))
                    .map_err(ctx.io(&dir))?;
                (m.run_id.clone(), m.passed())
            }
            Err(e) => {
                diagnostics.push(DiagnosticOutcome::at_least(
                    &format!("sweep.{name}.error"),
                    Severity::Hard,
                    0.0,
                    1.0,
                    e.to_string(),
                ));
                (e.run_id().unwrap_or("").to_string(), false)
            }
        };
        diagnostics.push(DiagnosticOutcome::at_least(
            &format!("sweep.{name}"),
            Severity::Hard,
            if passed { 1.0 } else { 0.0 },
            1.0,
            p.iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" "),
        ));
        rows.push_str(&format!("{i},{id},{passed}"));
        for (_, v) in p {
            rows.push_str(&format!(",\"{v}\""));
        }
        rows.push('\n');
        children.push(name);
    }
    w.text("sweep.csv", &rows).map_err(ctx.io(&dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_of_exact_power_laws() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        for o in observed_orders(&h, &e) {
            assert!((o - 2.0).abs() < 1e-12);
        }
        assert!(observed_orders(&h, &[1e-16, 1e-16, 1e-16])
            .iter()
            .all(|o| o.is_nan()));
    }

    #[test]
    fn energy_increase_uses_relative_slack() {
        assert!(energy_increase(&[-1.0, -1.1, -1.2], 0.0) < 0.0);
        assert!(energy_increase(&[-1.0, -0.9], 0.0) > 0.0);
        assert!(energy_increase(&[-1.0, -1.0 + 1e-10], 1e-8) < 0.0);
    }
}
