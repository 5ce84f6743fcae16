//! The mass function M(t, v) = ∫_{|x|^d|B_1| < v} ρ_t and its Hamilton-Jacobi type equation
//!
//! M_t = κ² ∂_v Φ(∂_vM) + κ² 𝔈 ∂_vM,
//!
//! with a monotone scheme, a sampled viscosity-inequality checker, Dirac detection
//! and a Hölder exponent probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density_solver::{
    picard_drift_fixed_point, EdgeDrift, FluxForm, FrozenDriftStepper, SolverConfig, SolverResult,
    TimeScheme,
};
use crate::energetics;
use crate::error::SolverError;
use crate::model::{volumetric_drift, DensityState, MassProfile, Problem, VolumetricGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSolverConfig {
    pub dt: f64,
    /// Smallest |∂_vφ| accepted by the viscosity checker.
    pub slope_floor: f64,
    pub hold_boundary: bool,
    pub dirac_threshold: f64,
    /// Largest |dF/dt| for which a run counts as quasi-stationary.
    pub stationarity_tol: f64,
    pub scheme: TimeScheme,
    pub flux: FluxForm,
    pub cfl_safety: f64,
    pub k_reg: Option<f64>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for MassSolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            slope_floor: 1e-8,
            hold_boundary: true,
            dirac_threshold: 1e-3,
            stationarity_tol: 1e-7,
            scheme: TimeScheme::Explicit,
            flux: FluxForm::Upwind,
            cfl_safety: 0.9,
            k_reg: None,
            picard_tol: 1e-12,
            picard_max_iter: 50,
        }
    }
}

impl MassSolverConfig {
    pub fn validate(&self) -> SolverResult<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(SolverError::Model(crate::ModelError::InvalidParameter {
                name,
                reason: reason.to_string(),
            }))
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "time step must be positive");
        }
        if !(self.slope_floor > 0.0) {
            return bad("slope_floor", "must be positive");
        }
        if !(self.dirac_threshold >= 0.0) {
            return bad("dirac_threshold", "must be nonnegative");
        }
        self.density_config().validate()
    }

    /// The equivalent density-solver settings.
    pub fn density_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            cfl_safety: self.cfl_safety,
            picard_tol: self.picard_tol,
            picard_max_iter: self.picard_max_iter,
            k_reg: self.k_reg,
            scheme: self.scheme,
            flux: self.flux,
            track_dissipation: false,
            ..SolverConfig::default()
        }
    }
}

/// Slopes p_i = (M_{i+1} - M_i)/Δv, clamped at 0.
pub fn slopes(m: &MassProfile, grid: &VolumetricGrid) -> Vec<f64> {
    m.m.windows(2)
        .map(|w| ((w[1] - w[0]) / grid.dv()).max(0.0))
        .collect()
}

fn rearrange(m: &mut [f64], mass0: f64) {
    let mut run = 0.0f64;
    for x in m.iter_mut() {
        run = run.max(*x).min(mass0);
        *x = run;
    }
}

/// Mass profile stepper; the explicit branch updates M directly.
pub struct MassStepper<'a> {
    problem: &'a Problem,
    cfg: MassSolverConfig,
    inner: FrozenDriftStepper<'a>,
    /// κ(0)Υ'(0⁺), used only when the origin is released.
    origin_drift: f64,
}

impl<'a> MassStepper<'a> {
    pub fn new(problem: &'a Problem, cfg: &MassSolverConfig) -> SolverResult<Self> {
        cfg.validate()?;
        let g = &problem.grid;
        let origin_drift = g.kappa_edges()[0] * problem.potential.v.d1(0.0);
        let dcfg = cfg.density_config();
        Ok(Self {
            problem,
            cfg: cfg.clone(),
            inner: FrozenDriftStepper::new(g, problem.params.m, &dcfg)?,
            origin_drift,
        })
    }

    /// One step of the mass equation with the drift frozen.
    pub fn step_frozen(
        &self,
        m: &MassProfile,
        drift: &EdgeDrift,
        dt: f64,
    ) -> SolverResult<MassProfile> {
        let g = &self.problem.grid;
        let n = g.n_cells();
        if m.m.len() != n + 1 {
            return Err(crate::ModelError::GridMismatch {
                expected: n + 1,
                got: m.m.len(),
            }
            .into());
        }
        let mass0 = m.total();
        let p = slopes(m, g);
        let mut out = match self.cfg.scheme {
            TimeScheme::Explicit => {
                let limit = self.cfg.cfl_safety * self.inner.explicit_limit(&p, drift);
                if dt > limit {
                    return Err(SolverError::Cfl {
                        dt,
                        suggested: limit,
                    });
                }
                let flux = self.inner.fluxes(&p, drift);
                let mut next = m.m.clone();
                for e in 1..n {
                    next[e] = m.m[e] + dt * flux[e];
                }
                if !self.cfg.hold_boundary {
                    next[0] = m.m[0] + dt * self.origin_drift.max(0.0) * p[0];
                }
                next
            }
            TimeScheme::Implicit => {
                let rho = self
                    .inner
                    .step(&DensityState { t: m.t, rho: p }, drift, dt)?;
                let mut next = g.cumulative(&rho.rho);
                let shift = m.m[0];
                next.iter_mut().for_each(|x| *x += shift);
                next
            }
        };
        out[n] = mass0;
        if self.cfg.hold_boundary {
            out[0] = 0.0;
        }
        rearrange(&mut out, mass0);
        Ok(MassProfile {
            t: m.t + dt,
            m: out,
        })
    }

    /// Step with the drift iterated to a fixed point.
    pub fn step(&self, m: &MassProfile, dt: f64) -> SolverResult<(MassProfile, usize)> {
        let g = &self.problem.grid;
        if self.cfg.scheme == TimeScheme::Implicit && m.m[0] == 0.0 {
            let state = DensityState {
                t: m.t,
                rho: slopes(m, g),
            };
            let o = picard_drift_fixed_point(&state, self.problem, dt, &self.inner)?;
            let mut next = g.cumulative(&o.state.rho);
            let n = g.n_cells();
            next[n] = m.total();
            rearrange(&mut next, m.total());
            return Ok((
                MassProfile {
                    t: m.t + dt,
                    m: next,
                },
                o.iterations,
            ));
        }
        let mut prev = self.step_frozen(m, &self.inner.drift(&slopes(m, g), self.problem), dt)?;
        if self.problem.conv.drift_depends_on_mass_only() {
            return Ok((prev, 1));
        }
        let mut residual = f64::NAN;
        for it in 2..=self.cfg.picard_max_iter.max(2) {
            let drift = self.inner.drift(&slopes(&prev, g), self.problem);
            let next = self.step_frozen(m, &drift, dt)?;
            residual = next
                .m
                .iter()
                .zip(&prev.m)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * g.dv();
            prev = next;
            if residual < self.cfg.picard_tol {
                return Ok((prev, it));
            }
        }
        Err(SolverError::Picard {
            iterations: self.cfg.picard_max_iter,
            residual,
        })
    }
}

/// One monotone step of the mass equation with the drift given by 𝔈 at every edge.
pub fn step_mass(
    m: &MassProfile,
    drift: &[f64],
    dt: f64,
    cfg: &MassSolverConfig,
    problem: &Problem,
) -> SolverResult<MassProfile> {
    let edge = EdgeDrift::from_volumetric(drift, &problem.grid)?;
    MassStepper::new(problem, cfg)?.step_frozen(m, &edge, dt)
}

/// Recorded mass profiles with the free energy at each record.
#[derive(Debug, Clone, PartialEq)]
pub struct MassRun {
    pub times: Vec<f64>,
    pub profiles: Vec<MassProfile>,
    pub free_energy: Vec<f64>,
    pub accepted_steps: usize,
}

/// Integrates the mass equation on [0, T], recording every `record_every`.
pub fn solve_mass(
    m0: &MassProfile,
    problem: &Problem,
    cfg: &MassSolverConfig,
    record_every: f64,
) -> SolverResult<MassRun> {
    let stepper = MassStepper::new(problem, cfg)?;
    let g = &problem.grid;
    let horizon = problem.params.horizon;
    let eps = 1e-12 * horizon;
    let record_every = if record_every > 0.0 {
        record_every.min(horizon)
    } else {
        horizon
    };
    let energy = |m: &MassProfile| {
        energetics::free_energy(
            &DensityState {
                t: m.t,
                rho: slopes(m, g),
            },
            problem,
        )
        .f
    };
    let mut m = m0.clone();
    m.t = 0.0;
    let mut run = MassRun {
        times: vec![0.0],
        profiles: vec![m.clone()],
        free_energy: vec![energy(&m)],
        accepted_steps: 0,
    };
    let mut next_record = record_every;
    let dcfg = cfg.density_config();
    while m.t < horizon - eps {
        let target = next_record.min(horizon);
        let mut dt = cfg.dt.min(target - m.t);
        if cfg.scheme == TimeScheme::Explicit {
            let p = slopes(&m, g);
            let drift = stepper.inner.drift(&p, problem);
            dt = dt.min(0.95 * cfg.cfl_safety * stepper.inner.explicit_limit(&p, &drift));
        }
        let mut retries = 0;
        let next = loop {
            match stepper.step(&m, dt) {
                Ok((next, _)) => break next,
                Err(err) => {
                    if retries == dcfg.max_retries {
                        return Err(SolverError::RetriesExhausted {
                            step: run.accepted_steps,
                            t: m.t,
                            retries,
                            source: Box::new(err),
                        });
                    }
                    retries += 1;
                    dt = match err {
                        SolverError::Cfl { suggested, .. } if suggested < dt => 0.95 * suggested,
                        _ => 0.5 * dt,
                    };
                }
            }
        };
        run.accepted_steps += 1;
        m = next;
        if (m.t - target).abs() <= eps {
            m.t = target;
            if target >= horizon - eps || (target - next_record).abs() <= eps {
                run.times.push(m.t);
                run.free_energy.push(energy(&m));
                run.profiles.push(m.clone());
            }
            if (target - next_record).abs() <= eps {
                next_record += record_every;
            }
        }
    }
    Ok(run)
}

/// Worst residuals of the viscosity inequalities over sampled space-time points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityReport {
    pub samples: usize,
    pub skipped_degenerate: usize,
    /// Samples where the discrete stencil was not nondecreasing in v.
    pub non_monotone: usize,
    /// Smallest supersolution residual (negative = violation).
    pub worst_super: f64,
    /// Smallest subsolution residual (negative = violation).
    pub worst_sub: f64,
    /// max(0, -worst_super, -worst_sub).
    pub worst_violation: f64,
    pub flagged: bool,
}

/// Samples interior points (t, v), touches M with the local quadratic fit and evaluates
///
/// φ_t/Φ'(φ_v) - κ²φ_vv - κ²φ_v 𝔈/Φ'(φ_v)
///
/// with 𝔈 computed from the discrete solution. A supersolution needs it ≥ 0, a subsolution ≤ 0.
pub fn check_viscosity_inequalities(
    profiles: &[MassProfile],
    problem: &Problem,
    sample_budget: usize,
    slope_floor: f64,
    seed: u64,
) -> SolverResult<ViscosityReport> {
    let g = &problem.grid;
    let n = g.n_cells();
    let dv = g.dv();
    let m = problem.params.m;
    let mut report = ViscosityReport {
        samples: 0,
        skipped_degenerate: 0,
        non_monotone: profiles.iter().filter(|p| !p.is_nondecreasing()).count(),
        worst_super: f64::INFINITY,
        worst_sub: f64::INFINITY,
        worst_violation: 0.0,
        flagged: false,
    };
    if profiles.len() < 3 {
        return Err(SolverError::Mismatch(
            "need at least three recorded profiles".into(),
        ));
    }
    let t0 = profiles[1].t;
    let t1 = profiles[profiles.len() - 2].t;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drift_cache: Vec<Option<Vec<f64>>> = vec![None; profiles.len()];
    for _ in 0..sample_budget {
        let tf: f64 = rng.gen();
        let vf: f64 = rng.gen_range(0.05..0.95);
        let t = t0 + tf * (t1 - t0);
        let j = (1..profiles.len() - 1)
            .min_by(|&a, &b| {
                (profiles[a].t - t)
                    .abs()
                    .total_cmp(&(profiles[b].t - t).abs())
            })
            .expect("interior record");
        let e = ((vf * n as f64).round() as usize).clamp(1, n - 1);
        let (prev, cur, next) = (&profiles[j - 1].m, &profiles[j].m, &profiles[j + 1].m);
        if cur[e + 1] < cur[e] || cur[e] < cur[e - 1] {
            report.non_monotone += 1;
            report.flagged = true;
            continue;
        }
        let phi_v = (cur[e + 1] - cur[e - 1]) / (2.0 * dv);
        if phi_v.abs() < slope_floor {
            report.skipped_degenerate += 1;
            continue;
        }
        let phi_vv = (cur[e + 1] - 2.0 * cur[e] + cur[e - 1]) / (dv * dv);
        let phi_t = (next[e] - prev[e]) / (profiles[j + 1].t - profiles[j - 1].t);
        if drift_cache[j].is_none() {
            let rho = profiles[j].to_density(g);
            drift_cache[j] = Some(volumetric_drift(&rho, problem)?);
        }
        let drift = drift_cache[j].as_ref().expect("filled")[e];
        let k2 = g.kappa_edges()[e].powi(2);
        let dphi = m * phi_v.powf(m - 1.0);
        let r = phi_t / dphi - k2 * phi_vv - k2 * phi_v * drift / dphi;
        report.samples += 1;
        report.worst_super = report.worst_super.min(r);
        report.worst_sub = report.worst_sub.min(-r);
    }
    report.worst_violation = 0.0f64.max(-report.worst_super).max(-report.worst_sub);
    if report.non_monotone > 0 {
        report.flagged = true;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConcentrationStatus {
    Conclusive,
    /// The free energy is still moving faster than the stationarity tolerance.
    NotStationary {
        energy_slope: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub status: ConcentrationStatus,
    pub alpha: f64,
    /// First recorded time after which the extrapolated α stays above the threshold.
    pub t_detect: Option<f64>,
    /// Absolutely continuous part per cell; cell 0 carries M(v₁) - α.
    pub profile_ac: Vec<f64>,
    pub energy_slope: f64,
}

impl ConcentrationReport {
    pub fn is_conclusive(&self) -> bool {
        self.status == ConcentrationStatus::Conclusive
    }
}

/// lim_{v→0⁺} M(v) by quadratic extrapolation from the three smallest positive edges.
pub fn extrapolated_origin_mass(m: &MassProfile) -> f64 {
    let (m1, m2, m3) = (m.m[1], m.m[2], m.m[3]);
    (3.0 * m1 - 3.0 * m2 + m3).clamp(0.0, m1)
}

pub fn detect_concentration(
    run: &MassRun,
    grid: &VolumetricGrid,
    cfg: &MassSolverConfig,
) -> ConcentrationReport {
    let k = run.times.len();
    let energy_slope = if k >= 2 {
        ((run.free_energy[k - 1] - run.free_energy[k - 2]) / (run.times[k - 1] - run.times[k - 2]))
            .abs()
    } else {
        f64::INFINITY
    };
    let last = run.profiles.last().expect("nonempty run");
    let alpha = extrapolated_origin_mass(last);
    let mut profile_ac = last.to_density(grid);
    profile_ac[0] = (last.m[1] - alpha) / grid.dv();
    let series: Vec<f64> = run.profiles.iter().map(extrapolated_origin_mass).collect();
    let t_detect = (0..k)
        .find(|&i| series[i..].iter().all(|&a| a > cfg.dirac_threshold))
        .map(|i| run.times[i]);
    let status = if energy_slope <= cfg.stationarity_tol {
        ConcentrationStatus::Conclusive
    } else {
        ConcentrationStatus::NotStationary { energy_slope }
    };
    ConcentrationReport {
        status,
        alpha,
        t_detect,
        profile_ac,
        energy_slope,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HolderFit {
    Fitted {
        exponent: f64,
        residual: f64,
        pairs: usize,
    },
    /// M does not vary on the sampled region.
    Indeterminate,
    InsufficientSamples {
        pairs: usize,
    },
}

/// Least-squares slope of log|ΔM| against log(|Δv| + C|Δt|^{1/(m+1)}) over pairs in [T1, ∞) × [ε, R_v].
pub fn holder_regularity_probe(
    run: &MassRun,
    problem: &Problem,
    eps: f64,
    t1: f64,
    pairs: usize,
    seed: u64,
) -> HolderFit {
    let g = &problem.grid;
    let n = g.n_cells();
    let m = problem.params.m;
    let c = problem.params.mass0.powf((m - 1.0) / (m + 1.0));
    let recs: Vec<usize> = (0..run.times.len())
        .filter(|&i| run.times[i] >= t1)
        .collect();
    let first_edge = g.v_edges().iter().position(|&v| v >= eps).unwrap_or(n);
    if recs.is_empty() || first_edge >= n {
        return HolderFit::InsufficientSamples { pairs: 0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = problem.params.mass0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut flat = 0usize;
    for k in 0..pairs {
        let ia = recs[rng.gen_range(0..recs.len())];
        let ea = rng.gen_range(first_edge..=n);
        // alternate spatial and temporal pairs
        let (ib, eb) = if k % 2 == 0 {
            (ia, rng.gen_range(first_edge..=n))
        } else {
            (recs[rng.gen_range(0..recs.len())], ea)
        };
        let dv = (g.v_edges()[ea] - g.v_edges()[eb]).abs();
        let dt = (run.times[ia] - run.times[ib]).abs();
        let x = dv + c * dt.powf(1.0 / (m + 1.0));
        if x == 0.0 {
            continue;
        }
        let dm = (run.profiles[ia].m[ea] - run.profiles[ib].m[eb]).abs();
        if dm <= 1e-13 * scale {
            flat += 1;
            continue;
        }
        xs.push(x.ln());
        ys.push(dm.ln());
    }
    if xs.len() < 8 {
        return if flat > 0 && xs.is_empty() {
            HolderFit::Indeterminate
        } else {
            HolderFit::InsufficientSamples { pairs: xs.len() }
        };
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return HolderFit::InsufficientSamples { pairs: xs.len() };
    }
    let slope = sxy / sxx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    HolderFit::Fitted {
        exponent: slope,
        residual,
        pairs: xs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, PotentialSpec, Radial};
    use approx::assert_relative_eq;

    fn problem(d: usize, pot: PotentialSpec, n: usize, horizon: f64) -> Problem {
        Problem::new(ModelParams::new(0.5, d, 1.0, 1.0, horizon).unwrap(), pot, n).unwrap()
    }

    fn linear(p: &Problem) -> MassProfile {
        DensityState::new(0.0, p.uniform_density())
            .unwrap()
            .to_mass_profile(&p.grid)
    }

    #[test]
    fn linear_profile_is_steady() {
        let p = problem(3, PotentialSpec::free(), 32, 1.0);
        let m = linear(&p);
        let zero = vec![0.0; 33];
        for scheme in [TimeScheme::Explicit, TimeScheme::Implicit] {
            let cfg = MassSolverConfig {
                scheme,
                ..Default::default()
            };
            let next = step_mass(&m, &zero, 1e-6, &cfg, &p).unwrap();
            for (a, b) in next.m.iter().zip(&m.m) {
                assert_relative_eq!(*a, *b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn endpoints_and_monotonicity_are_kept() {
        let pot = PotentialSpec::new(Radial::Quadratic { a: 1.0 }, Radial::Quadratic { a: 0.5 });
        let p = problem(2, pot, 48, 0.05);
        let rho: Vec<f64> = p
            .grid
            .r_centers()
            .iter()
            .map(|r| if *r < 0.5 { 2.0 } else { 0.1 })
            .collect();
        let s = p.grid.integrate(&rho);
        let m0 = DensityState::new(0.0, rho.iter().map(|x| x / s).collect())
            .unwrap()
            .to_mass_profile(&p.grid);
        for scheme in [TimeScheme::Explicit, TimeScheme::Implicit] {
            let cfg = MassSolverConfig {
                scheme,
                dt: 1e-3,
                ..Default::default()
            };
            let run = solve_mass(&m0, &p, &cfg, 0.01).unwrap();
            for prof in &run.profiles {
                assert!(prof.is_nondecreasing());
                assert_eq!(prof.m[0], 0.0);
                assert_eq!(prof.total(), m0.total());
            }
        }
    }

    #[test]
    fn explicit_mass_and_density_schemes_agree() {
        // the mass scheme is the integrated density scheme
        let pot = PotentialSpec::new(Radial::Quadratic { a: 1.0 }, Radial::Zero);
        let p = problem(1, pot, 40, 0.02);
        let rho: Vec<f64> = p.grid.r_centers().iter().map(|r| 1.0 + r).collect();
        let s = DensityState::new(0.0, rho).unwrap();
        let drift = EdgeDrift::from_density(&s.rho, &p);
        let cfg = MassSolverConfig::default();
        let ms = MassStepper::new(&p, &cfg).unwrap();
        let ds = FrozenDriftStepper::new(&p.grid, 0.5, &cfg.density_config()).unwrap();
        let dt = 1e-6;
        let a = ms
            .step_frozen(&s.to_mass_profile(&p.grid), &drift, dt)
            .unwrap();
        let b = ds.step(&s, &drift, dt).unwrap().to_mass_profile(&p.grid);
        for (x, y) in a.m.iter().zip(&b.m) {
            assert_relative_eq!(*x, *y, epsilon = 1e-13);
        }
    }

    #[test]
    fn large_explicit_step_is_rejected() {
        let p = problem(1, PotentialSpec::free(), 64, 1.0);
        let m = linear(&p);
        let err = step_mass(&m, &vec![0.0; 65], 1.0, &MassSolverConfig::default(), &p).unwrap_err();
        assert!(matches!(err, SolverError::Cfl { .. }));
    }

    #[test]
    fn linear_steady_state_has_zero_residual() {
        let p = problem(1, PotentialSpec::free(), 32, 1.0);
        let profiles: Vec<MassProfile> = (0..5)
            .map(|i| MassProfile {
                t: i as f64 * 0.1,
                m: linear(&p).m,
            })
            .collect();
        let rep = check_viscosity_inequalities(&profiles, &p, 200, 1e-8, 7).unwrap();
        assert_eq!(rep.samples, 200);
        assert!(rep.worst_violation < 1e-10, "{rep:?}");
        assert!(!rep.flagged);
    }

    #[test]
    fn corrupted_profile_is_flagged() {
        let p = problem(1, PotentialSpec::free(), 32, 1.0);
        let mut profiles: Vec<MassProfile> = (0..5)
            .map(|i| MassProfile {
                t: i as f64 * 0.1,
                m: linear(&p).m,
            })
            .collect();
        profiles[2].m[16] -= 0.2;
        let rep = check_viscosity_inequalities(&profiles, &p, 400, 1e-8, 7).unwrap();
        assert!(rep.flagged);
        assert!(rep.non_monotone > 0);
    }

    #[test]
    fn uniform_state_has_no_dirac() {
        let p = problem(3, PotentialSpec::free(), 32, 0.1);
        let run = solve_mass(
            &linear(&p),
            &p,
            &MassSolverConfig {
                scheme: TimeScheme::Implicit,
                dt: 0.01,
                ..Default::default()
            },
            0.05,
        )
        .unwrap();
        let rep = detect_concentration(&run, &p.grid, &MassSolverConfig::default());
        assert!(rep.is_conclusive());
        assert_eq!(rep.alpha, 0.0);
        assert!(rep.t_detect.is_none());
        assert_relative_eq!(
            p.grid.integrate(&rep.profile_ac) + rep.alpha,
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn constant_region_is_indeterminate() {
        let p = problem(1, PotentialSpec::free(), 32, 1.0);
        let flat = MassProfile {
            t: 0.0,
            m: vec![0.0; 33],
        };
        let run = MassRun {
            times: vec![0.0, 1.0],
            profiles: vec![flat.clone(), MassProfile { t: 1.0, ..flat }],
            free_energy: vec![0.0; 2],
            accepted_steps: 1,
        };
        assert_eq!(
            holder_regularity_probe(&run, &p, 0.1, 0.0, 100, 1),
            HolderFit::Indeterminate
        );
    }

    #[test]
    fn lipschitz_profile_has_exponent_one() {
        let p = problem(1, PotentialSpec::free(), 64, 1.0);
        let m = linear(&p);
        let run = MassRun {
            times: vec![0.0, 1.0],
            profiles: vec![m.clone(), MassProfile { t: 1.0, ..m }],
            free_energy: vec![0.0; 2],
            accepted_steps: 1,
        };
        match holder_regularity_probe(&run, &p, 0.1, 0.0, 400, 3) {
            HolderFit::Fitted { exponent, .. } => assert!(exponent >= 0.99, "{exponent}"),
            other => panic!("{other:?}"),
        }
    }
}
