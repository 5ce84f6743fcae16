//! Time integration of the density equation on the ball with no-flux boundary.
//!
//! In the volume variable the equation reads ρ_t = ∂_v(κ²∂_vΦ(ρ) + aρ) with
//! a = κ ∂_rΥ, Υ = V + W∗ρ. The scheme is a conservative finite volume update
//! with centered differences of Φ(ρ) and upwinded transport.

use serde::{Deserialize, Serialize};

use crate::energetics::{self, EnergyRecord, MomentRecord, ENTROPY_FLOOR};
use crate::error::SolverError;
use crate::model::{DensityState, Diffusion, Problem, Radial, VolumetricGrid};

pub type SolverResult<T> = Result<T, SolverError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeScheme {
    Explicit,
    /// Backward Euler solved by damped Newton.
    Implicit,
}

/// Numerical flux at interior edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FluxForm {
    /// Centered Φ(ρ) differences plus ρ upwinded by the sign of the drift.
    #[default]
    Upwind,
    /// ρ upwinded by the sign of the jump of ξ = m/(m-1)ρ^{m-1} + Υ; stationary
    /// exactly when ξ is constant, which resolves singular equilibria.
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub cfl_safety: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub rho_floor: f64,
    pub k_reg: Option<f64>,
    pub scheme: TimeScheme,
    pub flux: FluxForm,
    /// Newton stops when the L¹ residual falls below newton_tol · mass0.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// dt halvings allowed for one step before giving up.
    pub max_retries: usize,
    /// Accumulate ∫D dt at every step (costs one convolution per step).
    pub track_dissipation: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            cfl_safety: 0.9,
            picard_tol: 1e-12,
            picard_max_iter: 50,
            rho_floor: 1e-12,
            k_reg: None,
            scheme: TimeScheme::Implicit,
            flux: FluxForm::Upwind,
            newton_tol: 1e-13,
            newton_max_iter: 60,
            max_retries: 12,
            track_dissipation: true,
        }
    }
}

impl SolverConfig {
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
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety", "must lie in (0, 1]");
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol", "must be positive");
        }
        if self.picard_max_iter == 0 {
            return bad("picard_max_iter", "must be at least 1");
        }
        if !(self.rho_floor >= 0.0) {
            return bad("rho_floor", "must be nonnegative");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol", "must be positive");
        }
        if self.flux == FluxForm::Entropy {
            if self.k_reg.is_some() {
                return bad("flux", "the entropy flux needs the exact diffusion");
            }
            if !(self.rho_floor > 0.0) {
                return bad("rho_floor", "the entropy flux needs a positive floor");
            }
        }
        Ok(())
    }

    pub fn diffusion(&self, m: f64) -> SolverResult<Diffusion> {
        Ok(Diffusion::with_regularization(m, self.k_reg)?)
    }
}

/// Transport coefficients a_e = κ_e² 𝔈_e frozen for one step; zero at both boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDrift {
    a: Vec<f64>,
}

impl EdgeDrift {
    pub fn zero(n_cells: usize) -> Self {
        Self {
            a: vec![0.0; n_cells + 1],
        }
    }

    /// From 𝔈 sampled at every edge.
    pub fn from_volumetric(e: &[f64], grid: &VolumetricGrid) -> SolverResult<Self> {
        let n = grid.n_cells();
        if e.len() != n + 1 {
            return Err(crate::ModelError::GridMismatch {
                expected: n + 1,
                got: e.len(),
            }
            .into());
        }
        let k = grid.kappa_edges();
        let a = (0..=n)
            .map(|i| {
                if i == 0 || i == n {
                    0.0
                } else {
                    k[i] * k[i] * e[i]
                }
            })
            .collect();
        Ok(Self { a })
    }

    /// Drift generated by the density `rho` through V + W∗ρ.
    pub fn from_density(rho: &[f64], problem: &Problem) -> Self {
        Self {
            a: problem.transport_coefficients(rho),
        }
    }

    /// a_e = c_e (Υ_e - Υ_{e-1}) from cell-center values, the innermost cell taking Υ(0).
    /// Paired with the entropy flux this makes the discrete Euler-Lagrange profile exactly stationary.
    pub fn balanced_from_density(rho: &[f64], problem: &Problem) -> Self {
        let g = &problem.grid;
        let n = g.n_cells();
        let mut ups = problem.upsilon_centers(rho);
        ups[0] = problem.potential.v.value(0.0) + problem.conv.value_at_origin(rho, g);
        let c = diffusion_coefficients(g);
        let a = (0..=n)
            .map(|e| {
                if e == 0 || e == n {
                    0.0
                } else {
                    c[e] * (ups[e] - ups[e - 1])
                }
            })
            .collect();
        Self { a }
    }

    /// Drift of a fixed radial potential, ignoring interaction.
    pub fn from_potential(v: &Radial, grid: &VolumetricGrid) -> Self {
        let n = grid.n_cells();
        let k = grid.kappa_edges();
        let a = (0..=n)
            .map(|i| {
                if i == 0 || i == n {
                    0.0
                } else {
                    k[i] * v.d1(grid.r_edges()[i])
                }
            })
            .collect();
        Self { a }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }
}

/// Largest explicit step keeping every cell update a convex combination.
pub fn cfl_limit(
    rho: &[f64],
    drift: &EdgeDrift,
    grid: &VolumetricGrid,
    diffusion: &Diffusion,
) -> f64 {
    let dv = grid.dv();
    let c = diffusion_coefficients(grid);
    let a = &drift.a;
    let mut limit = f64::INFINITY;
    for (i, &r) in rho.iter().enumerate() {
        let rate = if r > 0.0 {
            (c[i] + c[i + 1]) * diffusion.chord_slope(r)
        } else {
            0.0
        } + neg(a[i + 1])
            + pos(a[i]);
        if rate > 0.0 {
            limit = limit.min(dv / rate);
        }
    }
    limit
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

/// c_e = κ_e²/Δv at interior edges, zero at the boundary.
fn diffusion_coefficients(grid: &VolumetricGrid) -> Vec<f64> {
    let n = grid.n_cells();
    let k = grid.kappa_edges();
    (0..=n)
        .map(|e| {
            if e == 0 || e == n {
                0.0
            } else {
                k[e] * k[e] / grid.dv()
            }
        })
        .collect()
}

fn edge_fluxes(phi: &[f64], rho: &[f64], c: &[f64], a: &[f64]) -> Vec<f64> {
    let n = rho.len();
    let mut f = vec![0.0; n + 1];
    for e in 1..n {
        f[e] = c[e] * (phi[e] - phi[e - 1]) + pos(a[e]) * rho[e] - neg(a[e]) * rho[e - 1];
    }
    f
}

/// g(ρ) = m/(m-1) ρ^{m-1}, with ρ floored.
fn enthalpy(rho: f64, m: f64, floor: f64) -> f64 {
    -m / (1.0 - m) * rho.max(floor).powf(m - 1.0)
}

/// w_e = c_e (g_e - g_{e-1}) + a_e at interior edges.
fn entropy_jumps(g: &[f64], c: &[f64], a: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut w = vec![0.0; n + 1];
    for e in 1..n {
        w[e] = c[e] * (g[e] - g[e - 1]) + a[e];
    }
    w
}

pub(crate) fn entropy_fluxes(rho: &[f64], m: f64, floor: f64, c: &[f64], a: &[f64]) -> Vec<f64> {
    entropy_fluxes_with_size(rho, m, floor, c, a).0
}

/// Fluxes together with the size of the terms cancelling inside each one.
fn entropy_fluxes_with_size(
    rho: &[f64],
    m: f64,
    floor: f64,
    c: &[f64],
    a: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let g: Vec<f64> = rho.iter().map(|&r| enthalpy(r, m, floor)).collect();
    let w = entropy_jumps(&g, c, a);
    let n = rho.len();
    let mut f = vec![0.0; n + 1];
    let mut size = vec![0.0; n + 1];
    for e in 1..n {
        f[e] = pos(w[e]) * rho[e] - neg(w[e]) * rho[e - 1];
        size[e] = (c[e] * (g[e].abs() + g[e - 1].abs()) + a[e].abs()) * rho[e].max(rho[e - 1]);
    }
    (f, size)
}

/// Largest explicit step for the entropy flux: each update is nondecreasing in its own cell.
fn entropy_cfl_limit(rho: &[f64], m: f64, floor: f64, c: &[f64], a: &[f64], dv: f64) -> f64 {
    let n = rho.len();
    let g: Vec<f64> = rho.iter().map(|&r| enthalpy(r, m, floor)).collect();
    let w = entropy_jumps(&g, c, a);
    let mut limit = f64::INFINITY;
    for i in 0..n {
        let r = rho[i].max(floor);
        let dphi = m * r.powf(m - 1.0);
        let mut rate = 0.0;
        if i + 1 < n {
            rate += if w[i + 1] > 0.0 {
                c[i + 1] * dphi * rho[i + 1] / r
            } else {
                c[i + 1] * dphi + neg(w[i + 1])
            };
        }
        if i > 0 {
            rate += if w[i] > 0.0 {
                c[i] * dphi + pos(w[i])
            } else {
                c[i] * dphi * rho[i - 1] / r
            };
        }
        if rate > 0.0 {
            limit = limit.min(dv / rate);
        }
    }
    limit
}

/// Solves a tridiagonal system in place; `lower[0]` and `upper[n-1]` are ignored.
pub(crate) fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        cp[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * cp[i - 1];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

/// One step of the frozen-drift solver used by the fixed point and the drivers.
#[derive(Debug, Clone)]
pub struct FrozenDriftStepper<'a> {
    grid: &'a VolumetricGrid,
    diffusion: Diffusion,
    cfg: SolverConfig,
    c: Vec<f64>,
}

impl<'a> FrozenDriftStepper<'a> {
    pub fn new(grid: &'a VolumetricGrid, m: f64, cfg: &SolverConfig) -> SolverResult<Self> {
        cfg.validate()?;
        Ok(Self {
            grid,
            diffusion: cfg.diffusion(m)?,
            cfg: cfg.clone(),
            c: diffusion_coefficients(grid),
        })
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    /// Drift generated by `rho` in the form the configured flux expects.
    pub fn drift(&self, rho: &[f64], problem: &Problem) -> EdgeDrift {
        match self.cfg.flux {
            FluxForm::Upwind => EdgeDrift::from_density(rho, problem),
            FluxForm::Entropy => EdgeDrift::balanced_from_density(rho, problem),
        }
    }

    /// Largest explicit step the current flux accepts at `rho`.
    pub fn explicit_limit(&self, rho: &[f64], drift: &EdgeDrift) -> f64 {
        match self.cfg.flux {
            FluxForm::Upwind => cfl_limit(rho, drift, self.grid, &self.diffusion),
            FluxForm::Entropy => entropy_cfl_limit(
                rho,
                self.diffusion.m(),
                self.cfg.rho_floor,
                &self.c,
                &drift.a,
                self.grid.dv(),
            ),
        }
    }

    /// Interior fluxes of the configured form.
    pub(crate) fn fluxes(&self, rho: &[f64], drift: &EdgeDrift) -> Vec<f64> {
        match self.cfg.flux {
            FluxForm::Upwind => {
                let phi: Vec<f64> = rho.iter().map(|&r| self.diffusion.phi(r)).collect();
                edge_fluxes(&phi, rho, &self.c, &drift.a)
            }
            FluxForm::Entropy => entropy_fluxes(
                rho,
                self.diffusion.m(),
                self.cfg.rho_floor,
                &self.c,
                &drift.a,
            ),
        }
    }

    pub fn step(
        &self,
        state: &DensityState,
        drift: &EdgeDrift,
        dt: f64,
    ) -> SolverResult<DensityState> {
        let n = self.grid.n_cells();
        if state.rho.len() != n {
            return Err(crate::ModelError::GridMismatch {
                expected: n,
                got: state.rho.len(),
            }
            .into());
        }
        let rho = match self.cfg.scheme {
            TimeScheme::Explicit => self.explicit(&state.rho, drift, dt)?,
            TimeScheme::Implicit => match self.cfg.flux {
                FluxForm::Upwind => self.implicit(&state.rho, drift, dt)?,
                FluxForm::Entropy => self.implicit_entropy(&state.rho, drift, dt)?,
            },
        };
        Ok(DensityState {
            t: state.t + dt,
            rho,
        })
    }

    fn explicit(&self, rho: &[f64], drift: &EdgeDrift, dt: f64) -> SolverResult<Vec<f64>> {
        let limit = self.cfg.cfl_safety * self.explicit_limit(rho, drift);
        if dt > limit {
            return Err(SolverError::Cfl {
                dt,
                suggested: limit,
            });
        }
        let f = self.fluxes(rho, drift);
        let lam = dt / self.grid.dv();
        Ok(rho
            .iter()
            .enumerate()
            .map(|(i, r)| (r + lam * (f[i + 1] - f[i])).max(0.0))
            .collect())
    }

    /// Backward Euler in the unknown u = Φ(ρ); the Jacobian is a tridiagonal M-matrix.
    fn implicit(&self, rho_old: &[f64], drift: &EdgeDrift, dt: f64) -> SolverResult<Vec<f64>> {
        let n = rho_old.len();
        let lam = dt / self.grid.dv();
        let a = &drift.a;
        let c = &self.c;
        let dif = &self.diffusion;
        let mass = self.grid.integrate(rho_old).max(f64::MIN_POSITIVE);
        let tol = self.cfg.newton_tol * mass;

        // residual, its L¹ norm, and the size of the terms it cancels (for the rounding floor)
        let residual = |u: &[f64]| -> (Vec<f64>, Vec<f64>, f64, f64) {
            let rho: Vec<f64> = u.iter().map(|&x| dif.phi_inverse(x)).collect();
            let f = edge_fluxes(u, &rho, c, a);
            let r: Vec<f64> = (0..n)
                .map(|i| rho[i] - rho_old[i] - lam * (f[i + 1] - f[i]))
                .collect();
            let dv = self.grid.dv();
            let norm = r.iter().map(|x| x.abs()).sum::<f64>() * dv;
            let size = |e: usize| {
                if e == 0 || e == n {
                    0.0
                } else {
                    c[e] * (u[e] + u[e - 1]) + a[e].abs() * rho[e].max(rho[e - 1])
                }
            };
            let scale = (0..n)
                .map(|i| rho[i] + rho_old[i] + lam * (size(i + 1) + size(i)))
                .sum::<f64>()
                * dv;
            (rho, r, norm, scale)
        };

        let mut u: Vec<f64> = rho_old.iter().map(|&r| dif.phi(r)).collect();
        let (mut rho, mut r, mut norm, mut scale) = residual(&u);
        let mut it = 0;
        while norm > tol.max(64.0 * f64::EPSILON * scale) {
            if it == self.cfg.newton_max_iter {
                return Err(SolverError::Newton {
                    iterations: it,
                    residual: norm / mass,
                });
            }
            it += 1;
            let s: Vec<f64> = u.iter().map(|&x| dif.inverse_slope(x)).collect();
            let mut diag = vec![0.0; n];
            let mut lower = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 0..n {
                diag[i] = s[i] + lam * (c[i + 1] + c[i] + (neg(a[i + 1]) + pos(a[i])) * s[i]);
                if i + 1 < n {
                    upper[i] = -lam * (c[i + 1] + pos(a[i + 1]) * s[i + 1]);
                }
                if i > 0 {
                    lower[i] = -lam * (c[i] + neg(a[i]) * s[i - 1]);
                }
            }
            let mut delta: Vec<f64> = r.iter().map(|x| -x).collect();
            solve_tridiagonal(&lower, &diag, &upper, &mut delta);
            let mut theta = 1.0;
            loop {
                let trial: Vec<f64> = u
                    .iter()
                    .zip(&delta)
                    .map(|(x, d)| (x + theta * d).max(0.0))
                    .collect();
                let (t_rho, t_r, t_norm, t_scale) = residual(&trial);
                if t_norm < (1.0 - 1e-4 * theta) * norm || theta < 1e-3 {
                    if !(t_norm < norm) && theta < 1e-3 {
                        return Err(SolverError::Newton {
                            iterations: it,
                            residual: norm / mass,
                        });
                    }
                    u = trial;
                    rho = t_rho;
                    r = t_r;
                    norm = t_norm;
                    scale = t_scale;
                    break;
                }
                theta *= 0.5;
            }
        }
        // conservative write-back: telescoping fluxes make the mass exact
        let f = edge_fluxes(&u, &rho, c, a);
        let cons: Vec<f64> = (0..n)
            .map(|i| rho_old[i] + lam * (f[i + 1] - f[i]))
            .collect();
        if cons.iter().all(|&x| x >= 0.0) {
            Ok(cons)
        } else {
            Ok(rho)
        }
    }

    /// Backward Euler for the entropy flux in the unknown z = ln ρ.
    fn implicit_entropy(
        &self,
        rho_old: &[f64],
        drift: &EdgeDrift,
        dt: f64,
    ) -> SolverResult<Vec<f64>> {
        let n = rho_old.len();
        let dv = self.grid.dv();
        let lam = dt / dv;
        let a = &drift.a;
        let c = &self.c;
        let m = self.diffusion.m();
        let floor = self.cfg.rho_floor;
        let mass = self.grid.integrate(rho_old).max(f64::MIN_POSITIVE);
        let tol = self.cfg.newton_tol * mass;

        let residual = |z: &[f64]| -> (Vec<f64>, Vec<f64>, f64, f64) {
            let rho: Vec<f64> = z.iter().map(|x| x.exp()).collect();
            let (f, size) = entropy_fluxes_with_size(&rho, m, floor, c, a);
            let r: Vec<f64> = (0..n)
                .map(|i| rho[i] - rho_old[i] - lam * (f[i + 1] - f[i]))
                .collect();
            let norm = r.iter().map(|x| x.abs()).sum::<f64>() * dv;
            let scale = (0..n)
                .map(|i| rho[i] + rho_old[i] + lam * (size[i + 1] + size[i]))
                .sum::<f64>()
                * dv;
            (rho, r, norm, scale)
        };

        let mut z: Vec<f64> = rho_old.iter().map(|&r| r.max(floor).ln()).collect();
        let (mut rho, mut r, mut norm, mut scale) = residual(&z);
        let mut it = 0;
        while norm > tol.max(64.0 * f64::EPSILON * scale) {
            if it == self.cfg.newton_max_iter {
                return Err(SolverError::Newton {
                    iterations: it,
                    residual: norm / mass,
                });
            }
            it += 1;
            let g: Vec<f64> = rho.iter().map(|&x| enthalpy(x, m, floor)).collect();
            let w = entropy_jumps(&g, c, a);
            // dg/dz = m ρ^{m-1}, zero below the floor where g is frozen
            let p: Vec<f64> = rho
                .iter()
                .map(|&x| if x > floor { m * x.powf(m - 1.0) } else { 0.0 })
                .collect();
            // ∂F_e/∂z_e ≥ 0 and ∂F_e/∂z_{e-1} ≤ 0
            let mut dr = vec![0.0; n + 1];
            let mut dl = vec![0.0; n + 1];
            for e in 1..n {
                if w[e] > 0.0 {
                    dr[e] = c[e] * p[e] * rho[e] + w[e] * rho[e];
                    dl[e] = -c[e] * p[e - 1] * rho[e];
                } else {
                    dr[e] = c[e] * p[e] * rho[e - 1];
                    dl[e] = -c[e] * p[e - 1] * rho[e - 1] + w[e] * rho[e - 1];
                }
            }
            let mut diag = vec![0.0; n];
            let mut lower = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 0..n {
                diag[i] = rho[i] - lam * (dl[i + 1] - dr[i]);
                if i + 1 < n {
                    upper[i] = -lam * dr[i + 1];
                }
                if i > 0 {
                    lower[i] = lam * dl[i];
                }
            }
            let mut delta: Vec<f64> = r.iter().map(|x| -x).collect();
            solve_tridiagonal(&lower, &diag, &upper, &mut delta);
            // cap the change of ln ρ so a single step cannot overflow
            let big = delta.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
            let mut theta = if big > 2.0 { 2.0 / big } else { 1.0 };
            loop {
                let trial: Vec<f64> = z.iter().zip(&delta).map(|(x, d)| x + theta * d).collect();
                let (t_rho, t_r, t_norm, t_scale) = residual(&trial);
                if t_norm < (1.0 - 1e-4 * theta) * norm || theta < 1e-4 {
                    if !(t_norm < norm) && theta < 1e-4 {
                        return Err(SolverError::Newton {
                            iterations: it,
                            residual: norm / mass,
                        });
                    }
                    z = trial;
                    rho = t_rho;
                    r = t_r;
                    norm = t_norm;
                    scale = t_scale;
                    break;
                }
                theta *= 0.5;
            }
        }
        let f = entropy_fluxes(&rho, m, floor, c, a);
        let cons: Vec<f64> = (0..n)
            .map(|i| rho_old[i] + lam * (f[i + 1] - f[i]))
            .collect();
        if cons.iter().all(|&x| x >= 0.0) {
            Ok(cons)
        } else {
            Ok(rho)
        }
    }
}

/// One conservative step of ρ_t = ΔΦ(ρ) + ∇·(ρE) with E frozen.
pub fn step_frozen_drift(
    state: &DensityState,
    drift: &EdgeDrift,
    dt: f64,
    cfg: &SolverConfig,
    grid: &VolumetricGrid,
    m: f64,
) -> SolverResult<DensityState> {
    FrozenDriftStepper::new(grid, m, cfg)?.step(state, drift, dt)
}

/// Converged step of the drift fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub state: DensityState,
    pub iterations: usize,
    /// ‖ρ^{(j+1)} - ρ^{(j)}‖_{L¹} for every iterate after the first.
    pub residuals: Vec<f64>,
}

/// Iterates ρ^{(j+1)} = step(ρⁿ, 𝔈[ρ^{(j)}]) from ρ^{(0)} = ρⁿ.
pub fn picard_drift_fixed_point(
    state: &DensityState,
    problem: &Problem,
    dt: f64,
    stepper: &FrozenDriftStepper<'_>,
) -> SolverResult<PicardOutcome> {
    let cfg = &stepper.cfg;
    let drift = stepper.drift(&state.rho, problem);
    let mut prev = stepper.step(state, &drift, dt)?;
    if problem.conv.drift_depends_on_mass_only() {
        return Ok(PicardOutcome {
            state: prev,
            iterations: 1,
            residuals: Vec::new(),
        });
    }
    let mut residuals = Vec::new();
    for it in 2..=cfg.picard_max_iter.max(2) {
        let drift = stepper.drift(&prev.rho, problem);
        let next = stepper.step(state, &drift, dt)?;
        let res = problem.grid.integrate(
            &next
                .rho
                .iter()
                .zip(&prev.rho)
                .map(|(a, b)| (a - b).abs())
                .collect::<Vec<_>>(),
        );
        residuals.push(res);
        prev = next;
        if res < cfg.picard_tol {
            return Ok(PicardOutcome {
                state: prev,
                iterations: it,
                residuals,
            });
        }
    }
    Err(SolverError::Picard {
        iterations: cfg.picard_max_iter,
        residual: *residuals.last().unwrap_or(&f64::NAN),
    })
}

/// Diagnostics attached to each recorded state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordDiagnostics {
    pub energy: EnergyRecord,
    pub moments: MomentRecord,
    pub mass: f64,
    /// ∫_0^t D accumulated step by step (NaN when not tracked).
    pub dissipation_integral: f64,
}

/// Solver statistics over a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub max_picard_iterations: usize,
    /// Largest |mass change| / mass0 over all accepted steps.
    pub max_step_mass_drift: f64,
    pub min_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
    pub diagnostics: Vec<RecordDiagnostics>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn last(&self) -> &DensityState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn record(state: &DensityState, problem: &Problem, diss: f64) -> RecordDiagnostics {
    RecordDiagnostics {
        energy: energetics::free_energy(state, problem),
        moments: energetics::moments(state, problem),
        mass: state.mass(&problem.grid),
        dissipation_integral: diss,
    }
}

/// Integrates on [0, T], recording every `record_every` units of time and at T.
pub fn solve_density(
    rho0: &DensityState,
    problem: &Problem,
    cfg: &SolverConfig,
    record_every: f64,
) -> SolverResult<Trajectory> {
    let stepper = FrozenDriftStepper::new(&problem.grid, problem.params.m, cfg)?;
    let horizon = problem.params.horizon;
    let eps = 1e-12 * horizon;
    let record_every = if record_every > 0.0 {
        record_every.min(horizon)
    } else {
        horizon
    };
    let mass0 = rho0.mass(&problem.grid);

    let mut state = DensityState::new(0.0, rho0.rho.clone())?;
    let mut diss = if cfg.track_dissipation { 0.0 } else { f64::NAN };
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state.clone()],
        diagnostics: vec![record(&state, problem, diss)],
        stats: RunStats {
            min_dt: f64::INFINITY,
            ..Default::default()
        },
    };
    let mut next_record = record_every;
    let mut step_index = 0usize;
    while state.t < horizon - eps {
        let target = next_record.min(horizon);
        let mut dt = cfg.dt.min(target - state.t);
        if cfg.scheme == TimeScheme::Explicit {
            let drift = stepper.drift(&state.rho, problem);
            let limit = cfg.cfl_safety * stepper.explicit_limit(&state.rho, &drift);
            dt = dt.min(0.95 * limit);
        }
        let mut retries = 0;
        let outcome = loop {
            match picard_drift_fixed_point(&state, problem, dt, &stepper) {
                Ok(o) => break o,
                Err(err) => {
                    traj.stats.rejected_steps += 1;
                    if retries == cfg.max_retries {
                        return Err(SolverError::RetriesExhausted {
                            step: step_index,
                            t: state.t,
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
        step_index += 1;
        let mut next = outcome.state;
        let landed = (next.t - target).abs() <= eps;
        if landed {
            next.t = target;
        }
        let new_mass = next.mass(&problem.grid);
        let stats = &mut traj.stats;
        stats.accepted_steps += 1;
        stats.max_picard_iterations = stats.max_picard_iterations.max(outcome.iterations);
        stats.max_step_mass_drift = stats
            .max_step_mass_drift
            .max((new_mass - state.mass(&problem.grid)).abs() / mass0);
        stats.min_dt = stats.min_dt.min(dt);
        if cfg.track_dissipation {
            let ups = problem.upsilon_centers(&next.rho);
            diss += dt
                * energetics::dissipation_with(
                    &next.rho,
                    problem,
                    &ups,
                    ENTROPY_FLOOR.max(cfg.rho_floor),
                );
        }
        state = next;
        if landed {
            if target >= horizon - eps || (target - next_record).abs() <= eps {
                traj.times.push(state.t);
                traj.states.push(state.clone());
                traj.diagnostics.push(record(&state, problem, diss));
            }
            if (target - next_record).abs() <= eps {
                next_record += record_every;
            }
        }
    }
    Ok(traj)
}

/// t ↦ ∫(ρ_t - ρ̄_t)₊ dv over matching recorded times.
pub fn l1_contraction_gap(
    a: &Trajectory,
    b: &Trajectory,
    grid: &VolumetricGrid,
) -> SolverResult<Vec<f64>> {
    if a.len() != b.len() {
        return Err(SolverError::Mismatch(format!(
            "{} vs {} records",
            a.len(),
            b.len()
        )));
    }
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            if x.rho.len() != y.rho.len() || x.rho.len() != grid.n_cells() {
                return Err(SolverError::Mismatch("different grids".into()));
            }
            if (x.t - y.t).abs() > 1e-12 * (1.0 + x.t.abs()) {
                return Err(SolverError::Mismatch(format!("times {} and {}", x.t, y.t)));
            }
            Ok(positive_part_gap(&x.rho, &y.rho, grid))
        })
        .collect()
}

pub fn positive_part_gap(a: &[f64], b: &[f64], grid: &VolumetricGrid) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).max(0.0)).sum::<f64>() * grid.dv()
}

/// Right-hand side of the L¹ continuous dependence estimate for two confinement potentials
/// without interaction: gap₀ + mass0 ∫‖Δ(V_a - V_b)‖_∞ + C₁ (∫‖∇(V_a - V_b)‖₂²)^{1/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityBound {
    pub gap0: f64,
    pub divergence_term: f64,
    pub c1: f64,
    pub l2_term: f64,
    pub total: f64,
}

pub fn l1_stability_bound(
    traj_a: &Trajectory,
    v_a: &Radial,
    v_b: &Radial,
    problem: &Problem,
    gap0: f64,
) -> SolverResult<StabilityBound> {
    let g = &problem.grid;
    let d = g.dim();
    let m = problem.params.m;
    let horizon = *traj_a.times.last().expect("nonempty");
    let mass0 = traj_a.diagnostics[0].mass;
    // the estimate is stated for the exact Φ
    let diffusion = Diffusion::exact(m);
    let samples: Vec<f64> = (0..=4000).map(|i| g.radius() * i as f64 / 4000.0).collect();
    let lap_gap = samples
        .iter()
        .map(|&r| (v_a.laplacian(r, d) - v_b.laplacian(r, d)).abs())
        .fold(0.0, f64::max);
    let l2 = |f: &dyn Fn(f64) -> f64| -> f64 {
        g.r_centers().iter().map(|&r| f(r).powi(2)).sum::<f64>() * g.dv()
    };
    let de2 = l2(&|r| v_a.d1(r) - v_b.d1(r));
    let e2 = l2(&|r| v_a.d1(r));
    let g0: f64 = traj_a.states[0]
        .rho
        .iter()
        .map(|&r| diffusion.g_phi(r))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .sum::<f64>()
        * g.dv();
    // ∫ ‖ρ/Φ'(ρ)‖²_∞ ‖E‖²₂ dt by trapezoid over the records
    let w: Vec<f64> = traj_a
        .states
        .iter()
        .map(|s| {
            let sup = s
                .rho
                .iter()
                .map(|&r| r.powf(2.0 - m) / m)
                .fold(0.0, f64::max);
            sup * sup * e2
        })
        .collect();
    let integral: f64 = traj_a
        .times
        .windows(2)
        .zip(w.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum();
    let c1 = (g0 + 0.5 * integral).sqrt();
    let divergence_term = mass0 * horizon * lap_gap;
    let l2_term = c1 * (horizon * de2).sqrt();
    Ok(StabilityBound {
        gap0,
        divergence_term,
        c1,
        l2_term,
        total: gap0 + divergence_term + l2_term,
    })
}

/// ‖ρ₀‖_∞ exp(t ‖ΔΥ‖_∞) with ‖ΔW∗ρ‖_∞ ≤ mass0 ‖ΔW‖_∞, at every recorded time.
pub fn linf_growth_bound(traj: &Trajectory, problem: &Problem) -> Vec<f64> {
    let d = problem.params.d;
    let radius = problem.params.radius;
    let sup = |f: &Radial, r_max: f64| {
        (1..=4000)
            .map(|i| r_max * i as f64 / 4000.0)
            .map(|r| f.laplacian(r, d).abs())
            .fold(0.0, f64::max)
    };
    let rate = sup(&problem.potential.v, radius)
        + problem.params.mass0 * sup(&problem.potential.w, 2.0 * radius);
    let rho0 = traj.states[0].sup();
    traj.times.iter().map(|t| rho0 * (rate * t).exp()).collect()
}
