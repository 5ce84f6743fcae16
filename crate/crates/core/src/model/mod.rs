//! Domain types and the volumetric-coordinate calculus.

mod convolution;
mod diffusion;
mod grid;
mod potential;

pub use convolution::{radial_convolution, Convolution, ConvolutionValues, ANGULAR_TOL};
pub use diffusion::{phi_k, phi_k_prime, Diffusion, RegularizedDiffusion, CORNER_DELTA};
pub use grid::{kappa, radius_of_volume, unit_ball_volume, ModelParams, VolumetricGrid};
pub use potential::{PotentialSpec, Radial};

use crate::error::{ModelError, ModelResult};

/// Radial density, one value per cell, at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub t: f64,
    pub rho: Vec<f64>,
}

impl DensityState {
    pub fn new(t: f64, rho: Vec<f64>) -> ModelResult<Self> {
        if let Some((cell, &value)) = rho
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r >= 0.0 && r.is_finite()))
        {
            return Err(ModelError::InvalidDensity { cell, value });
        }
        Ok(Self { t, rho })
    }

    pub fn mass(&self, grid: &VolumetricGrid) -> f64 {
        grid.integrate(&self.rho)
    }

    pub fn sup(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_mass_profile(&self, grid: &VolumetricGrid) -> MassProfile {
        MassProfile {
            t: self.t,
            m: grid.cumulative(&self.rho),
        }
    }
}

/// Cumulative mass M(t, v) at every edge of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MassProfile {
    pub t: f64,
    pub m: Vec<f64>,
}

impl MassProfile {
    /// Cell densities ∂_v M.
    pub fn to_density(&self, grid: &VolumetricGrid) -> Vec<f64> {
        self.m
            .windows(2)
            .map(|w| (w[1] - w[0]) / grid.dv())
            .collect()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.m.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn total(&self) -> f64 {
        *self.m.last().expect("nonempty profile")
    }
}

/// Everything a solver needs about one discretized experiment.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: ModelParams,
    pub potential: PotentialSpec,
    pub grid: VolumetricGrid,
    pub conv: Convolution,
}

impl Problem {
    pub fn new(params: ModelParams, potential: PotentialSpec, n_cells: usize) -> ModelResult<Self> {
        params.validate()?;
        let grid = VolumetricGrid::new(&params, n_cells)?;
        let conv = Convolution::new(&potential.w, &grid)?;
        Ok(Self {
            params,
            potential,
            grid,
            conv,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    /// Υ = V + W∗ρ at cell centers.
    pub fn upsilon_centers(&self, rho: &[f64]) -> Vec<f64> {
        let wr = self.conv.values_at_centers(rho, &self.grid);
        self.grid
            .r_centers()
            .iter()
            .zip(wr)
            .map(|(&r, w)| self.potential.v.value(r) + w)
            .collect()
    }

    /// ∂_r Υ at every edge.
    pub fn upsilon_slope_edges(&self, rho: &[f64]) -> Vec<f64> {
        let wd = self.conv.derivatives_at_edges(rho, &self.grid);
        self.grid
            .r_edges()
            .iter()
            .zip(wd)
            .map(|(&r, w)| self.potential.v.d1(r) + w)
            .collect()
    }

    /// κ² 𝔈 = κ ∂_rΥ at interior edges, zero at both boundary edges.
    pub fn transport_coefficients(&self, rho: &[f64]) -> Vec<f64> {
        let slope = self.upsilon_slope_edges(rho);
        let n = self.n_cells();
        let kap = self.grid.kappa_edges();
        (0..=n)
            .map(|e| {
                if e == 0 || e == n {
                    0.0
                } else {
                    kap[e] * slope[e]
                }
            })
            .collect()
    }

    /// Uniform density carrying `mass0`.
    pub fn uniform_density(&self) -> Vec<f64> {
        vec![self.params.mass0 / self.grid.r_v(); self.n_cells()]
    }
}

/// 𝔈[μ](v) = ∂_rΥ(r(v)) / κ(v) at every edge; 𝔈 = 0 at v = 0.
pub fn volumetric_drift(rho: &[f64], problem: &Problem) -> ModelResult<Vec<f64>> {
    if rho.len() != problem.n_cells() {
        return Err(ModelError::GridMismatch {
            expected: problem.n_cells(),
            got: rho.len(),
        });
    }
    let slope = problem.upsilon_slope_edges(rho);
    let kap = problem.grid.kappa_edges();
    Ok(slope
        .iter()
        .zip(kap)
        .enumerate()
        .map(|(e, (s, k))| if e == 0 { 0.0 } else { s / k })
        .collect())
}
