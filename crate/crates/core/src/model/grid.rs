use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ModelResult};

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Physical parameters of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Diffusion exponent, strictly between 0 and 1.
    pub m: f64,
    /// Spatial dimension.
    pub d: usize,
    /// Radius of the ball.
    pub radius: f64,
    /// Total mass of the initial datum.
    pub mass0: f64,
    /// Time horizon.
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(m: f64, d: usize, radius: f64, mass0: f64, horizon: f64) -> ModelResult<Self> {
        let p = Self {
            m,
            d,
            radius,
            mass0,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> ModelResult<()> {
        if !(self.m > 0.0 && self.m < 1.0) {
            return Err(invalid("m", "m out of fast-diffusion range (0,1)"));
        }
        if self.d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("R", "radius must be positive"));
        }
        if !(self.mass0 > 0.0 && self.mass0.is_finite()) {
            return Err(invalid("mass0", "mass must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("T", "time horizon must be positive"));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        unit_ball_volume(self.d)
    }

    /// Volume of the ball of radius R.
    pub fn r_v(&self) -> f64 {
        self.omega() * self.radius.powi(self.d as i32)
    }

    /// Exponent p = 2/(1-m) of the high moment.
    pub fn p_moment(&self) -> f64 {
        2.0 / (1.0 - self.m)
    }
}

fn invalid(name: &'static str, reason: &str) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.to_string(),
    }
}

/// Surface measure of the sphere enclosing volume `v`: d |B_1|^{1/d} v^{(d-1)/d}.
pub fn kappa(v: f64, params: &ModelParams) -> ModelResult<f64> {
    if v < 0.0 {
        return Err(ModelError::NegativeArgument {
            what: "kappa",
            value: v,
        });
    }
    Ok(kappa_raw(v, params.d, params.omega()))
}

pub(crate) fn kappa_raw(v: f64, d: usize, omega: f64) -> f64 {
    if d == 1 {
        return 2.0;
    }
    let df = d as f64;
    df * omega.powf(1.0 / df) * v.powf((df - 1.0) / df)
}

/// Radius of the ball of volume `v`.
pub fn radius_of_volume(v: f64, d: usize, omega: f64) -> f64 {
    if d == 1 {
        v / omega
    } else {
        (v / omega).powf(1.0 / d as f64)
    }
}

/// Uniform grid in the volume variable v on [0, R_v].
#[derive(Debug, Clone, PartialEq)]
pub struct VolumetricGrid {
    d: usize,
    omega: f64,
    r_v: f64,
    dv: f64,
    v_edges: Vec<f64>,
    v_centers: Vec<f64>,
    r_edges: Vec<f64>,
    r_centers: Vec<f64>,
    kappa_edges: Vec<f64>,
}

impl VolumetricGrid {
    pub fn new(params: &ModelParams, n_cells: usize) -> ModelResult<Self> {
        if n_cells < 4 {
            return Err(invalid("n_cells", "need at least 4 cells"));
        }
        let d = params.d;
        let omega = params.omega();
        let r_v = params.r_v();
        let dv = r_v / n_cells as f64;
        let mut v_edges: Vec<f64> = (0..=n_cells).map(|i| i as f64 * dv).collect();
        v_edges[n_cells] = r_v;
        let v_centers: Vec<f64> = (0..n_cells).map(|i| (i as f64 + 0.5) * dv).collect();
        let mut r_edges: Vec<f64> = v_edges
            .iter()
            .map(|&v| radius_of_volume(v, d, omega))
            .collect();
        r_edges[n_cells] = params.radius;
        let r_centers = v_centers
            .iter()
            .map(|&v| radius_of_volume(v, d, omega))
            .collect();
        let kappa_edges = v_edges.iter().map(|&v| kappa_raw(v, d, omega)).collect();
        Ok(Self {
            d,
            omega,
            r_v,
            dv,
            v_edges,
            v_centers,
            r_edges,
            r_centers,
            kappa_edges,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.v_centers.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn r_v(&self) -> f64 {
        self.r_v
    }

    pub fn radius(&self) -> f64 {
        self.r_edges[self.n_cells()]
    }

    /// Common cell width in v.
    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn v_edges(&self) -> &[f64] {
        &self.v_edges
    }

    pub fn v_centers(&self) -> &[f64] {
        &self.v_centers
    }

    pub fn r_edges(&self) -> &[f64] {
        &self.r_edges
    }

    pub fn r_centers(&self) -> &[f64] {
        &self.r_centers
    }

    pub fn kappa_edges(&self) -> &[f64] {
        &self.kappa_edges
    }

    pub fn radius_of(&self, v: f64) -> f64 {
        radius_of_volume(v, self.d, self.omega)
    }

    pub fn kappa_at(&self, v: f64) -> f64 {
        kappa_raw(v, self.d, self.omega)
    }

    /// Exact average of |x|^q over each cell.
    pub fn cell_power_averages(&self, q: f64) -> Vec<f64> {
        let e = 1.0 + q / self.d as f64;
        let scale = self.omega.powf(-q / self.d as f64) / (e * self.dv);
        self.v_edges
            .windows(2)
            .map(|w| scale * (w[1].powf(e) - w[0].powf(e)))
            .collect()
    }

    /// Total mass of a cell-wise density.
    pub fn integrate(&self, rho: &[f64]) -> f64 {
        rho.iter().sum::<f64>() * self.dv
    }

    /// Cumulative mass at every edge, starting from 0.
    pub fn cumulative(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rho.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for &r in rho {
            acc += r * self.dv;
            out.push(acc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(d: usize) -> ModelParams {
        ModelParams::new(0.5, d, 1.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn unit_ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0, epsilon = 1e-14);
        assert_relative_eq!(unit_ball_volume(2), PI, epsilon = 1e-14);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-14);
        assert_relative_eq!(unit_ball_volume(4), PI * PI / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(0.7, &params(1)).unwrap(), 2.0);
        assert_relative_eq!(kappa(PI, &params(2)).unwrap(), 2.0 * PI, epsilon = 1e-14);
        let p3 = params(3);
        // surface area d ω_d r^{d-1} at r = 1
        let area = 3.0 * (4.0 * PI / 3.0);
        assert_relative_eq!(kappa(p3.omega(), &p3).unwrap(), area, epsilon = 1e-13);
        assert_eq!(kappa(0.0, &p3).unwrap(), 0.0);
        assert!(kappa(-1.0, &p3).is_err());
    }

    #[test]
    fn kappa_is_dv_dr() {
        for d in 1..=4 {
            let p = params(d);
            let om = p.omega();
            let r: f64 = 0.8;
            let h = 1e-6;
            let dvdr = (om * (r + h).powi(d as i32) - om * (r - h).powi(d as i32)) / (2.0 * h);
            let v = om * r.powi(d as i32);
            assert_relative_eq!(kappa(v, &p).unwrap(), dvdr, max_relative = 1e-8);
        }
    }

    #[test]
    fn params_reject_bad_m() {
        let err = ModelParams::new(1.2, 1, 1.0, 1.0, 1.0).unwrap_err();
        assert!(err
            .to_string()
            .contains("m out of fast-diffusion range (0,1)"));
        assert!(ModelParams::new(0.0, 1, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn grid_layout() {
        let p = params(3);
        let g = VolumetricGrid::new(&p, 16).unwrap();
        assert_eq!(g.v_edges()[0], 0.0);
        assert_eq!(*g.v_edges().last().unwrap(), p.r_v());
        assert!(g.v_edges().windows(2).all(|w| w[1] > w[0]));
        assert_relative_eq!(g.radius(), 1.5);
        let avg = g.cell_power_averages(0.0);
        assert!(avg.iter().all(|&a| (a - 1.0).abs() < 1e-12));
    }

    #[test]
    fn laplacian_in_volume_variable() {
        // Δ|x|^2 = 2d exactly exactly, Δe^{|x|^2} = (2d + 4|x|^2)e^{|x|^2} to second order, written as d/dv (κ² df/dv)
        for d in 1..=3 {
            let p = params(d);
            let mut errs = Vec::new();
            let mut errs2 = Vec::new();
            for n in [32usize, 64, 128] {
                let g = VolumetricGrid::new(&p, n).unwrap();
                let f: Vec<f64> = g.r_centers().iter().map(|r| r * r).collect();
                let f4: Vec<f64> = g.r_centers().iter().map(|r| (r * r).exp()).collect();
                let mut worst: f64 = 0.0;
                let mut worst4: f64 = 0.0;
                for i in n / 4..3 * n / 4 {
                    let kp = g.kappa_edges()[i + 1];
                    let km = g.kappa_edges()[i];
                    let flux_p = kp * kp * (f[i + 1] - f[i]) / g.dv();
                    let flux_m = km * km * (f[i] - f[i - 1]) / g.dv();
                    let lap = (flux_p - flux_m) / g.dv();
                    worst = worst.max((lap - 2.0 * d as f64).abs());
                    let lap4 = (kp * kp * (f4[i + 1] - f4[i]) - km * km * (f4[i] - f4[i - 1]))
                        / (g.dv() * g.dv());
                    let r = g.r_centers()[i];
                    worst4 =
                        worst4.max((lap4 - (2.0 * d as f64 + 4.0 * r * r) * (r * r).exp()).abs());
                }
                if d <= 2 {
                    assert!(worst < 1e-9, "{worst}");
                } else {
                    errs2.push(worst);
                }
                errs.push(worst4);
            }
            assert!(
                errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0,
                "{errs:?}"
            );
            if d == 3 {
                assert!(
                    errs2[1] < errs2[0] / 3.0 && errs2[2] < errs2[1] / 3.0,
                    "{errs2:?}"
                );
            }
        }
    }
}
