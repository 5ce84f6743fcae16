//! Radial convolution W∗ρ for a density that is piecewise constant in v.
//!
//! Cell masses are lumped at the cell-center radius; the spherical mean of the
//! kernel over the source shell is integrated by Gauss–Legendre in the polar
//! angle with adaptive order.

use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

use super::grid::VolumetricGrid;
use super::potential::Radial;
use crate::error::{ModelError, ModelResult};

/// Relative change between successive orders at which the angular rule is accepted.
pub const ANGULAR_TOL: f64 = 1e-8;
const ORDERS: [usize; 7] = [8, 16, 32, 64, 128, 256, 512];

struct AngularRules {
    rules: Vec<Vec<(f64, f64)>>,
}

impl AngularRules {
    fn new() -> Self {
        let rules = ORDERS
            .iter()
            .map(|&n| {
                GaussLegendre::new(n.try_into().expect("nonzero"))
                    .as_node_weight_pairs()
                    .to_vec()
            })
            .collect();
        Self { rules }
    }
}

/// Spherical means of W(|r e₁ - s ω|) and of its r-derivative.
struct Kernel<'a> {
    w: &'a Radial,
    d: usize,
    rules: &'a AngularRules,
}

impl Kernel<'_> {
    fn mean(&self, r: f64, s: f64, derivative: bool) -> ModelResult<f64> {
        match self.w {
            Radial::Sum(parts) if self.d > 1 => parts
                .iter()
                .map(|w| {
                    Kernel {
                        w,
                        d: self.d,
                        rules: self.rules,
                    }
                    .mean(r, s, derivative)
                })
                .sum(),
            _ => self.mean_single(r, s, derivative),
        }
    }

    fn mean_single(&self, r: f64, s: f64, derivative: bool) -> ModelResult<f64> {
        if self.d == 1 {
            return Ok(if derivative {
                0.5 * (self.w.d1((r - s).abs()) * (r - s).signum() + self.w.d1(r + s))
            } else {
                0.5 * (self.w.value((r - s).abs()) + self.w.value(r + s))
            });
        }
        if r == 0.0 || s == 0.0 {
            let z = r.max(s);
            return Ok(if derivative {
                if s == 0.0 {
                    self.w.d1(z)
                } else {
                    0.0
                }
            } else {
                self.w.value(z)
            });
        }
        let mut theta_max = PI;
        if let Some(sup) = self.w.support_radius() {
            if (r - s).abs() >= sup {
                return Ok(0.0);
            }
            if r + s > sup {
                let c = ((r * r + s * s - sup * sup) / (2.0 * r * s)).clamp(-1.0, 1.0);
                theta_max = c.acos();
            }
        }
        let weight_exp = self.d as i32 - 2;
        let integrand = |theta: f64| {
            let (sn, cs) = theta.sin_cos();
            let z2 = (r * r + s * s - 2.0 * r * s * cs).max(0.0);
            let z = z2.sqrt();
            let jac = sn.powi(weight_exp);
            let f = if derivative {
                if z == 0.0 {
                    0.0
                } else {
                    self.w.d1(z) * (r - s * cs) / z
                }
            } else {
                self.w.value(z)
            };
            f * jac
        };
        let mut prev = f64::NAN;
        let mut last_diff = f64::INFINITY;
        for rule in &self.rules.rules {
            let half = 0.5 * theta_max;
            let mut num = 0.0;
            let mut den = 0.0;
            for &(x, wgt) in rule {
                let th = half * (x + 1.0);
                num += wgt * integrand(th);
                // the normalisation always spans [0, π]
                den += wgt * (0.5 * PI * (x + 1.0)).sin().powi(weight_exp);
            }
            let val = num * half / (den * 0.5 * PI);
            if prev.is_finite() {
                last_diff = (val - prev).abs();
                if last_diff <= ANGULAR_TOL * val.abs().max(1e-300) || last_diff < 1e-15 {
                    return Ok(val);
                }
            }
            prev = val;
        }
        Err(ModelError::QuadratureNonconvergence {
            r,
            s,
            estimate: last_diff,
        })
    }
}

/// Precomputed convolution operator for a fixed kernel and grid.
#[derive(Debug, Clone)]
pub struct Convolution {
    kind: Kind,
    n: usize,
}

#[derive(Debug, Clone)]
enum Kind {
    Zero,
    /// W = a|x|²: W∗ρ(x) = a(|x|² A + B) for radial ρ.
    Quadratic {
        a: f64,
        s2: Vec<f64>,
    },
    General {
        w: Radial,
        d: usize,
        src: Vec<f64>,
        centers: Vec<f64>,
        edges_d: Vec<f64>,
        origin: Vec<f64>,
        boundary: Vec<f64>,
    },
}

/// Values and radial derivatives of W∗ρ at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionValues {
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

impl Convolution {
    pub fn new(w: &Radial, grid: &VolumetricGrid) -> ModelResult<Self> {
        let n = grid.n_cells();
        let src = grid.r_centers().to_vec();
        if w.is_zero() {
            return Ok(Self {
                kind: Kind::Zero,
                n,
            });
        }
        if let Some(a) = w.quadratic_coefficient() {
            let s2 = src.iter().map(|s| s * s).collect();
            return Ok(Self {
                kind: Kind::Quadratic { a, s2 },
                n,
            });
        }
        Self::quadrature(w, grid)
    }

    /// Build the generic quadrature operator even for kernels with a fast path.
    pub fn quadrature(w: &Radial, grid: &VolumetricGrid) -> ModelResult<Self> {
        let n = grid.n_cells();
        let src = grid.r_centers().to_vec();
        let d = grid.dim();
        let rules = AngularRules::new();
        let kernel = Kernel {
            w,
            d,
            rules: &rules,
        };
        let centers = matrix(&kernel, grid.r_centers(), &src, false)?;
        let edges_d = matrix(&kernel, grid.r_edges(), &src, true)?;
        let origin = matrix(&kernel, &[0.0], &src, false)?;
        let boundary = matrix(&kernel, &[grid.radius()], &src, false)?;
        Ok(Self {
            kind: Kind::General {
                w: w.clone(),
                d,
                src,
                centers,
                edges_d,
                origin,
                boundary,
            },
            n,
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Kind::Zero)
    }

    /// True when W∗ρ' depends on ρ only through its total mass.
    pub fn drift_depends_on_mass_only(&self) -> bool {
        matches!(self.kind, Kind::Zero | Kind::Quadratic { .. })
    }

    fn masses(&self, rho: &[f64], dv: f64) -> Vec<f64> {
        debug_assert_eq!(rho.len(), self.n);
        rho.iter().map(|r| r * dv).collect()
    }

    /// (W∗ρ) at every cell center.
    pub fn values_at_centers(&self, rho: &[f64], grid: &VolumetricGrid) -> Vec<f64> {
        let mass = self.masses(rho, grid.dv());
        match &self.kind {
            Kind::Zero => vec![0.0; self.n],
            Kind::Quadratic { a, s2 } => {
                let (am, b) = moments(&mass, s2);
                grid.r_centers()
                    .iter()
                    .map(|r| a * (r * r * am + b))
                    .collect()
            }
            Kind::General { centers, .. } => matvec(centers, &mass),
        }
    }

    /// ∂_r (W∗ρ) at every cell edge.
    pub fn derivatives_at_edges(&self, rho: &[f64], grid: &VolumetricGrid) -> Vec<f64> {
        let mass = self.masses(rho, grid.dv());
        match &self.kind {
            Kind::Zero => vec![0.0; self.n + 1],
            Kind::Quadratic { a, .. } => {
                let am: f64 = mass.iter().sum();
                grid.r_edges().iter().map(|r| 2.0 * a * am * r).collect()
            }
            Kind::General { edges_d, .. } => matvec(edges_d, &mass),
        }
    }

    pub fn value_at_origin(&self, rho: &[f64], grid: &VolumetricGrid) -> f64 {
        let mass = self.masses(rho, grid.dv());
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Quadratic { a, s2 } => a * moments(&mass, s2).1,
            Kind::General { origin, .. } => matvec(origin, &mass)[0],
        }
    }

    pub fn value_at_boundary(&self, rho: &[f64], grid: &VolumetricGrid) -> f64 {
        let mass = self.masses(rho, grid.dv());
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Quadratic { a, s2 } => {
                let (am, b) = moments(&mass, s2);
                let r = grid.radius();
                a * (r * r * am + b)
            }
            Kind::General { boundary, .. } => matvec(boundary, &mass)[0],
        }
    }

    /// Values and derivatives at arbitrary radii (assembled on the fly).
    pub fn evaluate_at(
        &self,
        rho: &[f64],
        grid: &VolumetricGrid,
        radii: &[f64],
    ) -> ModelResult<ConvolutionValues> {
        let mass = self.masses(rho, grid.dv());
        match &self.kind {
            Kind::Zero => Ok(ConvolutionValues {
                values: vec![0.0; radii.len()],
                derivatives: vec![0.0; radii.len()],
            }),
            Kind::Quadratic { a, s2 } => {
                let (am, b) = moments(&mass, s2);
                Ok(ConvolutionValues {
                    values: radii.iter().map(|r| a * (r * r * am + b)).collect(),
                    derivatives: radii.iter().map(|r| 2.0 * a * am * r).collect(),
                })
            }
            Kind::General { w, d, src, .. } => {
                let rules = AngularRules::new();
                let kernel = Kernel {
                    w,
                    d: *d,
                    rules: &rules,
                };
                let vals = matrix(&kernel, radii, src, false)?;
                let ders = matrix(&kernel, radii, src, true)?;
                Ok(ConvolutionValues {
                    values: matvec(&vals, &mass),
                    derivatives: matvec(&ders, &mass),
                })
            }
        }
    }
}

fn moments(mass: &[f64], s2: &[f64]) -> (f64, f64) {
    let a: f64 = mass.iter().sum();
    let b: f64 = mass.iter().zip(s2).map(|(m, s)| m * s).sum();
    (a, b)
}

fn matrix(
    kernel: &Kernel<'_>,
    targets: &[f64],
    src: &[f64],
    derivative: bool,
) -> ModelResult<Vec<f64>> {
    let rows: ModelResult<Vec<Vec<f64>>> = targets
        .par_iter()
        .map(|&r| src.iter().map(|&s| kernel.mean(r, s, derivative)).collect())
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

fn matvec(mat: &[f64], x: &[f64]) -> Vec<f64> {
    mat.chunks_exact(x.len())
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// W∗ρ and its radial derivative at the cell centers of `grid`.
pub fn radial_convolution(
    rho: &[f64],
    w: &Radial,
    grid: &VolumetricGrid,
) -> ModelResult<ConvolutionValues> {
    if rho.len() != grid.n_cells() {
        return Err(ModelError::GridMismatch {
            expected: grid.n_cells(),
            got: rho.len(),
        });
    }
    if let Some((cell, &value)) = rho
        .iter()
        .enumerate()
        .find(|(_, r)| !(**r >= 0.0 && r.is_finite()))
    {
        return Err(ModelError::InvalidDensity { cell, value });
    }
    let conv = Convolution::new(w, grid)?;
    conv.evaluate_at(rho, grid, grid.r_centers())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::grid::ModelParams;
    use approx::assert_relative_eq;

    fn grid(d: usize, n: usize, r: f64) -> VolumetricGrid {
        VolumetricGrid::new(&ModelParams::new(0.5, d, r, 1.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn quadratic_kernel_uniform_d1() {
        // W = |x|²/2, uniform unit mass on [-R, R]: (W∗ρ)(0) = R²/6
        let r = 1.3;
        let g = grid(1, 4000, r);
        let rho = vec![1.0 / g.r_v(); g.n_cells()];
        let w = Radial::Quadratic { a: 0.5 };
        let conv = Convolution::new(&w, &g).unwrap();
        // direct 1D oracle: ∫_{-R}^{R} y²/2 · 1/(2R) dy
        let n = 20000;
        let oracle: f64 = (0..n)
            .map(|i| {
                let y = -r + (i as f64 + 0.5) * 2.0 * r / n as f64;
                0.5 * y * y / (2.0 * r) * 2.0 * r / n as f64
            })
            .sum();
        assert_relative_eq!(oracle, r * r / 6.0, max_relative = 1e-6);
        assert_relative_eq!(conv.value_at_origin(&rho, &g), oracle, max_relative = 1e-6);
    }

    #[test]
    fn zero_kernel() {
        let g = grid(3, 32, 1.0);
        let rho = vec![0.3; 32];
        let out = radial_convolution(&rho, &Radial::Zero, &g).unwrap();
        assert!(out.values.iter().chain(&out.derivatives).all(|&x| x == 0.0));
    }

    #[test]
    fn point_mass_reproduces_kernel() {
        for d in [1usize, 2, 3] {
            let g = grid(d, 64, 1.0);
            let mut rho = vec![0.0; 64];
            rho[0] = 1.0 / g.dv();
            let w = Radial::Quadratic { a: 0.5 };
            let conv = Convolution::new(&w, &g).unwrap();
            let vals = conv.values_at_centers(&rho, &g);
            let s0 = g.r_centers()[0];
            for (i, &r) in g.r_centers().iter().enumerate() {
                // exact for a thin shell at radius s0: (r² + s0²)/2
                assert_relative_eq!(vals[i], 0.5 * (r * r + s0 * s0), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn fast_path_matches_quadrature() {
        for d in [1usize, 2, 3, 5] {
            let g = grid(d, 48, 1.2);
            let rho: Vec<f64> = g.r_centers().iter().map(|r| (-(r * r)).exp()).collect();
            let w = Radial::Quadratic { a: 0.5 };
            let fast = Convolution::new(&w, &g).unwrap();
            let slow = Convolution::quadrature(&w, &g).unwrap();
            let (a, b) = (
                fast.values_at_centers(&rho, &g),
                slow.values_at_centers(&rho, &g),
            );
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(x, y, max_relative = 1e-8);
            }
            let (a, b) = (
                fast.derivatives_at_edges(&rho, &g),
                slow.derivatives_at_edges(&rho, &g),
            );
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(x, y, max_relative = 1e-8, epsilon = 1e-12);
            }
            assert_relative_eq!(
                fast.value_at_origin(&rho, &g),
                slow.value_at_origin(&rho, &g),
                max_relative = 1e-10
            );
            assert_relative_eq!(
                fast.value_at_boundary(&rho, &g),
                slow.value_at_boundary(&rho, &g),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn derivative_matches_difference_of_values() {
        let g = grid(3, 40, 1.0);
        let rho: Vec<f64> = g.r_centers().iter().map(|r| 1.0 + r).collect();
        let w: Radial = "sum[power{1,3},compact_bump{2,0.6}]".parse().unwrap();
        let conv = Convolution::new(&w, &g).unwrap();
        let r0 = 0.55;
        let h = 1e-5;
        let vals = conv.evaluate_at(&rho, &g, &[r0 - h, r0, r0 + h]).unwrap();
        let fd = (vals.values[2] - vals.values[0]) / (2.0 * h);
        assert_relative_eq!(vals.derivatives[1], fd, max_relative = 1e-5);
    }

    #[test]
    fn rejects_bad_density() {
        let g = grid(1, 8, 1.0);
        assert!(radial_convolution(&[1.0; 7], &Radial::Zero, &g).is_err());
        let mut rho = vec![1.0; 8];
        rho[3] = -1.0;
        assert!(radial_convolution(&rho, &Radial::Zero, &g).is_err());
    }
}
