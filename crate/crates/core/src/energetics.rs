//! Free energy, dissipation, moments and the energy-based equicontinuity check.

use serde::{Deserialize, Serialize};

use crate::density_solver::Trajectory;
use crate::model::{DensityState, ModelParams, Problem, Radial};

/// Floor applied to ρ before forming ρ^{m-1}.
pub const ENTROPY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub e_diff: f64,
    pub e_conf: f64,
    pub e_int: f64,
    pub f: f64,
    /// Dissipation ∫ρ|∇ξ|² at this time.
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub t: f64,
    pub m2: f64,
    pub mp: f64,
}

/// F = -1/(1-m)∫ρᵐ + ∫Vρ + ½∬W(x-y)ρρ together with the dissipation.
pub fn free_energy(state: &DensityState, problem: &Problem) -> EnergyRecord {
    let m = problem.params.m;
    let g = &problem.grid;
    let dv = g.dv();
    let rho = &state.rho;
    let e_diff = -rho.iter().map(|r| r.powf(m)).sum::<f64>() * dv / (1.0 - m);
    let e_conf = rho
        .iter()
        .zip(g.r_centers())
        .map(|(r, &x)| r * problem.potential.v.value(x))
        .sum::<f64>()
        * dv;
    let wr = problem.conv.values_at_centers(rho, g);
    let e_int = 0.5 * rho.iter().zip(&wr).map(|(r, w)| r * w).sum::<f64>() * dv;
    EnergyRecord {
        t: state.t,
        e_diff,
        e_conf,
        e_int,
        f: e_diff + e_conf + e_int,
        d: dissipation_with(rho, problem, &problem.upsilon_centers(rho), ENTROPY_FLOOR),
    }
}

/// Entropy variable ξ = m/(m-1) ρ^{m-1} + Υ at cell centers.
pub fn entropy_variable(rho: &[f64], problem: &Problem, floor: f64) -> Vec<f64> {
    let ups = problem.upsilon_centers(rho);
    entropy_with(rho, problem.params.m, &ups, floor)
}

fn entropy_with(rho: &[f64], m: f64, ups: &[f64], floor: f64) -> Vec<f64> {
    rho.iter()
        .zip(ups)
        .map(|(&r, u)| m / (m - 1.0) * r.max(floor).powf(m - 1.0) + u)
        .collect()
}

/// D = ∫ρ|∇ξ|², evaluated as Σ_e κ_e² ρ̄_e (Δξ_e)²/Δv over interior edges.
pub fn dissipation(state: &DensityState, problem: &Problem) -> f64 {
    dissipation_with(
        &state.rho,
        problem,
        &problem.upsilon_centers(&state.rho),
        ENTROPY_FLOOR,
    )
}

pub(crate) fn dissipation_with(rho: &[f64], problem: &Problem, ups: &[f64], floor: f64) -> f64 {
    let xi = entropy_with(rho, problem.params.m, ups, floor);
    let g = &problem.grid;
    let kap = g.kappa_edges();
    (1..rho.len())
        .map(|e| {
            let rbar = 0.5 * (rho[e] + rho[e - 1]);
            let dx = xi[e] - xi[e - 1];
            kap[e] * kap[e] * rbar * dx * dx
        })
        .sum::<f64>()
        / g.dv()
}

/// Second moment and the p = 2/(1-m) moment, with exact cell averages of |x|^q.
pub fn moments(state: &DensityState, problem: &Problem) -> MomentRecord {
    let g = &problem.grid;
    let dv = g.dv();
    let dot = |w: Vec<f64>| state.rho.iter().zip(w).map(|(r, a)| r * a).sum::<f64>() * dv;
    MomentRecord {
        t: state.t,
        m2: dot(g.cell_power_averages(2.0)),
        mp: dot(g.cell_power_averages(problem.params.p_moment())),
    }
}

/// Lower bound of F over densities of mass `mass0` on B_R when V, W ≥ 0.
pub fn energy_lower_bound(params: &ModelParams) -> f64 {
    -params.mass0.powf(params.m) * params.r_v().powf(1.0 - params.m) / (1.0 - params.m)
}

/// Outcome of the moment growth checks over a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBoundReport {
    pub m2_holds: bool,
    pub mp_holds: bool,
    /// Smallest relative slack (bound - value)/bound over recorded times.
    pub m2_margin: f64,
    pub mp_margin: f64,
    /// mp(t) ≤ A e^{Bt}.
    pub a: f64,
    pub b: f64,
    pub first_violation: Option<f64>,
}

impl MomentBoundReport {
    pub fn holds(&self) -> bool {
        self.m2_holds && self.mp_holds
    }
}

fn linear_growth_constant(f: &Radial, r_max: f64) -> f64 {
    (0..=2000)
        .map(|i| r_max * i as f64 / 2000.0)
        .map(|r| f.d1(r).abs() / (1.0 + r))
        .fold(0.0, f64::max)
}

/// Checks m2(t) ≤ (m2(0) + F(0) - F_lower) eᵗ and mp(t) ≤ A e^{Bt}.
pub fn moment_bound_check(traj: &Trajectory, problem: &Problem) -> MomentBoundReport {
    let params = &problem.params;
    let (m, d, radius, mass0) = (params.m, params.d as f64, params.radius, params.mass0);
    let p = params.p_moment();
    let diag = &traj.diagnostics;
    let f_lower = energy_lower_bound(params);
    let m2_0 = diag[0].moments.m2;
    let f0 = diag[0].energy.f;
    let c_v = linear_growth_constant(&problem.potential.v, radius);
    let c_w = linear_growth_constant(&problem.potential.w, 2.0 * radius);
    let l = c_v + c_w * mass0 * (1.0 + radius);
    let diff = p * (p + d - 2.0) * params.r_v().powf(1.0 - m);
    let a_rate = diff + p * l * mass0;
    let b = diff + 2.0 * p * l;
    let a = diag[0].moments.mp + a_rate / b;

    let mut report = MomentBoundReport {
        m2_holds: true,
        mp_holds: true,
        m2_margin: f64::INFINITY,
        mp_margin: f64::INFINITY,
        a,
        b,
        first_violation: None,
    };
    for rec in diag {
        let t = rec.moments.t;
        let m2_bound = (m2_0 + f0 - f_lower) * t.exp();
        let mp_bound = a * (b * t).exp();
        report.m2_margin = report.m2_margin.min((m2_bound - rec.moments.m2) / m2_bound);
        report.mp_margin = report.mp_margin.min((mp_bound - rec.moments.mp) / mp_bound);
        let ok2 = rec.moments.m2 <= m2_bound;
        let okp = rec.moments.mp <= mp_bound;
        report.m2_holds &= ok2;
        report.mp_holds &= okp;
        if !(ok2 && okp) && report.first_violation.is_none() {
            report.first_violation = Some(t);
        }
    }
    report
}

/// Both sides of the energy equicontinuity estimate between two recorded times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityCheck {
    /// ∫|M_t - M_s| dv.
    pub surrogate: f64,
    /// ∫|M_t - M_s| dr, the W⁻¹,¹ distance against radial test functions in x.
    pub radial_distance: f64,
    /// mass0^{1/2} (F(s) - F(t))^{1/2} |t - s|^{1/2}.
    pub bound: f64,
    /// The same bound multiplied by sup κ, which dominates the surrogate without extra assumptions.
    pub rigorous_bound: f64,
    pub holds: bool,
}

/// Compares the mass-profile distance between records `i` and `j` with the energy bound.
pub fn w11_equicontinuity(
    traj: &Trajectory,
    problem: &Problem,
    i: usize,
    j: usize,
) -> EquicontinuityCheck {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let g = &problem.grid;
    let ms = g.cumulative(&traj.states[i].rho);
    let mt = g.cumulative(&traj.states[j].rho);
    // trapezoid on the edge values
    let gaps: Vec<f64> = ms.iter().zip(&mt).map(|(a, b)| (a - b).abs()).collect();
    let surrogate = gaps.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * g.dv();
    let radial_distance = gaps
        .windows(2)
        .zip(g.r_edges().windows(2))
        .map(|(w, r)| 0.5 * (w[0] + w[1]) * (r[1] - r[0]))
        .sum::<f64>();
    let gap_f = (traj.diagnostics[i].energy.f - traj.diagnostics[j].energy.f).max(0.0);
    let dt = traj.times[j] - traj.times[i];
    let bound = (problem.params.mass0 * gap_f * dt).sqrt();
    let kmax = *g.kappa_edges().last().expect("edges");
    let rigorous_bound = kmax * bound;
    EquicontinuityCheck {
        surrogate,
        radial_distance,
        bound,
        rigorous_bound,
        holds: surrogate <= bound * (1.0 + 1e-12) + 1e-15,
    }
}

/// Both sides of the L¹ bound on ∇ρᵐ over a window of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundCheck {
    /// ∫∫|∇ρᵐ| dx dt.
    pub lhs: f64,
    /// mass0 (F-gap + ∫∫ρ|∇Υ|²)^{1/2}.
    pub bound: f64,
    /// (mass0 (t₂ - t₁))^{1/2} (2 F-gap + 2∫∫ρ|∇Υ|²)^{1/2}.
    pub rigorous_bound: f64,
    pub holds: bool,
}

/// ∫|∇ρᵐ| dx and ∫ρ|∇Υ|² dx for one state.
fn gradient_terms(rho: &[f64], problem: &Problem) -> (f64, f64) {
    let g = &problem.grid;
    let m = problem.params.m;
    let n = rho.len();
    let k = g.kappa_edges();
    let slope = problem.upsilon_slope_edges(rho);
    let mut grad = 0.0;
    let mut drift = 0.0;
    for e in 1..n {
        grad += (rho[e].powf(m) - rho[e - 1].powf(m)).abs() * k[e];
        drift += 0.5 * (rho[e] + rho[e - 1]) * slope[e] * slope[e] * g.dv();
    }
    (grad, drift)
}

/// Checks the gradient bound between records `i` < `j`, integrating in time by the trapezoid rule.
pub fn grad_power_l1_check(
    traj: &Trajectory,
    problem: &Problem,
    i: usize,
    j: usize,
) -> GradientBoundCheck {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let terms: Vec<(f64, f64)> = traj.states[i..=j]
        .iter()
        .map(|s| gradient_terms(&s.rho, problem))
        .collect();
    let mut lhs = 0.0;
    let mut drift = 0.0;
    for (w, t) in terms.windows(2).zip(traj.times[i..=j].windows(2)) {
        let dt = t[1] - t[0];
        lhs += 0.5 * dt * (w[0].0 + w[1].0);
        drift += 0.5 * dt * (w[0].1 + w[1].1);
    }
    let gap_f = (traj.diagnostics[i].energy.f - traj.diagnostics[j].energy.f).max(0.0);
    let mass0 = problem.params.mass0;
    let span = traj.times[j] - traj.times[i];
    let bound = mass0 * (gap_f + drift).sqrt();
    let rigorous_bound = (mass0 * span).sqrt() * (2.0 * gap_f + 2.0 * drift).sqrt();
    GradientBoundCheck {
        lhs,
        bound,
        rigorous_bound,
        holds: lhs <= rigorous_bound * (1.0 + 1e-9),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PotentialSpec, Radial};
    use approx::assert_relative_eq;

    fn problem(d: usize, pot: PotentialSpec, n: usize) -> Problem {
        Problem::new(ModelParams::new(0.5, d, 1.0, 1.0, 1.0).unwrap(), pot, n).unwrap()
    }

    #[test]
    fn uniform_free_energy() {
        for d in [1usize, 3] {
            let p = problem(d, PotentialSpec::free(), 40);
            let s = DensityState::new(0.0, p.uniform_density()).unwrap();
            let e = free_energy(&s, &p);
            let bv = p.params.r_v();
            assert_relative_eq!(e.f, -bv.powf(0.5) / 0.5, max_relative = 1e-13);
            assert_eq!(e.d, 0.0);
            assert_eq!(e.e_conf, 0.0);
            assert_relative_eq!(e.f, energy_lower_bound(&p.params), max_relative = 1e-13);
        }
    }

    #[test]
    fn energy_above_lower_bound() {
        let p = problem(3, PotentialSpec::free(), 64);
        let rho: Vec<f64> = p
            .grid
            .r_centers()
            .iter()
            .map(|r| (-4.0 * r * r).exp())
            .collect();
        let s = p.grid.integrate(&rho);
        let rho: Vec<f64> = rho.iter().map(|x| x / s).collect();
        let e = free_energy(&DensityState::new(0.0, rho).unwrap(), &p);
        assert!(e.f > energy_lower_bound(&p.params));
        assert!(e.d > 0.0);
    }

    #[test]
    fn interaction_energy_pairwise_sum() {
        // d = 1, W = |x|²/2, mass ½ in each of the two cells at ±r0: E_int = ½ Σ m_i m_j W(x_i - x_j)
        let p = problem(
            1,
            PotentialSpec::new(Radial::Zero, Radial::Quadratic { a: 0.5 }),
            8,
        );
        let g = &p.grid;
        let mut rho = vec![0.0; 8];
        rho[5] = 1.0 / g.dv();
        let r0 = g.r_centers()[5];
        let e = free_energy(&DensityState::new(0.0, rho).unwrap(), &p);
        // radial cell 5 is the pair {+r0, -r0}, each carrying ½
        let pairs = [(r0, r0), (r0, -r0), (-r0, r0), (-r0, -r0)];
        let direct: f64 = pairs
            .iter()
            .map(|(x, y)| 0.25 * 0.5 * (x - y) * (x - y))
            .sum::<f64>()
            * 0.5;
        assert_relative_eq!(e.e_int, direct, max_relative = 1e-13);
    }

    #[test]
    fn stationary_profile_has_no_dissipation() {
        // ρ = (1 + V)^{-2}, m = ½: ξ = -1/ρ^{1/2} + V = -1 constant
        let pot = PotentialSpec::new(Radial::Quadratic { a: 1.0 }, Radial::Zero);
        let p = problem(1, pot, 64);
        let rho: Vec<f64> = p
            .grid
            .r_centers()
            .iter()
            .map(|r| (1.0 + r * r).powi(-2))
            .collect();
        let d = dissipation(&DensityState::new(0.0, rho).unwrap(), &p);
        assert!(d < 1e-20, "{d}");
    }

    #[test]
    fn moments_of_uniform_state() {
        let p = problem(3, PotentialSpec::free(), 50);
        let s = DensityState::new(0.0, p.uniform_density()).unwrap();
        let mo = moments(&s, &p);
        // ∫|x|^q dx / |B| = d/(d+q) R^q
        assert_relative_eq!(mo.m2, 3.0 / 5.0, max_relative = 1e-12);
        let q = p.params.p_moment();
        assert_relative_eq!(mo.mp, 3.0 / (3.0 + q), max_relative = 1e-12);
    }

    #[test]
    fn gradient_bound_on_a_transient() {
        use crate::density_solver::{solve_density, SolverConfig};
        let p = Problem::new(
            ModelParams::new(0.5, 1, 1.0, 1.0, 0.2).unwrap(),
            PotentialSpec::new(Radial::Quadratic { a: 1.0 }, Radial::Zero),
            64,
        )
        .unwrap();
        let rho: Vec<f64> = p
            .grid
            .r_centers()
            .iter()
            .map(|&r| if r < 0.4 { 2.0 } else { 0.2 })
            .collect();
        let s = p.grid.integrate(&rho);
        let rho0 = DensityState::new(0.0, rho.iter().map(|x| x / s).collect()).unwrap();
        let traj = solve_density(
            &rho0,
            &p,
            &SolverConfig {
                dt: 1e-3,
                ..Default::default()
            },
            0.01,
        )
        .unwrap();
        let c = grad_power_l1_check(&traj, &p, 0, traj.len() - 1);
        assert!(c.lhs > 0.0 && c.holds, "{c:?}");
        let z = grad_power_l1_check(&traj, &p, 3, 3);
        assert_eq!(z.lhs, 0.0);
    }
}
