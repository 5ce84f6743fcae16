//! Stationary states μ̂ = αδ₀ + ρ̂ with ρ̂ = (h + (1-m)/m (V + W∗μ̂))^{-1/(1-m)}.
//!
//! The profile is parametrized by the shifted constant b = h + k min Υ (k = (1-m)/m),
//! so that b > 0 is exactly the feasible range and b → 0⁺ is the concentration limit.

use serde::{Deserialize, Serialize};

use crate::error::StationaryError;
use crate::model::{Problem, Radial};

pub type StationaryResult<T> = Result<T, StationaryError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryState {
    /// Lagrange constant: ρ̂ = (h + kΥ)^{-1/(1-m)}.
    pub h: f64,
    pub rho_hat: Vec<f64>,
    pub alpha: f64,
    /// ∂_vM̂ at R_v.
    pub boundary_slope: f64,
    /// Relative sup-norm self-consistency residual.
    pub residual: f64,
    /// b = h + k min Υ.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryConfig {
    pub tol: f64,
    /// Initial damping of the profile fixed point.
    pub damping: f64,
    pub max_iter: usize,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            damping: 0.5,
            max_iter: 2000,
        }
    }
}

fn exponent(m: f64) -> (f64, f64) {
    ((1.0 - m) / m, 1.0 / (1.0 - m))
}

/// Υ = V + W∗ρ + αW at cell centers and at the origin.
fn upsilon(problem: &Problem, rho: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let w = &problem.potential.w;
    let wr = problem.conv.values_at_centers(rho, &problem.grid);
    let centers = problem
        .grid
        .r_centers()
        .iter()
        .zip(wr)
        .map(|(&r, c)| problem.potential.v.value(r) + c + alpha * w.value(r))
        .collect();
    let origin = problem.potential.v.value(0.0)
        + problem.conv.value_at_origin(rho, &problem.grid)
        + alpha * w.value(0.0);
    (centers, origin)
}

fn profile_from(ups: &[f64], base: impl Fn(f64) -> f64, q: f64) -> Vec<f64> {
    ups.iter().map(|&u| base(u).powf(-q)).collect()
}

fn rel_sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}

/// Damped fixed point ρ̂ = (h + k(V + W∗ρ̂))^{-1/(1-m)} for a given h (no Dirac part).
pub fn stationary_profile_given_h(
    h: f64,
    problem: &Problem,
    cfg: &StationaryConfig,
) -> StationaryResult<Vec<f64>> {
    let (k, q) = exponent(problem.params.m);
    let g = &problem.grid;
    let mut rho = vec![0.0; g.n_cells()];
    let mut theta = cfg.damping;
    let mut history = Vec::new();
    for it in 0..cfg.max_iter {
        let (ups, _) = upsilon(problem, &rho, 0.0);
        if let Some(i) = ups.iter().position(|&u| h + k * u <= 0.0) {
            return Err(StationaryError::InfeasibleH {
                h,
                r: g.r_centers()[i],
            });
        }
        let next = profile_from(&ups, |u| h + k * u, q);
        if problem.conv.is_zero() {
            return Ok(next);
        }
        let res = rel_sup(&rho, &next);
        if it > 0 && res < cfg.tol {
            return Ok(next);
        }
        if history.last().is_some_and(|&r: &f64| res > r) {
            theta *= 0.5;
        }
        history.push(res);
        let w = if it == 0 { 1.0 } else { theta };
        rho = rho
            .iter()
            .zip(&next)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
    }
    let tail = history.iter().rev().take(8).rev().copied().collect();
    Err(StationaryError::FixedPoint { history: tail })
}

/// Profile for the shift b, with the Dirac weight either zero or the mass complement.
struct Shifted {
    rho: Vec<f64>,
    alpha: f64,
    upsilon_min: f64,
    mass: f64,
    residual: f64,
}

fn shifted_profile(
    problem: &Problem,
    b: f64,
    with_dirac: bool,
    cfg: &StationaryConfig,
) -> StationaryResult<Shifted> {
    let (k, q) = exponent(problem.params.m);
    let g = &problem.grid;
    let mass0 = problem.params.mass0;
    let mut rho = vec![0.0; g.n_cells()];
    let mut theta = cfg.damping;
    let mut history: Vec<f64> = Vec::new();
    // for W = 0 or quadratic W, Υ - min Υ depends on μ̂ only through its total mass
    if problem.conv.drift_depends_on_mass_only() {
        let (ups, origin) = upsilon(problem, &rho, mass0);
        let umin = ups.iter().copied().fold(origin, f64::min);
        let next = profile_from(&ups, |u| b + k * (u - umin), q);
        let mass = g.integrate(&next);
        let alpha = if with_dirac {
            (mass0 - mass).max(0.0)
        } else {
            0.0
        };
        // restore the constant a∫|y|²ρ̂ dropped above
        let (ups, origin) = upsilon(problem, &next, mass0 - mass);
        let upsilon_min = ups.iter().copied().fold(origin, f64::min);
        return Ok(Shifted {
            rho: next,
            alpha,
            upsilon_min,
            mass,
            residual: 0.0,
        });
    }
    let mut alpha = if with_dirac { mass0 } else { 0.0 };
    for it in 0..cfg.max_iter {
        let (ups, origin) = upsilon(problem, &rho, alpha);
        let umin = ups.iter().copied().fold(origin, f64::min);
        let next = profile_from(&ups, |u| b + k * (u - umin), q);
        let mass = g.integrate(&next);
        let next_alpha = if with_dirac {
            (mass0 - mass).max(0.0)
        } else {
            0.0
        };
        let res = if it == 0 {
            f64::INFINITY
        } else {
            rel_sup(&rho, &next).max((next_alpha - alpha).abs() / mass0)
        };
        if res < cfg.tol {
            return Ok(Shifted {
                rho: next,
                alpha: next_alpha,
                upsilon_min: umin,
                mass,
                residual: res,
            });
        }
        if history.last().is_some_and(|&r| res > r) {
            theta *= 0.5;
        }
        if res.is_finite() {
            history.push(res);
        }
        let w = if it == 0 { 1.0 } else { theta };
        rho = rho
            .iter()
            .zip(&next)
            .map(|(a, x)| (1.0 - w) * a + w * x)
            .collect();
        alpha = (1.0 - w) * alpha + w * next_alpha;
    }
    let tail = history.iter().rev().take(8).rev().copied().collect();
    Err(StationaryError::FixedPoint { history: tail })
}

fn finish(problem: &Problem, s: Shifted, b: f64, concentrated: bool) -> StationaryState {
    let (k, q) = exponent(problem.params.m);
    let h = b - k * s.upsilon_min;
    let rb = problem.potential.v.value(problem.grid.radius())
        + problem.conv.value_at_boundary(&s.rho, &problem.grid)
        + s.alpha * problem.potential.w.value(problem.grid.radius());
    let boundary_slope = (h + k * rb).powf(-q);
    let alpha = if concentrated {
        (problem.params.mass0 - s.mass).max(0.0)
    } else {
        0.0
    };
    StationaryState {
        h,
        rho_hat: s.rho,
        alpha,
        boundary_slope,
        residual: s.residual,
        shift: b,
    }
}

/// Solves for h (and α) so that α + ∫ρ̂ = mass0.
pub fn solve_stationary(
    problem: &Problem,
    cfg: &StationaryConfig,
) -> StationaryResult<StationaryState> {
    let mass0 = problem.params.mass0;
    let g_of = |b: f64, dirac: bool| shifted_profile(problem, b, dirac, cfg);

    // concentration test: approach b → 0⁺ geometrically
    let mut b = 1.0;
    let mut prev = f64::NAN;
    let mut flat = 0;
    let mut below = None;
    for _ in 0..400 {
        let s = g_of(b, true)?;
        if s.mass >= mass0 {
            below = Some(b);
            break;
        }
        if (s.mass - prev).abs() < 1e-8 * mass0 {
            flat += 1;
            if flat == 3 {
                return Ok(finish(problem, s, b, true));
            }
        } else {
            flat = 0;
        }
        prev = s.mass;
        b *= 0.5;
    }
    let lo = below
        .ok_or_else(|| StationaryError::Bracket("mass did not settle as b approached 0".into()))?;

    // root of ∫ρ̂_b = mass0 with α = 0; g decreases in b
    let mut hi = 2.0 * lo;
    let mut g_hi = g_of(hi, false)?.mass;
    let mut expansions = 0;
    while g_hi > mass0 {
        hi *= 2.0;
        g_hi = g_of(hi, false)?.mass;
        expansions += 1;
        if expansions > 200 {
            return Err(StationaryError::Bracket(format!(
                "∫ρ̂ stays above {mass0} for b up to {hi:e}"
            )));
        }
    }
    let mut lo = lo;
    let mut g_lo = g_of(lo, false)?.mass;
    if g_lo < mass0 {
        return scan(problem, cfg, lo, hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = g_of(mid, false)?;
        if !(s.mass <= g_lo && s.mass >= g_hi) {
            return scan(problem, cfg, lo, hi);
        }
        if s.mass > mass0 {
            lo = mid;
            g_lo = s.mass;
        } else {
            hi = mid;
            g_hi = s.mass;
        }
        if (s.mass - mass0).abs() <= 1e-13 * mass0 || (hi - lo) <= 1e-15 * hi {
            return Ok(finish(problem, s, mid, false));
        }
    }
    let s = g_of(0.5 * (lo + hi), false)?;
    Ok(finish(problem, s, 0.5 * (lo + hi), false))
}

/// Fallback when g is not monotone: log-spaced scan for a sign change, then bisection on it.
fn scan(
    problem: &Problem,
    cfg: &StationaryConfig,
    lo: f64,
    hi: f64,
) -> StationaryResult<StationaryState> {
    let mass0 = problem.params.mass0;
    let pts: Vec<f64> = (0..=400)
        .map(|i| lo * (hi / lo).powf(i as f64 / 400.0))
        .collect();
    let vals: Vec<f64> = pts
        .iter()
        .map(|&b| shifted_profile(problem, b, false, cfg).map(|s| s.mass - mass0))
        .collect::<Result<_, _>>()?;
    let i = vals
        .windows(2)
        .position(|w| w[0] >= 0.0 && w[1] <= 0.0)
        .ok_or_else(|| {
            StationaryError::Bracket("non-monotone mass map without a sign change".into())
        })?;
    let (mut a, mut c) = (pts[i], pts[i + 1]);
    for _ in 0..200 {
        let mid = 0.5 * (a + c);
        if shifted_profile(problem, mid, false, cfg)?.mass > mass0 {
            a = mid;
        } else {
            c = mid;
        }
    }
    let s = shifted_profile(problem, 0.5 * (a + c), false, cfg)?;
    Ok(finish(problem, s, 0.5 * (a + c), false))
}

/// max over cells of |ρ̂ - (h + k(V + W∗ρ̂ + αW))^{-1/(1-m)}| / ρ̂.
pub fn self_consistency_residual(state: &StationaryState, problem: &Problem) -> f64 {
    let (k, q) = exponent(problem.params.m);
    let (ups, _) = upsilon(problem, &state.rho_hat, state.alpha);
    let target = profile_from(&ups, |u| state.h + k * u, q);
    rel_sup(&target, &state.rho_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSignReport {
    pub min_drift: f64,
    /// Radius where the minimum is attained.
    pub r_min: f64,
    pub nonnegative: bool,
    /// Fraction of interior edges where 𝔈 < 0.
    pub negative_fraction: f64,
}

/// Sign of 𝔈[μ̂] = ∂_rΥ/κ over the interior edges.
pub fn flux_sign_probe(state: &StationaryState, problem: &Problem) -> FluxSignReport {
    let g = &problem.grid;
    let n = g.n_cells();
    let slopes = problem.upsilon_slope_edges(&state.rho_hat);
    let w = &problem.potential.w;
    let mut min_drift = 0.0f64;
    let mut r_min = 0.0;
    let mut negative = 0usize;
    for e in 1..=n {
        let r = g.r_edges()[e];
        let value = (slopes[e] + state.alpha * w.d1(r)) / g.kappa_edges()[e];
        let value = if value.abs() < 1e-14 { 0.0 } else { value };
        if value < 0.0 {
            negative += 1;
        }
        if value < min_drift {
            min_drift = value;
            r_min = r;
        }
    }
    FluxSignReport {
        min_drift,
        r_min,
        nonnegative: min_drift >= 0.0,
        negative_fraction: negative as f64 / n as f64,
    }
}

/// Solution of the three-scalar system for W = a|x|².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticReduction {
    /// A: total mass seen by the interaction (Dirac included).
    pub a_mass: f64,
    /// B = ∫|y|²ρ.
    pub b_moment: f64,
    /// h in ρ = [k(h + aB + aA|x|² + V)]^{-1/(1-m)}.
    pub h: f64,
    pub alpha: f64,
    /// ∫ρ.
    pub ac_mass: f64,
}

/// Reduces the Euler-Lagrange equation with W = a|x|² to scalars (A, B, h) and solves
/// them by nested root finding, using midpoint quadrature on the problem grid.
pub fn quadratic_w_reduction(problem: &Problem) -> StationaryResult<QuadraticReduction> {
    let a = problem
        .potential
        .w_quadratic()
        .ok_or(StationaryError::NotQuadratic)?;
    let m = problem.params.m;
    let (k, q) = exponent(m);
    let g = &problem.grid;
    let mass0 = problem.params.mass0;
    // A = mass0 whether or not part of it sits at the origin
    let a_mass = mass0;
    let v = &problem.potential.v;
    let v_min = g
        .r_centers()
        .iter()
        .map(|&r| v.value(r))
        .fold(v.value(0.0), f64::min);
    // profile in terms of s = h + aB - v_min ≥ 0
    let profile = |s: f64| -> Vec<f64> {
        g.r_centers()
            .iter()
            .map(|&r| (k * (s + v.value(r) - v_min + a * a_mass * r * r)).powf(-q))
            .collect::<Vec<f64>>()
    };
    let mass_of = |s: f64| g.integrate(&profile(s));
    let mut lo = 1.0;
    let mut hits_zero = false;
    while mass_of(lo) < mass0 {
        lo *= 0.5;
        if lo < 1e-300 {
            hits_zero = true;
            break;
        }
    }
    let s = if hits_zero {
        0.0
    } else {
        let mut hi = 1.0;
        while mass_of(hi) > mass0 {
            hi *= 2.0;
        }
        let mut lo = lo;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mass_of(mid) > mass0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let rho = profile(s);
    let ac_mass = g.integrate(&rho);
    let sq = g.r_centers().iter().map(|r| r * r);
    let b_moment = rho.iter().zip(sq).map(|(p, r2)| p * r2).sum::<f64>() * g.dv();
    let h = s + v_min - a * b_moment;
    Ok(QuadraticReduction {
        a_mass,
        b_moment,
        h,
        alpha: (mass0 - ac_mass).max(0.0),
        ac_mass,
    })
}

/// ∫ ((1-m)/m V₀)^{-1/(1-m)} over B_R for V₀ = c|x|, in closed form.
pub fn cone_profile_mass(c: f64, m: f64, d: usize, radius: f64) -> f64 {
    let (k, q) = exponent(m);
    let df = d as f64;
    let area = df * crate::model::unit_ball_volume(d);
    area * (k * c).powf(-q) * radius.powf(df - q) / (df - q)
}

/// Slope c of V₀ = c|x| for which the cone bound carries `target` mass.
pub fn cone_slope_for_mass(target: f64, m: f64, d: usize, radius: f64) -> f64 {
    let (_, q) = exponent(m);
    cone_profile_mass(1.0, m, d, radius).powf(1.0 / q) * target.powf(-1.0 / q)
}

/// V = 2|x|² + c|x| with W = |x|²/2, the concentrating family.
pub fn concentration_potentials(c: f64) -> (Radial, Radial) {
    (
        Radial::Sum(vec![
            Radial::Quadratic { a: 2.0 },
            Radial::Power { a: c, p: 1.0 },
        ]),
        Radial::Quadratic { a: 0.5 },
    )
}
