//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::io::Write;

use fdagg::density_solver::{
    l1_contraction_gap, positive_part_gap, solve_density, EdgeDrift, FluxForm, FrozenDriftStepper,
    SolverConfig, TimeScheme, Trajectory,
};
use fdagg::energetics::{moment_bound_check, w11_equicontinuity};
use fdagg::experiment::observed_orders;
use fdagg::mass_solver::{
    check_viscosity_inequalities, detect_concentration, solve_mass, MassSolverConfig, MassStepper,
};
use fdagg::model::{DensityState, MassProfile, ModelParams, PotentialSpec, Problem, Radial};
use fdagg::stationary_solver::{
    concentration_potentials, cone_slope_for_mass, solve_stationary, StationaryConfig,
};
use fdagg::SolverError;
use gauss_quad::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Printed through the raw stdout handle so the line shows even when the test passes.
fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {n:>2} [{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn sci(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fixed(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn problem(m: f64, d: usize, t: f64, v: Radial, w: Radial, n: usize) -> Problem {
    Problem::new(
        ModelParams::new(m, d, 1.0, 1.0, t).unwrap(),
        PotentialSpec::new(v, w),
        n,
    )
    .unwrap()
}

fn gaussian(p: &Problem, sigma: f64, offset: f64) -> DensityState {
    let raw: Vec<f64> = p
        .grid
        .r_centers()
        .iter()
        .map(|r| (-r * r / (2.0 * sigma * sigma)).exp() + offset)
        .collect();
    let s = p.grid.integrate(&raw);
    DensityState::new(0.0, raw.iter().map(|x| x * p.params.mass0 / s).collect()).unwrap()
}

fn l1(a: &[f64], b: &[f64], dv: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dv
}

/// The problem shared by criteria 6, 7 and 12: W = 0, V = |x|², d = 1, m = 1/2 on [-1, 1].
fn quadratic_problem(t: f64, n: usize) -> Problem {
    problem(0.5, 1, t, Radial::Quadratic { a: 1.0 }, Radial::Zero, n)
}

/// Antiderivative of (h + x²)^{-2}.
fn profile_antiderivative(h: f64, x: f64) -> f64 {
    x / (2.0 * h * (h + x * x)) + (x / h.sqrt()).atan() / (2.0 * h.powf(1.5))
}

/// h with ∫_{-1}^{1} (h + x²)^{-2} dx = 1, by bisection on the closed-form mass.
fn fitted_h() -> f64 {
    let mass = |h: f64| 2.0 * profile_antiderivative(h, 1.0);
    let (mut lo, mut hi) = (1e-3, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_01_mass_conservation() {
    let n = 512;
    let mut worst = Vec::new();
    let mut pass = true;
    for scheme in [TimeScheme::Explicit, TimeScheme::Implicit] {
        // explicit steps are CFL-limited near 1e-7 on this grid
        let (t, dt, max_steps) = match scheme {
            TimeScheme::Explicit => (5e-5, 1e-3, 1000),
            TimeScheme::Implicit => (0.02, 2e-3, 10),
        };
        let p = problem(
            0.5,
            3,
            t,
            Radial::Quadratic { a: 1.0 },
            Radial::CompactBump { a: 1.0, r0: 0.5 },
            n,
        );
        let rho0 = gaussian(&p, 0.3, 0.05);
        for flux in [FluxForm::Upwind, FluxForm::Entropy] {
            let cfg = SolverConfig {
                dt,
                scheme,
                flux,
                track_dissipation: false,
                ..Default::default()
            };
            let tol = if scheme == TimeScheme::Explicit {
                1e-12
            } else {
                cfg.newton_tol
            };
            let traj = solve_density(&rho0, &p, &cfg, 0.0).unwrap();
            let drift = traj.stats.max_step_mass_drift;
            pass &= drift <= tol;
            worst.push(format!(
                "density {scheme:?}/{flux:?} {drift:.1e} (tol {tol:.0e}, {} steps)",
                traj.stats.accepted_steps
            ));

            let mcfg = MassSolverConfig {
                dt,
                scheme,
                flux,
                ..Default::default()
            };
            let stepper = MassStepper::new(&p, &mcfg).unwrap();
            let mut m = rho0.to_mass_profile(&p.grid);
            let mut h = dt;
            let mut steps = 0;
            let mut drift = 0.0f64;
            while m.t < t * (1.0 - 1e-12) && steps < max_steps {
                match stepper.step(&m, h.min(t - m.t)) {
                    Ok((next, _)) => {
                        let before = m.m[n] - m.m[0];
                        let after = next.m[n] - next.m[0];
                        drift = drift.max((after - before).abs() / p.params.mass0);
                        m = next;
                        steps += 1;
                    }
                    Err(SolverError::Cfl { suggested, .. }) => h = 0.95 * suggested,
                    Err(e) => panic!("{e}"),
                }
            }
            pass &= drift <= tol && steps > 0;
            worst.push(format!(
                "mass {scheme:?}/{flux:?} {drift:.1e} ({steps} steps)"
            ));
        }
    }
    report(1, "mass conservation", pass, &worst.join("; "));
    assert!(pass);
}

/// Ten seeded configurations from the expression library.
fn randomized_configs() -> Vec<(f64, usize, Radial, Radial)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let ms = [0.3, 0.5, 0.8];
    let ds = [1, 3];
    (0..10)
        .map(|i| {
            let m = ms[i % 3];
            let d = ds[(i / 3) % 2];
            let a: f64 = rng.gen_range(0.5..2.0);
            let v = match rng.gen_range(0..3) {
                0 => Radial::Quadratic { a },
                1 => Radial::Power {
                    a,
                    p: rng.gen_range(2.0..4.0),
                },
                _ => Radial::Sum(vec![
                    Radial::Quadratic { a },
                    Radial::CompactBump {
                        a: rng.gen_range(0.1..1.0),
                        r0: 0.5,
                    },
                ]),
            };
            let b: f64 = rng.gen_range(0.1..1.0);
            let w = match rng.gen_range(0..4) {
                0 => Radial::Zero,
                1 => Radial::Quadratic { a: b },
                2 => Radial::CompactBump {
                    a: b,
                    r0: rng.gen_range(0.3..1.0),
                },
                _ => Radial::Power { a: b, p: 2.5 },
            };
            (m, d, v, w)
        })
        .collect()
}

/// Finest of the grids 64, 128, 256.
fn energy_runs() -> Vec<(Problem, Trajectory)> {
    use rayon::prelude::*;
    randomized_configs()
        .into_par_iter()
        .map(|(m, d, v, w)| {
            let p = problem(m, d, 2.0, v, w, 256);
            let cfg = SolverConfig {
                dt: 5e-3,
                flux: FluxForm::Entropy,
                ..Default::default()
            };
            let traj = solve_density(&gaussian(&p, 0.3, 0.02), &p, &cfg, 0.05).unwrap();
            (p, traj)
        })
        .collect()
}

#[test]
fn criterion_02_energy_monotonicity() {
    let runs = energy_runs();
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for (_, traj) in &runs {
        for w in traj.diagnostics.windows(2) {
            let (a, b) = (w[0].energy.f, w[1].energy.f);
            worst = worst.max((b - a) / a.abs());
            pass &= b <= a + 1e-8 * a.abs();
        }
    }
    report(
        2,
        "energy monotonicity",
        pass,
        &format!(
            "{} configs, worst relative change {worst:.2e} (slack 1e-8)",
            runs.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_dissipation_identity() {
    let mut lines = Vec::new();
    let mut pass = true;
    for d in [1, 3] {
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for n in [256, 512, 1024] {
            let p = quadratic_problem(0.5, n);
            let p = problem(0.5, d, 0.5, p.potential.v.clone(), Radial::Zero, n);
            let cfg = SolverConfig {
                dt: 0.25 / n as f64,
                ..Default::default()
            };
            let traj = solve_density(&gaussian(&p, 0.3, 0.0), &p, &cfg, 0.5).unwrap();
            let first = &traj.diagnostics[0];
            let last = traj.diagnostics.last().unwrap();
            let drop = first.energy.f - last.energy.f;
            errs.push((drop - last.dissipation_integral).abs() / drop.abs());
            hs.push(p.grid.dv());
        }
        let orders = observed_orders(&hs, &errs);
        let ok = errs.iter().all(|&e| e <= 0.05)
            && errs.windows(2).all(|w| w[1] < w[0])
            && orders.iter().all(|&o| o >= 0.9);
        pass &= ok;
        lines.push(format!(
            "d={d} residuals {} orders {}",
            sci(&errs),
            fixed(&orders)
        ));
    }
    report(3, "dissipation identity", pass, &lines.join("; "));
    assert!(pass);
}

/// Steps two states under one frozen drift and tracks ∫(a-b)₊ at every step.
fn contraction_history(
    p: &Problem,
    cfg: &SolverConfig,
    a0: &DensityState,
    b0: &DensityState,
    steps: usize,
) -> Vec<f64> {
    let drift = EdgeDrift::from_potential(&p.potential.v, &p.grid);
    let st = FrozenDriftStepper::new(&p.grid, p.params.m, cfg).unwrap();
    let (mut a, mut b) = (a0.clone(), b0.clone());
    let mut gaps = vec![positive_part_gap(&a.rho, &b.rho, &p.grid)];
    for _ in 0..steps {
        let dt = match cfg.scheme {
            TimeScheme::Explicit => {
                0.9 * st
                    .explicit_limit(&a.rho, &drift)
                    .min(st.explicit_limit(&b.rho, &drift))
            }
            TimeScheme::Implicit => 0.01,
        };
        a = st.step(&a, &drift, dt).unwrap();
        b = st.step(&b, &drift, dt).unwrap();
        gaps.push(positive_part_gap(&a.rho, &b.rho, &p.grid));
    }
    gaps
}

#[test]
fn criterion_04_l1_contraction() {
    let n = 256;
    let p = problem(
        0.5,
        3,
        1.0,
        Radial::Sum(vec![
            Radial::Quadratic { a: 1.0 },
            Radial::CompactBump { a: 0.5, r0: 0.6 },
        ]),
        Radial::Zero,
        n,
    );
    let upper = gaussian(&p, 0.25, 0.1);
    let lower = DensityState::new(
        0.0,
        upper
            .rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * (0.5 + 0.4 * (i as f64 * 0.05).sin().abs()))
            .collect(),
    )
    .unwrap();
    let wide = gaussian(&p, 0.6, 0.1);
    // conserved mass bounds the rounding in a sum of n cells
    let floor = 64.0 * f64::EPSILON * 2.0 * p.params.mass0;
    let nonincreasing = |g: &[f64]| g.windows(2).all(|w| w[1] <= w[0] + floor);
    let rise = |g: &[f64]| {
        g.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut pass = true;
    let mut notes = Vec::new();
    for scheme in [TimeScheme::Explicit, TimeScheme::Implicit] {
        for flux in [FluxForm::Upwind, FluxForm::Entropy] {
            // the rounding floor of the residual, not the tolerance, ends each Newton solve
            let cfg = SolverConfig {
                scheme,
                flux,
                newton_tol: 1e-16,
                ..Default::default()
            };
            // implicit runs stop before the crossing pair merges to within the Newton floor
            let steps = if scheme == TimeScheme::Explicit {
                200
            } else {
                40
            };
            let below = contraction_history(&p, &cfg, &lower, &upper, steps);
            let above = contraction_history(&p, &cfg, &upper, &lower, steps);
            let crossing = contraction_history(&p, &cfg, &upper, &wide, steps);
            let exact = below.iter().all(|&g| g == 0.0);
            let ok = exact && nonincreasing(&above) && nonincreasing(&crossing);
            pass &= ok;
            notes.push(format!(
                "{scheme:?}/{flux:?} ordered gap stays 0: {exact}, reversed {:.3e}->{:.3e} (max rise {:.1e}), crossing {:.3e}->{:.3e} (max rise {:.1e})",
                above[0],
                above.last().unwrap(),
                rise(&above),
                crossing[0],
                crossing.last().unwrap(),
                rise(&crossing)
            ));
        }
    }
    let cfg = SolverConfig {
        dt: 0.01,
        ..Default::default()
    };
    let pz = problem(0.5, 3, 1.0, Radial::Zero, Radial::Zero, n);
    let ta = solve_density(&gaussian(&pz, 0.25, 0.1), &pz, &cfg, 0.1).unwrap();
    let tb = solve_density(&gaussian(&pz, 0.5, 0.1), &pz, &cfg, 0.1).unwrap();
    let recorded = nonincreasing(&l1_contraction_gap(&ta, &tb, &pz.grid).unwrap());
    pass &= recorded;
    notes.push(format!("recorded gaps nonincreasing {recorded}"));
    report(4, "L1 contraction", pass, &notes.join("; "));
    assert!(pass);
}

#[test]
fn criterion_05_uniform_steady_state() {
    let mut pass = true;
    let mut notes = Vec::new();
    for n in [256, 512] {
        for d in [1, 3] {
            let p = problem(0.5, d, 200.0, Radial::Zero, Radial::Zero, n);
            let cfg = SolverConfig {
                dt: 0.5,
                ..Default::default()
            };
            let traj = solve_density(&gaussian(&p, 0.3, 0.0), &p, &cfg, 0.0).unwrap();
            // explicit steps remove the residual the implicit stopping rule leaves behind
            let ex = SolverConfig {
                scheme: TimeScheme::Explicit,
                ..Default::default()
            };
            let st = FrozenDriftStepper::new(&p.grid, p.params.m, &ex).unwrap();
            let zero = EdgeDrift::zero(n);
            let mut state = traj.last().clone();
            for _ in 0..20_000 {
                let dt = 0.8 * st.explicit_limit(&state.rho, &zero);
                state = st.step(&state, &zero, dt).unwrap();
            }
            let c = p.params.mass0 / p.grid.r_v();
            // L¹ projection error of the constant: cell averages by 8-point Gauss-Legendre
            let quad = GaussLegendre::new(8.try_into().unwrap());
            let e = p.grid.v_edges();
            let proj: f64 = (0..n)
                .map(|i| {
                    (quad.integrate(e[i], e[i + 1], |_| c) / p.grid.dv() - c).abs() * p.grid.dv()
                })
                .sum();
            // c is only known up to the summation error of the mass
            let bound = 2.0 * proj.max(n as f64 * f64::EPSILON * p.params.mass0);
            let implicit_err = l1(&traj.last().rho, &vec![c; n], p.grid.dv());
            let err = l1(&state.rho, &vec![c; n], p.grid.dv());
            pass &= err <= bound;
            notes.push(format!(
                "n={n} d={d} err {err:.2e} <= {bound:.2e} (implicit stop {implicit_err:.1e})"
            ));
        }
    }
    report(5, "uniform steady state", pass, &notes.join("; "));
    assert!(pass);
}

#[test]
fn criterion_06_stationary_formula() {
    let h = fitted_h();
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for n in [128, 256, 512] {
        let p = quadratic_problem(20.0, n);
        let cfg = SolverConfig {
            dt: 0.05,
            flux: FluxForm::Entropy,
            ..Default::default()
        };
        let traj = solve_density(&gaussian(&p, 0.3, 0.0), &p, &cfg, 0.0).unwrap();
        let r = p.grid.r_edges();
        let exact: Vec<f64> = (0..n)
            .map(|i| {
                (profile_antiderivative(h, r[i + 1]) - profile_antiderivative(h, r[i]))
                    / (r[i + 1] - r[i])
            })
            .collect();
        errs.push(l1(&traj.last().rho, &exact, p.grid.dv()));
        hs.push(p.grid.dv());
    }
    let orders = observed_orders(&hs, &errs);
    let pass = orders.iter().all(|&o| o >= 1.0);
    report(
        6,
        "stationary formula",
        pass,
        &format!(
            "h = {h:.6}, L1 errors {}, orders {}",
            sci(&errs),
            fixed(&orders)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_cross_solver_consistency() {
    let mut gaps = Vec::new();
    let mut hs = Vec::new();
    for n in [128, 256, 512] {
        let p = quadratic_problem(0.5, n);
        let dt = 2.56 / n as f64 / 100.0;
        let rho0 = gaussian(&p, 0.3, 0.0);
        let traj = solve_density(
            &rho0,
            &p,
            &SolverConfig {
                dt,
                track_dissipation: false,
                ..Default::default()
            },
            0.0,
        )
        .unwrap();
        let run = solve_mass(
            &rho0.to_mass_profile(&p.grid),
            &p,
            &MassSolverConfig {
                dt,
                ..Default::default()
            },
            0.0,
        )
        .unwrap();
        let md: MassProfile = traj.last().to_mass_profile(&p.grid);
        let mm = run.profiles.last().unwrap();
        gaps.push(
            md.m.iter()
                .zip(&mm.m)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        hs.push(p.grid.dv());
    }
    let orders = observed_orders(&hs, &gaps);
    let c = gaps.iter().zip(&hs).map(|(g, h)| g / h).fold(0.0, f64::max);
    let pass = orders.iter().all(|&o| o >= 1.0);
    report(
        7,
        "cross-solver consistency",
        pass,
        &format!(
            "sup gaps {}, C = {c:.3e}, orders {}",
            sci(&gaps),
            fixed(&orders)
        ),
    );
    assert!(pass);
}

/// The concentrating family: V = 2|x|² + c|x| with ∫((1-m)/m V₀)^{-1/(1-m)} = 1/2, W = |x|²/2, d = 3.
const CONC_M: f64 = 0.3;

fn concentration_problem(n: usize, t: f64) -> (Problem, f64) {
    let c = cone_slope_for_mass(0.5, CONC_M, 3, 1.0);
    let (v, w) = concentration_potentials(c);
    (problem(CONC_M, 3, t, v, w, n), c)
}

/// ∫_{B_1} ((1-m)/m c|x|)^{-1/(1-m)} dx by Gauss-Legendre in r on a graded split of [0, 1].
fn cone_mass_oracle(c: f64, m: f64) -> f64 {
    let k = (1.0 - m) / m;
    let q = 1.0 / (1.0 - m);
    let quad = GaussLegendre::new(40.try_into().unwrap());
    let area = 4.0 * std::f64::consts::PI;
    let mut total = 0.0;
    let mut hi = 1.0;
    for _ in 0..60 {
        let lo = hi * 0.5;
        total += quad.integrate(lo, hi, |r| area * r * r * (k * c * r).powf(-q));
        hi = lo;
    }
    total
}

#[test]
fn criterion_08_concentration_reproduction() {
    let (p, c) = concentration_problem(1024, 20.0);
    let oracle = cone_mass_oracle(c, CONC_M);
    let state = solve_stationary(&p, &StationaryConfig::default()).unwrap();
    let mcfg = MassSolverConfig {
        dt: 0.05,
        scheme: TimeScheme::Implicit,
        flux: FluxForm::Entropy,
        ..Default::default()
    };
    let m0 = DensityState::new(0.0, p.uniform_density())
        .unwrap()
        .to_mass_profile(&p.grid);
    let run = solve_mass(&m0, &p, &mcfg, 1.0).unwrap();
    let det = detect_concentration(&run, &p.grid, &mcfg);
    let pass = (oracle - 0.5).abs() < 1e-6
        && state.alpha >= 0.5 - 1e-3
        && det.is_conclusive()
        && (det.alpha - state.alpha).abs() <= 5e-2;
    report(
        8,
        "concentration reproduction",
        pass,
        &format!(
            "c = {c:.6}, oracle mass {oracle:.8}, stationary alpha {:.4}, long-time alpha {:.4} ({:?})",
            state.alpha, det.alpha, det.status
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_pointwise_bound() {
    let mut pass = true;
    let mut notes = Vec::new();
    for n in [256, 1024] {
        let (p, c) = concentration_problem(n, 1.0);
        let state = solve_stationary(&p, &StationaryConfig::default()).unwrap();
        let k = (1.0 - CONC_M) / CONC_M;
        let q = 1.0 / (1.0 - CONC_M);
        let mut worst = f64::NEG_INFINITY;
        for (rho, r) in state.rho_hat.iter().zip(p.grid.r_centers()) {
            let bound = (k * c * r).powf(-q);
            worst = worst.max(rho / bound);
            pass &= *rho <= bound;
        }
        notes.push(format!("n={n} max rho/bound {worst:.6}"));
    }
    report(9, "pointwise bound", pass, &notes.join("; "));
    assert!(pass);
}

#[test]
fn criterion_10_moment_bounds() {
    let runs = energy_runs();
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for (p, traj) in &runs {
        let r = moment_bound_check(traj, p);
        worst = worst.min(r.m2_margin.min(r.mp_margin));
        pass &= r.holds();
    }
    report(
        10,
        "moment bounds",
        pass,
        &format!(
            "{} configs, smallest relative margin {worst:.3e}",
            runs.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_w11_equicontinuity() {
    let mut pass = true;
    let mut notes = Vec::new();
    for d in [1, 3] {
        for n in [256, 512] {
            let p = problem(0.5, d, 2.0, Radial::Quadratic { a: 1.0 }, Radial::Zero, n);
            let cfg = SolverConfig {
                dt: 0.01,
                flux: FluxForm::Entropy,
                ..Default::default()
            };
            let traj = solve_density(&gaussian(&p, 0.3, 0.0), &p, &cfg, 0.1).unwrap();
            let f: Vec<f64> = traj.diagnostics.iter().map(|r| r.energy.f).collect();
            // quasi-stationary window: the second half of the run, pairs whose energy gap is above rounding
            let start = traj.len() / 2;
            let mut checked = 0;
            let (mut worst, mut worst_x) = (0.0f64, 0.0f64);
            for i in start..traj.len() {
                for j in i + 1..traj.len() {
                    if f[i] - f[j] <= 64.0 * f64::EPSILON * f[i].abs() {
                        continue;
                    }
                    let c = w11_equicontinuity(&traj, &p, i, j);
                    checked += 1;
                    worst = worst.max(c.surrogate / c.bound);
                    worst_x = worst_x.max(c.radial_distance / c.bound);
                    pass &= c.holds;
                }
            }
            pass &= checked > 0;
            notes.push(format!("d={d} n={n} {checked} pairs, max surrogate/bound {worst:.3} (x-metric {worst_x:.3})"));
        }
    }
    report(11, "W-1,1 equicontinuity", pass, &notes.join("; "));
    assert!(pass);
}

#[test]
fn criterion_12_viscosity_probe() {
    let mut worst = Vec::new();
    for n in [64, 128, 256] {
        let p = quadratic_problem(0.5, n);
        let cfg = MassSolverConfig::default();
        let m0 = gaussian(&p, 0.3, 0.0).to_mass_profile(&p.grid);
        let run = solve_mass(&m0, &p, &cfg, 0.25 * p.grid.dv()).unwrap();
        let r = check_viscosity_inequalities(&run.profiles, &p, 4000, cfg.slope_floor, 7).unwrap();
        worst.push(r.worst_violation);
    }
    let pass = worst.windows(2).all(|w| w[1] < w[0]);
    report(
        12,
        "viscosity inequalities",
        pass,
        &format!("worst violations {}", sci(&worst)),
    );
    assert!(pass);
}
