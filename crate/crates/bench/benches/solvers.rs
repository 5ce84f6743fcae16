use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fdagg::density_solver::{EdgeDrift, FrozenDriftStepper, SolverConfig, TimeScheme};
use fdagg::mass_solver::{MassSolverConfig, MassStepper};
use fdagg::model::{radial_convolution, DensityState, ModelParams, PotentialSpec, Problem, Radial};
use fdagg::stationary_solver::{solve_stationary, StationaryConfig};

fn problem(n: usize) -> Problem {
    let params = ModelParams::new(0.5, 3, 1.0, 1.0, 1.0).unwrap();
    let pot = PotentialSpec::new(
        Radial::Quadratic { a: 1.0 },
        Radial::CompactBump { a: 0.5, r0: 0.5 },
    );
    Problem::new(params, pot, n).unwrap()
}

fn initial(p: &Problem) -> DensityState {
    let raw: Vec<f64> = p
        .grid
        .r_centers()
        .iter()
        .map(|r| (-r * r / 0.18).exp() + 0.05)
        .collect();
    let s = p.grid.integrate(&raw);
    DensityState::new(0.0, raw.iter().map(|x| x / s).collect()).unwrap()
}

fn density_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("density_step");
    for n in [256, 1024] {
        let p = problem(n);
        let rho = initial(&p);
        for scheme in [TimeScheme::Explicit, TimeScheme::Implicit] {
            let cfg = SolverConfig {
                scheme,
                ..Default::default()
            };
            let st = FrozenDriftStepper::new(&p.grid, p.params.m, &cfg).unwrap();
            let drift = EdgeDrift::from_density(&rho.rho, &p);
            let dt = match scheme {
                TimeScheme::Explicit => 0.9 * st.explicit_limit(&rho.rho, &drift),
                TimeScheme::Implicit => 1e-3,
            };
            g.bench_with_input(BenchmarkId::new(format!("{scheme:?}"), n), &n, |b, _| {
                b.iter(|| st.step(black_box(&rho), &drift, dt).unwrap())
            });
        }
    }
    g.finish();
}

fn mass_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("mass_step");
    for n in [256, 1024] {
        let p = problem(n);
        let m = initial(&p).to_mass_profile(&p.grid);
        let cfg = MassSolverConfig {
            scheme: TimeScheme::Implicit,
            dt: 1e-3,
            ..Default::default()
        };
        let st = MassStepper::new(&p, &cfg).unwrap();
        g.bench_with_input(BenchmarkId::new("implicit", n), &n, |b, _| {
            b.iter(|| st.step(black_box(&m), 1e-3).unwrap())
        });
    }
    g.finish();
}

fn convolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("convolution");
    for n in [256, 1024] {
        let p = problem(n);
        let rho = initial(&p);
        g.bench_with_input(BenchmarkId::new("compact_bump", n), &n, |b, _| {
            b.iter(|| radial_convolution(black_box(&rho.rho), &p.potential.w, &p.grid).unwrap())
        });
    }
    g.finish();
}

fn stationary(c: &mut Criterion) {
    let p = problem(512);
    c.bench_function("stationary_solve/512", |b| {
        b.iter(|| solve_stationary(black_box(&p), &StationaryConfig::default()).unwrap())
    });
}

criterion_group!(benches, density_step, mass_step, convolution, stationary);
criterion_main!(benches);
