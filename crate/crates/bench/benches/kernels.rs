use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gausskern::eigensolver::{coulomb, initial_guess, invit_step, InverseIterationConfig};
use gausskern::expsum::{build_exp_sum, ExpSumParams, Form};
use gausskern::gaussalg::{fourier, product, GaussFactor, Precision};
use gausskern::operators::{apply_t_tilde, TTildeOptions};
use gausskern::random::TermGenerator;
use gausskern::solver::{neumann_solve, SolveOptions};
use gausskern_bench::*;

fn algebra(c: &mut Criterion) {
    let mut g = TermGenerator::new(1);
    let t = g.term3();
    let f = GaussFactor::new(1.0, g.center(3), Precision::dense(g.spd(3)));
    c.bench_function("product", |b| b.iter(|| product(black_box(&t), black_box(&f)).unwrap()));
    c.bench_function("fourier", |b| b.iter(|| fourier(black_box(&t)).unwrap()));
    let e = expansion(2, 64);
    c.bench_function("h1_norm_64_terms", |b| b.iter(|| black_box(&e).h1_norm().unwrap()));
}

fn expsum(c: &mut Criterion) {
    let p = ExpSumParams::new(1.0, 0.25, 1e-3, 1e3, 1e-17);
    c.bench_function("build_exp_sum", |b| b.iter(|| build_exp_sum(black_box(&p), Form::ExponentialInR).unwrap()));
}

fn operators(c: &mut Criterion) {
    let sys = hydrogen();
    let cfg = operator(1e-8, 6);
    let u = unit_gaussian();
    c.bench_function("t_tilde_k6", |b| b.iter(|| apply_t_tilde(black_box(&u), &cfg, &sys, TTildeOptions::default()).unwrap()));
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    group.sample_size(10);
    let sys = hydrogen();
    let cfg = operator(1e-8, 8);
    let f = unit_gaussian();
    let opts = SolveOptions { compute_residual: false, allow_inadmissible: true, ..Default::default() };
    group.bench_function("neumann_solve", |b| b.iter(|| neumann_solve(&f, &cfg, &sys, 1e-2, 1.0, &opts).unwrap()));
    let he = gausskern::operators::MolecularSystem::atom(1, 2.0).unwrap();
    let icfg = InverseIterationConfig::default();
    let pot = coulomb(&he, &icfg).unwrap();
    let u0 = initial_guess(&he, 1.0).unwrap();
    group.bench_function("projected_step", |b| b.iter(|| invit_step(&u0, &pot, &icfg).unwrap()));
    group.finish();
}

criterion_group!(benches, algebra, expsum, operators, solvers);
criterion_main!(benches);
