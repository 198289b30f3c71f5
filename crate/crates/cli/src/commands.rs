use crate::config::RunConfig;
use crate::{CliError, SizeArg};
use gausskern::eigensolver::{coulomb, initial_guess, preconditioner_accuracy, run_inverse_iteration, Variant};
use gausskern::expsum::{build_exp_sum, error_bound, log_grid, ExpSumParams, Form};
use gausskern::gaussalg::io::to_json_lines;
use gausskern::operators::{admissible_alpha, contraction_constants, select_gamma};
use gausskern::oracle::{validate as run_suite, Suite, SuiteSize};
use gausskern::solver::{neumann_solve, SolveOptions};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

fn io_err(p: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", p.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Compute(e.to_string())),
            _ => Ok(()),
        },
    }
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Compute(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = flag.or_else(|| cfg.out.clone()).ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out`".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

#[derive(Serialize)]
struct TableRow {
    r: f64,
    exact: f64,
    approx: f64,
    rel_error: f64,
}

pub fn expsum_table(beta: f64, h: f64, rmin: f64, rmax: f64, grid: usize, tail_tol: f64, out: Option<&Path>) -> Result<(), CliError> {
    if grid < 2 {
        return Err(CliError::Usage(format!("--grid must be at least 2, got {grid}")));
    }
    let sum = build_exp_sum(&ExpSumParams::new(beta, h, rmin, rmax, tail_tol), Form::ExponentialInR)?;
    let bound = error_bound(beta, h)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in log_grid(rmin, rmax, grid) {
        let row = TableRow { r, exact: sum.exact(r), approx: sum.eval(r), rel_error: sum.rel_error(r) };
        w.serialize(row).map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| CliError::Compute(e.to_string()))?).expect("csv is utf-8");
    let head = format!("# beta={beta} h={h} k_lo={} k_hi={} error_bound={bound:e}\n", sum.k_lo, sum.k_hi);
    emit(&(head + &body), out)
}

#[derive(Serialize)]
struct ConstantsReport {
    seed: u64,
    n_electrons: usize,
    total_charge: f64,
    theta: f64,
    kappa: f64,
    kappa_star: f64,
    gamma: f64,
    gamma_selected: bool,
    alpha: f64,
    q: f64,
    operator_bound: f64,
    m: usize,
    contractive: bool,
    k_lo: i64,
    k_hi: i64,
    order: f64,
    alpha_limit_bound: f64,
    admissible: bool,
}

pub fn constants(cfg: &RunConfig) -> Result<(), CliError> {
    let c = &cfg.operator;
    let est = contraction_constants(c, &cfg.system);
    let limit = admissible_alpha(c.vartheta, c.h, est.m, cfg.solver.order);
    let rep = ConstantsReport {
        seed: cfg.seed,
        n_electrons: cfg.system.n_electrons,
        total_charge: cfg.system.total_charge(),
        theta: est.theta,
        kappa: est.kappa,
        kappa_star: est.kappa_star,
        gamma: c.gamma,
        gamma_selected: cfg.gamma_selected,
        alpha: est.alpha,
        q: est.q,
        operator_bound: est.operator_bound,
        m: est.m,
        contractive: est.contractive,
        k_lo: c.k_lo,
        k_hi: c.k_hi,
        order: cfg.solver.order,
        alpha_limit_bound: limit,
        admissible: est.alpha <= limit * (1.0 + 1e-12),
    };
    emit(&json(&rep)?, None)
}

pub fn solve(cfg: &RunConfig, epsilon: Option<f64>, order: Option<f64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let eps = epsilon.unwrap_or(cfg.solver.epsilon);
    let r = order.unwrap_or(cfg.solver.order);
    let mut op = cfg.operator;
    if cfg.gamma_selected && r != cfg.solver.order {
        op = op.with_gamma(select_gamma(&op, &cfg.system, r)?.gamma)?;
    }
    let dir = out_dir(out, cfg)?;
    let opts = SolveOptions {
        allow_inadmissible: cfg.solver.allow_inadmissible,
        compute_residual: cfg.solver.residual,
        reference_widen: cfg.solver.reference_widen,
        ..SolveOptions::default()
    };
    let (u, report) = neumann_solve(&cfg.solver.f, &op, &cfg.system, eps, r, &opts)?;
    let p = dir.join("solution.jsonl");
    std::fs::write(&p, to_json_lines(&u)?).map_err(|e| io_err(&p, e))?;
    let p = dir.join("report.json");
    std::fs::write(&p, json(&report)?).map_err(|e| io_err(&p, e))?;
    eprintln!(
        "{} terms (bound {:.4e}), residual {}",
        report.term_count,
        report.count_bound,
        report.residual_norm.map_or_else(|| report.residual_method.clone(), |v| format!("{v:.4e}"))
    );
    Ok(())
}

#[derive(Serialize)]
struct ConvergenceRow {
    iter: usize,
    rayleigh: f64,
    residual_norm: Option<f64>,
    terms: usize,
}

#[derive(Serialize)]
struct EigenOutput<'a> {
    seed: u64,
    eigenvalue: f64,
    mu: f64,
    preconditioner_accuracy_bound: f64,
    history: &'a gausskern::eigensolver::IterationHistory,
}

pub fn eigen(mut cfg: RunConfig, variant: Option<&str>, max_iter: Option<usize>, out: Option<PathBuf>) -> Result<(), CliError> {
    match variant {
        Some("residual") => cfg.eigen.variant = Variant::Residual,
        Some("potential") => cfg.eigen.variant = Variant::Potential,
        Some(v) => return Err(CliError::Usage(format!("unknown variant {v:?}"))),
        None => {}
    }
    if let Some(n) = max_iter {
        cfg.eigen.max_iter = n;
    }
    let theta = cfg.system.theta();
    cfg.eigen.validate(Some(theta))?;
    let dir = out_dir(out, &cfg)?;
    let pot = coulomb(&cfg.system, &cfg.eigen)?;
    let u0 = initial_guess(&cfg.system, cfg.initial_precision)?;
    let (lambda, u, hist) = run_inverse_iteration(&pot, &u0, &cfg.eigen)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(ConvergenceRow { iter: 0, rayleigh: hist.initial_rayleigh, residual_norm: None, terms: u0.len() })
        .map_err(|e| CliError::Compute(e.to_string()))?;
    for r in &hist.records {
        w.serialize(ConvergenceRow { iter: r.iteration, rayleigh: r.rayleigh, residual_norm: r.residual_norm, terms: r.term_count })
            .map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let csv = w.into_inner().map_err(|e| CliError::Compute(e.to_string()))?;
    let p = dir.join("convergence.csv");
    std::fs::write(&p, csv).map_err(|e| io_err(&p, e))?;
    let p = dir.join("eigenfunction.jsonl");
    std::fs::write(&p, to_json_lines(&u)?).map_err(|e| io_err(&p, e))?;
    let report = EigenOutput {
        seed: cfg.seed,
        eigenvalue: lambda,
        mu: cfg.eigen.mu,
        preconditioner_accuracy_bound: preconditioner_accuracy(theta, cfg.eigen.mu),
        history: &hist,
    };
    let p = dir.join("history.json");
    std::fs::write(&p, json(&report)?).map_err(|e| io_err(&p, e))?;
    eprintln!("eigenvalue {lambda:.10} after {} steps, {} terms ({})", hist.records.len(), u.len(), hist.stop_reason);
    Ok(())
}

pub fn validate(suite: &str, seed: u64, size: SizeArg, out: Option<&Path>) -> Result<(), CliError> {
    let suite: Suite = suite.parse()?;
    let size = match size {
        SizeArg::Smoke => SuiteSize::smoke(),
        SizeArg::Full => SuiteSize::default(),
    };
    let report = run_suite(suite, seed, &size)?;
    emit(&json(&report)?, out)?;
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::Compute(format!("failed checks: {}", failed.join(", "))))
    }
}
