use std::path::{Path, PathBuf};

use boundopt::geometry::{project, projected_gradient_norm, residual};
use boundopt::nmf::{build_saddle, gen_synthetic, initial_point, NmfProblem};
use boundopt::{BoundSpec, Objective, SolverReport};
use clap::Args;
use serde::Serialize;
use toml::Value;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{self, ReportSummary};
use crate::runs::{ProblemSpec, Scenario, SolverKind};

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory.
    #[arg(long, global = true, env = "BOUNDOPT_OUT_DIR", default_value = "boundopt-out")]
    pub out: PathBuf,
    /// TOML file with `[solver]`, `[pgrad]` and `[two_metric]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set solver.eps_g=1e-5` or
    /// `--set pgrad.tol=1e-3`. Bare keys refer to `[solver]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct NmfBenchArgs {
    /// Scenarios as `m,n,r`, e.g. `150,100,15 300,200,15`.
    #[arg(long, num_args = 1.., default_values = ["150,100,15"])]
    pub scenarios: Vec<Scenario>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["pncg", "pgrad"])]
    pub solvers: Vec<SolverKind>,
    /// Data seed; trial `t` starts from factors drawn with seed `seed + 1 + t`.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SaddleArgs {
    #[arg(long, default_value_t = 300)]
    pub m: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub r: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Projected-gradient tolerance of the rank-1 solve.
    #[arg(long, default_value_t = 1e-9)]
    pub rank1_tol: f64,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// `nmf:M,N,R,SEED`, `quadratic:N,KIND,SEED` (KIND is convex,
    /// nonconvex or convex-box) or `csv:PATH` for an NMF data matrix.
    #[arg(long)]
    pub problem: ProblemSpec,
    #[arg(long, value_enum, default_value = "pncg")]
    pub solver: SolverKind,
    /// Factorization rank for `csv:` problems.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Seed of the NMF starting factors.
    #[arg(long)]
    pub init_seed: Option<u64>,
    /// Wall-clock limit in seconds, overriding the configuration.
    #[arg(long)]
    pub time_limit: Option<f64>,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    command: &'a str,
    args: Vec<String>,
    config: &'a RunConfig,
}

fn write_snapshot(dir: &Path, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
    let snap = Snapshot {
        command,
        args: std::env::args().skip(1).collect(),
        config: cfg,
    };
    output::write_toml(&dir.join("run.toml"), &snap)
}

/// `(residual, projnorm)` at the projected starting point.
fn start_metrics<O: Objective + ?Sized>(oracle: &O, x0: &[f64], bounds: &BoundSpec, eps_r: f64) -> (f64, f64) {
    let x = project(x0, bounds);
    let mut g = vec![0.0; x.len()];
    oracle.gradient(&x, &mut g);
    (residual(&x, &g, bounds, eps_r), projected_gradient_norm(&x, &g, bounds))
}

fn eps_r(kind: SolverKind, cfg: &RunConfig) -> f64 {
    match kind {
        SolverKind::Pgrad => cfg.pgrad.eps_r,
        _ => cfg.solver.eps_r,
    }
}

/// Writes trace, final iterate and report summary under `dir/prefix*`.
fn dump_run<O: Objective + ?Sized>(
    dir: &Path,
    prefix: &str,
    kind: SolverKind,
    report: &SolverReport,
    oracle: &O,
    x0: &[f64],
    bounds: &BoundSpec,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let start = start_metrics(oracle, x0, bounds, eps_r(kind, cfg));
    output::write_trace(&dir.join(format!("{prefix}trace.csv")), report, start)?;
    output::write_vector(&dir.join(format!("{prefix}x.csv")), &report.x_final)?;
    output::write_toml(&dir.join(format!("{prefix}report.toml")), &ReportSummary::new(kind.name(), report))
}

#[derive(Serialize)]
struct DataMeta {
    m: usize,
    n: usize,
    r: usize,
    seed: u64,
    zero_fraction_w: f64,
    zero_fraction_y: f64,
}

pub fn gen_data(args: &GenDataArgs, common: &Common) -> Result<(), CliError> {
    let data = gen_synthetic(args.m, args.n, args.r, args.seed)?;
    output::create_dir(&common.out)?;
    output::write_matrix(&common.out.join("V.csv"), &data.problem.v)?;
    output::write_matrix(&common.out.join("W.csv"), &data.w_true)?;
    output::write_matrix(&common.out.join("Y.csv"), &data.y_true)?;
    let meta = DataMeta {
        m: args.m,
        n: args.n,
        r: args.r,
        seed: args.seed,
        zero_fraction_w: data.zero_fraction_w,
        zero_fraction_y: data.zero_fraction_y,
    };
    output::write_toml(&common.out.join("meta.toml"), &meta)?;
    println!(
        "wrote {} ({}x{}, rank {}); zero fractions W {:.3}, Y {:.3}",
        common.out.display(),
        args.m,
        args.n,
        args.r,
        meta.zero_fraction_w,
        meta.zero_fraction_y
    );
    Ok(())
}

#[derive(Serialize, Default)]
struct SummaryRow {
    scenario: String,
    trial: String,
    algorithm: &'static str,
    status: String,
    outer_iters: Option<f64>,
    time_s: Option<f64>,
    f_star: Option<f64>,
    residual: Option<f64>,
    projnorm: Option<f64>,
}

fn mean_row(scenario: &str, algorithm: &'static str, runs: &[&SolverReport]) -> SummaryRow {
    let k = runs.len() as f64;
    let mean = |f: &dyn Fn(&SolverReport) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / k;
    SummaryRow {
        scenario: scenario.to_string(),
        trial: "mean".into(),
        algorithm,
        status: format!("mean_of_{}", runs.len()),
        outer_iters: Some(mean(&|r| r.outer_iters as f64)),
        time_s: Some(mean(&|r| r.elapsed)),
        f_star: Some(mean(&|r| r.f_final)),
        residual: Some(mean(&|r| r.residual)),
        projnorm: Some(mean(&|r| r.projnorm)),
    }
}

/// Returns the number of runs that ended in a solver error.
pub fn nmf_bench(args: &NmfBenchArgs, common: &Common) -> Result<usize, CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let cfg = RunConfig::load(
        &[("solver.meo_enabled", Value::Boolean(false))],
        common.config.as_deref(),
        &common.sets,
    )?;
    output::create_dir(&common.out)?;
    write_snapshot(&common.out, "nmf-bench", &cfg)?;

    let mut rows = Vec::new();
    let mut failures = 0;
    for sc in &args.scenarios {
        let label = sc.label();
        let dir = common.out.join(&label);
        output::create_dir(&dir)?;
        let data = gen_synthetic(sc.m, sc.n, sc.r, args.seed)?;
        let problem = &data.problem;
        let bounds = problem.bounds();
        output::write_matrix(&dir.join("V.csv"), &problem.v)?;
        let mut done: Vec<(SolverKind, SolverReport)> = Vec::new();
        for t in 0..args.trials {
            let x0 = initial_point(problem, args.seed + 1 + t as u64);
            for &kind in &args.solvers {
                let mut row = SummaryRow {
                    scenario: label.clone(),
                    trial: t.to_string(),
                    algorithm: kind.name(),
                    ..SummaryRow::default()
                };
                match kind.run(problem, &x0, &bounds, &cfg) {
                    Ok(rep) => {
                        let prefix = format!("trial{t}_{}_", kind.name());
                        dump_run(&dir, &prefix, kind, &rep, problem, &x0, &bounds, &cfg)?;
                        row.status = rep.status.as_str().into();
                        row.outer_iters = Some(rep.outer_iters as f64);
                        row.time_s = Some(rep.elapsed);
                        row.f_star = Some(rep.f_final);
                        row.residual = Some(rep.residual);
                        row.projnorm = Some(rep.projnorm);
                        println!(
                            "{label} trial {t} {:>10}: {} iters, F {:.6}, residual {:.2e}, projnorm {:.2e}, {:.2}s ({})",
                            kind.name(),
                            rep.outer_iters,
                            rep.f_final,
                            rep.residual,
                            rep.projnorm,
                            rep.elapsed,
                            rep.status.as_str()
                        );
                        done.push((kind, rep));
                    }
                    Err(e) => {
                        eprintln!("{label} trial {t} {}: {e}", kind.name());
                        row.status = format!("error: {e}");
                        failures += 1;
                    }
                }
                rows.push(row);
            }
        }
        for &kind in &args.solvers {
            let runs: Vec<&SolverReport> = done.iter().filter(|(k, _)| *k == kind).map(|(_, r)| r).collect();
            if !runs.is_empty() {
                rows.push(mean_row(&label, kind.name(), &runs));
            }
        }
    }
    output::write_rows(&common.out.join("summary.csv"), &rows)?;
    Ok(failures)
}

#[derive(Serialize)]
struct SaddleSummary<'a> {
    m: usize,
    n: usize,
    r: usize,
    seed: u64,
    f_saddle: f64,
    saddle_projnorm: f64,
    rank1_projnorm: f64,
    rank1_sweeps: usize,
    pncg: ReportSummary<'a>,
    pgrad: ReportSummary<'a>,
}

pub fn saddle(args: &SaddleArgs, common: &Common) -> Result<(), CliError> {
    let cfg = RunConfig::load(
        &[("solver.meo_enabled", Value::Boolean(true))],
        common.config.as_deref(),
        &common.sets,
    )?;
    let data = gen_synthetic(args.m, args.n, args.r, args.seed)?;
    let v = data.problem.v;
    let point = build_saddle(&v, args.r, args.seed + 1, args.rank1_tol)?;
    let problem = NmfProblem::new(v, args.r)?;
    let bounds = problem.bounds();
    let f0 = problem.value(&point.x0);
    output::create_dir(&common.out)?;
    write_snapshot(&common.out, "saddle", &cfg)?;

    let p = SolverKind::Pncg.run(&problem, &point.x0, &bounds, &cfg)?;
    dump_run(&common.out, "pncg_", SolverKind::Pncg, &p, &problem, &point.x0, &bounds, &cfg)?;
    let g = SolverKind::Pgrad.run(&problem, &point.x0, &bounds, &cfg)?;
    dump_run(&common.out, "pgrad_", SolverKind::Pgrad, &g, &problem, &point.x0, &bounds, &cfg)?;

    let summary = SaddleSummary {
        m: args.m,
        n: args.n,
        r: args.r,
        seed: args.seed,
        f_saddle: f0,
        saddle_projnorm: point.saddle_projnorm,
        rank1_projnorm: point.rank1_projnorm,
        rank1_sweeps: point.rank1_iters,
        pncg: ReportSummary::new("pncg", &p),
        pgrad: ReportSummary::new("pgrad", &g),
    };
    output::write_toml(&common.out.join("saddle.toml"), &summary)?;
    println!("saddle F {f0:.6} (projnorm {:.2e})", point.saddle_projnorm);
    for (name, r, s) in [("pncg", &p, &summary.pncg), ("pgrad", &g, &summary.pgrad)] {
        println!(
            "{name:>6}: {} iters, F {:.6}, {} MEO steps (first at {}), {:.2}s ({})",
            r.outer_iters,
            r.f_final,
            r.step_counts.meo_nc,
            s.first_meo_step.map_or("-".to_string(), |k| k.to_string()),
            r.elapsed,
            r.status.as_str()
        );
    }
    Ok(())
}

pub fn solve(args: &SolveArgs, common: &Common) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&[], common.config.as_deref(), &common.sets)?;
    if let Some(t) = args.time_limit {
        if !(t >= 0.0) {
            return Err(CliError::Usage(format!("--time-limit must be nonnegative, got {t}")));
        }
        cfg.set_time_limit(t);
    }
    let inst = args.problem.instantiate(args.rank, args.init_seed)?;
    output::create_dir(&common.out)?;
    write_snapshot(&common.out, "solve", &cfg)?;
    let rep = args.solver.run(&*inst.oracle, &inst.x0, &inst.bounds, &cfg)?;
    dump_run(&common.out, "", args.solver, &rep, &*inst.oracle, &inst.x0, &inst.bounds, &cfg)?;
    println!(
        "{}: {} after {} iterations; F {:.10e}, residual {:.3e}, projnorm {:.3e}, {:.3}s",
        args.solver.name(),
        rep.status.as_str(),
        rep.outer_iters,
        rep.f_final,
        rep.residual,
        rep.projnorm,
        rep.elapsed
    );
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    if rep.status.is_converged() {
        Ok(())
    } else {
        Err(CliError::NotConverged {
            solver: args.solver.name(),
            status: rep.status.as_str(),
        })
    }
}
