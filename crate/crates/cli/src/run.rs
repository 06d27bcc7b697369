use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use facrank::data_bench::*;
use facrank::lambda_path::{auto_lambda, Family, PathOptions, PathSetup, PathState, LAMBDA_FLOOR};
use facrank::obskernel::{dense_svd, factorize_balanced, ObservationSet};
use facrank::report::*;
use facrank::selftest::{self, Fault, SelftestOptions};
use facrank::solver::{solve, solve_from, SolveReport, SolverConfig};
use rayon::prelude::*;
use serde_json::json;

use crate::{FactorizeArgs, PathArgs, RealArgs, RunArgs, SelftestArgs, SolverArgs, SynthArgs, SynthData};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Value(f64),
    Beta(Family, usize),
    Auto,
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(LambdaArg::Auto);
        }
        if let Some((head, r)) = s.split_once(':') {
            let family = match head {
                "beta1" => Family::Relaxed,
                "beta2" => Family::Hard,
                _ => return Err(format!("unknown threshold {head:?}, expected beta1 or beta2")),
            };
            let r = r.parse().map_err(|_| format!("bad rank in {s:?}"))?;
            return Ok(LambdaArg::Beta(family, r));
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(LambdaArg::Value(v)),
            _ => Err(format!("expected a positive number, beta1:r, beta2:r or auto, got {s:?}")),
        }
    }
}

impl std::fmt::Display for LambdaArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaArg::Value(v) => write!(f, "{v}"),
            LambdaArg::Beta(Family::Relaxed, r) => write!(f, "beta1:{r}"),
            LambdaArg::Beta(Family::Hard, r) => write!(f, "beta2:{r}"),
            LambdaArg::Auto => write!(f, "auto"),
        }
    }
}

/// Defaults that differ between synthetic and rating data.
#[derive(Clone, Copy)]
struct Defaults {
    tol: f64,
    path: PathOptions,
    n_lambda: usize,
}

const SYNTHETIC: Defaults = Defaults { tol: 1e-7, path: PathOptions { delta1: 1.0, delta2: 3.0, screening: true }, n_lambda: 20 };
const REAL: Defaults = Defaults { tol: 1e-4, path: PathOptions { delta1: 0.1, delta2: 1.0, screening: true }, n_lambda: 50 };

struct Resolved {
    tol: f64,
    n_lambda: usize,
    path: PathOptions,
}

fn resolve(args: &SolverArgs, d: Defaults) -> Resolved {
    Resolved {
        tol: args.tol.unwrap_or(d.tol),
        n_lambda: args.nlambda.unwrap_or(d.n_lambda),
        path: PathOptions {
            delta1: args.delta1.unwrap_or(d.path.delta1),
            delta2: args.delta2.unwrap_or(d.path.delta2),
            screening: !args.no_screening,
        },
    }
}

fn solver_json(args: &SolverArgs, r: &Resolved) -> serde_json::Value {
    json!({
        "alg": args.alg,
        "lambda": args.lambda.to_string(),
        "tol": r.tol,
        "max_iter": args.max_iter,
        "width": args.width,
        "reduce_dims": !args.no_reduce,
        "n_lambda": r.n_lambda,
        "delta1": r.path.delta1,
        "delta2": r.path.delta2,
        "screening": r.path.screening,
    })
}

struct Solved {
    result: InstanceResult,
    report: SolveReport,
    path: Option<PathState>,
}

/// Solve one instance; the reported time covers initialization and, for
/// `auto`, the whole scan.
fn solve_instance(obs: &ObservationSet, target: Option<&TargetInstance>, seed: u64, args: &SolverArgs, r: &Resolved) -> Result<Solved> {
    let mut cfg = match args.width {
        Some(w) => SolverConfig::with_width(obs, 1.0, args.alg, w),
        None => SolverConfig::standard(obs, 1.0, args.alg),
    };
    cfg.seed = seed;
    cfg.tol = r.tol;
    cfg.max_iter = args.max_iter;
    cfg.reduce_dims = !args.no_reduce;

    let start = Instant::now();
    let (report, lambda, path) = match args.lambda {
        LambdaArg::Value(v) => {
            cfg.lambda = v;
            cfg.refresh_nu(obs);
            (solve(&cfg, obs)?, v, None)
        }
        LambdaArg::Beta(family, rank) => {
            let setup = PathSetup::new(obs, &cfg)?;
            // exact low-rank data can put the threshold at zero
            cfg.lambda = setup.beta(family, rank)?.max(LAMBDA_FLOOR);
            cfg.refresh_nu(obs);
            let lambda = cfg.lambda;
            (solve_from(&cfg, obs, &setup.init)?, lambda, None)
        }
        LambdaArg::Auto => {
            let (out, _) = auto_lambda(&cfg, obs, r.n_lambda, &r.path)?;
            (out.report, out.lambda, Some(out.state))
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let metrics = match target {
        Some(t) => t.evaluate(&report.pair)?,
        None => Metrics { re: None, nmae: None },
    };
    let mut result = InstanceResult::new(seed, lambda, &report, metrics);
    result.time_s = elapsed;
    Ok(Solved { result, report, path })
}

fn write_outputs(out: &Path, tag: &str, solved: &Solved) -> Result<()> {
    let trace = out.join(format!("trace{tag}.csv"));
    write_trace_csv(BufWriter::new(File::create(&trace)?), &solved.report).with_context(|| format!("writing {}", trace.display()))?;
    if let Some(state) = &solved.path {
        let path = out.join(format!("path{tag}.csv"));
        write_path_csv(BufWriter::new(File::create(&path)?), state).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn thread_pool(parallel: bool) -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("FACRANK_THREADS") {
        Ok(v) => v.parse::<usize>().with_context(|| format!("FACRANK_THREADS={v:?} is not a thread count"))?,
        Err(_) if parallel => 0,
        Err(_) => 1,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

/// Run `job` once per repeat seed, in order or concurrently.
fn repeat<F>(run: &RunArgs, job: F) -> Result<Vec<(u64, Solved)>>
where
    F: Fn(u64) -> Result<Solved> + Sync,
{
    if run.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let seeds: Vec<u64> = (0..run.repeats as u64).map(|i| run.seed + i).collect();
    if run.parallel {
        thread_pool(true)?.install(|| seeds.par_iter().map(|&s| job(s).map(|v| (s, v))).collect())
    } else {
        seeds.iter().map(|&s| job(s).map(|v| (s, v))).collect()
    }
}

fn finish(run: &RunArgs, config: serde_json::Value, solved: Vec<(u64, Solved)>) -> Result<ExitCode> {
    for (seed, s) in &solved {
        write_outputs(&run.out, &format!("_seed{seed}"), s)?;
    }
    let report = RunReport::new(config, solved.into_iter().map(|(_, s)| s.result).collect())?;
    std::fs::write(run.out.join("report.json"), report.to_json()?)?;
    print_mean(&report);
    Ok(ExitCode::SUCCESS)
}

fn print_mean(report: &RunReport) {
    let m = &report.mean;
    let mut parts = vec![format!("instances {}", report.instances.len()), format!("rank {:.2}", m.rank)];
    if let Some(re) = m.re {
        parts.push(format!("RE {re:.4e}"));
    }
    if let Some(v) = m.nmae {
        parts.push(format!("NMAE {v:.4}"));
    }
    parts.push(format!("time {:.3}s", m.time_s));
    println!("{}", parts.join(", "));
}

fn synth_json(d: &SynthData) -> serde_json::Value {
    json!({ "n": d.n, "rank": d.rank, "sr": d.sr, "noise": d.noise, "scheme": d.scheme, "sampling": d.mode() })
}

fn synth_spec(d: &SynthData, seed: u64) -> SynthSpec {
    SynthSpec { n: d.n, rank: d.rank, sr: d.sr, noise: d.noise, scheme: d.scheme, mode: d.mode(), seed }
}

pub fn synth(a: &SynthArgs) -> Result<ExitCode> {
    std::fs::create_dir_all(&a.run.out)?;
    let r = resolve(&a.solver, SYNTHETIC);
    let config = json!({
        "command": "synth",
        "data": synth_json(&a.data),
        "solver": solver_json(&a.solver, &r),
        "repeats": a.run.repeats,
        "seed": a.run.seed,
    });
    let solved = repeat(&a.run, |seed| {
        let inst = synthetic_instance(&synth_spec(&a.data, seed))?;
        if a.save_instances {
            let sidecar = TripletSidecar {
                m: inst.m,
                n: inst.n,
                r_min: None,
                r_max: None,
                seed,
                scheme: a.data.scheme,
                sr: a.data.sr,
                sigma: a.data.noise,
                rank: Some(a.data.rank),
            };
            save_instance(&a.run.out.join(format!("instance_seed{seed}.csv")), &inst.observed, &sidecar)?;
        }
        solve_instance(&inst.observed, Some(&inst), seed, &a.solver, &r)
    })?;
    finish(&a.run, config, solved)
}

pub fn real(a: &RealArgs) -> Result<ExitCode> {
    let ratings = load_ratings(&a.input, a.format).with_context(|| format!("reading {}", a.input.display()))?;
    std::fs::create_dir_all(&a.run.out)?;
    let r = resolve(&a.solver, REAL);
    let rows = a.rows.unwrap_or(ratings.m);
    let config = json!({
        "command": "real",
        "data": {
            "format": a.format,
            "m": ratings.m,
            "n": ratings.n,
            "ratings": ratings.entries.len(),
            "rows": rows,
            "cols": a.cols,
            "permute_rows": a.permute_rows,
            "sr": a.sr,
            "scheme": a.scheme,
        },
        "solver": solver_json(&a.solver, &r),
        "repeats": a.run.repeats,
        "seed": a.run.seed,
    });
    let solved = repeat(&a.run, |seed| {
        let spec = SubsampleSpec { rows, cols: a.cols, scheme: a.scheme, sr: a.sr, permute_rows: a.permute_rows, seed };
        let inst = subsample_real(&ratings, &spec)?;
        solve_instance(&inst.observed, Some(&inst), seed, &a.solver, &r)
    })?;
    finish(&a.run, config, solved)
}

pub fn path(a: &PathArgs) -> Result<ExitCode> {
    if a.solver.lambda != LambdaArg::Auto {
        bail!("the path command scans lambda itself; drop --lambda or pass --lambda auto");
    }
    std::fs::create_dir_all(&a.out)?;
    let r = resolve(&a.solver, SYNTHETIC);
    let (solved, data) = match &a.instance {
        Some(file) => {
            let (obs, meta) = load_instance(file).with_context(|| format!("reading {}", file.display()))?;
            let data = json!({ "instance": file.file_name().map(|f| f.to_string_lossy().into_owned()), "sidecar": meta });
            (solve_instance(&obs, None, a.seed, &a.solver, &r)?, data)
        }
        None => {
            let inst = synthetic_instance(&synth_spec(&a.data, a.seed))?;
            (solve_instance(&inst.observed, Some(&inst), a.seed, &a.solver, &r)?, synth_json(&a.data))
        }
    };
    let config = json!({ "command": "path", "data": data, "solver": solver_json(&a.solver, &r), "seed": a.seed });
    write_outputs(&a.out, "", &solved)?;
    let state = solved.path.as_ref().expect("auto lambda records a path");
    match state.criterion {
        Some(c) => println!("criterion {c} chose grid index {} (lambda {:.6e})", state.chosen, solved.result.lambda),
        None => println!("no criterion fired; using grid index {} (lambda {:.6e})", state.chosen, solved.result.lambda),
    }
    let report = RunReport::new(config, vec![solved.result])?;
    std::fs::write(a.out.join("report.json"), report.to_json()?)?;
    print_mean(&report);
    Ok(ExitCode::SUCCESS)
}

pub fn factorize(a: &FactorizeArgs) -> Result<ExitCode> {
    let z = read_dense_csv(File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?)?;
    let d = a.d.unwrap_or(z.nrows().min(z.ncols()));
    let radius = if a.sigma_bound == "auto" {
        let s1 = if z.iter().all(|&v| v == 0.0) { 0.0 } else { dense_svd(&z)?.s[0] };
        if s1 > 0.0 {
            1.01 * s1.sqrt()
        } else {
            1.0
        }
    } else {
        match a.sigma_bound.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => v,
            _ => bail!("--sigma-bound must be a positive number or auto"),
        }
    };
    let pair = factorize_balanced(&z, d, radius)?;
    std::fs::create_dir_all(&a.out)?;
    write_dense_csv(BufWriter::new(File::create(a.out.join("x.csv"))?), &pair.x)?;
    write_dense_csv(BufWriter::new(File::create(a.out.join("y.csv"))?), &pair.y)?;
    let err = (pair.product() - &z).norm();
    println!("rank {} reconstruction error {err:.3e} bound {radius:.6e}", facrank::regprox::nnzc(&pair.x));
    Ok(ExitCode::SUCCESS)
}

pub fn selftest(a: &SelftestArgs) -> Result<ExitCode> {
    let fault = match a.inject_fault.as_deref() {
        None => Fault::None,
        Some("prox") => Fault::Prox,
        Some(other) => bail!("unknown fault {other:?}"),
    };
    let start = Instant::now();
    let checks = selftest::run(&SelftestOptions { quick: a.quick, fault, seed: a.seed })?;
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    println!("{} checks, {failed} failed, {:.1}s", checks.len(), start.elapsed().as_secs_f64());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
