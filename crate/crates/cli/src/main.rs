use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};
use sil_core::arith::{factor_window, format_factorization, sieve_primes, table_for, window_eval, MultFn};
use sil_core::dirpoly::{max_step, mean_square_grid, perron_short_average, DirPoly, Normalize};
use sil_core::intervals::{system_density_report, SystemSpec};
use sil_core::lab::{
    json_text, load_config_file, measure_bound, run_gaps, run_scan, Experiment, ExperimentPlan, GapSet,
    ParamValue, Report,
};
use sil_core::normform::{define_field, delta_k_x, ideal_norm_indicator, normform_indicator, parse_poly, prime_normform_density};
use sil_core::numeric::ksum;
use sil_core::pretence::{euler_products, minimize_pretend, Variant};
use sil_core::sieve::{brun_hooley_plan, lambda_weights, majorant_violations, weight_sum_report};
use sil_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sil", version, about = "Multiplicative functions in short intervals")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Primes up to a limit, one per line.
    Primes {
        #[arg(long)]
        limit: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Factorizations of a window as CSV.
    Factor {
        #[arg(long)]
        start: u64,
        #[arg(long)]
        len: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimizing twist and Euler products of a function.
    Pretend {
        #[command(flatten)]
        common: Common,
        #[arg(long = "fn")]
        function: Option<String>,
        #[arg(long = "X")]
        x: Option<u64>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Dirichlet polynomial quadrature.
    Dirpoly {
        #[command(subcommand)]
        cmd: DirpolyCmd,
    },
    /// Sieve weights and their majorant check.
    Sieve {
        #[command(subcommand)]
        cmd: SieveCmd,
    },
    /// Interval system and its density report.
    Intervals {
        #[command(flatten)]
        common: Common,
        #[arg(long = "X")]
        x: Option<u64>,
        /// TOML file with nu1, nu2, eta, beta0, P1, Q1 or explicit pairs.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Norm-form indicators over a window, or densities.
    #[command(args_conflicts_with_subcommands = true)]
    Normform {
        #[command(subcommand)]
        cmd: Option<NormformCmd>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        poly: Option<String>,
        #[arg(long)]
        start: Option<u64>,
        #[arg(long)]
        len: Option<u64>,
    },
    /// Short-interval scan against the long mean.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long = "fn")]
        function: Option<String>,
        #[arg(long = "X")]
        x: Option<u64>,
        #[arg(long)]
        h: Vec<u64>,
        #[arg(long)]
        stride: Option<u64>,
        #[arg(long = "delta")]
        deltas: Vec<f64>,
    },
    /// Gap moments of a set in (X, 2X].
    Gaps {
        #[command(flatten)]
        common: Common,
        /// A function spec, or `smooth(θ)` for the exact smooth predicate.
        #[arg(long = "fn")]
        function: Option<String>,
        #[arg(long = "X")]
        x: Option<u64>,
        #[arg(long = "gamma")]
        gammas: Vec<f64>,
    },
    /// Measured ratio of one inequality over a parameter sweep.
    Bound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        id: Option<String>,
        /// `key=value`, `key=a,b,c` or `key=name`; repeatable.
        #[arg(long = "param")]
        params: Vec<String>,
    },
}

#[derive(Subcommand)]
enum DirpolyCmd {
    /// ∫_{-T}^{T} |Σ_{X<n≤2X} f(n) n^{-σ-it}|² dt.
    MeanSquare {
        #[arg(long = "fn")]
        function: String,
        #[arg(long = "X")]
        x: u64,
        #[arg(long = "T")]
        t: f64,
        #[arg(long)]
        sigma: f64,
    },
    /// Perron reconstruction of a short average against the direct sum.
    Perron {
        #[arg(long = "fn")]
        function: String,
        #[arg(long = "X")]
        x: u64,
        #[arg(long)]
        h: f64,
        #[arg(long = "x")]
        x0: f64,
        #[arg(long = "T")]
        t: f64,
    },
}

#[derive(Subcommand)]
enum SieveCmd {
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        g: Option<String>,
        #[arg(long = "X")]
        x: Option<u64>,
        #[arg(long)]
        limit: Option<u64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Also write the weights as CSV `d,lambda`.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NormformCmd {
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        poly: Option<String>,
        #[arg(long = "X")]
        x: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn missing<T>(flag: &str) -> Result<T> {
    Err(Error::Parse { path: flag.into(), message: "required (flag or config)".into() })
}

/// The config plan for `kind`, or an empty one.
fn plan_for(common: &Common, kind: Experiment) -> Result<ExperimentPlan> {
    match &common.config {
        None => Ok(ExperimentPlan::new(kind)),
        Some(path) => {
            let plan = load_config_file(path)?;
            if plan.experiment != kind {
                return Err(Error::Parse {
                    path: "experiment".into(),
                    message: format!("config is for {:?}, not {kind:?}", plan.experiment),
                });
            }
            Ok(plan)
        }
    }
}

/// Flags override the config file.
fn merge(common: &Common, plan: &mut ExperimentPlan) -> Result<()> {
    if let Some(f) = &common.format {
        plan.format = f.parse()?;
    }
    if let Some(s) = common.seed {
        plan.seed = s;
    }
    if let Some(o) = &common.out {
        plan.out = Some(o.display().to_string());
    }
    Ok(())
}

fn param_num(plan: &ExperimentPlan, key: &str) -> Result<Option<f64>> {
    match plan.params.get(key) {
        None => Ok(None),
        Some(ParamValue::Num(v)) => Ok(Some(*v)),
        Some(_) => Err(Error::Parse { path: format!("params.{key}"), message: "expects a number".into() }),
    }
}

fn param_text(plan: &ExperimentPlan, key: &str) -> Result<Option<String>> {
    match plan.params.get(key) {
        None => Ok(None),
        Some(ParamValue::Text(v)) => Ok(Some(v.clone())),
        Some(_) => Err(Error::Parse { path: format!("params.{key}"), message: "expects a string".into() }),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

/// Factor windows start at 2; n = 1 is handled by the caller.
fn window_from(start: u64, len: u64) -> (u64, u64) {
    if start == 1 {
        (2, len.saturating_sub(1))
    } else {
        (start, len)
    }
}

fn emit(plan: &ExperimentPlan, report: &Report) -> Result<()> {
    write_out(plan.out.as_deref().map(Path::new), &report.render(plan.format)?)
}

fn emit_json(plan: &ExperimentPlan, v: &Value) -> Result<()> {
    write_out(plan.out.as_deref().map(Path::new), &json_text(v))
}

fn parse_param(text: &str) -> Result<(String, ParamValue)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| Error::Parse { path: "--param".into(), message: format!("expected key=value, got `{text}`") })?;
    let nums: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let value = match nums {
        Ok(xs) if xs.len() == 1 => ParamValue::Num(xs[0]),
        Ok(xs) => ParamValue::List(xs),
        Err(_) => ParamValue::Text(v.to_string()),
    };
    Ok((k.trim().to_string(), value))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Primes { limit, out } => {
            let table = sieve_primes(limit)?;
            let mut s = String::new();
            for p in table.primes() {
                s.push_str(&p.to_string());
                s.push('\n');
            }
            write_out(out.as_deref(), &s)
        }
        Cmd::Factor { start, len, out } => {
            if start == 0 {
                return Err(Error::Domain("start must be at least 1".into()));
            }
            let mut s = String::from("n,factorization\n");
            if start == 1 && len > 0 {
                s.push_str("1,1\n");
            }
            let (lo, n) = window_from(start, len);
            let fw = factor_window(lo, n, &table_for(lo + n))?;
            for (n, fs) in fw.iter() {
                s.push_str(&format!("{n},{}\n", format_factorization(fs)));
            }
            write_out(out.as_deref(), &s)
        }
        Cmd::Pretend { common, function, x, variant } => {
            let mut plan = plan_for(&common, Experiment::Pretend)?;
            merge(&common, &mut plan)?;
            let name = function.or(plan.function.clone()).map_or_else(|| missing("--fn"), Ok)?;
            let x = x.or(plan.x).map_or_else(|| missing("--X"), Ok)?;
            let variant: Variant =
                variant.or(param_text(&plan, "variant")?).unwrap_or_else(|| "dense".into()).parse()?;
            let f = MultFn::parse(&name)?;
            let summary = minimize_pretend(&f, x, variant)?;
            let products = euler_products(&f, x)?;
            emit_json(
                &plan,
                &json!({
                    "fn": f.name(),
                    "X": x,
                    "variant": variant,
                    "t_star": summary.t_star,
                    "M": summary.m_value,
                    "H": products.h_value,
                    "mean_factor": products.mean_factor,
                    "square_factor": products.square_factor,
                }),
            )
        }
        Cmd::Dirpoly { cmd } => match cmd {
            DirpolyCmd::MeanSquare { function, x, t, sigma } => {
                let f = MultFn::parse(&function)?;
                let fw = factor_window(x + 1, x, &table_for(2 * x + 1))?;
                let p = DirPoly::new(x + 1, window_eval(&f, &fw))?;
                let value = mean_square_grid(&p, sigma, t, max_step(p.hi()))?;
                let diag = 2.0 * t * p.weighted_l2(sigma);
                write_out(None, &json_text(&json!({ "value": value, "diagonal": diag, "ratio": value / diag })))
            }
            DirpolyCmd::Perron { function, x, h, x0, t } => {
                let f = MultFn::parse(&function)?;
                let lo = x / 4;
                let fw = factor_window(lo + 1, 4 * x - lo, &table_for(4 * x + 1))?;
                let vals = window_eval(&f, &fw);
                let p = DirPoly::from_window(&vals, lo + 1, Normalize::None)?;
                let value = perron_short_average(&p, x0, h, t)?;
                let (a, b) = (x0.floor() as u64, (x0 + h).floor() as u64);
                let direct = ksum((a + 1..=b).map(|n| vals[(n - lo - 1) as usize].re)) / h;
                let direct_im = ksum((a + 1..=b).map(|n| vals[(n - lo - 1) as usize].im)) / h;
                let err = (value - Complex64::new(direct, direct_im)).norm();
                write_out(
                    None,
                    &json_text(&json!({
                        "value": value.re,
                        "value_im": value.im,
                        "direct": direct,
                        "direct_im": direct_im,
                        "abs_err": err,
                    })),
                )
            }
        },
        Cmd::Sieve { cmd: SieveCmd::Check { common, g, x, limit, tau, weights } } => {
            let mut plan = plan_for(&common, Experiment::Sieve)?;
            merge(&common, &mut plan)?;
            let g = MultFn::parse(&g.or(plan.function.clone()).map_or_else(|| missing("--g"), Ok)?)?;
            let x = x.or(plan.x).map_or_else(|| missing("--X"), Ok)?;
            let limit = match limit {
                Some(l) => l,
                None => param_num(&plan, "limit")?.map_or(x, |v| v as u64),
            };
            let tau = tau.or(param_num(&plan, "tau")?).unwrap_or(3.0);
            let w = lambda_weights(&brun_hooley_plan(x, tau)?, &g)?;
            if let Some(path) = weights {
                std::fs::write(path, w.to_csv())?;
            }
            let violations = majorant_violations(&w, &g, limit)?;
            let sums = weight_sum_report(&w, &g, x)?;
            emit_json(
                &plan,
                &json!({
                    "g": g.name(),
                    "X": x,
                    "limit": limit,
                    "tau": tau,
                    "weights": w.len(),
                    "violations": violations,
                    "s1": sums.s1,
                    "b1": sums.b1,
                    "s2": sums.s2,
                    "b2": sums.b2,
                    "s1_le_b1": sums.s1_le_b1,
                }),
            )
        }
        Cmd::Intervals { common, x, params } => {
            let mut plan = plan_for(&common, Experiment::Intervals)?;
            merge(&common, &mut plan)?;
            let x = x.or(plan.x).map_or_else(|| missing("--X"), Ok)?;
            let spec = match params {
                Some(path) => SystemSpec::from_toml(&std::fs::read_to_string(path)?)?,
                None => SystemSpec::default(),
            };
            let sys = spec.build(x)?;
            let density = system_density_report(&sys, x)?;
            let system = serde_json::to_value(&sys).map_err(|e| Error::Range(e.to_string()))?;
            let density = serde_json::to_value(&density).map_err(|e| Error::Range(e.to_string()))?;
            emit_json(&plan, &json!({ "system": system, "density": density, "all_conditions_pass": sys.all_conditions_pass() }))
        }
        Cmd::Normform { cmd: Some(NormformCmd::Density { common, poly, x }), .. } => {
            let mut plan = plan_for(&common, Experiment::Normform)?;
            merge(&common, &mut plan)?;
            let poly = poly.or(param_text(&plan, "poly")?).map_or_else(|| missing("--poly"), Ok)?;
            let x = x.or(plan.x).map_or_else(|| missing("--X"), Ok)?;
            let k = define_field(&parse_poly(&poly)?)?;
            let d = delta_k_x(&k, x)?;
            let xf = x as f64;
            let dens = prime_normform_density(&k, xf.sqrt().max(2.0), xf)?;
            emit_json(
                &plan,
                &json!({ "field": k.to_string(), "X": x, "delta_K_X": d, "alpha_hat": dens.alpha_hat, "w": xf.sqrt().max(2.0) }),
            )
        }
        Cmd::Normform { cmd: None, common, poly, start, len } => {
            let mut plan = plan_for(&common, Experiment::Normform)?;
            merge(&common, &mut plan)?;
            let poly = poly.or(param_text(&plan, "poly")?).map_or_else(|| missing("--poly"), Ok)?;
            let start = match start {
                Some(s) => s,
                None => param_num(&plan, "start")?.map_or_else(|| missing("--start"), |v| Ok(v as u64))?,
            };
            let len = match len {
                Some(l) => l,
                None => param_num(&plan, "len")?.map_or_else(|| missing("--len"), |v| Ok(v as u64))?,
            };
            if start == 0 {
                return Err(Error::Domain("start must be at least 1".into()));
            }
            let k = define_field(&parse_poly(&poly)?)?;
            let (lo, n) = window_from(start, len);
            let fw = factor_window(lo, n, &table_for(lo + n))?;
            let mut s = String::from("n,delta,g\n");
            if start == 1 && len > 0 {
                s.push_str("1,1,1\n");
            }
            for n in lo..lo + n {
                let d = ideal_norm_indicator(&k, n, &fw)? as u8;
                let g = normform_indicator(&k, n, &fw)? as u8;
                s.push_str(&format!("{n},{d},{g}\n"));
            }
            write_out(plan.out.as_deref().map(Path::new), &s)
        }
        Cmd::Scan { common, function, x, h, stride, deltas } => {
            let mut plan = plan_for(&common, Experiment::Scan)?;
            merge(&common, &mut plan)?;
            if function.is_some() {
                plan.function = function;
            }
            if x.is_some() {
                plan.x = x;
                if stride.is_none() && common.config.is_some() {
                    plan.stride = None;
                }
            }
            if !h.is_empty() {
                plan.h = h;
            }
            if stride.is_some() {
                plan.stride = stride;
            }
            if !deltas.is_empty() {
                plan.deltas = deltas;
            }
            let plan = plan.validated()?;
            let f = MultFn::parse(plan.function.as_deref().expect("validated"))?;
            let (xv, stride) = (plan.x.expect("validated"), plan.stride.expect("validated"));
            let mut scans =
                plan.h.iter().map(|&h| run_scan(&f, xv, h, stride, &plan.deltas)).collect::<Result<Vec<_>>>()?;
            let report = if scans.len() == 1 { Report::Scan(scans.remove(0)) } else { Report::Scans(scans) };
            emit(&plan, &report)
        }
        Cmd::Gaps { common, function, x, gammas } => {
            let mut plan = plan_for(&common, Experiment::Gaps)?;
            merge(&common, &mut plan)?;
            if function.is_some() {
                plan.function = function;
            }
            if x.is_some() {
                plan.x = x;
            }
            if !gammas.is_empty() {
                plan.gammas = gammas;
            }
            let plan = plan.validated()?;
            let set = GapSet::parse(plan.function.as_deref().expect("validated"))?;
            emit(&plan, &Report::Gaps(run_gaps(&set, plan.x.expect("validated"), &plan.gammas)?))
        }
        Cmd::Bound { common, id, params } => {
            let mut plan = plan_for(&common, Experiment::Bound)?;
            merge(&common, &mut plan)?;
            if id.is_some() {
                plan.bound = id;
            }
            for p in &params {
                let (k, v) = parse_param(p)?;
                plan.params.insert(k, v);
            }
            let plan = plan.validated()?;
            let report = measure_bound(plan.bound.as_deref().expect("validated"), &plan.params, plan.seed)?;
            emit(&plan, &Report::Bound(report))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sil: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
