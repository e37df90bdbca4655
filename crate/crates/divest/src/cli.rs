//! Command-line interface: `estimate` from sample files, `sweep` for the
//! Monte Carlo protocol, `compare` for error summaries and rate slopes.
//!
//! Exit codes: 0 on success, 2 on argument/usage errors, 1 on runtime
//! failures.

use std::time::Instant;

use crate::distributions::DistSpec;
use crate::estimators::{
    chi2_divergence_estimate, fit_chi2, fit_m1, fit_m2, m1_kl_estimate, m2_kl_estimate,
};
use crate::harness::{
    aggregate, rate_slopes, read_csv, read_samples, run_sweep, write_aggregate_csv, write_csv,
    EstimatorKind, ExperimentConfig, SigmaRule,
};
use crate::kernel::{default_bandwidth, median_heuristic, KernelSpec, PointSet};
use crate::solver::SolverConfig;
use crate::{baselines, Error, Result};

/// Env var capping sweep worker threads; affects runtime only, never output.
pub const THREADS_ENV: &str = "DIVEST_THREADS";

const USAGE: &str = "\
divest — kernel M-estimation of f-divergences and likelihood ratios

USAGE:
  divest estimate --estimator {m1|m2|chi2|wkv} --p-file FILE --q-file FILE
                  [--sigma S | --sigma-rule median] [--lambda-scale C]
                  [--gamma G] [--seed N]
  divest sweep    --p DIST --q DIST --estimators LIST --n-grid LIST
                  [--reps R] [--seed N] --out CSV
                  [--lambda-scale C] [--sigma S | --sigma-rule median]
  divest compare  --in CSV [--out AGG_CSV]

SAMPLE FILES:
  one point per line, whitespace- or comma-separated coordinates;
  blank lines and '#' comments are skipped. --p-file holds the sample
  from P, --q-file the sample from Q; the KL estimators target D(P||Q).

DISTRIBUTIONS (for sweep):
  gauss:M,V                 1-D gaussian, mean M, variance V
  gaussK:m1,..,mK|v1,..,vK  K-dim gaussian, mean list | variance list
  beta:A,B                  beta on [0,1]
  tgauss:a,k                truncated normal N_t(a, I_k), box [a-3, a+3]^k
  mix:w1*SPEC+w2*SPEC+..    gaussian mixture
  prod:SPEC;SPEC;..         product of independent components

ESTIMATORS (for sweep): comma list of m1, m2, chi2, wkv[:GAMMA]

DEFAULTS:
  --reps 250, --seed 0, --lambda-scale 1 (lambda = C/n), --gamma 0.5,
  bandwidth: sigma = 0.1 in one dimension, pooled median heuristic above.
  --seed on `estimate` is accepted for interface stability; file-based
  estimation is deterministic.

ENVIRONMENT:
  DIVEST_THREADS  caps sweep worker threads (runtime only, output unchanged)
";

pub fn cli_main(args: &[String]) -> i32 {
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 2 {
                eprintln!("\n{USAGE}");
            }
            e.exit_code()
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    let Some(cmd) = args.first() else {
        return Err(Error::Usage("missing subcommand".into()));
    };
    match cmd.as_str() {
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            Ok(())
        }
        "estimate" => cmd_estimate(&args[1..]),
        "sweep" => cmd_sweep(&args[1..]),
        "compare" => cmd_compare(&args[1..]),
        other => Err(Error::Usage(format!("unknown subcommand '{other}'"))),
    }
}

struct Flags {
    pairs: Vec<(String, String)>,
}

impl Flags {
    fn parse(args: &[String], allowed: &[&str]) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let token = &args[i];
            let Some(name) = token.strip_prefix("--") else {
                return Err(Error::Usage(format!("unexpected argument '{token}'")));
            };
            if !allowed.contains(&name) {
                return Err(Error::Usage(format!("unknown flag '--{name}'")));
            }
            let Some(value) = args.get(i + 1) else {
                return Err(Error::Usage(format!("flag '--{name}' needs a value")));
            };
            if pairs.iter().any(|(n, _)| n == name) {
                return Err(Error::Usage(format!("flag '--{name}' given twice")));
            }
            pairs.push((name.to_string(), value.clone()));
            i += 2;
        }
        Ok(Flags { pairs })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> Result<&str> {
        self.get(name)
            .ok_or_else(|| Error::Usage(format!("missing required flag '--{name}'")))
    }

    fn get_f64(&self, name: &str, default: f64) -> Result<f64> {
        match self.get(name) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Usage(format!("bad value '{v}' for '--{name}'"))),
        }
    }

    fn get_u64(&self, name: &str, default: u64) -> Result<u64> {
        match self.get(name) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Usage(format!("bad value '{v}' for '--{name}'"))),
        }
    }
}

fn sigma_rule_from_flags(flags: &Flags) -> Result<SigmaRule<f64>> {
    match (flags.get("sigma"), flags.get("sigma-rule")) {
        (Some(_), Some(_)) => Err(Error::Usage(
            "give either '--sigma' or '--sigma-rule', not both".into(),
        )),
        (Some(s), None) => {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Usage(format!("bad value '{s}' for '--sigma'")))?;
            Ok(SigmaRule::Fixed(v))
        }
        (None, Some("median")) => Ok(SigmaRule::MedianHeuristic),
        (None, Some(other)) => Err(Error::Usage(format!(
            "unknown sigma rule '{other}' (expected 'median')"
        ))),
        (None, None) => Ok(SigmaRule::Auto),
    }
}

fn resolve_sigma(rule: SigmaRule<f64>, x: &PointSet<f64>, y: &PointSet<f64>) -> Result<f64> {
    match rule {
        SigmaRule::Auto => default_bandwidth(x, y),
        SigmaRule::Fixed(s) => Ok(s),
        SigmaRule::MedianHeuristic => median_heuristic(&x.concat(y)?),
    }
}

fn cmd_estimate(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &[
            "estimator",
            "p-file",
            "q-file",
            "sigma",
            "sigma-rule",
            "lambda-scale",
            "gamma",
            "seed",
        ],
    )?;
    let estimator = flags.require("estimator")?.to_string();
    let p_path = flags.require("p-file")?.to_string();
    let q_path = flags.require("q-file")?.to_string();
    let lambda_scale = flags.get_f64("lambda-scale", 1.0)?;
    let gamma = flags.get_f64("gamma", 0.5)?;
    flags.get_u64("seed", 0)?; // accepted for interface stability
    let sigma_rule = sigma_rule_from_flags(&flags)?;
    let y: PointSet<f64> = read_samples(&p_path)?;
    let x: PointSet<f64> = read_samples(&q_path)?;

    println!("estimator: {estimator}");
    println!("n_p: {}", y.len());
    println!("n_q: {}", x.len());
    println!("dim: {}", y.dim());

    match estimator.as_str() {
        "wkv" => {
            let est = baselines::fit_partition(&x, &y, gamma)?;
            if est.degenerate {
                eprintln!("warning: degenerate partition (s >= n), estimate is 0");
            }
            println!("gamma: {gamma}");
            println!("cells: {}", est.cell_q_mass.len());
            println!("divergence: kl");
            println!("estimate: {}", est.value);
        }
        "m1" | "m2" | "chi2" => {
            let sigma = resolve_sigma(sigma_rule, &x, &y)?;
            let kernel = KernelSpec::new(sigma)?;
            let lambda = lambda_scale / y.len() as f64;
            println!("sigma: {sigma}");
            println!("lambda: {lambda}");
            let est = match estimator.as_str() {
                "m1" => {
                    let model = fit_m1(&x, &y, &kernel, lambda, &SolverConfig::default())?;
                    if !model.stats.converged {
                        eprintln!(
                            "warning: solver did not converge (grad {})",
                            model.stats.grad_sup_norm
                        );
                    }
                    println!("divergence: kl");
                    m1_kl_estimate(&model)
                }
                "m2" => {
                    let model = fit_m2(&x, &y, &kernel, lambda, &SolverConfig::default())?;
                    if !model.stats.converged {
                        eprintln!(
                            "warning: solver did not converge (grad {})",
                            model.stats.grad_sup_norm
                        );
                    }
                    println!("divergence: kl");
                    m2_kl_estimate(&model)
                }
                _ => {
                    let model = fit_chi2(&x, &y, &kernel, lambda)?;
                    println!("divergence: chi2");
                    chi2_divergence_estimate(&model, &x, &y)?
                }
            };
            println!("estimate: {}", est.value);
            if let Some(gap) = est.duality_gap {
                println!("duality_gap: {gap}");
            }
            if let Some(iters) = est.solver_iterations {
                println!("iterations: {iters}");
            }
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown estimator '{other}' (expected m1, m2, chi2, or wkv)"
            )))
        }
    }
    Ok(())
}

fn threads_from_env() -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.parse::<usize>() {
        Ok(v) if v >= 1 => Some(v),
        _ => {
            eprintln!("warning: ignoring invalid {THREADS_ENV}='{raw}'");
            None
        }
    }
}

fn cmd_sweep(args: &[String]) -> Result<()> {
    let flags = Flags::parse(
        args,
        &[
            "p",
            "q",
            "estimators",
            "n-grid",
            "reps",
            "seed",
            "out",
            "lambda-scale",
            "sigma",
            "sigma-rule",
        ],
    )?;
    let p_spec: DistSpec<f64> = flags.require("p")?.parse()?;
    let q_spec: DistSpec<f64> = flags.require("q")?.parse()?;
    let estimators = flags
        .require("estimators")?
        .split(',')
        .map(|t| EstimatorKind::parse(t.trim()))
        .collect::<Result<Vec<_>>>()?;
    let n_grid = flags
        .require("n-grid")?
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("bad sample size '{t}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = flags.require("out")?.to_string();

    let mut cfg = ExperimentConfig::new(p_spec, q_spec);
    cfg.estimators = estimators;
    cfg.n_grid = n_grid;
    cfg.replications = flags.get_u64("reps", 250)? as usize;
    cfg.base_seed = flags.get_u64("seed", 0)?;
    cfg.lambda_scale = flags.get_f64("lambda-scale", 1.0)?;
    cfg.sigma_rule = sigma_rule_from_flags(&flags)?;
    cfg.threads = threads_from_env();

    let start = Instant::now();
    let result = run_sweep(&cfg)?;
    let failures = result.rows.iter().filter(|r| r.failure.is_some()).count();
    write_csv(&result, &out)?;
    eprintln!(
        "sweep finished in {:.1}s ({} rows, {} failures)",
        start.elapsed().as_secs_f64(),
        result.rows.len(),
        failures
    );
    println!("wrote {} rows to {out}", result.rows.len());
    Ok(())
}

fn cmd_compare(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args, &["in", "out"])?;
    let input = flags.require("in")?;
    let result = read_csv::<f64>(input)?;
    let aggs = aggregate(&result);

    println!(
        "{:<12} {:>7} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "estimator",
        "n",
        "reps",
        "fail",
        "median(est)",
        "q10(est)",
        "q90(est)",
        "med|err|",
        "mean|err|"
    );
    for a in &aggs {
        println!(
            "{:<12} {:>7} {:>5} {:>5} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            a.estimator,
            a.n,
            a.reps,
            a.failures,
            a.median_estimate,
            a.q10_estimate,
            a.q90_estimate,
            a.median_abs_error,
            a.mean_abs_error
        );
    }
    println!();
    for (name, slope) in rate_slopes(&aggs) {
        match slope {
            Some(s) => println!("rate {name}: log-log slope of median |error| = {s:.4}"),
            None => println!("rate {name}: insufficient data for a slope"),
        }
    }
    if let Some(out) = flags.get("out") {
        write_aggregate_csv(&aggs, out)?;
        println!("wrote aggregates to {out}");
    }
    Ok(())
}
