//! Experiment orchestration: seeded Monte Carlo sweeps over estimators and
//! sample sizes, CSV persistence, and sample-file ingestion.
//!
//! Every `(estimator, n, replication)` cell derives its own seed from the
//! base seed, so cells are independent, order-insensitive, and may run on any
//! number of worker threads without changing a byte of output. Rows are
//! sorted by `(estimator, n, rep)` before writing.
//!
//! Cell wall-clock time is not recorded in the CSV: the output is required to
//! be byte-identical across reruns with a fixed seed, which no measured time
//! can satisfy. The `runtime_ms` column is kept in the schema and left empty;
//! timing summaries go to stderr in the CLI instead.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::baselines::fit_partition;
use crate::distributions::{analytic_chi2, analytic_kl, DistSpec};
use crate::estimators::{
    chi2_divergence_estimate, fit_chi2, fit_m1, fit_m2, m1_kl_estimate, m2_kl_estimate,
};
use crate::kernel::{default_bandwidth, median_heuristic, KernelSpec, PointSet};
use crate::metrics::fit_rate;
use crate::scalar::Scalar;
use crate::solver::SolverConfig;
use crate::{argument, Error, Result};

pub const CSV_HEADER: &str = "estimator,n,rep,estimate,truth,abs_error,iters,gap,runtime_ms";

/// One estimator entry in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind<T> {
    M1,
    M2,
    Chi2,
    Wkv { gamma: T },
}

impl<T: Scalar> EstimatorKind<T> {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::M1 => "m1".into(),
            EstimatorKind::M2 => "m2".into(),
            EstimatorKind::Chi2 => "chi2".into(),
            EstimatorKind::Wkv { gamma } => format!("wkv:{gamma}"),
        }
    }

    /// Parse a CLI token: `m1`, `m2`, `chi2`, `wkv`, or `wkv:GAMMA`.
    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "m1" => Ok(EstimatorKind::M1),
            "m2" => Ok(EstimatorKind::M2),
            "chi2" => Ok(EstimatorKind::Chi2),
            "wkv" => Ok(EstimatorKind::Wkv {
                gamma: T::cast(0.5),
            }),
            _ => {
                if let Some(g) = token.strip_prefix("wkv:") {
                    let gamma: f64 = g
                        .parse()
                        .map_err(|_| argument(format!("bad wkv gamma '{g}'")))?;
                    Ok(EstimatorKind::Wkv {
                        gamma: T::cast(gamma),
                    })
                } else {
                    Err(argument(format!("unknown estimator '{token}'")))
                }
            }
        }
    }
}

/// Bandwidth selection for the kernel estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule<T> {
    /// `σ = 0.1` in one dimension, pooled median heuristic otherwise.
    Auto,
    Fixed(T),
    MedianHeuristic,
}

/// Sweep configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig<T> {
    pub p_spec: DistSpec<T>,
    pub q_spec: DistSpec<T>,
    pub estimators: Vec<EstimatorKind<T>>,
    /// Strictly increasing sample sizes.
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    /// `λ = lambda_scale / n`.
    pub lambda_scale: T,
    pub sigma_rule: SigmaRule<T>,
    pub solver: SolverConfig<T>,
    /// Worker threads; `None` means one per available core. Affects runtime
    /// only, never output.
    pub threads: Option<usize>,
}

impl<T: Scalar> ExperimentConfig<T> {
    pub fn new(p_spec: DistSpec<T>, q_spec: DistSpec<T>) -> Self {
        ExperimentConfig {
            p_spec,
            q_spec,
            estimators: vec![EstimatorKind::M1, EstimatorKind::M2],
            n_grid: vec![100, 200, 400, 800, 1600, 3200],
            replications: 250,
            base_seed: 0,
            lambda_scale: T::one(),
            sigma_rule: SigmaRule::Auto,
            solver: SolverConfig::default(),
            threads: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(argument("at least one estimator is required"));
        }
        if self.n_grid.is_empty() {
            return Err(argument("n_grid must not be empty"));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(argument("n_grid must be strictly increasing"));
        }
        if self.replications == 0 {
            return Err(argument("replications must be at least 1"));
        }
        if !crate::scalar::is_positive_finite(self.lambda_scale) {
            return Err(argument("lambda_scale must be positive"));
        }
        Ok(())
    }
}

/// One sweep cell. A failed fit records `NaN` estimate and error; the cause
/// goes to `failure` (not serialized).
#[derive(Debug, Clone)]
pub struct SweepRow<T> {
    pub estimator: String,
    pub n: usize,
    pub rep: usize,
    pub estimate: T,
    pub truth: T,
    pub abs_error: T,
    pub iters: Option<usize>,
    pub gap: Option<T>,
    pub runtime_ms: Option<T>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult<T> {
    pub rows: Vec<SweepRow<T>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-cell seed: `mix(base, estimator, n, rep)`, order-independent across
/// cells.
pub fn cell_seed(base_seed: u64, estimator_label: &str, n: usize, rep: usize) -> u64 {
    mix(
        mix(mix(base_seed, fnv1a(estimator_label)), n as u64),
        rep as u64,
    )
}

fn resolve_sigma<T: Scalar>(rule: SigmaRule<T>, x: &PointSet<T>, y: &PointSet<T>) -> Result<T> {
    match rule {
        SigmaRule::Auto => default_bandwidth(x, y),
        SigmaRule::Fixed(s) => Ok(s),
        SigmaRule::MedianHeuristic => median_heuristic(&x.concat(y)?),
    }
}

fn run_cell<T: Scalar>(
    cfg: &ExperimentConfig<T>,
    kind: &EstimatorKind<T>,
    truth: T,
    n: usize,
    rep: usize,
) -> SweepRow<T> {
    let label = kind.label();
    let seed = cell_seed(cfg.base_seed, &label, n, rep);
    let outcome: Result<(T, Option<usize>, Option<T>)> = (|| {
        let x = cfg.q_spec.sample(n, mix(seed, 1))?;
        let y = cfg.p_spec.sample(n, mix(seed, 2))?;
        match kind {
            EstimatorKind::Wkv { gamma } => {
                let est = fit_partition(&x, &y, *gamma)?;
                Ok((est.value, None, None))
            }
            _ => {
                let sigma = resolve_sigma(cfg.sigma_rule, &x, &y)?;
                let kernel = KernelSpec::new(sigma)?;
                let lambda = cfg.lambda_scale / T::cast(n as f64);
                match kind {
                    EstimatorKind::M1 => {
                        let model = fit_m1(&x, &y, &kernel, lambda, &cfg.solver)?;
                        let est = m1_kl_estimate(&model);
                        Ok((est.value, est.solver_iterations, est.duality_gap))
                    }
                    EstimatorKind::M2 => {
                        let model = fit_m2(&x, &y, &kernel, lambda, &cfg.solver)?;
                        let est = m2_kl_estimate(&model);
                        Ok((est.value, est.solver_iterations, est.duality_gap))
                    }
                    EstimatorKind::Chi2 => {
                        let model = fit_chi2(&x, &y, &kernel, lambda)?;
                        let est = chi2_divergence_estimate(&model, &x, &y)?;
                        Ok((est.value, est.solver_iterations, None))
                    }
                    EstimatorKind::Wkv { .. } => unreachable!(),
                }
            }
        }
    })();

    match outcome {
        Ok((estimate, iters, gap)) => SweepRow {
            estimator: label,
            n,
            rep,
            estimate,
            truth,
            abs_error: (estimate - truth).abs(),
            iters,
            gap,
            runtime_ms: None,
            failure: None,
        },
        Err(e) => SweepRow {
            estimator: label,
            n,
            rep,
            estimate: T::nan(),
            truth,
            abs_error: T::nan(),
            iters: None,
            gap: None,
            runtime_ms: None,
            failure: Some(e.to_string()),
        },
    }
}

/// Run the full sweep: one row per `(estimator, n, replication)`, sorted,
/// deterministic in `base_seed`. Individual fit failures never abort the
/// sweep; they yield `NaN` rows carrying the failure message.
pub fn run_sweep<T: Scalar>(cfg: &ExperimentConfig<T>) -> Result<SweepResult<T>> {
    cfg.validate()?;

    // ground truth per estimator: χ² targets ∫p²/q, the rest target KL
    let mut truths = Vec::with_capacity(cfg.estimators.len());
    for kind in &cfg.estimators {
        let truth = match kind {
            EstimatorKind::Chi2 => analytic_chi2(&cfg.p_spec, &cfg.q_spec)?,
            _ => analytic_kl(&cfg.p_spec, &cfg.q_spec)?,
        };
        truths.push(truth.value);
    }

    let mut cells = Vec::new();
    for (k, _) in cfg.estimators.iter().enumerate() {
        for &n in &cfg.n_grid {
            for rep in 0..cfg.replications {
                cells.push((k, n, rep));
            }
        }
    }

    let threads = cfg
        .threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        })
        .clamp(1, cells.len());

    let rows = Mutex::new(Vec::with_capacity(cells.len()));
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(k, n, rep)) = cells.get(idx) else {
                    break;
                };
                let row = run_cell(cfg, &cfg.estimators[k], truths[k], n, rep);
                rows.lock()
                    .expect("worker poisoned the row buffer")
                    .push(row);
            });
        }
    });

    let mut rows = rows.into_inner().expect("worker poisoned the row buffer");
    rows.sort_by(|a, b| (&a.estimator, a.n, a.rep).cmp(&(&b.estimator, b.n, b.rep)));
    Ok(SweepResult { rows })
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Write the sweep as CSV: header plus one row per record, floats in
/// shortest round-trip decimal, `\n` newlines.
pub fn write_csv<T: Scalar>(result: &SweepResult<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        w.write_all(CSV_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
        for r in &result.rows {
            let iters = fmt_opt(&r.iters);
            let gap = fmt_opt(&r.gap);
            let runtime = fmt_opt(&r.runtime_ms);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.estimator, r.n, r.rep, r.estimate, r.truth, r.abs_error, iters, gap, runtime
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

/// Read a sweep CSV written by [`write_csv`].
pub fn read_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<SweepResult<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let lineno = idx + 1;
        if idx == 0 {
            if line != CSV_HEADER {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unexpected header '{line}'"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 9 fields, found {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<T> {
            s.parse::<f64>().map(T::cast).map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad {what} '{s}'"),
            })
        };
        let parse_u = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad {what} '{s}'"),
            })
        };
        let opt_f = |s: &str, what: &str| -> Result<Option<T>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f(s, what).map(Some)
            }
        };
        rows.push(SweepRow {
            estimator: fields[0].to_string(),
            n: parse_u(fields[1], "n")?,
            rep: parse_u(fields[2], "rep")?,
            estimate: parse_f(fields[3], "estimate")?,
            truth: parse_f(fields[4], "truth")?,
            abs_error: parse_f(fields[5], "abs_error")?,
            iters: if fields[6].is_empty() {
                None
            } else {
                Some(parse_u(fields[6], "iters")?)
            },
            gap: opt_f(fields[7], "gap")?,
            runtime_ms: opt_f(fields[8], "runtime_ms")?,
            failure: None,
        });
    }
    Ok(SweepResult { rows })
}

/// Parse a sample file: one point per line, whitespace- or comma-separated
/// coordinates, blank lines and `#` comments skipped; all rows must have the
/// same arity.
pub fn read_samples<T: Scalar>(path: impl AsRef<Path>) -> Result<PointSet<T>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| io_err(path, e))?;

    let mut coords: Vec<T> = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        match dim {
            None => dim = Some(tokens.len()),
            Some(d) if d != tokens.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {d} coordinates, found {}", tokens.len()),
                });
            }
            _ => {}
        }
        for t in tokens {
            let v: f64 = t.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad coordinate '{t}'"),
            })?;
            coords.push(T::cast(v));
        }
    }
    let dim = dim.ok_or_else(|| Error::Parse {
        line: text.lines().count().max(1),
        message: "no data rows".into(),
    })?;
    PointSet::new(coords, dim)
}

/// Per-(estimator, n) aggregate for plotting and rate fitting.
#[derive(Debug, Clone)]
pub struct AggregateRow<T> {
    pub estimator: String,
    pub n: usize,
    pub reps: usize,
    pub failures: usize,
    pub median_estimate: T,
    pub q10_estimate: T,
    pub q90_estimate: T,
    pub median_abs_error: T,
    pub mean_abs_error: T,
}

fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + T::cast(h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Group rows by `(estimator, n)` and summarize; failed rows are counted but
/// excluded from the statistics.
pub fn aggregate<T: Scalar>(result: &SweepResult<T>) -> Vec<AggregateRow<T>> {
    let mut groups: Vec<(&str, usize, Vec<&SweepRow<T>>)> = Vec::new();
    for row in &result.rows {
        match groups
            .iter_mut()
            .find(|(e, n, _)| *e == row.estimator && *n == row.n)
        {
            Some((_, _, v)) => v.push(row),
            None => groups.push((&row.estimator, row.n, vec![row])),
        }
    }
    groups.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    groups
        .into_iter()
        .map(|(estimator, n, rows)| {
            let ok: Vec<&&SweepRow<T>> = rows.iter().filter(|r| r.estimate.is_finite()).collect();
            let mut estimates: Vec<T> = ok.iter().map(|r| r.estimate).collect();
            let mut abs: Vec<T> = ok.iter().map(|r| r.abs_error).collect();
            estimates.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            abs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let (median_estimate, q10_estimate, q90_estimate, median_abs_error, mean_abs_error) =
                if estimates.is_empty() {
                    (T::nan(), T::nan(), T::nan(), T::nan(), T::nan())
                } else {
                    (
                        quantile_sorted(&estimates, 0.5),
                        quantile_sorted(&estimates, 0.1),
                        quantile_sorted(&estimates, 0.9),
                        quantile_sorted(&abs, 0.5),
                        abs.iter().copied().sum::<T>() / T::cast(abs.len() as f64),
                    )
                };
            AggregateRow {
                estimator: estimator.to_string(),
                n,
                reps: rows.len(),
                failures: rows.len() - ok.len(),
                median_estimate,
                q10_estimate,
                q90_estimate,
                median_abs_error,
                mean_abs_error,
            }
        })
        .collect()
}

/// Fitted log-log slope of median absolute error against `n`, per estimator.
/// `None` when fewer than three sample sizes have positive median error.
pub fn rate_slopes<T: Scalar>(aggs: &[AggregateRow<T>]) -> Vec<(String, Option<T>)> {
    let mut names: Vec<&str> = aggs.iter().map(|a| a.estimator.as_str()).collect();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let pts: Vec<(usize, T)> = aggs
                .iter()
                .filter(|a| a.estimator == name && a.median_abs_error > T::zero())
                .map(|a| (a.n, a.median_abs_error))
                .collect();
            let ns: Vec<usize> = pts.iter().map(|p| p.0).collect();
            let errs: Vec<T> = pts.iter().map(|p| p.1).collect();
            (name.to_string(), fit_rate(&ns, &errs).ok())
        })
        .collect()
}

/// Plot-ready aggregate CSV: median and quantile bands per `(estimator, n)`.
pub fn write_aggregate_csv<T: Scalar>(
    aggs: &[AggregateRow<T>],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(
            w,
            "estimator,n,reps,failures,median_estimate,q10_estimate,q90_estimate,median_abs_error,mean_abs_error"
        )?;
        for a in aggs {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                a.estimator,
                a.n,
                a.reps,
                a.failures,
                a.median_estimate,
                a.q10_estimate,
                a.q90_estimate,
                a.median_abs_error,
                a.mean_abs_error
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}
