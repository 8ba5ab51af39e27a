//! Benchmark and convergence-sweep harness behind the CLI.
//!
//! Instances are uniform `[0, 1)` cost matrices drawn row-major, one after
//! another, from a single [`SplitMix64`] stream seeded by the caller. Work is
//! spread over instances with rayon; results are collected in instance order
//! so output never depends on scheduling.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::exact::{greedy, hungarian, round_to_hard};
use crate::matcher::{solve, InitMode, SolverConfig};
use crate::matrix::CostMatrix;
use crate::polytope::{feasibility, REFERENCE_CYCLES};
use crate::rng::SplitMix64;

/// Smallest wall time reported, so records always carry a positive time.
const MIN_WALL_TIME: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Pgd,
    Hungarian,
    Greedy,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pgd => "pgd",
            Method::Hungarian => "hungarian",
            Method::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub instance_id: usize,
    pub method: Method,
    /// Relaxed objective `Tr(C X̂ᵀ)` for pgd, matching cost otherwise.
    pub objective: f64,
    /// Cost of the hard matching (pgd is rounded first).
    pub hard_objective: f64,
    pub feasibility_distance: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub rows: usize,
    pub cols: usize,
    pub trials: usize,
    pub seed: u64,
    pub config: SolverConfig,
    pub threshold: Option<f64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 100,
            trials: 3,
            seed: 0,
            config: SolverConfig::default(),
            threshold: None,
        }
    }
}

/// `count` uniform instances from one seeded stream.
pub fn draw_instances(rows: usize, cols: usize, count: usize, seed: u64) -> Result<Vec<CostMatrix>> {
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|_| CostMatrix::new(rng.uniform_matrix(rows, cols)))
        .collect()
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64().max(MIN_WALL_TIME)
}

/// Runs pgd, Hungarian and greedy on every instance; three records per
/// instance, in instance then method order.
pub fn run_bench(opts: &BenchOptions) -> Result<Vec<BenchRecord>> {
    let instances = draw_instances(opts.rows, opts.cols, opts.trials, opts.seed)?;
    let per_instance: Vec<Result<[BenchRecord; 3]>> = instances
        .par_iter()
        .enumerate()
        .map(|(id, cost)| bench_instance(id, cost, &opts.config, opts.threshold))
        .collect();
    let mut out = Vec::with_capacity(3 * per_instance.len());
    for recs in per_instance {
        out.extend(recs?);
    }
    Ok(out)
}

pub fn bench_instance(
    instance_id: usize,
    cost: &CostMatrix,
    config: &SolverConfig,
    threshold: Option<f64>,
) -> Result<[BenchRecord; 3]> {
    let start = Instant::now();
    let report = solve(cost, config, None)?;
    let pgd_time = elapsed(start);
    let rounded = round_to_hard(report.assignment.view(), Some(cost))?;
    let pgd = BenchRecord {
        instance_id,
        method: Method::Pgd,
        objective: report.objective(cost),
        hard_objective: rounded.objective,
        feasibility_distance: feasibility(report.assignment.view(), REFERENCE_CYCLES).distance_estimate,
        wall_time_s: pgd_time,
    };

    let start = Instant::now();
    let exact = hungarian(cost)?;
    let hungarian_rec = BenchRecord {
        instance_id,
        method: Method::Hungarian,
        objective: exact.objective,
        hard_objective: exact.objective,
        feasibility_distance: 0.0,
        wall_time_s: elapsed(start),
    };

    let start = Instant::now();
    let g = greedy(cost, threshold);
    let greedy_rec = BenchRecord {
        instance_id,
        method: Method::Greedy,
        objective: g.objective,
        hard_objective: g.objective,
        feasibility_distance: 0.0,
        wall_time_s: elapsed(start),
    };
    Ok([pgd, hungarian_rec, greedy_rec])
}

pub const BENCH_CSV_HEADER: &str =
    "instance_id,method,objective,hard_objective,feasibility_distance,wall_time_s";

pub fn bench_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(BENCH_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.instance_id, r.method, r.objective, r.hard_objective, r.feasibility_distance, r.wall_time_s
        ));
    }
    s
}

/// One `key = value` block per record, separated by blank lines.
pub fn bench_kv(records: &[BenchRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "instance_id = {}\nmethod = {}\nobjective = {}\nhard_objective = {}\nfeasibility_distance = {}\nwall_time_s = {}\n",
                r.instance_id, r.method, r.objective, r.hard_objective, r.feasibility_distance, r.wall_time_s
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Median wall time per method, in method order.
pub fn median_times(records: &[BenchRecord]) -> Vec<(Method, f64)> {
    [Method::Pgd, Method::Hungarian, Method::Greedy]
        .into_iter()
        .filter_map(|method| {
            let mut t: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method)
                .map(|r| r.wall_time_s)
                .collect();
            if t.is_empty() {
                return None;
            }
            t.sort_by(f64::total_cmp);
            let mid = t.len() / 2;
            let median = if t.len() % 2 == 1 {
                t[mid]
            } else {
                0.5 * (t[mid - 1] + t[mid])
            };
            Some((method, median))
        })
        .collect()
}

/// Sweep over the cartesian product of outer steps, inner cycles and
/// learning rates, each run from `inits` starting points.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeOptions {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub n_grads: Vec<usize>,
    pub n_projs: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub inits: usize,
    pub init: InitMode,
    pub base: SolverConfig,
}

impl Default for ConvergeOptions {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 100,
            seed: 0,
            n_grads: vec![400],
            n_projs: vec![50],
            learning_rates: vec![0.01],
            inits: 1,
            init: InitMode::RandomFeasible,
            base: SolverConfig::paper_converged(),
        }
    }
}

/// Seed of the `k`-th random starting point in a sweep.
pub fn init_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64 + 1)
}

/// Long-format sweep row. Objective rows leave the inner columns empty;
/// residual rows leave `objective` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub config: String,
    pub init: usize,
    pub outer_step: usize,
    pub objective: Option<f64>,
    pub inner_cycle: Option<usize>,
    pub inner_residual: Option<f64>,
}

pub fn config_label(config: &SolverConfig) -> String {
    format!("g{}-p{}-lr{}", config.n_grad, config.n_proj, config.learning_rate)
}

/// Expands the sweep into solver configurations, in output order.
pub fn sweep_configs(opts: &ConvergeOptions) -> Vec<SolverConfig> {
    let mut out = Vec::new();
    for &n_grad in &opts.n_grads {
        for &n_proj in &opts.n_projs {
            for &learning_rate in &opts.learning_rates {
                let mut c = opts.base.clone();
                c.n_grad = n_grad;
                c.n_proj = n_proj;
                c.learning_rate = learning_rate;
                c.init = opts.init;
                out.push(c);
            }
        }
    }
    out
}

/// Runs the sweep on one instance drawn from `opts.seed`. Outer steps and
/// inner cycles are 1-based in the output.
pub fn run_converge(opts: &ConvergeOptions) -> Result<(CostMatrix, Vec<ConvergeRow>)> {
    let cost = draw_instances(opts.rows, opts.cols, 1, opts.seed)?.remove(0);
    let jobs: Vec<(SolverConfig, usize)> = sweep_configs(opts)
        .into_iter()
        .flat_map(|c| (0..opts.inits).map(move |k| (c.clone(), k)))
        .collect();
    let chunks: Vec<Result<Vec<ConvergeRow>>> = jobs
        .par_iter()
        .map(|(config, k)| {
            let config = config.clone().with_seed(init_seed(opts.seed, *k));
            let report = solve(&cost, &config, None)?;
            let label = config_label(&config);
            let mut rows = Vec::with_capacity(config.n_grad * (config.n_proj + 1));
            for (i, (obj, inner)) in report
                .objective_trace
                .iter()
                .zip(&report.inner_residuals)
                .enumerate()
            {
                rows.push(ConvergeRow {
                    config: label.clone(),
                    init: *k,
                    outer_step: i + 1,
                    objective: Some(*obj),
                    inner_cycle: None,
                    inner_residual: None,
                });
                rows.extend(inner.iter().enumerate().map(|(j, r)| ConvergeRow {
                    config: label.clone(),
                    init: *k,
                    outer_step: i + 1,
                    objective: None,
                    inner_cycle: Some(j + 1),
                    inner_residual: Some(*r),
                }));
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    Ok((cost, rows))
}

pub const CONVERGE_CSV_HEADER: &str = "config,init,outer_step,objective,inner_cycle,inner_residual";

pub fn converge_csv(rows: &[ConvergeRow]) -> String {
    fn cell<T: fmt::Display>(v: &Option<T>) -> String {
        v.as_ref().map(ToString::to_string).unwrap_or_default()
    }
    let mut s = String::from(CONVERGE_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config,
            r.init,
            r.outer_step,
            cell(&r.objective),
            cell(&r.inner_cycle),
            cell(&r.inner_residual)
        ));
    }
    s
}

/// Mean objective curve over `inits` random starting points, one entry per
/// outer step.
pub fn mean_objective_curve(cost: &CostMatrix, config: &SolverConfig, inits: usize, seed: u64) -> Result<Vec<f64>> {
    let curves: Vec<Result<Vec<f64>>> = (0..inits)
        .into_par_iter()
        .map(|k| {
            let c = config
                .clone()
                .with_init(InitMode::RandomFeasible)
                .with_seed(init_seed(seed, k));
            solve(cost, &c, None).map(|r| r.objective_trace)
        })
        .collect();
    let mut mean = vec![0.0; config.n_grad];
    for curve in curves {
        for (m, v) in mean.iter_mut().zip(curve?) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= inits as f64);
    Ok(mean)
}
