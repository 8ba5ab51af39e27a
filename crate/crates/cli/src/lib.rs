//! Command implementations for the `pgdmatch` binary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use pgdmatch::autodiff::{gradcheck, ProbeTarget, GRADCHECK_TOL};
use pgdmatch::bench::{
    bench_csv, bench_kv, converge_csv, draw_instances, median_times, run_bench, run_converge, BenchOptions,
    ConvergeOptions,
};
use pgdmatch::cost::{build_cost, synth_masks, validate_lambda, FeatureSet, Observations, Rect};
use pgdmatch::io::{format_matrix, parse_cost_matrix, ResultDocument};
use pgdmatch::matcher::{solve, AverageMode, InitMode, Preset, SolverConfig};
use pgdmatch::rng::SplitMix64;
use pgdmatch::MatchError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_SHAPE: i32 = 2;
pub const EXIT_GRADCHECK: i32 = 3;

/// Steps below this lose most digits to cancellation in central differences.
const CANCELLATION_WARN_H: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "pgdmatch", version, about = "Relaxed linear assignment by projected gradient descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one cost matrix read from a whitespace-separated text file.
    Solve(SolveArgs),
    /// Compare pgd, Hungarian and greedy on seeded uniform instances.
    Bench(BenchArgs),
    /// Emit objective and inner-residual curves for a hyperparameter sweep.
    Converge(ConvergeArgs),
    /// Check reverse-mode gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Write a cost-matrix file built from seeded synthetic masks and features.
    Cost(CostArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    PaperFast,
    PaperConverged,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::PaperFast => Preset::PaperFast,
            PresetArg::PaperConverged => Preset::PaperConverged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Uniform,
    Random,
}

impl From<InitArg> for InitMode {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Uniform => InitMode::Uniform,
            InitArg::Random => InitMode::RandomFeasible,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AverageArg {
    ExcludeInit,
    IncludeInit,
}

impl From<AverageArg> for AverageMode {
    fn from(a: AverageArg) -> Self {
        match a {
            AverageArg::ExcludeInit => AverageMode::ExcludeInit,
            AverageArg::IncludeInit => AverageMode::IncludeInit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Kv,
}

/// Solver flags shared by every command; explicit values override the preset.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "paper-fast")]
    pub preset: PresetArg,
    #[arg(long)]
    pub n_grad: Option<usize>,
    #[arg(long)]
    pub n_proj: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum, default_value = "uniform")]
    pub init: InitArg,
    #[arg(long, value_enum, default_value = "exclude-init")]
    pub average: AverageArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::preset(self.preset.into())
            .with_init(self.init.into())
            .with_average_mode(self.average.into())
            .with_seed(self.seed);
        if let Some(v) = self.n_grad {
            c.n_grad = v;
        }
        if let Some(v) = self.n_proj {
            c.n_proj = v;
        }
        if let Some(v) = self.lr {
            c.learning_rate = v;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Cost matrix file: one row per line, whitespace-separated reals.
    pub cost_file: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Result file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    #[arg(long, default_value_t = 100)]
    pub cols: usize,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Greedy leaves a row unassigned when its best cost exceeds this.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    #[arg(long, default_value_t = 100)]
    pub cols: usize,
    /// Outer-step counts to sweep (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "400")]
    pub n_grad: Vec<usize>,
    /// Inner-cycle counts to sweep (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub n_proj: Vec<usize>,
    /// Learning rates to sweep (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub lr: Vec<f64>,
    /// Number of starting points per configuration.
    #[arg(long, default_value_t = 1)]
    pub inits: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub init: InitArg,
    #[arg(long, value_enum, default_value = "exclude-init")]
    pub average: AverageArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 3)]
    pub rows: usize,
    #[arg(long, default_value_t = 6)]
    pub cols: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Number of templates.
    #[arg(long, default_value_t = 3)]
    pub rows: usize,
    /// Number of proposals.
    #[arg(long, default_value_t = 6)]
    pub cols: usize,
    /// Weight of mask IoU against feature cosine similarity.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command: exit code plus diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<MatchError> for CommandError {
    fn from(e: MatchError) -> Self {
        let code = if e.is_shape_error() { EXIT_SHAPE } else { EXIT_PARSE };
        Self::new(code, e.to_string())
    }
}

/// What a successful command produced: the main document and any notes for
/// stderr.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

fn emit(out: Option<&Path>, text: String) -> Result<String, CommandError> {
    match out {
        Some(path) => {
            fs::write(path, text)
                .map_err(|e| CommandError::new(EXIT_PARSE, format!("cannot write {}: {e}", path.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn validate_dims(rows: usize, cols: usize) -> Result<(), CommandError> {
    if rows == 0 || cols == 0 {
        return Err(CommandError::new(EXIT_SHAPE, "rows and cols must be positive"));
    }
    if rows > cols {
        return Err(MatchError::TooManyRows { rows, cols }.into());
    }
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs) -> Result<Outcome, CommandError> {
    let text = fs::read_to_string(&args.cost_file).map_err(|e| {
        CommandError::new(EXIT_PARSE, format!("cannot read {}: {e}", args.cost_file.display()))
    })?;
    let cost = parse_cost_matrix(&text).map_err(|e| CommandError::new(EXIT_PARSE, e.to_string()))?;
    let config = args.solver.config();
    config.validate().map_err(|e| CommandError::new(EXIT_PARSE, e.to_string()))?;
    let report = solve(&cost, &config, None)?;
    let doc = ResultDocument::from_report(&cost, &config, &report);
    Ok(Outcome {
        stdout: emit(args.out.as_deref(), doc.to_text())?,
        ..Outcome::default()
    })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Outcome, CommandError> {
    if args.trials == 0 {
        return Err(CommandError::new(EXIT_PARSE, "--trials must be at least 1"));
    }
    validate_dims(args.rows, args.cols)?;
    let config = args.solver.config();
    config.validate().map_err(|e| CommandError::new(EXIT_PARSE, e.to_string()))?;
    let records = run_bench(&BenchOptions {
        rows: args.rows,
        cols: args.cols,
        trials: args.trials,
        seed: args.solver.seed,
        config,
        threshold: args.threshold,
    })?;
    let body = match args.format {
        FormatArg::Csv => bench_csv(&records),
        FormatArg::Kv => bench_kv(&records),
    };
    let mut stderr = String::from("median wall time (s):\n");
    for (method, t) in median_times(&records) {
        stderr.push_str(&format!("  {:<10} {t:.6}\n", method.to_string()));
    }
    Ok(Outcome {
        stdout: emit(args.out.as_deref(), body)?,
        stderr,
        code: EXIT_OK,
    })
}

pub fn cmd_converge(args: &ConvergeArgs) -> Result<Outcome, CommandError> {
    if args.n_grad.is_empty() || args.n_proj.is_empty() || args.lr.is_empty() {
        return Err(CommandError::new(EXIT_PARSE, "sweep lists must be non-empty"));
    }
    if args.inits == 0 {
        return Err(CommandError::new(EXIT_PARSE, "--inits must be at least 1"));
    }
    validate_dims(args.rows, args.cols)?;
    let opts = ConvergeOptions {
        rows: args.rows,
        cols: args.cols,
        seed: args.seed,
        n_grads: args.n_grad.clone(),
        n_projs: args.n_proj.clone(),
        learning_rates: args.lr.clone(),
        inits: args.inits,
        init: args.init.into(),
        base: SolverConfig::paper_converged().with_average_mode(args.average.into()),
    };
    for c in pgdmatch::bench::sweep_configs(&opts) {
        c.validate().map_err(|e| CommandError::new(EXIT_PARSE, e.to_string()))?;
    }
    let (_, rows) = run_converge(&opts)?;
    Ok(Outcome {
        stdout: emit(args.out.as_deref(), converge_csv(&rows))?,
        ..Outcome::default()
    })
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<Outcome, CommandError> {
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(CommandError::new(EXIT_PARSE, "--h must be positive"));
    }
    validate_dims(args.rows, args.cols)?;
    let config = args.solver.config();
    config.validate().map_err(|e| CommandError::new(EXIT_PARSE, e.to_string()))?;
    let (cost, weights) = gradcheck_instance(args.rows, args.cols, args.solver.seed)?;

    let mut stderr = String::new();
    if args.h < CANCELLATION_WARN_H {
        stderr.push_str(&format!(
            "warning: h = {:e} is below {:e}; central differences lose most digits to cancellation\n",
            args.h, CANCELLATION_WARN_H
        ));
    }
    let check = gradcheck(&cost, &config, None, weights.view(), ProbeTarget::Assignment, args.h)?;
    let passed = check.passed(GRADCHECK_TOL);
    let stdout = format!(
        "max_rel_error = {}\ncompared = {}\nexcluded = {}\nmin_branch_slack = {}\ntolerance = {}\nstatus = {}\n",
        check.max_rel_error,
        check.compared,
        check.excluded.len(),
        check.min_slack,
        GRADCHECK_TOL,
        if passed { "pass" } else { "fail" }
    );
    Ok(Outcome {
        stdout,
        stderr,
        code: if passed { EXIT_OK } else { EXIT_GRADCHECK },
    })
}

/// Cost matrix followed by probe weights, both drawn from one seeded stream.
pub fn gradcheck_instance(
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<(pgdmatch::CostMatrix, ndarray::Array2<f64>), MatchError> {
    let cost = draw_instances(rows, cols, 1, seed)?.remove(0);
    let mut rng = SplitMix64::new(seed);
    // Skip past the cost draws so the weights are fresh.
    for _ in 0..rows * cols {
        rng.next_u64();
    }
    Ok((cost, rng.uniform_matrix(rows, cols)))
}

const SYNTH_GRID: usize = 16;
const SYNTH_FEATURE_DIM: usize = 8;

fn synth_observations(rng: &mut SplitMix64, count: usize) -> Result<Observations, MatchError> {
    let rects: Vec<Rect> = (0..count)
        .map(|_| {
            let x = rng.range_inclusive(0, SYNTH_GRID - 2);
            let y = rng.range_inclusive(0, SYNTH_GRID - 2);
            let w = rng.range_inclusive(1, SYNTH_GRID - x);
            let h = rng.range_inclusive(1, SYNTH_GRID - y);
            Rect::new(x, y, w, h)
        })
        .collect();
    let masks = synth_masks(&rects, SYNTH_GRID, SYNTH_GRID)?;
    // Shifted away from zero so no feature vector has zero norm.
    let features = (0..count)
        .map(|_| (0..SYNTH_FEATURE_DIM).map(|_| rng.next_f64() + 1e-3).collect())
        .collect();
    Observations::new(masks, FeatureSet::new(features)?)
}

pub fn cmd_cost(args: &CostArgs) -> Result<Outcome, CommandError> {
    validate_lambda(args.lambda).map_err(|e| CommandError::new(EXIT_PARSE, e.to_string()))?;
    validate_dims(args.rows, args.cols)?;
    let mut rng = SplitMix64::new(args.seed);
    let templates = synth_observations(&mut rng, args.rows)?;
    let proposals = synth_observations(&mut rng, args.cols)?;
    let cost = build_cost(&templates, &proposals, args.lambda)?;
    Ok(Outcome {
        stdout: emit(args.out.as_deref(), format_matrix(cost.values()))?,
        ..Outcome::default()
    })
}

pub fn run(cli: &Cli) -> Result<Outcome, CommandError> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Converge(a) => cmd_converge(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Cost(a) => cmd_cost(a),
    }
}
