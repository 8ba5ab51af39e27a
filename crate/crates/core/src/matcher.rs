//! Projected gradient descent over the matching polytope.
//!
//! Each outer step takes a gradient step `X ← X − α·C` (the objective is
//! linear, so the gradient is `C` itself) and then runs `n_proj` Dykstra
//! cycles with freshly zeroed corrections. The returned assignment is the
//! mean of the post-projection iterates.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use crate::error::{MatchError, Result};
use crate::matrix::CostMatrix;
use crate::polytope::{dykstra_project, CycleBranches, DykstraKernel, ResidualSummary, REFERENCE_CYCLES};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Every entry `1/m`; feasible whenever `n ≤ m`.
    #[default]
    Uniform,
    /// Caller-supplied starting point.
    Custom,
    /// Uniform `[0, 1)` draws from the seeded generator, projected with
    /// [`REFERENCE_CYCLES`] Dykstra cycles.
    RandomFeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AverageMode {
    /// Mean of `X¹ … X^N`.
    #[default]
    ExcludeInit,
    /// Mean of `X⁰ … X^N`.
    IncludeInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 40 outer steps, 5 inner cycles, α = 0.1.
    PaperFast,
    /// 400 outer steps, 50 inner cycles, α = 0.01.
    PaperConverged,
}

impl FromStr for Preset {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-fast" => Ok(Preset::PaperFast),
            "paper-converged" => Ok(Preset::PaperConverged),
            other => Err(MatchError::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::PaperFast => "paper-fast",
            Preset::PaperConverged => "paper-converged",
        })
    }
}

impl FromStr for InitMode {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InitMode::Uniform),
            "custom" => Ok(InitMode::Custom),
            "random" | "random-feasible" => Ok(InitMode::RandomFeasible),
            other => Err(MatchError::InvalidConfig(format!("unknown init mode {other:?}"))),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Uniform => "uniform",
            InitMode::Custom => "custom",
            InitMode::RandomFeasible => "random-feasible",
        })
    }
}

impl FromStr for AverageMode {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude-init" => Ok(AverageMode::ExcludeInit),
            "include-init" => Ok(AverageMode::IncludeInit),
            other => Err(MatchError::InvalidConfig(format!("unknown average mode {other:?}"))),
        }
    }
}

impl fmt::Display for AverageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AverageMode::ExcludeInit => "exclude-init",
            AverageMode::IncludeInit => "include-init",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_grad: usize,
    pub n_proj: usize,
    pub learning_rate: f64,
    pub init: InitMode,
    pub average_mode: AverageMode,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::preset(Preset::PaperFast)
    }
}

impl SolverConfig {
    pub fn preset(preset: Preset) -> Self {
        let (n_grad, n_proj, learning_rate) = match preset {
            Preset::PaperFast => (40, 5, 0.1),
            Preset::PaperConverged => (400, 50, 0.01),
        };
        Self {
            n_grad,
            n_proj,
            learning_rate,
            init: InitMode::Uniform,
            average_mode: AverageMode::ExcludeInit,
            seed: 0,
        }
    }

    pub fn paper_fast() -> Self {
        Self::preset(Preset::PaperFast)
    }

    pub fn paper_converged() -> Self {
        Self::preset(Preset::PaperConverged)
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn with_init(mut self, init: InitMode) -> Self {
        self.init = init;
        self
    }

    pub fn with_average_mode(mut self, mode: AverageMode) -> Self {
        self.average_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grad == 0 {
            return Err(MatchError::InvalidConfig("n_grad must be at least 1".into()));
        }
        if self.n_proj == 0 {
            return Err(MatchError::InvalidConfig("n_proj must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MatchError::InvalidConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// The averaged iterate `X̂`.
    pub assignment: Array2<f64>,
    /// `X̂` after [`confidence_mask`].
    pub masked_assignment: Array2<f64>,
    /// The starting point `X⁰`.
    pub initial: Array2<f64>,
    /// `Tr(C Xⁱᵀ)` for each post-projection iterate.
    pub objective_trace: Vec<f64>,
    pub feasibility_trace: Vec<ResidualSummary>,
    /// Dykstra cycle-to-cycle residuals, one vector per outer step.
    pub inner_residuals: Vec<Vec<f64>>,
    /// Seconds.
    pub wall_time: f64,
}

impl SolveReport {
    /// `Tr(C X̂ᵀ)`.
    pub fn objective(&self, cost: &CostMatrix) -> f64 {
        cost.objective(self.assignment.view())
    }

    /// Equality of everything but `wall_time`.
    pub fn same_result(&self, other: &SolveReport) -> bool {
        self.assignment == other.assignment
            && self.masked_assignment == other.masked_assignment
            && self.initial == other.initial
            && self.objective_trace == other.objective_trace
            && self.feasibility_trace == other.feasibility_trace
            && self.inner_residuals == other.inner_residuals
    }
}

/// Starting point for `config`, validated against the cost shape.
pub fn initial_point(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
) -> Result<Array2<f64>> {
    let (n, m) = cost.shape();
    if let Some(x) = x_init {
        if x.dim() != (n, m) {
            return Err(MatchError::ShapeMismatch {
                expected: (n, m),
                got: x.dim(),
            });
        }
        return Ok(x.as_standard_layout().into_owned());
    }
    match config.init {
        InitMode::Uniform => Ok(Array2::from_elem((n, m), 1.0 / m as f64)),
        InitMode::RandomFeasible => {
            let raw = SplitMix64::new(config.seed).uniform_matrix(n, m);
            Ok(dykstra_project(raw.view(), REFERENCE_CYCLES).0)
        }
        InitMode::Custom => Err(MatchError::InvalidConfig(
            "custom init requires a starting matrix".into(),
        )),
    }
}

/// Output of one forward unroll. `branches[i][j]` is the branch pattern of
/// cycle `j` in outer step `i` when recording was requested.
pub(crate) struct Unroll {
    pub report: SolveReport,
    pub branches: Vec<Vec<CycleBranches>>,
}

pub(crate) fn unroll(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
    record: bool,
) -> Result<Unroll> {
    let start = Instant::now();
    config.validate()?;
    cost.ensure_wide()?;
    let (n, m) = cost.shape();
    let initial = initial_point(cost, config, x_init)?;

    let c = cost.values().as_slice().expect("standard layout");
    let alpha = config.learning_rate;
    let mut x = initial.clone();
    let mut sum = match config.average_mode {
        AverageMode::ExcludeInit => Array2::zeros((n, m)),
        AverageMode::IncludeInit => initial.clone(),
    };
    let mut kernel = DykstraKernel::new(n, m);
    let mut objective_trace = Vec::with_capacity(config.n_grad);
    let mut feasibility_trace = Vec::with_capacity(config.n_grad);
    let mut inner_residuals = Vec::with_capacity(config.n_grad);
    let mut branches = Vec::with_capacity(if record { config.n_grad } else { 0 });

    for _ in 0..config.n_grad {
        let buf = x.as_slice_mut().expect("standard layout");
        for (v, cv) in buf.iter_mut().zip(c) {
            *v -= alpha * cv;
        }
        let mut trace = Vec::with_capacity(config.n_proj);
        let mut rec = Vec::new();
        kernel.run(
            buf,
            config.n_proj,
            &mut trace,
            if record { Some(&mut rec) } else { None },
        );
        if record {
            branches.push(rec);
        }
        inner_residuals.push(trace);
        objective_trace.push(cost.objective(x.view()));
        feasibility_trace.push(ResidualSummary::of(x.view()));
        sum += &x;
    }

    let count = match config.average_mode {
        AverageMode::ExcludeInit => config.n_grad,
        AverageMode::IncludeInit => config.n_grad + 1,
    };
    let assignment = sum / count as f64;
    let masked_assignment = confidence_mask(assignment.view());
    Ok(Unroll {
        report: SolveReport {
            assignment,
            masked_assignment,
            initial,
            objective_trace,
            feasibility_trace,
            inner_residuals,
            wall_time: start.elapsed().as_secs_f64(),
        },
        branches,
    })
}

/// Runs the solver. `x_init`, when given, overrides `config.init`.
pub fn solve(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
) -> Result<SolveReport> {
    unroll(cost, config, x_init, false).map(|u| u.report)
}

/// Index of the first maximal entry of each row.
pub fn row_argmax(x: ArrayView2<'_, f64>) -> Vec<usize> {
    x.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Keeps each row's maximal entry (lowest column on ties) with its score and
/// zeroes the rest. Scores are not renormalized.
pub fn confidence_mask(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    for (i, j) in row_argmax(x).into_iter().enumerate() {
        if x.ncols() > 0 {
            out[[i, j]] = x[[i, j]];
        }
    }
    out
}

/// Least-squares fit of `r_j = ρ·c^(j+1)` to a residual sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricFit {
    pub rho: f64,
    pub c: f64,
}

/// Fits `log r_j = log ρ + (j+1)·log c` over the strictly positive entries.
/// `first_index` is the 0-based cycle index of `residuals[0]`, so a tail
/// slice can be fitted without shifting `ρ`. Returns `None` with fewer than
/// two usable points.
pub fn fit_geometric(residuals: &[f64], first_index: usize) -> Option<GeometricFit> {
    let points: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0 && r.is_finite())
        .map(|(j, r)| ((first_index + j + 1) as f64, r.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Some(GeometricFit {
        rho: intercept.exp(),
        c: slope.exp(),
    })
}

/// Quantities from the convergence theorem for a given instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremBounds {
    /// `‖X⁰ − X*‖_F`
    pub r0: f64,
    /// Outer-step bound `⌈6·r0² / (α·ε)⌉`.
    pub k: u64,
    /// Learning-rate ceiling `min(15·r0, r0/‖C‖_F)`.
    pub alpha_max: f64,
    /// `⌈log_{1/c}(ρ·√(15K/(αε)))⌉` with fitted constants; `None` when no
    /// residuals were supplied or the fit is not contracting.
    pub n_proj_min: Option<u64>,
    pub fit: Option<GeometricFit>,
}

impl TheoremBounds {
    pub fn alpha_admissible(&self, alpha: f64) -> bool {
        alpha > 0.0 && alpha < self.alpha_max
    }
}

pub fn theorem_bounds(
    cost: &CostMatrix,
    x_init: ArrayView2<'_, f64>,
    x_opt: ArrayView2<'_, f64>,
    alpha: f64,
    epsilon: f64,
    inner_residuals: Option<&[f64]>,
) -> Result<TheoremBounds> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MatchError::InvalidEpsilon(epsilon));
    }
    if x_init.dim() != cost.shape() {
        return Err(MatchError::ShapeMismatch {
            expected: cost.shape(),
            got: x_init.dim(),
        });
    }
    if x_opt.dim() != cost.shape() {
        return Err(MatchError::ShapeMismatch {
            expected: cost.shape(),
            got: x_opt.dim(),
        });
    }
    let r0_sq: f64 = x_init
        .iter()
        .zip(x_opt.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(bounds_from_r0_sq(r0_sq, cost.frobenius_norm(), alpha, epsilon, inner_residuals))
}

/// Same formulas from the squared distance, which keeps `K` exact when `r0²`
/// is representable.
pub(crate) fn bounds_from_r0_sq(
    r0_sq: f64,
    cost_norm: f64,
    alpha: f64,
    epsilon: f64,
    inner_residuals: Option<&[f64]>,
) -> TheoremBounds {
    let r0 = r0_sq.sqrt();
    let k = (6.0 * r0_sq / (alpha * epsilon)).ceil() as u64;
    let alpha_max = if cost_norm > 0.0 {
        (15.0 * r0).min(r0 / cost_norm)
    } else {
        15.0 * r0
    };
    let fit = inner_residuals.and_then(|r| fit_geometric(r, 0));
    let n_proj_min = fit.and_then(|f| {
        if f.c > 0.0 && f.c < 1.0 {
            let target = f.rho * (15.0 * k as f64 / (alpha * epsilon)).sqrt();
            Some((target.ln() / (1.0 / f.c).ln()).ceil().max(0.0) as u64)
        } else {
            None
        }
    });
    TheoremBounds {
        r0,
        k,
        alpha_max,
        n_proj_min,
        fit,
    }
}
