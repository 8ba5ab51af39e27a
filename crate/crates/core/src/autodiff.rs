//! Reverse-mode gradients through the unrolled solver.
//!
//! With the branch pattern of every Dykstra cycle frozen (which columns were
//! over capacity, which entries survived the ReLU), each cycle is affine in
//! its input, so replaying the recorded unroll backwards gives the exact
//! gradient of the piecewise-linear map `C ↦ X̂` away from branch switches.
//! ReLU contributes derivative 0 at exactly zero.
//!
//! The probe loss is linear, `Σ w_ij · X̂_ij`; richer losses can be built by
//! chaining their own cotangent into the same reverse pass.

use ndarray::{Array2, ArrayView2};

use crate::error::{MatchError, Result};
use crate::matcher::{row_argmax, unroll, AverageMode, SolveReport, SolverConfig};
use crate::matrix::CostMatrix;
use crate::polytope::CycleBranches;

/// Denominator floor used by [`relative_error`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Pass/fail threshold for gradient checks.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    /// `∂loss/∂C`, same shape as `C`.
    pub grad_cost: Array2<f64>,
    pub loss_value: f64,
}

/// Which output the probe loss reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeTarget {
    /// The averaged assignment `X̂`.
    #[default]
    Assignment,
    /// The confidence-masked assignment. The argmax is frozen, so only each
    /// row's kept entry passes gradient.
    Masked,
}

fn check_weights(cost: &CostMatrix, weights: ArrayView2<'_, f64>) -> Result<()> {
    if weights.dim() != cost.shape() {
        return Err(MatchError::ShapeMismatch {
            expected: cost.shape(),
            got: weights.dim(),
        });
    }
    Ok(())
}

/// Cotangent of the probe loss with respect to `X̂`.
fn output_cotangent(
    assignment: ArrayView2<'_, f64>,
    weights: ArrayView2<'_, f64>,
    target: ProbeTarget,
) -> Array2<f64> {
    match target {
        ProbeTarget::Assignment => weights.to_owned(),
        ProbeTarget::Masked => {
            let mut g = Array2::zeros(weights.dim());
            for (i, j) in row_argmax(assignment).into_iter().enumerate() {
                g[[i, j]] = weights[[i, j]];
            }
            g
        }
    }
}

fn probe_loss(report: &SolveReport, weights: ArrayView2<'_, f64>, target: ProbeTarget) -> f64 {
    let out = match target {
        ProbeTarget::Assignment => report.assignment.view(),
        ProbeTarget::Masked => report.masked_assignment.view(),
    };
    out.iter().zip(weights.iter()).map(|(x, w)| x * w).sum()
}

/// Solves with `config.init` and differentiates `Σ w ⊙ X̂` with respect to `C`.
pub fn solve_with_grad(
    cost: &CostMatrix,
    config: &SolverConfig,
    loss_weights: ArrayView2<'_, f64>,
) -> Result<(SolveReport, GradientResult)> {
    solve_with_grad_from(cost, config, None, loss_weights, ProbeTarget::Assignment)
}

pub fn solve_with_grad_from(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
    loss_weights: ArrayView2<'_, f64>,
    target: ProbeTarget,
) -> Result<(SolveReport, GradientResult)> {
    check_weights(cost, loss_weights)?;
    let tape = unroll(cost, config, x_init, true)?;
    let report = tape.report;
    let loss_value = probe_loss(&report, loss_weights, target);
    let seed = output_cotangent(report.assignment.view(), loss_weights, target);
    let grad_cost = backward(cost, config, &tape.branches, seed);
    Ok((
        report,
        GradientResult {
            grad_cost,
            loss_value,
        },
    ))
}

/// Reverse pass over the recorded unroll. `seed` is `∂loss/∂X̂`.
fn backward(
    cost: &CostMatrix,
    config: &SolverConfig,
    branches: &[Vec<CycleBranches>],
    seed: Array2<f64>,
) -> Array2<f64> {
    let (n, m) = cost.shape();
    let count = match config.average_mode {
        AverageMode::ExcludeInit => config.n_grad,
        AverageMode::IncludeInit => config.n_grad + 1,
    } as f64;
    let direct: Vec<f64> = seed.iter().map(|g| g / count).collect();
    let alpha = config.learning_rate;

    let mut carry = vec![0.0; n * m];
    let mut grad_c = vec![0.0; n * m];
    let mut gy = vec![0.0; n * m];
    let mut gq = [vec![0.0; n * m], vec![0.0; n * m], vec![0.0; n * m]];
    let mut tmp = vec![0.0; n * m];

    for cycles in branches.iter().rev() {
        for (g, (c, d)) in gy.iter_mut().zip(carry.iter().zip(&direct)) {
            *g = c + d;
        }
        for q in &mut gq {
            q.iter_mut().for_each(|v| *v = 0.0);
        }
        let [gq1, gq2, gq3] = &mut gq;
        for b in cycles.iter().rev() {
            // Y₃ = relu(D), q₃' = D − Y₃, D = Y₂ + q₃
            for k in 0..n * m {
                let through = gy[k] - gq3[k];
                let gd = gq3[k] + if b.relu_active[k] { through } else { 0.0 };
                gy[k] = gd;
                gq3[k] = gd;
            }
            // Y₂ = P₂(B), q₂' = B − Y₂, B = Y₁ + q₂
            for k in 0..n * m {
                tmp[k] = gy[k] - gq2[k];
            }
            for j in 0..m {
                if b.col_active[j] {
                    let mean = (0..n).map(|i| tmp[i * m + j]).sum::<f64>() / n as f64;
                    for i in 0..n {
                        tmp[i * m + j] -= mean;
                    }
                }
            }
            for k in 0..n * m {
                let gb = gq2[k] + tmp[k];
                gy[k] = gb;
                gq2[k] = gb;
            }
            // Y₁ = P₁(A), q₁' = A − Y₁, A = Y + q₁
            for k in 0..n * m {
                tmp[k] = gy[k] - gq1[k];
            }
            for row in tmp.chunks_exact_mut(m) {
                let mean = row.iter().sum::<f64>() / m as f64;
                row.iter_mut().for_each(|v| *v -= mean);
            }
            for k in 0..n * m {
                let ga = gq1[k] + tmp[k];
                gy[k] = ga;
                gq1[k] = ga;
            }
        }
        // Z = X^{i−1} − α·C
        for k in 0..n * m {
            grad_c[k] -= alpha * gy[k];
        }
        carry.copy_from_slice(&gy);
    }
    Array2::from_shape_vec((n, m), grad_c).expect("shape")
}

/// Probe loss of a full forward solve.
pub fn probe(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
    loss_weights: ArrayView2<'_, f64>,
    target: ProbeTarget,
) -> Result<f64> {
    check_weights(cost, loss_weights)?;
    let report = unroll(cost, config, x_init, false)?.report;
    Ok(probe_loss(&report, loss_weights, target))
}

/// Central differences `(L(C + h·E_ij) − L(C − h·E_ij)) / 2h`, one full
/// forward solve per evaluation.
pub fn finite_diff_grad(
    cost: &CostMatrix,
    config: &SolverConfig,
    loss_weights: ArrayView2<'_, f64>,
    h: f64,
) -> Result<Array2<f64>> {
    finite_diff_grad_from(cost, config, None, loss_weights, ProbeTarget::Assignment, h)
}

pub fn finite_diff_grad_from(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
    loss_weights: ArrayView2<'_, f64>,
    target: ProbeTarget,
    h: f64,
) -> Result<Array2<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(MatchError::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    check_weights(cost, loss_weights)?;
    let mut grad = Array2::zeros(cost.shape());
    for ((i, j), g) in grad.indexed_iter_mut() {
        let plus = perturbed(cost, i, j, h)?;
        let minus = perturbed(cost, i, j, -h)?;
        let lp = probe(&plus, config, x_init, loss_weights, target)?;
        let lm = probe(&minus, config, x_init, loss_weights, target)?;
        *g = (lp - lm) / (2.0 * h);
    }
    Ok(grad)
}

fn perturbed(cost: &CostMatrix, i: usize, j: usize, delta: f64) -> Result<CostMatrix> {
    let mut c = cost.values().clone();
    c[[i, j]] += delta;
    CostMatrix::new(c)
}

/// `|a − b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Branch pattern of a whole forward pass, used to detect whether a
/// perturbation crossed a kink.
#[derive(Debug, Clone, PartialEq)]
struct Pattern {
    cycles: Vec<(Vec<bool>, Vec<bool>)>,
    argmax: Vec<usize>,
}

fn forward_pattern(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
) -> Result<(Pattern, f64)> {
    let tape = unroll(cost, config, x_init, true)?;
    let mut min_slack = f64::INFINITY;
    let cycles = tape
        .branches
        .into_iter()
        .flatten()
        .map(|b| {
            min_slack = min_slack.min(b.min_slack);
            (b.col_active, b.relu_active)
        })
        .collect();
    Ok((
        Pattern {
            cycles,
            argmax: row_argmax(tape.report.assignment.view()),
        },
        min_slack,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Array2<f64>,
    pub numeric: Array2<f64>,
    /// Max [`relative_error`] over compared coordinates.
    pub max_rel_error: f64,
    pub compared: usize,
    /// Coordinates whose `±h` perturbation changes the forward branch pattern.
    pub excluded: Vec<(usize, usize)>,
    /// Smallest branch slack seen in the unperturbed forward pass.
    pub min_slack: f64,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares [`solve_with_grad_from`] with central differences, skipping
/// coordinates where either perturbed solve takes a different branch than
/// the nominal one (the finite difference then straddles a kink).
pub fn gradcheck(
    cost: &CostMatrix,
    config: &SolverConfig,
    x_init: Option<ArrayView2<'_, f64>>,
    loss_weights: ArrayView2<'_, f64>,
    target: ProbeTarget,
    h: f64,
) -> Result<GradCheck> {
    let (_, grad) = solve_with_grad_from(cost, config, x_init, loss_weights, target)?;
    let numeric = finite_diff_grad_from(cost, config, x_init, loss_weights, target, h)?;
    let (nominal, min_slack) = forward_pattern(cost, config, x_init)?;

    let mut excluded = Vec::new();
    let mut max_rel_error = 0.0f64;
    let mut compared = 0;
    for ((i, j), &a) in grad.grad_cost.indexed_iter() {
        let (plus, _) = forward_pattern(&perturbed(cost, i, j, h)?, config, x_init)?;
        let (minus, _) = forward_pattern(&perturbed(cost, i, j, -h)?, config, x_init)?;
        if plus != nominal || minus != nominal {
            excluded.push((i, j));
            continue;
        }
        compared += 1;
        max_rel_error = max_rel_error.max(relative_error(a, numeric[[i, j]]));
    }
    Ok(GradCheck {
        analytic: grad.grad_cost,
        numeric,
        max_rel_error,
        compared,
        excluded,
        min_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::InitMode;
    use crate::rng::SplitMix64;
    use ndarray::array;

    #[test]
    fn one_by_one_has_zero_gradient() {
        let cost = CostMatrix::new(array![[3.0]]).unwrap();
        let (_, g) = solve_with_grad(&cost, &SolverConfig::paper_fast(), array![[1.0]].view()).unwrap();
        assert_eq!(g.grad_cost, array![[0.0]]);
        assert_eq!(g.loss_value, 1.0);
        let fd = finite_diff_grad(&cost, &SolverConfig::paper_fast(), array![[1.0]].view(), 1e-5).unwrap();
        assert_eq!(fd, array![[0.0]]);
    }

    #[test]
    fn all_ones_probe_has_zero_row_sums() {
        let cost = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let w = Array2::ones((2, 2));
        let (_, g) = solve_with_grad(&cost, &SolverConfig::paper_fast(), w.view()).unwrap();
        for row in g.grad_cost.rows() {
            assert!(row.sum().abs() < 1e-12, "{}", g.grad_cost);
        }
        let fd = finite_diff_grad(&cost, &SolverConfig::paper_fast(), w.view(), 1e-5).unwrap();
        for row in fd.rows() {
            assert!(row.sum().abs() < 1e-8, "{fd}");
        }
    }

    /// One outer step, one cycle, on a 1×2 instance from X⁰ = (1/2, 1/2):
    /// Z = X⁰ − α·C, row projection gives Y₁ = Z − (ΣZ − 1)/2 = (1/2 − α(c₁ − c₂)/2,
    /// 1/2 + α(c₁ − c₂)/2); both column sums stay below 1 and both entries stay
    /// positive for small α, so X̂ = Y₁ and ∂X̂₁/∂c₁ = −α/2, ∂X̂₁/∂c₂ = +α/2.
    #[test]
    fn single_step_matches_hand_chain_rule() {
        let cost = CostMatrix::new(array![[0.3, 0.7]]).unwrap();
        let mut config = SolverConfig::paper_fast();
        config.n_grad = 1;
        config.n_proj = 1;
        let alpha = config.learning_rate;
        let w = array![[1.0, 0.0]];
        let (report, g) = solve_with_grad(&cost, &config, w.view()).unwrap();
        assert!((report.assignment[[0, 0]] - (0.5 - alpha * (0.3 - 0.7) / 2.0)).abs() < 1e-15);
        let expected = array![[-alpha / 2.0, alpha / 2.0]];
        for (a, b) in g.grad_cost.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let fd = finite_diff_grad(&cost, &config, w.view(), 1e-5).unwrap();
        for (a, b) in fd.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn random_instances_agree_with_finite_differences() {
        let mut rng = SplitMix64::new(77);
        for _ in 0..3 {
            let cost = CostMatrix::new(rng.uniform_matrix(3, 6)).unwrap();
            let w = rng.uniform_matrix(3, 6);
            let check = gradcheck(
                &cost,
                &SolverConfig::paper_fast(),
                None,
                w.view(),
                ProbeTarget::Assignment,
                1e-5,
            )
            .unwrap();
            assert!(check.compared > 0);
            assert!(check.passed(GRADCHECK_TOL), "{check:?}");
        }
    }

    #[test]
    fn masked_probe_agrees_with_finite_differences() {
        let mut rng = SplitMix64::new(78);
        let cost = CostMatrix::new(rng.uniform_matrix(3, 6)).unwrap();
        let w = rng.uniform_matrix(3, 6);
        let config = SolverConfig::paper_fast().with_init(InitMode::RandomFeasible).with_seed(4);
        let check = gradcheck(&cost, &config, None, w.view(), ProbeTarget::Masked, 1e-5).unwrap();
        assert!(check.passed(GRADCHECK_TOL), "{check:?}");
    }

    #[test]
    fn weight_shape_is_checked() {
        let cost = CostMatrix::new(array![[0.1, 0.2]]).unwrap();
        assert!(matches!(
            solve_with_grad(&cost, &SolverConfig::paper_fast(), array![[1.0]].view()),
            Err(MatchError::ShapeMismatch { .. })
        ));
        assert!(finite_diff_grad(&cost, &SolverConfig::paper_fast(), array![[1.0, 1.0]].view(), 0.0).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }
}
