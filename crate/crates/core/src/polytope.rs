//! The wide matching polytope `C = C₁ ∩ C₂ ∩ C₃` with
//! `C₁ = {X·1 = 1}`, `C₂ = {Xᵀ·1 ≤ 1}` and `C₃ = {X ≥ 0}`, its three
//! elementary Euclidean projections, and Dykstra's cyclic projection onto
//! the intersection.
//!
//! The elementary projections are affine on each branch (columns above or
//! below capacity, entries above or below zero). [`dykstra_project`] runs the
//! same kernel the solver and its reverse pass use.

use ndarray::{Array2, ArrayView2};

use crate::matrix::frobenius_distance;

/// Tolerance for exact-feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Tolerance for accepting approximate solver output as feasible.
pub const SOLVER_FEASIBILITY_TOL: f64 = 1e-3;

/// Dykstra cycles used as the reference projection in [`feasibility`].
pub const REFERENCE_CYCLES: usize = 1000;

/// Cheap constraint residuals of a point; no projection involved.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualSummary {
    /// `max_i |row_sum_i − 1|`
    pub row_residual: f64,
    /// `max_j max(col_sum_j − 1, 0)`
    pub col_violation: f64,
    /// `max_ij max(−x_ij, 0)`
    pub negativity: f64,
}

impl ResidualSummary {
    pub fn of(x: ArrayView2<'_, f64>) -> Self {
        let row_residual = x
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let col_violation = x
            .columns()
            .into_iter()
            .map(|c| (c.sum() - 1.0).max(0.0))
            .fold(0.0, f64::max);
        let negativity = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        Self {
            row_residual,
            col_violation,
            negativity,
        }
    }

    pub fn max(&self) -> f64 {
        self.row_residual.max(self.col_violation).max(self.negativity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeasibilityReport {
    pub row_residual: f64,
    pub col_violation: f64,
    pub negativity: f64,
    /// Frobenius distance to a high-accuracy Dykstra projection of the point.
    pub distance_estimate: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.row_residual <= tol
            && self.col_violation <= tol
            && self.negativity <= tol
            && self.distance_estimate <= tol
    }

    pub fn summary(&self) -> ResidualSummary {
        ResidualSummary {
            row_residual: self.row_residual,
            col_violation: self.col_violation,
            negativity: self.negativity,
        }
    }
}

/// Euclidean projection onto `{X | X·1 = 1}`: each row's excess is removed
/// uniformly from its entries.
pub fn project_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, m) = x.dim();
    let mut out = x.as_standard_layout().into_owned();
    let buf = out.as_slice_mut().expect("standard layout");
    rows_in_place(buf, n, m);
    out
}

/// Euclidean projection onto `{X | Xᵀ·1 ≤ 1}`. The set is a product of
/// per-column half-spaces, so only columns above capacity are shifted.
pub fn project_cols(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, m) = x.dim();
    let mut out = x.as_standard_layout().into_owned();
    let buf = out.as_slice_mut().expect("standard layout");
    let mut sums = vec![0.0; m];
    cols_in_place(buf, n, m, &mut sums);
    out
}

/// Euclidean projection onto the nonnegative orthant (ReLU).
pub fn project_nonneg(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.mapv(relu)
}

/// Runs `n_proj` Dykstra cycles (rows, columns, nonnegativity, each with its
/// own correction term starting from zero) and returns the final iterate with
/// the Frobenius distance between consecutive cycle outputs.
pub fn dykstra_project(x: ArrayView2<'_, f64>, n_proj: usize) -> (Array2<f64>, Vec<f64>) {
    assert!(n_proj >= 1, "dykstra_project needs at least one cycle");
    let (n, m) = x.dim();
    let mut out = x.as_standard_layout().into_owned();
    let mut trace = Vec::with_capacity(n_proj);
    let mut kernel = DykstraKernel::new(n, m);
    kernel.run(
        out.as_slice_mut().expect("standard layout"),
        n_proj,
        &mut trace,
        None,
    );
    (out, trace)
}

/// Residuals of `x` plus its distance to the `reference_cycles`-cycle Dykstra
/// projection.
pub fn feasibility(x: ArrayView2<'_, f64>, reference_cycles: usize) -> FeasibilityReport {
    let cheap = ResidualSummary::of(x);
    let (projected, _) = dykstra_project(x, reference_cycles.max(1));
    FeasibilityReport {
        row_residual: cheap.row_residual,
        col_violation: cheap.col_violation,
        negativity: cheap.negativity,
        distance_estimate: frobenius_distance(x, projected.view()),
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn rows_in_place(buf: &mut [f64], n: usize, m: usize) {
    debug_assert_eq!(buf.len(), n * m);
    let m_f = m as f64;
    for row in buf.chunks_exact_mut(m) {
        let shift = (row.iter().sum::<f64>() - 1.0) / m_f;
        row.iter_mut().for_each(|v| *v -= shift);
    }
}

fn column_sums(buf: &[f64], m: usize, sums: &mut [f64]) {
    sums.iter_mut().for_each(|s| *s = 0.0);
    for row in buf.chunks_exact(m) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
}

fn cols_in_place(buf: &mut [f64], n: usize, m: usize, sums: &mut [f64]) {
    column_sums(buf, m, sums);
    for s in sums.iter_mut() {
        *s = if *s > 1.0 { (*s - 1.0) / n as f64 } else { 0.0 };
    }
    for row in buf.chunks_exact_mut(m) {
        for (v, shift) in row.iter_mut().zip(sums.iter()) {
            if *shift != 0.0 {
                *v -= shift;
            }
        }
    }
}

/// Branch pattern of one Dykstra cycle: which columns were over capacity and
/// which entries survived the ReLU. With the pattern fixed, the cycle is
/// affine in its input.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CycleBranches {
    pub col_active: Vec<bool>,
    pub relu_active: Vec<bool>,
    /// Smallest distance of any branch test to its threshold.
    pub min_slack: f64,
}

/// Working buffers for Dykstra's algorithm on an `n × m` row-major matrix.
pub(crate) struct DykstraKernel {
    n: usize,
    m: usize,
    q: [Vec<f64>; 3],
    prev: Vec<f64>,
    shifted: Vec<f64>,
    col: Vec<f64>,
}

impl DykstraKernel {
    pub fn new(n: usize, m: usize) -> Self {
        let z = vec![0.0; n * m];
        Self {
            n,
            m,
            q: [z.clone(), z.clone(), z.clone()],
            prev: z.clone(),
            shifted: z,
            col: vec![0.0; m],
        }
    }

    /// Projects `y` in place, appending one residual per cycle to `trace` and
    /// one branch record per cycle to `record` when given. Corrections are
    /// reset on every call.
    pub fn run(
        &mut self,
        y: &mut [f64],
        n_proj: usize,
        trace: &mut Vec<f64>,
        mut record: Option<&mut Vec<CycleBranches>>,
    ) {
        let (n, m) = (self.n, self.m);
        debug_assert_eq!(y.len(), n * m);
        for q in &mut self.q {
            q.iter_mut().for_each(|v| *v = 0.0);
        }
        for _ in 0..n_proj {
            self.prev.copy_from_slice(y);

            // C₁: a = y + q₁, y ← P₁(a), q₁ ← a − y
            let [q1, q2, q3] = &mut self.q;
            for (a, (yv, qv)) in self.shifted.iter_mut().zip(y.iter().zip(q1.iter())) {
                *a = yv + qv;
            }
            y.copy_from_slice(&self.shifted);
            rows_in_place(y, n, m);
            for (qv, (a, yv)) in q1.iter_mut().zip(self.shifted.iter().zip(y.iter())) {
                *qv = a - yv;
            }

            // C₂
            for (a, (yv, qv)) in self.shifted.iter_mut().zip(y.iter().zip(q2.iter())) {
                *a = yv + qv;
            }
            column_sums(&self.shifted, m, &mut self.col);
            let mut min_slack = f64::INFINITY;
            let col_active: Vec<bool> = self
                .col
                .iter()
                .map(|&s| {
                    min_slack = min_slack.min((s - 1.0).abs());
                    s > 1.0
                })
                .collect();
            for (yrow, arow) in y.chunks_exact_mut(m).zip(self.shifted.chunks_exact(m)) {
                for j in 0..m {
                    yrow[j] = if col_active[j] {
                        arow[j] - (self.col[j] - 1.0) / n as f64
                    } else {
                        arow[j]
                    };
                }
            }
            for (qv, (a, yv)) in q2.iter_mut().zip(self.shifted.iter().zip(y.iter())) {
                *qv = a - yv;
            }

            // C₃
            let mut relu_active = record.as_ref().map(|_| Vec::with_capacity(n * m));
            for ((yv, qv), a) in y.iter_mut().zip(q3.iter_mut()).zip(self.shifted.iter_mut()) {
                *a = *yv + *qv;
                min_slack = min_slack.min(a.abs());
                let out = relu(*a);
                if let Some(mask) = relu_active.as_mut() {
                    mask.push(*a > 0.0);
                }
                *qv = *a - out;
                *yv = out;
            }

            trace.push(
                y.iter()
                    .zip(&self.prev)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            );
            if let Some(rec) = record.as_deref_mut() {
                rec.push(CycleBranches {
                    col_active,
                    relu_active: relu_active.unwrap_or_default(),
                    min_slack,
                });
            }
        }
    }
}
