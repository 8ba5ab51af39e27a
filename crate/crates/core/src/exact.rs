//! Exact and baseline solvers for the hard matching problem: the Hungarian
//! method on a square padding of the cost matrix, exhaustive enumeration,
//! and the row-by-row greedy heuristic.

use ndarray::{Array2, ArrayView2};

use crate::error::{MatchError, Result};
use crate::matrix::CostMatrix;

/// Largest number of injective maps [`brute_force`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// An injective row → column map with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct HardAssignment {
    pub column_of: Vec<usize>,
    pub objective: f64,
}

impl HardAssignment {
    fn evaluate(cost: ArrayView2<'_, f64>, column_of: Vec<usize>) -> Self {
        let objective = column_of
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[[i, j]])
            .sum();
        Self {
            column_of,
            objective,
        }
    }

    /// 0/1 assignment matrix with `cols` columns.
    pub fn to_matrix(&self, cols: usize) -> Array2<f64> {
        let mut x = Array2::zeros((self.column_of.len(), cols));
        for (i, &j) in self.column_of.iter().enumerate() {
            x[[i, j]] = 1.0;
        }
        x
    }
}

/// Greedy output; rows may be left unassigned.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAssignment {
    pub column_of: Vec<Option<usize>>,
    /// Sum of costs over assigned rows.
    pub objective: f64,
}

impl PartialAssignment {
    pub fn assigned(&self) -> usize {
        self.column_of.iter().flatten().count()
    }
}

/// Minimum-cost injective assignment.
///
/// The `n × m` matrix is padded with `m − n` zero-cost rows to a square
/// problem, solved with the O(m³) shortest-augmenting-path form of the
/// Hungarian method, and the dummy rows are dropped.
pub fn hungarian(cost: &CostMatrix) -> Result<HardAssignment> {
    cost.ensure_wide()?;
    let (n, m) = cost.shape();
    let c = cost.view();
    let padded = |i: usize, j: usize| if i < n { c[[i, j]] } else { 0.0 };

    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; m + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = padded(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut column_of = vec![0usize; n];
    for (j, &i) in row_of.iter().enumerate().skip(1) {
        if (1..=n).contains(&i) {
            column_of[i - 1] = j - 1;
        }
    }
    Ok(HardAssignment::evaluate(c, column_of))
}

fn injective_map_count(n: usize, m: usize) -> u128 {
    ((m - n + 1)..=m).fold(1u128, |acc, k| acc.saturating_mul(k as u128))
}

/// Exhaustive minimum over all injective maps, ties broken toward the
/// lexicographically smallest `column_of`.
pub fn brute_force(cost: &CostMatrix) -> Result<HardAssignment> {
    cost.ensure_wide()?;
    let (n, m) = cost.shape();
    let count = injective_map_count(n, m);
    if count > ENUMERATION_LIMIT {
        return Err(MatchError::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }

    struct Search<'a> {
        cost: ArrayView2<'a, f64>,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, row: usize, partial: f64) {
            if row == self.cost.nrows() {
                // Depth-first in increasing column order reaches maps in
                // lexicographic order, so only a strict improvement replaces.
                let better = self.best.as_ref().is_none_or(|(b, _)| partial < *b);
                if better {
                    self.best = Some((partial, self.current.clone()));
                }
                return;
            }
            for j in 0..self.cost.ncols() {
                if !self.used[j] {
                    self.used[j] = true;
                    self.current.push(j);
                    self.visit(row + 1, partial + self.cost[[row, j]]);
                    self.current.pop();
                    self.used[j] = false;
                }
            }
        }
    }

    let mut search = Search {
        cost: cost.view(),
        used: vec![false; m],
        current: Vec::with_capacity(n),
        best: None,
    };
    search.visit(0, 0.0);
    let (_, column_of) = search.best.expect("n <= m admits at least one map");
    // Re-sum in row order so the objective matches HardAssignment's rule.
    Ok(HardAssignment::evaluate(cost.view(), column_of))
}

/// Rows in index order each take their cheapest free column (lowest index on
/// ties). With a threshold, a row whose best free cost exceeds it stays
/// unassigned.
pub fn greedy(cost: &CostMatrix, threshold: Option<f64>) -> PartialAssignment {
    let c = cost.view();
    let mut used = vec![false; cost.cols()];
    let mut objective = 0.0;
    let column_of = c
        .rows()
        .into_iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .fold(None::<(usize, f64)>, |acc, (j, &v)| match acc {
                    Some((_, b)) if b <= v => acc,
                    _ => Some((j, v)),
                })?;
            if threshold.is_some_and(|t| best.1 > t) {
                return None;
            }
            used[best.0] = true;
            objective += best.1;
            Some(best.0)
        })
        .collect();
    PartialAssignment {
        column_of,
        objective,
    }
}

/// Hard matching that maximizes total weight of a relaxed assignment, by
/// running [`hungarian`] on `−X`.
///
/// The objective is evaluated against `cost` when supplied, otherwise
/// against `−X` itself (so it is minus the selected weight).
pub fn round_to_hard(x: ArrayView2<'_, f64>, cost: Option<&CostMatrix>) -> Result<HardAssignment> {
    let negated = CostMatrix::new(x.mapv(|v| -v))?;
    let hard = hungarian(&negated)?;
    match cost {
        Some(c) => {
            if c.shape() != x.dim() {
                return Err(MatchError::ShapeMismatch {
                    expected: x.dim(),
                    got: c.shape(),
                });
            }
            Ok(HardAssignment::evaluate(c.view(), hard.column_of))
        }
        None => Ok(hard),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use ndarray::array;

    fn cm(a: Array2<f64>) -> CostMatrix {
        CostMatrix::new(a).unwrap()
    }

    #[test]
    fn hungarian_examples() {
        let h = hungarian(&cm(array![[1.0, 2.0], [3.0, 1.0]])).unwrap();
        assert_eq!(h.column_of, vec![0, 1]);
        assert_eq!(h.objective, 2.0);
        let h = hungarian(&cm(array![[0.5, 0.2, 0.9]])).unwrap();
        assert_eq!(h.column_of, vec![1]);
        assert_eq!(h.objective, 0.2);
        let h = hungarian(&cm(array![[1.0, 2.0, 3.0], [1.0, 1.0, 5.0]])).unwrap();
        assert_eq!(h.column_of, vec![0, 1]);
        assert_eq!(h.objective, 2.0);
    }

    #[test]
    fn hungarian_rejects_tall() {
        assert!(matches!(
            hungarian(&cm(array![[1.0], [2.0]])),
            Err(MatchError::TooManyRows { .. })
        ));
    }

    #[test]
    fn brute_force_examples() {
        let b = brute_force(&cm(array![[1.0, 2.0], [3.0, 1.0]])).unwrap();
        assert_eq!((b.column_of, b.objective), (vec![0, 1], 2.0));
        let b = brute_force(&cm(array![[7.0]])).unwrap();
        assert_eq!((b.column_of, b.objective), (vec![0], 7.0));
        let b = brute_force(&cm(array![[0.0, 0.0], [0.0, 0.0]])).unwrap();
        assert_eq!((b.column_of, b.objective), (vec![0, 1], 0.0));
    }

    #[test]
    fn brute_force_guard() {
        let big = cm(Array2::zeros((8, 20)));
        assert!(matches!(
            brute_force(&big),
            Err(MatchError::EnumerationTooLarge { .. })
        ));
        assert_eq!(injective_map_count(3, 7), 210);
    }

    #[test]
    fn greedy_examples() {
        let g = greedy(&cm(array![[1.0, 2.0], [1.0, 10.0]]), None);
        assert_eq!(g.column_of, vec![Some(0), Some(1)]);
        assert_eq!(g.objective, 11.0);
        let h = hungarian(&cm(array![[1.0, 2.0], [1.0, 10.0]])).unwrap();
        assert_eq!(h.objective, 3.0);

        let g = greedy(&cm(array![[1.0, 2.0], [3.0, 1.0]]), None);
        assert_eq!(g.column_of, vec![Some(0), Some(1)]);
        assert_eq!(g.objective, 2.0);

        let g = greedy(&cm(array![[1.0, 2.0]]), Some(0.5));
        assert_eq!(g.column_of, vec![None]);
        assert_eq!(g.objective, 0.0);
        assert_eq!(g.assigned(), 0);
    }

    #[test]
    fn rounding_examples() {
        let r = round_to_hard(array![[1.0, 0.0], [0.0, 1.0]].view(), None).unwrap();
        assert_eq!(r.column_of, vec![0, 1]);
        let r = round_to_hard(array![[0.1, 0.9], [0.8, 0.2]].view(), None).unwrap();
        assert_eq!(r.column_of, vec![1, 0]);
        let r = round_to_hard(array![[0.5, 0.5]].view(), None).unwrap();
        assert_eq!(r.column_of, vec![0]);
    }

    #[test]
    fn rounding_evaluates_supplied_cost() {
        let cost = cm(array![[3.0, 4.0], [5.0, 6.0]]);
        let r = round_to_hard(array![[0.1, 0.9], [0.8, 0.2]].view(), Some(&cost)).unwrap();
        assert_eq!(r.objective, 9.0);
    }

    #[test]
    fn hungarian_matches_brute_force_on_random() {
        let mut g = SplitMix64::new(5);
        for _ in 0..300 {
            let n = g.range_inclusive(1, 4);
            let m = g.range_inclusive(n, 7);
            let c = cm(g.uniform_matrix(n, m));
            let h = hungarian(&c).unwrap();
            let b = brute_force(&c).unwrap();
            assert_eq!(h.objective, b.objective, "{:?}", c);
            let mut cols = h.column_of.clone();
            cols.sort_unstable();
            cols.dedup();
            assert_eq!(cols.len(), n);
        }
    }

    #[test]
    fn matrix_form() {
        let h = HardAssignment {
            column_of: vec![2, 0],
            objective: 0.0,
        };
        assert_eq!(h.to_matrix(3), array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
    }
}
