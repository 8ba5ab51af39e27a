//! Matching costs from masks and features, and soft-mask assembly.
//!
//! The cost of pairing template `i` with proposal `j` mixes appearance and
//! overlap: `C_ij = (λ − 1)·cos(f(p_j), f(r_i)) − λ·IoU(p_j, r_i)`, which lies
//! in `[−1, 1 − λ]`. A proposal identical to its template costs exactly −1.

use ndarray::{Array2, ArrayView2};

use crate::error::{MatchError, Result};
use crate::matrix::CostMatrix;

/// Binary mask on an `H × W` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(MatchError::Dimension(format!(
                "{} bits for a {height}x{width} grid",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    /// Pixels of `grid` strictly above `threshold` become 1.
    pub fn from_threshold(grid: ArrayView2<'_, f64>, threshold: f64) -> Self {
        let (height, width) = grid.dim();
        Self {
            height,
            width,
            bits: grid.iter().map(|v| *v > threshold).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn to_grid(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.height, self.width), |(r, c)| {
            if self.get(r, c) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Masks sharing one grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    height: usize,
    width: usize,
    masks: Vec<BinaryMask>,
}

impl MaskSet {
    pub fn new(height: usize, width: usize, masks: Vec<BinaryMask>) -> Result<Self> {
        if let Some(bad) = masks.iter().find(|m| m.shape() != (height, width)) {
            return Err(MatchError::Dimension(format!(
                "mask of shape {:?} in a {height}x{width} set",
                bad.shape()
            )));
        }
        Ok(Self {
            height,
            width,
            masks,
        })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }
}

/// Feature embeddings of common dimension, each with nonzero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(MatchError::Dimension("feature dimension must be positive".into()));
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(MatchError::Dimension(format!(
                    "feature of length {} in a set of dimension {dim}",
                    v.len()
                )));
            }
            if v.iter().all(|x| *x == 0.0) {
                return Err(MatchError::ZeroNorm);
            }
        }
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

/// Masks paired index-by-index with their features.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub masks: MaskSet,
    pub features: FeatureSet,
}

impl Observations {
    pub fn new(masks: MaskSet, features: FeatureSet) -> Result<Self> {
        if masks.len() != features.len() {
            return Err(MatchError::Dimension(format!(
                "{} masks but {} feature vectors",
                masks.len(),
                features.len()
            )));
        }
        Ok(Self { masks, features })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Intersection over union; 0 when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(MatchError::ShapeMismatch {
            expected: a.shape(),
            got: b.shape(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Cosine similarity, clamped to `[−1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(MatchError::Dimension(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|a| a * a).sum();
    let vv: f64 = v.iter().map(|a| a * a).sum();
    if uu == 0.0 || vv == 0.0 {
        return Err(MatchError::ZeroNorm);
    }
    // sqrt(uu·vv) rather than sqrt(uu)·sqrt(vv): for u = v this is exactly
    // uu, so identical features give exactly 1.
    Ok((dot / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

/// One cost entry from a cosine similarity and an IoU.
pub fn pair_cost(cos: f64, iou: f64, lambda: f64) -> f64 {
    // (λ − 1)·cos − λ·IoU, arranged so cos = IoU = 1 yields exactly −1.
    -cos - lambda * (iou - cos)
}

pub fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(MatchError::InvalidLambda(lambda))
    }
}

/// `n × m` cost matrix between `n` templates and `m ≥ n` proposals.
pub fn build_cost(templates: &Observations, proposals: &Observations, lambda: f64) -> Result<CostMatrix> {
    validate_lambda(lambda)?;
    let (n, m) = (templates.len(), proposals.len());
    if n == 0 {
        return Err(MatchError::Empty);
    }
    if m < n {
        return Err(MatchError::TooManyRows { rows: n, cols: m });
    }
    if templates.masks.shape() != proposals.masks.shape() {
        return Err(MatchError::ShapeMismatch {
            expected: templates.masks.shape(),
            got: proposals.masks.shape(),
        });
    }
    if templates.features.dim() != proposals.features.dim() {
        return Err(MatchError::Dimension(format!(
            "template features have dimension {}, proposal features {}",
            templates.features.dim(),
            proposals.features.dim()
        )));
    }
    let mut c = Array2::zeros((n, m));
    for (i, (r_mask, r_feat)) in templates
        .masks
        .masks()
        .iter()
        .zip(templates.features.vectors())
        .enumerate()
    {
        for (j, (p_mask, p_feat)) in proposals
            .masks
            .masks()
            .iter()
            .zip(proposals.features.vectors())
            .enumerate()
        {
            c[[i, j]] = pair_cost(cosine(p_feat, r_feat)?, iou(p_mask, r_mask)?, lambda);
        }
    }
    CostMatrix::new(c)
}

/// Soft mask per template: `out[i] = Σ_j X̂_ij · mask_j`.
pub fn assemble_masks(assignment: ArrayView2<'_, f64>, proposals: &MaskSet) -> Result<Vec<Array2<f64>>> {
    if assignment.ncols() != proposals.len() {
        return Err(MatchError::Dimension(format!(
            "assignment has {} columns but there are {} proposals",
            assignment.ncols(),
            proposals.len()
        )));
    }
    let (h, w) = proposals.shape();
    Ok(assignment
        .rows()
        .into_iter()
        .map(|weights| {
            let mut out = Array2::zeros((h, w));
            for (x, mask) in weights.iter().zip(proposals.masks()) {
                if *x == 0.0 {
                    continue;
                }
                for (o, bit) in out.iter_mut().zip(mask.bits()) {
                    if *bit {
                        *o += x;
                    }
                }
            }
            out
        })
        .collect())
}

/// Axis-aligned rectangle in pixels; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }
}

/// One mask per rectangle, clipped to the grid.
pub fn synth_masks(rects: &[Rect], height: usize, width: usize) -> Result<MaskSet> {
    if height == 0 || width == 0 {
        return Err(MatchError::Dimension(format!(
            "grid must be non-empty, got {height}x{width}"
        )));
    }
    let masks = rects
        .iter()
        .map(|r| {
            let mut mask = BinaryMask::empty(height, width);
            let rows = r.y.min(height)..r.y.saturating_add(r.h).min(height);
            let cols = r.x.min(width)..r.x.saturating_add(r.w).min(width);
            for row in rows {
                for col in cols.clone() {
                    mask.set(row, col, true);
                }
            }
            mask
        })
        .collect();
    MaskSet::new(height, width, masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rect_mask(r: Rect) -> BinaryMask {
        synth_masks(&[r], 4, 4).unwrap().masks()[0].clone()
    }

    #[test]
    fn iou_examples() {
        let a = rect_mask(Rect::new(1, 1, 2, 2));
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = rect_mask(Rect::new(0, 0, 1, 1));
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let left = rect_mask(Rect::new(0, 0, 2, 4));
        let top = rect_mask(Rect::new(0, 0, 4, 2));
        assert_eq!(left.area(), 8);
        assert_eq!(top.area(), 8);
        assert_eq!(iou(&left, &top).unwrap(), 4.0 / 12.0);
    }

    #[test]
    fn iou_edge_cases() {
        let e = BinaryMask::empty(4, 4);
        assert_eq!(iou(&e, &e).unwrap(), 0.0);
        assert!(iou(&e, &BinaryMask::empty(3, 4)).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap_err(), MatchError::ZeroNorm);
    }

    #[test]
    fn pair_cost_examples() {
        assert_eq!(pair_cost(1.0, 1.0, 0.3), -1.0);
        assert_eq!(pair_cost(0.0, 0.0, 0.3), 0.0);
        assert!((pair_cost(0.5, 0.2, 0.9) - (-0.23)).abs() < 1e-15);
    }

    #[test]
    fn lambda_range() {
        assert!(validate_lambda(1.0).is_ok());
        assert!(validate_lambda(0.3).is_ok());
        for bad in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(validate_lambda(bad).is_err());
        }
    }

    #[test]
    fn build_cost_small() {
        let masks = synth_masks(&[Rect::new(0, 0, 2, 2), Rect::new(2, 2, 2, 2)], 4, 4).unwrap();
        let feats = FeatureSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let obs = Observations::new(masks, feats).unwrap();
        let c = build_cost(&obs, &obs, 0.3).unwrap();
        assert_eq!(c.values(), &array![[-1.0, 0.0], [0.0, -1.0]]);

        let one = Observations::new(
            synth_masks(&[Rect::new(0, 0, 1, 1)], 4, 4).unwrap(),
            FeatureSet::new(vec![vec![1.0, 1.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(build_cost(&obs, &one, 0.3), Err(MatchError::TooManyRows { .. })));
        assert!(matches!(build_cost(&one, &obs, 1.2), Err(MatchError::InvalidLambda(_))));
    }

    #[test]
    fn mismatched_observations() {
        let masks = synth_masks(&[Rect::new(0, 0, 2, 2)], 4, 4).unwrap();
        let feats = FeatureSet::new(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(Observations::new(masks, feats).is_err());
        assert_eq!(FeatureSet::new(vec![vec![0.0, 0.0]]).unwrap_err(), MatchError::ZeroNorm);
        assert!(FeatureSet::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn assemble_examples() {
        let masks = synth_masks(&[Rect::new(0, 0, 4, 4), Rect::new(0, 0, 0, 0)], 4, 4).unwrap();
        let out = assemble_masks(array![[1.0, 0.0]].view(), &masks).unwrap();
        assert_eq!(out[0], masks.masks()[0].to_grid());
        let out = assemble_masks(array![[0.5, 0.5]].view(), &masks).unwrap();
        assert_eq!(out[0], Array2::from_elem((4, 4), 0.5));
        let two = synth_masks(&[Rect::new(0, 0, 2, 2), Rect::new(1, 1, 3, 2)], 4, 4).unwrap();
        let out = assemble_masks(array![[1.0, 0.0], [0.0, 1.0]].view(), &two).unwrap();
        assert_eq!(out[0], two.masks()[0].to_grid());
        assert_eq!(out[1], two.masks()[1].to_grid());
        assert!(assemble_masks(array![[1.0]].view(), &two).is_err());
    }

    #[test]
    fn synth_examples() {
        let s = synth_masks(&[Rect::new(0, 0, 4, 4), Rect::new(1, 1, 0, 3), Rect::new(0, 0, 2, 2)], 4, 4).unwrap();
        assert_eq!(s.masks()[0].area(), 16);
        assert_eq!(s.masks()[1].area(), 0);
        assert_eq!(s.masks()[2].area(), 4);
        assert!(s.masks()[2].get(0, 0) && s.masks()[2].get(1, 1) && !s.masks()[2].get(2, 2));
        // clipped
        let c = synth_masks(&[Rect::new(3, 3, 10, 10)], 4, 4).unwrap();
        assert_eq!(c.masks()[0].area(), 1);
        assert!(synth_masks(&[], 0, 4).is_err());
    }

    #[test]
    fn threshold_round_trip() {
        let m = rect_mask(Rect::new(1, 0, 2, 3));
        assert_eq!(BinaryMask::from_threshold(m.to_grid().view(), 0.5), m);
    }
}
