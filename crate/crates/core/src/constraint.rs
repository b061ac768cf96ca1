//! Linear and quadratic constraint functions, and the user-level constraint
//! types that expand into them.
//!
//! A primitive constraint fixes the expectation of
//!
//! - linear: `Σ_{i∈I} wᵀxᵢ`, or
//! - quadratic: `Σ_{i∈I} (wᵀ(xᵢ − m̂_I))²`, where `m̂_I` is the observed mean of
//!   the rows in `I` (a constant, frozen when the constraint is created),
//!
//! to its value on the observed data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{fix_column_signs, sorted_symmetric_eigen};

/// Directions closer than this (max abs difference) count as identical.
pub const DUPLICATE_TOLERANCE: f64 = 1e-10;
/// Maximum `|w₁ᵀw₂|` accepted for the two directions of a 2-D constraint.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveConstraint {
    kind: ConstraintKind,
    rows: Vec<usize>,
    direction: DVector<f64>,
    target: f64,
    anchor_mean: DVector<f64>,
    anchor_projection: f64,
}

impl PrimitiveConstraint {
    /// Creates a constraint whose target is its function value on `data`.
    pub fn new(data: &DataMatrix, kind: ConstraintKind, rows: &[usize], direction: DVector<f64>) -> Result<Self> {
        let rows = normalize_rows(rows, data.nrows())?;
        check_direction(&direction, data.ncols())?;
        let anchor_mean = row_mean(data, &rows);
        let target = match kind {
            ConstraintKind::Linear => linear_value(data, &rows, &direction),
            ConstraintKind::Quadratic => quadratic_value(data, &rows, &direction, &anchor_mean),
        };
        let anchor_projection = anchor_mean.dot(&direction);
        Ok(Self { kind, rows, direction, target, anchor_mean, anchor_projection })
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    /// Sorted, distinct row indices.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    /// Observed value `v̂`.
    pub fn target(&self) -> f64 {
        self.target
    }

    /// Observed mean of the constrained rows, `m̂_I`.
    pub fn anchor_mean(&self) -> &DVector<f64> {
        &self.anchor_mean
    }

    /// `m̂_Iᵀw`.
    pub fn anchor_projection(&self) -> f64 {
        self.anchor_projection
    }

    /// Re-evaluates the constraint function on `data` using the frozen anchor.
    pub fn evaluate(&self, data: &DataMatrix) -> f64 {
        match self.kind {
            ConstraintKind::Linear => linear_value(data, &self.rows, &self.direction),
            ConstraintKind::Quadratic => quadratic_value(data, &self.rows, &self.direction, &self.anchor_mean),
        }
    }

    pub fn is_duplicate_of(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.rows == other.rows
            && self.direction.len() == other.direction.len()
            && self
                .direction
                .iter()
                .zip(other.direction.iter())
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOLERANCE)
    }
}

/// `Σ_{i∈I} wᵀx̂ᵢ`.
pub fn eval_linear(data: &DataMatrix, rows: &[usize], w: &DVector<f64>) -> Result<f64> {
    let rows = normalize_rows(rows, data.nrows())?;
    check_dimension(w, data.ncols())?;
    Ok(linear_value(data, &rows, w))
}

/// `Σ_{i∈I} (wᵀ(x̂ᵢ − m̂_I))²` with `m̂_I` the mean of the rows in `I`.
pub fn eval_quadratic(data: &DataMatrix, rows: &[usize], w: &DVector<f64>) -> Result<f64> {
    let rows = normalize_rows(rows, data.nrows())?;
    check_dimension(w, data.ncols())?;
    let mean = row_mean(data, &rows);
    Ok(quadratic_value(data, &rows, w, &mean))
}

fn linear_value(data: &DataMatrix, rows: &[usize], w: &DVector<f64>) -> f64 {
    let x = data.values();
    rows.iter().map(|&i| x.row(i).dot(&w.transpose())).sum()
}

fn quadratic_value(data: &DataMatrix, rows: &[usize], w: &DVector<f64>, anchor: &DVector<f64>) -> f64 {
    let x = data.values();
    let offset = anchor.dot(w);
    rows.iter()
        .map(|&i| {
            let p = x.row(i).dot(&w.transpose()) - offset;
            p * p
        })
        .sum()
}

fn row_mean(data: &DataMatrix, rows: &[usize]) -> DVector<f64> {
    let x = data.values();
    let mut sum = DVector::zeros(data.ncols());
    for &i in rows {
        sum += x.row(i).transpose();
    }
    sum / rows.len() as f64
}

fn normalize_rows(rows: &[usize], n: usize) -> Result<Vec<usize>> {
    if rows.is_empty() {
        return Err(Error::InvalidConstraint("row set is empty".into()));
    }
    let mut rows = rows.to_vec();
    rows.sort_unstable();
    rows.dedup();
    if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidConstraint(format!("row index {bad} out of range for {n} rows")));
    }
    Ok(rows)
}

fn check_dimension(w: &DVector<f64>, d: usize) -> Result<()> {
    if w.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: w.len() });
    }
    Ok(())
}

fn check_direction(w: &DVector<f64>, d: usize) -> Result<()> {
    check_dimension(w, d)?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConstraint("direction has non-finite entries".into()));
    }
    if w.norm() == 0.0 {
        return Err(Error::InvalidConstraint("direction is the zero vector".into()));
    }
    Ok(())
}

/// User-level constraint before expansion. Row indices refer to data rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum CompositeSpec {
    /// Mean and variance of every column.
    Margin,
    /// Mean and covariance of a row subset, along its principal axes.
    Cluster { rows: Vec<usize> },
    /// A cluster containing every row.
    OneCluster,
    /// Mean and variance of a row subset along two orthonormal directions.
    TwoD { rows: Vec<usize>, first: Vec<f64>, second: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeConstraint {
    spec: CompositeSpec,
    primitives: Vec<PrimitiveConstraint>,
}

impl CompositeConstraint {
    pub fn spec(&self) -> &CompositeSpec {
        &self.spec
    }

    pub fn primitives(&self) -> &[PrimitiveConstraint] {
        &self.primitives
    }

    pub fn into_primitives(self) -> Vec<PrimitiveConstraint> {
        self.primitives
    }
}

/// Expands a user-level constraint into primitive constraints evaluated on
/// `data`.
pub fn expand_composite(data: &DataMatrix, spec: CompositeSpec) -> Result<CompositeConstraint> {
    let d = data.ncols();
    let primitives = match &spec {
        CompositeSpec::Margin => {
            let all: Vec<usize> = (0..data.nrows()).collect();
            let basis = DMatrix::<f64>::identity(d, d);
            pairs_along(data, &all, basis.column_iter().map(|c| c.into_owned()))?
        }
        CompositeSpec::Cluster { rows } => {
            let rows = normalize_rows(rows, data.nrows())?;
            let axes = cluster_axes(data, &rows);
            pairs_along(data, &rows, axes.column_iter().map(|c| c.into_owned()))?
        }
        CompositeSpec::OneCluster => {
            let all: Vec<usize> = (0..data.nrows()).collect();
            let axes = cluster_axes(data, &all);
            pairs_along(data, &all, axes.column_iter().map(|c| c.into_owned()))?
        }
        CompositeSpec::TwoD { rows, first, second } => {
            let w1 = DVector::from_column_slice(first);
            let w2 = DVector::from_column_slice(second);
            check_direction(&w1, d)?;
            check_direction(&w2, d)?;
            if w1.dot(&w2).abs() > ORTHOGONALITY_TOLERANCE {
                return Err(Error::InvalidConstraint(format!(
                    "2-D constraint directions are not orthogonal (dot = {:e})",
                    w1.dot(&w2)
                )));
            }
            pairs_along(data, rows, [w1, w2].into_iter())?
        }
    };
    Ok(CompositeConstraint { spec, primitives })
}

fn pairs_along(
    data: &DataMatrix,
    rows: &[usize],
    directions: impl Iterator<Item = DVector<f64>>,
) -> Result<Vec<PrimitiveConstraint>> {
    let mut out = Vec::new();
    for w in directions {
        out.push(PrimitiveConstraint::new(data, ConstraintKind::Linear, rows, w.clone())?);
        out.push(PrimitiveConstraint::new(data, ConstraintKind::Quadratic, rows, w)?);
    }
    Ok(out)
}

/// Right singular vectors of the centered submatrix, as columns ordered by
/// decreasing singular value. Always a full orthonormal basis of `ℝ^d`, even
/// when the cluster has fewer than `d` rows.
pub fn cluster_axes(data: &DataMatrix, rows: &[usize]) -> DMatrix<f64> {
    let d = data.ncols();
    let mean = row_mean(data, rows);
    let x = data.values();
    let mut scatter = DMatrix::zeros(d, d);
    for &i in rows {
        let c = x.row(i).transpose() - &mean;
        scatter.ger(1.0, &c, &c, 1.0);
    }
    let (_, mut vectors) = sorted_symmetric_eigen(&scatter);
    fix_column_signs(&mut vectors);
    vectors
}

/// Appends `candidate` unless an identical primitive is already present.
/// Returns whether it was added.
pub fn push_unique(list: &mut Vec<PrimitiveConstraint>, candidate: PrimitiveConstraint) -> bool {
    if list.iter().any(|c| c.is_duplicate_of(&candidate)) {
        return false;
    }
    list.push(candidate);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DataMatrix {
        DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()
    }

    fn e(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn linear_on_three_points() {
        assert_eq!(eval_linear(&toy(), &[0, 2], &e(2, 0)).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_on_three_points() {
        assert_eq!(eval_quadratic(&toy(), &[0, 2], &e(2, 0)).unwrap(), 0.5);
        assert_eq!(eval_quadratic(&toy(), &[1], &e(2, 1)).unwrap(), 0.0);
    }

    #[test]
    fn empty_rows_and_zero_direction_rejected() {
        assert!(matches!(eval_linear(&toy(), &[], &e(2, 0)), Err(Error::InvalidConstraint(_))));
        assert!(matches!(eval_quadratic(&toy(), &[], &e(2, 0)), Err(Error::InvalidConstraint(_))));
        let zero = DVector::zeros(2);
        assert!(PrimitiveConstraint::new(&toy(), ConstraintKind::Linear, &[0], zero).is_err());
        assert!(PrimitiveConstraint::new(&toy(), ConstraintKind::Linear, &[3], e(2, 0)).is_err());
    }

    #[test]
    fn margin_expands_to_basis_pairs() {
        let c = expand_composite(&toy(), CompositeSpec::Margin).unwrap();
        let p = c.primitives();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].direction(), &e(2, 0));
        assert_eq!(p[1].direction(), &e(2, 0));
        assert_eq!(p[2].direction(), &e(2, 1));
        assert_eq!(p[0].kind(), ConstraintKind::Linear);
        assert_eq!(p[1].kind(), ConstraintKind::Quadratic);
    }

    #[test]
    fn cluster_on_first_and_third_row() {
        // centered submatrix ((½,0),(−½,0)): axes e₁ (σ² sum ½) then e₂ (0)
        let c = expand_composite(&toy(), CompositeSpec::Cluster { rows: vec![0, 2] }).unwrap();
        let p = c.primitives();
        assert_eq!(p.len(), 4);
        assert!((p[0].direction() - e(2, 0)).norm() < 1e-12);
        assert!((p[1].target() - 0.5).abs() < 1e-12);
        assert!((p[3].target()).abs() < 1e-12);
        assert!((p[0].target() - 1.0).abs() < 1e-12);
        assert_eq!(p[0].anchor_mean().as_slice(), &[0.5, 0.0]);
    }

    #[test]
    fn two_d_requires_orthogonal_directions() {
        let spec = CompositeSpec::TwoD { rows: vec![0, 1], first: vec![1.0, 0.0], second: vec![1.0, 1.0] };
        assert!(expand_composite(&toy(), spec).is_err());
        let spec = CompositeSpec::TwoD { rows: vec![0, 1, 2], first: vec![1.0, 0.0], second: vec![0.0, 1.0] };
        assert_eq!(expand_composite(&toy(), spec).unwrap().primitives().len(), 4);
    }

    #[test]
    fn duplicates_are_dropped() {
        let data = toy();
        let mut list = Vec::new();
        for p in expand_composite(&data, CompositeSpec::Margin).unwrap().into_primitives() {
            assert!(push_unique(&mut list, p));
        }
        // the one-cluster axes of this data are not the coordinate axes, but the
        // margin itself is fully duplicated on a second push
        for p in expand_composite(&data, CompositeSpec::Margin).unwrap().into_primitives() {
            assert!(!push_unique(&mut list, p));
        }
        assert_eq!(list.len(), 4);
    }
}
