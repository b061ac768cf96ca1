//! Whitening against the background model, background sampling, and the
//! search for informative 2-D projections.
//!
//! If the data follow the background model, whitened data are a unit
//! spherical Gaussian, so any structure PCA or ICA find in them is something
//! the model does not yet explain.

mod ica;
mod pca;
mod sample;
mod whiten;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ica::{gaussian_log_cosh, ica_view, log_cosh, IcaOptions};
pub use pca::{pca_view, variance_gap_score};
pub use sample::sample_background;
pub use whiten::{whiten, whiten_matrix, WHITENING_CLIP};

/// Data whitened against a particular model state.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedMatrix {
    pub values: DMatrix<f64>,
    pub model_version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    #[default]
    Pca,
    Ica,
}

impl std::str::FromStr for ProjectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(Self::Pca),
            "ica" => Ok(Self::Ica),
            other => Err(Error::InvalidData(format!("unknown projection method `{other}`"))),
        }
    }
}

/// A 2-D view of whitened data, with the row-aligned background sample
/// projected onto the same plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionView {
    pub method: ProjectionMethod,
    /// Orthonormal directions in whitened space.
    pub directions: [DVector<f64>; 2],
    /// Score of every computed component, sorted by decreasing magnitude.
    pub scores: Vec<f64>,
    /// Component variances aligned with `scores` (PCA only).
    pub variances: Vec<f64>,
    pub data_points: Vec<[f64; 2]>,
    pub background_points: Vec<[f64; 2]>,
    pub model_version: u64,
    /// Set when the direction search did not converge.
    pub warning: Option<String>,
}

impl ProjectionView {
    pub(crate) fn new(
        method: ProjectionMethod,
        directions: [DVector<f64>; 2],
        scores: Vec<f64>,
        variances: Vec<f64>,
        whitened: &WhitenedMatrix,
        warning: Option<String>,
    ) -> Result<Self> {
        let mut view = Self {
            method,
            directions,
            scores,
            variances,
            data_points: Vec::new(),
            background_points: Vec::new(),
            model_version: whitened.model_version,
            warning,
        };
        view.data_points = project(&whitened.values, &view)?;
        Ok(view)
    }

    /// Projects a (whitened) background sample onto the view plane.
    pub fn with_background(mut self, whitened_sample: &DMatrix<f64>) -> Result<Self> {
        if whitened_sample.nrows() != self.data_points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.data_points.len(),
                actual: whitened_sample.nrows(),
            });
        }
        self.background_points = project(whitened_sample, &self)?;
        Ok(self)
    }

    pub fn max_abs_score(&self) -> f64 {
        self.scores.iter().map(|s| s.abs()).fold(0.0, f64::max)
    }
}

/// Coordinates of each row of `points` on the view's two directions.
pub fn project(points: &DMatrix<f64>, view: &ProjectionView) -> Result<Vec<[f64; 2]>> {
    let d = view.directions[0].len();
    if points.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: points.ncols() });
    }
    let a = points * &view.directions[0];
    let b = points * &view.directions[1];
    Ok(a.iter().zip(b.iter()).map(|(&x, &y)| [x, y]).collect())
}
