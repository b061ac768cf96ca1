use nalgebra::DMatrix;

use super::WhitenedMatrix;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;
use crate::maxent::{BackgroundModel, ClassParams, FitStatus};

/// Whitened components are clipped to this magnitude, so directions with
/// (numerically) zero variance do not overflow.
pub const WHITENING_CLIP: f64 = 1e6;

/// `yᵢ = U D^{1/2} Uᵀ (xᵢ − mᵢ)` with `Σᵢ⁻¹ = U D Uᵀ`, per row class.
pub fn whiten(data: &DataMatrix, model: &BackgroundModel) -> Result<WhitenedMatrix> {
    let values = whiten_matrix(data.values(), model)?;
    Ok(WhitenedMatrix { values, model_version: model.version() })
}

/// Whitens any matrix row-aligned with the model's rows (for instance a
/// background sample), using the transform of each row's class.
pub fn whiten_matrix(x: &DMatrix<f64>, model: &BackgroundModel) -> Result<DMatrix<f64>> {
    match model.status() {
        FitStatus::InProgress => return Err(Error::StaleModel("a fit is in progress".into())),
        FitStatus::Unfitted if !model.constraints().is_empty() => {
            return Err(Error::StaleModel("constraints changed since the last fit".into()))
        }
        _ => {}
    }
    let n = model.partition().nrows();
    let d = model.dimension();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x.nrows() });
    }
    if x.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x.ncols() });
    }

    let mut out = x.clone();
    let standard = ClassParams::standard(d);
    for (class, rows) in model.partition().members().into_iter().enumerate() {
        let p = &model.classes()[class];
        if p.mean == standard.mean && p.cov == standard.cov {
            continue;
        }
        let (variances, basis) = sorted_symmetric_eigen(&p.cov);
        let basis_t = basis.transpose();
        for i in rows {
            let dev = x.row(i).transpose() - &p.mean;
            let mut c = &basis_t * dev;
            for (cj, &var) in c.iter_mut().zip(variances.iter()) {
                *cj = whiten_component(*cj, var);
            }
            out.set_row(i, &(&basis * c).transpose());
        }
    }
    Ok(out)
}

fn whiten_component(deviation: f64, variance: f64) -> f64 {
    if deviation == 0.0 {
        return 0.0;
    }
    if variance <= 0.0 {
        return WHITENING_CLIP.copysign(deviation);
    }
    (deviation / variance.sqrt()).clamp(-WHITENING_CLIP, WHITENING_CLIP)
}
