use super::{ProjectionMethod, ProjectionView, WhitenedMatrix};
use crate::error::{Error, Result};
use crate::linalg::{covariance, sorted_symmetric_eigen};

/// How far a component variance is from one: `(σ² − ln σ² − 1)/2`. Zero at
/// `σ² = 1`, positive elsewhere, and large for both inflated and collapsed
/// directions.
pub fn variance_gap_score(variance: f64) -> f64 {
    let v = variance.max(f64::MIN_POSITIVE);
    0.5 * (v - v.ln() - 1.0)
}

/// Principal components of the centered whitened data, ranked by
/// [`variance_gap_score`]. The two highest-scoring components span the view.
pub fn pca_view(whitened: &WhitenedMatrix) -> Result<ProjectionView> {
    let (n, d) = whitened.values.shape();
    if n < 3 {
        return Err(Error::Degenerate(format!("PCA needs at least 3 rows, got {n}")));
    }
    if d < 2 {
        return Err(Error::Degenerate("a 2-D view needs at least 2 columns".into()));
    }
    let (_, cov) = covariance(&whitened.values);
    let (variances, vectors) = sorted_symmetric_eigen(&cov);
    if variances[0] <= 0.0 {
        return Err(Error::Degenerate("data has zero variance".into()));
    }
    let mut order: Vec<usize> = (0..d).collect();
    let scores: Vec<f64> = variances.iter().map(|&v| variance_gap_score(v)).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut first = vectors.column(order[0]).into_owned();
    let mut second = vectors.column(order[1]).into_owned();
    for v in [&mut first, &mut second] {
        let idx = v.iamax();
        if v[idx] < 0.0 {
            v.neg_mut();
        }
    }
    ProjectionView::new(
        ProjectionMethod::Pca,
        [first, second],
        order.iter().map(|&i| scores[i]).collect(),
        order.iter().map(|&i| variances[i]).collect(),
        whitened,
        None,
    )
}
