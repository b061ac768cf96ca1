use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::sorted_symmetric_eigen;
use crate::maxent::BackgroundModel;

/// Draws one synthetic dataset: row `i` from `N(mᵢ, Σᵢ)` of its class.
/// Rows are drawn in order from a single seeded stream, so the result is a
/// pure function of the model and `seed`.
pub fn sample_background(model: &BackgroundModel, seed: u64) -> DMatrix<f64> {
    let d = model.dimension();
    let n = model.partition().nrows();
    let factors: Vec<DMatrix<f64>> = model
        .classes()
        .iter()
        .map(|p| {
            let (values, basis) = sorted_symmetric_eigen(&p.cov);
            let scale = values.map(|v| v.max(0.0).sqrt());
            basis * DMatrix::from_diagonal(&scale)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let class = model.partition().class_of_row(i);
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
        let x = &model.classes()[class].mean + &factors[class] * z;
        out.set_row(i, &x.transpose());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataMatrix;

    #[test]
    fn same_seed_same_sample() {
        let data = DataMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let model = BackgroundModel::for_data(&data, Vec::new());
        assert_eq!(sample_background(&model, 7), sample_background(&model, 7));
        assert_ne!(sample_background(&model, 7), sample_background(&model, 8));
    }

    #[test]
    fn unconstrained_sample_is_standard_normal() {
        let n = 20_000;
        let data = DataMatrix::new(DMatrix::zeros(n, 3)).unwrap();
        let model = BackgroundModel::for_data(&data, Vec::new());
        let s = sample_background(&model, 42);
        let (mean, cov) = crate::linalg::covariance(&s);
        let bound = 4.0 / (n as f64).sqrt();
        assert!(mean.amax() < bound, "mean {mean}");
        assert!((cov - DMatrix::identity(3, 3)).amax() < 5.0 / (n as f64).sqrt());
    }
}
