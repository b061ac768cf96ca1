//! Symmetric FastICA with the log-cosh contrast.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ProjectionMethod, ProjectionView, WhitenedMatrix};
use crate::error::{Error, Result};
use crate::linalg::{covariance, inv_sqrt_spd, orthonormal_pair, sorted_symmetric_eigen};

#[derive(Debug, Clone, PartialEq)]
pub struct IcaOptions {
    pub seed: u64,
    /// Number of components to extract; defaults to `min(d, 20)`.
    pub n_components: Option<usize>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self { seed: 0, n_components: None, max_iterations: 200, tolerance: 1e-6 }
    }
}

pub const MAX_DISPLAY_COMPONENTS: usize = 20;

/// `ln cosh u`, stable for large `|u|`.
pub fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `E[ln cosh ν]` for `ν ~ N(0, 1)`, by composite Simpson quadrature on
/// `[−12, 12]` (the tail beyond contributes below 1e-30).
pub fn gaussian_log_cosh() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        let steps = 24_000;
        let (a, b) = (-12.0_f64, 12.0_f64);
        let h = (b - a) / steps as f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let f = |x: f64| log_cosh(x) * norm * (-0.5 * x * x).exp();
        let mut sum = f(a) + f(b);
        for k in 1..steps {
            let x = a + k as f64 * h;
            sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        sum * h / 3.0
    })
}

/// Runs FastICA on the whitened data and returns the plane of the two
/// components with the largest `|mean ln cosh(s) − E[ln cosh ν]|`.
pub fn ica_view(whitened: &WhitenedMatrix, options: &IcaOptions) -> Result<ProjectionView> {
    let (n, d) = whitened.values.shape();
    if n <= d {
        return Err(Error::Degenerate(format!("ICA needs more rows than columns, got {n}x{d}")));
    }
    if d < 2 {
        return Err(Error::Degenerate("a 2-D view needs at least 2 columns".into()));
    }

    // internal pre-whitening to the leading `p` principal components
    let (mean, cov) = covariance(&whitened.values);
    let (values, vectors) = sorted_symmetric_eigen(&cov);
    if values[0] <= 0.0 {
        return Err(Error::Degenerate("data has zero variance".into()));
    }
    let rank = values.iter().filter(|&&v| v > 1e-10 * values[0]).count();
    let requested = options.n_components.unwrap_or(d).min(MAX_DISPLAY_COMPONENTS).min(d);
    let p = requested.min(rank);
    if p < 2 {
        return Err(Error::Degenerate(format!("whitened data has rank {rank}, need at least 2")));
    }
    let mut k = DMatrix::zeros(p, d);
    for j in 0..p {
        k.set_row(j, &(vectors.column(j).transpose() / values[j].sqrt()));
    }
    let mut centered = whitened.values.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let z = &centered * k.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let init = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);

    let nf = n as f64;
    let mut converged = false;
    for _ in 0..options.max_iterations {
        let u = &z * w.transpose();
        let g = u.map(f64::tanh);
        let g_prime_mean = DVector::from_iterator(
            p,
            g.column_iter().map(|col| col.iter().map(|t| 1.0 - t * t).sum::<f64>() / nf),
        );
        let mut next = g.transpose() * &z / nf;
        for i in 0..p {
            let shifted = next.row(i) - w.row(i) * g_prime_mean[i];
            next.set_row(i, &shifted);
        }
        let next = symmetric_decorrelation(&next);
        let change = (0..p)
            .map(|i| (next.row(i).dot(&w.row(i)).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < options.tolerance {
            converged = true;
            break;
        }
    }

    let sources = &z * w.transpose();
    let kappa = gaussian_log_cosh();
    let scores: Vec<f64> =
        sources.column_iter().map(|col| col.iter().map(|&s| log_cosh(s)).sum::<f64>() / nf - kappa).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));

    // unmixing rows expressed in whitened-data coordinates
    let unmixing = &w * &k;
    let first = unmixing.row(order[0]).transpose();
    let second = unmixing.row(order[1]).transpose();
    let (mut u, mut v) = orthonormal_pair(&first, &second)
        .ok_or_else(|| Error::Degenerate("top independent components are parallel".into()))?;
    for dir in [&mut u, &mut v] {
        let idx = dir.iamax();
        if dir[idx] < 0.0 {
            dir.neg_mut();
        }
    }
    let warning = (!converged)
        .then(|| format!("FastICA did not converge within {} iterations", options.max_iterations));
    ProjectionView::new(
        ProjectionMethod::Ica,
        [u, v],
        order.iter().map(|&i| scores[i]).collect(),
        Vec::new(),
        whitened,
        warning,
    )
}

/// `(WWᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    inv_sqrt_spd(&(w * w.transpose())) * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.3) - 0.3_f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(-2.0) - 2.0_f64.cosh().ln()).abs() < 1e-14);
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn gaussian_constant_matches_monte_carlo() {
        let kappa = gaussian_log_cosh();
        assert!((kappa - 0.3746).abs() < 1e-3, "kappa = {kappa}");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 400_000;
        let mc: f64 = (0..n).map(|_| log_cosh(StandardNormal.sample(&mut rng))).sum::<f64>() / n as f64;
        assert!((mc - kappa).abs() < 3e-3);
    }

    #[test]
    fn decorrelation_yields_orthogonal_matrix() {
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.4, 1.1, -0.3, 0.0, 0.5, 0.9]);
        let o = symmetric_decorrelation(&w);
        assert!((&o * o.transpose() - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn recovers_uniform_source_direction() {
        // one uniform (sub-Gaussian) source hidden among Gaussians, then rotated
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = DMatrix::zeros(n, 3);
        for i in 0..n {
            let u: f64 = rand::Rng::random_range(&mut rng, -3.0_f64.sqrt()..3.0_f64.sqrt());
            x[(i, 0)] = u;
            x[(i, 1)] = StandardNormal.sample(&mut rng);
            x[(i, 2)] = StandardNormal.sample(&mut rng);
        }
        let (c, s) = (0.6_f64, 0.8_f64);
        let rot = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let y = &x * rot.transpose();
        let view = ica_view(&WhitenedMatrix { values: y, model_version: 0 }, &IcaOptions::default()).unwrap();
        assert!(view.warning.is_none());
        let hidden = rot.column(0);
        assert!(view.directions[0].dot(&hidden).abs() > 0.99, "{}", view.directions[0]);
        assert!(view.scores[0].abs() > 5.0 * view.scores[1].abs());
        assert!(view.directions[0].dot(&view.directions[1]).abs() < 1e-12);
    }
}
