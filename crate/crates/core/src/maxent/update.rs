//! Single-constraint multiplier updates.
//!
//! For a change `λ` in the multiplier of constraint `t` (direction `w`,
//! anchor projection `δ = m̂ᵀw`), every class `c` inside the constraint has,
//! before the update, `g = Σ̃w`, `s = wᵀΣ̃w` and `e = m̃ᵀw`.
//!
//! Linear: `θ₁ += λw`, so `m += λg` and the expectation moves by `λ Σ n_c s_c`.
//!
//! Quadratic: `θ₂ += λwwᵀ` and `θ₁ += λδw`. Woodbury gives
//! `Σ = Σ̃ − λggᵀ/(1 + λs)` and, using `m̃ = Σ̃θ̃₁`,
//! `m = m̃ + g λ(δ − e)/(1 + λs)`. Along `w` the class then has variance
//! `s/(1+λs)` and offset from the anchor `(e − δ)/(1+λs)`, so
//!
//! ```text
//! v(λ) = Σ_c n_c [ s_c/(1+λs_c) + (e_c − δ)²/(1+λs_c)² ]
//! ```
//!
//! which is convex and strictly decreasing on `λ > −1/max s_c`, going to
//! infinity at the left end and to `Σ_{s_c=0} n_c (e_c − δ)²` as `λ → ∞`.

use nalgebra::{DMatrix, DVector};

use super::BackgroundModel;
use crate::constraint::ConstraintKind;
use crate::linalg::quad_form;

/// Largest multiplier change taken in one quadratic step. Variance along the
/// direction cannot drop below `1/MAX_QUADRATIC_STEP` per step, which keeps
/// constraints with a zero target (the singular optimum) finite.
pub const MAX_QUADRATIC_STEP: f64 = 1e12;

/// Denominators below this mean the direction has no variance left.
const STALL_EPSILON: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// The constraint now holds; carries the multiplier change.
    Applied(f64),
    /// The root was outside the feasible interval; the multiplier was moved
    /// to the interval margin instead.
    Clamped(f64),
    /// No variance along the direction; nothing changed.
    Stalled,
}

impl UpdateOutcome {
    pub fn lambda_change(self) -> f64 {
        match self {
            Self::Applied(l) | Self::Clamped(l) => l,
            Self::Stalled => 0.0,
        }
    }
}

/// `v(λ)` for one quadratic constraint, in per-class terms.
#[derive(Debug, Clone)]
pub struct QuadraticResponse {
    /// `(n_c, s_c, e_c − δ)` for each class in the constraint.
    terms: Vec<(f64, f64, f64)>,
}

impl QuadraticResponse {
    /// Builds a response from `(class size, wᵀΣw, wᵀm − δ)` triples.
    pub fn from_terms(terms: Vec<(f64, f64, f64)>) -> Self {
        Self { terms }
    }
}

impl QuadraticResponse {
    pub fn value(&self, lambda: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(n, s, q)| {
                let r = 1.0 / (1.0 + lambda * s);
                n * (s * r + q * q * r * r)
            })
            .sum()
    }

    pub fn derivative(&self, lambda: f64) -> f64 {
        -self
            .terms
            .iter()
            .map(|&(n, s, q)| {
                let r = 1.0 / (1.0 + lambda * s);
                n * (s * s * r * r + 2.0 * s * q * q * r * r * r)
            })
            .sum::<f64>()
    }

    /// Open lower end of the feasible interval, `−1/max s_c`. `None` when
    /// every class has zero variance along the direction.
    pub fn feasible_lower(&self) -> Option<f64> {
        let s_max = self.terms.iter().map(|t| t.1).fold(0.0, f64::max);
        (s_max > STALL_EPSILON).then(|| -1.0 / s_max)
    }

    /// Solves `v(λ) = target`. Returns the root and whether it had to be
    /// clamped to the feasible interval or to [`MAX_QUADRATIC_STEP`].
    pub fn solve(&self, target: f64, tolerance: f64) -> Option<(f64, bool)> {
        let lower = self.feasible_lower()?;
        let tol = tolerance * target.abs().max(1.0);
        let h = |l: f64| self.value(l) - target;
        let h0 = h(0.0);
        if h0.abs() <= tol {
            return Some((0.0, false));
        }

        // bracket [lo, hi] with h(lo) >= 0 >= h(hi)
        let (mut lo, mut hi);
        if h0 > 0.0 {
            lo = 0.0;
            hi = 1.0;
            loop {
                let hh = h(hi);
                if hh <= 0.0 {
                    break;
                }
                lo = hi;
                if hi >= MAX_QUADRATIC_STEP {
                    return Some((MAX_QUADRATIC_STEP, true));
                }
                hi = (hi * 4.0).min(MAX_QUADRATIC_STEP);
            }
        } else {
            hi = 0.0;
            let mut frac = 0.5;
            loop {
                let candidate = lower * (1.0 - frac);
                if h(candidate) >= 0.0 {
                    lo = candidate;
                    break;
                }
                hi = candidate;
                frac *= 0.5;
                if frac < f64::EPSILON {
                    return Some((candidate, true));
                }
            }
        }

        // Newton from the left end converges monotonically for a convex
        // decreasing function; bisection guards against round-off.
        let mut x = lo;
        let mut hx = h(x);
        for _ in 0..200 {
            if hx.abs() <= tol {
                return Some((x, false));
            }
            let slope = self.derivative(x);
            let mut next = if slope < 0.0 { x - hx / slope } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let hn = h(next);
            if hn >= 0.0 {
                lo = next;
            } else {
                hi = next;
            }
            x = next;
            hx = hn;
            if (hi - lo) <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
                break;
            }
        }
        Some((x, false))
    }
}

impl BackgroundModel {
    /// `v(λ)` for quadratic constraint `t` at the current parameters.
    ///
    /// # Panics
    /// If constraint `t` is linear.
    pub fn quadratic_response(&self, t: usize) -> QuadraticResponse {
        let c = &self.constraints[t];
        assert_eq!(c.kind(), ConstraintKind::Quadratic, "constraint {t} is not quadratic");
        let w = c.direction();
        let delta = c.anchor_projection();
        let sizes = self.partition.class_sizes();
        let terms = self
            .partition
            .classes_of_constraint(t)
            .iter()
            .map(|&k| {
                let p = &self.classes[k];
                let s = quad_form(&p.cov, w).max(0.0);
                (sizes[k] as f64, s, p.mean.dot(w) - delta)
            })
            .collect();
        QuadraticResponse { terms }
    }

    /// Applies the update for constraint `t` of whichever kind it is.
    pub fn update(&mut self, t: usize, root_tolerance: f64) -> UpdateOutcome {
        match self.constraints[t].kind() {
            ConstraintKind::Linear => self.update_linear(t),
            ConstraintKind::Quadratic => self.update_quadratic(t, root_tolerance),
        }
    }

    /// Closed-form multiplier change for a linear constraint.
    pub fn update_linear(&mut self, t: usize) -> UpdateOutcome {
        let c = &self.constraints[t];
        assert_eq!(c.kind(), ConstraintKind::Linear, "constraint {t} is not linear");
        let w = c.direction().clone();
        let target = c.target();
        let sizes = self.partition.class_sizes();
        let members = self.partition.classes_of_constraint(t);

        let mut current = 0.0;
        let mut denom = 0.0;
        let mut gs = Vec::with_capacity(members.len());
        for &k in members {
            let p = &self.classes[k];
            let g = &p.cov * &w;
            let n = sizes[k] as f64;
            current += n * p.mean.dot(&w);
            denom += n * w.dot(&g);
            gs.push(g);
        }
        if denom <= STALL_EPSILON {
            self.note_stalled(t);
            return UpdateOutcome::Stalled;
        }
        let lambda = (target - current) / denom;
        if lambda == 0.0 {
            return UpdateOutcome::Applied(0.0);
        }
        for (&k, g) in members.iter().zip(gs) {
            let p = &mut self.classes[k];
            p.natural_first.axpy(lambda, &w, 1.0);
            p.mean.axpy(lambda, &g, 1.0);
        }
        UpdateOutcome::Applied(lambda)
    }

    /// Root-finding multiplier change for a quadratic constraint, with the
    /// covariance maintained by a rank-1 Woodbury correction.
    pub fn update_quadratic(&mut self, t: usize, root_tolerance: f64) -> UpdateOutcome {
        let c = &self.constraints[t];
        assert_eq!(c.kind(), ConstraintKind::Quadratic, "constraint {t} is not quadratic");
        let w = c.direction().clone();
        let delta = c.anchor_projection();
        let target = c.target();
        let sizes = self.partition.class_sizes();
        let members = self.partition.classes_of_constraint(t).to_vec();

        let mut terms = Vec::with_capacity(members.len());
        let mut gs = Vec::with_capacity(members.len());
        for &k in &members {
            let p = &self.classes[k];
            let g = &p.cov * &w;
            let s = w.dot(&g).max(0.0);
            terms.push((sizes[k] as f64, s, p.mean.dot(&w) - delta));
            gs.push(g);
        }
        let response = QuadraticResponse { terms };
        let Some((lambda, clamped)) = response.solve(target, root_tolerance) else {
            self.note_stalled(t);
            return UpdateOutcome::Stalled;
        };
        if lambda != 0.0 {
            for ((&k, g), &(_, s, q)) in members.iter().zip(&gs).zip(&response.terms) {
                let p = &mut self.classes[k];
                let denom = 1.0 + lambda * s;
                p.natural_second.ger(lambda, &w, &w, 1.0);
                p.natural_first.axpy(lambda * delta, &w, 1.0);
                rank_one_downdate(&mut p.cov, lambda / denom, g);
                p.mean.axpy(-lambda * q / denom, g, 1.0);
            }
        }
        if clamped {
            self.note_clamped(t);
            UpdateOutcome::Clamped(lambda)
        } else {
            UpdateOutcome::Applied(lambda)
        }
    }

    fn note_stalled(&mut self, t: usize) {
        let stalled = &mut self.diagnostics_mut().stalled;
        if !stalled.contains(&t) {
            stalled.push(t);
        }
    }

    fn note_clamped(&mut self, t: usize) {
        let clamped = &mut self.diagnostics_mut().clamped;
        if !clamped.contains(&t) {
            clamped.push(t);
        }
    }
}

/// Covariance after adding `λwwᵀ` to the precision, by the Woodbury
/// identity: `Σ ← Σ − λ/(1 + λ wᵀΣw) · (Σw)(Σw)ᵀ`. This is the step every
/// quadratic update applies per class.
pub fn precision_rank_one_update(cov: &mut DMatrix<f64>, lambda: f64, w: &DVector<f64>) {
    let g = &*cov * w;
    let s = w.dot(&g);
    rank_one_downdate(cov, lambda / (1.0 + lambda * s), &g);
}

/// `m −= k ggᵀ`, computed on the upper triangle and mirrored so `m` stays
/// exactly symmetric.
fn rank_one_downdate(m: &mut DMatrix<f64>, k: f64, g: &DVector<f64>) {
    let d = g.len();
    let g = g.as_slice();
    // the upper part of each column is contiguous in column-major storage
    for (j, col) in m.as_mut_slice().chunks_exact_mut(d).enumerate() {
        let kg = k * g[j];
        for (v, &gi) in col[..=j].iter_mut().zip(&g[..=j]) {
            *v -= kg * gi;
        }
    }
    m.fill_lower_triangle_with_upper_triangle();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{expand_composite, CompositeSpec, PrimitiveConstraint};
    use crate::data::DataMatrix;

    fn toy() -> DataMatrix {
        DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()
    }

    fn case_a() -> BackgroundModel {
        let data = toy();
        let cs = expand_composite(&data, CompositeSpec::Cluster { rows: vec![0, 2] }).unwrap().into_primitives();
        BackgroundModel::for_data(&data, cs)
    }

    #[test]
    fn satisfied_linear_constraint_gives_zero_step() {
        let mut model = case_a();
        // constraint 2 is linear along e₂ with target 0, already met
        assert_eq!(model.update_linear(2), UpdateOutcome::Applied(0.0));
    }

    #[test]
    fn linear_step_from_unit_gaussian() {
        let mut model = case_a();
        // λ = v̂/(|I| wᵀw) = 1/2
        assert_eq!(model.update_linear(0), UpdateOutcome::Applied(0.5));
        assert_eq!(model.classes()[0].mean.as_slice(), &[0.5, 0.0]);
        assert_eq!(model.classes()[1].mean.as_slice(), &[0.0, 0.0]);
        assert!((model.expected_value(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_step_hits_quarter_variance() {
        let mut model = case_a();
        model.update_linear(0);
        let out = model.update_quadratic(1, 1e-10);
        assert!(matches!(out, UpdateOutcome::Applied(_)));
        assert!((model.classes()[0].cov[(0, 0)] - 0.25).abs() < 1e-10);
        assert!((model.expected_value(1) - 0.5).abs() < 1e-10);
        // untouched class keeps the unit Gaussian
        assert_eq!(model.classes()[1].cov, DMatrix::identity(2, 2));
    }

    #[test]
    fn satisfied_quadratic_constraint_gives_zero_step() {
        let data = toy();
        let c = PrimitiveConstraint::new(&data, ConstraintKind::Quadratic, &[0, 1, 2], DVector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        let mut model = BackgroundModel::for_data(&data, vec![c]);
        model.update_quadratic(0, 1e-10);
        assert_eq!(model.update_quadratic(0, 1e-10), UpdateOutcome::Applied(0.0));
    }

    #[test]
    fn zero_target_is_clamped_not_infinite() {
        let mut model = case_a();
        let out = model.update_quadratic(3, 1e-10);
        assert!(matches!(out, UpdateOutcome::Applied(_) | UpdateOutcome::Clamped(_)));
        // the root is met to the absolute tolerance: 2 rows share ≤ 1e-10
        let var = model.classes()[0].cov[(1, 1)];
        assert!(var > 0.0 && var <= 1e-10);
        assert!(model.expected_value(3) <= 1e-10);
    }

    #[test]
    fn negative_step_when_variance_must_grow() {
        let data = DataMatrix::from_rows(&[vec![3.0], vec![-3.0]]).unwrap();
        let c = PrimitiveConstraint::new(&data, ConstraintKind::Quadratic, &[0, 1], DVector::from_vec(vec![1.0]))
            .unwrap();
        let mut model = BackgroundModel::for_data(&data, vec![c]);
        let out = model.update_quadratic(0, 1e-12);
        assert!(out.lambda_change() < 0.0);
        assert!((model.classes()[0].cov[(0, 0)] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn response_is_decreasing_on_feasible_interval() {
        let r = QuadraticResponse { terms: vec![(3.0, 0.5, 0.2), (2.0, 2.0, -1.0), (1.0, 0.0, 0.3)] };
        let lower = r.feasible_lower().unwrap();
        assert_eq!(lower, -0.5);
        let mut prev = f64::INFINITY;
        for i in 1..400 {
            let l = lower + i as f64 * 0.05;
            let v = r.value(l);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn downdate_stays_symmetric() {
        let mut m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        rank_one_downdate(&mut m, 0.37, &DVector::from_vec(vec![0.1, -0.7, 0.33]));
        assert_eq!(m, m.transpose());
    }
}
