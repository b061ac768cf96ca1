//! The maximum-entropy background model.
//!
//! Under linear and quadratic expectation constraints the solution is an
//! independent Gaussian per row, `xᵢ ~ N(mᵢ, Σᵢ)`, with natural parameters
//! `(Σᵢ⁻¹mᵢ, Σᵢ⁻¹)`. Rows in the same [`RowPartition`] class share parameters.
//! Starting from the unit spherical Gaussian, [`BackgroundModel::fit`] runs
//! coordinate ascent over the Lagrange multipliers: each step picks one
//! constraint and moves its multiplier so that the constraint holds exactly.
//! Multipliers are not stored; only their effect on the natural and dual
//! parameters is.

mod fit;
mod update;

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintKind, PrimitiveConstraint};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{quad_form, sorted_symmetric_eigen};
use crate::partition::RowPartition;

pub use fit::{FitObserver, SweepReport};
pub use update::{precision_rank_one_update, QuadraticResponse, UpdateOutcome, MAX_QUADRATIC_STEP};

/// Eigenvalues of a class covariance are kept in `[COVARIANCE_FLOOR, 1/COVARIANCE_FLOOR]`
/// when duals are recomputed from scratch.
pub const COVARIANCE_FLOOR: f64 = 1e-12;

/// Dual parameters are recomputed by full inversion every this many sweeps.
pub const REFRESH_INTERVAL: usize = 25;

/// Parameters shared by all rows of one equivalence class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassParams {
    /// `θ₁ = Σ⁻¹m`.
    pub natural_first: DVector<f64>,
    /// `θ₂ = Σ⁻¹`.
    pub natural_second: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl ClassParams {
    /// The unit spherical Gaussian.
    pub fn standard(d: usize) -> Self {
        Self {
            natural_first: DVector::zeros(d),
            natural_second: DMatrix::identity(d, d),
            mean: DVector::zeros(d),
            cov: DMatrix::identity(d, d),
        }
    }

    /// Recomputes `Σ = θ₂⁻¹` and `m = Σθ₁` by eigendecomposition, clamping the
    /// eigenvalues of `θ₂` so that those of `Σ` stay within
    /// `[COVARIANCE_FLOOR, 1/COVARIANCE_FLOOR]`. Returns whether any
    /// eigenvalue had to be clamped; in that case `θ₂` is replaced by the
    /// clamped matrix so both parameterizations stay consistent.
    pub fn refresh_duals(&mut self) -> bool {
        let (values, vectors) = sorted_symmetric_eigen(&self.natural_second);
        let lo = COVARIANCE_FLOOR;
        let hi = 1.0 / COVARIANCE_FLOOR;
        let clamped_values = values.map(|v| v.clamp(lo, hi));
        let floored = values.iter().zip(clamped_values.iter()).any(|(a, b)| a != b);
        let inv = clamped_values.map(|v| 1.0 / v);
        self.cov = &vectors * DMatrix::from_diagonal(&inv) * vectors.transpose();
        if floored {
            self.natural_second = &vectors * DMatrix::from_diagonal(&clamped_values) * vectors.transpose();
        }
        self.mean = &self.cov * &self.natural_first;
        floored
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Unfitted,
    InProgress,
    Converged,
    Cutoff,
}

/// Stopping rules for [`BackgroundModel::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Converged once no multiplier moves by more than this in a sweep.
    pub lambda_tolerance: f64,
    /// Converged once every constraint's mean (linear) or standard deviation
    /// (quadratic) along its direction is within this many full-data standard
    /// deviations of its target.
    pub moment_tolerance: f64,
    #[serde(with = "duration_millis")]
    pub time_budget: Duration,
    pub max_sweeps: Option<usize>,
    /// Absolute tolerance (relative when the target exceeds one) for the
    /// one-dimensional root search in quadratic updates.
    pub root_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_tolerance: 1e-2,
            moment_tolerance: 1e-2,
            time_budget: Duration::from_secs(10),
            max_sweeps: None,
            root_tolerance: 1e-10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_tolerance > 0.0 && self.moment_tolerance > 0.0 && self.root_tolerance > 0.0;
        if !ok {
            return Err(Error::InvalidData("fit tolerances must be positive".into()));
        }
        Ok(())
    }

    /// No time limit, for experiments that must run to convergence.
    pub fn without_cutoff(mut self) -> Self {
        self.time_budget = Duration::MAX;
        self
    }
}

mod duration_millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(u64::try_from(d.as_millis()).unwrap_or(u64::MAX))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// What happened during the most recent fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    pub sweeps: usize,
    pub elapsed: Duration,
    /// Normalized residual per constraint after the last sweep.
    pub residuals: Vec<f64>,
    /// Constraints whose update was skipped because all variance along the
    /// direction had collapsed.
    pub stalled: Vec<usize>,
    /// Constraints whose multiplier hit the feasible-interval margin.
    pub clamped: Vec<usize>,
    /// Number of dual refreshes that had to clamp eigenvalues.
    pub floored_refreshes: usize,
    history: SweepHistory,
}

impl FitDiagnostics {
    /// Per-sweep reports, thinned geometrically for long fits.
    pub fn history(&self) -> &[SweepReport] {
        &self.history.reports
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// One line per recorded sweep: `sweep max_dlambda max_residual elapsed_ms`.
    pub fn to_log(&self) -> String {
        let mut out = String::from("sweep\tmax_dlambda\tmax_residual\telapsed_ms\n");
        for r in self.history() {
            out.push_str(&format!(
                "{}\t{:.6e}\t{:.6e}\t{:.3}\n",
                r.sweep,
                r.max_lambda_change,
                r.max_residual,
                r.elapsed.as_secs_f64() * 1e3
            ));
        }
        out
    }
}

/// Bounded sweep log: when full, every other entry is dropped and only every
/// `stride`-th sweep is recorded from then on.
#[derive(Debug, Clone, PartialEq)]
struct SweepHistory {
    reports: Vec<SweepReport>,
    stride: usize,
}

impl Default for SweepHistory {
    fn default() -> Self {
        Self { reports: Vec::new(), stride: 1 }
    }
}

impl SweepHistory {
    const CAPACITY: usize = 4096;

    fn record(&mut self, report: SweepReport) {
        if !report.sweep.is_multiple_of(self.stride) {
            return;
        }
        if self.reports.len() == Self::CAPACITY {
            self.stride *= 2;
            let stride = self.stride;
            self.reports.retain(|r| r.sweep % stride == 0);
            if !report.sweep.is_multiple_of(stride) {
                return;
            }
        }
        self.reports.push(report);
    }
}

/// The fitted (or to-be-fitted) background distribution.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    partition: RowPartition,
    constraints: Vec<PrimitiveConstraint>,
    classes: Vec<ClassParams>,
    reference_scale: Vec<f64>,
    status: FitStatus,
    diagnostics: FitDiagnostics,
    version: u64,
}

impl BackgroundModel {
    /// Every class starts at the unit spherical Gaussian. Residuals are
    /// measured in units of `|w|` until [`Self::with_reference_covariance`]
    /// supplies the data covariance.
    pub fn init(dimension: usize, partition: RowPartition, constraints: Vec<PrimitiveConstraint>) -> Self {
        assert_eq!(
            partition.num_constraints(),
            constraints.len(),
            "partition was built for a different constraint list"
        );
        assert!(
            constraints.iter().all(|c| c.direction().len() == dimension),
            "constraint dimension differs from model dimension"
        );
        let d = dimension;
        let classes = vec![ClassParams::standard(d); partition.num_classes()];
        let reference_scale = constraints.iter().map(|c| c.direction().norm()).collect();
        Self {
            partition,
            constraints,
            classes,
            reference_scale,
            status: FitStatus::Unfitted,
            diagnostics: FitDiagnostics::default(),
            version: 0,
        }
    }

    /// Builds the partition and measures residuals against the standard
    /// deviation of `data` along each constraint direction.
    pub fn for_data(data: &DataMatrix, constraints: Vec<PrimitiveConstraint>) -> Self {
        let partition = RowPartition::build(data.nrows(), &constraints);
        Self::init(data.ncols(), partition, constraints).with_reference_covariance(&data.covariance())
    }

    pub fn with_reference_covariance(mut self, cov: &DMatrix<f64>) -> Self {
        self.reference_scale = self
            .constraints
            .iter()
            .map(|c| {
                let w = c.direction();
                let sd = w.dot(&(cov * w)).max(0.0).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    w.norm()
                }
            })
            .collect();
        self
    }

    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn partition(&self) -> &RowPartition {
        &self.partition
    }

    pub fn constraints(&self) -> &[PrimitiveConstraint] {
        &self.constraints
    }

    pub fn classes(&self) -> &[ClassParams] {
        &self.classes
    }

    /// Parameters of the class containing `row`.
    pub fn params_of_row(&self, row: usize) -> &ClassParams {
        &self.classes[self.partition.class_of_row(row)]
    }

    pub fn status(&self) -> FitStatus {
        self.status
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn dimension(&self) -> usize {
        self.classes[0].mean.len()
    }

    /// Standard deviation of the observed data along constraint `t`'s direction.
    pub fn reference_scale(&self, t: usize) -> f64 {
        self.reference_scale[t]
    }

    /// `E_p[f_t(X)]` under the current parameters.
    pub fn expected_value(&self, t: usize) -> f64 {
        let c = &self.constraints[t];
        let w = c.direction();
        let sizes = self.partition.class_sizes();
        let classes = self.partition.classes_of_constraint(t);
        match c.kind() {
            ConstraintKind::Linear => {
                classes.iter().map(|&k| sizes[k] as f64 * self.classes[k].mean.dot(w)).sum()
            }
            ConstraintKind::Quadratic => {
                let delta = c.anchor_projection();
                classes
                    .iter()
                    .map(|&k| {
                        let p = &self.classes[k];
                        let var = quad_form(&p.cov, w);
                        let q = p.mean.dot(w) - delta;
                        sizes[k] as f64 * (var + q * q)
                    })
                    .sum()
            }
        }
    }

    /// Distance between the model's and the data's per-row statistic along
    /// constraint `t`, in units of the data's standard deviation along `w`.
    /// The statistic is the mean for linear constraints and the standard
    /// deviation around the anchor for quadratic ones.
    pub fn normalized_residual(&self, t: usize) -> f64 {
        let c = &self.constraints[t];
        let count = c.rows().len() as f64;
        let expected = self.expected_value(t);
        let gap = match c.kind() {
            ConstraintKind::Linear => (expected - c.target()).abs() / count,
            ConstraintKind::Quadratic => {
                ((expected.max(0.0) / count).sqrt() - (c.target().max(0.0) / count).sqrt()).abs()
            }
        };
        gap / self.reference_scale[t]
    }

    pub fn normalized_residuals(&self) -> Vec<f64> {
        (0..self.constraints.len()).map(|t| self.normalized_residual(t)).collect()
    }

    /// Recomputes all dual parameters from the natural ones, cancelling drift
    /// accumulated by rank-1 updates. Returns how many classes were floored.
    pub fn refresh_duals(&mut self) -> usize {
        let floored = self.classes.iter_mut().map(ClassParams::refresh_duals).filter(|&f| f).count();
        self.diagnostics.floored_refreshes += floored;
        floored
    }

    /// `−KL(p‖q)` against the unit spherical Gaussian, summed over rows.
    /// Diagnostic only.
    pub fn relative_entropy(&self) -> f64 {
        let d = self.dimension() as f64;
        self.classes
            .iter()
            .zip(self.partition.class_sizes())
            .map(|(p, &size)| {
                let (values, _) = sorted_symmetric_eigen(&p.cov);
                let log_det: f64 = values.iter().map(|v| v.max(COVARIANCE_FLOOR).ln()).sum();
                let kl = 0.5 * (p.cov.trace() + p.mean.norm_squared() - d - log_det);
                -(size as f64) * kl
            })
            .sum()
    }

    pub(crate) fn set_status(&mut self, status: FitStatus) {
        self.status = status;
    }

    pub(crate) fn diagnostics_mut(&mut self) -> &mut FitDiagnostics {
        &mut self.diagnostics
    }
}
