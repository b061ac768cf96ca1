use std::time::{Duration, Instant};

use super::{BackgroundModel, FitConfig, FitStatus, REFRESH_INTERVAL};
use crate::maxent::UpdateOutcome;

/// Summary of one pass over all constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    /// 1-based sweep index.
    pub sweep: usize,
    pub max_lambda_change: f64,
    /// Largest normalized residual after the sweep.
    pub max_residual: f64,
    /// Time since the fit started.
    pub elapsed: Duration,
}

/// Receives progress and can stop a fit early. Cancellation is checked
/// between individual constraint updates.
pub trait FitObserver {
    fn on_sweep(&mut self, _report: &SweepReport) {}

    fn should_stop(&self) -> bool {
        false
    }
}

impl FitObserver for () {}

impl<F: FnMut(&SweepReport)> FitObserver for F {
    fn on_sweep(&mut self, report: &SweepReport) {
        self(report)
    }
}

impl BackgroundModel {
    /// One round-robin pass over the constraints in insertion order. Returns
    /// the largest absolute multiplier change.
    pub fn sweep(&mut self, root_tolerance: f64) -> f64 {
        (0..self.constraints.len())
            .map(|t| self.update(t, root_tolerance).lambda_change().abs())
            .fold(0.0, f64::max)
    }

    /// Runs coordinate ascent until converged, out of time, out of sweeps, or
    /// stopped by the observer. The model is consistent whatever the outcome:
    /// duals are refreshed before returning.
    pub fn fit(&mut self, config: &FitConfig, observer: &mut dyn FitObserver) -> FitStatus {
        let start = Instant::now();
        let deadline = start.checked_add(config.time_budget);
        let out_of_time = |now: Instant| deadline.is_some_and(|d| now >= d);

        {
            let diag = self.diagnostics_mut();
            diag.sweeps = 0;
            diag.stalled.clear();
            diag.clamped.clear();
            diag.floored_refreshes = 0;
            diag.history = Default::default();
        }

        if self.constraints.is_empty() {
            self.finish(FitStatus::Converged, start);
            return FitStatus::Converged;
        }

        self.set_status(FitStatus::InProgress);
        let mut sweep = 0;
        let status = 'outer: loop {
            if config.max_sweeps.is_some_and(|m| sweep >= m) {
                break FitStatus::Cutoff;
            }
            sweep += 1;
            let mut max_change = 0.0_f64;
            for t in 0..self.constraints.len() {
                if observer.should_stop() || out_of_time(Instant::now()) {
                    self.diagnostics_mut().sweeps = sweep - 1;
                    break 'outer FitStatus::Cutoff;
                }
                let out = self.update(t, config.root_tolerance);
                if let UpdateOutcome::Applied(l) | UpdateOutcome::Clamped(l) = out {
                    max_change = max_change.max(l.abs());
                }
            }
            if sweep % REFRESH_INTERVAL == 0 {
                self.refresh_duals();
            }

            let residuals = self.normalized_residuals();
            let max_residual = residuals.iter().copied().fold(0.0, f64::max);
            let report = SweepReport {
                sweep,
                max_lambda_change: max_change,
                max_residual,
                elapsed: start.elapsed(),
            };
            observer.on_sweep(&report);
            let diag = self.diagnostics_mut();
            diag.sweeps = sweep;
            diag.history.record(report);

            if max_change <= config.lambda_tolerance || max_residual <= config.moment_tolerance {
                break FitStatus::Converged;
            }
        };
        self.finish(status, start);
        status
    }

    fn finish(&mut self, status: FitStatus, start: Instant) {
        self.refresh_duals();
        let residuals = self.normalized_residuals();
        let diag = self.diagnostics_mut();
        diag.residuals = residuals;
        diag.elapsed = start.elapsed();
        self.set_status(status);
        self.version += 1;
    }

    /// Consuming variant of [`Self::fit`].
    pub fn fitted(mut self, config: &FitConfig) -> Self {
        self.fit(config, &mut ());
        self
    }
}
