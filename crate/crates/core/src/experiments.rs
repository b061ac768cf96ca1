//! Headless convergence and runtime experiments.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::constraint::{expand_composite, push_unique, CompositeSpec, PrimitiveConstraint};
use crate::data::DataMatrix;
use crate::error::Result;
use crate::maxent::{BackgroundModel, FitConfig, FitStatus, REFRESH_INTERVAL};
use crate::projection::{ica_view, whiten, IcaOptions};
use crate::synth::{gen_adversarial3, gen_clustered};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdversarialCase {
    A,
    B,
}

impl std::str::FromStr for AdversarialCase {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            other => Err(crate::Error::InvalidData(format!("unknown case `{other}`, expected A or B"))),
        }
    }
}

/// Per-sweep state of the three-point problem. Index 0 is the initial model.
#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    /// `(Σ₁)₁₁`, the first-coordinate variance of row 1's class.
    pub variance: Vec<f64>,
    /// The final model after all sweeps.
    pub model: BackgroundModel,
}

impl ConvergenceTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,sigma1_11\n");
        for (t, v) in self.variance.iter().enumerate() {
            let _ = writeln!(out, "{t},{v:e}");
        }
        out
    }

    /// Least-squares slope of `ln variance` against `ln sweep` over
    /// `from..=to`.
    pub fn log_log_slope(&self, from: usize, to: usize) -> f64 {
        let pts: Vec<(f64, f64)> = (from.max(1)..=to.min(self.variance.len() - 1))
            .filter(|&t| self.variance[t] > 0.0)
            .map(|t| ((t as f64).ln(), self.variance[t].ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }
}

/// Runs `sweeps` plain coordinate-ascent passes on the three-point problem,
/// with the same dual refresh cadence as a full fit.
pub fn run_convergence(case: AdversarialCase, sweeps: usize) -> ConvergenceTrace {
    let adv = gen_adversarial3();
    let constraints = match case {
        AdversarialCase::A => adv.case_a,
        AdversarialCase::B => adv.case_b,
    };
    let mut model = BackgroundModel::for_data(&adv.data, constraints);
    let root_tolerance = FitConfig::default().root_tolerance;
    let mut variance = Vec::with_capacity(sweeps + 1);
    variance.push(model.params_of_row(0).cov[(0, 0)]);
    for t in 1..=sweeps {
        model.sweep(root_tolerance);
        if t % REFRESH_INTERVAL == 0 {
            model.refresh_duals();
        }
        variance.push(model.params_of_row(0).cov[(0, 0)]);
    }
    ConvergenceTrace { variance, model }
}

/// Constraints used by the runtime experiment: a margin constraint, plus one
/// cluster constraint per blob when there is more than one blob.
pub fn runtime_constraints(data: &DataMatrix, k: usize) -> Result<Vec<PrimitiveConstraint>> {
    let mut out = Vec::new();
    let mut specs = vec![CompositeSpec::Margin];
    if k > 1 {
        specs.extend((0..k).map(|c| CompositeSpec::Cluster { rows: data.rows_with_label(&format!("k{c}")) }));
    }
    for spec in specs {
        for p in expand_composite(data, spec)?.into_primitives() {
            push_unique(&mut out, p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RuntimeRow {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub repeats: usize,
    /// Median fit time, excluding constraint construction.
    #[serde(with = "duration_secs")]
    pub optim: Duration,
    /// Median whitening plus FastICA time.
    #[serde(with = "duration_secs")]
    pub ica: Duration,
    pub sweeps: usize,
    pub converged: bool,
}

/// Fits shorter than this are repeated on fresh copies of the model and
/// averaged, so millisecond fits are not dominated by timer and cold-cache
/// noise.
const MIN_TIMED_FIT: Duration = Duration::from_millis(50);

fn time_fit(unfitted: &BackgroundModel, config: &FitConfig) -> (BackgroundModel, FitStatus, Duration) {
    let mut total = Duration::ZERO;
    let mut runs = 0u32;
    loop {
        let mut model = unfitted.clone();
        let start = Instant::now();
        let status = model.fit(config, &mut ());
        total += start.elapsed();
        runs += 1;
        if total >= MIN_TIMED_FIT || runs >= 1000 {
            return (model, status, total / runs);
        }
    }
}

/// Times fits and ICA views on standardized `gen_clustered` data, one fresh
/// dataset seed per repeat, with no fit time budget. A repeat's fit time is
/// the mean over back-to-back fits when a single fit is very short.
pub fn run_runtime(grid: &[(usize, usize, usize)], repeats: usize, seed: u64) -> Result<Vec<RuntimeRow>> {
    let config = FitConfig::default().without_cutoff();
    let mut rows = Vec::with_capacity(grid.len());
    for &(n, d, k) in grid {
        let mut optim = Vec::with_capacity(repeats);
        let mut ica = Vec::with_capacity(repeats);
        let mut sweeps = 0;
        let mut converged = true;
        for r in 0..repeats.max(1) {
            let data = gen_clustered(n, d, k, seed.wrapping_add(r as u64))?.standardized();
            let constraints = runtime_constraints(&data, k)?;
            let unfitted = BackgroundModel::for_data(&data, constraints);
            let (model, status, per_fit) = time_fit(&unfitted, &config);
            optim.push(per_fit);
            sweeps = sweeps.max(model.diagnostics().sweeps);
            converged &= status == FitStatus::Converged;

            let start = Instant::now();
            let w = whiten(&data, &model)?;
            ica_view(&w, &IcaOptions { seed, ..IcaOptions::default() })?;
            ica.push(start.elapsed());
        }
        rows.push(RuntimeRow {
            n,
            d,
            k,
            repeats: optim.len(),
            optim: median(&mut optim),
            ica: median(&mut ica),
            sweeps,
            converged,
        });
    }
    Ok(rows)
}

mod duration_secs {
    use std::time::Duration;

    use serde::Serializer;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

pub fn median(times: &mut [Duration]) -> Duration {
    times.sort();
    let m = times.len();
    if m == 0 {
        Duration::ZERO
    } else if m % 2 == 1 {
        times[m / 2]
    } else {
        (times[m / 2 - 1] + times[m / 2]) / 2
    }
}

pub fn runtime_csv(rows: &[RuntimeRow]) -> String {
    let mut out = String::from("n,d,k,repeats,optim_s,ica_s,sweeps,converged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{},{}",
            r.n,
            r.d,
            r.k,
            r.repeats,
            r.optim.as_secs_f64(),
            r.ica.as_secs_f64(),
            r.sweeps,
            r.converged
        );
    }
    out
}

pub fn runtime_markdown(rows: &[RuntimeRow]) -> String {
    let mut out = String::from("| n | d | k | optim (s) | ica (s) | sweeps |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.3} | {:.3} | {}{} |",
            r.n,
            r.d,
            r.k,
            r.optim.as_secs_f64(),
            r.ica.as_secs_f64(),
            r.sweeps,
            if r.converged { "" } else { " (not converged)" }
        );
    }
    out
}
