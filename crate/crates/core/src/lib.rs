//! Maximum-entropy background models for interactive exploratory data analysis.
//!
//! The user's knowledge about a numeric dataset is encoded as linear and
//! quadratic expectation constraints over row subsets. The least committal
//! distribution satisfying them is a per-row Gaussian whose parameters are
//! shared across equivalence classes of rows. Data whitened against that
//! distribution is then searched for structure with PCA or FastICA, and the
//! most informative 2-D view is shown to the user, who marks what they see as
//! new constraints.
//!
//! Module map:
//!
//! - [`data`]: the observed matrix and CSV ingestion.
//! - [`constraint`]: constraint functions and composite expansion.
//! - [`partition`]: row equivalence classes.
//! - [`maxent`]: coordinate-ascent fitting of the background model.
//! - [`projection`]: whitening, sampling, PCA and ICA views.
//! - [`session`]: interactive state, selection statistics and archives.
//! - [`synth`] and [`experiments`]: synthetic generators and headless
//!   convergence/runtime experiments.

pub mod constraint;
pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod maxent;
pub mod partition;
pub mod projection;
pub mod session;
pub mod synth;

pub use constraint::{CompositeConstraint, CompositeSpec, ConstraintKind, PrimitiveConstraint};
pub use data::{CsvOptions, DataMatrix};
pub use error::{Error, Result};
pub use maxent::{BackgroundModel, ClassParams, FitConfig, FitObserver, FitStatus, SweepReport};
pub use partition::RowPartition;
pub use projection::{ProjectionMethod, ProjectionView, WhitenedMatrix};
pub use session::{Session, SessionSettings};

