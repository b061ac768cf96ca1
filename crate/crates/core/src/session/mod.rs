//! Interactive exploration state: data, selection, constraints, the
//! background model and the current view.
//!
//! Fitting is an explicit step. Adding constraints only marks the model as
//! unfitted, and views are computed on request against whatever model is
//! current. The model version counts fits and constraint changes, and every
//! view remembers the version it was computed from, so a stale view is
//! detectable rather than silently wrong.

mod archive;
mod stats;

use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constraint::{expand_composite, push_unique, CompositeConstraint, CompositeSpec, PrimitiveConstraint};
use crate::data::{CsvOptions, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg::orthonormal_pair;
use crate::maxent::{BackgroundModel, FitConfig, FitObserver, FitStatus};
use crate::projection::{
    ica_view, pca_view, sample_background, whiten, whiten_matrix, IcaOptions, ProjectionMethod, ProjectionView,
};

pub use archive::{DataSnapshot, ModelSnapshot, SessionArchive, ARCHIVE_FORMAT};
pub use stats::{
    chi_square_2_quantile, confidence_ellipse, selection_stats, AttributeStats, Ellipse, LabelOverlap,
    SelectionStats, PAIRPLOT_ATTRIBUTES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub fit: FitConfig,
    /// Method used for the initial view.
    pub method: ProjectionMethod,
    /// Root of every random stream in the session (background samples and
    /// ICA initialization).
    pub seed: u64,
    pub standardize: bool,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self { fit: FitConfig::default(), method: ProjectionMethod::Pca, seed: 0, standardize: true }
    }
}

/// What the user asks for; selection-based variants use the current
/// selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintRequest {
    Margin,
    OneCluster,
    Cluster,
    TwoD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddOutcome {
    /// Primitives that were new; zero means the request was a duplicate.
    pub added: usize,
    pub total_primitives: usize,
    pub total_composites: usize,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    pub name: String,
    pub row_ids: Vec<u64>,
    /// Number of times this name has been written.
    pub version: u64,
}

/// A view in wire form, with the row ids its points belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPayload {
    pub method: ProjectionMethod,
    pub model_version: u64,
    /// The model changed after this view was computed.
    pub stale: bool,
    pub directions: [Vec<f64>; 2],
    pub scores: Vec<f64>,
    pub variances: Vec<f64>,
    pub row_ids: Vec<u64>,
    pub data_points: Vec<[f64; 2]>,
    pub background_points: Vec<[f64; 2]>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEllipses {
    /// Around the selected data points.
    pub data: Ellipse,
    /// Around their row-aligned background sample points.
    pub background: Ellipse,
}

#[derive(Debug, Clone)]
pub struct Session {
    data: DataMatrix,
    settings: SessionSettings,
    composites: Vec<CompositeConstraint>,
    primitives: Vec<PrimitiveConstraint>,
    model: BackgroundModel,
    current_view: Option<ProjectionView>,
    selection: Vec<usize>,
    groupings: BTreeMap<String, Grouping>,
}

impl Session {
    /// Starts an unconstrained session and computes the initial view with
    /// `settings.method`.
    pub fn new(data: DataMatrix, settings: SessionSettings) -> Result<Self> {
        settings.fit.validate()?;
        let model = BackgroundModel::for_data(&data, Vec::new());
        let mut session = Self {
            data,
            model,
            settings,
            composites: Vec::new(),
            primitives: Vec::new(),
            current_view: None,
            selection: Vec::new(),
            groupings: BTreeMap::new(),
        };
        session.compute_view(session.settings.method)?;
        Ok(session)
    }

    /// Parses CSV, standardizing when `settings.standardize` is set.
    pub fn from_csv<R: Read>(reader: R, label_column: Option<String>, settings: SessionSettings) -> Result<Self> {
        let options = CsvOptions { label_column, id_column: None, standardize: settings.standardize };
        Self::new(DataMatrix::from_csv(reader, &options)?, settings)
    }

    pub fn data(&self) -> &DataMatrix {
        &self.data
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn composites(&self) -> &[CompositeConstraint] {
        &self.composites
    }

    pub fn primitives(&self) -> &[PrimitiveConstraint] {
        &self.primitives
    }

    pub fn model(&self) -> &BackgroundModel {
        &self.model
    }

    pub fn model_version(&self) -> u64 {
        self.model.version()
    }

    pub fn current_view(&self) -> Option<&ProjectionView> {
        self.current_view.as_ref()
    }

    pub fn view_is_stale(&self) -> bool {
        self.current_view.as_ref().is_some_and(|v| v.model_version < self.model.version())
    }

    pub fn set_fit_config(&mut self, config: FitConfig) -> Result<()> {
        config.validate()?;
        self.settings.fit = config;
        Ok(())
    }

    // ---- selection ----

    /// Replaces the selection. Unknown ids are an error; duplicates are
    /// ignored.
    pub fn set_selection(&mut self, row_ids: &[u64]) -> Result<usize> {
        let mut rows = self.data.indices_of(row_ids)?;
        rows.sort_unstable();
        rows.dedup();
        self.selection = rows;
        Ok(self.selection.len())
    }

    /// Selection as sorted row indices.
    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn selection_ids(&self) -> Vec<u64> {
        self.selection.iter().map(|&i| self.data.row_ids()[i]).collect()
    }

    pub fn selection_stats(&self) -> Result<SelectionStats> {
        selection_stats(&self.data, &self.selection)
    }

    /// Confidence ellipses of the selection and of its background sample in
    /// the current view.
    pub fn selection_ellipses(&self, level: f64) -> Result<SelectionEllipses> {
        let view = self.current_view.as_ref().ok_or_else(|| Error::StaleModel("no view computed yet".into()))?;
        if self.selection.is_empty() {
            return Err(Error::EmptySelection);
        }
        let pick = |pts: &[[f64; 2]]| self.selection.iter().map(|&i| pts[i]).collect::<Vec<_>>();
        Ok(SelectionEllipses {
            data: confidence_ellipse(&pick(&view.data_points), level)?,
            background: confidence_ellipse(&pick(&view.background_points), level)?,
        })
    }

    // ---- groupings ----

    /// Stores a named row set, replacing any previous one of the same name.
    /// Returns the write count for the name.
    pub fn save_grouping(&mut self, name: &str, row_ids: &[u64]) -> Result<u64> {
        let mut rows = self.data.indices_of(row_ids)?;
        rows.sort_unstable();
        rows.dedup();
        let row_ids = rows.iter().map(|&i| self.data.row_ids()[i]).collect();
        let version = self.groupings.get(name).map_or(1, |g| g.version + 1);
        self.groupings.insert(name.to_owned(), Grouping { name: name.to_owned(), row_ids, version });
        Ok(version)
    }

    /// A saved grouping, or failing that the rows carrying class label
    /// `name`.
    pub fn load_grouping(&self, name: &str) -> Result<Vec<u64>> {
        if let Some(g) = self.groupings.get(name) {
            return Ok(g.row_ids.clone());
        }
        let rows = self.data.rows_with_label(name);
        if rows.is_empty() {
            return Err(Error::UnknownGrouping(name.to_owned()));
        }
        Ok(rows.iter().map(|&i| self.data.row_ids()[i]).collect())
    }

    pub fn groupings(&self) -> impl Iterator<Item = &Grouping> {
        self.groupings.values()
    }

    // ---- constraints and fitting ----

    /// Expands and registers a constraint. Primitives identical to existing
    /// ones are dropped; a request adding nothing leaves the model untouched.
    pub fn add_constraint(&mut self, request: ConstraintRequest) -> Result<AddOutcome> {
        let spec = match request {
            ConstraintRequest::Margin => CompositeSpec::Margin,
            ConstraintRequest::OneCluster => CompositeSpec::OneCluster,
            ConstraintRequest::Cluster => {
                if self.selection.is_empty() {
                    return Err(Error::EmptySelection);
                }
                CompositeSpec::Cluster { rows: self.selection.clone() }
            }
            ConstraintRequest::TwoD => {
                if self.selection.is_empty() {
                    return Err(Error::EmptySelection);
                }
                let (first, second) = self.pull_back_view()?;
                CompositeSpec::TwoD { rows: self.selection.clone(), first, second }
            }
        };
        self.add_spec(spec)
    }

    /// Registers an already-resolved composite.
    pub fn add_spec(&mut self, spec: CompositeSpec) -> Result<AddOutcome> {
        let composite = expand_composite(&self.data, spec)?;
        let mut added = 0;
        for p in composite.primitives() {
            if push_unique(&mut self.primitives, p.clone()) {
                added += 1;
            }
        }
        if added > 0 {
            self.composites.push(composite);
            let version = self.model.version() + 1;
            self.model = BackgroundModel::for_data(&self.data, self.primitives.clone()).with_version(version);
        }
        Ok(AddOutcome {
            added,
            total_primitives: self.primitives.len(),
            total_composites: self.composites.len(),
            model_version: self.model.version(),
        })
    }

    /// Data-space directions whose projections best reproduce the current
    /// view coordinates in the least-squares sense, orthonormalized. With an
    /// unconstrained model this returns the view directions themselves.
    fn pull_back_view(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let view = self.current_view.as_ref().ok_or_else(|| Error::StaleModel("no view computed yet".into()))?;
        let n = view.data_points.len();
        let p = DMatrix::from_fn(n, 2, |i, j| view.data_points[i][j]);
        let x = self.data.values();
        let svd = x.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        let w = svd.solve(&p, tol).map_err(|e| Error::Degenerate(e.to_string()))?;
        let (u, v) = orthonormal_pair(&w.column(0).into_owned(), &w.column(1).into_owned())
            .ok_or_else(|| Error::Degenerate("view directions pull back to parallel data directions".into()))?;
        Ok((u.iter().copied().collect(), v.iter().copied().collect()))
    }

    /// Fits the model in place. See [`Self::fit_snapshot`] for fitting off
    /// the session.
    pub fn update_background(&mut self, observer: &mut dyn FitObserver) -> FitStatus {
        self.model.fit(&self.settings.fit, observer)
    }

    /// A copy of the model to fit elsewhere, with the version to hand back
    /// to [`Self::install_fit`].
    pub fn fit_snapshot(&self) -> (BackgroundModel, u64) {
        (self.model.clone(), self.model.version())
    }

    /// Installs a model fitted from [`Self::fit_snapshot`], unless the
    /// constraints changed in the meantime.
    pub fn install_fit(&mut self, base_version: u64, model: BackgroundModel) -> Result<()> {
        if self.model.version() != base_version {
            return Err(Error::StaleModel(format!(
                "constraints changed during the fit (model version {} is now {})",
                base_version,
                self.model.version()
            )));
        }
        self.model = model;
        Ok(())
    }

    // ---- views ----

    /// Seed of the background sample drawn for the current model version.
    pub fn sample_seed(&self) -> u64 {
        self.settings.seed ^ self.model.version().wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// Whitens the data against the current model, draws a background
    /// sample, and finds the most informative view.
    pub fn compute_view(&mut self, method: ProjectionMethod) -> Result<&ProjectionView> {
        let whitened = whiten(&self.data, &self.model).map_err(|e| match e {
            Error::StaleModel(why) => Error::StaleModel(format!("{why}; update the background model first")),
            other => other,
        })?;
        let sample = sample_background(&self.model, self.sample_seed());
        let sample = whiten_matrix(&sample, &self.model)?;
        let view = match method {
            ProjectionMethod::Pca => pca_view(&whitened)?,
            ProjectionMethod::Ica => ica_view(&whitened, &IcaOptions { seed: self.settings.seed, ..Default::default() })?,
        };
        Ok(self.current_view.insert(view.with_background(&sample)?))
    }

    pub fn view_payload(&self) -> Option<ViewPayload> {
        let v = self.current_view.as_ref()?;
        Some(ViewPayload {
            method: v.method,
            model_version: v.model_version,
            stale: self.view_is_stale(),
            directions: [v.directions[0].iter().copied().collect(), v.directions[1].iter().copied().collect()],
            scores: v.scores.clone(),
            variances: v.variances.clone(),
            row_ids: self.data.row_ids().to_vec(),
            data_points: v.data_points.clone(),
            background_points: v.background_points.clone(),
            warning: v.warning.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_x5;

    fn x5_session() -> Session {
        let x5 = gen_x5(0);
        Session::new(x5.data.standardized(), SessionSettings::default()).unwrap()
    }

    fn select_label(s: &mut Session, label: &str) {
        let ids: Vec<u64> = s.data().rows_with_label(label).iter().map(|&i| s.data().row_ids()[i]).collect();
        s.set_selection(&ids).unwrap();
    }

    #[test]
    fn tiny_dataset_is_rejected() {
        let data = DataMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(Session::new(data, SessionSettings::default()).is_err());
    }

    #[test]
    fn four_clusters_register_forty_primitives() {
        let mut s = x5_session();
        for l in ["A", "B", "C", "D"] {
            select_label(&mut s, l);
            s.add_constraint(ConstraintRequest::Cluster).unwrap();
        }
        assert_eq!(s.primitives().len(), 40);
        assert_eq!(s.composites().len(), 4);
        assert_eq!(s.model().status(), FitStatus::Unfitted);
    }

    #[test]
    fn duplicate_constraint_is_idempotent() {
        let mut s = x5_session();
        select_label(&mut s, "A");
        let first = s.add_constraint(ConstraintRequest::Cluster).unwrap();
        let again = s.add_constraint(ConstraintRequest::Cluster).unwrap();
        assert_eq!(again.added, 0);
        assert_eq!(again.total_primitives, first.total_primitives);
        assert_eq!(again.model_version, first.model_version);
    }

    #[test]
    fn one_cluster_gives_two_d_primitives() {
        let mut s = x5_session();
        assert_eq!(s.add_constraint(ConstraintRequest::OneCluster).unwrap().added, 10);
    }

    #[test]
    fn empty_selection_rejected() {
        let mut s = x5_session();
        assert!(matches!(s.add_constraint(ConstraintRequest::Cluster), Err(Error::EmptySelection)));
        assert!(matches!(s.add_constraint(ConstraintRequest::TwoD), Err(Error::EmptySelection)));
    }

    #[test]
    fn versions_track_changes_and_fits() {
        let mut s = x5_session();
        assert_eq!(s.model_version(), 0);
        select_label(&mut s, "B");
        s.add_constraint(ConstraintRequest::Cluster).unwrap();
        assert_eq!(s.model_version(), 1);
        assert!(s.view_is_stale());
        assert!(matches!(s.compute_view(ProjectionMethod::Pca), Err(Error::StaleModel(_))));
        assert_eq!(s.update_background(&mut ()), FitStatus::Converged);
        assert_eq!(s.model_version(), 2);
        s.compute_view(ProjectionMethod::Pca).unwrap();
        assert!(!s.view_is_stale());
    }

    #[test]
    fn unconstrained_fit_is_a_noop_success() {
        let mut s = x5_session();
        assert_eq!(s.update_background(&mut ()), FitStatus::Converged);
        assert_eq!(s.model().classes()[0], crate::maxent::ClassParams::standard(5));
    }

    #[test]
    fn install_refuses_outdated_fit() {
        let mut s = x5_session();
        select_label(&mut s, "A");
        s.add_constraint(ConstraintRequest::Cluster).unwrap();
        let (mut model, base) = s.fit_snapshot();
        model.fit(&FitConfig::default(), &mut ());
        select_label(&mut s, "B");
        s.add_constraint(ConstraintRequest::Cluster).unwrap();
        assert!(matches!(s.install_fit(base, model), Err(Error::StaleModel(_))));
    }

    #[test]
    fn two_d_pull_back_is_identity_when_unconstrained() {
        let mut s = x5_session();
        let view = s.current_view().unwrap().clone();
        let (u, v) = s.pull_back_view().unwrap();
        for (a, b) in u.iter().zip(view.directions[0].iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in v.iter().zip(view.directions[1].iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        select_label(&mut s, "C");
        assert_eq!(s.add_constraint(ConstraintRequest::TwoD).unwrap().added, 4);
    }

    #[test]
    fn grouping_round_trip_and_label_fallback() {
        let mut s = x5_session();
        assert_eq!(s.save_grouping("mine", &[5, 3, 3, 9]).unwrap(), 1);
        assert_eq!(s.load_grouping("mine").unwrap(), vec![3, 5, 9]);
        assert_eq!(s.save_grouping("mine", &[1]).unwrap(), 2);
        assert_eq!(s.load_grouping("mine").unwrap(), vec![1]);
        assert_eq!(s.load_grouping("A").unwrap().len(), 250);
        assert!(matches!(s.load_grouping("nope"), Err(Error::UnknownGrouping(_))));
    }

    #[test]
    fn cluster_a_selection_ranks_first_three_dims() {
        let mut s = x5_session();
        select_label(&mut s, "A");
        let stats = s.selection_stats().unwrap();
        let top3: Vec<usize> = {
            let mut r = stats.ranked[..3].to_vec();
            r.sort();
            r
        };
        assert_eq!(top3, vec![0, 1, 2]);
    }

    #[test]
    fn ellipses_on_current_view() {
        let mut s = x5_session();
        select_label(&mut s, "D");
        let e = s.selection_ellipses(0.95).unwrap();
        assert!(e.data.semi_axes[0] >= e.data.semi_axes[1]);
        assert!(e.background.semi_axes[0] > 0.0);
    }
}
