use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Grouping, Session, SessionSettings, ViewPayload};
use crate::constraint::CompositeSpec;
use crate::data::{ColumnScaling, DataMatrix};
use crate::error::{Error, Result};
use crate::maxent::{BackgroundModel, FitStatus};

pub const ARCHIVE_FORMAT: u32 = 1;

/// Self-contained, deterministic record of a session. It holds no wall-clock
/// times or server identifiers, so replaying the same operations with the
/// same seeds yields the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionArchive {
    pub format: u32,
    pub settings: SessionSettings,
    pub data: DataSnapshot,
    /// Registered composites in order, with rows and directions resolved.
    pub constraints: Vec<CompositeSpec>,
    pub selection: Vec<u64>,
    pub groupings: Vec<Grouping>,
    pub model: ModelSnapshot,
    pub view: Option<ViewPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSnapshot {
    pub column_names: Vec<String>,
    pub row_ids: Vec<u64>,
    pub class_labels: Option<Vec<String>>,
    pub scaling: Option<ColumnScaling>,
    /// Row-major values as loaded (after any standardization).
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub version: u64,
    pub status: FitStatus,
    pub primitives: usize,
    pub sweeps: usize,
    /// Normalized residual per primitive after the last fit.
    pub residuals: Vec<f64>,
    pub class_sizes: Vec<usize>,
    pub class_means: Vec<Vec<f64>>,
    /// Row-major covariance per class.
    pub class_covariances: Vec<Vec<f64>>,
}

impl Session {
    pub fn archive(&self) -> SessionArchive {
        let x = self.data.values();
        let diag = self.model.diagnostics();
        SessionArchive {
            format: ARCHIVE_FORMAT,
            settings: self.settings.clone(),
            data: DataSnapshot {
                column_names: self.data.column_names().to_vec(),
                row_ids: self.data.row_ids().to_vec(),
                class_labels: self.data.class_labels().map(<[String]>::to_vec),
                scaling: self.data.scaling().cloned(),
                values: x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
            constraints: self.composites.iter().map(|c| c.spec().clone()).collect(),
            selection: self.selection_ids(),
            groupings: self.groupings.values().cloned().collect(),
            model: ModelSnapshot {
                version: self.model.version(),
                status: self.model.status(),
                primitives: self.primitives.len(),
                sweeps: diag.sweeps,
                residuals: diag.residuals.clone(),
                class_sizes: self.model.partition().class_sizes().to_vec(),
                class_means: self.model.classes().iter().map(|p| p.mean.iter().copied().collect()).collect(),
                class_covariances: self
                    .model
                    .classes()
                    .iter()
                    .map(|p| p.cov.transpose().iter().copied().collect())
                    .collect(),
            },
            view: self.view_payload(),
        }
    }

    /// Pretty-printed JSON of [`Self::archive`].
    pub fn export_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(&self.archive())?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Rebuilds a session from an archive. A fitted model is refitted from
    /// its constraints, so a fit that ended at the time budget may land on a
    /// different cutoff point than the original.
    pub fn from_archive(archive: &SessionArchive) -> Result<Self> {
        if archive.format != ARCHIVE_FORMAT {
            return Err(Error::InvalidData(format!("unsupported archive format {}", archive.format)));
        }
        let snap = &archive.data;
        let n = snap.values.len();
        let d = snap.column_names.len();
        if snap.values.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidData("archived rows do not match the column count".into()));
        }
        let values = DMatrix::from_fn(n, d, |i, j| snap.values[i][j]);
        let data = DataMatrix::with_metadata(values, snap.column_names.clone(), snap.row_ids.clone(), snap.class_labels.clone())?
            .with_scaling(snap.scaling.clone())?;

        let mut session = Session {
            model: BackgroundModel::for_data(&data, Vec::new()),
            data,
            settings: archive.settings.clone(),
            composites: Vec::new(),
            primitives: Vec::new(),
            current_view: None,
            selection: Vec::new(),
            groupings: BTreeMap::new(),
        };
        session.settings.fit.validate()?;
        for spec in &archive.constraints {
            session.add_spec(spec.clone())?;
        }
        let fitted = matches!(archive.model.status, FitStatus::Converged | FitStatus::Cutoff);
        let base = if fitted { archive.model.version.saturating_sub(1) } else { archive.model.version };
        session.model = BackgroundModel::for_data(&session.data, session.primitives.clone()).with_version(base);
        if fitted {
            session.update_background(&mut ());
        }
        session.set_selection(&archive.selection)?;
        for g in &archive.groupings {
            session.groupings.insert(g.name.clone(), g.clone());
        }
        if let Some(view) = &archive.view {
            session.compute_view(view.method)?;
        }
        Ok(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionMethod;
    use crate::session::ConstraintRequest;
    use crate::synth::gen_x5;

    fn worked_session() -> Session {
        let x5 = gen_x5(1);
        let mut s = Session::new(x5.data.standardized(), SessionSettings { seed: 9, ..Default::default() }).unwrap();
        let ids: Vec<u64> = s.data().rows_with_label("B").iter().map(|&i| i as u64).collect();
        s.set_selection(&ids).unwrap();
        s.add_constraint(ConstraintRequest::Cluster).unwrap();
        s.update_background(&mut ());
        s.compute_view(ProjectionMethod::Ica).unwrap();
        s.save_grouping("b", &ids).unwrap();
        s
    }

    #[test]
    fn export_is_deterministic() {
        assert_eq!(worked_session().export_json().unwrap(), worked_session().export_json().unwrap());
    }

    #[test]
    fn archive_round_trip_reproduces_export() {
        let s = worked_session();
        let bytes = s.export_json().unwrap();
        let archive: SessionArchive = serde_json::from_slice(&bytes).unwrap();
        let restored = Session::from_archive(&archive).unwrap();
        assert_eq!(restored.export_json().unwrap(), bytes);
    }

    #[test]
    fn archive_has_no_timings() {
        let text = String::from_utf8(worked_session().export_json().unwrap()).unwrap();
        assert!(!text.contains("elapsed"));
        assert!(!text.contains("\"id\""));
    }
}
