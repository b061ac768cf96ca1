use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Attributes shown in the selection pairplot.
pub const PAIRPLOT_ATTRIBUTES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub name: String,
    pub mean_selection: f64,
    pub std_selection: f64,
    /// `None` when the selection covers every row.
    pub mean_rest: Option<f64>,
    pub std_rest: Option<f64>,
    /// `|Δmean| / pooled std + |ln(std_sel / std_rest)|`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOverlap {
    pub label: String,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub count: usize,
    /// One entry per column, in column order.
    pub attributes: Vec<AttributeStats>,
    /// Column indices by decreasing score, at most [`PAIRPLOT_ATTRIBUTES`].
    pub ranked: Vec<usize>,
    /// Empty when the data carry no labels.
    pub jaccard: Vec<LabelOverlap>,
    /// The selection covers every row, so there is nothing to compare with
    /// and all scores are zero.
    pub rest_empty: bool,
}

fn mean_std(data: &DataMatrix, rows: &[usize], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let col = data.values().column(j);
    let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
    let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Compares the selected rows with the remaining rows, column by column.
/// `rows` must be sorted and free of duplicates.
pub fn selection_stats(data: &DataMatrix, rows: &[usize]) -> Result<SelectionStats> {
    if rows.is_empty() {
        return Err(Error::EmptySelection);
    }
    let n = data.nrows();
    let mut in_selection = vec![false; n];
    for &i in rows {
        in_selection[i] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !in_selection[i]).collect();
    let rest_empty = rest.is_empty();

    let mut attributes = Vec::with_capacity(data.ncols());
    for (j, name) in data.column_names().iter().enumerate() {
        let (mean_selection, std_selection) = mean_std(data, rows, j);
        let (mean_rest, std_rest, score) = if rest_empty {
            (None, None, 0.0)
        } else {
            let (mr, sr) = mean_std(data, &rest, j);
            let (ns, nr) = (rows.len() as f64, rest.len() as f64);
            let pooled = ((ns * std_selection.powi(2) + nr * sr.powi(2)) / (ns + nr)).sqrt();
            let location = if pooled > 0.0 { (mean_selection - mr).abs() / pooled } else { 0.0 };
            (Some(mr), Some(sr), location + log_std_ratio(std_selection, sr))
        };
        attributes.push(AttributeStats { name: name.clone(), mean_selection, std_selection, mean_rest, std_rest, score });
    }

    let mut ranked: Vec<usize> = (0..attributes.len()).collect();
    ranked.sort_by(|&a, &b| attributes[b].score.total_cmp(&attributes[a].score).then(a.cmp(&b)));
    ranked.truncate(PAIRPLOT_ATTRIBUTES);

    let jaccard = match data.class_labels() {
        None => Vec::new(),
        Some(labels) => data
            .distinct_labels()
            .into_iter()
            .map(|label| {
                let both = rows.iter().filter(|&&i| labels[i] == label).count();
                let class = labels.iter().filter(|l| **l == label).count();
                let jaccard = both as f64 / (rows.len() + class - both) as f64;
                LabelOverlap { label, jaccard }
            })
            .collect(),
    };

    Ok(SelectionStats { count: rows.len(), attributes, ranked, jaccard, rest_empty })
}

/// `|ln(a/b)|`, zero when both are zero, and computed with zero floored to
/// the smallest positive normal otherwise.
fn log_std_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    (a.max(f64::MIN_POSITIVE).ln() - b.max(f64::MIN_POSITIVE).ln()).abs()
}

/// A 2-D confidence ellipse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axis lengths, major first.
    pub semi_axes: [f64; 2],
    /// Unit vector along the major axis.
    pub major_direction: [f64; 2],
    /// Angle of the major axis from the first coordinate axis, in radians,
    /// within `(−π/2, π/2]`.
    pub angle: f64,
}

/// Quantile of the χ² distribution with two degrees of freedom.
pub fn chi_square_2_quantile(level: f64) -> f64 {
    -2.0 * (-level).ln_1p()
}

/// Ellipse containing `level` of a Gaussian fitted to `points` (unbiased
/// covariance). A rank-deficient covariance yields a zero minor axis.
pub fn confidence_ellipse(points: &[[f64; 2]], level: f64) -> Result<Ellipse> {
    let m = points.len();
    if m < 3 {
        return Err(Error::Degenerate(format!("an ellipse needs at least 3 points, got {m}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidData(format!("confidence level must be in (0, 1), got {level}")));
    }
    let mf = m as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / mf;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / mf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let cov = Matrix2::new(sxx, sxy, sxy, syy) / (mf - 1.0);
    let eig = cov.symmetric_eigen();
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let q = chi_square_2_quantile(level);
    let axis = |k: usize| (q * eig.eigenvalues[k].max(0.0)).sqrt();
    let mut dir = [eig.eigenvectors[(0, major)], eig.eigenvectors[(1, major)]];
    if dir[0] < 0.0 || (dir[0] == 0.0 && dir[1] < 0.0) {
        dir = [-dir[0], -dir[1]];
    }
    Ok(Ellipse {
        center: [cx, cy],
        semi_axes: [axis(major), axis(minor)],
        major_direction: dir,
        angle: dir[1].atan2(dir[0]),
    })
}
