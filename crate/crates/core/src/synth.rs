//! Deterministic synthetic datasets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::constraint::{ConstraintKind, PrimitiveConstraint};
use crate::data::DataMatrix;
use crate::error::Result;

/// Cluster placement of [`gen_x5`], in units of the within-cluster standard
/// deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct X5Geometry {
    /// Distance of the B, C and D centroids from A along one of dims 1–3.
    pub separation: f64,
    /// Side of the E, F, G triangle in dims 4–5.
    pub triangle_side: f64,
}

/// The pinned reference geometry.
pub const X5_GEOMETRY: X5Geometry = X5Geometry { separation: 14.0, triangle_side: 5.0 };
pub const X5_ROWS: usize = 1000;
/// Probability that a row of B, C or D falls in E or F rather than G.
pub const X5_EF_PROBABILITY: f64 = 0.75;

/// The five-dimensional running example with two independent labelings.
#[derive(Debug, Clone)]
pub struct X5 {
    /// Raw (unstandardized) values, labeled A–D.
    pub data: DataMatrix,
    /// E, F or G for each row, from the dims 4–5 clusters.
    pub secondary_labels: Vec<String>,
}

impl X5 {
    pub fn rows_with_secondary(&self, label: &str) -> Vec<usize> {
        (0..self.secondary_labels.len()).filter(|&i| self.secondary_labels[i] == label).collect()
    }
}

/// 1000 rows, 250 in each of A–D. In dims 1–3, A sits at the origin and
/// B, C, D are displaced along dims 3, 2 and 1, so every coordinate pair
/// among dims 1–3 shows A on top of exactly one other cluster. In dims 4–5,
/// E, F and G sit on an equilateral triangle; a row of B, C or D lands in E
/// or F (evenly) with probability 0.75 and in G otherwise, and every row of A
/// lands in G. Within-cluster noise is unit Gaussian in every dimension.
pub fn gen_x5(seed: u64) -> X5 {
    gen_x5_with(seed, X5_GEOMETRY)
}

pub fn gen_x5_with(seed: u64, geometry: X5Geometry) -> X5 {
    let s = geometry.separation;
    let t = geometry.triangle_side;
    let first: [(&str, [f64; 3]); 4] =
        [("A", [0.0, 0.0, 0.0]), ("B", [0.0, 0.0, s]), ("C", [0.0, s, 0.0]), ("D", [s, 0.0, 0.0])];
    let h = t * 3.0_f64.sqrt() / 2.0;
    let second: [(&str, [f64; 2]); 3] = [("E", [0.0, 0.0]), ("F", [t, 0.0]), ("G", [t / 2.0, h])];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = X5_ROWS / first.len();
    let mut values = DMatrix::zeros(X5_ROWS, 5);
    let mut labels = Vec::with_capacity(X5_ROWS);
    let mut secondary = Vec::with_capacity(X5_ROWS);
    for i in 0..X5_ROWS {
        let (name, c) = first[i / per];
        let e = if name == "A" || !rng.random_bool(X5_EF_PROBABILITY) {
            2
        } else if rng.random_bool(0.5) {
            0
        } else {
            1
        };
        let (name2, c2) = second[e];
        for j in 0..3 {
            values[(i, j)] = c[j] + noise(&mut rng);
        }
        for j in 0..2 {
            values[(i, 3 + j)] = c2[j] + noise(&mut rng);
        }
        labels.push(name.to_owned());
        secondary.push(name2.to_owned());
    }
    let names = (1..=5).map(|j| format!("x{j}")).collect();
    let ids = (0..X5_ROWS as u64).collect();
    let data = DataMatrix::with_metadata(values, names, ids, Some(labels)).expect("generator output is valid");
    X5 { data, secondary_labels: secondary }
}

/// `k` Gaussian blobs in `d` dimensions. Centroids are drawn from
/// `N(0, 3²I)` and points from `N(centroid, I)`; row `i` belongs to blob
/// `i mod k`, so blob sizes differ by at most one. Labels are `k0`, `k1`, ….
pub fn gen_clustered(n: usize, d: usize, k: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 || d == 0 || k == 0 {
        return Err(crate::Error::InvalidData(format!("n, d and k must be at least 1, got {n}, {d}, {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 3.0).expect("valid normal");
    let centroids = DMatrix::from_fn(k, d, |_, _| spread.sample(&mut rng));
    let mut values = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            values[(i, j)] = centroids[(i % k, j)] + noise(&mut rng);
        }
    }
    let labels = (0..n).map(|i| format!("k{}", i % k)).collect();
    let names = (1..=d).map(|j| format!("x{j}")).collect();
    DataMatrix::with_metadata(values, names, (0..n as u64).collect(), Some(labels))
}

/// The three-point dataset `((1,0), (0,1), (0,0))` with two constraint sets:
/// `case_a` pins mean and variance of rows {1,3} along `e₁` and `e₂`, and
/// `case_b` adds the same for rows {2,3}. Rows are 0-based in code.
#[derive(Debug, Clone)]
pub struct Adversarial3 {
    pub data: DataMatrix,
    pub case_a: Vec<PrimitiveConstraint>,
    pub case_b: Vec<PrimitiveConstraint>,
}

pub fn gen_adversarial3() -> Adversarial3 {
    let data = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).expect("valid matrix");
    let e = |i: usize| {
        let mut v = DVector::zeros(2);
        v[i] = 1.0;
        v
    };
    let cluster = |rows: &[usize]| -> Vec<PrimitiveConstraint> {
        [0, 1]
            .into_iter()
            .flat_map(|axis| {
                [ConstraintKind::Linear, ConstraintKind::Quadratic]
                    .map(|kind| PrimitiveConstraint::new(&data, kind, rows, e(axis)).expect("valid constraint"))
            })
            .collect()
    };
    let case_a = cluster(&[0, 2]);
    let mut case_b = case_a.clone();
    case_b.extend(cluster(&[1, 2]));
    Adversarial3 { data, case_a, case_b }
}

/// 150 points in 3-D: two clusters of 50 and two of 25. The 50-point clusters
/// are separated along dim 1, the 25-point ones along dim 3, and dim 2 is
/// pure noise. Labels are `a`, `b`, `c`, `d`.
pub fn gen_intro3d(seed: u64) -> DataMatrix {
    let groups: [(&str, usize, [f64; 3]); 4] = [
        ("a", 50, [-4.0, 0.0, 0.0]),
        ("b", 50, [4.0, 0.0, 0.0]),
        ("c", 25, [0.0, 0.0, -4.0]),
        ("d", 25, [0.0, 0.0, 4.0]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = groups.iter().map(|g| g.1).sum();
    let mut values = DMatrix::zeros(n, 3);
    let mut labels = Vec::with_capacity(n);
    let mut i = 0;
    for (name, size, c) in groups {
        for _ in 0..size {
            for j in 0..3 {
                values[(i, j)] = c[j] + noise(&mut rng);
            }
            labels.push(name.to_owned());
            i += 1;
        }
    }
    let names = (1..=3).map(|j| format!("x{j}")).collect();
    DataMatrix::with_metadata(values, names, (0..n as u64).collect(), Some(labels)).expect("generator output is valid")
}

fn noise(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
