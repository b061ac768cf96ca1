//! Equivalence classes of rows that are covered by exactly the same
//! constraints. All rows of a class share one parameter block, so the
//! optimizer's cost depends on the number of classes, not on `n`.

use std::collections::HashMap;

use crate::constraint::PrimitiveConstraint;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPartition {
    class_of_row: Vec<usize>,
    class_sizes: Vec<usize>,
    class_constraint_sets: Vec<Vec<usize>>,
    constraint_classes: Vec<Vec<usize>>,
}

impl RowPartition {
    /// Groups the `n` rows by their sorted covering constraint sets. Classes
    /// are numbered in order of their first row.
    ///
    /// # Panics
    /// If a constraint references a row `>= n`.
    pub fn build(n: usize, constraints: &[PrimitiveConstraint]) -> Self {
        let mut covering: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (t, c) in constraints.iter().enumerate() {
            for &i in c.rows() {
                assert!(i < n, "constraint {t} references row {i} but n = {n}");
                covering[i].push(t);
            }
        }

        let mut index: HashMap<&[usize], usize> = HashMap::new();
        let mut class_of_row = Vec::with_capacity(n);
        let mut class_sizes = Vec::new();
        let mut class_constraint_sets = Vec::new();
        for set in &covering {
            let next = class_sizes.len();
            let class = *index.entry(set.as_slice()).or_insert(next);
            if class == next {
                class_sizes.push(0);
                class_constraint_sets.push(set.clone());
            }
            class_sizes[class] += 1;
            class_of_row.push(class);
        }

        let mut constraint_classes = vec![Vec::new(); constraints.len()];
        for (class, set) in class_constraint_sets.iter().enumerate() {
            for &t in set {
                constraint_classes[t].push(class);
            }
        }

        Self { class_of_row, class_sizes, class_constraint_sets, constraint_classes }
    }

    pub fn nrows(&self) -> usize {
        self.class_of_row.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn class_of_row(&self, row: usize) -> usize {
        self.class_of_row[row]
    }

    pub fn class_of_rows(&self) -> &[usize] {
        &self.class_of_row
    }

    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// Sorted indices of the constraints covering every row of `class`.
    pub fn class_constraint_set(&self, class: usize) -> &[usize] {
        &self.class_constraint_sets[class]
    }

    /// Classes whose rows all belong to constraint `t`'s row set. Every class
    /// lies either fully inside or fully outside a constraint.
    pub fn classes_of_constraint(&self, t: usize) -> &[usize] {
        &self.constraint_classes[t]
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint_classes.len()
    }

    /// Rows of each class, in row order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &c) in self.class_of_row.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}
