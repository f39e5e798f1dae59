use std::collections::BTreeSet;

use crate::error::{QppError, Result};

/// Queries × predictors matrix. Row `i` is the predictor vector of
/// `query_ids[i]`; missing cells are tracked in a mask and read back as
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryFeatureMatrix {
    query_ids: Vec<String>,
    predictor_names: Vec<String>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl QueryFeatureMatrix {
    /// Builds a complete matrix from row-major values.
    pub fn new(query_ids: Vec<String>, predictor_names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::with_missing(query_ids, predictor_names, values, missing)
    }

    /// Builds a matrix from row-major values and a row-major missing mask.
    /// Masked cells are stored as `0.0`.
    pub fn with_missing(
        query_ids: Vec<String>,
        predictor_names: Vec<String>,
        mut values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let n = query_ids.len();
        let m = predictor_names.len();
        if values.len() != n * m || missing.len() != n * m {
            return Err(QppError::invalid(format!(
                "expected {} cells for {n} queries x {m} predictors, got {} values and {} mask entries",
                n * m,
                values.len(),
                missing.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for q in &query_ids {
            if !seen.insert(q.as_str()) {
                return Err(QppError::invalid(format!("duplicate query id {q}")));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &predictor_names {
            if !seen.insert(p.as_str()) {
                return Err(QppError::invalid(format!("duplicate predictor name {p}")));
            }
        }
        for (v, &miss) in values.iter_mut().zip(&missing) {
            if miss {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(QppError::invalid("matrix values must be finite"));
            }
        }
        Ok(Self {
            query_ids,
            predictor_names,
            values,
            missing,
        })
    }

    /// Builds a complete matrix from named columns.
    pub fn from_columns(query_ids: Vec<String>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = query_ids.len();
        let m = columns.len();
        let mut values = vec![0.0; n * m];
        for (j, (_, col)) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(QppError::invalid("column length differs from number of queries"));
            }
            for (i, &v) in col.iter().enumerate() {
                values[i * m + j] = v;
            }
        }
        let names = columns.into_iter().map(|(name, _)| name).collect();
        Self::new(query_ids, names, values)
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    pub fn n_queries(&self) -> usize {
        self.query_ids.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictor_names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.n_predictors() + j;
        (!self.missing[idx]).then(|| self.values[idx])
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[i * self.n_predictors() + j]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&b| b)
    }

    /// Row `i` as raw values (masked cells read as `0.0`).
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_predictors();
        &self.values[i * m..(i + 1) * m]
    }

    /// Column `j` as raw values (masked cells read as `0.0`).
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_queries())
            .map(|i| self.values[i * self.n_predictors() + j])
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.predictor_names.iter().position(|n| n == name)
    }

    /// Drops every query with at least one missing cell. Returns the complete
    /// matrix and the dropped query ids.
    pub fn complete_rows(&self) -> (QueryFeatureMatrix, Vec<String>) {
        let m = self.n_predictors();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        let mut dropped = Vec::new();
        for (i, q) in self.query_ids.iter().enumerate() {
            if self.missing[i * m..(i + 1) * m].iter().any(|&b| b) {
                dropped.push(q.clone());
            } else {
                ids.push(q.clone());
                values.extend_from_slice(self.row(i));
            }
        }
        let missing = vec![false; values.len()];
        let out = QueryFeatureMatrix {
            query_ids: ids,
            predictor_names: self.predictor_names.clone(),
            values,
            missing,
        };
        (out, dropped)
    }

    /// Applies `x -> f(j, x)` to every present cell of column `j`.
    pub fn map_values<F: Fn(usize, f64) -> f64>(&self, f: F) -> Result<Self> {
        let m = self.n_predictors();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| if self.missing[idx] { 0.0 } else { f(idx % m, v) })
            .collect();
        Self::with_missing(
            self.query_ids.clone(),
            self.predictor_names.clone(),
            values,
            self.missing.clone(),
        )
    }
}
