use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, UnitVector};
use crate::SampleId;

/// One normalized feature with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub vector: UnitVector,
}

/// A nonempty set of normalized features of a single dimension with
/// unique sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    rows: Vec<Sample>,
    dim: usize,
}

impl FeatureSet {
    pub fn new(rows: Vec<Sample>) -> Result<Self> {
        let dim = rows
            .first()
            .map(|s| s.vector.dim())
            .ok_or(Error::EmptyInput("feature set"))?;
        let mut seen = HashSet::with_capacity(rows.len());
        for s in &rows {
            check_dims(dim, s.vector.dim())?;
            if !seen.insert(s.id) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate sample id {}",
                    s.id
                )));
            }
        }
        Ok(Self { rows, dim })
    }

    /// Builds a set whose ids are the row positions.
    pub fn from_vectors(vectors: Vec<UnitVector>) -> Result<Self> {
        Self::new(
            vectors
                .into_iter()
                .enumerate()
                .map(|(i, vector)| Sample {
                    id: i as SampleId,
                    vector,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> impl Iterator<Item = &UnitVector> {
        self.rows.iter().map(|s| &s.vector)
    }

    /// Arithmetic mean of the member vectors (not normalized).
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for s in &self.rows {
            for (a, x) in acc.iter_mut().zip(s.vector.as_slice()) {
                *a += x;
            }
        }
        let n = self.rows.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}
