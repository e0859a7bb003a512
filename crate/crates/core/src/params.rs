//! Flat parameter vectors: the unit of aggregation and transfer-size
//! accounting. All arithmetic that combines vectors lives here so dimension
//! checks happen in one place.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

/// Flat vector of 64-bit model parameters. Nonempty and finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    /// Wraps a raw vector; rejects empty or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self, Error> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ParamVector::new"));
        }
        Ok(ParamVector { values })
    }

    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim >= 1);
        ParamVector { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<(), Error> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(())
    }

    /// Convex mix `(1-t)*self + t*other`; `t` is expected in [0, 1].
    pub fn mix(&self, other: &Self, t: f64) -> Result<Self, Error> {
        self.check_same_dim(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        ParamVector::new(values)
    }

    /// `self - other`, used for update deltas.
    pub fn sub(&self, other: &Self) -> Result<Self, Error> {
        self.check_same_dim(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        ParamVector::new(values)
    }

    pub fn scale(&self, c: f64) -> Result<Self, Error> {
        ParamVector::new(self.values.iter().map(|v| c * v).collect())
    }

    /// `self += c * other`, in place.
    pub fn add_scaled(&mut self, other: &Self, c: f64) -> Result<(), Error> {
        self.check_same_dim(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    /// Weighted mean of vectors; weights are normalized internally and the
    /// terms are accumulated in the order given.
    pub fn weighted_mean<'a, I>(items: I) -> Result<Self, Error>
    where
        I: IntoIterator<Item = (f64, &'a ParamVector)>,
    {
        let mut acc: Option<ParamVector> = None;
        let mut total = 0.0;
        let mut terms: Vec<(f64, &ParamVector)> = Vec::new();
        for (w, p) in items {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonFinite("weighted_mean weight"));
            }
            total += w;
            terms.push((w, p));
        }
        if terms.is_empty() {
            return Err(Error::EmptyUpdateList);
        }
        for (w, p) in terms {
            match acc.as_mut() {
                None => acc = Some(p.scale(w / total)?),
                Some(a) => a.add_scaled(p, w / total)?,
            }
        }
        Ok(acc.expect("nonempty"))
    }
}
