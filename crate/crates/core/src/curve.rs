//! Sampled time traces shared by the simulation and fitting code.

use crate::error::{Error, Result};
use serde::Serialize;

/// A time trace: strictly increasing times (µs), values and optional 1σ errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    t: Vec<f64>,
    y: Vec<f64>,
    y_err: Option<Vec<f64>>,
}

impl DecayCurve {
    pub fn new(t: Vec<f64>, y: Vec<f64>, y_err: Option<Vec<f64>>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::InvalidInput(format!("{} times but {} values", t.len(), y.len())));
        }
        if let Some(e) = &y_err {
            if e.len() != t.len() {
                return Err(Error::InvalidInput("error column length differs from time column".into()));
            }
            if let Some(i) = e.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidInput(format!("uncertainty at index {i} must be positive and finite")));
            }
        }
        if let Some(i) = t.iter().chain(y.iter()).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry at flat index {i}")));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!("times not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { t, y, y_err })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn y_err(&self) -> Option<&[f64]> {
        self.y_err.as_deref()
    }
    pub fn len(&self) -> usize {
        self.t.len()
    }
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Same times and errors scaled by `k`, values scaled by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let y = self.y.iter().map(|v| v * k).collect();
        let e = self.y_err.as_ref().map(|e| e.iter().map(|v| v * k.abs()).collect());
        Self::new(self.t.clone(), y, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(DecayCurve::new(vec![0.0, 1.0], vec![1.0, 0.5], None).is_ok());
        assert!(DecayCurve::new(vec![0.0, 0.0], vec![1.0, 0.5], None).is_err());
        assert!(DecayCurve::new(vec![0.0, 1.0], vec![1.0], None).is_err());
        assert!(DecayCurve::new(vec![0.0, 1.0], vec![1.0, f64::NAN], None).is_err());
        assert!(DecayCurve::new(vec![0.0, 1.0], vec![1.0, 0.5], Some(vec![0.1, 0.0])).is_err());
    }
}
