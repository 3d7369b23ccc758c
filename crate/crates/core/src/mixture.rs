//! Paired state/input Gaussian mixtures with a shared weight vector.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, PSD_TOLERANCE};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vector,
    pub cov: Matrix,
}

impl Gaussian {
    pub fn new(mean: Vector, cov: Matrix) -> Self {
        Self { mean, cov }
    }
}

/// Where a belief sits in the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// `p(x_1)` before any measurement; the input side, if present, is the
    /// prior on `d_0`, independent of `x_1`.
    Initial,
    /// `p(x_t | y_1..y_{t-1})`; under an input prior the state is correlated
    /// with `d_{t-1}` through `G`.
    Predicted,
    /// `p(x_t | y_1..y_t)` and `p(d_{t-1} | y_1..y_t)`.
    Filtered,
}

/// `Σ_k δ_k N(x; x̂_k, Σ_k)` and `Σ_k δ_k N(d; d̂_k, Γ_k)`.
///
/// `inputs` is either empty (no input estimate yet) or has one entry per
/// weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureBelief {
    pub weights: Vec<f64>,
    pub states: Vec<Gaussian>,
    pub inputs: Vec<Gaussian>,
    /// Time index `t` of the state this belief describes.
    pub time_index: usize,
    pub stage: Stage,
}

/// Tolerance on `|Σ δ - 1|`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl MixtureBelief {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn has_inputs(&self) -> bool {
        !self.inputs.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn state_mean(&self) -> Vector {
        mixture_mean(&self.weights, &self.states)
    }

    pub fn state_covariance(&self) -> Matrix {
        mixture_covariance(&self.weights, &self.states)
    }

    pub fn input_mean(&self) -> Option<Vector> {
        self.has_inputs()
            .then(|| mixture_mean(&self.weights, &self.inputs))
    }

    pub fn input_covariance(&self) -> Option<Matrix> {
        self.has_inputs()
            .then(|| mixture_covariance(&self.weights, &self.inputs))
    }

    /// Checks weight normalization, list alignment and PSD covariances.
    pub fn check_invariants(&self) -> Result<()> {
        if self.states.len() != self.weights.len()
            || (self.has_inputs() && self.inputs.len() != self.weights.len())
        {
            return Err(Error::Stage(
                "state, input and weight lists differ in length",
            ));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Stage("weights must be finite and nonnegative"));
        }
        if (self.weight_sum() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Stage("weights do not sum to one"));
        }
        for (what, list) in [
            ("state covariance", &self.states),
            ("input covariance", &self.inputs),
        ] {
            for g in list.iter() {
                let e = min_eigenvalue(&g.cov);
                if e < PSD_TOLERANCE {
                    return Err(Error::NotPsd {
                        what,
                        min_eigenvalue: e,
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn mixture_mean(weights: &[f64], comps: &[Gaussian]) -> Vector {
    let dim = comps.first().map_or(0, |c| c.mean.len());
    let mut out = Vector::zeros(dim);
    for (w, c) in weights.iter().zip(comps) {
        out.axpy(*w, &c.mean, 1.0);
    }
    out
}

/// Overall covariance `Σ δ (P + (m - m̄)(m - m̄)')`.
pub fn mixture_covariance(weights: &[f64], comps: &[Gaussian]) -> Matrix {
    let mean = mixture_mean(weights, comps);
    let dim = mean.len();
    let mut out = Matrix::zeros(dim, dim);
    for (w, c) in weights.iter().zip(comps) {
        let dm = &c.mean - &mean;
        out += (&c.cov + &dm * dm.transpose()) * *w;
    }
    out
}
