//! Reference filters.
//!
//! [`lti_sise_step`] is the single-component LTI SISE iteration, which treats
//! the measurement as linear. It is written in the minimum-variance
//! unbiased form
//!
//! ```text
//! x̂⁺ = A x̂ + N (y - C A x̂),   N = G M + K (I - C G M)
//! Σ⁺ = (I - N C) X (I - N C)' + N R N'
//! ```
//!
//! with `M = (F'S⁻¹F)⁻¹ F'S⁻¹`, `F = CG`, `K = X C' S⁻¹`, and deliberately does
//! not share code with the Gaussian-sum filters it is compared against.
//!
//! The Kalman filter on `[x[t]; d[t-1]]` is the reference for the
//! informative-prior filter with a linear likelihood.

use crate::error::{Error, Result};
use crate::linalg::{spd_cholesky, symmetrized};
use crate::mixture::{Gaussian, Stage};
use crate::model::{ExtendedModel, InputPrior, SystemModel};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct PointBelief {
    pub x_hat: Vector,
    pub sigma: Matrix,
    /// Estimate of `d[t-1]`, absent until the second measurement.
    pub d_hat: Option<Vector>,
    pub gamma: Option<Matrix>,
    pub time_index: usize,
    pub stage: Stage,
}

pub fn lti_sise_init(model: &SystemModel) -> PointBelief {
    PointBelief {
        x_hat: model.mu1().clone(),
        sigma: model.p1().clone(),
        d_hat: None,
        gamma: None,
        time_index: 1,
        stage: Stage::Initial,
    }
}

/// One LTI SISE iteration on a linear measurement `y`.
///
/// The first call only conditions `N(μ1, P1)` on `y[1]`: no input has acted
/// yet, so no input estimate exists.
pub fn lti_sise_step(prev: &PointBelief, y: &Vector, model: &SystemModel) -> Result<PointBelief> {
    if y.len() != model.p() {
        return Err(Error::dimension(
            "measurement",
            (model.p(), 1),
            (y.len(), 1),
        ));
    }
    match prev.stage {
        Stage::Initial => {
            let (x_hat, sigma) = kalman_update(&prev.x_hat, &prev.sigma, y, model.c(), model.r())?;
            Ok(PointBelief {
                x_hat,
                sigma,
                d_hat: None,
                gamma: None,
                time_index: prev.time_index,
                stage: Stage::Filtered,
            })
        }
        Stage::Filtered => sise_iteration(prev, y, model),
        Stage::Predicted => Err(Error::Stage(
            "LTI SISE belief is never in the predicted stage",
        )),
    }
}

fn sise_iteration(prev: &PointBelief, y: &Vector, model: &SystemModel) -> Result<PointBelief> {
    let (a, c, g, r) = (model.a(), model.c(), model.g(), model.r());
    let n = model.n();
    let x_pred = a * &prev.x_hat;
    let x = symmetrized(model.q() + a * &prev.sigma * a.transpose());
    let s = symmetrized(r + c * &x * c.transpose());
    let s_chol = spd_cholesky(&s, "innovation covariance")?;
    let f = model.cg();
    let s_inv_f = s_chol.solve(&f);
    let info = symmetrized(f.transpose() * &s_inv_f);
    let info_chol = nalgebra::Cholesky::new(info).ok_or(Error::RankCondition)?;
    // M = (F'S⁻¹F)⁻¹ F'S⁻¹ = ((S⁻¹F)(F'S⁻¹F)⁻¹)'
    let m_gain = info_chol.solve(&s_inv_f.transpose());
    let k_gain = s_chol.solve(&(c * &x)).transpose();
    let p = model.p();
    let n_gain = g * &m_gain + &k_gain * (Matrix::identity(p, p) - &f * &m_gain);

    let residual = y - c * &x_pred;
    let d_hat = &m_gain * &residual;
    let x_hat = x_pred + &n_gain * &residual;
    let inc = Matrix::identity(n, n) - &n_gain * c;
    let sigma = symmetrized(&inc * &x * inc.transpose() + &n_gain * r * n_gain.transpose());
    let gamma = symmetrized(info_chol.inverse());
    Ok(PointBelief {
        x_hat,
        sigma,
        d_hat: Some(d_hat),
        gamma: Some(gamma),
        time_index: prev.time_index + 1,
        stage: Stage::Filtered,
    })
}

/// `(I - KC) P (I - KC)' + K R K'` update of `N(mean, cov)` on `y = C x + v`.
fn kalman_update(
    mean: &Vector,
    cov: &Matrix,
    y: &Vector,
    c: &Matrix,
    r: &Matrix,
) -> Result<(Vector, Matrix)> {
    let pct = cov * c.transpose();
    let s = symmetrized(r + c * &pct);
    let s_chol = spd_cholesky(&s, "innovation covariance")?;
    let k = s_chol.solve(&pct.transpose()).transpose();
    let dim = mean.len();
    let ikc = Matrix::identity(dim, dim) - &k * c;
    let post = symmetrized(&ikc * cov * ikc.transpose() + &k * r * k.transpose());
    Ok((mean + &k * (y - c * mean), post))
}

/// `N([μ1; d̄], diag(P1, D))`: `d[0]` is independent of `x[1]`.
pub fn kalman_extended_init(model: &SystemModel, prior: &InputPrior) -> Gaussian {
    Gaussian::new(
        crate::linalg::stack(model.mu1(), prior.mean()),
        crate::linalg::block_diag(model.p1(), prior.cov()),
    )
}

pub fn kalman_extended_predict(prev: &Gaussian, ext: &ExtendedModel) -> Gaussian {
    let a = &ext.a_tilde;
    Gaussian::new(
        a * &prev.mean + &ext.b_tilde,
        symmetrized(a * &prev.cov * a.transpose() + &ext.q_tilde),
    )
}

pub fn kalman_extended_update(
    prev: &Gaussian,
    y: &Vector,
    ext: &ExtendedModel,
) -> Result<Gaussian> {
    if y.len() != ext.c_tilde.nrows() {
        return Err(Error::dimension(
            "measurement",
            (ext.c_tilde.nrows(), 1),
            (y.len(), 1),
        ));
    }
    let (mean, cov) = kalman_update(&prev.mean, &prev.cov, y, &ext.c_tilde, &ext.r)?;
    Ok(Gaussian::new(mean, cov))
}

/// Predict, then update on `y`.
pub fn kalman_extended_step(prev: &Gaussian, y: &Vector, ext: &ExtendedModel) -> Result<Gaussian> {
    kalman_extended_update(&kalman_extended_predict(prev, ext), y, ext)
}
