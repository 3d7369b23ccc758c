//! Gaussian sum SISE filter under a Gaussian i.i.d. input prior
//! `d[t] ~ N(d̄, D)`.
//!
//! Measurement update, for each predicted component `ℓ` and likelihood node
//! `κ` (output index `k = ℓ K + κ`):
//!
//! ```text
//! S_ℓ   = R + C Σ_ℓ C'
//! K_ℓ   = Σ_ℓ C' S_ℓ^-1                 L_ℓ = D G' C' S_ℓ^-1
//! r_k   = ζ_κ(y) - C x̂_ℓ - μ_κ
//! x̂_k   = x̂_ℓ + K_ℓ r_k                 d̂_k = d̄ + L_ℓ r_k
//! Σ_k   = (I - K_ℓ C) Σ_ℓ               Γ_k = (I - L_ℓ C G) D
//! δ_k  ∝ φ_κ δ_ℓ N(ζ_κ(y); C x̂_ℓ + μ_κ, S_ℓ)
//! ```
//!
//! Time update: `x̂ ← A x̂ + G d̄`, `Σ ← Q + G D G' + A Σ A'`, weights kept.
//!
//! The state covariance is computed in Joseph form and all weights are kept
//! in the log domain until normalization.

use alloc::vec::Vec;

use crate::bank::Executor;
use crate::error::{Error, Result};
use crate::likelihood::LikelihoodGmm;
use crate::linalg::{gaussian_logpdf_residual, normalize_log_weights, spd_cholesky, symmetrized};
use crate::mixture::{Gaussian, MixtureBelief, Stage};
use crate::model::{InputPrior, SystemModel};
use crate::{Matrix, Vector};

/// Raw log-weights below this mean the update carries no usable mass.
pub const LOG_WEIGHT_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// Per-(ℓ, κ) diagnostics of one measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGains {
    pub k_gain: Matrix,
    pub l_gain: Matrix,
    pub innovation: Vector,
    pub raw_log_weight: f64,
}

pub fn gsf_init(model: &SystemModel, prior: &InputPrior) -> MixtureBelief {
    MixtureBelief {
        weights: alloc::vec![1.0],
        states: alloc::vec![Gaussian::new(model.mu1().clone(), model.p1().clone())],
        inputs: alloc::vec![Gaussian::new(prior.mean().clone(), prior.cov().clone())],
        time_index: 1,
        stage: Stage::Initial,
    }
}

/// Input handling for the shared measurement-update kernel.
#[derive(Clone, Copy)]
pub(crate) enum InputSide<'a> {
    /// No input estimate is produced.
    None,
    /// `d` is independent of the predicted state: the estimate stays at the prior.
    Independent(&'a InputPrior),
    /// `cov(x_t, d_{t-1}) = G D`, as after a time update.
    Coupled(&'a InputPrior),
}

struct ComponentGains {
    s_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    k: Matrix,
    l: Option<Matrix>,
    state_cov: Matrix,
    input_cov: Option<Matrix>,
}

fn component_gains(
    pred: &Gaussian,
    model: &SystemModel,
    input: InputSide<'_>,
) -> Result<ComponentGains> {
    let c = model.c();
    let sigma_ct = &pred.cov * c.transpose();
    let s = symmetrized(model.r() + c * &sigma_ct);
    let s_chol = spd_cholesky(&s, "innovation covariance")?;
    let s_inv = s_chol.inverse();
    let k = &sigma_ct * &s_inv;
    let n = model.n();
    let ikc = Matrix::identity(n, n) - &k * c;
    let state_cov =
        symmetrized(&ikc * &pred.cov * ikc.transpose() + &k * model.r() * k.transpose());
    let (l, input_cov) = match input {
        InputSide::None => (None, None),
        InputSide::Independent(prior) => (
            Some(Matrix::zeros(model.m(), model.p())),
            Some(prior.cov().clone()),
        ),
        InputSide::Coupled(prior) => {
            let d = prior.cov();
            let l = d * model.cg().transpose() * &s_inv;
            let m = model.m();
            let gamma = symmetrized((Matrix::identity(m, m) - &l * model.cg()) * d);
            (Some(l), Some(gamma))
        }
    };
    Ok(ComponentGains {
        s_chol,
        k,
        l,
        state_cov,
        input_cov,
    })
}

type Branch = (f64, Gaussian, Option<Gaussian>, StepGains);

/// Shared Gaussian-sum measurement update over all (ℓ, κ) pairs, in k order.
pub(crate) fn measurement_kernel<E: Executor>(
    belief: &MixtureBelief,
    lik: &LikelihoodGmm,
    model: &SystemModel,
    input: InputSide<'_>,
    exec: &E,
) -> Result<(Vec<f64>, Vec<Gaussian>, Vec<Gaussian>, Vec<StepGains>)> {
    if lik.is_empty() {
        return Err(Error::Stage("likelihood mixture has no components"));
    }
    let indexed: Vec<(f64, &Gaussian)> = belief
        .weights
        .iter()
        .copied()
        .zip(belief.states.iter())
        .collect();
    let c = model.c();
    let per_parent: Vec<Result<Vec<Branch>>> = exec.map(&indexed, |&(weight, pred)| {
        let gains = component_gains(pred, model, input)?;
        let log_parent = libm::log(weight);
        let predicted_output = c * &pred.mean;
        let mut out = Vec::with_capacity(lik.len());
        for node in &lik.components {
            let innovation = &node.zeta - &predicted_output - &node.mu;
            let raw = libm::log(node.phi)
                + log_parent
                + gaussian_logpdf_residual(&innovation, &gains.s_chol);
            let state = Gaussian::new(&pred.mean + &gains.k * &innovation, gains.state_cov.clone());
            let input_est = match (input, &gains.l, &gains.input_cov) {
                (InputSide::Independent(prior) | InputSide::Coupled(prior), Some(l), Some(cov)) => {
                    Some(Gaussian::new(prior.mean() + l * &innovation, cov.clone()))
                }
                _ => None,
            };
            let diag = StepGains {
                k_gain: gains.k.clone(),
                l_gain: gains
                    .l
                    .clone()
                    .unwrap_or_else(|| Matrix::zeros(0, model.p())),
                innovation,
                raw_log_weight: raw,
            };
            out.push((raw, state, input_est, diag));
        }
        Ok(out)
    });

    let total = belief.len() * lik.len();
    let mut log_weights = Vec::with_capacity(total);
    let mut states = Vec::with_capacity(total);
    let mut inputs = Vec::with_capacity(total);
    let mut gains = Vec::with_capacity(total);
    for branch in per_parent {
        for (lw, state, input_est, diag) in branch? {
            log_weights.push(lw);
            states.push(state);
            if let Some(d) = input_est {
                inputs.push(d);
            }
            gains.push(diag);
        }
    }
    Ok((log_weights, states, inputs, gains))
}

pub(crate) fn normalized(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max < LOG_WEIGHT_FLOOR {
        return Err(Error::DegenerateUpdate {
            max_log_weight: max,
            components: log_weights.len(),
        });
    }
    Ok(normalize_log_weights(log_weights))
}

/// Measurement update returning per-(ℓ, κ) gains alongside the belief.
pub fn gsf_measurement_update_with_gains<E: Executor>(
    belief: &MixtureBelief,
    lik: &LikelihoodGmm,
    model: &SystemModel,
    prior: &InputPrior,
    exec: &E,
) -> Result<(MixtureBelief, Vec<StepGains>)> {
    let input = match belief.stage {
        Stage::Initial => InputSide::Independent(prior),
        Stage::Predicted => InputSide::Coupled(prior),
        Stage::Filtered => return Err(Error::Stage("measurement update needs a predicted belief")),
    };
    let (log_weights, states, inputs, gains) = measurement_kernel(belief, lik, model, input, exec)?;
    let weights = normalized(&log_weights)?;
    Ok((
        MixtureBelief {
            weights,
            states,
            inputs,
            time_index: belief.time_index,
            stage: Stage::Filtered,
        },
        gains,
    ))
}

pub fn gsf_measurement_update<E: Executor>(
    belief: &MixtureBelief,
    lik: &LikelihoodGmm,
    model: &SystemModel,
    prior: &InputPrior,
    exec: &E,
) -> Result<MixtureBelief> {
    gsf_measurement_update_with_gains(belief, lik, model, prior, exec).map(|(b, _)| b)
}

pub fn gsf_time_update(
    belief: &MixtureBelief,
    model: &SystemModel,
    prior: &InputPrior,
) -> Result<MixtureBelief> {
    if belief.stage != Stage::Filtered {
        return Err(Error::Stage("time update needs a filtered belief"));
    }
    let a = model.a();
    let g = model.g();
    let drift = g * prior.mean();
    let base = model.q() + g * prior.cov() * g.transpose();
    let states = belief
        .states
        .iter()
        .map(|s| {
            Gaussian::new(
                a * &s.mean + &drift,
                symmetrized(&base + a * &s.cov * a.transpose()),
            )
        })
        .collect();
    Ok(MixtureBelief {
        weights: belief.weights.clone(),
        states,
        inputs: Vec::new(),
        time_index: belief.time_index + 1,
        stage: Stage::Predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::Sequential;
    use approx::assert_relative_eq;

    fn section_v() -> SystemModel {
        SystemModel::checked(
            Matrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.7]),
            Matrix::from_row_slice(2, 1, &[2.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 1.5]),
            Matrix::identity(2, 2) * 0.1,
            Matrix::from_element(1, 1, 0.1),
            Vector::from_row_slice(&[2.0, 1.0]),
            Matrix::identity(2, 2) * 0.5,
        )
        .unwrap()
    }

    fn prior(d: f64) -> InputPrior {
        InputPrior::isotropic(Vector::zeros(1), d).unwrap()
    }

    #[test]
    fn init_section_v() {
        let b = gsf_init(&section_v(), &prior(20.0));
        assert_eq!(b.len(), 1);
        assert_eq!(b.weights, alloc::vec![1.0]);
        assert_eq!(b.states[0].mean, Vector::from_row_slice(&[2.0, 1.0]));
        assert_eq!(b.states[0].cov, Matrix::identity(2, 2) * 0.5);
        assert_eq!(b.inputs[0].mean[0], 0.0);
        assert_eq!(b.inputs[0].cov[(0, 0)], 20.0);
    }

    #[test]
    fn time_update_section_v() {
        let model = section_v();
        let mut b = gsf_init(&model, &prior(20.0));
        b.stage = Stage::Filtered;
        let p = gsf_time_update(&b, &model, &prior(20.0)).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[80.505, 40.0, 40.0, 20.345]);
        assert!((&p.states[0].cov - expected).abs().max() < 1e-12);
        assert_eq!(p.weights, b.weights);
        assert!(p.inputs.is_empty());
        assert_eq!(p.stage, Stage::Predicted);
        assert_eq!(p.time_index, 2);
    }

    #[test]
    fn time_update_with_zero_dynamics() {
        let model = SystemModel::checked(
            Matrix::zeros(2, 2),
            Matrix::from_row_slice(2, 1, &[2.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 1.5]),
            Matrix::identity(2, 2) * 0.1,
            Matrix::from_element(1, 1, 0.1),
            Vector::from_row_slice(&[2.0, 1.0]),
            Matrix::identity(2, 2) * 0.5,
        )
        .unwrap();
        let mut b = gsf_init(&model, &prior(3.0));
        b.stage = Stage::Filtered;
        b.weights = alloc::vec![0.25, 0.75];
        b.states.push(Gaussian::new(
            Vector::from_row_slice(&[5.0, -1.0]),
            Matrix::identity(2, 2),
        ));
        let p = gsf_time_update(&b, &model, &prior(3.0)).unwrap();
        let g = model.g();
        let expected = model.q() + g * g.transpose() * 3.0;
        for s in &p.states {
            assert_eq!(s.mean, Vector::zeros(2));
            assert!((&s.cov - &expected).abs().max() < 1e-15);
        }
        assert_eq!(p.weights, alloc::vec![0.25, 0.75]);
    }

    #[test]
    fn stage_is_enforced() {
        let model = section_v();
        let b = gsf_init(&model, &prior(1.0));
        assert!(gsf_time_update(&b, &model, &prior(1.0)).is_err());
        let lik = LikelihoodGmm::linear(&Vector::zeros(1), model.r());
        let f = gsf_measurement_update(&b, &lik, &model, &prior(1.0), &Sequential).unwrap();
        assert!(gsf_measurement_update(&f, &lik, &model, &prior(1.0), &Sequential).is_err());
    }

    #[test]
    fn first_update_leaves_input_at_prior() {
        let model = section_v();
        let b = gsf_init(&model, &prior(20.0));
        let lik = LikelihoodGmm::linear(&Vector::from_element(1, 4.0), model.r());
        let f = gsf_measurement_update(&b, &lik, &model, &prior(20.0), &Sequential).unwrap();
        assert_eq!(f.inputs[0].mean[0], 0.0);
        assert_eq!(f.inputs[0].cov[(0, 0)], 20.0);
    }

    #[test]
    fn coupled_update_shrinks_input_covariance() {
        let model = section_v();
        let pr = prior(20.0);
        let mut b = gsf_init(&model, &pr);
        b.stage = Stage::Filtered;
        let p = gsf_time_update(&b, &model, &pr).unwrap();
        let lik = LikelihoodGmm::linear(&Vector::from_element(1, 4.0), model.r());
        let (f, gains) =
            gsf_measurement_update_with_gains(&p, &lik, &model, &pr, &Sequential).unwrap();
        let gamma = f.inputs[0].cov[(0, 0)];
        assert!(gamma > 0.0 && gamma < 20.0);
        assert_eq!(gains.len(), 1);
        // L = D G'C' S^-1 with S = R + C Σ C'
        let s = 0.1 + (model.c() * &p.states[0].cov * model.c().transpose())[(0, 0)];
        assert_relative_eq!(
            gains[0].l_gain[(0, 0)],
            20.0 * 3.5 / s,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            gamma,
            (1.0 - gains[0].l_gain[(0, 0)] * 3.5) * 20.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn surprising_measurement_is_degenerate() {
        let model = section_v();
        let b = gsf_init(&model, &prior(1.0));
        let lik = LikelihoodGmm::linear(&Vector::from_element(1, 1e4), model.r());
        let err = gsf_measurement_update(&b, &lik, &model, &prior(1.0), &Sequential).unwrap_err();
        assert!(matches!(err, Error::DegenerateUpdate { components: 1, .. }));
    }
}
