//! Numerical oracles: dense-grid Bayes posteriors and seeded Monte Carlo.

mod common;

use common::section_v;
use qsise_core::gsf_prior::{gsf_init, gsf_measurement_update};
use qsise_core::likelihood::{normal_interval_probability, LikelihoodBuilder};
use qsise_core::reduction::reduce_joint;
use qsise_core::sim::{
    realization_seed, run_filter, simulate_trajectory, Estimator, FilterSettings, InputLaw,
};
use qsise_core::{
    InputPrior, Matrix, Quantizer, ReductionConfig, Sequential, TruncationPolicy, Vector,
};

/// `E[x_1 | y_1]` for a scalar output by trapezoid integration over `s = C x_1`.
fn grid_posterior_mean(model: &qsise_core::SystemModel, y: f64, delta: f64) -> Vector {
    let c = model.c();
    let mu_s = (c * model.mu1())[0];
    let var_s = (c * model.p1() * c.transpose())[(0, 0)];
    let sd_s = var_s.sqrt();
    let sd_v = model.r()[(0, 0)].sqrt();
    let (lo, hi) = (y - delta / 2.0, y + delta / 2.0);
    let points = 200_001;
    let (a, b) = (mu_s - 12.0 * sd_s, mu_s + 12.0 * sd_s);
    let h = (b - a) / (points - 1) as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for k in 0..points {
        let s = a + h * k as f64;
        let trap = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        let prior = (-(s - mu_s).powi(2) / (2.0 * var_s)).exp();
        let w = trap * prior * normal_interval_probability(lo, hi, s, sd_v);
        mass += w;
        first += w * s;
    }
    let post_s = first / mass;
    let gain = model.p1() * c.transpose() / var_s;
    model.mu1() + gain * (post_s - mu_s)
}

#[test]
fn prior_filter_first_update_matches_grid_posterior() {
    let model = section_v();
    let delta = 5.0;
    let quantizer = Quantizer::uniform_scalar(delta, 1).unwrap();
    let prior = InputPrior::isotropic(Vector::zeros(1), 20.0).unwrap();
    let y = Vector::from_element(1, 5.0);
    let lik = LikelihoodBuilder::new(3, TruncationPolicy::default())
        .unwrap()
        .for_level(&quantizer, &y, model.r())
        .unwrap();
    let belief =
        gsf_measurement_update(&gsf_init(&model, &prior), &lik, &model, &prior, &Sequential)
            .unwrap();
    assert_eq!(belief.len(), 3);
    let truth = grid_posterior_mean(&model, 5.0, delta);
    let err = (belief.state_mean() - &truth).amax();
    assert!(
        err < 2e-2,
        "gsf {} grid {} err {err}",
        belief.state_mean(),
        truth
    );
    // Frozen at the value this configuration produces.
    assert!((err - 1.08e-2).abs() < 1e-3, "err {err}");
    let reduced = reduce_joint(&belief, &ReductionConfig::default()).unwrap();
    assert_eq!(reduced.len(), 3);
}

#[test]
fn prior_filter_converges_with_order() {
    let model = section_v();
    let quantizer = Quantizer::uniform_scalar(5.0, 1).unwrap();
    let prior = InputPrior::isotropic(Vector::zeros(1), 20.0).unwrap();
    let y = Vector::from_element(1, 5.0);
    let truth = grid_posterior_mean(&model, 5.0, 5.0);
    let errs: Vec<f64> = [3, 5, 10]
        .iter()
        .map(|&order| {
            let lik = LikelihoodBuilder::new(order, TruncationPolicy::default())
                .unwrap()
                .for_level(&quantizer, &y, model.r())
                .unwrap();
            let b = gsf_measurement_update(
                &gsf_init(&model, &prior),
                &lik,
                &model,
                &prior,
                &Sequential,
            )
            .unwrap();
            (b.state_mean() - &truth).amax()
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 1e-8);
}

fn settings() -> FilterSettings {
    FilterSettings {
        likelihood: LikelihoodBuilder::new(5, TruncationPolicy::default()).unwrap(),
        reduction: ReductionConfig::default(),
    }
}

/// Mean and standard error of `d̂_t - d_t`, pooled over runs and steps.
fn input_error_stats(
    estimator: &Estimator,
    quantizer: &Quantizer,
    bypass: bool,
    runs: usize,
    steps: usize,
) -> (f64, f64) {
    let model = section_v();
    let law = InputLaw::Gaussian {
        mean: Vector::zeros(1),
        cov: Matrix::from_element(1, 1, 20.0),
    };
    let settings = settings();
    let mut run_means = Vec::with_capacity(runs);
    for run in 0..runs {
        let q = if bypass { None } else { Some(quantizer) };
        let traj = simulate_trajectory(&model, q, &law, steps, realization_seed(11, run)).unwrap();
        let rec = run_filter(&traj, &model, quantizer, estimator, &settings).unwrap();
        let errs: Vec<f64> = rec
            .d_hat
            .iter()
            .zip(&traj.d)
            .map(|(e, d)| e[0] - d[0])
            .collect();
        run_means.push(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    let mean = run_means.iter().sum::<f64>() / runs as f64;
    let var = run_means.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    (mean, (var / runs as f64).sqrt())
}

#[test]
fn lti_input_estimate_is_unbiased_without_quantization() {
    let q = Quantizer::uniform_scalar(1.0, 1).unwrap();
    let (mean, se) = input_error_stats(&Estimator::Lti, &q, true, 100, 100);
    assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn limit_input_estimate_is_unbiased_at_fine_quantization() {
    let q = Quantizer::uniform_scalar(1.0, 1).unwrap();
    let (mean, se) = input_error_stats(&Estimator::GsfLimit, &q, false, 100, 50);
    assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn limit_beats_lti_on_most_realizations() {
    let model = section_v();
    let q = Quantizer::uniform_scalar(10.0, 1).unwrap();
    let law = InputLaw::Gaussian {
        mean: Vector::zeros(1),
        cov: Matrix::from_element(1, 1, 20.0),
    };
    let settings = settings();
    let wins = (0..100)
        .filter(|&run| {
            let traj =
                simulate_trajectory(&model, Some(&q), &law, 50, realization_seed(0, run)).unwrap();
            let gsf = run_filter(&traj, &model, &q, &Estimator::GsfLimit, &settings).unwrap();
            let lti = run_filter(&traj, &model, &q, &Estimator::Lti, &settings).unwrap();
            gsf.mse_d[0] <= lti.mse_d[0]
        })
        .count();
    assert!(wins >= 70, "{wins} of 100");
}
