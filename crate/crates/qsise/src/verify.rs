//! Invariant checks run by `qsise verify` against a configured model.

use qsise_core::baselines::{
    kalman_extended_init, kalman_extended_step, kalman_extended_update, lti_sise_init,
    lti_sise_step,
};
use qsise_core::gsf_limit::{gsf_limit_init, gsf_limit_step, LimitStepGains};
use qsise_core::gsf_prior::{gsf_init, gsf_measurement_update, gsf_time_update};
use qsise_core::likelihood::{
    cell_likelihood_gmm, gauss_legendre_rule, likelihood_eval_exact, MAX_ORDER,
};
use qsise_core::model::build_extended;
use qsise_core::sim::{realization_seed, simulate_trajectory, Estimator, InputLaw};
use qsise_core::{
    Hyperrectangle, InputPrior, LikelihoodGmm, Matrix, Quantizer, Result, Sequential, Stage,
    SystemModel, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;

pub const LIMIT_STEPS: usize = 20;
pub const LIMIT_SCALES: [f64; 3] = [1e4, 1e6, 1e8];
pub const LIMIT_TOLERANCE: f64 = 1e-3;
pub const COLLAPSE_STEPS: usize = 100;
pub const COLLAPSE_TOLERANCE: f64 = 1e-10;
pub const GAIN_TOLERANCE: f64 = 1e-8;
pub const KALMAN_TOLERANCE: f64 = 1e-9;
pub const QUADRATURE_ORDERS: [usize; 6] = [1, 2, 4, 8, 16, MAX_ORDER];
pub const QUADRATURE_CENTERS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&ExperimentConfig) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 4] = [
    ("limit-convergence", limit_convergence),
    ("lti-collapse", lti_collapse),
    ("kalman-equivalence", kalman_equivalence),
    ("quadrature-convergence", quadrature_convergence),
];

pub fn run_checks(cfg: &ExperimentConfig) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, check)| match check(cfg) {
            Ok((passed, detail)) => CheckOutcome {
                name,
                passed,
                detail,
            },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Unquantized outputs of a seeded run, so every check sees data on the
/// model's own scale.
fn linear_outputs(cfg: &ExperimentConfig, steps: usize) -> Result<Vec<Vector>> {
    let m = cfg.model.m();
    let law = match &cfg.input {
        InputLaw::Gaussian { .. } => cfg.input.clone(),
        InputLaw::Sequence(_) => InputLaw::Gaussian {
            mean: Vector::zeros(m),
            cov: Matrix::identity(m, m),
        },
    };
    let seed = realization_seed(cfg.experiment.seed, 0);
    Ok(simulate_trajectory(&cfg.model, None, &law, steps, seed)?.y)
}

fn prior_from(cfg: &ExperimentConfig) -> Result<InputPrior> {
    let m = cfg.model.m();
    cfg.estimators
        .iter()
        .find_map(|e| match e {
            Estimator::GsfPrior(p) => Some(Ok(p.clone())),
            _ => None,
        })
        .unwrap_or_else(|| InputPrior::isotropic(Vector::zeros(m), 1.0))
}

fn rel_dev(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Deviation of the finite-prior filter from the limit filter for growing
/// prior covariance `D = s I`.
pub fn limit_deviations(model: &SystemModel, ys: &[Vector], scales: &[f64]) -> Result<Vec<f64>> {
    let r = model.r();
    let mut limit = gsf_limit_init(model);
    let mut reference = Vec::with_capacity(ys.len());
    for y in ys {
        limit = gsf_limit_step(&limit, &LikelihoodGmm::linear(y, r), model, &Sequential)?;
        reference.push((limit.state_mean(), limit.input_mean()));
    }
    scales
        .iter()
        .map(|&scale| {
            let prior = InputPrior::isotropic(Vector::zeros(model.m()), scale)?;
            let mut b = gsf_init(model, &prior);
            let mut worst = 0.0_f64;
            for (t, y) in ys.iter().enumerate() {
                if t > 0 {
                    b = gsf_time_update(&b, model, &prior)?;
                }
                b = gsf_measurement_update(
                    &b,
                    &LikelihoodGmm::linear(y, r),
                    model,
                    &prior,
                    &Sequential,
                )?;
                let (x, d) = &reference[t];
                worst = worst.max(rel_dev(&b.state_mean(), x));
                if let (Some(d), Some(est)) = (d, b.input_mean()) {
                    worst = worst.max(rel_dev(&est, d));
                }
            }
            Ok(worst)
        })
        .collect()
}

fn limit_convergence(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let ys = linear_outputs(cfg, LIMIT_STEPS)?;
    let devs = limit_deviations(&cfg.model, &ys, &LIMIT_SCALES)?;
    let shrinking = devs.windows(2).all(|w| w[1] < w[0]);
    let last = devs[devs.len() - 1];
    let detail = LIMIT_SCALES
        .iter()
        .zip(&devs)
        .map(|(s, d)| format!("D={s:e}: {d:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((shrinking && last < LIMIT_TOLERANCE, detail))
}

/// Largest deviation between the limit filter and LTI SISE, and the largest
/// `|L C G - I|`, over a run of linear measurements.
pub fn collapse_deviations(model: &SystemModel, ys: &[Vector]) -> Result<(f64, f64)> {
    let mut gsf = gsf_limit_init(model);
    let mut lti = lti_sise_init(model);
    let eye = Matrix::identity(model.m(), model.m());
    let cg = model.cg();
    let (mut dev, mut gain) = (0.0_f64, 0.0_f64);
    for y in ys {
        if gsf.stage == Stage::Filtered {
            let g = LimitStepGains::compute(&gsf.states[0].cov, model)?;
            gain = gain.max(max_abs(&(&g.l_limit * &cg - &eye)));
        }
        gsf = gsf_limit_step(
            &gsf,
            &LikelihoodGmm::linear(y, model.r()),
            model,
            &Sequential,
        )?;
        lti = lti_sise_step(&lti, y, model)?;
        dev = dev
            .max((&gsf.states[0].mean - &lti.x_hat).amax())
            .max(max_abs(&(&gsf.states[0].cov - &lti.sigma)));
        if let (Some(d), Some(gamma)) = (&lti.d_hat, &lti.gamma) {
            dev = dev
                .max((&gsf.inputs[0].mean - d).amax())
                .max(max_abs(&(&gsf.inputs[0].cov - gamma)));
        }
    }
    Ok((dev, gain))
}

fn lti_collapse(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let ys = linear_outputs(cfg, COLLAPSE_STEPS)?;
    let (dev, gain) = collapse_deviations(&cfg.model, &ys)?;
    Ok((
        dev <= COLLAPSE_TOLERANCE && gain <= GAIN_TOLERANCE,
        format!("max deviation {dev:.3e}, max |LCG - I| {gain:.3e}"),
    ))
}

/// Largest deviation of the single-component prior filter from the
/// extended-state Kalman marginals.
pub fn kalman_deviation(model: &SystemModel, prior: &InputPrior, ys: &[Vector]) -> Result<f64> {
    let (n, m) = (model.n(), model.m());
    let ext = build_extended(model, prior)?;
    let mut kf = kalman_extended_init(model, prior);
    let mut gsf = gsf_init(model, prior);
    let mut dev = 0.0_f64;
    for (t, y) in ys.iter().enumerate() {
        if t == 0 {
            kf = kalman_extended_update(&kf, y, &ext)?;
        } else {
            kf = kalman_extended_step(&kf, y, &ext)?;
            gsf = gsf_time_update(&gsf, model, prior)?;
        }
        gsf = gsf_measurement_update(
            &gsf,
            &LikelihoodGmm::linear(y, model.r()),
            model,
            prior,
            &Sequential,
        )?;
        let (xs, ds) = (&gsf.states[0], &gsf.inputs[0]);
        dev = dev
            .max((&xs.mean - kf.mean.rows(0, n)).amax())
            .max((&ds.mean - kf.mean.rows(n, m)).amax())
            .max(max_abs(&(&xs.cov - kf.cov.view((0, 0), (n, n)))))
            .max(max_abs(&(&ds.cov - kf.cov.view((n, n), (m, m)))));
    }
    Ok(dev)
}

fn kalman_equivalence(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let ys = linear_outputs(cfg, COLLAPSE_STEPS)?;
    let dev = kalman_deviation(&cfg.model, &prior_from(cfg)?, &ys)?;
    Ok((dev <= KALMAN_TOLERANCE, format!("max deviation {dev:.3e}")))
}

/// Sup over random centers within three cell widths of `cell` of
/// `|approx - exact| / exact` (`relative`) or `|approx - exact|`.
pub fn quadrature_error(
    cell: &Hyperrectangle,
    r: &Matrix,
    order: usize,
    centers: usize,
    seed: u64,
    relative: bool,
) -> Result<f64> {
    let rule = gauss_legendre_rule(order)?;
    let gmm = cell_likelihood_gmm(cell, &rule, r, &Default::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..centers {
        let center = Vector::from_fn(cell.dim(), |i, _| {
            let (lo, hi) = (cell.lower[i], cell.upper[i]);
            let (mid, width) = ((lo + hi) / 2.0, hi - lo);
            mid + rng.gen_range(-3.0..3.0) * width
        });
        let exact = likelihood_eval_exact(cell, &center, r)?;
        let approx = gmm.evaluate(&center)?;
        let err = (approx - exact).abs();
        let err = if !relative {
            err
        } else if exact > 0.0 {
            err / exact
        } else if approx == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

fn quadrature_convergence(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let p = cfg.model.p();
    let mut cells: Vec<(String, Hyperrectangle)> = cfg
        .experiment
        .deltas
        .iter()
        .map(|&d| {
            let half = Vector::from_element(p, d / 2.0);
            (
                format!("{d}"),
                Hyperrectangle {
                    lower: -&half,
                    upper: half,
                },
            )
        })
        .collect();
    if let Quantizer::Uniform { steps } = &cfg.quantizer {
        if cells.is_empty() {
            let half = steps / 2.0;
            cells.push((
                format!("{}", steps[0]),
                Hyperrectangle {
                    lower: -&half,
                    upper: half,
                },
            ));
        }
    }
    if cells.is_empty() {
        return Ok((true, "no bounded uniform cells to check".into()));
    }
    let centers = if p == 1 {
        QUADRATURE_CENTERS
    } else {
        QUADRATURE_CENTERS / 10
    };
    let mut passed = true;
    let mut parts = Vec::new();
    for (label, cell) in &cells {
        let errs = QUADRATURE_ORDERS
            .iter()
            .map(|&k| quadrature_error(cell, cfg.model.r(), k, centers, 0, false))
            .collect::<Result<Vec<_>>>()?;
        passed &= errs.windows(2).all(|w| w[1] <= w[0] + 1e-15) && errs[errs.len() - 1] < errs[0];
        let at_config =
            quadrature_error(cell, cfg.model.r(), cfg.likelihood.order, centers, 0, false)?;
        parts.push(format!(
            "delta={label}: order {} error {at_config:.2e}, order {MAX_ORDER} error {:.2e}",
            cfg.likelihood.order,
            errs[errs.len() - 1]
        ));
    }
    Ok((passed, parts.join("; ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn bundled_config_passes() {
        let cfg = parse_config(include_str!("../examples/secv.cfg")).unwrap();
        for outcome in run_checks(&cfg) {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }

    #[test]
    fn relative_error_inside_a_fine_cell() {
        let cell = Hyperrectangle::interval(-0.5, 0.5);
        let r = Matrix::from_element(1, 1, 0.1);
        let abs = quadrature_error(&cell, &r, 10, 200, 1, false).unwrap();
        assert!(abs < 1e-11, "{abs}");
    }
}
