//! Trajectory simulation, filter orchestration and paired Monte Carlo runs.
//!
//! A trajectory draws `x[1] ~ N(μ1, P1)` and then, for each `t`, the
//! measurement noise `v[t]`, the input `d[t]` and the process noise `w[t]`, in
//! that order, from one ChaCha8 stream seeded by the trajectory seed.
//!
//! Realization `k` of an experiment uses
//!
//! ```text
//! seed_k = splitmix64_mix(master + (k + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! which is the `k`-th output of a SplitMix64 generator started at `master`.
//! The seed does not depend on the quantizer, so every step size in a sweep
//! sees the same underlying realizations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bank::{Executor, Sequential};
use crate::baselines::{lti_sise_init, lti_sise_step};
use crate::error::{Error, Result};
use crate::gsf_limit::{gsf_limit_init, gsf_limit_step};
use crate::gsf_prior::{gsf_init, gsf_measurement_update, gsf_time_update};
use crate::likelihood::LikelihoodBuilder;
use crate::mixture::MixtureBelief;
use crate::model::{InputPrior, Quantizer, SystemModel};
use crate::reduction::{reduce_joint, ReductionConfig};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum InputLaw {
    /// `d[t] ~ N(mean, cov)` i.i.d.
    Gaussian { mean: Vector, cov: Matrix },
    /// Fixed inputs `d[1..T]`.
    Sequence(Vec<Vector>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vector>,
    pub d: Vec<Vector>,
    pub z: Vec<Vector>,
    pub y: Vec<Vector>,
    pub w: Vec<Vector>,
    pub v: Vec<Vector>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// FNV-1a over the seed and the bits of every measurement.
    pub fn measurement_hash(&self) -> u64 {
        fnv1a(&self.y, self.seed)
    }
}

fn fnv1a(rows: &[Vector], seed: u64) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |word: u64| {
        for byte in word.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(seed);
    for row in rows {
        for v in row.iter() {
            eat(v.to_bits());
        }
    }
    h
}

/// Maps standard normal draws to `N(0, cov)` through `V diag(sqrt(λ⁺))`, so
/// singular covariances are fine.
#[derive(Debug, Clone)]
struct NoiseShaper {
    factor: Matrix,
}

impl NoiseShaper {
    fn new(cov: &Matrix) -> Self {
        let dim = cov.nrows();
        if dim == 0 {
            return Self {
                factor: Matrix::zeros(0, 0),
            };
        }
        let eig = crate::linalg::symmetrized(cov.clone()).symmetric_eigen();
        let mut factor = eig.eigenvectors;
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            let s = libm::sqrt(lam.max(0.0));
            factor.column_mut(j).scale_mut(s);
        }
        Self { factor }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vector {
        let dim = self.factor.nrows();
        let white = Vector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        &self.factor * white
    }
}

/// Simulates `T` steps of the system. `quantizer = None` leaves `y = z`.
pub fn simulate_trajectory(
    model: &SystemModel,
    quantizer: Option<&Quantizer>,
    law: &InputLaw,
    steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let (n, m) = (model.n(), model.m());
    let input_shaper = match law {
        InputLaw::Gaussian { mean, cov } => {
            if mean.len() != m {
                return Err(Error::dimension("input mean", (m, 1), (mean.len(), 1)));
            }
            if cov.shape() != (m, m) {
                return Err(Error::dimension("input covariance", (m, m), cov.shape()));
            }
            Some((mean, NoiseShaper::new(cov)))
        }
        InputLaw::Sequence(seq) => {
            if seq.len() < steps {
                return Err(Error::Argument(format!(
                    "input sequence has {} samples, need {steps}",
                    seq.len()
                )));
            }
            if let Some(bad) = seq.iter().find(|d| d.len() != m) {
                return Err(Error::dimension("input sample", (m, 1), (bad.len(), 1)));
            }
            None
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = NoiseShaper::new(model.p1());
    let q = NoiseShaper::new(model.q());
    let r = NoiseShaper::new(model.r());

    let mut traj = Trajectory {
        x: Vec::with_capacity(steps),
        d: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
        y: Vec::with_capacity(steps),
        w: Vec::with_capacity(steps),
        v: Vec::with_capacity(steps),
        seed,
    };
    if steps == 0 {
        return Ok(traj);
    }
    let mut x = model.mu1() + init.draw(&mut rng);
    debug_assert_eq!(x.len(), n);
    for t in 0..steps {
        let v = r.draw(&mut rng);
        let z = model.c() * &x + &v;
        let y = match quantizer {
            Some(qz) => qz.quantize(&z)?.level,
            None => z.clone(),
        };
        let d = match (&input_shaper, law) {
            (Some((mean, shaper)), _) => *mean + shaper.draw(&mut rng),
            (None, InputLaw::Sequence(seq)) => seq[t].clone(),
            (None, InputLaw::Gaussian { .. }) => unreachable!("shaper exists for Gaussian inputs"),
        };
        let w = q.draw(&mut rng);
        let next = model.a() * &x + model.g() * &d + &w;
        traj.x.push(core::mem::replace(&mut x, next));
        traj.d.push(d);
        traj.z.push(z);
        traj.y.push(y);
        traj.w.push(w);
        traj.v.push(v);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// Gaussian-sum filter in the uninformative-prior limit.
    GsfLimit,
    /// Gaussian-sum filter under an i.i.d. Gaussian input prior.
    GsfPrior(InputPrior),
    /// LTI SISE fed the quantized level as if it were linear.
    Lti,
}

impl Estimator {
    pub fn tag(&self) -> &'static str {
        match self {
            Estimator::GsfLimit => "gsf-limit",
            Estimator::GsfPrior(_) => "gsf-prior",
            Estimator::Lti => "lti",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub estimator: &'static str,
    /// `x̂[t]` for `t = 1..T`.
    pub x_hat: Vec<Vector>,
    /// `d̂[t-1]` for `t = 2..T`, i.e. estimates of `d[1..T-1]`.
    pub d_hat: Vec<Vector>,
    /// Mixture size after reduction at each step.
    pub components: Vec<usize>,
    pub weight_sums: Vec<f64>,
    pub mse_x: Vec<f64>,
    pub mse_d: Vec<f64>,
    pub trajectory_hash: u64,
    /// Filled in by callers that have a clock.
    pub wallclock_ms: Option<f64>,
}

/// Likelihood and reduction settings shared by every run.
#[derive(Debug, Clone)]
pub struct FilterSettings {
    pub likelihood: LikelihoodBuilder,
    pub reduction: ReductionConfig,
}

pub fn run_filter(
    traj: &Trajectory,
    model: &SystemModel,
    quantizer: &Quantizer,
    estimator: &Estimator,
    settings: &FilterSettings,
) -> Result<RunRecord> {
    run_filter_with(traj, model, quantizer, estimator, settings, &Sequential)
}

/// [`run_filter`] with the component bank mapped by `exec`.
pub fn run_filter_with<E: Executor>(
    traj: &Trajectory,
    model: &SystemModel,
    quantizer: &Quantizer,
    estimator: &Estimator,
    settings: &FilterSettings,
    exec: &E,
) -> Result<RunRecord> {
    let steps = traj.len();
    if steps < 2 {
        return Err(Error::Argument("a run needs at least two steps".into()));
    }
    let mut rec = RunRecord {
        estimator: estimator.tag(),
        x_hat: Vec::with_capacity(steps),
        d_hat: Vec::with_capacity(steps - 1),
        components: Vec::with_capacity(steps),
        weight_sums: Vec::with_capacity(steps),
        mse_x: Vec::new(),
        mse_d: Vec::new(),
        trajectory_hash: traj.measurement_hash(),
        wallclock_ms: None,
    };
    let lik_at = |t: usize| {
        settings
            .likelihood
            .for_level(quantizer, &traj.y[t], model.r())
    };
    let push_mixture = |rec: &mut RunRecord, b: &MixtureBelief, t: usize| {
        rec.x_hat.push(b.state_mean());
        if t > 0 {
            if let Some(d) = b.input_mean() {
                rec.d_hat.push(d);
            }
        }
        rec.components.push(b.len());
        rec.weight_sums.push(b.weight_sum());
    };

    match estimator {
        Estimator::GsfLimit => {
            let mut belief = gsf_limit_init(model);
            for t in 0..steps {
                let step = || -> Result<MixtureBelief> {
                    let b = gsf_limit_step(&belief, &lik_at(t)?, model, exec)?;
                    reduce_joint(&b, &settings.reduction)
                };
                belief = step().map_err(|e| e.at_step(t + 1))?;
                push_mixture(&mut rec, &belief, t);
            }
        }
        Estimator::GsfPrior(prior) => {
            let mut belief = gsf_init(model, prior);
            for t in 0..steps {
                let step = || -> Result<MixtureBelief> {
                    let pred = if t == 0 {
                        belief.clone()
                    } else {
                        gsf_time_update(&belief, model, prior)?
                    };
                    let b = gsf_measurement_update(&pred, &lik_at(t)?, model, prior, exec)?;
                    reduce_joint(&b, &settings.reduction)
                };
                belief = step().map_err(|e| e.at_step(t + 1))?;
                push_mixture(&mut rec, &belief, t);
            }
        }
        Estimator::Lti => {
            let mut belief = lti_sise_init(model);
            for t in 0..steps {
                belief = lti_sise_step(&belief, &traj.y[t], model).map_err(|e| e.at_step(t + 1))?;
                rec.x_hat.push(belief.x_hat.clone());
                if let Some(d) = &belief.d_hat {
                    rec.d_hat.push(d.clone());
                }
                rec.components.push(1);
                rec.weight_sums.push(1.0);
            }
        }
    }
    if rec.d_hat.len() != steps - 1 {
        return Err(Error::Stage("input estimate series has the wrong length"));
    }
    rec.mse_x = mse(&rec.x_hat, &traj.x);
    rec.mse_d = mse(&rec.d_hat, &traj.d[..steps - 1]);
    Ok(rec)
}

/// Per-coordinate mean squared error over aligned series.
pub fn mse(estimates: &[Vector], truth: &[Vector]) -> Vec<f64> {
    let dim = truth.first().map_or(0, |v| v.len());
    let mut acc = alloc::vec![0.0; dim];
    for (e, x) in estimates.iter().zip(truth) {
        for (k, a) in acc.iter_mut().enumerate() {
            let d = e[k] - x[k];
            *a += d * d;
        }
    }
    let count = estimates.len().min(truth.len()).max(1) as f64;
    acc.iter().map(|a| a / count).collect()
}

/// Box-plot statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data (`(N-1) p` rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            min: s[0],
            q25: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q75: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

pub const SEED_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn realization_seed(master: u64, run: usize) -> u64 {
    splitmix64_mix(master.wrapping_add((run as u64).wrapping_add(1).wrapping_mul(SEED_GAMMA)))
}

/// One step size of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub delta: f64,
    pub quantizer: Quantizer,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: SystemModel,
    pub input_law: InputLaw,
    pub cells: Vec<SweepCell>,
    pub estimators: Vec<Estimator>,
    pub settings: FilterSettings,
    pub steps: usize,
    pub runs: usize,
    pub master_seed: u64,
}

/// Fraction of failed realizations above which the experiment fails.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub estimator: &'static str,
    pub delta: f64,
    pub run: usize,
    pub seed: u64,
    pub mse_x: Vec<f64>,
    pub mse_d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub delta: f64,
    pub run: usize,
    pub seed: u64,
    pub estimator: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub estimator: &'static str,
    pub delta: f64,
    /// `x1..xn`, then `d` (or `d1..dm`).
    pub signal: String,
    pub stats: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloTable {
    pub state_dim: usize,
    pub input_dim: usize,
    /// Successful runs, ordered by step size, run, then estimator.
    pub rows: Vec<RunRow>,
    pub failures: Vec<RunFailure>,
    pub summary: Vec<CellSummary>,
}

impl MonteCarloTable {
    pub fn signal_names(&self) -> Vec<String> {
        signal_names(self.state_dim, self.input_dim)
    }

    pub fn summary_for(&self, estimator: &str, delta: f64, signal: &str) -> Option<&Summary> {
        self.summary
            .iter()
            .find(|c| c.estimator == estimator && c.delta == delta && c.signal == signal)
            .map(|c| &c.stats)
    }
}

pub fn signal_names(n: usize, m: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    if m == 1 {
        names.push("d".into());
    } else {
        names.extend((1..=m).map(|k| format!("d{k}")));
    }
    names
}

type Outcome = core::result::Result<Vec<RunRecord>, (&'static str, Error)>;

/// Runs every estimator on every (step size, realization) pair.
///
/// A realization where any estimator fails is dropped for all of them, so the
/// remaining rows stay paired.
pub fn monte_carlo<E: Executor>(exp: &Experiment, exec: &E) -> Result<MonteCarloTable> {
    if exp.cells.is_empty() {
        return Err(Error::Argument("step size grid is empty".into()));
    }
    if exp.estimators.is_empty() {
        return Err(Error::Argument("no estimators selected".into()));
    }
    if exp.runs == 0 {
        return Err(Error::Argument("runs must be at least 1".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..exp.cells.len())
        .flat_map(|c| (0..exp.runs).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Outcome> = exec.map(&tasks, |&(c, run)| {
        let cell = &exp.cells[c];
        let seed = realization_seed(exp.master_seed, run);
        let traj = simulate_trajectory(
            &exp.model,
            Some(&cell.quantizer),
            &exp.input_law,
            exp.steps,
            seed,
        )
        .map_err(|e| ("simulation", e))?;
        let expected = traj.measurement_hash();
        exp.estimators
            .iter()
            .map(|est| {
                let rec = run_filter(&traj, &exp.model, &cell.quantizer, est, &exp.settings)
                    .map_err(|e| (est.tag(), e))?;
                if rec.trajectory_hash != expected {
                    return Err((
                        est.tag(),
                        Error::Experiment("estimators saw different measurements".into()),
                    ));
                }
                Ok(rec)
            })
            .collect()
    });

    let mut table = MonteCarloTable {
        state_dim: exp.model.n(),
        input_dim: exp.model.m(),
        rows: Vec::with_capacity(tasks.len() * exp.estimators.len()),
        failures: Vec::new(),
        summary: Vec::new(),
    };
    for (&(c, run), outcome) in tasks.iter().zip(outcomes) {
        let delta = exp.cells[c].delta;
        let seed = realization_seed(exp.master_seed, run);
        match outcome {
            Ok(records) => table.rows.extend(records.into_iter().map(|rec| RunRow {
                estimator: rec.estimator,
                delta,
                run,
                seed,
                mse_x: rec.mse_x,
                mse_d: rec.mse_d,
            })),
            Err((estimator, e)) => table.failures.push(RunFailure {
                delta,
                run,
                seed,
                estimator,
                message: format!("{e}"),
            }),
        }
    }
    let allowed = MAX_FAILURE_FRACTION * tasks.len() as f64;
    if table.failures.len() as f64 > allowed {
        let first = &table.failures[0];
        return Err(Error::Experiment(format!(
            "{} of {} realizations failed; first: delta={} run={} {}: {}",
            table.failures.len(),
            tasks.len(),
            first.delta,
            first.run,
            first.estimator,
            first.message
        )));
    }

    let names = table.signal_names();
    for est in &exp.estimators {
        for cell in &exp.cells {
            let rows: Vec<&RunRow> = table
                .rows
                .iter()
                .filter(|r| r.estimator == est.tag() && r.delta == cell.delta)
                .collect();
            for (k, name) in names.iter().enumerate() {
                let values: Vec<f64> = rows
                    .iter()
                    .map(|r| {
                        if k < table.state_dim {
                            r.mse_x[k]
                        } else {
                            r.mse_d[k - table.state_dim]
                        }
                    })
                    .collect();
                if let Some(stats) = Summary::of(&values) {
                    table.summary.push(CellSummary {
                        estimator: est.tag(),
                        delta: cell.delta,
                        signal: name.clone(),
                        stats,
                    });
                }
            }
        }
    }
    Ok(table)
}
