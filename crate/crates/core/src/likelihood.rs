//! Gaussian-mixture approximation of the quantized observation model.
//!
//! For an observed level `y` with cell `J`, the likelihood of the state is
//! `P(z in J | x) = ∫_J N(z; Cx, R) dz`. Tensor-product Gauss-Legendre
//! quadrature over `J` rewrites this as
//!
//! ```text
//! Σ_k φ_k N(ζ_k; Cx + μ_k, R)
//! ```
//!
//! which is a Gaussian mixture in the state and slots directly into the
//! filter recursions. The nodes are the affine image of the reference rule on
//! the cell, so `μ_k` is always zero here; the field is kept so the filters
//! follow the general form.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_logpdf_residual, spd_cholesky};
use crate::model::{Hyperrectangle, Quantizer};
use crate::{Matrix, Vector};

pub const MAX_ORDER: usize = 32;
pub const DEFAULT_ORDER: usize = 5;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_{-1}^{1} f ≈ Σ w_i f(ξ_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre `P_n(x)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes are the roots of `P_order`, found by Newton iteration from the
/// Tricomi initial guesses and mirrored so the rule is exactly symmetric.
pub fn gauss_legendre_rule(order: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::QuadratureOrder(order));
    }
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let half = order.div_ceil(2);
    for i in 0..half {
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x runs from the largest root downwards
        nodes[order - 1 - i] = x;
        nodes[i] = -x;
        weights[order - 1 - i] = w;
        weights[i] = w;
    }
    if order % 2 == 1 {
        let mid = order / 2;
        nodes[mid] = 0.0;
        let (_, d) = legendre_with_derivative(order, 0.0);
        weights[mid] = 2.0 / (d * d);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// How semi-infinite cell edges are made finite before quadrature.
///
/// An infinite lower edge becomes `min(upper, range_lo) - W` and an infinite
/// upper edge `max(lower, range_hi) + W`, where
/// `W = width_sigmas * sqrt(max diag R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPolicy {
    pub width_sigmas: f64,
    /// Plausible output range per dimension; `None` means `[-1e4, 1e4]`.
    pub range: Option<(Vector, Vector)>,
}

pub const DEFAULT_TRUNCATION_SIGMAS: f64 = 8.0;
pub const DEFAULT_OUTPUT_RANGE: f64 = 1e4;

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            width_sigmas: DEFAULT_TRUNCATION_SIGMAS,
            range: None,
        }
    }
}

impl TruncationPolicy {
    pub fn truncate(&self, cell: &Hyperrectangle, r: &Matrix) -> Hyperrectangle {
        let max_var = r.diagonal().iter().copied().fold(0.0_f64, f64::max);
        let w = self.width_sigmas * libm::sqrt(max_var);
        let mut out = cell.clone();
        for i in 0..cell.dim() {
            let (range_lo, range_hi) = match &self.range {
                Some((lo, hi)) => (lo[i], hi[i]),
                None => (-DEFAULT_OUTPUT_RANGE, DEFAULT_OUTPUT_RANGE),
            };
            let (lo, hi) = (cell.lower[i], cell.upper[i]);
            if lo == f64::NEG_INFINITY {
                let anchor = if hi.is_finite() {
                    hi.min(range_lo)
                } else {
                    range_lo
                };
                out.lower[i] = anchor - w;
            }
            if hi == f64::INFINITY {
                let anchor = if lo.is_finite() {
                    lo.max(range_hi)
                } else {
                    range_hi
                };
                out.upper[i] = anchor + w;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodComponent {
    pub phi: f64,
    pub zeta: Vector,
    pub mu: Vector,
}

/// `p(y | x) ≈ Σ_k φ_k N(ζ_k; Cx + μ_k, R)` for one observed level.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodGmm {
    pub components: Vec<LikelihoodComponent>,
    pub r: Matrix,
}

impl LikelihoodGmm {
    /// Single node with `φ = 1`, `ζ = y`, `μ = 0`: the likelihood of an
    /// unquantized linear measurement.
    pub fn linear(y: &Vector, r: &Matrix) -> Self {
        Self {
            components: vec![LikelihoodComponent {
                phi: 1.0,
                zeta: y.clone(),
                mu: Vector::zeros(y.len()),
            }],
            r: r.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.phi).sum()
    }

    /// Evaluates the mixture at output mean `center`, i.e. the quadrature
    /// estimate of `∫_J N(z; center, R) dz`.
    pub fn evaluate(&self, center: &Vector) -> Result<f64> {
        let ch = spd_cholesky(&self.r, "R")?;
        Ok(self
            .components
            .iter()
            .map(|c| c.phi * libm::exp(gaussian_logpdf_residual(&(&c.zeta - center - &c.mu), &ch)))
            .sum())
    }
}

pub fn cell_likelihood_gmm(
    cell: &Hyperrectangle,
    rule: &QuadratureRule,
    r: &Matrix,
    truncation: &TruncationPolicy,
) -> Result<LikelihoodGmm> {
    let p = cell.dim();
    if r.nrows() != p || r.ncols() != p {
        return Err(Error::dimension("R", (p, p), r.shape()));
    }
    let finite = truncation.truncate(cell, r);
    let mut mid = Vector::zeros(p);
    let mut half = Vector::zeros(p);
    for d in 0..p {
        let width = finite.upper[d] - finite.lower[d];
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Geometry { dim: d, width });
        }
        mid[d] = 0.5 * (finite.upper[d] + finite.lower[d]);
        half[d] = 0.5 * width;
    }

    let k1 = rule.order();
    let count = k1.pow(p as u32);
    let mut components = Vec::with_capacity(count);
    let mut node = vec![0usize; p];
    for _ in 0..count {
        let mut zeta = Vector::zeros(p);
        let mut phi = 1.0;
        for d in 0..p {
            zeta[d] = mid[d] + half[d] * rule.nodes[node[d]];
            phi *= half[d] * rule.weights[node[d]];
        }
        components.push(LikelihoodComponent {
            phi,
            zeta,
            mu: Vector::zeros(p),
        });
        // odometer, last dimension fastest
        for d in (0..p).rev() {
            node[d] += 1;
            if node[d] < k1 {
                break;
            }
            node[d] = 0;
        }
    }
    Ok(LikelihoodGmm {
        components,
        r: r.clone(),
    })
}

/// Quadrature rule plus truncation settings, built once per experiment.
#[derive(Debug, Clone)]
pub struct LikelihoodBuilder {
    pub rule: QuadratureRule,
    pub truncation: TruncationPolicy,
}

impl LikelihoodBuilder {
    pub fn new(order: usize, truncation: TruncationPolicy) -> Result<Self> {
        Ok(Self {
            rule: gauss_legendre_rule(order)?,
            truncation,
        })
    }

    pub fn for_level(
        &self,
        quantizer: &Quantizer,
        y: &Vector,
        r: &Matrix,
    ) -> Result<LikelihoodGmm> {
        let cell = quantizer.cell_of_level(y)?;
        cell_likelihood_gmm(&cell, &self.rule, r, &self.truncation)
    }
}

/// `P(a <= X < b)` for `X ~ N(mean, sd^2)`, evaluated on the side of the
/// distribution that avoids cancellation.
pub fn normal_interval_probability(a: f64, b: f64, mean: f64, sd: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let u = (a - mean) / (sd * SQRT_2);
    let v = (b - mean) / (sd * SQRT_2);
    let p = if u >= 0.0 {
        0.5 * (libm::erfc(u) - libm::erfc(v))
    } else if v <= 0.0 {
        0.5 * (libm::erfc(-v) - libm::erfc(-u))
    } else {
        1.0 - 0.5 * libm::erfc(v) - 0.5 * libm::erfc(-u)
    };
    p.max(0.0)
}

fn is_diagonal(m: &Matrix) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Integration tolerance of the correlated-noise path.
pub const EXACT_INTEGRATION_TOLERANCE: f64 = 1e-11;

/// `∫_J N(z; center, R) dz`.
///
/// With `p = 1` or diagonal `R` this is a product of Gaussian CDF
/// differences. Otherwise the first coordinate is integrated adaptively
/// (Gauss-Kronrod 7/15) against the conditional probability of the rest.
pub fn likelihood_eval_exact(cell: &Hyperrectangle, center: &Vector, r: &Matrix) -> Result<f64> {
    let p = cell.dim();
    if center.len() != p {
        return Err(Error::dimension("center", (p, 1), (center.len(), 1)));
    }
    if r.nrows() != p || r.ncols() != p {
        return Err(Error::dimension("R", (p, p), r.shape()));
    }
    box_probability(&cell.lower, &cell.upper, center, r)
}

fn box_probability(lower: &Vector, upper: &Vector, mean: &Vector, cov: &Matrix) -> Result<f64> {
    let p = mean.len();
    if p == 0 {
        return Ok(1.0);
    }
    if cov.iter().any(|v| !v.is_finite()) || (0..p).any(|i| cov[(i, i)] <= 0.0) {
        return Err(Error::Conditioning { what: "R" });
    }
    if p == 1 || is_diagonal(cov) {
        return Ok((0..p)
            .map(|i| {
                normal_interval_probability(lower[i], upper[i], mean[i], libm::sqrt(cov[(i, i)]))
            })
            .product());
    }

    let s00 = cov[(0, 0)];
    let sd0 = libm::sqrt(s00);
    let rest = p - 1;
    let cross = cov.view((1, 0), (rest, 1)).into_owned();
    let cond_cov = cov.view((1, 1), (rest, rest)).into_owned() - &cross * cross.transpose() / s00;
    let lo_rest = lower.rows(1, rest).into_owned();
    let hi_rest = upper.rows(1, rest).into_owned();
    let mean_rest = mean.rows(1, rest).into_owned();

    let span = 40.0 * sd0;
    let a = lower[0].max(mean[0] - span);
    let b = upper[0].min(mean[0] + span);
    if a >= b {
        return Ok(0.0);
    }
    let integrand = |z0: f64| -> Result<f64> {
        let dz = z0 - mean[0];
        let density =
            libm::exp(-0.5 * dz * dz / s00) / (sd0 * libm::sqrt(2.0 * core::f64::consts::PI));
        let cond_mean = &mean_rest + &cross * (dz / s00);
        Ok(density * box_probability(&lo_rest, &hi_rest, &cond_mean, &cond_cov)?)
    };
    adaptive_gauss_kronrod(&integrand, a, b, EXACT_INTEGRATION_TOLERANCE)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx)? + f(c + dx)?;
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[i / 2] * pair;
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

fn adaptive_gauss_kronrod<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let mut pending = vec![(a, b)];
    let mut total = 0.0;
    let mut processed = 0;
    let full = b - a;
    while let Some((lo, hi)) = pending.pop() {
        processed += 1;
        let (value, err) = gauss_kronrod_15(f, lo, hi)?;
        let local_tol = tol * (hi - lo) / full;
        if err <= local_tol.max(1e-300) || hi - lo < 1e-12 * full {
            total += value;
            continue;
        }
        if processed > MAX_INTERVALS {
            return Err(Error::Integration { estimate: err });
        }
        let mid = 0.5 * (lo + hi);
        pending.push((mid, hi));
        pending.push((lo, mid));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_order_rules() {
        let r1 = gauss_legendre_rule(1).unwrap();
        assert_eq!(r1.nodes(), &[0.0]);
        assert_relative_eq!(r1.weights()[0], 2.0, epsilon = 1e-15);

        let r2 = gauss_legendre_rule(2).unwrap();
        let s = 1.0 / 3.0_f64.sqrt();
        assert_relative_eq!(r2.nodes()[0], -s, epsilon = 1e-15);
        assert_relative_eq!(r2.nodes()[1], s, epsilon = 1e-15);
        assert_relative_eq!(r2.weights()[0], 1.0, epsilon = 1e-14);

        let r3 = gauss_legendre_rule(3).unwrap();
        let s = (3.0_f64 / 5.0).sqrt();
        assert_relative_eq!(r3.nodes()[0], -s, epsilon = 1e-15);
        assert_eq!(r3.nodes()[1], 0.0);
        assert_relative_eq!(r3.weights()[0], 5.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(r3.weights()[1], 8.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn order_bounds() {
        assert!(matches!(
            gauss_legendre_rule(0),
            Err(Error::QuadratureOrder(0))
        ));
        assert!(gauss_legendre_rule(33).is_err());
        assert!(gauss_legendre_rule(32).is_ok());
    }

    #[test]
    fn rule_invariants_all_orders() {
        for order in 1..=MAX_ORDER {
            let rule = gauss_legendre_rule(order).unwrap();
            let sum: f64 = rule.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-12, "order {order}: Σw = {sum}");
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            for w in rule.nodes().windows(2) {
                assert!(w[0] < w[1]);
            }
            for i in 0..order {
                assert_eq!(rule.nodes()[i], -rule.nodes()[order - 1 - i]);
            }
            // exact up to degree 2K-1
            for deg in 0..(2 * order) {
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                let approx = rule.integrate(|x| libm::pow(x, deg as f64));
                assert!((approx - exact).abs() < 1e-12, "order {order} degree {deg}");
            }
        }
    }

    #[test]
    fn unit_cell_order_three() {
        let rule = gauss_legendre_rule(3).unwrap();
        let r = Matrix::from_element(1, 1, 0.1);
        let gmm = cell_likelihood_gmm(
            &Hyperrectangle::interval(-0.5, 0.5),
            &rule,
            &r,
            &TruncationPolicy::default(),
        )
        .unwrap();
        let zeta: Vec<f64> = gmm.components.iter().map(|c| c.zeta[0]).collect();
        let phi: Vec<f64> = gmm.components.iter().map(|c| c.phi).collect();
        let s = 0.5 * (0.6_f64).sqrt();
        assert_relative_eq!(zeta[0], -s, epsilon = 1e-15);
        assert_eq!(zeta[1], 0.0);
        assert_relative_eq!(zeta[2], s, epsilon = 1e-15);
        assert_relative_eq!(zeta[2], 0.3873, epsilon = 1e-4);
        assert_relative_eq!(phi[0], 5.0 / 18.0, epsilon = 1e-14);
        assert_relative_eq!(phi[1], 4.0 / 9.0, epsilon = 1e-14);
        assert!(gmm.components.iter().all(|c| c.mu[0] == 0.0));
    }

    #[test]
    fn weights_sum_to_cell_volume() {
        let rule = gauss_legendre_rule(4).unwrap();
        let r = Matrix::identity(2, 2);
        let cell = Hyperrectangle::new(
            Vector::from_row_slice(&[-1.0, 2.0]),
            Vector::from_row_slice(&[2.0, 2.5]),
        )
        .unwrap();
        let gmm = cell_likelihood_gmm(&cell, &rule, &r, &TruncationPolicy::default()).unwrap();
        assert_eq!(gmm.len(), 16);
        assert_relative_eq!(gmm.total_weight(), 3.0 * 0.5, epsilon = 1e-13);
    }

    #[test]
    fn order_convergence_on_unit_cell() {
        // errors frozen from an independent scipy evaluation:
        // order 3 -> 5.61e-3, order 5 -> 2.70e-5, order 10 -> 2.63e-12
        let r = Matrix::from_element(1, 1, 0.1);
        let cell = Hyperrectangle::interval(-0.5, 0.5);
        let exact = likelihood_eval_exact(&cell, &Vector::zeros(1), &r).unwrap();
        let err = |order| {
            let rule = gauss_legendre_rule(order).unwrap();
            let gmm = cell_likelihood_gmm(&cell, &rule, &r, &TruncationPolicy::default()).unwrap();
            (gmm.evaluate(&Vector::zeros(1)).unwrap() - exact).abs()
        };
        assert_relative_eq!(err(3), 5.61e-3, max_relative = 1e-2);
        assert!(err(5) < 1e-4);
        assert!(err(10) < 1e-8);
    }

    #[test]
    fn exact_probability_trivial_cases() {
        let r = Matrix::from_element(1, 1, 1.0);
        let all = Hyperrectangle::interval(f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!(
            likelihood_eval_exact(&all, &Vector::from_element(1, 3.0), &r).unwrap(),
            1.0
        );
        let half = Hyperrectangle::interval(0.0, f64::INFINITY);
        assert_relative_eq!(
            likelihood_eval_exact(&half, &Vector::zeros(1), &r).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn interval_probability_is_accurate_in_tails() {
        // P(8 <= Z < 9) for a standard normal: 6.22096057427178e-16 - 1.12858840595384e-19
        let p = normal_interval_probability(8.0, 9.0, 0.0, 1.0);
        assert_relative_eq!(
            p,
            6.220960574271784e-16 - 1.128588405953840e-19,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            normal_interval_probability(-9.0, -8.0, 0.0, 1.0),
            p,
            max_relative = 1e-14
        );
    }

    #[test]
    fn adaptive_path_reduces_to_product_form() {
        // with zero correlation the adaptive path must reproduce the product form
        let cell = Hyperrectangle::new(
            Vector::from_row_slice(&[-0.5, -1.0]),
            Vector::from_row_slice(&[0.7, 0.3]),
        )
        .unwrap();
        let center = Vector::from_row_slice(&[0.1, -0.2]);
        let r = Matrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.3]);
        let diag = likelihood_eval_exact(&cell, &center, &r).unwrap();
        let tiny = Matrix::from_row_slice(2, 2, &[0.2, 1e-300, 1e-300, 0.3]);
        let adaptive = likelihood_eval_exact(&cell, &center, &tiny).unwrap();
        assert_relative_eq!(diag, adaptive, max_relative = 1e-9);
    }

    #[test]
    fn correlated_orthant_probability() {
        // P(X >= 0, Y >= 0) for correlation ρ is 1/4 + asin(ρ)/(2π)
        let rho: f64 = 0.6;
        let r = Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let cell =
            Hyperrectangle::new(Vector::zeros(2), Vector::from_element(2, f64::INFINITY)).unwrap();
        let p = likelihood_eval_exact(&cell, &Vector::zeros(2), &r).unwrap();
        let expected = 0.25 + libm::asin(rho) / (2.0 * core::f64::consts::PI);
        assert_relative_eq!(p, expected, epsilon = 1e-9);
    }

    #[test]
    fn truncation_of_semi_infinite_cells() {
        let r = Matrix::from_element(1, 1, 0.25);
        let policy = TruncationPolicy {
            width_sigmas: 8.0,
            range: Some((Vector::from_element(1, -3.0), Vector::from_element(1, 3.0))),
        };
        let t = policy.truncate(&Hyperrectangle::interval(f64::NEG_INFINITY, 0.0), &r);
        assert_relative_eq!(t.lower[0], -3.0 - 4.0, epsilon = 1e-15);
        assert_eq!(t.upper[0], 0.0);
        let t = policy.truncate(&Hyperrectangle::interval(5.0, f64::INFINITY), &r);
        assert_relative_eq!(t.upper[0], 9.0, epsilon = 1e-15);
        let t =
            TruncationPolicy::default().truncate(&Hyperrectangle::interval(0.0, f64::INFINITY), &r);
        assert_relative_eq!(t.upper[0], 1e4 + 4.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let rule = gauss_legendre_rule(2).unwrap();
        let r = Matrix::from_element(1, 1, 1.0);
        let err = cell_likelihood_gmm(
            &Hyperrectangle::interval(1.0, 1.0),
            &rule,
            &r,
            &TruncationPolicy::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Geometry { dim: 0, .. }));
    }
}
