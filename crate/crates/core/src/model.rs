//! System description, quantizer geometry and the extended-state model.
//!
//! The system is
//!
//! ```text
//! x[t+1] = A x[t] + G d[t] + w[t],    w ~ N(0, Q)
//! z[t]   = C x[t] + v[t],             v ~ N(0, R)
//! y[t]   = q(z[t])
//! ```
//!
//! with `x[1] ~ N(mu1, P1)`. Only `y` is observed. Estimating `d` from `y`
//! requires `rank(CG) = m`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, is_square, min_eigenvalue, numerical_rank, symmetrize};
use crate::{Matrix, Vector};

/// Absolute symmetry tolerance, scaled by `max(1, max |m_ij|)`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: Matrix,
    g: Matrix,
    c: Matrix,
    q: Matrix,
    r: Matrix,
    mu1: Vector,
    p1: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite(&'static str),
    NotSymmetric {
        name: &'static str,
        asymmetry: f64,
    },
    NotPsd {
        name: &'static str,
        min_eigenvalue: f64,
    },
    NotPd {
        name: &'static str,
        min_eigenvalue: f64,
    },
    RankDeficient {
        rank: usize,
        required: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(name) => write!(f, "{name} has non-finite entries"),
            Violation::NotSymmetric { name, asymmetry } => {
                write!(f, "{name} not symmetric (asymmetry {asymmetry:e})")
            }
            Violation::NotPsd {
                name,
                min_eigenvalue,
            } => write!(
                f,
                "{name} not positive semidefinite (min eigenvalue {min_eigenvalue:e})"
            ),
            Violation::NotPd {
                name,
                min_eigenvalue,
            } => write!(
                f,
                "{name} not positive definite (min eigenvalue {min_eigenvalue:e})"
            ),
            Violation::RankDeficient { rank, required } => {
                write!(f, "rank(CG)={rank} < {required}")
            }
        }
    }
}

/// Outcome of [`SystemModel::validate`]: empty means the model is usable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_shape(what: &'static str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dimension(what, (rows, cols), m.shape()));
    }
    Ok(())
}

fn scale_of(m: &Matrix) -> f64 {
    m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}

fn check_covariance(name: &'static str, m: &Matrix, definite: bool, out: &mut Vec<Violation>) {
    if m.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFinite(name));
        return;
    }
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOLERANCE * scale_of(m) {
        out.push(Violation::NotSymmetric {
            name,
            asymmetry: asym,
        });
        return;
    }
    let min_eig = min_eigenvalue(m);
    if definite {
        if min_eig <= 0.0 {
            out.push(Violation::NotPd {
                name,
                min_eigenvalue: min_eig,
            });
        }
    } else if min_eig < -SYMMETRY_TOLERANCE * scale_of(m) {
        out.push(Violation::NotPsd {
            name,
            min_eigenvalue: min_eig,
        });
    }
}

impl SystemModel {
    /// Assembles a model after checking that all shapes agree. Invariants are
    /// not checked here; see [`SystemModel::validate`] and
    /// [`SystemModel::checked`].
    pub fn new(
        a: Matrix,
        g: Matrix,
        c: Matrix,
        q: Matrix,
        r: Matrix,
        mu1: Vector,
        p1: Matrix,
    ) -> Result<Self> {
        if !is_square(&a) {
            return Err(Error::dimension("A", (a.nrows(), a.nrows()), a.shape()));
        }
        let n = a.nrows();
        if g.nrows() != n {
            return Err(Error::dimension("G", (n, g.ncols()), g.shape()));
        }
        if c.ncols() != n {
            return Err(Error::dimension("C", (c.nrows(), n), c.shape()));
        }
        let p = c.nrows();
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, p, p)?;
        check_shape("P1", &p1, n, n)?;
        if mu1.len() != n {
            return Err(Error::dimension("mu1", (n, 1), (mu1.len(), 1)));
        }
        Ok(Self {
            a,
            g,
            c,
            q,
            r,
            mu1,
            p1,
        })
    }

    /// Shape check, invariant check and symmetrization in one go.
    pub fn checked(
        a: Matrix,
        g: Matrix,
        c: Matrix,
        q: Matrix,
        r: Matrix,
        mu1: Vector,
        p1: Matrix,
    ) -> Result<Self> {
        let mut model = Self::new(a, g, c, q, r, mu1, p1)?;
        let report = model.validate();
        if !report.is_ok() {
            return Err(Error::Invalid(report));
        }
        symmetrize(&mut model.q);
        symmetrize(&mut model.r);
        symmetrize(&mut model.p1);
        Ok(model)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (name, m) in [("A", &self.a), ("G", &self.g), ("C", &self.c)] {
            if m.iter().any(|v| !v.is_finite()) {
                violations.push(Violation::NonFinite(name));
            }
        }
        if self.mu1.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::NonFinite("mu1"));
        }
        check_covariance("Q", &self.q, false, &mut violations);
        check_covariance("R", &self.r, true, &mut violations);
        check_covariance("P1", &self.p1, false, &mut violations);
        let cg = self.cg();
        if cg.iter().all(|v| v.is_finite()) {
            let rank = numerical_rank(&cg);
            if rank < self.m() {
                violations.push(Violation::RankDeficient {
                    rank,
                    required: self.m(),
                });
            }
        }
        ValidationReport { violations }
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `m`.
    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    /// Output dimension `p`.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn mu1(&self) -> &Vector {
        &self.mu1
    }

    pub fn p1(&self) -> &Matrix {
        &self.p1
    }

    pub fn cg(&self) -> Matrix {
        &self.c * &self.g
    }
}

/// Gaussian i.i.d. prior on the unknown input, `d[t] ~ N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPrior {
    mean: Vector,
    cov: Matrix,
}

impl InputPrior {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        let m = mean.len();
        check_shape("D", &cov, m, m)?;
        let mut violations = Vec::new();
        if mean.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::NonFinite("input prior mean"));
        }
        check_covariance("D", &cov, true, &mut violations);
        if !violations.is_empty() {
            return Err(Error::Invalid(ValidationReport { violations }));
        }
        let mut cov = cov;
        symmetrize(&mut cov);
        Ok(Self { mean, cov })
    }

    /// `N(mean, scale * I)`.
    pub fn isotropic(mean: Vector, scale: f64) -> Result<Self> {
        let m = mean.len();
        Self::new(mean, Matrix::identity(m, m) * scale)
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }
}

/// Joint model of `[x[t]; d[t-1]]` under an [`InputPrior`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedModel {
    pub a_tilde: Matrix,
    pub b_tilde: Vector,
    pub q_tilde: Matrix,
    pub c_tilde: Matrix,
    /// Measurement noise covariance, unchanged by the extension.
    pub r: Matrix,
}

/// Builds the block transition of the extended state:
///
/// ```text
/// A~ = [A 0; 0 0],  b~ = [G d; d],  Q~ = [Q + G D G'  G D; D G'  D],  C~ = [C 0]
/// ```
pub fn build_extended(model: &SystemModel, prior: &InputPrior) -> Result<ExtendedModel> {
    let (n, m, p) = (model.n(), model.m(), model.p());
    if prior.mean().len() != m {
        return Err(Error::dimension(
            "input prior",
            (m, 1),
            (prior.mean().len(), 1),
        ));
    }
    let g = model.g();
    let d = prior.cov();
    let gd = g * d;

    let mut a_tilde = Matrix::zeros(n + m, n + m);
    a_tilde.view_mut((0, 0), (n, n)).copy_from(model.a());

    let mut b_tilde = Vector::zeros(n + m);
    b_tilde.rows_mut(0, n).copy_from(&(g * prior.mean()));
    b_tilde.rows_mut(n, m).copy_from(prior.mean());

    let mut q_tilde = Matrix::zeros(n + m, n + m);
    q_tilde
        .view_mut((0, 0), (n, n))
        .copy_from(&(model.q() + &gd * g.transpose()));
    q_tilde.view_mut((0, n), (n, m)).copy_from(&gd);
    q_tilde.view_mut((n, 0), (m, n)).copy_from(&gd.transpose());
    q_tilde.view_mut((n, n), (m, m)).copy_from(d);
    symmetrize(&mut q_tilde);

    let mut c_tilde = Matrix::zeros(p, n + m);
    c_tilde.view_mut((0, 0), (p, n)).copy_from(model.c());

    Ok(ExtendedModel {
        a_tilde,
        b_tilde,
        q_tilde,
        c_tilde,
        r: model.r().clone(),
    })
}

/// Axis-aligned box `[lower, upper)`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperrectangle {
    pub lower: Vector,
    pub upper: Vector,
}

impl Hyperrectangle {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dimension(
                "cell upper bound",
                (lower.len(), 1),
                (upper.len(), 1),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional interval `[lower, upper)`.
    pub fn interval(lower: f64, upper: f64) -> Self {
        Self {
            lower: Vector::from_element(1, lower),
            upper: Vector::from_element(1, upper),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, z: &Vector) -> bool {
        z.len() == self.dim()
            && self
                .lower
                .iter()
                .zip(self.upper.iter())
                .zip(z.iter())
                .all(|((&lo, &hi), &v)| lo <= v && v < hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower
            .iter()
            .chain(self.upper.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCell {
    pub bounds: Hyperrectangle,
    pub level: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Quantizer {
    /// `y = Δ round(z / Δ)` per dimension, cells `[η - Δ/2, η + Δ/2)`.
    Uniform { steps: Vector },
    /// Finite list of disjoint cells covering the whole output space.
    Partition { cells: Vec<PartitionCell> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CellIndex {
    /// Integer multiple of the step, per dimension.
    Grid(Vec<i64>),
    /// Position in the partition's cell list.
    Listed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub level: Vector,
    pub index: CellIndex,
}

/// Cap on the number of elementary boxes examined by the coverage check.
const MAX_COVERAGE_PROBES: usize = 1 << 20;

impl Quantizer {
    pub fn uniform(steps: Vector) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Quantizer(
                "uniform quantizer needs at least one step".into(),
            ));
        }
        if let Some(bad) = steps.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Quantizer(format!(
                "step {bad} must be finite and positive"
            )));
        }
        Ok(Quantizer::Uniform { steps })
    }

    /// Same step `delta` in each of `p` dimensions.
    pub fn uniform_scalar(delta: f64, p: usize) -> Result<Self> {
        Self::uniform(Vector::from_element(p, delta))
    }

    /// Validates dimensions, bounds, level uniqueness, disjointness and
    /// coverage of `R^p`.
    pub fn partition(cells: Vec<PartitionCell>) -> Result<Self> {
        let Some(first) = cells.first() else {
            return Err(Error::Quantizer("partition has no cells".into()));
        };
        let p = first.bounds.dim();
        for (i, cell) in cells.iter().enumerate() {
            if cell.bounds.dim() != p || cell.level.len() != p {
                return Err(Error::Quantizer(format!(
                    "cell {i} has inconsistent dimension"
                )));
            }
            for k in 0..p {
                let (lo, hi) = (cell.bounds.lower[k], cell.bounds.upper[k]);
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(Error::Quantizer(format!(
                        "cell {i} has empty extent [{lo}, {hi}) in dimension {k}"
                    )));
                }
            }
            if cells[..i].iter().any(|c| c.level == cell.level) {
                return Err(Error::Quantizer(format!(
                    "cell {i} repeats an earlier level"
                )));
            }
        }
        check_coverage(&cells, p)?;
        Ok(Quantizer::Partition { cells })
    }

    pub fn dim(&self) -> usize {
        match self {
            Quantizer::Uniform { steps } => steps.len(),
            Quantizer::Partition { cells } => cells[0].bounds.dim(),
        }
    }

    pub fn quantize(&self, z: &Vector) -> Result<Quantized> {
        if z.len() != self.dim() {
            return Err(Error::dimension("output", (self.dim(), 1), (z.len(), 1)));
        }
        match self {
            Quantizer::Uniform { steps } => {
                let mut index = Vec::with_capacity(z.len());
                let mut level = Vector::zeros(z.len());
                for (i, (&zi, &step)) in z.iter().zip(steps.iter()).enumerate() {
                    let k = uniform_index(zi, step);
                    index.push(k);
                    level[i] = k as f64 * step;
                }
                Ok(Quantized {
                    level,
                    index: CellIndex::Grid(index),
                })
            }
            Quantizer::Partition { cells } => cells
                .iter()
                .position(|c| c.bounds.contains(z))
                .map(|i| Quantized {
                    level: cells[i].level.clone(),
                    index: CellIndex::Listed(i),
                })
                .ok_or_else(|| Error::Quantizer(format!("no cell contains {:?}", z.as_slice()))),
        }
    }

    pub fn cell_of_level(&self, y: &Vector) -> Result<Hyperrectangle> {
        if y.len() != self.dim() {
            return Err(Error::dimension("level", (self.dim(), 1), (y.len(), 1)));
        }
        match self {
            Quantizer::Uniform { steps } => {
                let mut lower = Vector::zeros(y.len());
                let mut upper = Vector::zeros(y.len());
                for (i, (&yi, &step)) in y.iter().zip(steps.iter()).enumerate() {
                    let k = libm::round(yi / step);
                    if !k.is_finite() || (yi - k * step).abs() > 1e-9 * step.max(yi.abs()) {
                        return Err(Error::Quantizer(format!(
                            "{yi} is not a multiple of the step {step}"
                        )));
                    }
                    let (lo, hi) = uniform_bounds(k as i64, step);
                    lower[i] = lo;
                    upper[i] = hi;
                }
                Ok(Hyperrectangle { lower, upper })
            }
            Quantizer::Partition { cells } => cells
                .iter()
                .find(|c| &c.level == y)
                .map(|c| c.bounds.clone())
                .ok_or_else(|| Error::Quantizer(format!("unknown level {:?}", y.as_slice()))),
        }
    }
}

fn uniform_bounds(k: i64, step: f64) -> (f64, f64) {
    ((k as f64 - 0.5) * step, (k as f64 + 0.5) * step)
}

/// Index `k` with `z` in `[(k - 1/2) Δ, (k + 1/2) Δ)`, using the same bound
/// expressions as `cell_of_level` so the two agree bit-for-bit.
fn uniform_index(z: f64, step: f64) -> i64 {
    let mut k = libm::floor(z / step + 0.5) as i64;
    loop {
        let (lo, hi) = uniform_bounds(k, step);
        if z < lo {
            k -= 1;
        } else if z >= hi {
            k += 1;
        } else {
            return k;
        }
    }
}

/// Probes one interior point of every elementary box spanned by the cell
/// bounds; each must lie in exactly one cell.
fn check_coverage(cells: &[PartitionCell], p: usize) -> Result<()> {
    let mut probes: Vec<Vec<f64>> = Vec::with_capacity(p);
    for k in 0..p {
        let mut cuts: Vec<f64> = cells
            .iter()
            .flat_map(|c| [c.bounds.lower[k], c.bounds.upper[k]])
            .filter(|v| v.is_finite())
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let points = match (cuts.first(), cuts.last()) {
            (Some(&lo), Some(&hi)) => {
                let mut pts = vec![lo - 1.0];
                pts.extend(cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
                pts.push(hi + 1.0);
                pts
            }
            _ => vec![0.0],
        };
        probes.push(points);
    }
    let total = probes
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
        .filter(|&t| t <= MAX_COVERAGE_PROBES)
        .ok_or_else(|| Error::Quantizer("partition too fine for the coverage check".into()))?;

    let mut point = Vector::zeros(p);
    for flat in 0..total {
        let mut rest = flat;
        for k in 0..p {
            let len = probes[k].len();
            point[k] = probes[k][rest % len];
            rest /= len;
        }
        let hits = cells.iter().filter(|c| c.bounds.contains(&point)).count();
        if hits != 1 {
            let what = if hits == 0 {
                "uncovered"
            } else {
                "covered more than once"
            };
            return Err(Error::Quantizer(format!(
                "point {:?} is {what} by the partition",
                point.as_slice()
            )));
        }
    }
    Ok(())
}

/// Human-readable cell description used in error messages and the CLI.
pub fn describe_cell(cell: &Hyperrectangle) -> String {
    let parts: Vec<String> = cell
        .lower
        .iter()
        .zip(cell.upper.iter())
        .map(|(lo, hi)| format!("[{lo}, {hi})"))
        .collect();
    parts.join(" x ")
}
