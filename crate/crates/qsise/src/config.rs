//! Experiment configuration files.
//!
//! A configuration is a TOML document with one table per block:
//!
//! ```toml
//! [model]
//! A = [[0.9, 0.0], [0.0, 0.7]]
//! G = [[2.0], [1.0]]
//! C = [[1.0, 1.5]]
//! Q = [[0.1, 0.0], [0.0, 0.1]]
//! R = [[0.1]]
//! mu1 = [2.0, 1.0]
//! P1 = [[0.5, 0.0], [0.0, 0.5]]
//!
//! [input]
//! kind = "gaussian"
//! mean = [0.0]
//! cov = [[20.0]]
//!
//! [quantizer]
//! kind = "uniform"
//! delta = 5.0
//!
//! [estimators]
//! use = ["gsf-limit", "lti"]
//!
//! [experiment]
//! steps = 200
//! runs = 100
//! deltas = [1.0, 5.0, 10.0, 15.0]
//! seed = 2024
//! ```
//!
//! Matrices are written row-major as arrays of rows. `likelihood`,
//! `reduction` and `output` are optional and fall back to defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use qsise_core::likelihood::{
    LikelihoodBuilder, DEFAULT_ORDER, DEFAULT_TRUNCATION_SIGMAS, MAX_ORDER,
};
use qsise_core::linalg::{asymmetry, min_eigenvalue};
use qsise_core::model::{PartitionCell, Violation};
use qsise_core::sim::{Estimator, FilterSettings, InputLaw};
use qsise_core::{
    CostSpace, Hyperrectangle, InputPrior, Matrix, Quantizer, ReductionConfig, SystemModel,
    TruncationPolicy, Vector,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", list(.0))]
    Semantic(Vec<FieldError>),
}

fn list(errors: &[FieldError]) -> String {
    let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    format!("invalid configuration:\n  {}", lines.join("\n  "))
}

impl ConfigError {
    pub fn field_errors(&self) -> &[FieldError] {
        match self {
            ConfigError::Semantic(errors) => errors,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSpec {
    pub order: usize,
    pub truncation: TruncationPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub steps: usize,
    pub runs: usize,
    pub deltas: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: SystemModel,
    pub input: InputLaw,
    pub quantizer: Quantizer,
    pub estimators: Vec<Estimator>,
    pub likelihood: LikelihoodSpec,
    pub reduction: ReductionConfig,
    pub experiment: ExperimentSpec,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn filter_settings(&self) -> qsise_core::Result<FilterSettings> {
        Ok(FilterSettings {
            likelihood: LikelihoodBuilder::new(
                self.likelihood.order,
                self.likelihood.truncation.clone(),
            )?,
            reduction: self.reduction,
        })
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }

    /// Prints the configuration back as TOML; parsing the result gives an
    /// equal configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("configuration serializes")
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    if text.trim().is_empty() {
        return Err(ConfigError::Syntax {
            line: 1,
            column: 1,
            message: "empty configuration".into(),
        });
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((1, 1));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let mut errs = Errors::default();
    let config = raw.validate(&mut errs);
    match config {
        Some(c) if errs.0.is_empty() => Ok(c),
        _ => Err(ConfigError::Semantic(errs.0)),
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, column)
}

#[derive(Default)]
struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    input: Option<RawInput>,
    quantizer: Option<RawQuantizer>,
    estimators: Option<RawEstimators>,
    likelihood: Option<RawLikelihood>,
    reduction: Option<RawReduction>,
    experiment: Option<RawExperiment>,
    output: Option<RawOutput>,
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "A")]
    a: Option<Rows>,
    #[serde(rename = "G")]
    g: Option<Rows>,
    #[serde(rename = "C")]
    c: Option<Rows>,
    #[serde(rename = "Q")]
    q: Option<Rows>,
    #[serde(rename = "R")]
    r: Option<Rows>,
    mu1: Option<Vec<f64>>,
    #[serde(rename = "P1")]
    p1: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cov: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawDelta {
    Scalar(f64),
    PerDimension(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    lower: Vec<f64>,
    upper: Vec<f64>,
    level: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuantizer {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<RawDelta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cells: Option<Vec<RawCell>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimators {
    #[serde(rename = "use")]
    kinds: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prior_mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prior_cov: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLikelihood {
    order: Option<usize>,
    truncation_sigmas: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range_lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range_upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReduction {
    max_components: Option<usize>,
    cost_space: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    steps: Option<usize>,
    runs: Option<usize>,
    deltas: Option<Vec<f64>>,
    seed: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    formats: Option<Vec<String>>,
}

fn matrix(path: &str, rows: &Rows, errs: &mut Errors) -> Option<Matrix> {
    let Some(first) = rows.first() else {
        errs.push(path, "matrix has no rows");
        return None;
    };
    let cols = first.len();
    if cols == 0 {
        errs.push(path, "matrix has no columns");
        return None;
    }
    if let Some(k) = rows.iter().position(|r| r.len() != cols) {
        errs.push(
            path,
            format!(
                "row {} has {} entries, expected {cols}",
                k + 1,
                rows[k].len()
            ),
        );
        return None;
    }
    Some(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows_of(m: &Matrix) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn required<'a, T>(value: &'a Option<T>, path: &str, errs: &mut Errors) -> Option<&'a T> {
    if value.is_none() {
        errs.push(path, "missing");
    }
    value.as_ref()
}

fn expect_shape(path: &str, m: &Matrix, rows: usize, cols: usize, errs: &mut Errors) -> bool {
    if m.shape() != (rows, cols) {
        errs.push(
            path,
            format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
        );
        return false;
    }
    true
}

fn check_covariance(path: &str, m: &Matrix, errs: &mut Errors) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        errs.push(path, "non-finite entries");
        return false;
    }
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    if asymmetry(m) > 1e-10 * scale {
        errs.push(path, "not symmetric");
        return false;
    }
    if min_eigenvalue(m) < -1e-10 * scale {
        errs.push(path, "not positive semidefinite");
        return false;
    }
    true
}

impl RawModel {
    fn validate(&self, errs: &mut Errors) -> Option<SystemModel> {
        let before = errs.0.len();
        let get = |name: &str, rows: &Option<Rows>, errs: &mut Errors| {
            let path = format!("model.{name}");
            required(rows, &path, errs).and_then(|r| matrix(&path, r, errs))
        };
        let a = get("A", &self.a, errs);
        let g = get("G", &self.g, errs);
        let c = get("C", &self.c, errs);
        let q = get("Q", &self.q, errs);
        let r = get("R", &self.r, errs);
        let p1 = get("P1", &self.p1, errs);
        let mu1 = required(&self.mu1, "model.mu1", errs).map(|v| Vector::from_column_slice(v));

        let mut n = None;
        if let Some(a) = &a {
            if a.nrows() != a.ncols() {
                errs.push("model.A", "A must be square");
            } else {
                n = Some(a.nrows());
            }
        }
        let mut p = None;
        if let (Some(n), Some(g)) = (n, &g) {
            if g.nrows() != n {
                errs.push(
                    "model.G",
                    format!("G must have {n} rows, found {}", g.nrows()),
                );
            }
        }
        if let Some(c) = &c {
            p = Some(c.nrows());
            if let Some(n) = n {
                if c.ncols() != n {
                    errs.push(
                        "model.C",
                        format!("C must have {n} columns, found {}", c.ncols()),
                    );
                }
            }
        }
        if let Some(n) = n {
            if let Some(q) = &q {
                expect_shape("model.Q", q, n, n, errs);
            }
            if let Some(p1) = &p1 {
                expect_shape("model.P1", p1, n, n, errs);
            }
            if let Some(mu1) = &mu1 {
                if mu1.len() != n {
                    errs.push(
                        "model.mu1",
                        format!("expected {n} entries, found {}", mu1.len()),
                    );
                }
            }
        }
        if let (Some(p), Some(r)) = (p, &r) {
            expect_shape("model.R", r, p, p, errs);
        }
        if let (Some(g), Some(n)) = (&g, n) {
            if g.ncols() > n {
                errs.push("model.G", format!("at most {n} inputs are identifiable"));
            }
        }
        if errs.0.len() != before {
            return None;
        }
        let model = SystemModel::new(a?, g?, c?, q?, r?, mu1?, p1?).ok()?;
        let report = model.validate();
        for v in &report.violations {
            let field = match v {
                Violation::NonFinite(name)
                | Violation::NotSymmetric { name, .. }
                | Violation::NotPsd { name, .. }
                | Violation::NotPd { name, .. } => *name,
                Violation::RankDeficient { .. } => "G",
            };
            errs.push(format!("model.{field}"), v.to_string());
        }
        if !report.is_ok() {
            return None;
        }
        SystemModel::checked(
            model.a().clone(),
            model.g().clone(),
            model.c().clone(),
            model.q().clone(),
            model.r().clone(),
            model.mu1().clone(),
            model.p1().clone(),
        )
        .ok()
    }

    fn from_model(model: &SystemModel) -> Self {
        Self {
            a: Some(rows_of(model.a())),
            g: Some(rows_of(model.g())),
            c: Some(rows_of(model.c())),
            q: Some(rows_of(model.q())),
            r: Some(rows_of(model.r())),
            mu1: Some(model.mu1().iter().copied().collect()),
            p1: Some(rows_of(model.p1())),
        }
    }
}

impl RawInput {
    fn validate(
        &self,
        m: Option<usize>,
        steps: Option<usize>,
        errs: &mut Errors,
    ) -> Option<InputLaw> {
        match self.kind.as_str() {
            "gaussian" => {
                let mean =
                    required(&self.mean, "input.mean", errs).map(|v| Vector::from_column_slice(v));
                let cov = required(&self.cov, "input.cov", errs)
                    .and_then(|r| matrix("input.cov", r, errs));
                if self.values.is_some() {
                    errs.push("input.values", "only used by kind = \"sequence\"");
                }
                let (mean, cov) = (mean?, cov?);
                let mut ok = true;
                if let Some(m) = m {
                    if mean.len() != m {
                        errs.push(
                            "input.mean",
                            format!("expected {m} entries, found {}", mean.len()),
                        );
                        ok = false;
                    }
                    ok &= expect_shape("input.cov", &cov, m, m, errs);
                }
                if mean.iter().any(|v| !v.is_finite()) {
                    errs.push("input.mean", "non-finite entries");
                    ok = false;
                }
                ok &= cov.is_square() && check_covariance("input.cov", &cov, errs);
                ok.then_some(InputLaw::Gaussian { mean, cov })
            }
            "sequence" => {
                if self.mean.is_some() || self.cov.is_some() {
                    errs.push("input", "mean and cov are only used by kind = \"gaussian\"");
                }
                let values = required(&self.values, "input.values", errs)?;
                let mut ok = true;
                if let Some(m) = m {
                    if let Some(k) = values.iter().position(|v| v.len() != m) {
                        errs.push(
                            format!("input.values[{k}]"),
                            format!("expected {m} entries"),
                        );
                        ok = false;
                    }
                }
                if values.iter().flatten().any(|v| !v.is_finite()) {
                    errs.push("input.values", "non-finite entries");
                    ok = false;
                }
                if let Some(steps) = steps {
                    if values.len() < steps {
                        errs.push(
                            "input.values",
                            format!(
                                "{} inputs given, experiment.steps needs {steps}",
                                values.len()
                            ),
                        );
                        ok = false;
                    }
                }
                ok.then(|| {
                    InputLaw::Sequence(
                        values
                            .iter()
                            .map(|v| Vector::from_column_slice(v))
                            .collect(),
                    )
                })
            }
            other => {
                errs.push(
                    "input.kind",
                    format!("unknown kind {other:?}, expected \"gaussian\" or \"sequence\""),
                );
                None
            }
        }
    }

    fn from_law(law: &InputLaw) -> Self {
        match law {
            InputLaw::Gaussian { mean, cov } => Self {
                kind: "gaussian".into(),
                mean: Some(mean.iter().copied().collect()),
                cov: Some(rows_of(cov)),
                values: None,
            },
            InputLaw::Sequence(values) => Self {
                kind: "sequence".into(),
                mean: None,
                cov: None,
                values: Some(values.iter().map(|v| v.iter().copied().collect()).collect()),
            },
        }
    }
}

impl RawQuantizer {
    fn validate(&self, p: Option<usize>, errs: &mut Errors) -> Option<Quantizer> {
        match self.kind.as_str() {
            "uniform" => {
                if self.cells.is_some() {
                    errs.push("quantizer.cells", "only used by kind = \"partition\"");
                }
                let steps = match required(&self.delta, "quantizer.delta", errs)? {
                    RawDelta::Scalar(d) => Vector::from_element(p.unwrap_or(1), *d),
                    RawDelta::PerDimension(v) => {
                        if let Some(p) = p {
                            if v.len() != p {
                                errs.push(
                                    "quantizer.delta",
                                    format!("expected {p} entries, found {}", v.len()),
                                );
                                return None;
                            }
                        }
                        Vector::from_column_slice(v)
                    }
                };
                Quantizer::uniform(steps)
                    .map_err(|e| errs.push("quantizer.delta", e.to_string()))
                    .ok()
            }
            "partition" => {
                if self.delta.is_some() {
                    errs.push("quantizer.delta", "only used by kind = \"uniform\"");
                }
                let cells = required(&self.cells, "quantizer.cells", errs)?;
                let mut parsed = Vec::with_capacity(cells.len());
                for (k, cell) in cells.iter().enumerate() {
                    let path = format!("quantizer.cells[{k}]");
                    let dim = cell.lower.len();
                    if cell.upper.len() != dim || cell.level.len() != dim {
                        errs.push(&path, "lower, upper and level must have the same length");
                        continue;
                    }
                    if let Some(p) = p {
                        if dim != p {
                            errs.push(&path, format!("expected dimension {p}, found {dim}"));
                            continue;
                        }
                    }
                    parsed.push(PartitionCell {
                        bounds: Hyperrectangle {
                            lower: Vector::from_column_slice(&cell.lower),
                            upper: Vector::from_column_slice(&cell.upper),
                        },
                        level: Vector::from_column_slice(&cell.level),
                    });
                }
                if parsed.len() != cells.len() {
                    return None;
                }
                Quantizer::partition(parsed)
                    .map_err(|e| errs.push("quantizer.cells", e.to_string()))
                    .ok()
            }
            other => {
                errs.push(
                    "quantizer.kind",
                    format!("unknown kind {other:?}, expected \"uniform\" or \"partition\""),
                );
                None
            }
        }
    }

    fn from_quantizer(q: &Quantizer) -> Self {
        match q {
            Quantizer::Uniform { steps } => {
                let first = steps[0];
                let delta = if steps.len() == 1 {
                    RawDelta::Scalar(first)
                } else {
                    RawDelta::PerDimension(steps.iter().copied().collect())
                };
                Self {
                    kind: "uniform".into(),
                    delta: Some(delta),
                    cells: None,
                }
            }
            Quantizer::Partition { cells } => Self {
                kind: "partition".into(),
                delta: None,
                cells: Some(
                    cells
                        .iter()
                        .map(|c| RawCell {
                            lower: c.bounds.lower.iter().copied().collect(),
                            upper: c.bounds.upper.iter().copied().collect(),
                            level: c.level.iter().copied().collect(),
                        })
                        .collect(),
                ),
            },
        }
    }
}

impl RawEstimators {
    fn validate(&self, m: Option<usize>, errs: &mut Errors) -> Option<Vec<Estimator>> {
        if self.kinds.is_empty() {
            errs.push("estimators.use", "no estimators listed");
            return None;
        }
        let mut out: Vec<Estimator> = Vec::new();
        let mut ok = true;
        for (k, name) in self.kinds.iter().enumerate() {
            let path = format!("estimators.use[{k}]");
            let est = match name.as_str() {
                "gsf-limit" => Estimator::GsfLimit,
                "lti" => Estimator::Lti,
                "gsf-prior" => match self.prior(m, errs) {
                    Some(prior) => Estimator::GsfPrior(prior),
                    None => {
                        ok = false;
                        continue;
                    }
                },
                other => {
                    errs.push(
                        path,
                        format!(
                            "unknown estimator {other:?}, expected gsf-limit, gsf-prior or lti"
                        ),
                    );
                    ok = false;
                    continue;
                }
            };
            if out.iter().any(|e| e.tag() == est.tag()) {
                errs.push(path, format!("{name} listed twice"));
                ok = false;
                continue;
            }
            out.push(est);
        }
        let uses_prior = self.kinds.iter().any(|k| k == "gsf-prior");
        if !uses_prior && (self.prior_mean.is_some() || self.prior_cov.is_some()) {
            errs.push(
                "estimators",
                "prior_mean and prior_cov are only used by gsf-prior",
            );
            ok = false;
        }
        ok.then_some(out)
    }

    fn prior(&self, m: Option<usize>, errs: &mut Errors) -> Option<InputPrior> {
        let mean = required(&self.prior_mean, "estimators.prior_mean", errs)
            .map(|v| Vector::from_column_slice(v));
        let cov = required(&self.prior_cov, "estimators.prior_cov", errs)
            .and_then(|r| matrix("estimators.prior_cov", r, errs));
        let (mean, cov) = (mean?, cov?);
        if let Some(m) = m {
            let mut ok = expect_shape("estimators.prior_cov", &cov, m, m, errs);
            if mean.len() != m {
                errs.push(
                    "estimators.prior_mean",
                    format!("expected {m} entries, found {}", mean.len()),
                );
                ok = false;
            }
            if !ok {
                return None;
            }
        }
        InputPrior::new(mean, cov)
            .map_err(|e| errs.push("estimators.prior_cov", e.to_string()))
            .ok()
    }

    fn from_estimators(list: &[Estimator]) -> Self {
        let prior = list.iter().find_map(|e| match e {
            Estimator::GsfPrior(p) => Some(p),
            _ => None,
        });
        Self {
            kinds: list.iter().map(|e| e.tag().to_string()).collect(),
            prior_mean: prior.map(|p| p.mean().iter().copied().collect()),
            prior_cov: prior.map(|p| rows_of(p.cov())),
        }
    }
}

impl RawLikelihood {
    fn validate(&self, p: Option<usize>, errs: &mut Errors) -> Option<LikelihoodSpec> {
        let order = self.order.unwrap_or(DEFAULT_ORDER);
        let mut ok = true;
        if !(1..=MAX_ORDER).contains(&order) {
            errs.push(
                "likelihood.order",
                format!("must be between 1 and {MAX_ORDER}"),
            );
            ok = false;
        }
        let width = self.truncation_sigmas.unwrap_or(DEFAULT_TRUNCATION_SIGMAS);
        if !(width.is_finite() && width > 0.0) {
            errs.push(
                "likelihood.truncation_sigmas",
                "must be positive and finite",
            );
            ok = false;
        }
        let range = match (&self.range_lower, &self.range_upper) {
            (None, None) => None,
            (Some(lo), Some(hi)) => {
                if lo.len() != hi.len() || p.is_some_and(|p| lo.len() != p) {
                    errs.push(
                        "likelihood.range_lower",
                        "range bounds must have one entry per output",
                    );
                    ok = false;
                } else if lo
                    .iter()
                    .zip(hi)
                    .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
                {
                    errs.push(
                        "likelihood.range_lower",
                        "range bounds must be finite with lower < upper",
                    );
                    ok = false;
                }
                Some((Vector::from_column_slice(lo), Vector::from_column_slice(hi)))
            }
            _ => {
                errs.push(
                    "likelihood",
                    "range_lower and range_upper must be given together",
                );
                ok = false;
                None
            }
        };
        ok.then_some(LikelihoodSpec {
            order,
            truncation: TruncationPolicy {
                width_sigmas: width,
                range,
            },
        })
    }

    fn from_spec(spec: &LikelihoodSpec) -> Self {
        let range = spec.truncation.range.as_ref();
        Self {
            order: Some(spec.order),
            truncation_sigmas: Some(spec.truncation.width_sigmas),
            range_lower: range.map(|(lo, _)| lo.iter().copied().collect()),
            range_upper: range.map(|(_, hi)| hi.iter().copied().collect()),
        }
    }
}

impl RawReduction {
    fn validate(&self, errs: &mut Errors) -> Option<ReductionConfig> {
        let space = match self.cost_space.as_deref() {
            None | Some("joint") => Some(CostSpace::JointBlockDiagonal),
            Some("state") => Some(CostSpace::StateOnly),
            Some(other) => {
                errs.push(
                    "reduction.cost_space",
                    format!("unknown cost space {other:?}, expected \"joint\" or \"state\""),
                );
                None
            }
        };
        let max = self
            .max_components
            .unwrap_or(qsise_core::reduction::DEFAULT_MAX_COMPONENTS);
        let cfg = ReductionConfig::new(max, space.unwrap_or_default())
            .map_err(|_| errs.push("reduction.max_components", "must be at least 1"))
            .ok();
        space.and(cfg)
    }

    fn from_config(cfg: &ReductionConfig) -> Self {
        Self {
            max_components: Some(cfg.max_components),
            cost_space: Some(
                match cfg.cost_space {
                    CostSpace::JointBlockDiagonal => "joint",
                    CostSpace::StateOnly => "state",
                }
                .into(),
            ),
        }
    }
}

impl RawExperiment {
    fn validate(&self, errs: &mut Errors) -> Option<ExperimentSpec> {
        let steps = required(&self.steps, "experiment.steps", errs).copied();
        let runs = required(&self.runs, "experiment.runs", errs).copied();
        let seed = required(&self.seed, "experiment.seed", errs).copied();
        let deltas = self.deltas.clone().unwrap_or_default();
        let mut ok = true;
        if steps.is_some_and(|s| s < 2) {
            errs.push("experiment.steps", "must be at least 2");
            ok = false;
        }
        if runs == Some(0) {
            errs.push("experiment.runs", "must be at least 1");
            ok = false;
        }
        if seed.is_some_and(|s| s < 0) {
            errs.push("experiment.seed", "must be nonnegative");
            ok = false;
        }
        for (k, d) in deltas.iter().enumerate() {
            if !(d.is_finite() && *d > 0.0) {
                errs.push(
                    format!("experiment.deltas[{k}]"),
                    "step size must be positive and finite",
                );
                ok = false;
            }
        }
        for (k, d) in deltas.iter().enumerate() {
            if deltas[..k].contains(d) {
                errs.push(
                    format!("experiment.deltas[{k}]"),
                    "repeats an earlier step size",
                );
                ok = false;
            }
        }
        if !ok {
            return None;
        }
        Some(ExperimentSpec {
            steps: steps?,
            runs: runs?,
            deltas,
            seed: seed? as u64,
        })
    }

    fn from_spec(spec: &ExperimentSpec) -> Self {
        Self {
            steps: Some(spec.steps),
            runs: Some(spec.runs),
            deltas: Some(spec.deltas.clone()),
            seed: Some(spec.seed as i64),
        }
    }
}

impl RawOutput {
    fn validate(&self, errs: &mut Errors) -> Option<OutputSpec> {
        let dir = PathBuf::from(self.dir.as_deref().unwrap_or(DEFAULT_OUTPUT_DIR));
        let names = self
            .formats
            .clone()
            .unwrap_or_else(|| vec!["csv".into(), "svg".into()]);
        let mut formats = Vec::new();
        let mut ok = true;
        for (k, name) in names.iter().enumerate() {
            let path = format!("output.formats[{k}]");
            let format = match name.as_str() {
                "csv" => Format::Csv,
                "svg" => Format::Svg,
                other => {
                    errs.push(
                        path,
                        format!("unknown format {other:?}, expected \"csv\" or \"svg\""),
                    );
                    ok = false;
                    continue;
                }
            };
            if formats.contains(&format) {
                errs.push(path, format!("{name} listed twice"));
                ok = false;
            } else {
                formats.push(format);
            }
        }
        if ok && !formats.contains(&Format::Csv) {
            errs.push("output.formats", "csv output is required");
            ok = false;
        }
        ok.then_some(OutputSpec { dir, formats })
    }

    fn from_spec(spec: &OutputSpec) -> Self {
        Self {
            dir: Some(spec.dir.to_string_lossy().into_owned()),
            formats: Some(spec.formats.iter().map(|f| f.name().to_string()).collect()),
        }
    }
}

impl RawConfig {
    fn validate(&self, errs: &mut Errors) -> Option<ExperimentConfig> {
        let model = required(&self.model, "model", errs).and_then(|m| m.validate(errs));
        let (m, p) = (model.as_ref().map(|m| m.m()), model.as_ref().map(|m| m.p()));
        let experiment =
            required(&self.experiment, "experiment", errs).and_then(|e| e.validate(errs));
        let steps = experiment.as_ref().map(|e| e.steps);
        let input = required(&self.input, "input", errs).and_then(|i| i.validate(m, steps, errs));
        let quantizer =
            required(&self.quantizer, "quantizer", errs).and_then(|q| q.validate(p, errs));
        let estimators =
            required(&self.estimators, "estimators", errs).and_then(|e| e.validate(m, errs));
        let likelihood = match &self.likelihood {
            Some(l) => l.validate(p, errs),
            None => Some(LikelihoodSpec {
                order: DEFAULT_ORDER,
                truncation: TruncationPolicy::default(),
            }),
        };
        let reduction = match &self.reduction {
            Some(r) => r.validate(errs),
            None => Some(ReductionConfig::default()),
        };
        let output = match &self.output {
            Some(o) => o.validate(errs),
            None => Some(OutputSpec {
                dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
                formats: vec![Format::Csv, Format::Svg],
            }),
        };
        Some(ExperimentConfig {
            model: model?,
            input: input?,
            quantizer: quantizer?,
            estimators: estimators?,
            likelihood: likelihood?,
            reduction: reduction?,
            experiment: experiment?,
            output: output?,
        })
    }
}

impl From<&ExperimentConfig> for RawConfig {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            model: Some(RawModel::from_model(&c.model)),
            input: Some(RawInput::from_law(&c.input)),
            quantizer: Some(RawQuantizer::from_quantizer(&c.quantizer)),
            estimators: Some(RawEstimators::from_estimators(&c.estimators)),
            likelihood: Some(RawLikelihood::from_spec(&c.likelihood)),
            reduction: Some(RawReduction::from_config(&c.reduction)),
            experiment: Some(RawExperiment::from_spec(&c.experiment)),
            output: Some(RawOutput::from_spec(&c.output)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SECTION_V: &str = include_str!("../examples/secv.cfg");

    #[test]
    fn bundled_config_is_the_reference_system() {
        let cfg = parse_config(SECTION_V).unwrap();
        let m = &cfg.model;
        assert_eq!(m.a(), &Matrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.7]));
        assert_eq!(m.g(), &Matrix::from_row_slice(2, 1, &[2.0, 1.0]));
        assert_eq!(m.c(), &Matrix::from_row_slice(1, 2, &[1.0, 1.5]));
        assert_eq!(m.q(), &(Matrix::identity(2, 2) * 0.1));
        assert_eq!(m.r(), &Matrix::from_element(1, 1, 0.1));
        assert_eq!(m.mu1(), &Vector::from_row_slice(&[2.0, 1.0]));
        assert_eq!(m.p1(), &(Matrix::identity(2, 2) * 0.5));
        assert_eq!(cfg.experiment.deltas, vec![1.0, 5.0, 10.0, 15.0]);
        assert_eq!(cfg.experiment.runs, 100);
        assert_eq!(cfg.experiment.steps, 200);
        assert_eq!(cfg.likelihood.order, 5);
        assert_eq!(cfg.reduction.max_components, 50);
        assert_eq!(
            cfg.input,
            InputLaw::Gaussian {
                mean: Vector::zeros(1),
                cov: Matrix::from_element(1, 1, 20.0)
            }
        );
        let tags: Vec<_> = cfg.estimators.iter().map(|e| e.tag()).collect();
        assert_eq!(tags, ["gsf-limit", "lti"]);
    }

    #[test]
    fn empty_file_is_a_syntax_error() {
        for text in ["", "  \n\t\n"] {
            assert!(matches!(
                parse_config(text),
                Err(ConfigError::Syntax {
                    line: 1,
                    column: 1,
                    ..
                })
            ));
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = "[model]\nA = [[1.0, 2.0]] junk\n";
        match parse_config(text) {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_square_transition() {
        let text = SECTION_V.replace(
            "A = [[0.9, 0.0], [0.0, 0.7]]",
            "A = [[0.9, 0.0, 0.0], [0.0, 0.7, 0.0]]",
        );
        let err = parse_config(&text).unwrap_err();
        let errors = err.field_errors();
        assert_eq!(errors.len(), 1, "{err}");
        assert_eq!(errors[0].path, "model.A");
        assert_eq!(errors[0].message, "A must be square");
    }

    #[test]
    fn every_violation_is_reported() {
        let text = SECTION_V
            .replace("R = [[0.1]]", "R = [[-0.1]]")
            .replace("order = 5", "order = 0")
            .replace("runs = 100", "runs = 0")
            .replace("\"lti\"", "\"kalman\"");
        let err = parse_config(&text).unwrap_err();
        let paths: Vec<&str> = err.field_errors().iter().map(|e| e.path.as_str()).collect();
        for path in [
            "model.R",
            "likelihood.order",
            "experiment.runs",
            "estimators.use[1]",
        ] {
            assert!(paths.contains(&path), "{path} missing from {paths:?}");
        }
    }

    #[test]
    fn missing_blocks_are_named() {
        let err = parse_config("[output]\ndir = \"x\"\n").unwrap_err();
        let paths: Vec<&str> = err.field_errors().iter().map(|e| e.path.as_str()).collect();
        assert_eq!(
            paths,
            ["model", "experiment", "input", "quantizer", "estimators"]
        );
    }

    #[test]
    fn rank_failure_points_at_g() {
        let text = SECTION_V.replace("C = [[1.0, 1.5]]", "C = [[1.0, -2.0]]");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.field_errors()[0].path, "model.G");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SECTION_V}\n[extra]\nx = 1\n");
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let cfg = parse_config(SECTION_V).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);

        let mut text = SECTION_V.replace(
            "use = [\"gsf-limit\", \"lti\"]",
            "use = [\"gsf-prior\"]\nprior_mean = [0.5]\nprior_cov = [[3.0]]",
        );
        text = text.replace(
            "kind = \"uniform\"\ndelta = 5.0",
            "kind = \"partition\"\n[[quantizer.cells]]\nlower = [-inf]\nupper = [0.0]\nlevel = [-1.0]\n[[quantizer.cells]]\nlower = [0.0]\nupper = [inf]\nlevel = [1.0]",
        );
        text = text
            .replace("max_components = 50", "max_components = 7")
            .replace("cost_space = \"joint\"", "cost_space = \"state\"");
        let cfg = parse_config(&text).unwrap();
        assert!(matches!(cfg.quantizer, Quantizer::Partition { .. }));
        assert_eq!(cfg.reduction.cost_space, CostSpace::StateOnly);
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}
