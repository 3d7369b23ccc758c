//! The `filter`, `sweep` and `verify` subcommands.
//!
//! Artifacts are written to a staging directory inside the output directory
//! and moved into place only once every file has been written, so a failed
//! command leaves no partial output behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qsise_core::sim::{
    monte_carlo, realization_seed, run_filter_with, simulate_trajectory, Experiment, SweepCell,
};
use qsise_core::Quantizer;

use crate::config::{load_config, ConfigError, ExperimentConfig, FieldError, Format};
use crate::exec::RayonExecutor;
use crate::output::{filter_table, format_float, mse_table, summary_table, write_csv};
use crate::svg::box_plot;
use crate::verify::run_checks;

pub const FILTER_CSV: &str = "filter.csv";
pub const MSE_CSV: &str = "mse.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Filter,
    Sweep,
    Verify,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// What a command printed and whether it succeeded.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub passed: bool,
}

pub fn execute(command: Command, opts: &Options) -> Result<Report, CliError> {
    let mut cfg = load_config(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.output.dir = out.clone();
    }
    let exec = RayonExecutor::new(opts.threads).map_err(run_err)?;
    match command {
        Command::Filter => filter(&cfg, &exec),
        Command::Sweep => sweep(&cfg, &exec),
        Command::Verify => Ok(verify(&cfg)),
    }
}

struct Staging {
    out: PathBuf,
    created_out: bool,
    dir: Option<tempfile::TempDir>,
    files: Vec<String>,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, CliError> {
        let created_out = !out.exists();
        fs::create_dir_all(out)
            .map_err(|e| run_err(format!("cannot create {}: {e}", out.display())))?;
        let dir = tempfile::Builder::new()
            .prefix(".qsise-staging-")
            .tempdir_in(out)
            .map_err(|e| run_err(format!("cannot stage output in {}: {e}", out.display())));
        let mut staging = Self {
            out: out.to_path_buf(),
            created_out,
            dir: None,
            files: Vec::new(),
        };
        staging.dir = Some(dir?);
        Ok(staging)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir
            .as_ref()
            .expect("staging directory")
            .path()
            .join(name)
    }

    fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let dir = self.dir.take().expect("staging directory");
        let mut moved = Vec::new();
        for name in &self.files {
            let target = self.out.join(name);
            if let Err(e) = fs::rename(dir.path().join(name), &target) {
                for path in &moved {
                    let _ = fs::remove_file(path);
                }
                self.dir = Some(dir);
                return Err(run_err(format!("cannot move {}: {e}", target.display())));
            }
            moved.push(target);
        }
        Ok(moved)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if let Some(dir) = self.dir.take() {
            let _ = dir.close();
            if self.created_out {
                let _ = fs::remove_dir(&self.out);
            }
        }
    }
}

fn filter(cfg: &ExperimentConfig, exec: &RayonExecutor) -> Result<Report, CliError> {
    let settings = cfg.filter_settings().map_err(run_err)?;
    let seed = realization_seed(cfg.experiment.seed, 0);
    let traj = simulate_trajectory(
        &cfg.model,
        Some(&cfg.quantizer),
        &cfg.input,
        cfg.experiment.steps,
        seed,
    )
    .map_err(run_err)?;
    let mut records = Vec::with_capacity(cfg.estimators.len());
    let mut lines = vec![format!("seed {seed}, {} steps", traj.len())];
    for est in &cfg.estimators {
        let start = Instant::now();
        let mut rec = run_filter_with(&traj, &cfg.model, &cfg.quantizer, est, &settings, exec)
            .map_err(|e| run_err(format!("{}: {e}", est.tag())))?;
        rec.wallclock_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        let mse: Vec<String> = rec
            .mse_x
            .iter()
            .chain(&rec.mse_d)
            .map(|v| format!("{v:.4e}"))
            .collect();
        lines.push(format!(
            "{}: mse [{}] in {:.1} ms",
            rec.estimator,
            mse.join(", "),
            rec.wallclock_ms.unwrap_or_default()
        ));
        records.push(rec);
    }
    let mut staging = Staging::new(&cfg.output.dir)?;
    let path = staging.path(FILTER_CSV);
    write_csv(&filter_table(&traj, &records), &path).map_err(run_err)?;
    for path in staging.commit()? {
        lines.push(format!("wrote {}", path.display()));
    }
    Ok(Report {
        lines,
        passed: true,
    })
}

fn sweep(cfg: &ExperimentConfig, exec: &RayonExecutor) -> Result<Report, CliError> {
    if cfg.experiment.deltas.is_empty() {
        return Err(ConfigError::Semantic(vec![FieldError {
            path: "experiment.deltas".into(),
            message: "sweep needs at least one step size".into(),
        }])
        .into());
    }
    let p = cfg.model.p();
    let cells = cfg
        .experiment
        .deltas
        .iter()
        .map(|&delta| {
            Ok(SweepCell {
                delta,
                quantizer: Quantizer::uniform_scalar(delta, p)?,
            })
        })
        .collect::<qsise_core::Result<Vec<_>>>()
        .map_err(run_err)?;
    let exp = Experiment {
        model: cfg.model.clone(),
        input_law: cfg.input.clone(),
        cells,
        estimators: cfg.estimators.clone(),
        settings: cfg.filter_settings().map_err(run_err)?,
        steps: cfg.experiment.steps,
        runs: cfg.experiment.runs,
        master_seed: cfg.experiment.seed,
    };
    let start = Instant::now();
    let table = monte_carlo(&exp, exec).map_err(run_err)?;
    let mut lines = vec![format!(
        "{} runs x {} step sizes on {} threads in {:.1} s, {} failed",
        exp.runs,
        exp.cells.len(),
        exec.threads(),
        start.elapsed().as_secs_f64(),
        table.failures.len()
    )];
    for f in &table.failures {
        lines.push(format!(
            "  dropped delta={} run={} seed={}: {}: {}",
            format_float(f.delta),
            f.run,
            f.seed,
            f.estimator,
            f.message
        ));
    }
    for c in &table.summary {
        lines.push(format!(
            "{:>10} delta={:<5} {:>3} median {:.4e}",
            c.estimator, c.delta, c.signal, c.stats.median
        ));
    }

    let mut staging = Staging::new(&cfg.output.dir)?;
    let path = staging.path(MSE_CSV);
    write_csv(&mse_table(&table), &path).map_err(run_err)?;
    let path = staging.path(SUMMARY_CSV);
    write_csv(&summary_table(&table), &path).map_err(run_err)?;
    if cfg.wants(Format::Svg) {
        for signal in table.signal_names() {
            let Some(svg) = box_plot(&table, &signal) else {
                continue;
            };
            let path = staging.path(&format!("mse_{signal}.svg"));
            fs::write(&path, svg)
                .map_err(|e| run_err(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    for path in staging.commit()? {
        lines.push(format!("wrote {}", path.display()));
    }
    Ok(Report {
        lines,
        passed: true,
    })
}

fn verify(cfg: &ExperimentConfig) -> Report {
    let outcomes = run_checks(cfg);
    let passed = outcomes.iter().all(|o| o.passed);
    let lines = outcomes
        .iter()
        .map(|o| {
            let tag = if o.passed { "PASS" } else { "FAIL" };
            format!("[{tag}] {}: {}", o.name, o.detail)
        })
        .collect();
    Report { lines, passed }
}
