use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Counted, ModelSpec, StateVector, SyntheticModel};
use crate::schedule::{NoiseSchedule, ScheduleSpec, SkipKind, TimeGrid};
use crate::solver::{sample_with, SampleOptions, SolverConfig, Variant};

use super::fit::{fit_order, OrderFit};
use super::reference::{reference_solution, ReferenceMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorNorm {
    #[default]
    MaxAbs,
    Rms,
}

impl ErrorNorm {
    pub fn eval(self, v: &StateVector<f64>) -> f64 {
        match self {
            ErrorNorm::MaxAbs => v.max_abs(),
            ErrorNorm::Rms => v.rms(),
        }
    }
}

/// Whether the `error` column is divided by the norm of the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorScale {
    #[default]
    Relative,
    Absolute,
}

/// Generator for `x_T`. ChaCha8 seeded with `seed_from_u64`, standard normal samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RngKind {
    #[default]
    Chacha8,
}

/// How multistep runs obtain their first points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// Lower-order warm-up steps.
    #[default]
    Warmup,
    /// Reference states at the first `p - 1` grid points.
    Exact,
}

fn default_seed() -> u64 {
    42
}

/// A convergence study: one model, one schedule, several solvers over several step counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceStudy {
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub model: ModelSpec,
    pub solvers: Vec<SolverConfig>,
    pub step_counts: Vec<usize>,
    #[serde(default)]
    pub skip: SkipKind,
    #[serde(default)]
    pub error_norm: ErrorNorm,
    #[serde(default)]
    pub error_scale: ErrorScale,
    /// Defaults to closed-form when the model has one, else fine-rk4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceMode>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub rng: RngKind,
    #[serde(default)]
    pub start: StartMode,
}

impl ConvergenceStudy {
    pub fn from_json(text: &str) -> Result<Self> {
        let study: Self = serde_json::from_str(text)?;
        study.validate()?;
        Ok(study)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::Config("no solvers listed".into()));
        }
        if self.step_counts.len() < 4 {
            return Err(Error::Config(format!(
                "{} step counts given, a slope fit needs at least 4",
                self.step_counts.len()
            )));
        }
        if self.step_counts[0] == 0 || self.step_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "step counts {:?} must be positive and strictly increasing",
                self.step_counts
            )));
        }
        if self.model.dim() == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        let schedule = self.schedule.build::<f64>()?;
        let model = self.model.build(schedule)?;
        if self.reference == Some(ReferenceMode::ClosedForm) && !model.has_closed_form() {
            return Err(Error::Config(
                "closed-form reference needs the x-free-poly family".into(),
            ));
        }
        for (ci, cfg) in self.solvers.iter().enumerate() {
            for &m in &self.step_counts {
                cfg.validate(m).map_err(|e| {
                    Error::Config(format!("solver {ci} ({}) at M={m}: {e}", cfg.label()))
                })?;
            }
        }
        Ok(())
    }

    pub fn reference_mode(&self, model: &SyntheticModel<f64>) -> ReferenceMode {
        self.reference.unwrap_or(if model.has_closed_form() {
            ReferenceMode::ClosedForm
        } else {
            ReferenceMode::FineRk4
        })
    }

    /// The shared initial state drawn from `seed`.
    pub fn initial_state(&self, seed: u64) -> StateVector<f64> {
        let RngKind::Chacha8 = self.rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StateVector::new(
            (0..self.model.dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect(),
        )
    }
}

/// One (config, M) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    /// Index into the study's solver list.
    pub config: usize,
    pub solver: String,
    pub order: usize,
    pub variant: String,
    pub bh: String,
    pub prediction: String,
    pub corrector: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub nfe: usize,
    /// `None` when the run aborted.
    pub error: Option<f64>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFit {
    pub config: usize,
    pub solver: String,
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<OrderFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub study: ConvergenceStudy,
    pub rows: Vec<StudyRow>,
    pub fits: Vec<ConfigFit>,
}

impl StudyResults {
    /// `(M, error)` pairs of one config, with aborted runs as NaN.
    pub fn points(&self, config: usize) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.config == config)
            .map(|r| (r.m, r.error.unwrap_or(f64::NAN)))
            .collect()
    }

    pub fn fit(&self, config: usize) -> Option<&OrderFit> {
        self.fits.iter().find(|f| f.config == config)?.fit.as_ref()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Overrides the study's seed.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

struct Setup {
    schedule: NoiseSchedule<f64>,
    model: SyntheticModel<f64>,
    mode: ReferenceMode,
    x_t: StateVector<f64>,
    reference: StateVector<f64>,
}

/// Runs every (config, M) cell; results are ordered by (config index, M).
pub fn run_study(study: &ConvergenceStudy, opts: &RunOptions) -> Result<StudyResults> {
    study.validate()?;
    let schedule = study.schedule.build::<f64>()?;
    let model = study.model.build(schedule)?;
    let mode = study.reference_mode(&model);
    let mut study = study.clone();
    if let Some(seed) = opts.seed {
        study.seed = seed;
    }
    let x_t = study.initial_state(study.seed);
    let reference = reference_solution(&model, &x_t, schedule.t_start(), schedule.t_end(), mode)?;
    let setup = Setup {
        schedule,
        model,
        mode,
        x_t,
        reference,
    };

    let cells: Vec<(usize, usize)> = (0..study.solvers.len())
        .flat_map(|ci| study.step_counts.iter().map(move |&m| (ci, m)))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(ci, m)| run_cell(&study, &setup, ci, m))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by_key(|r| (r.config, r.m));

    let mut results = StudyResults {
        study,
        rows,
        fits: Vec::new(),
    };
    results.fits = (0..results.study.solvers.len())
        .map(|ci| {
            let cfg = &results.study.solvers[ci];
            let (fit, failure) = match fit_order(&results.points(ci)) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ConfigFit {
                config: ci,
                solver: cfg.label(),
                order: cfg.order,
                fit,
                failure,
            }
        })
        .collect();
    Ok(results)
}

fn starting_values(
    study: &ConvergenceStudy,
    setup: &Setup,
    cfg: &SolverConfig,
    grid: &TimeGrid<f64>,
) -> Result<Vec<StateVector<f64>>> {
    if study.start != StartMode::Exact || cfg.variant != Variant::Multistep {
        return Ok(Vec::new());
    }
    let k = (cfg.max_order() - 1).min(grid.steps() - 1);
    grid.times()[1..=k]
        .iter()
        .map(|&t| reference_solution(&setup.model, &setup.x_t, grid.times()[0], t, setup.mode))
        .collect()
}

fn run_cell(study: &ConvergenceStudy, setup: &Setup, ci: usize, m: usize) -> Result<StudyRow> {
    let cfg = &study.solvers[ci];
    let grid = TimeGrid::new(&setup.schedule, m, study.skip)?;
    let options = SampleOptions {
        starting_values: starting_values(study, setup, cfg, &grid)?,
    };
    let counted = Counted::new(&setup.model);
    let start = Instant::now();
    let outcome = sample_with(&counted, &setup.schedule, &grid, cfg, &setup.x_t, &options);
    let seconds = start.elapsed().as_secs_f64();
    let nfe = counted.eval_count();
    let (error, failure) = match outcome {
        Ok(out) => {
            let diff = study
                .error_norm
                .eval(&out.final_state().sub(&setup.reference));
            let e = match study.error_scale {
                ErrorScale::Absolute => diff,
                ErrorScale::Relative => diff / study.error_norm.eval(&setup.reference),
            };
            (Some(e), None)
        }
        Err(e @ (Error::NonFinite { .. } | Error::Singular(_) | Error::Domain { .. })) => {
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    Ok(StudyRow {
        config: ci,
        solver: cfg.label(),
        order: cfg.order,
        variant: cfg.variant.as_str().into(),
        bh: cfg.bh.as_str().into(),
        prediction: cfg.prediction.as_str().into(),
        corrector: cfg.corrector.as_str().into(),
        m,
        nfe,
        error,
        seconds,
        failure,
    })
}
