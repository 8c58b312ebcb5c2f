//! The training loop around [`train_step`]: datasets, seeding, evaluation,
//! metrics, checkpoints and diagnostics.

use std::path::{Path, PathBuf};
use std::time::Instant;

use otmatch_core::data::{
    gen_gaussian_mixture, gen_two_moons, sample_batch, split_labeled, Dataset, InputLayout, MixedBatch, Split,
};
use otmatch_core::engine::{evaluate, train_step, StepReport, TrainState};
use otmatch_core::nn::{ConvShape, ModelParams};
use otmatch_core::optim::OptimizerState;
use otmatch_core::{DenseMatrix, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use crate::config::{DatasetKind, TrainConfig};
use crate::error::{io_err, Result, RunError};
use crate::idx::read_idx_dataset;
use crate::metrics::{CsvSink, MetricsRow, TimingRow};

/// Salt separating the synthetic test set's seed from the training set's.
const TEST_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const BATCH_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Training and test sets, a pure function of the config.
pub fn build_datasets(cfg: &TrainConfig) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetKind::TwoMoons => Ok((
            gen_two_moons(cfg.n_train, cfg.noise, cfg.seed)?,
            gen_two_moons(cfg.n_test, cfg.noise, cfg.seed ^ TEST_SEED_SALT)?,
        )),
        DatasetKind::GaussianMixture => {
            // One draw so both sets share the class centres.
            let per_class = (cfg.n_train + cfg.n_test) / cfg.classes;
            let all = gen_gaussian_mixture(
                per_class,
                cfg.classes,
                cfg.mixture_dim,
                cfg.mixture_separation,
                cfg.mixture_std,
                cfg.seed,
            )?;
            let part = |start: usize, end: usize| {
                Dataset::new(
                    all.features.slice_rows(start, end),
                    all.labels[start..end].to_vec(),
                    all.classes,
                    all.layout,
                )
            };
            Ok((part(0, cfg.n_train)?, part(cfg.n_train, all.len())?))
        }
        DatasetKind::Idx => {
            let path = |p: &Option<PathBuf>| p.clone().expect("validated idx paths");
            let train = read_idx_dataset(&path(&cfg.idx_train_images), &path(&cfg.idx_train_labels), cfg.classes)?;
            let test = read_idx_dataset(&path(&cfg.idx_test_images), &path(&cfg.idx_test_labels), cfg.classes)?;
            Ok((train, test))
        }
    }
}

pub fn build_model(cfg: &TrainConfig, layout: InputLayout) -> Result<ModelParams> {
    let mut rng = stream(cfg.seed, INIT_STREAM);
    let params = match layout {
        InputLayout::Vector { dim } => ModelParams::mlp(dim, &cfg.hidden, cfg.classes, &mut rng)?,
        InputLayout::Image { height, width, channels } => ModelParams::conv_mlp(
            ConvShape {
                height,
                width,
                in_channels: channels,
                out_channels: cfg.conv_channels,
                kernel: cfg.conv_kernel,
                stride: cfg.conv_stride,
            },
            &cfg.hidden,
            cfg.classes,
            &mut rng,
        )?,
    };
    Ok(params)
}

/// Written next to the metrics when a step produces a non-finite loss.
#[derive(Debug, Serialize)]
struct Diagnostic<'a> {
    step: u64,
    error: String,
    labeled_indices: &'a [usize],
    unlabeled_indices: &'a [usize],
    thresholds: &'a otmatch_core::thresholds::ThresholdState,
    cost: &'a DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub report: StepReport,
    pub eval_acc: Option<f64>,
    /// Wall-clock seconds for batch sampling plus the step itself.
    pub seconds: f64,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub split: Split,
    pub state: TrainState,
    rng: ChaCha8Rng,
    diagnostic_dir: PathBuf,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (train, test) = build_datasets(&config)?;
        let split = Self::split(&config, &train)?;
        let student = build_model(&config, train.layout)?;
        let optimizer = OptimizerState::new(
            &student,
            config.base_lr,
            config.total_steps,
            config.momentum,
            config.weight_decay,
        )?;
        let state = TrainState::new(
            student,
            config.ema_decay,
            optimizer,
            config.threshold_decay,
            config.cost_momentum,
        )?;
        Ok(Self {
            rng: stream(config.seed, BATCH_STREAM),
            config,
            train,
            test,
            split,
            state,
            diagnostic_dir: PathBuf::from("."),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let (train, test) = build_datasets(&ck.config)?;
        let split = Self::split(&ck.config, &train)?;
        Ok(Self {
            config: ck.config,
            train,
            test,
            split,
            state: ck.state,
            rng: ck.rng,
            diagnostic_dir: PathBuf::from("."),
        })
    }

    fn split(cfg: &TrainConfig, train: &Dataset) -> Result<Split> {
        if train.classes != cfg.classes {
            return Err(RunError::Config(format!(
                "dataset has {} classes, config says {}",
                train.classes, cfg.classes
            )));
        }
        Ok(split_labeled(train, cfg.labels_per_class, &mut stream(cfg.seed, SPLIT_STREAM))?)
    }

    pub fn with_diagnostic_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.diagnostic_dir = dir.into();
        self
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            state: self.state.clone(),
            rng: self.rng.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.total_steps
    }

    pub fn evaluate_teacher(&self) -> Result<f64> {
        Ok(evaluate(&self.state.teacher.params, &self.test)?)
    }

    pub fn evaluate_student(&self) -> Result<f64> {
        Ok(evaluate(&self.state.student, &self.test)?)
    }

    fn sample(&mut self) -> Result<MixedBatch> {
        Ok(sample_batch(
            &self.train,
            &self.split,
            self.config.batch_size,
            self.config.mu,
            &self.config.augment(),
            &mut self.rng,
        )?)
    }

    pub fn step(&mut self) -> Result<StepOutput> {
        let start = Instant::now();
        let batch = self.sample()?;
        let report = match train_step(&mut self.state, &batch, &self.config.step_config()) {
            Ok(r) => r,
            Err(e @ Error::NonFiniteLoss { step }) => return Err(self.dump(step, &e, &batch)),
            Err(e) => return Err(e.into()),
        };
        let seconds = start.elapsed().as_secs_f64();
        let eval_due = report.step % self.config.eval_interval == 0 || report.step == self.config.total_steps;
        let eval_acc = if eval_due { Some(self.evaluate_teacher()?) } else { None };
        Ok(StepOutput {
            report,
            eval_acc,
            seconds,
        })
    }

    fn dump(&self, step: u64, err: &Error, batch: &MixedBatch) -> RunError {
        let path = self.diagnostic_dir.join("diagnostic.json");
        let diag = Diagnostic {
            step,
            error: err.to_string(),
            labeled_indices: &batch.labeled_indices,
            unlabeled_indices: &batch.unlabeled_indices,
            thresholds: &self.state.thresholds,
            cost: &self.state.cost.values,
        };
        let written = serde_json::to_vec_pretty(&diag)
            .map_err(RunError::from)
            .and_then(|bytes| std::fs::write(&path, bytes).map_err(io_err(&path)));
        match written {
            Ok(()) => RunError::NonFinite { step, diagnostic: path },
            Err(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub final_eval_acc: Option<f64>,
    pub mean_step_seconds: f64,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Trains until `total_steps` (or `max_steps` more steps), writing
/// `metrics.csv`, `timing.csv` and `checkpoint.json` under `out_dir`.
/// With `append`, existing CSVs are extended instead of replaced.
pub fn run(trainer: &mut Trainer, out_dir: &Path, max_steps: Option<u64>, append: bool) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    trainer.diagnostic_dir = out_dir.to_path_buf();
    let mut metrics = CsvSink::open(&out_dir.join(METRICS_FILE), append)?;
    let mut timing = CsvSink::open(&out_dir.join(TIMING_FILE), append)?;
    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    let mut steps = 0;
    let mut seconds = 0.0;
    let mut final_eval_acc = None;
    while !trainer.is_done() && max_steps.is_none_or(|m| steps < m) {
        let out = trainer.step()?;
        steps += 1;
        seconds += out.seconds;
        metrics.write(&MetricsRow::from_report(&out.report, out.eval_acc))?;
        timing.write(&TimingRow {
            step: out.report.step,
            seconds: out.seconds,
        })?;
        if let Some(acc) = out.eval_acc {
            final_eval_acc = Some(acc);
            metrics.flush()?;
            timing.flush()?;
        }
        let interval = trainer.config.checkpoint_interval;
        if interval > 0 && out.report.step % interval == 0 {
            trainer.checkpoint().save(&checkpoint_path)?;
        }
    }
    metrics.flush()?;
    timing.flush()?;
    trainer.checkpoint().save(&checkpoint_path)?;
    Ok(RunSummary {
        steps,
        final_eval_acc,
        mean_step_seconds: if steps > 0 { seconds / steps as f64 } else { 0.0 },
    })
}

/// Writes `x_0, …, x_{d-1}, y` rows.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.features.cols()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in data.features.row_iter().zip(&data.labels) {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}
