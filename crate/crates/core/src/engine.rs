//! One training step in the fixed order: supervised loss, threshold EMAs,
//! local thresholds, pseudo-label loss, masked student statistics, fairness
//! loss, FreeMatch total, cost update, OT loss, OTMatch total, then the
//! student SGD step and the teacher EMA step.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cost::{covariance_cost, CostMatrix};
use crate::data::{Dataset, MixedBatch};
use crate::ema::TeacherParams;
use crate::error::{Error, Result};
use crate::losses::{
    loss_sup, loss_total, loss_un1, loss_un2, loss_un3, masked_student_stats, BatchPredictions,
    LossComponents, LossWeights,
};
use crate::matrix::{argmax, DenseMatrix};
use crate::nn::{softmax_in_place, ModelParams};
use crate::optim::{sgd_step, OptimizerState};
use crate::thresholds::ThresholdState;

/// Tolerance used when checking the cost matrix against metric axioms.
pub const METRIC_TOLERANCE: f64 = 1e-9;

/// Where the cost matrix is pulled toward each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostTarget {
    /// `1 − ⟨v_i, v_j⟩` over normalized student head columns.
    HeadCosine,
    /// Frozen discrete metric `1 − I`.
    Binary,
    /// `1 − corr` of student strong-view probabilities (ablation).
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub weights: LossWeights,
    /// Teacher temperature for the pseudo-label target; `0` means a hard
    /// one-hot target. Thresholds and masks always use the `ε = 1` teacher.
    pub teacher_epsilon: f64,
    pub cost_target: CostTarget,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            teacher_epsilon: 0.0,
            cost_target: CostTarget::HeadCosine,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.teacher_epsilon >= 0.0 && self.teacher_epsilon.is_finite()) {
            return Err(Error::Range {
                what: "teacher_epsilon",
                value: self.teacher_epsilon,
                range: "[0, inf)",
            });
        }
        Ok(())
    }
}

/// Everything that evolves across steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub student: ModelParams,
    pub teacher: TeacherParams,
    pub optimizer: OptimizerState,
    pub thresholds: ThresholdState,
    pub cost: CostMatrix,
    pub step: u64,
}

impl TrainState {
    pub fn new(
        student: ModelParams,
        teacher_decay: f64,
        optimizer: OptimizerState,
        threshold_decay: f64,
        cost_momentum: f64,
    ) -> Result<Self> {
        let k = student.classes();
        Ok(Self {
            teacher: TeacherParams::from_student(&student, teacher_decay)?,
            thresholds: ThresholdState::new(k, threshold_decay)?,
            cost: CostMatrix::discrete(k, cost_momentum)?,
            student,
            optimizer,
            step: 0,
        })
    }
}

/// Labels of the stages a step runs through, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    SupervisedLoss,
    ThresholdUpdate,
    LocalThresholds,
    PseudoLabelLoss,
    MaskedStudentStats,
    FairnessLoss,
    FreeMatchTotal,
    CostUpdate,
    OtLoss,
    OtMatchTotal,
    StudentStep,
    TeacherStep,
}

/// The stage sequence every step must follow.
pub const STAGE_ORDER: [Stage; 12] = [
    Stage::SupervisedLoss,
    Stage::ThresholdUpdate,
    Stage::LocalThresholds,
    Stage::PseudoLabelLoss,
    Stage::MaskedStudentStats,
    Stage::FairnessLoss,
    Stage::FreeMatchTotal,
    Stage::CostUpdate,
    Stage::OtLoss,
    Stage::OtMatchTotal,
    Stage::StudentStep,
    Stage::TeacherStep,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// 1-based index of the step just taken.
    pub step: u64,
    pub lr: f64,
    pub l_sup: f64,
    pub l_un1: f64,
    pub l_un2: f64,
    pub l_un3: f64,
    pub l_freematch: f64,
    pub l_total: f64,
    pub mask_rate: f64,
    pub tau_global: f64,
    /// Student accuracy on the labeled weak views of this batch.
    pub train_acc: f64,
    /// Triangle, symmetry or diagonal violations found in the cost matrix.
    pub metric_violations: usize,
    pub trace: Vec<Stage>,
}

fn probs_at(logits: &DenseMatrix, epsilon: f64) -> DenseMatrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        softmax_in_place(p.row_mut(r), epsilon);
    }
    p
}

fn accuracy(probs: &DenseMatrix, labels: &[usize]) -> f64 {
    let hits = probs.row_iter().zip(labels).filter(|(p, &y)| argmax(p) == y).count();
    hits as f64 / labels.len().max(1) as f64
}

/// Runs one step on `batch`, mutating `state`. On a non-finite loss the
/// threshold state has already absorbed the batch but no parameter moved.
pub fn train_step(state: &mut TrainState, batch: &MixedBatch, cfg: &StepConfig) -> Result<StepReport> {
    cfg.validate()?;
    let n_l = batch.labeled.rows();
    let step = state.step + 1;
    let mut trace = Vec::with_capacity(STAGE_ORDER.len());

    // Labeled weak views and unlabeled strong views share one student pass.
    let stacked = batch.labeled.vstack(&batch.unlabeled_strong)?;
    let pass = state.student.forward_batch(&stacked, 1.0)?;
    let labeled_probs = pass.probs.slice_rows(0, n_l);
    let student_strong = pass.probs.slice_rows(n_l, pass.probs.rows());
    let teacher_pass = state.teacher.params.forward_batch(&batch.unlabeled_weak, 1.0)?;

    let sup = loss_sup(&batch.labels, &labeled_probs)?;
    trace.push(Stage::SupervisedLoss);

    state.thresholds.update(&teacher_pass.probs)?;
    trace.push(Stage::ThresholdUpdate);

    let local = state.thresholds.local_thresholds()?;
    trace.push(Stage::LocalThresholds);

    let mut preds = BatchPredictions::new(teacher_pass.probs.clone(), student_strong.clone(), &local)?;
    if cfg.teacher_epsilon > 0.0 {
        preds = preds.with_soft_targets(probs_at(&teacher_pass.logits, cfg.teacher_epsilon))?;
    }
    let un1 = loss_un1(&preds)?;
    trace.push(Stage::PseudoLabelLoss);

    let stats = masked_student_stats(&preds);
    trace.push(Stage::MaskedStudentStats);

    let un2 = loss_un2(&preds, stats.as_ref(), &state.thresholds)?;
    trace.push(Stage::FairnessLoss);

    let w = cfg.weights;
    let l_freematch = sup.value + w.w1 * un1.value + w.w2 * un2.value;
    trace.push(Stage::FreeMatchTotal);

    // A λ = 0 run is the FreeMatch baseline: the cost stays at its prior value.
    if w.lambda > 0.0 {
        match cfg.cost_target {
            CostTarget::HeadCosine => state.cost.ema_update(&state.student.head)?,
            CostTarget::Binary => {}
            CostTarget::Covariance => state.cost.ema_toward(&covariance_cost(&student_strong))?,
        }
    }
    let report = state.cost.validate(METRIC_TOLERANCE);
    trace.push(Stage::CostUpdate);

    let un3 = loss_un3(&preds, &state.cost.values)?;
    trace.push(Stage::OtLoss);

    let components = LossComponents { sup, un1, un2, un3 };
    let total = loss_total(&components, &w)?;
    trace.push(Stage::OtMatchTotal);
    if !total.value.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }

    let dlogits = total.grad_labeled.vstack(&total.grad_unlabeled)?;
    let grads = state.student.backward(&pass, &dlogits)?.grads;
    let lr = sgd_step(&mut state.student, &mut state.optimizer, &grads)?;
    trace.push(Stage::StudentStep);

    state.teacher.update(&state.student)?;
    trace.push(Stage::TeacherStep);
    state.step = step;

    Ok(StepReport {
        step,
        lr,
        l_sup: components.sup.value,
        l_un1: components.un1.value,
        l_un2: components.un2.value,
        l_un3: components.un3.value,
        l_freematch,
        l_total: total.value,
        mask_rate: preds.mask_rate(),
        tau_global: state.thresholds.global,
        train_acc: accuracy(&labeled_probs, &batch.labels),
        metric_violations: report.violation_count(),
        trace,
    })
}

/// Top-1 accuracy of `params` on `data`, without augmentation.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    const CHUNK: usize = 512;
    let mut hits = 0usize;
    let mut start = 0;
    while start < data.len() {
        let end = (start + CHUNK).min(data.len());
        let pass = params.forward_batch(&data.features.slice_rows(start, end), 1.0)?;
        hits += pass
            .logits
            .row_iter()
            .zip(&data.labels[start..end])
            .filter(|(l, &y)| argmax(l) == y)
            .count();
        start = end;
    }
    Ok(hits as f64 / data.len() as f64)
}
