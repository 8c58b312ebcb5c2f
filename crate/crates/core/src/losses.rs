//! Training losses and their gradients with respect to student logits.
//!
//! Every loss here sees student probabilities produced by a temperature-1
//! softmax, so gradients are pulled back through `diag(p) − p pᵀ`. Teacher
//! quantities (pseudo-labels, mask, threshold state, cost matrix) are
//! constants.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{argmax, DenseMatrix};
use crate::ot::fast_dirac_ot;
use crate::thresholds::{mask, ThresholdState};

/// Floor inside every logarithm; the clamped branch has zero gradient.
pub const LOG_FLOOR: f64 = 1e-12;
/// Added to histogram bins before the fairness ratio.
pub const HISTOGRAM_SMOOTHING: f64 = 1e-12;

/// A scalar loss and its gradient with respect to the logits that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: DenseMatrix,
}

impl LossTerm {
    fn zero(rows: usize, cols: usize) -> Self {
        Self {
            value: 0.0,
            grad: DenseMatrix::zeros(rows, cols),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 0.001,
            lambda: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("w1", self.w1), ("w2", self.w2), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Range {
                    what,
                    value: v,
                    range: "[0, inf)",
                });
            }
        }
        Ok(())
    }
}

#[inline]
fn clamped_log(p: f64) -> f64 {
    libm::log(p.max(LOG_FLOOR))
}

/// `∂L/∂logits = p ⊙ (g − ⟨g, p⟩)` for `p = softmax(logits)` and `g = ∂L/∂p`.
pub fn softmax_backward(p: &[f64], g: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(pi, gi)| pi * (gi - inner)).collect()
}

/// Cross-entropy `−Σ t log p` of one row, accumulated into `grad` scaled by `scale`.
fn cross_entropy_row(target: &[f64], p: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let mut value = 0.0;
    let mut dp = vec![0.0; p.len()];
    for (k, (&t, &pk)) in target.iter().zip(p).enumerate() {
        if t == 0.0 {
            continue;
        }
        value -= t * clamped_log(pk);
        if pk > LOG_FLOOR {
            dp[k] = -t / pk;
        }
    }
    for (g, d) in grad.iter_mut().zip(softmax_backward(p, &dp)) {
        *g += scale * d;
    }
    value
}

fn one_hot(k: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[k] = 1.0;
    v
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::InvalidArgument(alloc::format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean cross-entropy between labels and weak-view student probabilities.
pub fn loss_sup(labels: &[usize], probs: &DenseMatrix) -> Result<LossTerm> {
    if labels.len() != probs.rows() {
        return Err(Error::Dimension {
            context: "loss_sup labels",
            expected: probs.rows(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty labeled batch".into()));
    }
    let k = probs.cols();
    let scale = 1.0 / labels.len() as f64;
    let mut out = LossTerm::zero(probs.rows(), k);
    for (i, &y) in labels.iter().enumerate() {
        check_label(y, k)?;
        let v = cross_entropy_row(&one_hot(y, k), probs.row(i), scale, out.grad.row_mut(i));
        out.value += scale * v;
    }
    Ok(out)
}

/// Predictions on one unlabeled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPredictions {
    /// Teacher probabilities on weak views.
    pub teacher: DenseMatrix,
    /// Student probabilities on strong views.
    pub student: DenseMatrix,
    pub pseudo_labels: Vec<usize>,
    pub mask: Vec<bool>,
    /// Optional soft targets for the pseudo-label loss; hard one-hot when absent.
    pub soft_targets: Option<DenseMatrix>,
}

impl BatchPredictions {
    pub fn new(teacher: DenseMatrix, student: DenseMatrix, local_thresholds: &[f64]) -> Result<Self> {
        teacher.check_same_shape(&student, "BatchPredictions")?;
        if local_thresholds.len() != teacher.cols() {
            return Err(Error::Dimension {
                context: "BatchPredictions thresholds",
                expected: teacher.cols(),
                found: local_thresholds.len(),
            });
        }
        let pseudo_labels = teacher.row_iter().map(argmax).collect();
        let mask = teacher.row_iter().map(|q| mask(q, local_thresholds)).collect();
        Ok(Self {
            teacher,
            student,
            pseudo_labels,
            mask,
            soft_targets: None,
        })
    }

    pub fn with_soft_targets(mut self, targets: DenseMatrix) -> Result<Self> {
        targets.check_same_shape(&self.student, "soft targets")?;
        self.soft_targets = Some(targets);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.student.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> usize {
        self.student.cols()
    }

    pub fn mask_rate(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty unlabeled batch".into()));
        }
        if self.pseudo_labels.len() != self.len() || self.mask.len() != self.len() {
            return Err(Error::Length {
                expected: self.len(),
                found: self.pseudo_labels.len().min(self.mask.len()),
            });
        }
        for &y in &self.pseudo_labels {
            check_label(y, self.classes())?;
        }
        Ok(())
    }
}

/// Masked pseudo-label cross-entropy, averaged over the whole unlabeled batch.
pub fn loss_un1(batch: &BatchPredictions) -> Result<LossTerm> {
    batch.check()?;
    let (n, k) = batch.student.shape();
    let scale = 1.0 / n as f64;
    let mut out = LossTerm::zero(n, k);
    for i in 0..n {
        if !batch.mask[i] {
            continue;
        }
        let hard;
        let target = match &batch.soft_targets {
            Some(t) => t.row(i),
            None => {
                hard = one_hot(batch.pseudo_labels[i], k);
                &hard
            }
        };
        let v = cross_entropy_row(target, batch.student.row(i), scale, out.grad.row_mut(i));
        out.value += scale * v;
    }
    Ok(out)
}

fn sum_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Masked strong-view statistics: mean student probability `p̄` and the
/// normalized histogram `h̄` of student argmaxes over the passing samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedStats {
    pub p_bar: Vec<f64>,
    pub h_bar: Vec<f64>,
    pub count: usize,
}

/// `None` when no sample passes the mask.
pub fn masked_student_stats(batch: &BatchPredictions) -> Option<MaskedStats> {
    let k = batch.classes();
    let mut p_bar = vec![0.0; k];
    let mut h_bar = vec![0.0; k];
    let mut count = 0usize;
    for (i, q) in batch.student.row_iter().enumerate() {
        if !batch.mask[i] {
            continue;
        }
        count += 1;
        h_bar[argmax(q)] += 1.0;
        for (a, b) in p_bar.iter_mut().zip(q) {
            *a += b;
        }
    }
    if count == 0 {
        return None;
    }
    let inv = 1.0 / count as f64;
    p_bar.iter_mut().for_each(|v| *v *= inv);
    h_bar.iter_mut().for_each(|v| *v *= inv);
    Some(MaskedStats { p_bar, h_bar, count })
}

/// `SumNorm(p / (h + s))`.
pub fn fairness_ratio(p: &[f64], h: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = p.iter().zip(h).map(|(a, b)| a / (b + HISTOGRAM_SMOOTHING)).collect();
    sum_normalize(&mut r);
    r
}

/// `Σ a log b` with `a = SumNorm(p̃/h̃)` and `b = SumNorm(p̄/h̄)`; zero when the
/// mask is empty. `stats` must come from [`masked_student_stats`] on the same
/// batch. The gradient flows through `p̄` only.
pub fn loss_un2(batch: &BatchPredictions, stats: Option<&MaskedStats>, state: &ThresholdState) -> Result<LossTerm> {
    batch.check()?;
    let (n, k) = batch.student.shape();
    if state.classes() != k {
        return Err(Error::Dimension {
            context: "loss_un2 threshold state",
            expected: k,
            found: state.classes(),
        });
    }
    let mut out = LossTerm::zero(n, k);
    let Some(MaskedStats { p_bar, h_bar, count }) = stats else {
        return Ok(out);
    };
    if p_bar.len() != k || h_bar.len() != k {
        return Err(Error::Dimension {
            context: "loss_un2 masked statistics",
            expected: k,
            found: p_bar.len(),
        });
    }
    let a = fairness_ratio(&state.class_probs, &state.histogram);
    let r: Vec<f64> = p_bar.iter().zip(h_bar).map(|(p, h)| p / (h + HISTOGRAM_SMOOTHING)).collect();
    let s: f64 = r.iter().sum();
    if !(s > 0.0) {
        return Err(Error::DegenerateState("fairness ratio sums to zero"));
    }
    let b: Vec<f64> = r.iter().map(|x| x / s).collect();
    out.value = a.iter().zip(&b).map(|(ai, bi)| ai * clamped_log(*bi)).sum();

    // ∂L/∂b, then through b = r/Σr, then r = p̄/(h̄+s), then p̄ = mean of masked rows.
    let g_b: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(ai, bi)| if *bi > LOG_FLOOR { ai / bi } else { 0.0 })
        .collect();
    let gb_dot_b: f64 = g_b.iter().zip(&b).map(|(g, x)| g * x).sum();
    let count = *count as f64;
    let g_p: Vec<f64> = g_b
        .iter()
        .zip(h_bar)
        .map(|(g, h)| (g - gb_dot_b) / s / (h + HISTOGRAM_SMOOTHING) / count)
        .collect();
    for i in 0..n {
        if batch.mask[i] {
            let d = softmax_backward(batch.student.row(i), &g_p);
            out.grad.row_mut(i).copy_from_slice(&d);
        }
    }
    Ok(out)
}

/// Masked mean over the unlabeled batch of the transport cost from the
/// pseudo-label Dirac to the student prediction.
pub fn loss_un3(batch: &BatchPredictions, cost: &DenseMatrix) -> Result<LossTerm> {
    batch.check()?;
    let (n, k) = batch.student.shape();
    if cost.shape() != (k, k) {
        return Err(Error::Dimension {
            context: "loss_un3 cost",
            expected: k,
            found: cost.rows(),
        });
    }
    let scale = 1.0 / n as f64;
    let mut out = LossTerm::zero(n, k);
    for i in 0..n {
        if !batch.mask[i] {
            continue;
        }
        let y = batch.pseudo_labels[i];
        let q = batch.student.row(i);
        out.value += scale * fast_dirac_ot(y, q, cost)?;
        let c: Vec<f64> = (0..k).map(|j| scale * cost.get(j, y)).collect();
        out.grad.row_mut(i).copy_from_slice(&softmax_backward(q, &c));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossComponents {
    /// Gradient rows index the labeled batch.
    pub sup: LossTerm,
    /// Gradient rows of the three unlabeled terms index the strong-view batch.
    pub un1: LossTerm,
    pub un2: LossTerm,
    pub un3: LossTerm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub value: f64,
    /// `L_sup + w1 L_un1 + w2 L_un2`.
    pub freematch: f64,
    pub grad_labeled: DenseMatrix,
    pub grad_unlabeled: DenseMatrix,
}

/// `L_sup + w1 L_un1 + w2 L_un2 + λ L_un3` together with its logit gradients.
pub fn loss_total(c: &LossComponents, w: &LossWeights) -> Result<TotalLoss> {
    w.validate()?;
    c.un1.grad.check_same_shape(&c.un2.grad, "loss_total")?;
    c.un1.grad.check_same_shape(&c.un3.grad, "loss_total")?;
    let freematch = c.sup.value + w.w1 * c.un1.value + w.w2 * c.un2.value;
    let value = freematch + w.lambda * c.un3.value;
    let mut grad_unlabeled = c.un1.grad.clone();
    for (((g, a), b), d) in grad_unlabeled
        .values_mut()
        .iter_mut()
        .zip(c.un1.grad.values())
        .zip(c.un2.grad.values())
        .zip(c.un3.grad.values())
    {
        *g = w.w1 * a + w.w2 * b + w.lambda * d;
    }
    Ok(TotalLoss {
        value,
        freematch,
        grad_labeled: c.sup.grad.clone(),
        grad_unlabeled,
    })
}
