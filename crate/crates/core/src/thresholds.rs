//! Self-adaptive confidence thresholds.
//!
//! Three exponential moving averages over teacher predictions on weak views:
//! the global threshold `τ_t` (mean max-confidence), the class-probability
//! vector `p̃_t` (mean prediction) and the pseudo-label histogram `h̃_t`.
//! Per-class thresholds rescale `τ_t` by `p̃_t(c) / max p̃_t`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{argmax, DenseMatrix};

pub const DEFAULT_THRESHOLD_DECAY: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub global: f64,
    pub class_probs: Vec<f64>,
    pub histogram: Vec<f64>,
    pub decay: f64,
}

/// Batch statistics the EMA is driven by.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean_max: f64,
    pub mean_probs: Vec<f64>,
    /// Normalized histogram of hard pseudo-labels.
    pub histogram: Vec<f64>,
}

impl BatchStats {
    pub fn from_probs(teacher_probs: &DenseMatrix) -> Result<Self> {
        let n = teacher_probs.rows();
        if n == 0 {
            return Err(Error::InvalidArgument("empty unlabeled batch".into()));
        }
        let k = teacher_probs.cols();
        let mut mean_max = 0.0;
        let mut mean_probs = vec![0.0; k];
        let mut histogram = vec![0.0; k];
        for q in teacher_probs.row_iter() {
            let c = argmax(q);
            mean_max += q[c];
            histogram[c] += 1.0;
            for (m, v) in mean_probs.iter_mut().zip(q) {
                *m += v;
            }
        }
        let inv = 1.0 / n as f64;
        mean_max *= inv;
        mean_probs.iter_mut().for_each(|v| *v *= inv);
        histogram.iter_mut().for_each(|v| *v *= inv);
        Ok(Self {
            mean_max,
            mean_probs,
            histogram,
        })
    }
}

impl ThresholdState {
    /// `τ_0 = 1/K`, `p̃_0 = h̃_0 = uniform`.
    pub fn new(classes: usize, decay: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "thresholds need at least 2 classes, got {classes}"
            )));
        }
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Range {
                what: "threshold decay",
                value: decay,
                range: "[0, 1)",
            });
        }
        let u = 1.0 / classes as f64;
        Ok(Self {
            global: u,
            class_probs: vec![u; classes],
            histogram: vec![u; classes],
            decay,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_probs.len()
    }

    /// One EMA step from a batch of teacher predictions (one row per sample).
    pub fn update(&mut self, teacher_probs: &DenseMatrix) -> Result<BatchStats> {
        if teacher_probs.cols() != self.classes() {
            return Err(Error::Dimension {
                context: "threshold update",
                expected: self.classes(),
                found: teacher_probs.cols(),
            });
        }
        let stats = BatchStats::from_probs(teacher_probs)?;
        let m = self.decay;
        self.global = m * self.global + (1.0 - m) * stats.mean_max;
        for (p, b) in self.class_probs.iter_mut().zip(&stats.mean_probs) {
            *p = m * *p + (1.0 - m) * b;
        }
        for (h, b) in self.histogram.iter_mut().zip(&stats.histogram) {
            *h = m * *h + (1.0 - m) * b;
        }
        Ok(stats)
    }

    /// `τ_t(c) = (p̃_t(c) / max_c' p̃_t(c')) · τ_t`.
    pub fn local_thresholds(&self) -> Result<Vec<f64>> {
        let max = self.class_probs.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::DegenerateState("class-probability EMA is all zero"));
        }
        Ok(self
            .class_probs
            .iter()
            .map(|&p| if p == max { self.global } else { p / max * self.global })
            .collect())
    }
}

/// Whether a teacher prediction passes: `max(q) > τ(argmax q)`, strictly.
pub fn mask(q: &[f64], local_thresholds: &[f64]) -> bool {
    let c = argmax(q);
    q[c] > local_thresholds[c]
}
