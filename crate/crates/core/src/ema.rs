//! Teacher parameters tracked as an exponential moving average of the student.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{check_layout, ModelParams};

pub const DEFAULT_TEACHER_DECAY: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherParams {
    pub params: ModelParams,
    pub decay: f64,
}

impl TeacherParams {
    /// Starts the teacher as an exact copy of the student.
    pub fn from_student(student: &ModelParams, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::Range {
                what: "ema_decay",
                value: decay,
                range: "[0, 1]",
            });
        }
        Ok(Self {
            params: student.clone(),
            decay,
        })
    }

    /// `teacher ← decay·teacher + (1 − decay)·student`, element-wise.
    pub fn update(&mut self, student: &ModelParams) -> Result<()> {
        check_layout(self.params.buffers(), student.buffers())?;
        let d = self.decay;
        for (t, s) in self.params.buffers_mut().zip(student.buffers()) {
            for (t, s) in t.iter_mut().zip(s) {
                *t = d * *t + (1.0 - d) * s;
            }
        }
        self.params.generation += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use alloc::vec::Vec;

    fn scalar(v: f64) -> ModelParams {
        ModelParams {
            layers: Vec::new(),
            head: DenseMatrix::from_vec(1, 1, alloc::vec![v]).unwrap(),
            generation: 0,
        }
    }

    #[test]
    fn decay_extremes() {
        let mut t = TeacherParams::from_student(&scalar(1.0), 0.0).unwrap();
        t.update(&scalar(5.0)).unwrap();
        assert_eq!(t.params.head.get(0, 0), 5.0);

        let mut t = TeacherParams::from_student(&scalar(1.0), 1.0).unwrap();
        t.update(&scalar(5.0)).unwrap();
        assert_eq!(t.params.head.get(0, 0), 1.0);
    }

    #[test]
    fn default_decay_step() {
        let mut t = TeacherParams::from_student(&scalar(1.0), DEFAULT_TEACHER_DECAY).unwrap();
        t.update(&scalar(0.0)).unwrap();
        assert!((t.params.head.get(0, 0) - 0.999).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut t = TeacherParams::from_student(&scalar(1.0), 0.5).unwrap();
        let other = ModelParams {
            layers: Vec::new(),
            head: DenseMatrix::zeros(2, 1),
            generation: 0,
        };
        assert!(matches!(t.update(&other), Err(Error::Dimension { .. })));
    }
}
