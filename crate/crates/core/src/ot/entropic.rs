use alloc::vec;

use super::TransportPlan;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::softmax_in_place;

/// `H(T) = Σ (1 − log T_ij)·T_ij`, with `0·log 0 = 0`.
pub fn entropy(plan: &DenseMatrix) -> f64 {
    plan.values()
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| (1.0 - libm::log(t)) * t)
        .sum()
}

/// `⟨C, T⟩ − ε·H(T)`.
pub fn entropic_objective(cost: &DenseMatrix, plan: &DenseMatrix, epsilon: f64) -> Result<f64> {
    Ok(cost.frobenius_dot(plan)? - epsilon * entropy(plan))
}

/// `T_ij = (1/m) · exp(−C_ij/ε) / Σ_k exp(−C_ik/ε)`: the minimizer of the
/// entropic objective over plans whose rows each sum to `1/m`.
pub fn closed_form_row_plan(cost: &DenseMatrix, epsilon: f64) -> Result<TransportPlan> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Range {
            what: "epsilon",
            value: epsilon,
            range: "(0, inf)",
        });
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("cost matrix"));
    }
    let m = cost.rows();
    let share = 1.0 / m as f64;
    let mut plan = cost.clone();
    for r in 0..m {
        let row = plan.row_mut(r);
        row.iter_mut().for_each(|c| *c = -*c);
        softmax_in_place(row, epsilon);
        row.iter_mut().for_each(|t| *t *= share);
    }
    Ok(TransportPlan {
        plan,
        source: vec![share; m],
        target: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_is_uniform() {
        let c = DenseMatrix::from_vec(2, 4, vec![3.0; 8]).unwrap();
        let t = closed_form_row_plan(&c, 0.5).unwrap();
        assert!(t.plan.values().iter().all(|&v| (v - 1.0 / 8.0).abs() < 1e-15));
    }

    #[test]
    fn single_row_softmax() {
        let c = DenseMatrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let t = closed_form_row_plan(&c, 1.0).unwrap();
        assert!((t.plan.get(0, 0) - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((t.plan.get(0, 1) - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn cold_limit_is_one_hot() {
        let c = DenseMatrix::from_rows(&[[0.4, 0.1, 0.9]]).unwrap();
        let t = closed_form_row_plan(&c, 0.001).unwrap();
        assert!((t.plan.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let c = DenseMatrix::zeros(1, 2);
        assert!(closed_form_row_plan(&c, 0.0).is_err());
        assert!(closed_form_row_plan(&c, -1.0).is_err());
    }
}
