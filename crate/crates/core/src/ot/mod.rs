//! Discrete optimal transport.
//!
//! * [`exact_ot`]: Kantorovich problem solved exactly as a linear program
//!   (small instances only; used as a reference solver).
//! * [`sinkhorn`]: entropic transport with log-domain Sinkhorn scaling.
//! * [`closed_form_row_plan`]: minimizer of the entropic objective when only
//!   the row marginal `T·1 = 1/m` is imposed.
//! * [`fast_dirac_ot`]: `O(K)` transport cost from a Dirac source.
//! * [`generalized_kl`] and [`wasserstein_to_dirac_argmin`].

mod dirac;
mod divergence;
mod entropic;
mod exact;
mod sinkhorn;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub use dirac::fast_dirac_ot;
pub use divergence::{dirac_fit_objective, generalized_kl, wasserstein_to_dirac_argmin};
pub use entropic::{closed_form_row_plan, entropic_objective, entropy};
pub use exact::{exact_ot, EXACT_OT_MAX_SIZE};
pub use sinkhorn::{sinkhorn, sinkhorn_row_marginal_only, OtConfig};

/// Tolerance on the total mass of a probability vector.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MassMode {
    /// Entries sum to one.
    Probability,
    /// Only nonnegativity is required.
    PositiveMeasure,
}

/// A nonnegative vector over `K` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVec {
    values: Vec<f64>,
    mode: MassMode,
}

impl ProbVec {
    pub fn probability(values: Vec<f64>) -> Result<Self> {
        Self::new(values, MassMode::Probability)
    }

    pub fn measure(values: Vec<f64>) -> Result<Self> {
        Self::new(values, MassMode::PositiveMeasure)
    }

    pub fn new(values: Vec<f64>, mode: MassMode) -> Result<Self> {
        check_nonnegative(&values, "ProbVec")?;
        if mode == MassMode::Probability {
            let total: f64 = values.iter().sum();
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::InvalidArgument(alloc::format!(
                    "probability vector sums to {total}"
                )));
            }
        }
        Ok(Self { values, mode })
    }

    /// Point mass on atom `k` of `len` atoms.
    pub fn dirac(k: usize, len: usize) -> Result<Self> {
        if k >= len {
            return Err(Error::InvalidArgument(alloc::format!(
                "Dirac atom {k} out of range for {len} atoms"
            )));
        }
        let mut values = alloc::vec![0.0; len];
        values[k] = 1.0;
        Ok(Self {
            values,
            mode: MassMode::Probability,
        })
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            values: alloc::vec![1.0 / len as f64; len],
            mode: MassMode::Probability,
        }
    }

    pub fn mode(&self) -> MassMode {
        self.mode
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl core::ops::Deref for ProbVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// A coupling between a source and (optionally) a target marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub plan: DenseMatrix,
    pub source: Vec<f64>,
    pub target: Option<Vec<f64>>,
}

impl TransportPlan {
    /// `‖T·1 − μ‖₁`.
    pub fn source_residual(&self) -> f64 {
        l1_gap(&self.plan.row_sums(), &self.source)
    }

    /// `‖Tᵀ·1 − ν‖₁`, or 0 when no target marginal is imposed.
    pub fn target_residual(&self) -> f64 {
        self.target
            .as_ref()
            .map_or(0.0, |nu| l1_gap(&self.plan.col_sums(), nu))
    }

    /// `⟨C, T⟩`.
    pub fn cost(&self, cost: &DenseMatrix) -> Result<f64> {
        self.plan.frobenius_dot(cost)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.plan.values().iter().all(|&v| v >= 0.0)
    }
}

fn l1_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub(crate) fn check_nonnegative(values: &[f64], context: &'static str) -> Result<()> {
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite(context));
        }
        if v < 0.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "{context} has negative entry {v}"
            )));
        }
    }
    Ok(())
}

/// Validates `μ`, `ν` and an `m × n` cost.
pub(crate) fn check_instance(mu: &[f64], nu: &[f64], cost: &DenseMatrix) -> Result<()> {
    check_nonnegative(mu, "source marginal")?;
    check_nonnegative(nu, "target marginal")?;
    check_nonnegative(cost.values(), "cost matrix")?;
    if cost.rows() != mu.len() {
        return Err(Error::Dimension {
            context: "cost rows vs source marginal",
            expected: mu.len(),
            found: cost.rows(),
        });
    }
    if cost.cols() != nu.len() {
        return Err(Error::Dimension {
            context: "cost cols vs target marginal",
            expected: nu.len(),
            found: cost.cols(),
        });
    }
    let (sm, sn): (f64, f64) = (mu.iter().sum(), nu.iter().sum());
    if (sm - sn).abs() > MASS_TOLERANCE {
        return Err(Error::Marginal {
            source_mass: sm,
            target_mass: sn,
        });
    }
    Ok(())
}
