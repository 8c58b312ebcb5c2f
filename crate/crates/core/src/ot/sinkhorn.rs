use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_instance, check_nonnegative, TransportPlan};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtConfig {
    /// Entropic regularization strength `ε > 0`.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the L1 marginal residual.
    pub marginal_tolerance: f64,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iterations: 200_000,
            marginal_tolerance: 1e-9,
        }
    }
}

impl OtConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Range {
                what: "epsilon",
                value: self.epsilon,
                range: "(0, inf)",
            });
        }
        if !(self.marginal_tolerance > 0.0) {
            return Err(Error::Range {
                what: "marginal_tolerance",
                value: self.marginal_tolerance,
                range: "(0, inf)",
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Entropic transport between `μ` and `ν`.
///
/// Iterates on the dual potentials `f, g` in the log domain, so it stays
/// stable for small `ε`. Zero-mass atoms are removed before iterating and
/// come back as zero rows/columns of the plan. Returns `⟨C, T⟩` for the
/// final plan.
pub fn sinkhorn(
    mu: &[f64],
    nu: &[f64],
    cost: &DenseMatrix,
    cfg: &OtConfig,
) -> Result<(f64, TransportPlan)> {
    cfg.validate()?;
    check_instance(mu, nu, cost)?;
    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidArgument("marginals carry no mass".into()));
    }
    let mu_t: Vec<f64> = rows.iter().map(|&i| mu[i]).collect();
    let nu_t: Vec<f64> = cols.iter().map(|&j| nu[j]).collect();
    let mut c_t = DenseMatrix::zeros(rows.len(), cols.len());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            c_t.set(a, b, cost.get(i, j));
        }
    }

    let trimmed = log_sinkhorn(&mu_t, Some(&nu_t), &c_t, cfg)?;

    let mut plan = DenseMatrix::zeros(mu.len(), nu.len());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan.set(i, j, trimmed.get(a, b));
        }
    }
    let distance = plan.frobenius_dot(cost)?;
    Ok((
        distance,
        TransportPlan {
            plan,
            source: mu.to_vec(),
            target: Some(nu.to_vec()),
        },
    ))
}

/// Sinkhorn with the column constraint dropped: a single row projection of
/// the Gibbs kernel, which already satisfies `T·1 = μ`.
pub fn sinkhorn_row_marginal_only(
    mu: &[f64],
    cost: &DenseMatrix,
    cfg: &OtConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    check_nonnegative(mu, "source marginal")?;
    if cost.rows() != mu.len() {
        return Err(Error::Dimension {
            context: "cost rows vs source marginal",
            expected: mu.len(),
            found: cost.rows(),
        });
    }
    let plan = log_sinkhorn(mu, None, cost, cfg)?;
    Ok(TransportPlan {
        plan,
        source: mu.to_vec(),
        target: None,
    })
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(it.map(|v| libm::exp(v - max)).sum::<f64>())
}

fn log_sinkhorn(
    mu: &[f64],
    nu: Option<&[f64]>,
    cost: &DenseMatrix,
    cfg: &OtConfig,
) -> Result<DenseMatrix> {
    let (m, n) = cost.shape();
    let eps = cfg.epsilon;
    let log_mu: Vec<f64> = mu.iter().map(|&v| libm::log(v)).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];

    let update_f = |f: &mut [f64], g: &[f64]| {
        for i in 0..m {
            let row = cost.row(i);
            let lse = log_sum_exp((0..n).map(|j| (g[j] - row[j]) / eps));
            f[i] = eps * (log_mu[i] - lse);
        }
    };

    let Some(nu) = nu else {
        update_f(&mut f, &g);
        return Ok(gibbs_plan(&f, &g, cost, eps));
    };

    let log_nu: Vec<f64> = nu.iter().map(|&v| libm::log(v)).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        update_f(&mut f, &g);
        for j in 0..n {
            let lse = log_sum_exp((0..m).map(|i| (f[i] - cost.get(i, j)) / eps));
            g[j] = eps * (log_nu[j] - lse);
        }
        // Columns are exact after the g-update; measure the row residual.
        residual = 0.0;
        for i in 0..m {
            let row = cost.row(i);
            let s: f64 = (0..n)
                .map(|j| libm::exp((f[i] + g[j] - row[j]) / eps))
                .sum();
            residual += (s - mu[i]).abs();
        }
        if !residual.is_finite() {
            return Err(Error::NonFinite("sinkhorn potentials"));
        }
        if residual < cfg.marginal_tolerance {
            return Ok(gibbs_plan(&f, &g, cost, eps));
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_iterations,
        residual,
    })
}

fn gibbs_plan(f: &[f64], g: &[f64], cost: &DenseMatrix, eps: f64) -> DenseMatrix {
    let (m, n) = cost.shape();
    let mut plan = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            plan.set(i, j, libm::exp((f[i] + g[j] - cost.get(i, j)) / eps));
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_identity_transport() {
        let c = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let (d, plan) = sinkhorn(&[0.5, 0.5], &[0.5, 0.5], &c, &OtConfig::default()).unwrap();
        assert!(d < 0.01);
        assert!(plan.source_residual() < 1e-9 && plan.target_residual() < 1e-9);
    }

    #[test]
    fn constant_cost() {
        let c = DenseMatrix::from_vec(3, 3, vec![0.7; 9]).unwrap();
        let u = [1.0 / 3.0; 3];
        let (d, _) = sinkhorn(&u, &u, &c, &OtConfig::default()).unwrap();
        assert!((d - 0.7).abs() < 1e-9);
    }

    #[test]
    fn zero_mass_atoms_are_restored() {
        let c = DenseMatrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let (d, plan) = sinkhorn(&[1.0, 0.0, 0.0], &[0.5, 0.3, 0.2], &c, &OtConfig::default()).unwrap();
        assert!((d - 0.7).abs() < 1e-9);
        assert!(plan.plan.row(1).iter().all(|&v| v == 0.0));
        assert!(plan.plan.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let c = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let cfg = OtConfig {
            epsilon: 0.5,
            max_iterations: 1,
            marginal_tolerance: 1e-15,
        };
        let err = sinkhorn(&[0.9, 0.1], &[0.2, 0.8], &c, &cfg).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 1, .. }));
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let c = DenseMatrix::zeros(1, 1);
        let cfg = OtConfig {
            epsilon: 0.0,
            ..OtConfig::default()
        };
        assert!(sinkhorn(&[1.0], &[1.0], &c, &cfg).is_err());
    }
}
