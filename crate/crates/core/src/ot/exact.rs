//! Exact Kantorovich transport by a dense two-phase simplex method.
//!
//! Sized for reference use: at most `EXACT_OT_MAX_SIZE` atoms per side, so the
//! tableau stays below `33 × 289`. Bland's rule is used for both the entering
//! and leaving variable, which rules out cycling on the (highly degenerate)
//! transportation polytope.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_instance, TransportPlan};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const EXACT_OT_MAX_SIZE: usize = 16;

const PIVOT_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

/// Minimal `⟨C, T⟩` over couplings `T ∈ U(μ, ν)`, with an optimal plan.
pub fn exact_ot(mu: &[f64], nu: &[f64], cost: &DenseMatrix) -> Result<(f64, TransportPlan)> {
    let (m, n) = (mu.len(), nu.len());
    if m > EXACT_OT_MAX_SIZE || n > EXACT_OT_MAX_SIZE {
        return Err(Error::Scale {
            rows: m,
            cols: n,
            limit: EXACT_OT_MAX_SIZE,
        });
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty marginal".into()));
    }
    check_instance(mu, nu, cost)?;

    // Match the target mass to the source mass exactly so that dropping one
    // (redundant) column constraint keeps the system consistent.
    let (sm, sn): (f64, f64) = (mu.iter().sum(), nu.iter().sum());
    let nu_scaled: Vec<f64> = if sn > 0.0 {
        nu.iter().map(|v| v * sm / sn).collect()
    } else {
        nu.to_vec()
    };

    let x = solve_transport_lp(mu, &nu_scaled, cost)?;
    let plan = DenseMatrix::from_vec(m, n, x)?;
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

struct Tableau {
    /// Constraint rows plus the objective row last; RHS is the last column.
    t: Vec<f64>,
    width: usize,
    rows: usize,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.at(pr, pc);
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        self.t[pr * w + pc] = 1.0;
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                let v = self.t[pr * w + c];
                if v != 0.0 {
                    self.t[r * w + c] -= f * v;
                }
            }
            self.t[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Recomputes the objective row for column costs `costs` (length `width-1`).
    fn set_objective(&mut self, costs: &[f64]) {
        let w = self.width;
        let obj = self.rows;
        for c in 0..w {
            let direct = if c < w - 1 { costs[c] } else { 0.0 };
            let mut v = direct;
            for r in 0..self.rows {
                v -= costs[self.basis[r]] * self.at(r, c);
            }
            self.t[obj * w + c] = v;
        }
    }

    /// Runs simplex iterations; entering columns restricted to `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let obj = self.rows;
        for _ in 0..MAX_PIVOTS {
            let Some(pc) = (0..allowed).find(|&c| self.at(obj, c) < -PIVOT_EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - PIVOT_EPS
                                || (ratio <= bratio + PIVOT_EPS && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            // The transportation polytope is bounded, so an unbounded ray
            // can only come from numerical breakdown.
            let Some((pr, _)) = best else {
                return Err(Error::InvalidArgument("simplex found an unbounded direction".into()));
            };
            self.pivot(pr, pc);
        }
        Err(Error::InvalidArgument("simplex exceeded its pivot budget".into()))
    }
}

fn solve_transport_lp(mu: &[f64], nu: &[f64], cost: &DenseMatrix) -> Result<Vec<f64>> {
    let (m, n) = (mu.len(), nu.len());
    let vars = m * n;
    // Row sums for every source atom, column sums for all but the last target.
    let rows = m + n - 1;
    let width = vars + rows + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    for i in 0..m {
        for j in 0..n {
            t[i * width + i * n + j] = 1.0;
        }
        t[i * width + width - 1] = mu[i];
    }
    for j in 0..n - 1 {
        let r = m + j;
        for i in 0..m {
            t[r * width + i * n + j] = 1.0;
        }
        t[r * width + width - 1] = nu[j];
    }
    for r in 0..rows {
        t[r * width + vars + r] = 1.0;
    }
    let mut tab = Tableau {
        t,
        width,
        rows,
        basis: (vars..vars + rows).collect(),
    };

    // Phase 1: minimise the sum of artificials.
    let mut phase1 = vec![0.0; width - 1];
    phase1[vars..].iter_mut().for_each(|c| *c = 1.0);
    tab.set_objective(&phase1);
    tab.optimize(vars)?;
    let infeasibility: f64 = (0..rows)
        .filter(|&r| tab.basis[r] >= vars)
        .map(|r| tab.rhs(r))
        .sum();
    if infeasibility > 1e-9 {
        return Err(Error::InvalidArgument(alloc::format!(
            "transport LP infeasible (residual {infeasibility:e})"
        )));
    }
    // Pivot remaining zero-valued artificials out where a structural column allows it.
    for r in 0..rows {
        if tab.basis[r] >= vars {
            if let Some(c) = (0..vars).find(|&c| tab.at(r, c).abs() > 1e-9) {
                tab.pivot(r, c);
            }
        }
    }

    // Phase 2: the actual transport cost; artificials may not re-enter.
    let mut phase2 = vec![0.0; width - 1];
    phase2[..vars].copy_from_slice(cost.values());
    tab.set_objective(&phase2);
    tab.optimize(vars)?;

    let mut x = vec![0.0; vars];
    for r in 0..rows {
        let b = tab.basis[r];
        if b < vars {
            x[b] = tab.rhs(r).max(0.0);
        }
    }
    Ok(x)
}
