use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Diagonal entries above this count as nonzero.
const DIAGONAL_TOLERANCE: f64 = 1e-9;

/// Transport cost from the point mass `δ_k` to `ν` in `O(K)`.
///
/// With a Dirac source every unit of mass starts at `k`, so the coupling is
/// forced and the cost is `Σ_i C_ik · ν(i)`; it agrees with the general
/// formula `Σ_i C_ik (ν(i) − μ(i))` because `C_kk = 0`. Requires a zero
/// diagonal at `k` and a nonnegative column `k`; the triangle inequality is
/// not needed for this source shape.
pub fn fast_dirac_ot(k: usize, nu: &[f64], cost: &DenseMatrix) -> Result<f64> {
    let size = nu.len();
    if cost.rows() != size || cost.cols() != size {
        return Err(Error::Dimension {
            context: "fast_dirac_ot cost",
            expected: size,
            found: if cost.rows() != size { cost.rows() } else { cost.cols() },
        });
    }
    if k >= size {
        return Err(Error::InvalidArgument(alloc::format!(
            "source atom {k} out of range for {size} atoms"
        )));
    }
    let diag = cost.get(k, k);
    if diag.abs() > DIAGONAL_TOLERANCE {
        return Err(Error::Precondition(alloc::format!("C[{k}][{k}] = {diag} is not zero")));
    }
    let mut total = 0.0;
    for (i, &mass) in nu.iter().enumerate() {
        if i == k {
            continue;
        }
        let c = cost.get(i, k);
        if c < 0.0 {
            return Err(Error::Precondition(alloc::format!("C[{i}][{k}] = {c} is negative")));
        }
        total += c * mass;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(k: usize) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    c.set(i, j, 1.0);
                }
            }
        }
        c
    }

    #[test]
    fn identical_distributions() {
        assert_eq!(fast_dirac_ot(2, &[0.0, 0.0, 1.0], &binary(3)).unwrap(), 0.0);
    }

    #[test]
    fn binary_cost_is_missing_mass() {
        let d = fast_dirac_ot(0, &[0.7, 0.2, 0.1], &binary(3)).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn line_metric() {
        let c = DenseMatrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let d = fast_dirac_ot(0, &[0.5, 0.3, 0.2], &c).unwrap();
        assert!((d - 0.7).abs() < 1e-15);
    }

    #[test]
    fn precondition_violations() {
        let mut c = binary(2);
        c.set(1, 1, 0.5);
        assert!(matches!(fast_dirac_ot(1, &[0.5, 0.5], &c), Err(Error::Precondition(_))));
        let mut c = binary(2);
        c.set(0, 1, -1.0);
        assert!(matches!(fast_dirac_ot(1, &[0.5, 0.5], &c), Err(Error::Precondition(_))));
        assert!(fast_dirac_ot(5, &[0.5, 0.5], &binary(2)).is_err());
    }
}
