use super::check_nonnegative;
use crate::error::{Error, Result};

/// Generalized KL divergence between positive measures:
/// `Σ P log(P/Q) − Σ P + Σ Q`, with `0·log 0 = 0`.
///
/// Reduces to the usual KL divergence for probability vectors.
pub fn generalized_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            context: "generalized_kl",
            expected: p.len(),
            found: q.len(),
        });
    }
    check_nonnegative(p, "P")?;
    check_nonnegative(q, "Q")?;
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi == 0.0 {
                return Err(Error::Support { index });
            }
            total += pi * libm::log(pi / qi);
        }
        total += qi - pi;
    }
    Ok(total)
}

/// `(1/m) Σ (x − s_i)²`: the squared-distance transport cost from `δ_x` to
/// the empirical measure of the samples.
pub fn dirac_fit_objective(x: f64, samples: &[f64]) -> f64 {
    samples.iter().map(|s| (x - s) * (x - s)).sum::<f64>() / samples.len() as f64
}

/// Location of the Dirac measure closest (in squared-ℓ² transport cost) to the
/// empirical measure of `samples`: the sample mean.
pub fn wasserstein_to_dirac_argmin(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_examples() {
        assert_eq!(generalized_kl(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let v = generalized_kl(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        // 0.5 ln 2 + 0.5 ln(2/3)
        assert!((v - 0.143_841_036_225_890_2).abs() < 1e-15);
        let v = generalized_kl(&[0.3], &[0.6]).unwrap();
        assert!((v - (0.3 * libm::log(0.5) + 0.3)).abs() < 1e-15);
        assert!((v - 0.0921).abs() < 1e-4);
    }

    #[test]
    fn kl_support_error() {
        assert_eq!(
            generalized_kl(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::Support { index: 1 })
        );
        // P = 0 where Q = 0 is fine
        assert!(generalized_kl(&[1.0, 0.0], &[1.0, 0.0]).is_ok());
    }

    #[test]
    fn dirac_argmin_examples() {
        assert_eq!(wasserstein_to_dirac_argmin(&[5.0]).unwrap(), 5.0);
        assert_eq!(wasserstein_to_dirac_argmin(&[0.0, 1.0]).unwrap(), 0.5);
        let s = [0.2, 0.8, 0.9, 0.5];
        let x = wasserstein_to_dirac_argmin(&s).unwrap();
        assert!((x - 0.6).abs() < 1e-15);
        let best = dirac_fit_objective(x, &s);
        for i in 0..=1000 {
            assert!(dirac_fit_objective(i as f64 * 1e-3, &s) >= best);
        }
        assert!(wasserstein_to_dirac_argmin(&[]).is_err());
    }
}
