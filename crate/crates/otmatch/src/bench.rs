//! OT micro-benchmark: exact LP, log-domain Sinkhorn and the `O(K)` Dirac
//! formula on user instances, plus a timing sweep over `K`.
//!
//! Instances are JSON Lines. Each object carries `mu`, `nu`, `cost` (flat
//! row-major or nested rows) and an optional `epsilon`.

use std::hint::black_box;
use std::time::Instant;

use otmatch_core::ot::{exact_ot, fast_dirac_ot, sinkhorn, OtConfig, EXACT_OT_MAX_SIZE};
use otmatch_core::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const SCALING_SIZES: [usize; 4] = [4, 16, 64, 256];

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CostField {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    mu: Vec<f64>,
    nu: Vec<f64>,
    cost: CostField,
    #[serde(default)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// 1-based line number in the input.
    pub line: usize,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub cost: DenseMatrix,
    pub epsilon: f64,
}

/// A malformed input line.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct InputError {
    pub line: usize,
    pub message: String,
}

/// Parses JSON Lines; blank lines are skipped.
pub fn parse_instances(text: &str) -> Result<Vec<Instance>, InputError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| InputError { line, message };
        let inst: RawInstance = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let (m, n) = (inst.mu.len(), inst.nu.len());
        let cost = match inst.cost {
            CostField::Flat(v) => DenseMatrix::from_vec(m, n, v),
            CostField::Nested(rows) => {
                if rows.len() != m {
                    return Err(err(format!("cost has {} rows, mu has {m} entries", rows.len())));
                }
                DenseMatrix::from_rows(&rows)
            }
        }
        .map_err(|e| err(e.to_string()))?;
        if cost.shape() != (m, n) {
            return Err(err(format!("cost is {:?}, expected ({m}, {n})", cost.shape())));
        }
        let epsilon = inst.epsilon.unwrap_or(DEFAULT_EPSILON);
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(err(format!("epsilon must be positive, got {epsilon}")));
        }
        out.push(Instance {
            line,
            mu: inst.mu,
            nu: inst.nu,
            cost,
            epsilon,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub value: Option<f64>,
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

impl SolverResult {
    fn skipped(reason: &str) -> Self {
        Self {
            value: None,
            seconds: None,
            error: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub line: usize,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    pub exact: SolverResult,
    pub sinkhorn: SolverResult,
    pub sinkhorn_source_residual: Option<f64>,
    pub sinkhorn_target_residual: Option<f64>,
    pub dirac: SolverResult,
    /// Largest pairwise gap among the solvers that produced a value.
    pub max_discrepancy: Option<f64>,
}

/// Mean seconds per call, repeating until at least `budget` seconds elapse.
fn time_per_call<T>(budget: f64, mut f: impl FnMut() -> T) -> f64 {
    let mut reps = 1u64;
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            black_box(f());
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= budget || reps >= 1 << 30 {
            return elapsed / reps as f64;
        }
        reps *= 2;
    }
}

/// Source atom when `μ` puts all its mass on one class of a square instance.
pub fn dirac_atom(mu: &[f64], n: usize) -> Option<usize> {
    if mu.len() != n {
        return None;
    }
    let mut support = mu.iter().enumerate().filter(|(_, &v)| v != 0.0);
    let (k, _) = support.next()?;
    support.next().is_none().then_some(k)
}

pub fn run_instance(inst: &Instance, timing_budget: f64) -> InstanceReport {
    let (m, n) = inst.cost.shape();
    let exact = if m <= EXACT_OT_MAX_SIZE && n <= EXACT_OT_MAX_SIZE {
        match exact_ot(&inst.mu, &inst.nu, &inst.cost) {
            Ok((v, _)) => SolverResult {
                value: Some(v),
                seconds: Some(time_per_call(timing_budget, || exact_ot(&inst.mu, &inst.nu, &inst.cost))),
                error: None,
            },
            Err(e) => SolverResult::skipped(&e.to_string()),
        }
    } else {
        SolverResult::skipped("instance larger than the exact solver limit")
    };

    let cfg = OtConfig {
        epsilon: inst.epsilon,
        ..OtConfig::default()
    };
    let (sinkhorn_res, src_res, tgt_res) = match sinkhorn(&inst.mu, &inst.nu, &inst.cost, &cfg) {
        Ok((v, plan)) => (
            SolverResult {
                value: Some(v),
                seconds: Some(time_per_call(timing_budget, || sinkhorn(&inst.mu, &inst.nu, &inst.cost, &cfg))),
                error: None,
            },
            Some(plan.source_residual()),
            Some(plan.target_residual()),
        ),
        Err(e) => (SolverResult::skipped(&e.to_string()), None, None),
    };

    let dirac = match dirac_atom(&inst.mu, n) {
        Some(k) => match fast_dirac_ot(k, &inst.nu, &inst.cost) {
            Ok(v) => SolverResult {
                value: Some(v),
                seconds: Some(time_per_call(timing_budget, || fast_dirac_ot(k, &inst.nu, &inst.cost))),
                error: None,
            },
            Err(e) => SolverResult::skipped(&e.to_string()),
        },
        None => SolverResult::skipped("source is not a Dirac"),
    };

    let values: Vec<f64> = [&exact, &sinkhorn_res, &dirac].iter().filter_map(|r| r.value).collect();
    let max_discrepancy = (values.len() >= 2).then(|| {
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    });
    InstanceReport {
        line: inst.line,
        m,
        n,
        epsilon: inst.epsilon,
        exact,
        sinkhorn: sinkhorn_res,
        sinkhorn_source_residual: src_res,
        sinkhorn_target_residual: tgt_res,
        dirac,
        max_discrepancy,
    }
}

/// Euclidean distances between `k` random points in the unit square: a metric
/// with zero diagonal.
pub fn random_metric_cost<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DenseMatrix {
    let pts: Vec<[f64; 2]> = (0..k).map(|_| [rng.random(), rng.random()]).collect();
    let mut c = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            c.set(i, j, (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]));
        }
    }
    c
}

pub fn random_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub k: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `log t` against `log K`.
    pub slope: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = a + b x`; returns `(b, R²)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Times `fast_dirac_ot` at each `K`, taking the median of `repeats` timed
/// batches per size.
pub fn scaling_sweep(sizes: &[usize], repeats: usize, timing_budget: f64, seed: u64) -> ScalingReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sizes.len());
    for &k in sizes {
        let cost = random_metric_cost(k, &mut rng);
        let nu = random_simplex(k, &mut rng);
        let src = rng.random_range(0..k);
        let mut samples: Vec<f64> = (0..repeats.max(1))
            .map(|_| time_per_call(timing_budget, || fast_dirac_ot(src, black_box(&nu), &cost)))
            .collect();
        samples.sort_by(f64::total_cmp);
        points.push(ScalingPoint {
            k,
            seconds: samples[samples.len() / 2],
        });
    }
    let lx: Vec<f64> = points.iter().map(|p| (p.k as f64).ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.seconds.ln()).collect();
    let (slope, r_squared) = fit_line(&lx, &ly);
    ScalingReport {
        points,
        slope,
        r_squared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_and_nested_costs() {
        let text = r#"{"mu":[1,0],"nu":[0.5,0.5],"cost":[0,1,1,0],"epsilon":0.1}

{"mu":[0,1],"nu":[0.5,0.5],"cost":[[0,1],[1,0]]}"#;
        let inst = parse_instances(text).unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[1].line, 3);
        assert_eq!(inst[1].epsilon, DEFAULT_EPSILON);
        assert_eq!(inst[0].cost, inst[1].cost);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let text = "{\"mu\":[1],\"nu\":[1],\"cost\":[0]}\n{\"mu\":[1,0],\"nu\":";
        assert_eq!(parse_instances(text).unwrap_err().line, 2);
        let bad_shape = "{\"mu\":[1,0],\"nu\":[1,0],\"cost\":[0,1,1]}";
        assert_eq!(parse_instances(bad_shape).unwrap_err().line, 1);
    }

    #[test]
    fn dirac_instance_solvers_agree() {
        let text = r#"{"mu":[0,1,0],"nu":[0.5,0.3,0.2],"cost":[[0,1,2],[1,0,1],[2,1,0]],"epsilon":0.01}"#;
        let inst = parse_instances(text).unwrap();
        let r = run_instance(&inst[0], 1e-4);
        assert!((r.dirac.value.unwrap() - 0.7).abs() < 1e-12);
        assert!(r.max_discrepancy.unwrap() < 1e-6, "{r:?}");
    }

    #[test]
    fn line_fit() {
        let (b, r2) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((b - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
