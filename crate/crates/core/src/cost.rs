//! The inter-class cost matrix and its analysis.
//!
//! The cost starts as the discrete metric `1 − I` and is pulled toward
//! `1 − ⟨v_i, v_j⟩`, where `v_k` is the normalized `k`-th head column, by an
//! exponential moving average with momentum `m`. Entries stay in `[0, 2]`,
//! the diagonal stays exactly zero and the matrix stays exactly symmetric.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, DenseMatrix};
use crate::nn::softmax;

pub const DEFAULT_COST_MOMENTUM: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub values: DenseMatrix,
    pub momentum: f64,
    /// Outcome of the last [`CostMatrix::validate`] call.
    pub metric_valid: bool,
}

/// Unit-norm head columns `v_k = w_k / ‖w_k‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadDirections {
    directions: Vec<Vec<f64>>,
}

impl HeadDirections {
    pub fn from_head(head: &DenseMatrix) -> Result<Self> {
        let directions = (0..head.cols())
            .map(|k| {
                let w = head.column(k);
                let n = norm2(&w);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::DegenerateHead { column: k });
                }
                Ok(w.iter().map(|x| x / n).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Self { directions })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.directions[k]
    }

    /// `1 − ⟨v_i, v_j⟩` for all pairs, clamped to `[0, 2]`, zero diagonal.
    pub fn cosine_cost(&self) -> DenseMatrix {
        let k = self.len();
        let mut c = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in i + 1..k {
                let v = (1.0 - dot(&self.directions[i], &self.directions[j])).clamp(0.0, 2.0);
                c.set(i, j, v);
                c.set(j, i, v);
            }
        }
        c
    }
}

impl CostMatrix {
    /// The discrete metric `C = 1 − I`.
    pub fn discrete(classes: usize, momentum: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "cost matrix needs at least 2 classes, got {classes}"
            )));
        }
        check_momentum(momentum)?;
        let mut values = DenseMatrix::zeros(classes, classes);
        for i in 0..classes {
            for j in 0..classes {
                if i != j {
                    values.set(i, j, 1.0);
                }
            }
        }
        Ok(Self {
            values,
            momentum,
            metric_valid: true,
        })
    }

    pub fn classes(&self) -> usize {
        self.values.rows()
    }

    /// `C(i,j) ← m·C(i,j) + (1 − m)·(1 − ⟨v_i, v_j⟩)` from the head columns.
    pub fn ema_update(&mut self, head: &DenseMatrix) -> Result<()> {
        if head.cols() != self.classes() {
            return Err(Error::Dimension {
                context: "cost update head columns",
                expected: self.classes(),
                found: head.cols(),
            });
        }
        let target = HeadDirections::from_head(head)?.cosine_cost();
        self.ema_toward(&target)
    }

    /// EMA step toward an arbitrary symmetric target in `[0, 2]`. The diagonal
    /// is pinned at zero and only the upper triangle is computed, then mirrored.
    pub fn ema_toward(&mut self, target: &DenseMatrix) -> Result<()> {
        self.values.check_same_shape(target, "cost EMA target")?;
        let k = self.classes();
        let m = self.momentum;
        for i in 0..k {
            self.values.set(i, i, 0.0);
            for j in i + 1..k {
                let v = m * self.values.get(i, j) + (1.0 - m) * target.get(i, j);
                self.values.set(i, j, v);
                self.values.set(j, i, v);
            }
        }
        Ok(())
    }

    /// Runs [`validate_metric`] and records the outcome in `metric_valid`.
    pub fn validate(&mut self, tolerance: f64) -> MetricReport {
        let report = validate_metric(&self.values, tolerance);
        self.metric_valid = report.is_valid();
        report
    }
}

fn check_momentum(momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::Range {
            what: "cost momentum",
            value: momentum,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// Correlation-based cost target: `1 − corr(Q_i, Q_j)` over a batch of
/// predicted probabilities (one sample per row). Classes with zero variance
/// are treated as uncorrelated with everything.
pub fn covariance_cost(probs: &DenseMatrix) -> DenseMatrix {
    let (n, k) = probs.shape();
    let mean: Vec<f64> = probs
        .col_sums()
        .into_iter()
        .map(|s| s / n.max(1) as f64)
        .collect();
    let mut cov = DenseMatrix::zeros(k, k);
    for row in probs.row_iter() {
        for i in 0..k {
            for j in i..k {
                let v = cov.get(i, j) + (row[i] - mean[i]) * (row[j] - mean[j]);
                cov.set(i, j, v);
            }
        }
    }
    let mut c = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let denom = libm::sqrt(cov.get(i, i) * cov.get(j, j));
            let corr = if denom > 0.0 { cov.get(i, j) / denom } else { 0.0 };
            let v = (1.0 - corr).clamp(0.0, 2.0);
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    c
}

/// Outcome of a metric check. Triangle violations are listed as
/// `(i, j, k, excess)` with `C_ik > C_ij + C_jk + tol` and `excess` the
/// amount by which the inequality fails.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub nonzero_diagonal: Vec<usize>,
    pub negative_entries: Vec<(usize, usize)>,
    pub asymmetric_pairs: Vec<(usize, usize)>,
    pub triangle_violations: Vec<(usize, usize, usize, f64)>,
}

impl MetricReport {
    pub fn is_valid(&self) -> bool {
        self.nonzero_diagonal.is_empty()
            && self.negative_entries.is_empty()
            && self.asymmetric_pairs.is_empty()
            && self.triangle_violations.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.nonzero_diagonal.len()
            + self.negative_entries.len()
            + self.asymmetric_pairs.len()
            + self.triangle_violations.len()
    }
}

/// Checks zero diagonal, nonnegativity, symmetry and every triangle
/// inequality, each within `tolerance`.
pub fn validate_metric(c: &DenseMatrix, tolerance: f64) -> MetricReport {
    let mut report = MetricReport::default();
    let k = c.rows().min(c.cols());
    for i in 0..k {
        if c.get(i, i).abs() > tolerance {
            report.nonzero_diagonal.push(i);
        }
        for j in 0..k {
            if c.get(i, j) < -tolerance {
                report.negative_entries.push((i, j));
            }
            if j > i && (c.get(i, j) - c.get(j, i)).abs() > tolerance {
                report.asymmetric_pairs.push((i, j));
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                if i == j || j == l || i == l {
                    continue;
                }
                let excess = c.get(i, l) - (c.get(i, j) + c.get(j, l));
                if excess > tolerance {
                    report.triangle_violations.push((i, j, l, excess));
                }
            }
        }
    }
    report
}

/// Update score of SGD on the features along `w_k`:
/// `U = (1 − p_k)·⟨w_k, w_k⟩ − Σ_{k'≠k} p_{k'}·⟨w_{k'}, w_k⟩` with `p = softmax(x·W)`.
pub fn gradient_score_u(features: &[f64], head: &DenseMatrix, k: usize) -> Result<f64> {
    let probs = head_probs(features, head)?;
    check_class(k, head.cols())?;
    let wk = head.column(k);
    let mut u = (1.0 - probs[k]) * dot(&wk, &wk);
    for (kp, &p) in probs.iter().enumerate() {
        if kp != k {
            u -= p * dot(&head.column(kp), &wk);
        }
    }
    Ok(u)
}

/// Expected classification cost `Σ_{k'} C_{k k'}·p_{k'}` with `p = softmax(x·W)`.
pub fn expected_cost(features: &[f64], head: &DenseMatrix, cost: &DenseMatrix, k: usize) -> Result<f64> {
    let probs = head_probs(features, head)?;
    check_class(k, head.cols())?;
    if cost.shape() != (head.cols(), head.cols()) {
        return Err(Error::Dimension {
            context: "expected_cost cost matrix",
            expected: head.cols(),
            found: cost.rows(),
        });
    }
    Ok(dot(cost.row(k), &probs))
}

fn head_probs(features: &[f64], head: &DenseMatrix) -> Result<Vec<f64>> {
    if features.len() != head.rows() {
        return Err(Error::Dimension {
            context: "features vs head",
            expected: head.rows(),
            found: features.len(),
        });
    }
    let logits: Vec<f64> = (0..head.cols())
        .map(|c| (0..head.rows()).map(|r| features[r] * head.get(r, c)).sum())
        .collect();
    Ok(softmax(&logits, 1.0))
}

fn check_class(k: usize, classes: usize) -> Result<()> {
    if k >= classes {
        return Err(Error::InvalidArgument(alloc::format!(
            "class {k} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// One agglomeration step. Clusters `0..K` are the leaves; the merge at
/// position `s` creates cluster `K + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

/// Tree form of a dendrogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DendrogramNode {
    Leaf(usize),
    Node {
        left: alloc::boxed::Box<DendrogramNode>,
        right: alloc::boxed::Box<DendrogramNode>,
        height: f64,
        members: Vec<usize>,
    },
}

impl DendrogramNode {
    pub fn members(&self) -> Vec<usize> {
        match self {
            DendrogramNode::Leaf(i) => vec![*i],
            DendrogramNode::Node { members, .. } => members.clone(),
        }
    }

    pub fn height(&self) -> f64 {
        match self {
            DendrogramNode::Leaf(_) => 0.0,
            DendrogramNode::Node { height, .. } => *height,
        }
    }
}

impl Dendrogram {
    /// Merge steps whose height is below the previous one.
    pub fn inversions(&self) -> Vec<usize> {
        (1..self.merges.len())
            .filter(|&s| self.merges[s].height < self.merges[s - 1].height)
            .collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.inversions().is_empty()
    }

    /// Root of the tree, or `None` for an empty dendrogram.
    pub fn tree(&self) -> Option<DendrogramNode> {
        let mut nodes: Vec<Option<DendrogramNode>> =
            (0..self.leaves).map(|i| Some(DendrogramNode::Leaf(i))).collect();
        for m in &self.merges {
            let left = nodes[m.left].take()?;
            let right = nodes[m.right].take()?;
            let mut members = left.members();
            members.extend(right.members());
            members.sort_unstable();
            nodes.push(Some(DendrogramNode::Node {
                left: alloc::boxed::Box::new(left),
                right: alloc::boxed::Box::new(right),
                height: m.height,
                members,
            }));
        }
        nodes.pop().flatten()
    }
}

/// Average-linkage agglomerative clustering with `dissimilarity` as the
/// pairwise distance. Among equally distant candidate pairs the one with the
/// lexicographically smallest `(i, j)` cluster ids merges first.
pub fn hierarchical_cluster(dissimilarity: &DenseMatrix) -> Result<Dendrogram> {
    let k = dissimilarity.rows();
    if dissimilarity.cols() != k {
        return Err(Error::Dimension {
            context: "hierarchical_cluster",
            expected: k,
            found: dissimilarity.cols(),
        });
    }
    if !dissimilarity.is_finite() {
        return Err(Error::NonFinite("dissimilarity"));
    }
    // distance table indexed by cluster id; grows as clusters are created
    let total = 2 * k;
    let mut dist = vec![0.0; total * total];
    for i in 0..k {
        for j in 0..k {
            dist[i * total + j] = 0.5 * (dissimilarity.get(i, j) + dissimilarity.get(j, i));
        }
    }
    let mut size = vec![0usize; total];
    size[..k].iter_mut().for_each(|s| *s = 1);
    let mut active: Vec<usize> = (0..k).collect();
    let mut merges = Vec::with_capacity(k.saturating_sub(1));

    while active.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                let d = dist[i * total + j];
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let (i, j, height) = best.expect("at least two active clusters");
        let new = k + merges.len();
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for &other in &active {
            if other == i || other == j {
                continue;
            }
            let d = (si * dist[i * total + other] + sj * dist[j * total + other]) / (si + sj);
            dist[new * total + other] = d;
            dist[other * total + new] = d;
        }
        size[new] = size[i] + size[j];
        merges.push(Merge {
            left: i,
            right: j,
            height,
            size: size[new],
        });
        active.retain(|&c| c != i && c != j);
        active.push(new);
    }
    Ok(Dendrogram { leaves: k, merges })
}
