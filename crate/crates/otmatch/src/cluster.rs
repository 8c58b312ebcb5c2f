//! Hierarchical clustering of a learned cost matrix and its exports.

use std::path::Path;

use otmatch_core::cost::{hierarchical_cluster, Dendrogram, DendrogramNode};
use otmatch_core::DenseMatrix;
use serde_json::{json, Value};

use crate::error::{io_err, Result};

/// `{left, right, height, members}` for merges; leaves carry `leaf` instead
/// of children.
pub fn node_json(node: &DendrogramNode) -> Value {
    match node {
        DendrogramNode::Leaf(i) => json!({ "leaf": i, "height": 0.0, "members": [i] }),
        DendrogramNode::Node {
            left,
            right,
            height,
            members,
        } => json!({
            "left": node_json(left),
            "right": node_json(right),
            "height": height,
            "members": members,
        }),
    }
}

pub struct ClusterResult {
    pub dendrogram: Dendrogram,
    pub tree: Value,
}

pub fn cluster_cost(cost: &DenseMatrix) -> Result<ClusterResult> {
    let dendrogram = hierarchical_cluster(cost)?;
    let tree = dendrogram.tree().as_ref().map_or(Value::Null, node_json);
    Ok(ClusterResult { dendrogram, tree })
}

/// Header `class,<label_0>,…`, then one row per class.
pub fn write_cost_csv(cost: &DenseMatrix, labels: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["class".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in cost.row_iter().enumerate() {
        let mut rec = vec![labels[i].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_cost_csv(path: &Path) -> Result<(Vec<String>, DenseMatrix)> {
    let mut r = csv::Reader::from_path(path)?;
    let labels: Vec<String> = r.headers()?.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| crate::RunError::Config(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok((labels, DenseMatrix::from_rows(&rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_json_shape() {
        let c = DenseMatrix::from_rows(&[[0.0, 0.1, 1.0], [0.1, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        let r = cluster_cost(&c).unwrap();
        assert_eq!(r.tree["members"], json!([0, 1, 2]));
        assert_eq!(r.tree["height"], json!(1.0));
        assert_eq!(r.tree["left"]["members"], json!([2]));
        assert_eq!(r.tree["right"]["members"], json!([0, 1]));
        assert!(r.dendrogram.is_monotone());
    }

    #[test]
    fn cost_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = DenseMatrix::from_rows(&[[0.0, 0.123456789012345], [0.123456789012345, 0.0]]).unwrap();
        let labels = vec!["a".to_string(), "b".to_string()];
        write_cost_csv(&c, &labels, &path).unwrap();
        assert_eq!(read_cost_csv(&path).unwrap(), (labels, c));
    }
}
