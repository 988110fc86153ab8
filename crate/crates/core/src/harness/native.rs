//! JSON model format storing energies directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Serialize, Deserialize)]
struct NativeEdge {
    i: usize,
    j: usize,
    table: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NativeModel {
    num_nodes: usize,
    cardinalities: Vec<usize>,
    unaries: Vec<Vec<f64>>,
    edges: Vec<NativeEdge>,
}

pub fn parse_native(text: &str) -> Result<Model> {
    let raw: NativeModel = serde_json::from_str(text)?;
    if raw.cardinalities.len() != raw.num_nodes || raw.unaries.len() != raw.num_nodes {
        return Err(Error::Parse(format!(
            "num_nodes is {} but {} cardinalities and {} unaries given",
            raw.num_nodes,
            raw.cardinalities.len(),
            raw.unaries.len()
        )));
    }
    if let Some(i) = (0..raw.num_nodes).find(|&i| raw.cardinalities[i] != raw.unaries[i].len()) {
        return Err(Error::Parse(format!("node {i}: cardinality disagrees with its unary")));
    }
    let edges = raw
        .edges
        .into_iter()
        .map(|e| {
            let cols = e.table.first().map_or(0, Vec::len);
            if e.table.iter().any(|r| r.len() != cols) {
                return Err(Error::Parse(format!("edge ({}, {}) has ragged rows", e.i, e.j)));
            }
            Ok((e.i, e.j, e.table.concat()))
        })
        .collect::<Result<Vec<_>>>()?;
    Model::new(raw.unaries, edges)
}

pub fn emit_native(model: &Model) -> String {
    let raw = NativeModel {
        num_nodes: model.num_nodes(),
        cardinalities: model.cardinalities(),
        unaries: model.unaries().to_vec(),
        edges: model
            .edges()
            .iter()
            .map(|e| NativeEdge {
                i: e.i(),
                j: e.j(),
                table: e.table().chunks(e.cols()).map(<[f64]>::to_vec).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("model serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = Model::new(
            vec![vec![0.1, -0.2], vec![1.0 / 3.0, 0.0, 5.0]],
            vec![(0, 1, vec![1.0, -2.0, 0.25, 0.0, 3.5, -0.75])],
        )
        .unwrap();
        assert_eq!(parse_native(&emit_native(&m)).unwrap(), m);
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let bad = r#"{"num_nodes":2,"cardinalities":[2],"unaries":[[0,0]],"edges":[]}"#;
        assert!(parse_native(bad).is_err());
        let ragged = r#"{"num_nodes":2,"cardinalities":[2,2],"unaries":[[0,0],[0,0]],
            "edges":[{"i":0,"j":1,"table":[[0,0],[0]]}]}"#;
        assert!(parse_native(ragged).is_err());
        assert!(parse_native("{").is_err());
    }
}
