//! Turning fractional marginals into assignments.

use crate::error::{Error, Result};
use crate::model::{Assignment, Marginals, Model};

fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, v) in values.enumerate() {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Independent per-node argmax, ties to the smallest label.
pub fn decode_argmax(mu: &Marginals) -> Assignment {
    Assignment(
        mu.nodes()
            .iter()
            .map(|p| {
                let mut best = (0, f64::NEG_INFINITY);
                for (k, &v) in p.iter().enumerate() {
                    if v > best.1 {
                        best = (k, v);
                    }
                }
                best.0
            })
            .collect(),
    )
}

/// Sequential conditioning in ascending node order: each node takes the
/// label minimizing its unary plus the pairwise energy expected under the
/// current neighbor marginals, then its marginal becomes that indicator.
/// The result never has higher energy than the quadratic objective of the
/// input node marginals.
pub fn round_solution(model: &Model, nodes: &[Vec<f64>]) -> Result<Assignment> {
    if nodes.len() != model.num_nodes()
        || nodes.iter().enumerate().any(|(i, p)| p.len() != model.cardinality(i))
    {
        return Err(Error::DimensionMismatch("node marginals do not match the model".into()));
    }
    let mut current = nodes.to_vec();
    let mut labels = Vec::with_capacity(model.num_nodes());
    for i in 0..model.num_nodes() {
        let costs = (0..model.cardinality(i)).map(|k| {
            let mut c = model.unary(i)[k];
            for inc in model.neighbors(i) {
                let edge = model.edge(inc.edge);
                let partner = &current[inc.neighbor];
                c += partner
                    .iter()
                    .enumerate()
                    .map(|(l, &p)| edge.oriented(i, k, l) * p)
                    .sum::<f64>();
            }
            c
        });
        let x = argmin_first(costs);
        current[i].iter_mut().enumerate().for_each(|(k, v)| *v = if k == x { 1.0 } else { 0.0 });
        labels.push(x);
    }
    Ok(Assignment(labels))
}
