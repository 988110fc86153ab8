//! Pairwise discrete models, assignments and pseudo-marginals.
//!
//! Potentials are energies: lower is better. Every edge is stored once with
//! `i < j`; its table is row-major with `K_i` rows and `K_j` columns.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization tolerance for node and edge marginals.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    i: usize,
    j: usize,
    cols: usize,
    table: Vec<f64>,
}

impl Edge {
    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn rows(&self) -> usize {
        self.table.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major `K_i x K_j` energy table.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn at(&self, k: usize, l: usize) -> f64 {
        self.table[k * self.cols + l]
    }

    /// Energy with the labels given in `(a, b)` orientation, where `a` is the
    /// label of `from` and `b` the label of the other endpoint.
    #[inline]
    pub fn oriented(&self, from: usize, a: usize, b: usize) -> f64 {
        if from == self.i {
            self.at(a, b)
        } else {
            self.at(b, a)
        }
    }

    pub fn other(&self, node: usize) -> usize {
        if node == self.i {
            self.j
        } else {
            self.i
        }
    }
}

/// A neighbor of a node together with the index of the connecting edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub neighbor: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    unaries: Vec<Vec<f64>>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<Incidence>>,
}

fn transpose(table: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    for k in 0..rows {
        for l in 0..cols {
            out[l * rows + k] = table[k * cols + l];
        }
    }
    out
}

impl Model {
    /// Builds a model from per-node unary energies and `(i, j, table)` edges.
    ///
    /// Tables are row-major with rows indexed by the label of the first
    /// listed node. Edges given with `i > j` are stored transposed.
    pub fn new(unaries: Vec<Vec<f64>>, edges: Vec<(usize, usize, Vec<f64>)>) -> Result<Self> {
        let n = unaries.len();
        for (i, u) in unaries.iter().enumerate() {
            if u.is_empty() {
                return Err(Error::InvalidModel(format!("node {i} has no labels")));
            }
            if let Some(v) = u.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("node {i} has non-finite unary {v}")));
            }
        }

        let mut seen = HashSet::with_capacity(edges.len());
        let mut stored = Vec::with_capacity(edges.len());
        for (e, (a, b, table)) in edges.into_iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidModel(format!(
                    "edge {e} ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidModel(format!("edge {e} is a self-loop on node {a}")));
            }
            let (ka, kb) = (unaries[a].len(), unaries[b].len());
            if table.len() != ka * kb {
                return Err(Error::InvalidModel(format!(
                    "edge {e} ({a}, {b}) has {} entries, expected {ka}x{kb}",
                    table.len()
                )));
            }
            if let Some(v) = table.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("edge {e} has non-finite entry {v}")));
            }
            let (i, j, table) = if a < b {
                (a, b, table)
            } else {
                (b, a, transpose(&table, ka, kb))
            };
            if !seen.insert((i, j)) {
                return Err(Error::InvalidModel(format!("duplicate edge ({i}, {j})")));
            }
            stored.push(Edge {
                i,
                j,
                cols: unaries[j].len(),
                table,
            });
        }

        let mut neighbors = vec![Vec::new(); n];
        for (e, edge) in stored.iter().enumerate() {
            neighbors[edge.i].push(Incidence { neighbor: edge.j, edge: e });
            neighbors[edge.j].push(Incidence { neighbor: edge.i, edge: e });
        }
        for list in &mut neighbors {
            list.sort_by_key(|inc| inc.neighbor);
        }

        Ok(Model {
            unaries,
            edges: stored,
            neighbors,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.unaries.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.unaries[i].len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.unaries.iter().map(Vec::len).collect()
    }

    pub fn unary(&self, i: usize) -> &[f64] {
        &self.unaries[i]
    }

    pub fn unaries(&self) -> &[Vec<f64>] {
        &self.unaries
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `i`, sorted by neighbor index.
    pub fn neighbors(&self, i: usize) -> &[Incidence] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Index of the edge joining `a` and `b`, in either order.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.neighbors
            .get(a)?
            .iter()
            .find(|inc| inc.neighbor == b)
            .map(|inc| inc.edge)
    }

    /// Number of joint assignments, saturating at `u128::MAX`.
    pub fn state_space_size(&self) -> u128 {
        self.unaries
            .iter()
            .fold(1u128, |acc, u| acc.saturating_mul(u.len() as u128))
    }

    /// Copy of the model with every potential multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Model {
        let mut out = self.clone();
        for u in &mut out.unaries {
            u.iter_mut().for_each(|v| *v *= factor);
        }
        for e in &mut out.edges {
            e.table.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    /// Edges as `(i, j, row-major table)` triples, in storage order.
    pub fn edge_triples(&self) -> Vec<(usize, usize, Vec<f64>)> {
        self.edges
            .iter()
            .map(|e| (e.i, e.j, e.table.clone()))
            .collect()
    }
}

/// One label per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if self.0.len() != model.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "assignment has {} labels, model has {} nodes",
                self.0.len(),
                model.num_nodes()
            )));
        }
        for (i, &x) in self.0.iter().enumerate() {
            if x >= model.cardinality(i) {
                return Err(Error::DimensionMismatch(format!(
                    "label {x} of node {i} out of range 0..{}",
                    model.cardinality(i)
                )));
            }
        }
        Ok(())
    }
}

/// Node marginals `mu_i` and edge marginals `mu_ij` (row-major, edge order of
/// the model). Marginalization consistency is not enforced here; see
/// [`consistency_gap`].
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    nodes: Vec<Vec<f64>>,
    edges: Vec<Vec<f64>>,
}

fn check_simplex(what: &str, v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidMarginals(format!("{what} has invalid entry {x}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidMarginals(format!("{what} sums to {s}")));
    }
    Ok(())
}

fn check_shapes(model: &Model, nodes: &[Vec<f64>], edges: &[Vec<f64>]) -> Result<()> {
    if nodes.len() != model.num_nodes() || edges.len() != model.num_edges() {
        return Err(Error::DimensionMismatch(format!(
            "marginals cover {} nodes / {} edges, model has {} / {}",
            nodes.len(),
            edges.len(),
            model.num_nodes(),
            model.num_edges()
        )));
    }
    for (i, m) in nodes.iter().enumerate() {
        if m.len() != model.cardinality(i) {
            return Err(Error::DimensionMismatch(format!(
                "node {i} marginal has length {}, expected {}",
                m.len(),
                model.cardinality(i)
            )));
        }
    }
    for (e, m) in edges.iter().enumerate() {
        if m.len() != model.edge(e).table().len() {
            return Err(Error::DimensionMismatch(format!(
                "edge {e} marginal has {} entries, expected {}",
                m.len(),
                model.edge(e).table().len()
            )));
        }
    }
    Ok(())
}

fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x * y))
        .collect()
}

impl Marginals {
    pub fn new(model: &Model, nodes: Vec<Vec<f64>>, edges: Vec<Vec<f64>>) -> Result<Self> {
        check_shapes(model, &nodes, &edges)?;
        for (i, m) in nodes.iter().enumerate() {
            check_simplex(&format!("node {i} marginal"), m)?;
        }
        for (e, m) in edges.iter().enumerate() {
            check_simplex(&format!("edge {e} marginal"), m)?;
        }
        Ok(Marginals { nodes, edges })
    }

    /// Solver-internal constructor; callers guarantee shapes and normalization.
    pub(crate) fn from_parts(nodes: Vec<Vec<f64>>, edges: Vec<Vec<f64>>) -> Self {
        Marginals { nodes, edges }
    }

    /// Uniform node marginals with uniform (product-form) edge tables.
    pub fn uniform(model: &Model) -> Self {
        let nodes = (0..model.num_nodes())
            .map(|i| {
                let k = model.cardinality(i);
                vec![1.0 / k as f64; k]
            })
            .collect();
        let edges = model
            .edges()
            .iter()
            .map(|e| {
                let n = e.table().len();
                vec![1.0 / n as f64; n]
            })
            .collect();
        Marginals { nodes, edges }
    }

    /// Product-form marginals `mu_ij = mu_i mu_j^T` from node simplices.
    pub fn product(model: &Model, nodes: Vec<Vec<f64>>) -> Result<Self> {
        let empty: Vec<Vec<f64>> = model.edges().iter().map(|e| vec![0.0; e.table().len()]).collect();
        check_shapes(model, &nodes, &empty)?;
        for (i, m) in nodes.iter().enumerate() {
            check_simplex(&format!("node {i} marginal"), m)?;
        }
        let edges = model
            .edges()
            .iter()
            .map(|e| outer(&nodes[e.i()], &nodes[e.j()]))
            .collect();
        Ok(Marginals { nodes, edges })
    }

    /// Indicator marginals encoding `x`.
    pub fn from_assignment(model: &Model, x: &Assignment) -> Result<Self> {
        x.validate(model)?;
        let nodes: Vec<Vec<f64>> = (0..model.num_nodes())
            .map(|i| {
                let mut v = vec![0.0; model.cardinality(i)];
                v[x.0[i]] = 1.0;
                v
            })
            .collect();
        let edges = model
            .edges()
            .iter()
            .map(|e| outer(&nodes[e.i()], &nodes[e.j()]))
            .collect();
        Ok(Marginals { nodes, edges })
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    pub fn edge(&self, e: usize) -> &[f64] {
        &self.edges[e]
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    pub fn into_parts(self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (self.nodes, self.edges)
    }

    fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes
            .iter()
            .chain(self.edges.iter())
            .flat_map(|v| v.iter().copied())
    }

    /// Euclidean distance over the concatenated node and edge entries.
    pub fn distance(&self, other: &Marginals) -> f64 {
        self.entries()
            .zip(other.entries())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Marginals) -> f64 {
        self.entries()
            .zip(other.entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Energy of a joint assignment, summed over nodes then edges.
pub fn energy(model: &Model, x: &Assignment) -> Result<f64> {
    x.validate(model)?;
    Ok(energy_unchecked(model, &x.0))
}

pub(crate) fn energy_unchecked(model: &Model, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, u) in model.unaries().iter().enumerate() {
        total += u[labels[i]];
    }
    for e in model.edges() {
        total += e.at(labels[e.i()], labels[e.j()]);
    }
    total
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear objective `sum_i theta_i . mu_i + sum_ij <theta_ij, mu_ij>`.
pub fn lp_objective(model: &Model, mu: &Marginals) -> Result<f64> {
    check_shapes(model, &mu.nodes, &mu.edges)?;
    Ok(lp_objective_unchecked(model, mu))
}

pub(crate) fn lp_objective_unchecked(model: &Model, mu: &Marginals) -> f64 {
    let mut total = 0.0;
    for (i, u) in model.unaries().iter().enumerate() {
        total += dot(u, &mu.nodes[i]);
    }
    for (e, edge) in model.edges().iter().enumerate() {
        total += dot(edge.table(), &mu.edges[e]);
    }
    total
}

/// Quadratic objective `sum_i theta_i . mu_i + sum_ij mu_i^T Theta_ij mu_j`.
pub fn qp_objective(model: &Model, nodes: &[Vec<f64>]) -> Result<f64> {
    if nodes.len() != model.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} node marginals for {} nodes",
            nodes.len(),
            model.num_nodes()
        )));
    }
    for (i, m) in nodes.iter().enumerate() {
        if m.len() != model.cardinality(i) {
            return Err(Error::DimensionMismatch(format!(
                "node {i} marginal has length {}, expected {}",
                m.len(),
                model.cardinality(i)
            )));
        }
    }
    let mut total = 0.0;
    for (i, u) in model.unaries().iter().enumerate() {
        total += dot(u, &nodes[i]);
    }
    for e in model.edges() {
        let (a, b) = (&nodes[e.i()], &nodes[e.j()]);
        let mut s = 0.0;
        for (k, &ak) in a.iter().enumerate() {
            for (l, &bl) in b.iter().enumerate() {
                s += ak * e.at(k, l) * bl;
            }
        }
        total += s;
    }
    Ok(total)
}

/// Largest violation of the row and column marginalization constraints.
pub fn consistency_gap(model: &Model, mu: &Marginals) -> f64 {
    let mut gap: f64 = 0.0;
    for (e, edge) in model.edges().iter().enumerate() {
        let (rows, cols) = (edge.rows(), edge.cols());
        let t = &mu.edges[e];
        for k in 0..rows {
            let s: f64 = t[k * cols..(k + 1) * cols].iter().sum();
            gap = gap.max((s - mu.nodes[edge.i()][k]).abs());
        }
        for l in 0..cols {
            let s: f64 = (0..rows).map(|k| t[k * cols + l]).sum();
            gap = gap.max((s - mu.nodes[edge.j()][l]).abs());
        }
    }
    gap
}
