//! Covering a model's edges with weighted acyclic subgraphs.

use crate::error::{Error, Result};
use crate::model::Model;

/// Tolerance on `sum_a eta_a = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the sets of `a` and `b`; false if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// An acyclic subgraph: sorted node indices, sorted model edge indices and
/// the degree of each node within the subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<usize>,
    edges: Vec<usize>,
    degrees: Vec<usize>,
}

impl Tree {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// Degree of `nodes()[k]` inside this tree.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Position of a model node in `nodes()`.
    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestDecomposition {
    trees: Vec<Tree>,
    weights: Vec<f64>,
    node_trees: Vec<Vec<usize>>,
    edge_trees: Vec<Vec<usize>>,
}

impl ForestDecomposition {
    /// Validates `(nodes, edges)` pairs with explicit weights against `model`.
    pub fn new(model: &Model, trees: Vec<(Vec<usize>, Vec<usize>)>, weights: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDecomposition(msg));
        if trees.is_empty() {
            return bad("no trees".into());
        }
        if weights.len() != trees.len() {
            return bad(format!("{} weights for {} trees", weights.len(), trees.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return bad(format!("non-positive tree weight {w}"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return bad(format!("tree weights sum to {total}"));
        }

        let n = model.num_nodes();
        let mut node_trees = vec![Vec::new(); n];
        let mut edge_trees = vec![Vec::new(); model.num_edges()];
        let mut built = Vec::with_capacity(trees.len());
        for (a, (mut nodes, mut edges)) in trees.into_iter().enumerate() {
            nodes.sort_unstable();
            edges.sort_unstable();
            if nodes.windows(2).any(|w| w[0] == w[1]) || edges.windows(2).any(|w| w[0] == w[1]) {
                return bad(format!("tree {a} lists a node or edge twice"));
            }
            if let Some(&i) = nodes.iter().find(|&&i| i >= n) {
                return bad(format!("tree {a} references node {i} outside the model"));
            }
            let mut uf = UnionFind::new(n);
            let mut degrees = vec![0; nodes.len()];
            for &e in &edges {
                if e >= model.num_edges() {
                    return bad(format!("tree {a} references edge {e} outside the model"));
                }
                let edge = model.edge(e);
                let (Ok(pi), Ok(pj)) = (nodes.binary_search(&edge.i()), nodes.binary_search(&edge.j())) else {
                    return bad(format!("tree {a} contains edge {e} but not both endpoints"));
                };
                if !uf.union(edge.i(), edge.j()) {
                    return bad(format!("tree {a} has a cycle through edge {e}"));
                }
                degrees[pi] += 1;
                degrees[pj] += 1;
                edge_trees[e].push(a);
            }
            for &i in &nodes {
                node_trees[i].push(a);
            }
            built.push(Tree { nodes, edges, degrees });
        }
        if let Some(i) = node_trees.iter().position(Vec::is_empty) {
            return bad(format!("node {i} is not covered"));
        }
        if let Some(e) = edge_trees.iter().position(Vec::is_empty) {
            return bad(format!("edge {e} is not covered"));
        }
        Ok(ForestDecomposition {
            trees: built,
            weights,
            node_trees,
            edge_trees,
        })
    }

    /// Same as [`ForestDecomposition::new`] with `eta_a = 1/|A|`.
    pub fn with_uniform_weights(model: &Model, trees: Vec<(Vec<usize>, Vec<usize>)>) -> Result<Self> {
        let w = 1.0 / trees.len().max(1) as f64;
        let weights = vec![w; trees.len()];
        Self::new(model, trees, weights)
    }

    /// Greedy depth-first decomposition.
    ///
    /// The DFS forest started from the lowest unvisited node becomes the first
    /// tree and spans every node. Each remaining edge, in index order, goes to
    /// the first later forest where it closes no cycle, or opens a new one.
    pub fn greedy(model: &Model) -> Self {
        let n = model.num_nodes();
        let mut visited = vec![false; n];
        let mut in_first = vec![false; model.num_edges()];
        let mut first_edges = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            stack.push((root, 0));
            while let Some(top) = stack.last_mut() {
                let (node, cursor) = *top;
                match model.neighbors(node).get(cursor) {
                    Some(inc) => {
                        top.1 += 1;
                        if !visited[inc.neighbor] {
                            visited[inc.neighbor] = true;
                            in_first[inc.edge] = true;
                            first_edges.push(inc.edge);
                            stack.push((inc.neighbor, 0));
                        }
                    }
                    None => {
                        stack.pop();
                    }
                }
            }
        }

        let mut trees = vec![((0..n).collect::<Vec<_>>(), first_edges)];
        let mut packers: Vec<UnionFind> = Vec::new();
        for e in (0..model.num_edges()).filter(|&e| !in_first[e]) {
            let (i, j) = (model.edge(e).i(), model.edge(e).j());
            let slot = packers.iter_mut().position(|uf| uf.union(i, j));
            let slot = slot.unwrap_or_else(|| {
                let mut uf = UnionFind::new(n);
                uf.union(i, j);
                packers.push(uf);
                trees.push((Vec::new(), Vec::new()));
                packers.len() - 1
            });
            let (nodes, edges) = &mut trees[slot + 1];
            edges.push(e);
            nodes.push(i);
            nodes.push(j);
        }
        for (nodes, _) in trees.iter_mut().skip(1) {
            nodes.sort_unstable();
            nodes.dedup();
        }
        Self::with_uniform_weights(model, trees).expect("greedy decomposition is valid by construction")
    }

    /// Horizontal/vertical split of a row-major `rows x cols` grid. Both
    /// trees contain every node.
    pub fn grid(model: &Model, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != model.num_nodes() {
            return Err(Error::InvalidDecomposition(format!(
                "{rows}x{cols} grid does not match {} nodes",
                model.num_nodes()
            )));
        }
        let mut horizontal = Vec::new();
        let mut vertical = Vec::new();
        for (e, edge) in model.edges().iter().enumerate() {
            let (i, j) = (edge.i(), edge.j());
            if j == i + 1 && i / cols == j / cols {
                horizontal.push(e);
            } else if j == i + cols {
                vertical.push(e);
            } else {
                return Err(Error::InvalidDecomposition(format!(
                    "edge {e} ({i}, {j}) is not a grid edge"
                )));
            }
        }
        let all: Vec<usize> = (0..model.num_nodes()).collect();
        Self::with_uniform_weights(model, vec![(all.clone(), horizontal), (all, vertical)])
    }

    /// Grid split when the node count is a perfect square.
    pub fn square_grid(model: &Model) -> Result<Self> {
        let n = model.num_nodes();
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::InvalidDecomposition(format!("{n} nodes do not form a square grid")));
        }
        Self::grid(model, side, side)
    }

    /// Single tree with weight one; fails if the model has a cycle.
    pub fn single_tree(model: &Model) -> Result<Self> {
        Self::new(
            model,
            vec![((0..model.num_nodes()).collect(), (0..model.num_edges()).collect())],
            vec![1.0],
        )
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Trees containing node `i`, i.e. `A(i)`.
    pub fn node_trees(&self, i: usize) -> &[usize] {
        &self.node_trees[i]
    }

    /// Trees containing edge `e`, i.e. `A(i,j)`.
    pub fn edge_trees(&self, e: usize) -> &[usize] {
        &self.edge_trees[e]
    }

    /// `sum_{a in A(i)} eta_a`.
    pub fn node_weight(&self, i: usize) -> f64 {
        self.node_trees[i].iter().map(|&a| self.weights[a]).sum()
    }

    /// True if the decomposition was built for a model with these dimensions.
    pub(crate) fn fits(&self, model: &Model) -> bool {
        self.node_trees.len() == model.num_nodes() && self.edge_trees.len() == model.num_edges()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Model {
        let unaries = vec![vec![0.0, 0.0]; n];
        let edges = (0..n).map(|i| (i, (i + 1) % n, vec![0.0; 4])).collect();
        Model::new(unaries, edges).unwrap()
    }

    #[test]
    fn four_cycle_splits_into_dfs_tree_and_back_edge() {
        let m = cycle(4);
        let d = ForestDecomposition::greedy(&m);
        assert_eq!(d.len(), 2);
        let names = |t: &Tree| -> Vec<(usize, usize)> {
            t.edges().iter().map(|&e| (m.edge(e).i(), m.edge(e).j())).collect()
        };
        let mut first = names(&d.trees()[0]);
        first.sort();
        assert_eq!(first, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(names(&d.trees()[1]), vec![(0, 3)]);
        assert_eq!(d.weights(), &[0.5, 0.5]);
        assert_eq!(d.trees()[1].nodes(), &[0, 3]);
    }

    #[test]
    fn tree_models_give_one_tree() {
        let m = Model::new(
            vec![vec![0.0; 2]; 5],
            vec![(0, 1, vec![0.0; 4]), (1, 2, vec![0.0; 4]), (1, 3, vec![0.0; 4])],
        )
        .unwrap();
        let d = ForestDecomposition::greedy(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d.weights(), &[1.0]);
        assert_eq!(d.trees()[0].nodes().len(), 5);
        assert_eq!(d.node_trees(4), &[0]);
    }

    #[test]
    fn complete_graph_covers_every_edge_once() {
        let n = 6;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, vec![0.0; 4]));
            }
        }
        let m = Model::new(vec![vec![0.0; 2]; n], edges).unwrap();
        let d = ForestDecomposition::greedy(&m);
        for e in 0..m.num_edges() {
            assert_eq!(d.edge_trees(e).len(), 1);
        }
        let total: f64 = d.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_cycles_and_gaps() {
        let m = cycle(3);
        assert!(ForestDecomposition::single_tree(&m).is_err());
        assert!(ForestDecomposition::new(&m, vec![(vec![0, 1, 2], vec![0, 1])], vec![1.0]).is_err());
        assert!(ForestDecomposition::new(&m, vec![(vec![0, 1], vec![0, 1])], vec![1.0]).is_err());
        assert!(ForestDecomposition::new(
            &m,
            vec![(vec![0, 1, 2], vec![0, 1]), (vec![0, 2], vec![2])],
            vec![0.5, 0.6]
        )
        .is_err());
    }
}
