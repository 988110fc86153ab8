//! Exact sum-product on the acyclic slaves of a forest decomposition.

use crate::error::{Error, Result};
use crate::forest::ForestDecomposition;
use crate::model::Model;

use super::{log_sum_exp, softmax_in_place};

#[derive(Debug, Clone)]
struct LocalEdge {
    a: usize,
    b: usize,
    global: usize,
    cols: usize,
    table: Vec<f64>,
}

impl LocalEdge {
    /// Potential (plus shift) with `from` taking label `xf` and the other end `xt`.
    #[inline]
    fn pot(&self, shift: Option<&[f64]>, from: usize, xf: usize, xt: usize) -> f64 {
        let idx = if from == self.a {
            xf * self.cols + xt
        } else {
            xt * self.cols + xf
        };
        self.table[idx] + shift.map_or(0.0, |s| s[idx])
    }
}

/// One tree of the decomposition with its share of the potentials: unaries
/// divided by `|A(i)|`, pairwise tables by `|A(i,j)|`, at temperature
/// `rho * eta_a`.
#[derive(Debug, Clone)]
pub struct SlaveProblem {
    nodes: Vec<usize>,
    unaries: Vec<Vec<f64>>,
    edges: Vec<LocalEdge>,
    temperature: f64,
    adjacency: Vec<Vec<(usize, usize)>>,
    // BFS order per component, with parent (node, edge) links
    order: Vec<usize>,
    parent: Vec<Option<(usize, usize)>>,
}

/// Exact marginals of a slave's Gibbs distribution, in the slave's local
/// node and edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMarginals {
    /// Global node ids, parallel to `nodes`.
    pub node_ids: Vec<usize>,
    /// Global edge ids, parallel to `edges`.
    pub edge_ids: Vec<usize>,
    pub nodes: Vec<Vec<f64>>,
    /// Row-major tables in the model's `(i, j)` orientation.
    pub edges: Vec<Vec<f64>>,
    /// Log partition function of the (shifted) slave at its temperature.
    pub log_partition: f64,
}

impl SlaveProblem {
    pub fn new(
        model: &Model,
        theta_tilde: &[Vec<f64>],
        decomposition: &ForestDecomposition,
        tree: usize,
        rho: f64,
    ) -> Result<Self> {
        if tree >= decomposition.len() {
            return Err(Error::InvalidDecomposition(format!("no tree {tree}")));
        }
        let t = &decomposition.trees()[tree];
        let temperature = rho * decomposition.weights()[tree];
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidConfig(format!("slave temperature {temperature} is not positive")));
        }
        let nodes = t.nodes().to_vec();
        let unaries = nodes
            .iter()
            .map(|&i| {
                let share = decomposition.node_trees(i).len() as f64;
                theta_tilde[i].iter().map(|v| v / share).collect()
            })
            .collect();
        let local = |i: usize| t.local_index(i).expect("edge endpoints belong to the tree");
        let edges: Vec<LocalEdge> = t
            .edges()
            .iter()
            .map(|&e| {
                let edge = model.edge(e);
                let share = decomposition.edge_trees(e).len() as f64;
                LocalEdge {
                    a: local(edge.i()),
                    b: local(edge.j()),
                    global: e,
                    cols: edge.cols(),
                    table: edge.table().iter().map(|v| v / share).collect(),
                }
            })
            .collect();
        Ok(Self::assemble(nodes, unaries, edges, temperature))
    }

    fn assemble(nodes: Vec<usize>, unaries: Vec<Vec<f64>>, edges: Vec<LocalEdge>, temperature: f64) -> Self {
        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        let mut order = Vec::with_capacity(n);
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let head = order.len();
            order.push(root);
            let mut cursor = head;
            while cursor < order.len() {
                let v = order[cursor];
                cursor += 1;
                for &(w, k) in &adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        parent[w] = Some((v, k));
                        order.push(w);
                    }
                }
            }
        }
        SlaveProblem {
            nodes,
            unaries,
            edges,
            temperature,
            adjacency,
            order,
            parent,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Global node ids of this slave.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Adjusted unaries, parallel to [`SlaveProblem::nodes`].
    pub fn unaries(&self) -> &[Vec<f64>] {
        &self.unaries
    }

    /// Global edge ids of this slave.
    pub fn edge_ids(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.global).collect()
    }

    /// Adjusted pairwise table of local edge `k`.
    pub fn pairwise(&self, k: usize) -> &[f64] {
        &self.edges[k].table
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn solve(&self) -> TreeMarginals {
        self.solve_shifted(None, None)
    }

    /// Sum-product with additive shifts on the local unaries and tables.
    pub(crate) fn solve_shifted(&self, node_shift: Option<&[Vec<f64>]>, edge_shift: Option<&[Vec<f64>]>) -> TreeMarginals {
        let temp = self.temperature;
        let n = self.nodes.len();
        let unary = |k: usize, x: usize| -> f64 {
            self.unaries[k][x] + node_shift.map_or(0.0, |s| s[k][x])
        };
        let eshift = |k: usize| edge_shift.map(|s| s[k].as_slice());

        // msgs[k][0]: a -> b over labels of b; msgs[k][1]: b -> a over labels of a
        let mut msgs: Vec<[Vec<f64>; 2]> = self
            .edges
            .iter()
            .map(|e| [vec![0.0; e.cols], vec![0.0; e.table.len() / e.cols]])
            .collect();
        fn incoming<'m>(edges: &[LocalEdge], msgs: &'m [[Vec<f64>; 2]], v: usize, k: usize) -> &'m [f64] {
            if edges[k].b == v {
                &msgs[k][0]
            } else {
                &msgs[k][1]
            }
        }
        // log-weights of v with every incoming message except the one on `skip`
        let cavity = |msgs: &[[Vec<f64>; 2]], v: usize, skip: Option<usize>| -> Vec<f64> {
            let mut c: Vec<f64> = (0..self.unaries[v].len()).map(|x| -unary(v, x) / temp).collect();
            for &(_, k) in &self.adjacency[v] {
                if Some(k) != skip {
                    c.iter_mut().zip(incoming(&self.edges, msgs, v, k)).for_each(|(a, m)| *a += m);
                }
            }
            c
        };
        let send = |msgs: &mut Vec<[Vec<f64>; 2]>, from: usize, k: usize| {
            let c = cavity(msgs, from, Some(k));
            let e = &self.edges[k];
            let to = if e.a == from { e.b } else { e.a };
            let mut terms = vec![0.0; c.len()];
            let out: Vec<f64> = (0..self.unaries[to].len())
                .map(|xt| {
                    for (xf, t) in terms.iter_mut().enumerate() {
                        *t = c[xf] - e.pot(eshift(k), from, xf, xt) / temp;
                    }
                    log_sum_exp(&terms)
                })
                .collect();
            let dir = if e.a == from { 0 } else { 1 };
            msgs[k][dir] = out;
        };

        for &v in self.order.iter().rev() {
            if let Some((_, k)) = self.parent[v] {
                send(&mut msgs, v, k);
            }
        }
        for &v in &self.order {
            if let Some((p, k)) = self.parent[v] {
                send(&mut msgs, p, k);
            }
        }

        let mut log_partition = 0.0;
        let mut nodes = Vec::with_capacity(n);
        for v in 0..n {
            let mut b = cavity(&msgs, v, None);
            if self.parent[v].is_none() {
                log_partition += log_sum_exp(&b);
            }
            softmax_in_place(&mut b);
            nodes.push(b);
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let ca = cavity(&msgs, e.a, Some(k));
                let cb = cavity(&msgs, e.b, Some(k));
                let shift = eshift(k);
                let mut t = vec![0.0; e.table.len()];
                for (xa, &va) in ca.iter().enumerate() {
                    for (xb, &vb) in cb.iter().enumerate() {
                        let idx = xa * e.cols + xb;
                        t[idx] = va + vb - (e.table[idx] + shift.map_or(0.0, |s| s[idx])) / temp;
                    }
                }
                softmax_in_place(&mut t);
                t
            })
            .collect();
        TreeMarginals {
            node_ids: self.nodes.clone(),
            edge_ids: self.edge_ids(),
            nodes,
            edges,
            log_partition,
        }
    }
}

/// Exact node and edge marginals of `p(x) ~ exp(-E_a(x) / T_a)` on the slave.
pub fn slave_solve(slave: &SlaveProblem) -> TreeMarginals {
    slave.solve()
}
