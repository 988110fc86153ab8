#![allow(dead_code)]

use lpqp::{ForestDecomposition, Marginals, Model};
use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, half_width: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-half_width..half_width)).collect()
}

/// Model on `n` nodes with the given edge list and potentials in `(-1, 1)`.
pub fn random_model(rng: &mut ChaCha8Rng, cards: &[usize], edges: &[(usize, usize)]) -> Model {
    let unaries = cards.iter().map(|&k| uniform_vec(rng, k, 1.0)).collect();
    let edges = edges
        .iter()
        .map(|&(i, j)| (i, j, uniform_vec(rng, cards[i] * cards[j], 1.0)))
        .collect();
    Model::new(unaries, edges).unwrap()
}

pub fn random_cards(rng: &mut ChaCha8Rng, n: usize, choices: &[usize]) -> Vec<usize> {
    (0..n).map(|_| *choices.choose(rng).unwrap()).collect()
}

/// Random labelled tree: node `v > 0` attaches to a uniformly chosen earlier node.
pub fn random_tree_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    (1..n)
        .map(|v| {
            let u = rng.random_range(0..v);
            (perm[u].min(perm[v]), perm[u].max(perm[v]))
        })
        .collect()
}

/// Random graph on `n` nodes where each pair is joined with probability `p`.
pub fn random_graph_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn chain_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i - 1, i)).collect()
}

pub fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    let mut e = chain_edges(n);
    e.push((0, n - 1));
    e
}

/// Rescales every potential so the mean absolute entry is one.
pub fn unit_mean(model: &Model) -> Model {
    let mut total = 0.0;
    let mut count = 0usize;
    for u in model.unaries() {
        total += u.iter().map(|v| v.abs()).sum::<f64>();
        count += u.len();
    }
    for e in model.edges() {
        total += e.table().iter().map(|v| v.abs()).sum::<f64>();
        count += e.table().len();
    }
    model.scaled(count as f64 / total)
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| -rng.random_range(f64::MIN_POSITIVE..1.0).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Node marginals that are sometimes integral, sometimes sparse, usually dense.
pub fn random_node_marginals(rng: &mut ChaCha8Rng, cards: &[usize]) -> Vec<Vec<f64>> {
    cards
        .iter()
        .map(|&k| match rng.random_range(0..4) {
            0 => {
                let mut v = vec![0.0; k];
                v[rng.random_range(0..k)] = 1.0;
                v
            }
            1 => {
                let mut v = random_simplex(rng, k);
                v[rng.random_range(0..k)] = 0.0;
                let s: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= s);
                v
            }
            _ => random_simplex(rng, k),
        })
        .collect()
}

/// Consistent marginals of a random mixture of product distributions.
pub fn random_consistent_marginals(rng: &mut ChaCha8Rng, model: &Model) -> Marginals {
    let parts = rng.random_range(1..4);
    let weights = random_simplex(rng, parts);
    let products: Vec<Vec<Vec<f64>>> = (0..parts)
        .map(|_| model.cardinalities().iter().map(|&k| random_simplex(rng, k)).collect())
        .collect();
    let mut nodes: Vec<Vec<f64>> = model.cardinalities().iter().map(|&k| vec![0.0; k]).collect();
    let mut edges: Vec<Vec<f64>> = model.edges().iter().map(|e| vec![0.0; e.table().len()]).collect();
    for (w, p) in weights.iter().zip(&products) {
        for (i, n) in nodes.iter_mut().enumerate() {
            n.iter_mut().zip(&p[i]).for_each(|(a, b)| *a += w * b);
        }
        for (e, edge) in model.edges().iter().enumerate() {
            for k in 0..edge.rows() {
                for l in 0..edge.cols() {
                    edges[e][k * edge.cols() + l] += w * p[edge.i()][k] * p[edge.j()][l];
                }
            }
        }
    }
    Marginals::new(model, nodes, edges).unwrap()
}

fn neg_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = v.clone().fold(f64::NEG_INFINITY, f64::max);
    top + v.map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `min_{p in simplex} g . p - w H(p)`.
fn smoothed_min(g: &[f64], w: f64) -> f64 {
    if w > 0.0 {
        -w * log_sum_exp(g.iter().map(|x| -x / w))
    } else {
        g.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Entropy weights of an edge block: `alpha H(mu) + row H(col | row) + col H(row | col)`.
#[derive(Clone, Copy, Default)]
struct EdgeEntropy {
    alpha: f64,
    row: f64,
    col: f64,
}

/// `f(mu) = c . mu - sum_b w_b H(mu_b)` over the local polytope, with one
/// entropy weight per node and per edge block.
pub struct EntropicLp<'a> {
    model: &'a Model,
    node_cost: Vec<Vec<f64>>,
    node_weight: Vec<f64>,
    edge_weight: Vec<f64>,
    // the same function written with convex blocks
    root_weight: Vec<f64>,
    edge_entropy: Vec<EdgeEntropy>,
}

/// `argmin_y |A^T y - g|`, through the eigenvectors of `A A^T` with
/// iterative refinement.
fn least_squares(a: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let eig = (a * a.transpose()).symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let solve = |rhs: DVector<f64>| {
        let mut y = DVector::zeros(rhs.len());
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > 1e-10 * top {
                let v = eig.eigenvectors.column(k);
                y += v * (v.dot(&rhs) / lambda);
            }
        }
        y
    };
    let mut y = solve(a * g);
    for _ in 0..3 {
        let r = g - a.transpose() * &y;
        y += solve(a * r);
    }
    y
}

pub struct OracleSolution {
    pub marginals: Marginals,
    pub objective: f64,
    /// Upper bound on `objective - min f`.
    pub gap: f64,
    pub iterations: usize,
}

impl<'a> EntropicLp<'a> {
    /// Linear costs plus `rho` times the edge entropies.
    pub fn uniform(model: &'a Model, theta_tilde: &[Vec<f64>], rho: f64) -> Self {
        EntropicLp {
            model,
            node_cost: theta_tilde.to_vec(),
            node_weight: vec![0.0; model.num_nodes()],
            edge_weight: vec![rho; model.num_edges()],
            root_weight: vec![0.0; model.num_nodes()],
            edge_entropy: vec![EdgeEntropy { alpha: rho, ..Default::default() }; model.num_edges()],
        }
    }

    /// Linear costs plus `rho sum_a eta_a H_tree^a`, expanded per block.
    pub fn tree(model: &'a Model, theta_tilde: &[Vec<f64>], rho: f64, d: &ForestDecomposition) -> Self {
        let n = model.num_nodes();
        let mut node_weight = vec![0.0; n];
        let mut edge_weight = vec![0.0; model.num_edges()];
        let mut root_weight = vec![0.0; n];
        let mut edge_entropy = vec![EdgeEntropy::default(); model.num_edges()];
        for (tree, &eta) in d.trees().iter().zip(d.weights()) {
            let w = rho * eta;
            for &e in tree.edges() {
                edge_weight[e] += w;
            }
            for (&i, &deg) in tree.nodes().iter().zip(tree.degrees()) {
                node_weight[i] += w * (1.0 - deg as f64);
            }
            // root every component: H_tree = sum_roots H(root) + sum_edges H(child | parent)
            let mut seen = vec![false; n];
            for &root in tree.nodes() {
                if seen[root] {
                    continue;
                }
                seen[root] = true;
                root_weight[root] += w;
                let mut stack = vec![root];
                while let Some(v) = stack.pop() {
                    for &e in tree.edges() {
                        let edge = model.edge(e);
                        let (parent_is_i, child) = if edge.i() == v {
                            (true, edge.j())
                        } else if edge.j() == v {
                            (false, edge.i())
                        } else {
                            continue;
                        };
                        if seen[child] {
                            continue;
                        }
                        seen[child] = true;
                        if parent_is_i {
                            edge_entropy[e].row += w;
                        } else {
                            edge_entropy[e].col += w;
                        }
                        stack.push(child);
                    }
                }
            }
        }
        EntropicLp {
            model,
            node_cost: theta_tilde.to_vec(),
            node_weight,
            edge_weight,
            root_weight,
            edge_entropy,
        }
    }

    pub fn objective(&self, nodes: &[Vec<f64>], edges: &[Vec<f64>]) -> f64 {
        let mut f = 0.0;
        for (i, n) in nodes.iter().enumerate() {
            f += n.iter().zip(&self.node_cost[i]).map(|(a, b)| a * b).sum::<f64>();
            f += self.node_weight[i] * neg_entropy(n);
        }
        for (e, t) in edges.iter().enumerate() {
            f += t.iter().zip(self.model.edge(e).table()).map(|(a, b)| a * b).sum::<f64>();
            f += self.edge_weight[e] * neg_entropy(t);
        }
        f
    }

    fn gradient(&self, nodes: &[Vec<f64>], edges: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let gn = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                n.iter()
                    .zip(&self.node_cost[i])
                    .map(|(&m, &c)| c + self.node_weight[i] * (m.ln() + 1.0))
                    .collect()
            })
            .collect();
        let ge = edges
            .iter()
            .enumerate()
            .map(|(e, t)| {
                t.iter()
                    .zip(self.model.edge(e).table())
                    .map(|(&m, &c)| c + self.edge_weight[e] * (m.ln() + 1.0))
                    .collect()
            })
            .collect();
        (gn, ge)
    }

    /// Gradient of the convex-block form, which agrees with `f` on the polytope.
    fn block_gradient(&self, nodes: &[Vec<f64>], edges: &[Vec<f64>]) -> Vec<f64> {
        let mut g = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            g.extend(n.iter().zip(&self.node_cost[i]).map(|(&m, &c)| c + self.root_weight[i] * (m.ln() + 1.0)));
        }
        for (e, t) in edges.iter().enumerate() {
            let edge = self.model.edge(e);
            let cols = edge.cols();
            let h = self.edge_entropy[e];
            let rows: Vec<f64> = (0..edge.rows()).map(|k| t[k * cols..(k + 1) * cols].iter().sum()).collect();
            let colsum: Vec<f64> = (0..cols).map(|l| (0..edge.rows()).map(|k| t[k * cols + l]).sum()).collect();
            for (idx, (&m, &c)) in t.iter().zip(edge.table()).enumerate() {
                let (k, l) = (idx / cols, idx % cols);
                g.push(c + h.alpha * (m.ln() + 1.0) + h.row * (m / rows[k]).ln() + h.col * (m / colsum[l]).ln());
            }
        }
        g
    }

    /// `min` of one edge block's convex part plus `g . mu` over its simplex.
    fn edge_block_min(&self, e: usize, g: &[f64]) -> f64 {
        let edge = self.model.edge(e);
        let h = self.edge_entropy[e];
        assert!(h.row == 0.0 || h.col == 0.0, "edge {e} is rooted from both ends");
        let (rows, cols) = (edge.rows(), edge.cols());
        // conditioned side first
        let blocks: Vec<Vec<f64>> = if h.col == 0.0 {
            g.chunks(cols).map(<[f64]>::to_vec).collect()
        } else {
            (0..cols).map(|l| (0..rows).map(|k| g[k * cols + l]).collect()).collect()
        };
        let cond = h.alpha + h.row + h.col;
        let v: Vec<f64> = blocks.iter().map(|b| smoothed_min(b, cond)).collect();
        smoothed_min(&v, h.alpha)
    }

    /// KL projection onto the local polytope by cyclic Bregman projections
    /// onto its affine constraints.
    fn project(&self, nodes: &mut [Vec<f64>], edges: &mut [Vec<f64>]) {
        for _ in 0..100_000 {
            let mut worst: f64 = 0.0;
            for n in nodes.iter_mut() {
                let s: f64 = n.iter().sum();
                worst = worst.max((s - 1.0).abs());
                n.iter_mut().for_each(|x| *x /= s);
            }
            for (e, edge) in self.model.edges().iter().enumerate() {
                let (i, j, cols) = (edge.i(), edge.j(), edge.cols());
                for k in 0..edge.rows() {
                    let r: f64 = edges[e][k * cols..(k + 1) * cols].iter().sum();
                    worst = worst.max((r - nodes[i][k]).abs());
                    let s = (nodes[i][k] / r).sqrt();
                    edges[e][k * cols..(k + 1) * cols].iter_mut().for_each(|x| *x *= s);
                    nodes[i][k] /= s;
                }
                for l in 0..cols {
                    let c: f64 = (0..edge.rows()).map(|k| edges[e][k * cols + l]).sum();
                    worst = worst.max((c - nodes[j][l]).abs());
                    let s = (nodes[j][l] / c).sqrt();
                    (0..edge.rows()).for_each(|k| edges[e][k * cols + l] *= s);
                    nodes[j][l] /= s;
                }
            }
            if worst < 1e-15 {
                break;
            }
        }
    }

    /// Marginalization and node normalization rows, with right-hand side.
    fn constraints(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.model;
        let mut offsets = Vec::new();
        let mut dim = 0;
        for i in 0..m.num_nodes() {
            offsets.push(dim);
            dim += m.cardinality(i);
        }
        let mut edge_offsets = Vec::new();
        for e in m.edges() {
            edge_offsets.push(dim);
            dim += e.table().len();
        }
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..m.num_nodes() {
            rows.push((0..m.cardinality(i)).map(|k| (offsets[i] + k, 1.0)).collect());
            rhs.push(1.0);
        }
        for (e, edge) in m.edges().iter().enumerate() {
            let cols = edge.cols();
            for k in 0..edge.rows() {
                let mut r: Vec<(usize, f64)> = (0..cols).map(|l| (edge_offsets[e] + k * cols + l, 1.0)).collect();
                r.push((offsets[edge.i()] + k, -1.0));
                rows.push(r);
                rhs.push(0.0);
            }
            for l in 0..cols {
                let mut r: Vec<(usize, f64)> = (0..edge.rows()).map(|k| (edge_offsets[e] + k * cols + l, 1.0)).collect();
                r.push((offsets[edge.j()] + l, -1.0));
                rows.push(r);
                rhs.push(0.0);
            }
        }
        let mut a = DMatrix::zeros(rows.len(), dim);
        for (r, entries) in rows.iter().enumerate() {
            for &(c, v) in entries {
                a[(r, c)] = v;
            }
        }
        (a, DVector::from_vec(rhs))
    }

    /// Lagrangian lower bound at multipliers fitted to the gradient at `mu`,
    /// subtracted from `f(mu)`.
    fn certificate(&self, a: &DMatrix<f64>, b: &DVector<f64>, nodes: &[Vec<f64>], edges: &[Vec<f64>]) -> f64 {
        let g = DVector::from_vec(self.block_gradient(nodes, edges));
        let y = least_squares(a, &g);
        let aty = a.transpose() * &y;
        let mut lower = y.dot(b);
        let mut offset = 0;
        for (i, n) in nodes.iter().enumerate() {
            let shifted: Vec<f64> = (0..n.len()).map(|k| self.node_cost[i][k] - aty[offset + k]).collect();
            lower += smoothed_min(&shifted, self.root_weight[i]);
            offset += n.len();
        }
        for (e, t) in edges.iter().enumerate() {
            let table = self.model.edge(e).table();
            let shifted: Vec<f64> = (0..t.len()).map(|k| table[k] - aty[offset + k]).collect();
            lower += self.edge_block_min(e, &shifted);
            offset += t.len();
        }
        self.objective(nodes, edges) - lower
    }

    /// Entropic mirror descent from the uniform point until the certified
    /// gap is at most `gap_tol`.
    pub fn minimize(&self, gap_tol: f64, max_iters: usize) -> OracleSolution {
        let m = self.model;
        let mut nodes: Vec<Vec<f64>> = m.cardinalities().iter().map(|&k| vec![1.0 / k as f64; k]).collect();
        let mut edges: Vec<Vec<f64>> = m
            .edges()
            .iter()
            .map(|e| vec![1.0 / e.table().len() as f64; e.table().len()])
            .collect();
        let (a, b) = self.constraints();
        let scale = self
            .node_weight
            .iter()
            .chain(&self.edge_weight)
            .fold(0.0f64, |s, w| s.max(w.abs()));
        let step = 1.0 / scale;
        let mut gap = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iters {
            if iterations % 20 == 0 {
                gap = self.certificate(&a, &b, &nodes, &edges);
                if gap <= gap_tol {
                    break;
                }
            }
            let (gn, ge) = self.gradient(&nodes, &edges);
            for (block, g) in nodes.iter_mut().chain(edges.iter_mut()).zip(gn.iter().chain(&ge)) {
                let shift = g.iter().copied().fold(f64::INFINITY, f64::min);
                block
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, gi)| *x *= (-(gi - shift) * step).exp());
                let s: f64 = block.iter().sum();
                block.iter_mut().for_each(|x| *x = (*x / s).max(1e-300));
            }
            self.project(&mut nodes, &mut edges);
            iterations += 1;
        }
        if gap > gap_tol {
            gap = self.certificate(&a, &b, &nodes, &edges);
        }
        let objective = self.objective(&nodes, &edges);
        OracleSolution {
            marginals: Marginals::new(m, nodes, edges).unwrap(),
            objective,
            gap,
            iterations,
        }
    }
}
