//! Dual decomposition of the tree-weighting subproblem.
//!
//! Every tree keeps its own copy of the node (and shared edge) marginals.
//! Agreement is enforced through multipliers that sum to zero across the
//! copies of each variable. The smoothed dual
//!
//! ```text
//! g(lambda) = sum_a -T_a log Z_a(theta^_a + lambda^a),   T_a = rho eta_a
//! ```
//!
//! is concave and differentiable with gradient equal to the slave
//! marginals; it is maximized by FISTA with backtracking and function-value
//! restarts.

use crate::error::{Error, Result};
use crate::forest::ForestDecomposition;
use crate::model::{Marginals, Model};
use crate::objective::{tree_subproblem_objective, PenaltyKind};
use crate::par;

use super::sum_product::{SlaveProblem, TreeMarginals};
use super::{cccp, CccpOptions, CccpReport, InnerOutcome, InnerSolver};

const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Node(usize),
    Edge(usize),
}

/// One copy of a shared variable: tree, local position, offset into the
/// flat multiplier vector and its length.
#[derive(Debug, Clone)]
struct Block {
    tree: usize,
    slot: Slot,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    blocks: Vec<Block>,
    // indices into `blocks`, one group per shared global variable
    groups: Vec<Vec<usize>>,
    dim: usize,
    // per tree: (block index per local node, block index per local edge)
    node_block: Vec<Vec<Option<usize>>>,
    edge_block: Vec<Vec<Option<usize>>>,
}

impl Layout {
    fn new(model: &Model, d: &ForestDecomposition) -> Self {
        let mut blocks = Vec::new();
        let mut groups = Vec::new();
        let mut node_block: Vec<Vec<Option<usize>>> = d.trees().iter().map(|t| vec![None; t.nodes().len()]).collect();
        let mut edge_block: Vec<Vec<Option<usize>>> = d.trees().iter().map(|t| vec![None; t.edges().len()]).collect();
        let mut dim = 0;
        for i in 0..model.num_nodes() {
            let owners = d.node_trees(i);
            if owners.len() < 2 {
                continue;
            }
            let mut group = Vec::with_capacity(owners.len());
            for &a in owners {
                let local = d.trees()[a].local_index(i).expect("owner tree contains node");
                node_block[a][local] = Some(blocks.len());
                group.push(blocks.len());
                blocks.push(Block {
                    tree: a,
                    slot: Slot::Node(local),
                    offset: dim,
                    len: model.cardinality(i),
                });
                dim += model.cardinality(i);
            }
            groups.push(group);
        }
        for e in 0..model.num_edges() {
            let owners = d.edge_trees(e);
            if owners.len() < 2 {
                continue;
            }
            let len = model.edge(e).table().len();
            let mut group = Vec::with_capacity(owners.len());
            for &a in owners {
                let local = d.trees()[a].edges().binary_search(&e).expect("owner tree contains edge");
                edge_block[a][local] = Some(blocks.len());
                group.push(blocks.len());
                blocks.push(Block {
                    tree: a,
                    slot: Slot::Edge(local),
                    offset: dim,
                    len,
                });
                dim += len;
            }
            groups.push(group);
        }
        Layout {
            blocks,
            groups,
            dim,
            node_block,
            edge_block,
        }
    }

    /// Subtracts the across-copy mean from every group in place.
    fn project(&self, v: &mut [f64]) {
        for group in &self.groups {
            let len = self.blocks[group[0]].len;
            let count = group.len() as f64;
            for x in 0..len {
                let mean = group.iter().map(|&b| v[self.blocks[b].offset + x]).sum::<f64>() / count;
                for &b in group {
                    v[self.blocks[b].offset + x] -= mean;
                }
            }
        }
    }
}

/// Lagrange multipliers of the agreement constraints plus the accelerated
/// gradient state. Reusable across calls on the same model and
/// decomposition for warm starts.
#[derive(Debug, Clone)]
pub struct DualState {
    layout: Layout,
    lambda: Vec<f64>,
    step: f64,
}

impl DualState {
    /// Zero multipliers for `decomposition` over `model`.
    pub fn new(model: &Model, decomposition: &ForestDecomposition) -> Self {
        let layout = Layout::new(model, decomposition);
        let lambda = vec![0.0; layout.dim];
        DualState {
            layout,
            lambda,
            step: 0.0,
        }
    }

    /// Flat multiplier vector.
    pub fn multipliers(&self) -> &[f64] {
        &self.lambda
    }

    /// Step size divided by the penalty weight, zero before the first solve.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Largest absolute across-copy sum of the multipliers.
    pub fn zero_sum_violation(&self) -> f64 {
        let l = &self.layout;
        let mut worst: f64 = 0.0;
        for group in &l.groups {
            for x in 0..l.blocks[group[0]].len {
                let s: f64 = group.iter().map(|&b| self.lambda[l.blocks[b].offset + x]).sum();
                worst = worst.max(s.abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdOptions {
    /// Stop once every slave copy is within this max-norm of the copy mean.
    pub tol: f64,
    pub max_iters: usize,
    pub parallel: bool,
}

impl Default for DdOptions {
    fn default() -> Self {
        DdOptions {
            tol: 1e-8,
            max_iters: 20_000,
            parallel: par::AVAILABLE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DdReport {
    /// Weighted average of the slave copies.
    pub marginals: Marginals,
    /// Accelerated gradient steps taken.
    pub iterations: usize,
    /// Largest disagreement between a slave copy and the copy mean.
    pub disagreement: f64,
    pub converged: bool,
    /// Smoothed dual value at the returned multipliers.
    pub dual_value: f64,
    /// Subproblem objective of `marginals`.
    pub primal_value: f64,
}

struct Evaluation {
    value: f64,
    gradient: Vec<f64>,
    disagreement: f64,
    slaves: Vec<TreeMarginals>,
}

struct Master<'a> {
    layout: &'a Layout,
    slaves: Vec<SlaveProblem>,
    parallel: bool,
}

impl Master<'_> {
    fn evaluate(&self, lambda: &[f64]) -> Evaluation {
        let layout = self.layout;
        let solved = par::map_coarse(self.slaves.len(), self.parallel, |a| {
            let slave = &self.slaves[a];
            let node_shift: Vec<Vec<f64>> = layout.node_block[a]
                .iter()
                .zip(slave.unaries())
                .map(|(b, u)| match b {
                    Some(b) => {
                        let blk = &layout.blocks[*b];
                        lambda[blk.offset..blk.offset + blk.len].to_vec()
                    }
                    None => vec![0.0; u.len()],
                })
                .collect();
            let edge_shift: Option<Vec<Vec<f64>>> = layout.edge_block[a].iter().any(Option::is_some).then(|| {
                layout.edge_block[a]
                    .iter()
                    .enumerate()
                    .map(|(k, b)| match b {
                        Some(b) => {
                            let blk = &layout.blocks[*b];
                            lambda[blk.offset..blk.offset + blk.len].to_vec()
                        }
                        None => vec![0.0; slave.pairwise(k).len()],
                    })
                    .collect()
            });
            slave.solve_shifted(Some(&node_shift), edge_shift.as_deref())
        });

        // fixed tree order for the reduction
        let value: f64 = solved
            .iter()
            .zip(&self.slaves)
            .map(|(s, p)| -p.temperature() * s.log_partition)
            .sum();
        let mut gradient = vec![0.0; layout.dim];
        for blk in &layout.blocks {
            let src = match blk.slot {
                Slot::Node(k) => &solved[blk.tree].nodes[k],
                Slot::Edge(k) => &solved[blk.tree].edges[k],
            };
            gradient[blk.offset..blk.offset + blk.len].copy_from_slice(src);
        }
        layout.project(&mut gradient);
        let disagreement = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        Evaluation {
            value,
            gradient,
            disagreement,
            slaves: solved,
        }
    }
}

/// Weighted average of the slave copies, renormalized.
fn primal_average(model: &Model, d: &ForestDecomposition, slaves: &[TreeMarginals]) -> Marginals {
    let weights = d.weights();
    let average = |len: usize, copies: &mut dyn Iterator<Item = (f64, &[f64])>| -> Vec<f64> {
        let mut acc = vec![0.0; len];
        for (w, v) in copies {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += w * x.max(0.0));
        }
        let total: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|a| *a /= total);
        acc
    };
    let nodes = (0..model.num_nodes())
        .map(|i| {
            let mut it = d.node_trees(i).iter().map(|&a| {
                let k = d.trees()[a].local_index(i).expect("owner tree contains node");
                (weights[a], slaves[a].nodes[k].as_slice())
            });
            average(model.cardinality(i), &mut it)
        })
        .collect();
    let edges = (0..model.num_edges())
        .map(|e| {
            let mut it = d.edge_trees(e).iter().map(|&a| {
                let k = d.trees()[a].edges().binary_search(&e).expect("owner tree contains edge");
                (weights[a], slaves[a].edges[k].as_slice())
            });
            average(model.edge(e).table().len(), &mut it)
        })
        .collect();
    Marginals::from_parts(nodes, edges)
}

/// Maximizes the smoothed dual of the tree-weighting subproblem, starting
/// from (and updating) `state`. Returns the averaged primal marginals.
/// Non-convergence within `opts.max_iters` is flagged, not an error.
pub fn dd_solve(
    model: &Model,
    theta_tilde: &[Vec<f64>],
    decomposition: &ForestDecomposition,
    rho: f64,
    opts: &DdOptions,
    state: &mut DualState,
) -> Result<DdReport> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    if !decomposition.fits(model) {
        return Err(Error::InvalidDecomposition("decomposition was built for a different model".into()));
    }
    if theta_tilde.len() != model.num_nodes()
        || theta_tilde.iter().enumerate().any(|(i, t)| t.len() != model.cardinality(i))
    {
        return Err(Error::DimensionMismatch("modified unaries do not match the model".into()));
    }
    if state.lambda.len() != Layout::new(model, decomposition).dim {
        return Err(Error::DimensionMismatch("dual state does not match the decomposition".into()));
    }

    let slaves = (0..decomposition.len())
        .map(|a| SlaveProblem::new(model, theta_tilde, decomposition, a, rho))
        .collect::<Result<Vec<_>>>()?;
    let layout = state.layout.clone();
    let master = Master {
        layout: &layout,
        slaves,
        parallel: opts.parallel,
    };

    // the dual is (1 / (rho * eta_min))-smooth, so steps are kept relative to rho
    if state.step <= 0.0 {
        let min_eta = decomposition.weights().iter().copied().fold(f64::INFINITY, f64::min);
        state.step = min_eta / decomposition.len() as f64;
    }
    let mut step = state.step * rho;

    let mut x = state.lambda.clone();
    layout.project(&mut x);
    let mut at_x = master.evaluate(&x);
    let mut y = x.clone();
    let mut at_y_value = at_x.value;
    let mut at_y_grad = at_x.gradient.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;

    while at_x.disagreement > opts.tol && iterations < opts.max_iters {
        let grad_sq: f64 = at_y_grad.iter().map(|g| g * g).sum();
        let mut candidate;
        let mut at_candidate;
        let mut backtracks = 0;
        loop {
            candidate = y.iter().zip(&at_y_grad).map(|(v, g)| v + step * g).collect::<Vec<_>>();
            layout.project(&mut candidate);
            at_candidate = master.evaluate(&candidate);
            let slack = 1e-12 * (1.0 + at_y_value.abs());
            if at_candidate.value >= at_y_value + 0.5 * step * grad_sq - slack || backtracks >= MAX_BACKTRACKS {
                break;
            }
            step *= 0.5;
            backtracks += 1;
        }
        iterations += 1;

        if at_candidate.value < at_x.value {
            // function-value restart
            t = 1.0;
            y = candidate.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = candidate
                .iter()
                .zip(&x)
                .map(|(c, p)| c + beta * (c - p))
                .collect();
            layout.project(&mut y);
            t = t_next;
        }
        x = candidate;
        at_x = at_candidate;
        if at_x.disagreement <= opts.tol {
            break;
        }
        if y == x {
            at_y_value = at_x.value;
            at_y_grad = at_x.gradient.clone();
        } else {
            let at_y = master.evaluate(&y);
            at_y_value = at_y.value;
            at_y_grad = at_y.gradient;
        }
    }

    state.lambda = x;
    state.step = step / rho;
    let marginals = primal_average(model, decomposition, &at_x.slaves);
    let primal_value = tree_subproblem_objective(model, theta_tilde, &marginals, rho, decomposition);
    Ok(DdReport {
        marginals,
        iterations,
        disagreement: at_x.disagreement,
        converged: at_x.disagreement <= opts.tol,
        dual_value: at_x.value,
        primal_value,
    })
}

pub(crate) struct DualDecomposition<'a> {
    pub(crate) decomposition: &'a ForestDecomposition,
    pub(crate) state: &'a mut DualState,
    pub(crate) opts: DdOptions,
}

impl InnerSolver for DualDecomposition<'_> {
    fn solve(&mut self, model: &Model, theta_tilde: &[Vec<f64>], rho: f64) -> Result<InnerOutcome> {
        let r = dd_solve(model, theta_tilde, self.decomposition, rho, &self.opts, self.state)?;
        Ok(InnerOutcome {
            marginals: r.marginals,
            iterations: r.iterations,
            residual: r.disagreement,
            converged: r.converged,
        })
    }
}

/// CCCP for the tree-weighting objective at fixed `rho`, with dual
/// decomposition inner solves warm-started from `state`.
pub fn cccp_tree(
    model: &Model,
    rho: f64,
    mu_init: &Marginals,
    decomposition: &ForestDecomposition,
    state: &mut DualState,
    opts: &CccpOptions,
    inner: &DdOptions,
) -> Result<CccpReport> {
    let mut solver = DualDecomposition {
        decomposition,
        state,
        opts: *inner,
    };
    cccp(model, rho, mu_init, PenaltyKind::Tree(decomposition), &mut solver, opts)
}
