//! Norm-product belief propagation for the uniform-weighting subproblem
//!
//! ```text
//! min_{mu in L_G}  sum_i theta~_i . mu_i + sum_ij theta_ij . mu_ij - rho sum_ij H(mu_ij)
//! ```
//!
//! Messages live in the log domain and are shifted so their largest entry is
//! zero. A pass visits the classes of a greedy node coloring in order and
//! refreshes every message into the nodes of the current class. Nodes of one
//! class are never adjacent, so their updates read disjoint state and may run
//! in parallel; across classes the pass is a block Gauss-Seidel sweep.

use crate::error::{Error, Result};
use crate::model::{Marginals, Model};
use crate::par;

use super::{log_sum_exp, softmax_in_place, InnerOutcome, InnerSolver};

/// Log-domain messages for both directions of every edge.
///
/// Slot `2e` holds the message from `edge(e).i()` to `edge(e).j()` (indexed
/// by the labels of `j`); slot `2e + 1` the reverse direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    msgs: Vec<Vec<f64>>,
}

#[inline]
fn slot(model: &Model, e: usize, from: usize) -> usize {
    if model.edge(e).i() == from {
        2 * e
    } else {
        2 * e + 1
    }
}

impl MessageState {
    /// All-zero (uniform) messages.
    pub fn uniform(model: &Model) -> Self {
        let mut msgs = Vec::with_capacity(2 * model.num_edges());
        for e in model.edges() {
            msgs.push(vec![0.0; e.cols()]);
            msgs.push(vec![0.0; e.rows()]);
        }
        MessageState { msgs }
    }

    /// Message sent from `from` along edge `e`, indexed by the receiver's labels.
    pub fn message(&self, model: &Model, e: usize, from: usize) -> &[f64] {
        &self.msgs[slot(model, e, from)]
    }

    pub fn message_mut(&mut self, model: &Model, e: usize, from: usize) -> &mut [f64] {
        &mut self.msgs[slot(model, e, from)]
    }

    /// Largest absolute entrywise difference between two states.
    pub fn max_abs_diff(&self, other: &MessageState) -> f64 {
        self.msgs
            .iter()
            .zip(&other.msgs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    fn fits(&self, model: &Model) -> bool {
        self.msgs.len() == 2 * model.num_edges()
            && model
                .edges()
                .iter()
                .enumerate()
                .all(|(e, edge)| self.msgs[2 * e].len() == edge.cols() && self.msgs[2 * e + 1].len() == edge.rows())
    }
}

/// `-theta~_i + sum of incoming log-messages`, the log of `psi_i prod m`.
fn node_sums(model: &Model, theta_tilde: &[Vec<f64>], msgs: &MessageState, parallel: bool) -> Vec<Vec<f64>> {
    par::map_indexed(model.num_nodes(), parallel, |i| {
        let mut s: Vec<f64> = theta_tilde[i].iter().map(|t| -t).collect();
        for inc in model.neighbors(i) {
            let m = msgs.message(model, inc.edge, inc.neighbor);
            s.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        }
        s
    })
}

fn check_inputs(model: &Model, theta_tilde: &[Vec<f64>], rho: f64, msgs: &MessageState) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    if theta_tilde.len() != model.num_nodes()
        || theta_tilde.iter().enumerate().any(|(i, t)| t.len() != model.cardinality(i))
    {
        return Err(Error::DimensionMismatch("modified unaries do not match the model".into()));
    }
    if !msgs.fits(model) {
        return Err(Error::DimensionMismatch("message state does not match the model".into()));
    }
    Ok(())
}

/// Greedy coloring in ascending node order, as lists of nodes per color.
pub(crate) fn color_classes(model: &Model) -> Vec<Vec<usize>> {
    let n = model.num_nodes();
    let mut color = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut taken = Vec::new();
    for i in 0..n {
        taken.clear();
        taken.extend(model.neighbors(i).iter().map(|inc| color[inc.neighbor]).filter(|&c| c != usize::MAX));
        let c = (0..).find(|c| !taken.contains(c)).expect("a free color");
        color[i] = c;
        if c == classes.len() {
            classes.push(Vec::new());
        }
        classes[c].push(i);
    }
    classes
}

/// New log-message from `from` to its neighbor across edge `e`.
fn message_update(model: &Model, theta_tilde: &[Vec<f64>], rho: f64, msgs: &MessageState, e: usize, from: usize, damping: f64) -> Vec<f64> {
    let edge = model.edge(e);
    let to = edge.other(from);
    let d = slot(model, e, from);
    let deg = model.degree(from) as f64;
    let mut cavity: Vec<f64> = theta_tilde[from].iter().map(|t| -t).collect();
    for inc in model.neighbors(from) {
        let m = msgs.message(model, inc.edge, inc.neighbor);
        cavity.iter_mut().zip(m).for_each(|(a, b)| *a += b);
    }
    cavity.iter_mut().zip(&msgs.msgs[d ^ 1]).for_each(|(c, b)| *c = *c / deg - b);
    let mut terms = vec![0.0; cavity.len()];
    let mut out: Vec<f64> = (0..model.cardinality(to))
        .map(|xt| {
            for (xf, term) in terms.iter_mut().enumerate() {
                *term = (cavity[xf] - edge.oriented(from, xf, xt)) / rho;
            }
            rho * log_sum_exp(&terms)
        })
        .collect();
    if damping > 0.0 {
        out.iter_mut()
            .zip(&msgs.msgs[d])
            .for_each(|(n, o)| *n = damping * o + (1.0 - damping) * *n);
    }
    let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.iter_mut().for_each(|v| *v -= top);
    out
}

fn step_unchecked(
    model: &Model,
    theta_tilde: &[Vec<f64>],
    rho: f64,
    msgs: &MessageState,
    damping: f64,
    parallel: bool,
    classes: &[Vec<usize>],
) -> MessageState {
    let mut state = msgs.clone();
    for class in classes {
        let updates = par::map_indexed(class.len(), parallel, |c| {
            let i = class[c];
            model
                .neighbors(i)
                .iter()
                .map(|inc| (slot(model, inc.edge, inc.neighbor), message_update(model, theta_tilde, rho, &state, inc.edge, inc.neighbor, damping)))
                .collect::<Vec<_>>()
        });
        for (d, m) in updates.into_iter().flatten() {
            state.msgs[d] = m;
        }
    }
    state
}

/// One pass of norm-product updates over all directed messages.
///
/// `damping` in `[0, 1)` mixes the previous log-message into the update.
pub fn normprod_step(
    model: &Model,
    theta_tilde: &[Vec<f64>],
    rho: f64,
    msgs: &MessageState,
    damping: f64,
    parallel: bool,
) -> Result<MessageState> {
    check_inputs(model, theta_tilde, rho, msgs)?;
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::InvalidConfig(format!("damping must lie in [0, 1), got {damping}")));
    }
    Ok(step_unchecked(model, theta_tilde, rho, msgs, damping, parallel, &color_classes(model)))
}

/// Indicator of the minimizers of `theta`, split evenly over exact ties.
fn argmin_indicator(theta: &[f64]) -> Vec<f64> {
    let best = theta.iter().copied().fold(f64::INFINITY, f64::min);
    let ties = theta.iter().filter(|&&t| t == best).count() as f64;
    theta.iter().map(|&t| if t == best { 1.0 / ties } else { 0.0 }).collect()
}

fn beliefs_unchecked(
    model: &Model,
    theta_tilde: &[Vec<f64>],
    rho: f64,
    msgs: &MessageState,
    parallel: bool,
) -> Marginals {
    let sums = node_sums(model, theta_tilde, msgs, parallel);
    let nodes = par::map_indexed(model.num_nodes(), parallel, |i| {
        let d = model.degree(i);
        if d == 0 {
            // no entropy on isolated nodes: the subproblem is linear there
            return argmin_indicator(&theta_tilde[i]);
        }
        let scale = 1.0 / (d as f64 * rho);
        let mut b: Vec<f64> = sums[i].iter().map(|s| s * scale).collect();
        softmax_in_place(&mut b);
        b
    });
    let edges = par::map_indexed(model.num_edges(), parallel, |e| {
        let edge = model.edge(e);
        let (i, j) = (edge.i(), edge.j());
        let (di, dj) = (model.degree(i) as f64, model.degree(j) as f64);
        let to_i = &msgs.msgs[2 * e + 1];
        let to_j = &msgs.msgs[2 * e];
        let ci: Vec<f64> = sums[i].iter().zip(to_i).map(|(s, m)| s / di - m).collect();
        let cj: Vec<f64> = sums[j].iter().zip(to_j).map(|(s, m)| s / dj - m).collect();
        let cols = edge.cols();
        let mut b = vec![0.0; edge.table().len()];
        for (k, &a) in ci.iter().enumerate() {
            for (l, &c) in cj.iter().enumerate() {
                b[k * cols + l] = (a + c - edge.at(k, l)) / rho;
            }
        }
        softmax_in_place(&mut b);
        b
    });
    Marginals::from_parts(nodes, edges)
}

/// Node and pairwise beliefs induced by a message state.
pub fn beliefs(
    model: &Model,
    theta_tilde: &[Vec<f64>],
    rho: f64,
    msgs: &MessageState,
    parallel: bool,
) -> Result<Marginals> {
    check_inputs(model, theta_tilde, rho, msgs)?;
    Ok(beliefs_unchecked(model, theta_tilde, rho, msgs, parallel))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    /// Stop once the largest log-message change of a pass is at most this.
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub parallel: bool,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            tol: 1e-8,
            max_iters: 10_000,
            damping: 0.0,
            parallel: par::AVAILABLE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolveReport {
    pub marginals: Marginals,
    pub messages: MessageState,
    pub iterations: usize,
    /// Largest log-message change of the last pass.
    pub final_residual: f64,
    pub converged: bool,
}

/// Runs norm-product passes from `init` until the message change drops to
/// `opts.tol` or `opts.max_iters` passes are spent. Non-convergence is
/// reported through the `converged` flag.
pub fn solve_inner_uniform(
    model: &Model,
    theta_tilde: &[Vec<f64>],
    rho: f64,
    init: MessageState,
    opts: &BpOptions,
) -> Result<InnerSolveReport> {
    check_inputs(model, theta_tilde, rho, &init)?;
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::InvalidConfig(format!(
            "damping must lie in [0, 1), got {}",
            opts.damping
        )));
    }
    let classes = color_classes(model);
    let mut msgs = init;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let next = step_unchecked(model, theta_tilde, rho, &msgs, opts.damping, opts.parallel, &classes);
        residual = next.max_abs_diff(&msgs);
        msgs = next;
        iterations += 1;
        if residual <= opts.tol {
            break;
        }
    }
    let marginals = beliefs_unchecked(model, theta_tilde, rho, &msgs, opts.parallel);
    Ok(InnerSolveReport {
        marginals,
        messages: msgs,
        iterations,
        final_residual: residual,
        converged: residual <= opts.tol,
    })
}

/// Warm-started norm-product inner solver for the CCCP loop.
pub(crate) struct NormProduct<'a> {
    pub(crate) messages: &'a mut MessageState,
    pub(crate) opts: BpOptions,
}

impl InnerSolver for NormProduct<'_> {
    fn solve(&mut self, model: &Model, theta_tilde: &[Vec<f64>], rho: f64) -> Result<InnerOutcome> {
        let init = std::mem::replace(self.messages, MessageState { msgs: Vec::new() });
        let report = solve_inner_uniform(model, theta_tilde, rho, init, &self.opts)?;
        *self.messages = report.messages;
        Ok(InnerOutcome {
            marginals: report.marginals,
            iterations: report.iterations,
            residual: report.final_residual,
            converged: report.converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::consistency_gap;

    fn single_edge(table: Vec<f64>) -> Model {
        Model::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![(0, 1, table)]).unwrap()
    }

    #[test]
    fn zero_potentials_stay_uniform() {
        let m = single_edge(vec![0.0; 4]);
        let t = m.unaries().to_vec();
        let msgs = MessageState::uniform(&m);
        let next = normprod_step(&m, &t, 1.0, &msgs, 0.0, false).unwrap();
        assert_eq!(next, msgs);
        let b = beliefs(&m, &t, 1.0, &next, false).unwrap();
        assert_eq!(b.node(0), &[0.5, 0.5]);
        assert_eq!(b.edge(0), &[0.25; 4]);
    }

    #[test]
    fn single_edge_matches_closed_form() {
        let m = single_edge(vec![0.0, 1.0, 1.0, 0.0]);
        let t = m.unaries().to_vec();
        let r = solve_inner_uniform(&m, &t, 1.0, MessageState::uniform(&m), &BpOptions::default()).unwrap();
        assert!(r.converged);
        let diag = 1.0 / (2.0 * (1.0 + (-1f64).exp()));
        let off = 0.5 - diag;
        let expected = [diag, off, off, diag];
        for (a, b) in r.marginals.edge(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((diag - 0.36552).abs() < 1e-5 && (off - 0.13448).abs() < 1e-5);
        for v in r.marginals.node(0).iter().chain(r.marginals.node(1)) {
            assert!((v - 0.5).abs() < 1e-12);
        }
        // m_{j->i} is proportional to [1 + e^-1, 1 + e^-1]
        assert!(r.messages.message(&m, 0, 1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn beliefs_ignore_message_offsets() {
        let m = Model::new(
            vec![vec![0.3, -0.2], vec![0.1, 0.0, 0.4], vec![-0.5, 0.5]],
            vec![
                (0, 1, vec![0.2, -0.7, 0.1, 0.4, 0.0, -0.3]),
                (1, 2, vec![0.5, -0.5, 0.2, 0.9, -0.1, 0.3]),
                (0, 2, vec![-0.4, 0.6, 0.8, -0.2]),
            ],
        )
        .unwrap();
        let t = m.unaries().to_vec();
        let mut msgs = MessageState::uniform(&m);
        for _ in 0..3 {
            msgs = normprod_step(&m, &t, 0.7, &msgs, 0.0, false).unwrap();
        }
        let base = beliefs(&m, &t, 0.7, &msgs, false).unwrap();
        let mut shifted = msgs.clone();
        shifted.message_mut(&m, 1, 2).iter_mut().for_each(|v| *v += 3.25);
        shifted.message_mut(&m, 0, 0).iter_mut().for_each(|v| *v -= 1.5);
        let moved = beliefs(&m, &t, 0.7, &shifted, false).unwrap();
        assert!(base.max_abs_diff(&moved) < 1e-10);

        // a shifted incoming message only shifts the outgoing ones
        let a = normprod_step(&m, &t, 0.7, &msgs, 0.0, false).unwrap();
        let b = normprod_step(&m, &t, 0.7, &shifted, 0.0, false).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn converged_beliefs_are_consistent_on_a_cycle() {
        let m = Model::new(
            vec![vec![0.3, -0.2], vec![0.1, 0.0], vec![-0.5, 0.5], vec![0.2, 0.2]],
            vec![
                (0, 1, vec![0.2, -0.7, 0.1, 0.4]),
                (1, 2, vec![0.5, -0.5, 0.2, 0.9]),
                (2, 3, vec![-0.4, 0.6, 0.8, -0.2]),
                (0, 3, vec![0.9, -0.9, -0.9, 0.9]),
            ],
        )
        .unwrap();
        let t = m.unaries().to_vec();
        let opts = BpOptions { tol: 1e-10, ..BpOptions::default() };
        let r = solve_inner_uniform(&m, &t, 0.5, MessageState::uniform(&m), &opts).unwrap();
        assert!(r.converged);
        assert!(consistency_gap(&m, &r.marginals) < 1e-8);

        // warm start at the fixed point
        let again = solve_inner_uniform(&m, &t, 0.5, r.messages.clone(), &opts).unwrap();
        assert_eq!(again.iterations, 1);
        assert!(again.final_residual <= opts.tol);
    }

    #[test]
    fn large_rho_flattens_beliefs() {
        let m = single_edge(vec![0.0, 1.0, 1.0, 0.0]);
        let t = vec![vec![0.0, 2.0], vec![1.0, 0.0]];
        let r = solve_inner_uniform(&m, &t, 1e6, MessageState::uniform(&m), &BpOptions::default()).unwrap();
        assert!(r.marginals.edge(0).iter().all(|v| (v - 0.25).abs() < 1e-5));
    }

    #[test]
    fn isolated_nodes_take_the_unary_argmin() {
        let m = Model::new(vec![vec![0.5, -1.0, 0.2], vec![0.0, 0.0]], vec![]).unwrap();
        let t = m.unaries().to_vec();
        let r = solve_inner_uniform(&m, &t, 1.0, MessageState::uniform(&m), &BpOptions::default()).unwrap();
        assert_eq!(r.marginals.node(0), &[0.0, 1.0, 0.0]);
        assert_eq!(r.marginals.node(1), &[0.5, 0.5]);
    }

    #[test]
    fn coloring_is_proper() {
        let m = Model::new(
            vec![vec![0.0; 2]; 5],
            vec![(0, 1, vec![0.0; 4]), (1, 2, vec![0.0; 4]), (0, 2, vec![0.0; 4]), (3, 4, vec![0.0; 4])],
        )
        .unwrap();
        let classes = color_classes(&m);
        assert_eq!(classes, vec![vec![0, 3], vec![1, 4], vec![2]]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let m = single_edge(vec![0.0; 4]);
        let t = m.unaries().to_vec();
        let msgs = MessageState::uniform(&m);
        assert!(normprod_step(&m, &t, 0.0, &msgs, 0.0, false).is_err());
        assert!(normprod_step(&m, &t, 1.0, &msgs, 1.0, false).is_err());
        assert!(normprod_step(&m, &t[..1], 1.0, &msgs, 0.0, false).is_err());
    }
}
