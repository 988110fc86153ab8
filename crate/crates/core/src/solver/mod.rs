//! Inner solvers for the convexified subproblems and the CCCP loop that
//! drives them at a fixed penalty weight.

pub mod sum_product;
pub mod tree;
pub mod uniform;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{energy_unchecked, lp_objective_unchecked, Marginals, Model};
use crate::objective::{modified_unaries, penalty_unchecked, PenaltyKind, CLAMP_FLOOR};
use crate::rounding::decode_argmax;

pub use sum_product::{slave_solve, SlaveProblem, TreeMarginals};
pub use tree::{cccp_tree, dd_solve, DdOptions, DdReport, DualState};
pub use uniform::{beliefs, normprod_step, solve_inner_uniform, BpOptions, InnerSolveReport, MessageState};

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Turns log-weights into a normalized distribution.
pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - top).exp();
        total += *x;
    }
    xs.iter_mut().for_each(|x| *x /= total);
}

pub(crate) struct InnerOutcome {
    pub(crate) marginals: Marginals,
    pub(crate) iterations: usize,
    pub(crate) residual: f64,
    pub(crate) converged: bool,
}

/// A warm-startable solver for the convex subproblem with modified unaries.
pub(crate) trait InnerSolver {
    fn solve(&mut self, model: &Model, theta_tilde: &[Vec<f64>], rho: f64) -> Result<InnerOutcome>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CccpOptions {
    /// Stop once consecutive iterates are within this Euclidean distance.
    pub eps_dc: f64,
    pub max_dc_iters: usize,
    /// Lower clamp on node marginals before the logarithm.
    pub clamp_floor: f64,
}

impl Default for CccpOptions {
    fn default() -> Self {
        CccpOptions {
            eps_dc: 1e-4,
            max_dc_iters: 200,
            clamp_floor: CLAMP_FLOOR,
        }
    }
}

/// Diagnostics for one CCCP iteration, evaluated at the new iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DcIterate {
    pub lp_objective: f64,
    pub penalty: f64,
    pub objective: f64,
    /// Energy of the per-node argmax decoding.
    pub decoded_energy: f64,
    pub inner_iterations: usize,
    pub inner_residual: f64,
    pub inner_converged: bool,
    /// Euclidean distance to the previous iterate.
    pub change: f64,
    /// Seconds since the start of the CCCP call.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CccpReport {
    pub marginals: Marginals,
    pub iterations: Vec<DcIterate>,
    /// False when `max_dc_iters` ran out first.
    pub converged: bool,
}

pub(crate) fn cccp<S: InnerSolver>(
    model: &Model,
    rho: f64,
    mu_init: &Marginals,
    kind: PenaltyKind<'_>,
    solver: &mut S,
    opts: &CccpOptions,
) -> Result<CccpReport> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    if !(opts.eps_dc > 0.0) || !(opts.clamp_floor > 0.0) {
        return Err(Error::InvalidConfig("eps_dc and clamp_floor must be positive".into()));
    }
    // shape check
    crate::model::lp_objective(model, mu_init)?;

    let start = Instant::now();
    let mut current = mu_init.clone();
    let mut iterations = Vec::new();
    let mut converged = false;
    while iterations.len() < opts.max_dc_iters {
        let theta_tilde = modified_unaries(model, &current, rho, kind, opts.clamp_floor);
        let inner = solver.solve(model, &theta_tilde, rho)?;
        let change = inner.marginals.distance(&current);
        let lp = lp_objective_unchecked(model, &inner.marginals);
        let pen = penalty_unchecked(model, &inner.marginals, kind);
        let decoded = decode_argmax(&inner.marginals);
        iterations.push(DcIterate {
            lp_objective: lp,
            penalty: pen,
            objective: lp + rho * pen,
            decoded_energy: energy_unchecked(model, decoded.labels()),
            inner_iterations: inner.iterations,
            inner_residual: inner.residual,
            inner_converged: inner.converged,
            change,
            seconds: start.elapsed().as_secs_f64(),
        });
        current = inner.marginals;
        if change <= opts.eps_dc {
            converged = true;
            break;
        }
    }
    Ok(CccpReport {
        marginals: current,
        iterations,
        converged,
    })
}

/// CCCP for the uniform-weighting objective at fixed `rho`, with norm-product
/// inner solves warm-started from (and written back to) `messages`.
pub fn cccp_uniform(
    model: &Model,
    rho: f64,
    mu_init: &Marginals,
    messages: &mut MessageState,
    opts: &CccpOptions,
    inner: &BpOptions,
) -> Result<CccpReport> {
    let mut solver = uniform::NormProduct {
        messages,
        opts: *inner,
    };
    cccp(model, rho, mu_init, PenaltyKind::Uniform, &mut solver, opts)
}
