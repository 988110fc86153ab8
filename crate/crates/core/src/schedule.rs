//! The outer loop: raise the penalty weight geometrically, re-solving the
//! fixed-weight problem by CCCP each time, and round the final marginals.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestDecomposition;
use crate::model::{energy, Assignment, Marginals, Model};
use crate::objective::CLAMP_FLOOR;
use crate::par;
use crate::rounding::round_solution;
use crate::solver::{cccp_tree, cccp_uniform, BpOptions, CccpOptions, DdOptions, DualState, MessageState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Uniform,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionChoice {
    /// Depth-first forest plus greedily packed leftover edges.
    Greedy,
    /// Horizontal/vertical split of a square grid.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpqpConfig {
    pub method: Method,
    /// Initial penalty weight; `None` picks [`default_rho0`].
    pub rho0: Option<f64>,
    pub rho_factor: f64,
    pub eps_dc: f64,
    pub eps_rho: f64,
    /// Largest penalty weight; `None` means `1e4 * rho0`.
    pub rho_max: Option<f64>,
    pub max_outer: usize,
    pub max_dc_iters: usize,
    pub inner_tol: f64,
    /// Inner tolerance used instead of `inner_tol` while `rho < loose_rho_ratio * rho0`.
    pub loose_inner_tol: f64,
    pub loose_rho_ratio: f64,
    pub max_inner_iters: usize,
    pub damping: f64,
    pub seed: u64,
    pub clamp_floor: f64,
    pub decomposition: DecompositionChoice,
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for LpqpConfig {
    fn default() -> Self {
        LpqpConfig {
            method: Method::Uniform,
            rho0: None,
            rho_factor: 1.5,
            eps_dc: 1e-4,
            eps_rho: 1e-4,
            rho_max: None,
            max_outer: 60,
            max_dc_iters: 200,
            inner_tol: 1e-8,
            loose_inner_tol: 1e-6,
            loose_rho_ratio: 10.0,
            max_inner_iters: 10_000,
            damping: 0.0,
            seed: 0,
            clamp_floor: CLAMP_FLOOR,
            decomposition: DecompositionChoice::Greedy,
            parallel: par::AVAILABLE,
        }
    }
}

impl LpqpConfig {
    /// Fills in `rho0` and `rho_max` for `model` and validates the result.
    pub fn resolve(&self, model: &Model) -> Result<LpqpConfig> {
        let mut c = self.clone();
        let rho0 = c.rho0.unwrap_or_else(|| default_rho0(model));
        c.rho0 = Some(rho0);
        c.rho_max = Some(c.rho_max.unwrap_or(1e4 * rho0));
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let positive = [
            ("eps_dc", self.eps_dc),
            ("eps_rho", self.eps_rho),
            ("inner_tol", self.inner_tol),
            ("loose_inner_tol", self.loose_inner_tol),
            ("clamp_floor", self.clamp_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.loose_rho_ratio >= 0.0) || !self.loose_rho_ratio.is_finite() {
            return bad(format!("loose_rho_ratio must be nonnegative, got {}", self.loose_rho_ratio));
        }
        if !(self.rho_factor > 1.0) || !self.rho_factor.is_finite() {
            return bad(format!("rho_factor must exceed 1, got {}", self.rho_factor));
        }
        if let (Some(r0), Some(rmax)) = (self.rho0, self.rho_max) {
            if !(r0 > 0.0) || !r0.is_finite() {
                return bad(format!("rho0 must be positive, got {r0}"));
            }
            if !(r0 <= rmax) {
                return bad(format!("rho0 {r0} exceeds rho_max {rmax}"));
            }
        }
        if !(0.0..1.0).contains(&self.damping) {
            return bad(format!("damping must lie in [0, 1), got {}", self.damping));
        }
        if self.max_outer == 0 || self.max_dc_iters == 0 || self.max_inner_iters == 0 {
            return bad("iteration caps must be positive".into());
        }
        Ok(())
    }
}

/// One CCCP iteration of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer: usize,
    pub dc_iter: usize,
    pub rho: f64,
    pub lp_obj: f64,
    pub penalty: f64,
    pub lpqp_obj: f64,
    pub decoded_energy: f64,
    pub inner_iters: usize,
    pub residual: f64,
    pub seconds: f64,
    pub inner_converged: bool,
    /// Whether the CCCP loop of this outer iteration converged before its cap.
    pub dc_converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    /// Distinct penalty weights in the order they were used.
    pub fn rhos(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.rho) {
                out.push(r.rho);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    RhoCapped,
    IterCapped,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::RhoCapped => "rho_capped",
            Status::IterCapped => "iter_capped",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LpqpResult {
    pub final_marginals: Marginals,
    pub rounded: Assignment,
    pub rounded_energy: f64,
    pub trace: RunTrace,
    pub status: Status,
    /// The configuration with `rho0` and `rho_max` resolved.
    pub config: LpqpConfig,
    pub wall_time: f64,
}

/// `0.1` times the mean absolute potential entry, floored at `1e-3`.
pub fn default_rho0(model: &Model) -> f64 {
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
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    (0.1 * mean).max(1e-3)
}

enum Inner {
    Uniform(MessageState),
    Tree(ForestDecomposition, DualState),
}

pub fn decomposition_for(model: &Model, choice: DecompositionChoice) -> Result<ForestDecomposition> {
    match choice {
        DecompositionChoice::Greedy => Ok(ForestDecomposition::greedy(model)),
        DecompositionChoice::Grid => ForestDecomposition::square_grid(model),
    }
}

/// Runs the full schedule from uniform marginals.
pub fn lpqp_run(model: &Model, config: &LpqpConfig) -> Result<LpqpResult> {
    let config = config.resolve(model)?;
    let start = Instant::now();
    let rho0 = config.rho0.expect("resolved");
    let rho_max = config.rho_max.expect("resolved");

    let mut inner = match config.method {
        Method::Uniform => Inner::Uniform(MessageState::uniform(model)),
        Method::Tree => {
            let d = decomposition_for(model, config.decomposition)?;
            let state = DualState::new(model, &d);
            Inner::Tree(d, state)
        }
    };
    let cccp_opts = CccpOptions {
        eps_dc: config.eps_dc,
        max_dc_iters: config.max_dc_iters,
        clamp_floor: config.clamp_floor,
    };
    let mut bp_opts = BpOptions {
        tol: config.inner_tol,
        max_iters: config.max_inner_iters,
        damping: config.damping,
        parallel: config.parallel,
    };
    let mut dd_opts = DdOptions {
        tol: config.inner_tol,
        max_iters: config.max_inner_iters,
        parallel: config.parallel,
    };

    let mut mu = Marginals::uniform(model);
    let mut rho = rho0;
    let mut trace = RunTrace::default();
    let mut status = Status::IterCapped;
    for outer in 0..config.max_outer {
        let snapshot = mu.clone();
        let offset = start.elapsed().as_secs_f64();
        let tol = if rho < config.loose_rho_ratio * rho0 {
            config.loose_inner_tol.max(config.inner_tol)
        } else {
            config.inner_tol
        };
        bp_opts.tol = tol;
        dd_opts.tol = tol;
        let report = match &mut inner {
            Inner::Uniform(msgs) => cccp_uniform(model, rho, &mu, msgs, &cccp_opts, &bp_opts)?,
            Inner::Tree(d, state) => cccp_tree(model, rho, &mu, d, state, &cccp_opts, &dd_opts)?,
        };
        for (t, it) in report.iterations.iter().enumerate() {
            trace.rows.push(TraceRow {
                outer,
                dc_iter: t,
                rho,
                lp_obj: it.lp_objective,
                penalty: it.penalty,
                lpqp_obj: it.objective,
                decoded_energy: it.decoded_energy,
                inner_iters: it.inner_iterations,
                residual: it.inner_residual,
                seconds: offset + it.seconds,
                inner_converged: it.inner_converged,
                dc_converged: report.converged,
            });
        }
        mu = report.marginals;
        if outer >= 1 && mu.distance(&snapshot) <= config.eps_rho {
            status = Status::Converged;
            break;
        }
        if outer + 1 == config.max_outer {
            break;
        }
        rho *= config.rho_factor;
        if rho > rho_max {
            status = Status::RhoCapped;
            break;
        }
    }

    let rounded = round_solution(model, mu.nodes())?;
    let rounded_energy = energy(model, &rounded)?;
    Ok(LpqpResult {
        final_marginals: mu,
        rounded,
        rounded_energy,
        trace,
        status,
        config,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
