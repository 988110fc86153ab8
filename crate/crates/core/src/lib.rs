//! MAP inference for pairwise discrete graphical models.
//!
//! The LP relaxation over the local polytope is coupled to the QP relaxation
//! by a KL penalty between edge marginals and products of node marginals.
//! For a fixed penalty weight the objective is minimized by CCCP, whose convex
//! subproblems are entropy-smoothed LPs solved either by norm-product belief
//! propagation ([`Method::Uniform`]) or by dual decomposition into trees
//! ([`Method::Tree`]). The weight is then raised until the marginals become
//! consistent with a product distribution, and the result is rounded.
//!
//! ```
//! use lpqp::{lpqp_run, LpqpConfig, Model};
//!
//! let model = Model::new(
//!     vec![vec![0.0, 0.1], vec![0.0, 0.1]],
//!     vec![(0, 1, vec![-1.0, 0.0, 0.0, -1.0])],
//! )?;
//! let result = lpqp_run(&model, &LpqpConfig::default())?;
//! assert_eq!(result.rounded.labels(), &[0, 0]);
//! # Ok::<(), lpqp::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod forest;
pub mod harness;
pub mod model;
pub mod objective;
pub mod par;
pub mod rounding;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use forest::{ForestDecomposition, Tree};
pub use model::{consistency_gap, energy, lp_objective, qp_objective, Assignment, Edge, Marginals, Model};
pub use objective::{dc_parts, kl, lpqp_objective, modified_unaries, penalty, DcParts, PenaltyKind};
pub use rounding::{decode_argmax, round_solution};
pub use schedule::{default_rho0, lpqp_run, DecompositionChoice, LpqpConfig, LpqpResult, Method, RunTrace, Status, TraceRow};
