//! Entropies, KL penalties and the combined objective with its
//! difference-of-convex split.
//!
//! All logarithms are natural, so entropies and penalties are in nats.

use crate::error::{Error, Result};
use crate::forest::{ForestDecomposition, Tree};
use crate::model::{lp_objective, lp_objective_unchecked, Marginals, Model, SIMPLEX_TOL};

/// Lower clamp applied to marginals before taking logarithms.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// How the KL penalty weights the edges.
#[derive(Debug, Clone, Copy)]
pub enum PenaltyKind<'a> {
    /// Every edge contributes with weight one.
    Uniform,
    /// Edges contribute through the trees containing them, each tree scaled
    /// by its weight.
    Tree(&'a ForestDecomposition),
}

impl PenaltyKind<'_> {
    fn check(&self, model: &Model) -> Result<()> {
        match self {
            PenaltyKind::Tree(d) if !d.fits(model) => Err(Error::InvalidDecomposition(
                "decomposition was built for a different model".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[inline]
pub(crate) fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Entropy without validation; zero entries contribute nothing.
#[inline]
pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlogx(x)).sum::<f64>()
}

/// Shannon entropy `-sum_k p_k ln p_k` of a distribution.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(x) = p.iter().find(|x| **x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!("entry {x} is not a probability")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidDistribution(format!("entries sum to {s}")));
    }
    Ok(entropy_unchecked(p))
}

/// `sum_k p_k ln(p_k / q_k)`. Returns `+inf` when some `q_k = 0 < p_k`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "kl of distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk > 0.0 {
            if qk <= 0.0 {
                return f64::INFINITY;
            }
            total += pk * (pk / qk).ln();
        }
    }
    total
}

/// KL between an edge table and the outer product of its node marginals.
fn edge_kl(model: &Model, mu: &Marginals, e: usize) -> f64 {
    let edge = model.edge(e);
    let (a, b) = (mu.node(edge.i()), mu.node(edge.j()));
    let table = mu.edge(e);
    let cols = edge.cols();
    let mut total = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        for (l, &bl) in b.iter().enumerate() {
            let p = table[k * cols + l];
            if p > 0.0 {
                let q = ak * bl;
                if q <= 0.0 {
                    return f64::INFINITY;
                }
                total += p * (p / q).ln();
            }
        }
    }
    total
}

fn check_mu(model: &Model, mu: &Marginals) -> Result<()> {
    // shape check only
    lp_objective(model, mu).map(|_| ())
}

/// KL penalty between edge marginals and products of node marginals.
pub fn penalty(model: &Model, mu: &Marginals, kind: PenaltyKind<'_>) -> Result<f64> {
    check_mu(model, mu)?;
    kind.check(model)?;
    Ok(penalty_unchecked(model, mu, kind))
}

pub(crate) fn penalty_unchecked(model: &Model, mu: &Marginals, kind: PenaltyKind<'_>) -> f64 {
    match kind {
        PenaltyKind::Uniform => (0..model.num_edges()).map(|e| edge_kl(model, mu, e)).sum(),
        PenaltyKind::Tree(d) => {
            let per_edge: Vec<f64> = (0..model.num_edges()).map(|e| edge_kl(model, mu, e)).collect();
            d.trees()
                .iter()
                .zip(d.weights())
                .map(|(t, &w)| w * t.edges().iter().map(|&e| per_edge[e]).sum::<f64>())
                .sum()
        }
    }
}

/// LP objective plus `rho` times the penalty.
pub fn lpqp_objective(model: &Model, mu: &Marginals, rho: f64, kind: PenaltyKind<'_>) -> Result<f64> {
    let lp = lp_objective(model, mu)?;
    if rho == 0.0 {
        return Ok(lp);
    }
    Ok(lp + rho * penalty(model, mu, kind)?)
}

pub(crate) fn tree_entropy_unchecked(mu: &Marginals, tree: &Tree) -> f64 {
    let edges: f64 = tree.edges().iter().map(|&e| entropy_unchecked(mu.edge(e))).sum();
    let nodes: f64 = tree
        .nodes()
        .iter()
        .zip(tree.degrees())
        .map(|(&i, &d)| (d as f64 - 1.0) * entropy_unchecked(mu.node(i)))
        .sum();
    edges - nodes
}

/// `sum_{E_a} H(mu_ij) - sum_{V_a} (d_i^a - 1) H(mu_i)`.
pub fn tree_entropy(model: &Model, mu: &Marginals, tree: &Tree) -> Result<f64> {
    check_mu(model, mu)?;
    if let Some(&i) = tree.nodes().iter().find(|&&i| i >= model.num_nodes()) {
        return Err(Error::DimensionMismatch(format!("tree node {i} absent from marginals")));
    }
    if let Some(&e) = tree.edges().iter().find(|&&e| e >= model.num_edges()) {
        return Err(Error::DimensionMismatch(format!("tree edge {e} absent from marginals")));
    }
    Ok(tree_entropy_unchecked(mu, tree))
}

/// Unary potentials of the convexified subproblem: the concave part is
/// linearized at `mu_prev`, whose node marginals are clamped below at
/// `floor` before the logarithm. The constant part of the gradient is
/// dropped.
pub fn modified_unaries(
    model: &Model,
    mu_prev: &Marginals,
    rho: f64,
    kind: PenaltyKind<'_>,
    floor: f64,
) -> Vec<Vec<f64>> {
    (0..model.num_nodes())
        .map(|i| {
            let coeff = rho
                * match kind {
                    PenaltyKind::Uniform => model.degree(i) as f64,
                    PenaltyKind::Tree(d) => d.node_weight(i),
                };
            model
                .unary(i)
                .iter()
                .zip(mu_prev.node(i))
                .map(|(&t, &m)| if coeff == 0.0 { t } else { t - coeff * m.max(floor).ln() })
                .collect()
        })
        .collect()
}

/// Values of the convex parts `u` and `v` with `u - v` equal to the combined
/// objective on consistent marginals. `residual` is `(u - v) - lpqp`, which
/// is nonzero only when `mu` violates marginalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcParts {
    pub u: f64,
    pub v: f64,
    pub residual: f64,
}

pub fn dc_parts(model: &Model, mu: &Marginals, rho: f64, kind: PenaltyKind<'_>) -> Result<DcParts> {
    check_mu(model, mu)?;
    kind.check(model)?;
    let lp = lp_objective_unchecked(model, mu);
    let (u, v) = match kind {
        PenaltyKind::Uniform => {
            let edges: f64 = mu.edges().iter().map(|t| entropy_unchecked(t)).sum();
            let nodes: f64 = (0..model.num_nodes())
                .map(|i| model.degree(i) as f64 * entropy_unchecked(mu.node(i)))
                .sum();
            (lp - rho * edges, -rho * nodes)
        }
        PenaltyKind::Tree(d) => {
            let mut tree_h = 0.0;
            let mut node_h = 0.0;
            for (t, &w) in d.trees().iter().zip(d.weights()) {
                tree_h += w * tree_entropy_unchecked(mu, t);
                node_h += w * t.nodes().iter().map(|&i| entropy_unchecked(mu.node(i))).sum::<f64>();
            }
            (lp - rho * tree_h, -rho * node_h)
        }
    };
    let lpqp = lp + rho * penalty_unchecked(model, mu, kind);
    Ok(DcParts {
        u,
        v,
        residual: (u - v) - lpqp,
    })
}

fn subproblem_linear(model: &Model, theta_tilde: &[Vec<f64>], mu: &Marginals) -> f64 {
    let mut total = 0.0;
    for (i, t) in theta_tilde.iter().enumerate() {
        total += t.iter().zip(mu.node(i)).map(|(a, b)| a * b).sum::<f64>();
    }
    for (e, edge) in model.edges().iter().enumerate() {
        total += edge.table().iter().zip(mu.edge(e)).map(|(a, b)| a * b).sum::<f64>();
    }
    total
}

/// Objective of the uniform-weighting convex subproblem:
/// `theta_tilde . mu_nodes + theta . mu_edges - rho sum_ij H(mu_ij)`.
pub fn uniform_subproblem_objective(model: &Model, theta_tilde: &[Vec<f64>], mu: &Marginals, rho: f64) -> f64 {
    let h: f64 = mu.edges().iter().map(|t| entropy_unchecked(t)).sum();
    subproblem_linear(model, theta_tilde, mu) - rho * h
}

/// Objective of the tree-weighting convex subproblem:
/// `theta_tilde . mu_nodes + theta . mu_edges - rho sum_a eta_a H_tree^a(mu)`.
pub fn tree_subproblem_objective(
    model: &Model,
    theta_tilde: &[Vec<f64>],
    mu: &Marginals,
    rho: f64,
    decomposition: &ForestDecomposition,
) -> f64 {
    let h: f64 = decomposition
        .trees()
        .iter()
        .zip(decomposition.weights())
        .map(|(t, &w)| w * tree_entropy_unchecked(mu, t))
        .sum();
    subproblem_linear(model, theta_tilde, mu) - rho * h
}
