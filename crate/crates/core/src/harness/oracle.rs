//! Exhaustive enumeration oracles for small models.

use crate::error::{Error, Result};
use crate::model::{energy_unchecked, Assignment, Marginals, Model};

/// Largest joint state space the oracles will enumerate.
pub const MAX_STATES: u128 = 1 << 24;

fn guard(model: &Model) -> Result<()> {
    let states = model.state_space_size();
    if states > MAX_STATES {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: MAX_STATES,
        });
    }
    Ok(())
}

/// Calls `f` on every assignment in lexicographic order (last node fastest).
fn for_each_assignment(model: &Model, mut f: impl FnMut(&[usize])) {
    let n = model.num_nodes();
    let mut x = vec![0usize; n];
    loop {
        f(&x);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            x[i] += 1;
            if x[i] < model.cardinality(i) {
                break;
            }
            x[i] = 0;
        }
    }
}

/// Minimum-energy assignment by enumeration; the lexicographically smallest
/// one on ties.
pub fn brute_force_map(model: &Model) -> Result<(Assignment, f64)> {
    guard(model)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_assignment(model, |x| {
        let e = energy_unchecked(model, x);
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((x.to_vec(), e));
        }
    });
    let (x, e) = best.expect("at least one assignment");
    Ok((Assignment(x), e))
}

/// Exact marginals of `p(x) ~ exp(-energy(x) / temperature)`.
pub fn brute_force_gibbs(model: &Model, temperature: f64) -> Result<Marginals> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    guard(model)?;
    let mut lowest = f64::INFINITY;
    for_each_assignment(model, |x| lowest = lowest.min(energy_unchecked(model, x)));

    let mut nodes: Vec<Vec<f64>> = (0..model.num_nodes()).map(|i| vec![0.0; model.cardinality(i)]).collect();
    let mut edges: Vec<Vec<f64>> = model.edges().iter().map(|e| vec![0.0; e.table().len()]).collect();
    let mut z = 0.0;
    for_each_assignment(model, |x| {
        let w = ((lowest - energy_unchecked(model, x)) / temperature).exp();
        z += w;
        for (i, &xi) in x.iter().enumerate() {
            nodes[i][xi] += w;
        }
        for (e, edge) in model.edges().iter().enumerate() {
            edges[e][x[edge.i()] * edge.cols() + x[edge.j()]] += w;
        }
    });
    for v in nodes.iter_mut().chain(edges.iter_mut()) {
        v.iter_mut().for_each(|p| *p /= z);
    }
    Ok(Marginals::from_parts(nodes, edges))
}
