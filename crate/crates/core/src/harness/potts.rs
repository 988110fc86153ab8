//! Random Potts-style grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Model;

/// ChaCha stream used for unary draws.
pub const UNARY_STREAM: u64 = 0;
/// ChaCha stream used for edge coefficients.
pub const EDGE_STREAM: u64 = 1;

fn open_interval(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    loop {
        let v = rng.random_range(-half_width..half_width);
        if v != -half_width {
            return v;
        }
    }
}

/// `side x side` 4-connected grid with `states` labels per node.
///
/// Node `(r, c)` has index `r * side + c`; edges are listed per node as its
/// right neighbor then its lower neighbor. Unaries are i.i.d. uniform on
/// `(-sigma, sigma)`. Each edge draws `alpha ~ U(-1, 1)` and charges it when
/// both labels agree, zero otherwise. Both draws come from ChaCha8 seeded
/// with `seed`, on separate streams.
pub fn generate_potts(side: usize, states: usize, sigma: f64, seed: u64) -> Result<Model> {
    if side < 2 {
        return Err(Error::InvalidConfig(format!("grid side must be at least 2, got {side}")));
    }
    if states < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 states, got {states}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let mut unary_rng = ChaCha8Rng::seed_from_u64(seed);
    unary_rng.set_stream(UNARY_STREAM);
    let mut edge_rng = ChaCha8Rng::seed_from_u64(seed);
    edge_rng.set_stream(EDGE_STREAM);

    let n = side * side;
    let unaries = (0..n)
        .map(|_| (0..states).map(|_| open_interval(&mut unary_rng, sigma)).collect())
        .collect();
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    let mut potts = |i: usize, j: usize| {
        let alpha = open_interval(&mut edge_rng, 1.0);
        let mut table = vec![0.0; states * states];
        for k in 0..states {
            table[k * states + k] = alpha;
        }
        edges.push((i, j, table));
    };
    for r in 0..side {
        for c in 0..side {
            let i = r * side + c;
            if c + 1 < side {
                potts(i, i + 1);
            }
            if r + 1 < side {
                potts(i, i + side);
            }
        }
    }
    Model::new(unaries, edges)
}
