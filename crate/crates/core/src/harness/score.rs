//! Relative scoring of competing solutions on one instance.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub energies: Vec<f64>,
    pub scores: Vec<f64>,
}

/// `s_i = (max e - e_i) / (max e - best)`, where `best` is the smallest
/// energy or, when given, the known optimum. The worst solution scores 0 and
/// the best 1; when the denominator vanishes every score is 1. Scores are
/// clamped to `[0, 1]`.
pub fn score(energies: &[f64], optimum: Option<f64>) -> Result<ScoreReport> {
    if energies.is_empty() {
        return Err(Error::InvalidConfig("no energies to score".into()));
    }
    if let Some(e) = energies.iter().chain(optimum.iter()).find(|e| !e.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite energy {e}")));
    }
    let worst = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = optimum.unwrap_or_else(|| energies.iter().copied().fold(f64::INFINITY, f64::min));
    let span = worst - best;
    let scores = energies
        .iter()
        .map(|&e| {
            if span <= 0.0 {
                1.0
            } else {
                ((worst - e) / span).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(ScoreReport {
        energies: energies.to_vec(),
        scores,
    })
}
