//! Instance I/O, synthetic instances, oracles and scoring.

pub mod native;
pub mod oracle;
pub mod potts;
pub mod score;
pub mod uai;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::schedule::{LpqpConfig, LpqpResult, RunTrace, Status};

pub use native::{emit_native, parse_native};
pub use oracle::{brute_force_gibbs, brute_force_map, MAX_STATES};
pub use potts::generate_potts;
pub use score::{score, ScoreReport};
pub use uai::{emit_uai, parse_uai};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Uai,
    Native,
}

impl Format {
    /// `.json` is native, anything else UAI.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Native,
            _ => Format::Uai,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load_model(path: &Path, format: Option<Format>) -> Result<Model> {
    let text = read_text(path)?;
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Uai => parse_uai(&text),
        Format::Native => parse_native(&text),
    }
}

pub fn save_model(path: &Path, model: &Model, format: Option<Format>) -> Result<()> {
    let text = match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Uai => emit_uai(model),
        Format::Native => emit_native(model),
    };
    write_text(path, &text)
}

pub const TRACE_HEADER: &str = "outer,dc_iter,rho,lp_obj,penalty,lpqp_obj,decoded_energy,inner_iters,residual,seconds";

/// CSV with one row per CCCP iteration; reals in 17 significant digits.
/// `seconds` is written as 0 unless `timing` is set.
pub fn trace_csv(trace: &RunTrace, timing: bool) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let seconds = if timing { r.seconds } else { 0.0 };
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            r.outer, r.dc_iter, r.rho, r.lp_obj, r.penalty, r.lpqp_obj, r.decoded_energy, r.inner_iters, r.residual, seconds
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub assignment: Vec<usize>,
    pub energy: f64,
    pub status: Status,
    pub config: LpqpConfig,
    /// Present only when timing was requested, so that runs compare bytewise.
    pub wall_time: Option<f64>,
}

impl ResultRecord {
    pub fn new(result: &LpqpResult, timing: bool) -> Self {
        ResultRecord {
            assignment: result.rounded.labels().to_vec(),
            energy: result.rounded_energy,
            status: result.status,
            config: result.config.clone(),
            wall_time: timing.then_some(result.wall_time),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}
