//! Bundled example graphs.

use crate::error::{Error, Result};
use crate::lm::LmGraph;

const FIG1B: &str = include_str!("../fixtures/fig1b.json");
const FIG1C: &str = include_str!("../fixtures/fig1c.json");
const FIG2A: &str = include_str!("../fixtures/fig2a.json");
const FIG2B: &str = include_str!("../fixtures/fig2b.json");
const FIG3A: &str = include_str!("../fixtures/fig3a.json");
const FIG3B: &str = include_str!("../fixtures/fig3b.json");

/// Names accepted by [`bundled`].
pub const NAMES: [&str; 6] = ["fig1b", "fig1c", "fig2a", "fig2b", "fig3a", "fig3b"];

fn load(text: &str) -> LmGraph {
    LmGraph::from_json_str(text).expect("bundled fixture is valid")
}

/// Single-context m-graph with a missing pre-exposure outcome, no shifts.
pub fn fig1b() -> LmGraph {
    load(FIG1B)
}

/// `fig1b` with `Y0` shifting both `A` and `Y1`.
pub fn fig1c() -> LmGraph {
    load(FIG1C)
}

pub fn fig2a() -> LmGraph {
    load(FIG2A)
}

pub fn fig2b() -> LmGraph {
    load(FIG2B)
}

/// Confounded indicator `Y <-> R_Z`; the FATE is not decided by the criterion.
pub fn fig3a() -> LmGraph {
    load(FIG3A)
}

/// NATE recoverable only through a context-specific witness.
pub fn fig3b() -> LmGraph {
    load(FIG3B)
}

pub fn raw_json(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1b" => FIG1B,
        "fig1c" => FIG1C,
        "fig2a" => FIG2A,
        "fig2b" => FIG2B,
        "fig3a" => FIG3A,
        "fig3b" => FIG3B,
        _ => return None,
    })
}

pub fn bundled(name: &str) -> Result<LmGraph> {
    raw_json(name)
        .map(load)
        .ok_or_else(|| Error::InvalidQuery(format!("unknown bundled graph {name:?}; expected one of {}", NAMES.join(", "))))
}
