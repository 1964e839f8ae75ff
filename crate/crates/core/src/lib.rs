//! Causal effect recovery under missingness-induced distribution shifts.
//!
//! The crate covers the graph layer ([`graph`], [`separation`], [`lm`]), the
//! identification layer ([`recovery`]), simulation ([`scm`]) and estimation
//! ([`estimation`], [`study`]).

pub mod dataset;
pub mod error;
pub mod estimation;
pub mod estimand;
pub mod fixtures;
pub mod graph;
pub mod lm;
pub mod par;
pub mod recovery;
pub mod scm;
pub mod separation;
pub mod study;

pub use error::{Error, Result};
pub use graph::{node_set, Admg, NodeId, NodeKind, NodeSet};
pub use lm::{build_lm_graph, ContextPattern, LmGraph, ShiftSpec};
