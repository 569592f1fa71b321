//! Explicit-state checking of blocking/idling conditions for
//! delay-insensitive handshake primitives, and deadlock analysis of circuits
//! composed from them.

pub mod checker;
pub mod circuit;
pub mod cli;
pub mod equations;
pub mod formula;
pub mod labeling;
pub mod library;
pub mod report;
pub mod sexpr;
pub mod xdi;

pub use checker::{reasonable_envs, CheckResult, Checker, Mode, TemporalOp, TemporalQuery};
pub use equations::{parse_condition, verify_condition, Atom, Condition, Verdict};
pub use labeling::{check_unambiguous, compute_block_idle, LabelMap};
pub use xdi::{parse_machine, Environment, Phase, Trace, Wire, WireKey, XdiMachine};
