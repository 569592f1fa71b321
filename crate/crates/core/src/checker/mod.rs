//! Decision procedures for the temporal block/idle predicates.
//!
//! `G` holds at a state when every state reachable from it under the
//! environment (the state itself included) is transient or carries the
//! requested label. `F G` holds when some reachable state satisfies `G`.
//! Both are computed with plain graph searches; [`oracle`] holds the
//! trace-enumeration counterparts used to cross-check them.

pub mod oracle;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::labeling::{LabelCache, LabelError, LabelMap};
use crate::xdi::{Environment, StateIx, Trace, WireKey, XdiError, XdiMachine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Blocking,
    Idling,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Blocking, Mode::Idling];

    fn accepts(self, labels: &LabelMap, s: StateIx) -> bool {
        match self {
            Mode::Blocking => labels.is_blocking(s),
            Mode::Idling => labels.is_idling(s),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Blocking => "blocking",
            Mode::Idling => "idling",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "blocking" | "blocked" => Ok(Mode::Blocking),
            "idling" | "idle" => Ok(Mode::Idling),
            _ => Err(format!("expected `blocking` or `idling`, found `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalOp {
    G,
    Fg,
}

impl fmt::Display for TemporalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalOp::G => "g",
            TemporalOp::Fg => "fg",
        })
    }
}

impl FromStr for TemporalOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "g" => Ok(TemporalOp::G),
            "fg" => Ok(TemporalOp::Fg),
            _ => Err(format!("expected `g` or `fg`, found `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Machine(#[from] XdiError),
    #[error("machine has {states} states; the trace oracle is limited to {limit}")]
    OracleTooLarge { states: usize, limit: usize },
}

/// One temporal question about a machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalQuery {
    pub handshake: String,
    pub mode: Mode,
    pub env: Environment,
    pub start: StateIx,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub holds: bool,
    /// For `G`: the explored (reachable) states. For `F G`: the states
    /// explored while searching for a witness.
    pub visited: Vec<String>,
    /// A shortest trace from the start to an offending state when `G` fails.
    pub counterexample: Option<Trace>,
    /// A trace from the start to a state where `G` holds, when `F G` holds.
    pub witness: Option<Trace>,
}

/// Power set of the machine's input wires: by subset size, then
/// lexicographically over the sorted wire list.
pub fn reasonable_envs(m: &XdiMachine) -> Vec<Environment> {
    let wires: Vec<WireKey> = m.input_wires().into_iter().collect();
    let n = wires.len();
    let mut out = Vec::with_capacity(1 << n);
    for k in 0..=n {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.iter().map(|&i| wires[i].clone()).collect());
            // next k-combination in lexicographic order
            let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
                break;
            };
            idx[pos] += 1;
            for j in pos + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

fn path_from(parents: &[Option<StateIx>], start: StateIx, end: StateIx) -> Vec<StateIx> {
    let mut path = vec![end];
    let mut cur = end;
    while cur != start {
        match parents[cur] {
            Some(p) => {
                path.push(p);
                cur = p;
            }
            None => break,
        }
    }
    path.reverse();
    path
}

/// Checker bound to one machine, with its label maps precomputed.
#[derive(Debug, Clone)]
pub struct Checker<'m> {
    machine: &'m XdiMachine,
    labels: LabelCache,
}

impl<'m> Checker<'m> {
    pub fn new(machine: &'m XdiMachine) -> Self {
        Checker {
            machine,
            labels: LabelCache::new(machine),
        }
    }

    pub fn machine(&self) -> &'m XdiMachine {
        self.machine
    }

    pub fn labels(&self, h: &str) -> Result<&LabelMap, LabelError> {
        self.labels.get(h)
    }

    pub fn query(
        &self,
        handshake: &str,
        mode: Mode,
        env: &Environment,
        start: Option<&str>,
    ) -> Result<TemporalQuery, CheckError> {
        self.labels.get(handshake)?;
        env.check_against(self.machine)?;
        let start = match start {
            Some(s) => self.machine.state_ix(s)?,
            None => self.machine.initial()?,
        };
        Ok(TemporalQuery {
            handshake: handshake.to_string(),
            mode,
            env: env.clone(),
            start,
        })
    }

    fn acceptable(&self, q: &TemporalQuery) -> Result<Vec<bool>, CheckError> {
        let labels = self.labels.get(&q.handshake)?;
        Ok((0..self.machine.len())
            .map(|s| self.machine.is_transient(s) || q.mode.accepts(labels, s))
            .collect())
    }

    /// Breadth-first exploration from `q.start` that stops at the first state
    /// that is neither transient nor labelled `q.mode`.
    pub fn g_check(&self, q: &TemporalQuery) -> Result<CheckResult, CheckError> {
        let ok = self.acceptable(q)?;
        let m = self.machine;
        let mut parents = vec![None; m.len()];
        let mut seen = vec![false; m.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([q.start]);
        seen[q.start] = true;
        while let Some(s) = queue.pop_front() {
            order.push(s);
            if !ok[s] {
                let path = path_from(&parents, q.start, s);
                return Ok(CheckResult {
                    holds: false,
                    visited: order.iter().map(|&i| m.state(i).id.clone()).collect(),
                    counterexample: Some(Trace::from_ixs(m, &path)),
                    witness: None,
                });
            }
            for t in m.successors(s, &q.env) {
                if !seen[t] {
                    seen[t] = true;
                    parents[t] = Some(s);
                    queue.push_back(t);
                }
            }
        }
        Ok(CheckResult {
            holds: true,
            visited: order.iter().map(|&i| m.state(i).id.clone()).collect(),
            counterexample: None,
            witness: None,
        })
    }

    /// States at which `G` holds: those from which no unacceptable state is
    /// reachable. One backward closure over the step relation.
    pub fn g_region(&self, q: &TemporalQuery) -> Result<Vec<bool>, CheckError> {
        let ok = self.acceptable(q)?;
        let m = self.machine;
        let mut preds: Vec<Vec<StateIx>> = vec![Vec::new(); m.len()];
        for s in 0..m.len() {
            for t in m.successors(s, &q.env) {
                preds[t].push(s);
            }
        }
        let mut bad: Vec<bool> = ok.iter().map(|&o| !o).collect();
        let mut stack: Vec<StateIx> = (0..m.len()).filter(|&s| bad[s]).collect();
        while let Some(s) = stack.pop() {
            for &p in &preds[s] {
                if !bad[p] {
                    bad[p] = true;
                    stack.push(p);
                }
            }
        }
        Ok(bad.into_iter().map(|b| !b).collect())
    }

    /// Reach-then-test: the first reachable state (breadth-first) inside the
    /// `G` region is the witness.
    pub fn fg_check(&self, q: &TemporalQuery) -> Result<CheckResult, CheckError> {
        let region = self.g_region(q)?;
        let m = self.machine;
        let mut parents = vec![None; m.len()];
        let mut seen = vec![false; m.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([q.start]);
        seen[q.start] = true;
        while let Some(s) = queue.pop_front() {
            order.push(s);
            if region[s] {
                let path = path_from(&parents, q.start, s);
                return Ok(CheckResult {
                    holds: true,
                    visited: order.iter().map(|&i| m.state(i).id.clone()).collect(),
                    counterexample: None,
                    witness: Some(Trace::from_ixs(m, &path)),
                });
            }
            for t in m.successors(s, &q.env) {
                if !seen[t] {
                    seen[t] = true;
                    parents[t] = Some(s);
                    queue.push_back(t);
                }
            }
        }
        Ok(CheckResult {
            holds: false,
            visited: order.iter().map(|&i| m.state(i).id.clone()).collect(),
            counterexample: None,
            witness: None,
        })
    }

    pub fn check(&self, op: TemporalOp, q: &TemporalQuery) -> Result<CheckResult, CheckError> {
        match op {
            TemporalOp::G => self.g_check(q),
            TemporalOp::Fg => self.fg_check(q),
        }
    }

    /// Permanently blocked: `F G blocking` from the initial state.
    pub fn blocked(&self, h: &str, env: &Environment) -> Result<bool, CheckError> {
        let q = self.query(h, Mode::Blocking, env, None)?;
        Ok(self.fg_check(&q)?.holds)
    }

    /// Permanently idle: `F G idling` from the initial state.
    pub fn idle(&self, h: &str, env: &Environment) -> Result<bool, CheckError> {
        let q = self.query(h, Mode::Idling, env, None)?;
        Ok(self.fg_check(&q)?.holds)
    }
}
