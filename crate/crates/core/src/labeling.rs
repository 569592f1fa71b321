//! Per-handshake blocking/idling labels.
//!
//! Labels are parities: starting idle in the initial state, every transition
//! whose wire belongs to the handshake (request or acknowledge) flips the
//! label. A machine is unambiguous for a handshake when every non-transient
//! state receives the same parity along all paths from the initial state.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::xdi::{StateIx, XdiError, XdiMachine};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("handshake `{0}` labels no transition of the machine")]
    UnknownHandshake(String),
    #[error("machine is ambiguous for handshake `{handshake}`: {report}")]
    AmbiguousMachine {
        handshake: String,
        report: AmbiguityReport,
    },
    #[error(transparent)]
    Machine(#[from] XdiError),
}

/// Blocking (`true`) or idling (`false`) per declared state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub handshake: String,
    labels: Vec<bool>,
}

impl LabelMap {
    pub fn is_blocking(&self, s: StateIx) -> bool {
        self.labels[s]
    }

    pub fn is_idling(&self, s: StateIx) -> bool {
        !self.labels[s]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.labels
    }

    /// `(blocking, idling)` state ids, each sorted.
    pub fn partition(&self, m: &XdiMachine) -> (Vec<String>, Vec<String>) {
        let mut blocking = Vec::new();
        let mut idling = Vec::new();
        for (ix, &b) in self.labels.iter().enumerate() {
            let id = m.state(ix).id.clone();
            if b {
                blocking.push(id);
            } else {
                idling.push(id);
            }
        }
        blocking.sort_by(|a, b| natural_cmp(a, b));
        idling.sort_by(|a, b| natural_cmp(a, b));
        (blocking, idling)
    }
}

/// Orders `s2` before `s10`.
pub fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, tail) = s.split_at(s.len() - digits);
        (head, tail.parse().ok())
    }
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(hb).then(na.cmp(&nb)).then(a.cmp(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParityConflict {
    pub state: String,
    pub transient: bool,
    /// A path from the initial state reaching `state` with even parity.
    pub idling_path: Vec<String>,
    /// A path reaching `state` with odd parity.
    pub blocking_path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AmbiguityReport {
    pub handshake: String,
    pub ambiguous: bool,
    /// Conflicts on non-transient states; non-empty iff `ambiguous`.
    pub witnesses: Vec<ParityConflict>,
    /// Conflicts on transient states, which are never consulted by the checker.
    pub transient_conflicts: Vec<ParityConflict>,
}

impl fmt::Display for AmbiguityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.ambiguous {
            return f.write_str("unambiguous");
        }
        for (i, w) in self.witnesses.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(
                f,
                "state `{}` reached idling via [{}] and blocking via [{}]",
                w.state,
                w.idling_path.join(" "),
                w.blocking_path.join(" ")
            )?;
        }
        Ok(())
    }
}

/// Breadth-first propagation of `(state, parity)` pairs from the initial
/// state; each pair is visited at most once.
pub fn check_unambiguous(m: &XdiMachine, h: &str) -> Result<AmbiguityReport, LabelError> {
    let init = m.initial()?;
    let n = m.len();
    // parent[parity][state]: Some(None) for the root, Some(Some(node)) once
    // visited from `node`.
    type Visit = Option<Option<(StateIx, bool)>>;
    let mut parent: [Vec<Visit>; 2] = [vec![None; n], vec![None; n]];
    let mut queue = VecDeque::new();
    parent[0][init] = Some(None);
    queue.push_back((init, false));
    while let Some((s, flag)) = queue.pop_front() {
        for (wire, t) in m.edges(s) {
            let next = flag ^ (wire.handshake == h);
            let slot = &mut parent[next as usize][t];
            if slot.is_none() {
                *slot = Some(Some((s, flag)));
                queue.push_back((t, next));
            }
        }
    }

    let path_to = |s: StateIx, flag: bool| -> Vec<String> {
        let mut path = vec![m.state(s).id.clone()];
        let mut cur = (s, flag);
        while let Some(Some(prev)) = parent[cur.1 as usize][cur.0] {
            path.push(m.state(prev.0).id.clone());
            cur = prev;
        }
        path.reverse();
        path
    };

    let mut witnesses = Vec::new();
    let mut transient_conflicts = Vec::new();
    for s in 0..n {
        if parent[0][s].is_some() && parent[1][s].is_some() {
            let conflict = ParityConflict {
                state: m.state(s).id.clone(),
                transient: m.is_transient(s),
                idling_path: path_to(s, false),
                blocking_path: path_to(s, true),
            };
            if conflict.transient {
                transient_conflicts.push(conflict);
            } else {
                witnesses.push(conflict);
            }
        }
    }
    Ok(AmbiguityReport {
        handshake: h.to_string(),
        ambiguous: !witnesses.is_empty(),
        witnesses,
        transient_conflicts,
    })
}

/// Depth-first labeling in declaration order; the first parity to reach a
/// state is recorded.
pub fn compute_block_idle(m: &XdiMachine, h: &str) -> Result<LabelMap, LabelError> {
    if !m.has_handshake(h) {
        return Err(LabelError::UnknownHandshake(h.to_string()));
    }
    let report = check_unambiguous(m, h)?;
    if report.ambiguous {
        return Err(LabelError::AmbiguousMachine {
            handshake: h.to_string(),
            report,
        });
    }
    let init = m.initial()?;
    let mut labels: Vec<Option<bool>> = vec![None; m.len()];
    let mut stack = vec![(init, false)];
    while let Some((s, flag)) = stack.pop() {
        if labels[s].is_some() {
            continue;
        }
        labels[s] = Some(flag);
        let edges: Vec<_> = m.edges(s).collect();
        for (wire, t) in edges.into_iter().rev() {
            if labels[t].is_none() {
                stack.push((t, flag ^ (wire.handshake == h)));
            }
        }
    }
    Ok(LabelMap {
        handshake: h.to_string(),
        // unreachable states are rejected by validation; default them to idling
        labels: labels.into_iter().map(|l| l.unwrap_or(false)).collect(),
    })
}

pub fn blocking(m: &XdiMachine, s: &str, h: &str) -> Result<bool, LabelError> {
    let ix = m.state_ix(s)?;
    Ok(compute_block_idle(m, h)?.is_blocking(ix))
}

pub fn idling(m: &XdiMachine, s: &str, h: &str) -> Result<bool, LabelError> {
    blocking(m, s, h).map(|b| !b)
}

/// Label maps for every handshake of a machine, computed once up front.
#[derive(Debug, Clone)]
pub struct LabelCache {
    maps: BTreeMap<String, Result<LabelMap, LabelError>>,
}

impl LabelCache {
    pub fn new(m: &XdiMachine) -> Self {
        let maps = m
            .handshakes()
            .into_iter()
            .map(|h| (h.to_string(), compute_block_idle(m, h)))
            .collect();
        LabelCache { maps }
    }

    pub fn get(&self, h: &str) -> Result<&LabelMap, LabelError> {
        match self.maps.get(h) {
            Some(Ok(map)) => Ok(map),
            Some(Err(e)) => Err(e.clone()),
            None => Err(LabelError::UnknownHandshake(h.to_string())),
        }
    }
}
