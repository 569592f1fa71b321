//! Bounded trace enumeration that evaluates the quantified definitions
//! directly: `G` quantifies over every trace from the start state, `F G`
//! searches for a trace whose last state satisfies `G`.
//!
//! Exponential in the bound; intended for cross-checking [`super::Checker`]
//! on small machines. A finite automaton's infinite behaviour is a prefix
//! followed by a cycle, so traces of `|states| + 1` states are enough.

use serde::Serialize;

use super::{reasonable_envs, CheckError, Checker, Mode, TemporalQuery};
use crate::xdi::{Environment, StateIx, XdiMachine};

/// Largest machine the oracle accepts by default.
pub const DEFAULT_MAX_STATES: usize = 20;

pub fn default_bound(m: &XdiMachine) -> usize {
    m.len() + 1
}

/// Trace enumeration for one (machine, environment, handshake, mode).
pub struct TraceOracle {
    succ: Vec<Vec<StateIx>>,
    ok: Vec<bool>,
    bound: usize,
}

impl TraceOracle {
    pub fn new(checker: &Checker<'_>, q: &TemporalQuery, bound: usize) -> Result<Self, CheckError> {
        let m = checker.machine();
        let labels = checker.labels(&q.handshake)?;
        let ok = (0..m.len())
            .map(|s| {
                m.is_transient(s)
                    || match q.mode {
                        Mode::Blocking => labels.is_blocking(s),
                        Mode::Idling => labels.is_idling(s),
                    }
            })
            .collect();
        let succ = (0..m.len()).map(|s| m.successors(s, &q.env)).collect();
        Ok(TraceOracle {
            succ,
            ok,
            bound: bound.max(1),
        })
    }

    /// Calls `visit` on every trace of at most `bound` states starting at
    /// `start`; stops early when `visit` returns false.
    fn for_each_trace(&self, start: StateIx, visit: &mut dyn FnMut(&[StateIx]) -> bool) -> bool {
        let mut trace = vec![start];
        let mut cursor = vec![0usize];
        if !visit(&trace) {
            return false;
        }
        while let Some(&last) = trace.last() {
            let depth = trace.len() - 1;
            let next = cursor[depth];
            if trace.len() < self.bound && next < self.succ[last].len() {
                cursor[depth] += 1;
                trace.push(self.succ[last][next]);
                cursor.push(0);
                if !visit(&trace) {
                    return false;
                }
            } else {
                trace.pop();
                cursor.pop();
            }
        }
        true
    }

    /// Every trace from `start` ends in a transient or matching state.
    pub fn g(&self, start: StateIx) -> bool {
        self.for_each_trace(start, &mut |t| self.ok[*t.last().unwrap()])
    }

    /// Some trace from `start` ends in a state where [`Self::g`] holds.
    pub fn fg(&self, start: StateIx) -> bool {
        let mut memo: Vec<Option<bool>> = vec![None; self.succ.len()];
        let mut found = false;
        self.for_each_trace(start, &mut |t| {
            let last = *t.last().unwrap();
            let g = *memo[last].get_or_insert_with(|| self.g(last));
            found = g;
            !g
        });
        found
    }
}

fn check_size(m: &XdiMachine, limit: usize) -> Result<(), CheckError> {
    if m.len() > limit {
        Err(CheckError::OracleTooLarge {
            states: m.len(),
            limit,
        })
    } else {
        Ok(())
    }
}

pub fn oracle_g_check(
    checker: &Checker<'_>,
    q: &TemporalQuery,
    bound: usize,
) -> Result<bool, CheckError> {
    check_size(checker.machine(), DEFAULT_MAX_STATES)?;
    Ok(TraceOracle::new(checker, q, bound)?.g(q.start))
}

pub fn oracle_fg_check(
    checker: &Checker<'_>,
    q: &TemporalQuery,
    bound: usize,
) -> Result<bool, CheckError> {
    check_size(checker.machine(), DEFAULT_MAX_STATES)?;
    Ok(TraceOracle::new(checker, q, bound)?.fg(q.start))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Disagreement {
    pub handshake: String,
    pub mode: Mode,
    pub op: super::TemporalOp,
    pub env: Environment,
    pub start: String,
    pub fast: bool,
    pub oracle: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CrossCheckSummary {
    pub machine: String,
    pub queries: usize,
    pub agreeing: usize,
    pub disagreements: Vec<Disagreement>,
}

impl CrossCheckSummary {
    pub fn all_agree(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Compares `g_check`/`fg_check` against the oracle for every state,
/// handshake, mode and reasonable environment.
pub fn cross_check(m: &XdiMachine, bound: Option<usize>) -> Result<CrossCheckSummary, CheckError> {
    use rayon::prelude::*;

    let bound = bound.unwrap_or_else(|| default_bound(m));
    check_size(m, DEFAULT_MAX_STATES)?;
    let checker = Checker::new(m);
    let handshakes: Vec<String> = m.handshakes().into_iter().map(String::from).collect();
    let envs = reasonable_envs(m);

    let per_env: Vec<Result<(usize, Vec<Disagreement>), CheckError>> = envs
        .par_iter()
        .map(|env| {
            let mut queries = 0;
            let mut bad = Vec::new();
            for h in &handshakes {
                for mode in Mode::ALL {
                    let q0 = checker.query(h, mode, env, None)?;
                    let oracle = TraceOracle::new(&checker, &q0, bound)?;
                    let region = checker.g_region(&q0)?;
                    for start in 0..m.len() {
                        let q = TemporalQuery {
                            start,
                            ..q0.clone()
                        };
                        let g = checker.g_check(&q)?.holds;
                        let fg = checker.fg_check(&q)?.holds;
                        debug_assert_eq!(g, region[start]);
                        for (op, fast, slow) in [
                            (super::TemporalOp::G, g, oracle.g(start)),
                            (super::TemporalOp::Fg, fg, oracle.fg(start)),
                        ] {
                            queries += 1;
                            if fast != slow {
                                bad.push(Disagreement {
                                    handshake: h.clone(),
                                    mode,
                                    op,
                                    env: env.clone(),
                                    start: m.state(start).id.clone(),
                                    fast,
                                    oracle: slow,
                                });
                            }
                        }
                    }
                }
            }
            Ok((queries, bad))
        })
        .collect();

    let mut summary = CrossCheckSummary {
        machine: m.name().to_string(),
        ..Default::default()
    };
    for r in per_env {
        let (queries, bad) = r?;
        summary.queries += queries;
        summary.agreeing += queries - bad.len();
        summary.disagreements.extend(bad);
    }
    Ok(summary)
}
