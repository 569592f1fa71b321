//! XDI state machines: data model, textual format, validation and the
//! environment-relative step semantics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::sexpr::{self, ParseError, Pos, Sexp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Phase {
    Request,
    Ack,
}

impl Phase {
    pub fn letter(self) -> char {
        match self {
            Phase::Request => 'R',
            Phase::Ack => 'A',
        }
    }

    fn from_token(tok: &str) -> Option<Phase> {
        match tok {
            "R" | "r" => Some(Phase::Request),
            "A" | "a" => Some(Phase::Ack),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Direction {
    Input,
    Output,
}

impl Direction {
    pub fn letter(self) -> char {
        match self {
            Direction::Input => 'I',
            Direction::Output => 'O',
        }
    }

    pub fn flip(self) -> Direction {
        match self {
            Direction::Input => Direction::Output,
            Direction::Output => Direction::Input,
        }
    }

    fn from_token(tok: &str) -> Option<Direction> {
        match tok {
            "I" | "i" => Some(Direction::Input),
            "O" | "o" => Some(Direction::Output),
            _ => None,
        }
    }
}

/// A wire `(h R/A I/O)`. Data-carrying requests are modelled as separate
/// handshakes (`select00`, `select01`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub handshake: String,
    pub phase: Phase,
    pub direction: Direction,
}

impl Wire {
    pub fn new(handshake: impl Into<String>, phase: Phase, direction: Direction) -> Self {
        Wire {
            handshake: handshake.into(),
            phase,
            direction,
        }
    }

    pub fn key(&self) -> WireKey {
        WireKey::new(self.handshake.clone(), self.phase)
    }
}

impl fmt::Display for Wire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({} {} {})",
            self.handshake,
            self.phase.letter(),
            self.direction.letter()
        )
    }
}

/// A wire without its direction: `(h R/A)`. Environments are sets of these.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WireKey {
    pub handshake: String,
    pub phase: Phase,
}

impl WireKey {
    pub fn new(handshake: impl Into<String>, phase: Phase) -> Self {
        WireKey {
            handshake: handshake.into(),
            phase,
        }
    }
}

impl fmt::Display for WireKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.handshake, self.phase.letter())
    }
}

impl Serialize for WireKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for WireKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (h, p) = s
            .rsplit_once('.')
            .ok_or_else(|| format!("expected `handshake.R` or `handshake.A`, found `{s}`"))?;
        if !sexpr::is_identifier(h) {
            return Err(format!("`{h}` is not a valid handshake identifier"));
        }
        let phase = Phase::from_token(p)
            .ok_or_else(|| format!("expected phase `R` or `A` after `{h}.`, found `{p}`"))?;
        Ok(WireKey::new(h, phase))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StateKind {
    /// Indifferent state: no progress obligation on either side.
    Box,
    /// The primitive itself must eventually move on.
    Transient,
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateKind::Box => "box",
            StateKind::Transient => "transient",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub wire: Wire,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateEntry {
    pub id: String,
    pub init: bool,
    pub kind: StateKind,
    pub transitions: Vec<Transition>,
}

/// Index of a state inside its machine's declaration order.
pub type StateIx = usize;

/// A finite XDI automaton.
///
/// The textual form is preserved as written; all semantics treat transitions
/// as sets.
#[derive(Debug, Clone)]
pub struct XdiMachine {
    name: String,
    states: Vec<StateEntry>,
    index: HashMap<String, StateIx>,
    // resolved targets; None for undeclared ids (a validation violation)
    targets: Vec<Vec<Option<StateIx>>>,
}

impl PartialEq for XdiMachine {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.states == other.states
    }
}

impl Eq for XdiMachine {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XdiError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("`{0}` is not an input wire of the machine")]
    NotAnInputWire(WireKey),
    #[error("machine has no initial state")]
    NoInitialState,
}

impl XdiMachine {
    pub fn new(name: impl Into<String>, states: Vec<StateEntry>) -> Self {
        let mut index = HashMap::new();
        for (ix, st) in states.iter().enumerate() {
            index.entry(st.id.clone()).or_insert(ix);
        }
        let targets = states
            .iter()
            .map(|st| {
                st.transitions
                    .iter()
                    .map(|t| index.get(&t.target).copied())
                    .collect()
            })
            .collect();
        XdiMachine {
            name: name.into(),
            states,
            index,
            targets,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[StateEntry] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, ix: StateIx) -> &StateEntry {
        &self.states[ix]
    }

    pub fn state_ix(&self, id: &str) -> Result<StateIx, XdiError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| XdiError::UnknownState(id.to_string()))
    }

    pub fn is_transient(&self, ix: StateIx) -> bool {
        self.states[ix].kind == StateKind::Transient
    }

    /// First state flagged initial.
    pub fn initial(&self) -> Result<StateIx, XdiError> {
        self.states
            .iter()
            .position(|s| s.init)
            .ok_or(XdiError::NoInitialState)
    }

    /// `(wire, target)` pairs of a state with resolved targets. Dangling
    /// targets are skipped; `validate` reports them.
    pub fn edges(&self, ix: StateIx) -> impl Iterator<Item = (&Wire, StateIx)> + '_ {
        self.states[ix]
            .transitions
            .iter()
            .zip(&self.targets[ix])
            .filter_map(|(t, target)| target.map(|target| (&t.wire, target)))
    }

    /// Handshakes in order of first appearance.
    pub fn handshakes(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for st in &self.states {
            for t in &st.transitions {
                if seen.insert(t.wire.handshake.as_str()) {
                    out.push(t.wire.handshake.as_str());
                }
            }
        }
        out
    }

    pub fn has_handshake(&self, h: &str) -> bool {
        self.states
            .iter()
            .any(|st| st.transitions.iter().any(|t| t.wire.handshake == h))
    }

    /// Direction of `(h, phase)` as it occurs on the transitions, if it occurs.
    pub fn direction_of(&self, h: &str, phase: Phase) -> Option<Direction> {
        self.states
            .iter()
            .flat_map(|st| &st.transitions)
            .find(|t| t.wire.handshake == h && t.wire.phase == phase)
            .map(|t| t.wire.direction)
    }

    /// The deduplicated set of `(h, R/A)` pairs that occur as inputs.
    pub fn input_wires(&self) -> BTreeSet<WireKey> {
        self.states
            .iter()
            .flat_map(|st| &st.transitions)
            .filter(|t| t.wire.direction == Direction::Input)
            .map(|t| t.wire.key())
            .collect()
    }

    pub fn output_wires(&self) -> BTreeSet<WireKey> {
        self.states
            .iter()
            .flat_map(|st| &st.transitions)
            .filter(|t| t.wire.direction == Direction::Output)
            .map(|t| t.wire.key())
            .collect()
    }

    pub fn is_input_wire(&self, handshake: &str, phase: Phase) -> bool {
        self.states.iter().flat_map(|st| &st.transitions).any(|t| {
            t.wire.handshake == handshake
                && t.wire.phase == phase
                && t.wire.direction == Direction::Input
        })
    }

    pub fn is_environment(&self, env: &Environment) -> bool {
        env.iter()
            .all(|w| self.is_input_wire(&w.handshake, w.phase))
    }

    /// Index-level step: targets of all transitions of `ix` whose wire is not
    /// stable in `env`, deduplicated, in declaration order.
    pub fn successors(&self, ix: StateIx, env: &Environment) -> Vec<StateIx> {
        let mut out: Vec<StateIx> = Vec::new();
        for (wire, target) in self.edges(ix) {
            if !env.is_stable(wire) && !out.contains(&target) {
                out.push(target);
            }
        }
        out
    }

    pub fn step(&self, s: &str, env: &Environment) -> Result<BTreeSet<String>, XdiError> {
        let ix = self.state_ix(s)?;
        Ok(self
            .successors(ix, env)
            .into_iter()
            .map(|t| self.states[t].id.clone())
            .collect())
    }

    pub fn is_trace(&self, trace: &Trace, env: &Environment) -> Result<bool, XdiError> {
        let ixs = trace
            .states
            .iter()
            .map(|s| self.state_ix(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.is_trace_ix(&ixs, env))
    }

    pub fn is_trace_ix(&self, trace: &[StateIx], env: &Environment) -> bool {
        trace
            .windows(2)
            .all(|w| self.successors(w[0], env).contains(&w[1]))
    }

    /// States reachable from `from` (inclusive) in breadth-first order.
    pub fn reachable(&self, from: StateIx, env: &Environment) -> Vec<StateIx> {
        let mut seen = vec![false; self.len()];
        let mut order = vec![from];
        seen[from] = true;
        let mut i = 0;
        while i < order.len() {
            for t in self.successors(order[i], env) {
                if !seen[t] {
                    seen[t] = true;
                    order.push(t);
                }
            }
            i += 1;
        }
        order
    }

    /// Checks every structural invariant and collects the violations.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.states.is_empty() {
            violations.push(Violation::NoStates);
            return ValidationReport { violations };
        }

        let inits: Vec<String> = self
            .states
            .iter()
            .filter(|s| s.init)
            .map(|s| s.id.clone())
            .collect();
        match inits.len() {
            0 => violations.push(Violation::NoInitialState),
            1 => {}
            _ => violations.push(Violation::MultipleInitialStates(inits)),
        }

        let mut seen = BTreeSet::new();
        for st in &self.states {
            if !seen.insert(st.id.as_str()) {
                violations.push(Violation::DuplicateState(st.id.clone()));
            }
        }

        for (st, targets) in self.states.iter().zip(&self.targets) {
            for (t, target) in st.transitions.iter().zip(targets) {
                if target.is_none() {
                    violations.push(Violation::UnknownTarget {
                        state: st.id.clone(),
                        target: t.target.clone(),
                    });
                }
            }
        }

        let mut directions: BTreeMap<WireKey, BTreeSet<Direction>> = BTreeMap::new();
        for t in self.states.iter().flat_map(|st| &st.transitions) {
            directions
                .entry(t.wire.key())
                .or_default()
                .insert(t.wire.direction);
        }
        for (key, dirs) in directions {
            if dirs.len() > 1 {
                violations.push(Violation::DirectionConflict(key));
            }
        }

        if let Ok(init) = self.initial() {
            let reach = self.reachable(init, &Environment::empty());
            let mut reached = vec![false; self.len()];
            for ix in reach {
                reached[ix] = true;
            }
            let unreachable: Vec<String> = self
                .states
                .iter()
                .enumerate()
                .filter(|(ix, st)| !reached[*ix] && self.index.get(&st.id) == Some(ix))
                .map(|(_, st)| st.id.clone())
                .collect();
            if !unreachable.is_empty() {
                violations.push(Violation::Unreachable(unreachable));
            }
        }

        ValidationReport { violations }
    }

    /// Graphviz rendering: box states as boxes, transient states as
    /// ellipses, the initial state with a double border.
    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph \"{}\" {{\n", self.name);
        for st in &self.states {
            let shape = match st.kind {
                StateKind::Box => "box",
                StateKind::Transient => "ellipse",
            };
            let peripheries = if st.init { 2 } else { 1 };
            out.push_str(&format!(
                "  \"{}\" [shape={shape}, peripheries={peripheries}];\n",
                st.id
            ));
        }
        for st in &self.states {
            for t in &st.transitions {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\" [label=\"{} {} {}\"];\n",
                    st.id,
                    t.target,
                    t.wire.handshake,
                    t.wire.phase.letter(),
                    t.wire.direction.letter()
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for XdiMachine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(machine {}", self.name)?;
        for st in &self.states {
            write!(
                f,
                "\n  ({} {} {} (",
                st.id,
                if st.init { "t" } else { "nil" },
                st.kind
            )?;
            for (i, t) in st.transitions.iter().enumerate() {
                if i > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "({} {})", t.wire, t.target)?;
            }
            f.write_str("))")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoStates,
    NoInitialState,
    MultipleInitialStates(Vec<String>),
    DuplicateState(String),
    UnknownTarget { state: String, target: String },
    DirectionConflict(WireKey),
    Unreachable(Vec<String>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => f.write_str("machine declares no states"),
            Violation::NoInitialState => f.write_str("no initial state"),
            Violation::MultipleInitialStates(ids) => {
                write!(f, "multiple initial states: {}", ids.join(", "))
            }
            Violation::DuplicateState(id) => write!(f, "duplicate state id `{id}`"),
            Violation::UnknownTarget { state, target } => {
                write!(
                    f,
                    "state `{state}` has a transition to undeclared state `{target}`"
                )
            }
            Violation::DirectionConflict(key) => {
                write!(
                    f,
                    "direction conflict: `{key}` occurs as both input and output"
                )
            }
            Violation::Unreachable(ids) => {
                write!(f, "unreachable states: {}", ids.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A set of input wires deemed permanently stable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Environment {
    stable: BTreeSet<WireKey>,
}

impl Environment {
    pub fn empty() -> Self {
        Environment::default()
    }

    pub fn iter(&self) -> impl Iterator<Item = &WireKey> {
        self.stable.iter()
    }

    pub fn len(&self) -> usize {
        self.stable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stable.is_empty()
    }

    pub fn contains(&self, key: &WireKey) -> bool {
        self.stable.contains(key)
    }

    pub fn insert(&mut self, key: WireKey) -> bool {
        self.stable.insert(key)
    }

    pub fn is_subset(&self, other: &Environment) -> bool {
        self.stable.is_subset(&other.stable)
    }

    /// Output wires are never stable.
    pub fn is_stable(&self, wire: &Wire) -> bool {
        wire.direction == Direction::Input
            && self
                .stable
                .iter()
                .any(|k| k.handshake == wire.handshake && k.phase == wire.phase)
    }

    /// Checks membership against a machine (`envp`).
    pub fn check_against(&self, m: &XdiMachine) -> Result<(), XdiError> {
        match self
            .iter()
            .find(|w| !m.is_input_wire(&w.handshake, w.phase))
        {
            Some(w) => Err(XdiError::NotAnInputWire(w.clone())),
            None => Ok(()),
        }
    }
}

impl FromIterator<WireKey> for Environment {
    fn from_iter<I: IntoIterator<Item = WireKey>>(iter: I) -> Self {
        Environment {
            stable: iter.into_iter().collect(),
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, w) in self.stable.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{w}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for Environment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.stable.iter())
    }
}

impl FromStr for Environment {
    type Err = String;

    /// Comma-separated `h.R` / `h.A` tokens; the empty string and `{}` denote
    /// the live environment. Surrounding braces are accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .unwrap_or(s);
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(WireKey::from_str)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Trace {
    pub states: Vec<String>,
}

impl Trace {
    pub fn new<S: Into<String>>(states: impl IntoIterator<Item = S>) -> Self {
        Trace {
            states: states.into_iter().map(Into::into).collect(),
        }
    }

    pub fn from_ixs(m: &XdiMachine, ixs: &[StateIx]) -> Self {
        Trace {
            states: ixs.iter().map(|&ix| m.state(ix).id.clone()).collect(),
        }
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.states.join(" -> "))
    }
}

/// Parses text holding exactly one `(machine ...)` form.
pub fn parse_machine(text: &str) -> Result<XdiMachine, ParseError> {
    let forms = sexpr::parse_all(text)?;
    match forms.as_slice() {
        [form] => machine_from_sexp(form),
        [] => Err(ParseError::new(
            Pos { line: 1, col: 1 },
            "`(machine ...)`",
            "end of input",
        )),
        [_, extra, ..] => Err(ParseError::new(extra.pos, "end of input", extra.describe())),
    }
}

pub fn machine_from_sexp(form: &Sexp) -> Result<XdiMachine, ParseError> {
    let items = form.expect_list("`(machine NAME STATE...)`")?;
    let Some((head, rest)) = items.split_first() else {
        return Err(ParseError::new(form.pos, "`machine`", "empty list"));
    };
    if head.expect_symbol("`machine`")? != "machine" {
        return Err(ParseError::new(head.pos, "`machine`", head.describe()));
    }
    let Some((name, state_forms)) = rest.split_first() else {
        return Err(ParseError::new(form.pos, "machine name", "end of list"));
    };
    let name = name.expect_ident("machine name")?;
    // `(machine NAME (STATE...))` wraps the entries in one extra list
    let state_forms = match state_forms {
        [single]
            if single
                .as_list()
                .is_some_and(|l| l.first().is_none_or(|f| f.as_list().is_some())) =>
        {
            single.as_list().unwrap_or_default()
        }
        _ => state_forms,
    };
    let states = state_forms
        .iter()
        .map(state_from_sexp)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(XdiMachine::new(name, states))
}

fn state_from_sexp(form: &Sexp) -> Result<StateEntry, ParseError> {
    let items = form.expect_list("`(ID INIT KIND TRANSITIONS)`")?;
    if items.len() != 4 {
        return Err(ParseError::new(
            form.pos,
            "state entry with 4 fields `(ID INIT KIND TRANSITIONS)`",
            format!("{} fields", items.len()),
        ));
    }
    let id = items[0].expect_ident("state id")?.to_string();
    let init = match items[1]
        .expect_symbol("`t` or `nil`")?
        .to_ascii_lowercase()
        .as_str()
    {
        "t" => true,
        "nil" => false,
        _ => {
            return Err(ParseError::new(
                items[1].pos,
                "`t` or `nil`",
                items[1].describe(),
            ))
        }
    };
    let kind = match items[2]
        .expect_symbol("`box` or `transient`")?
        .to_ascii_lowercase()
        .as_str()
    {
        "box" => StateKind::Box,
        "transient" => StateKind::Transient,
        _ => {
            return Err(ParseError::new(
                items[2].pos,
                "`box` or `transient`",
                items[2].describe(),
            ))
        }
    };
    let transitions = items[3]
        .expect_list("transition list")?
        .iter()
        .map(transition_from_sexp)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StateEntry {
        id,
        init,
        kind,
        transitions,
    })
}

fn transition_from_sexp(form: &Sexp) -> Result<Transition, ParseError> {
    let items = form.expect_list("`((h R/A I/O) TARGET)`")?;
    if items.len() != 2 {
        return Err(ParseError::new(
            form.pos,
            "transition `((h R/A I/O) TARGET)`",
            format!("{} elements", items.len()),
        ));
    }
    let wire = wire_from_sexp(&items[0])?;
    let target = items[1].expect_ident("target state id")?.to_string();
    Ok(Transition { wire, target })
}

pub(crate) fn wire_from_sexp(form: &Sexp) -> Result<Wire, ParseError> {
    let items = form.expect_list("wire `(h R/A I/O)`")?;
    if items.len() != 3 {
        return Err(ParseError::new(
            form.pos,
            "wire `(h R/A I/O)`",
            format!("{} elements", items.len()),
        ));
    }
    let handshake = items[0].expect_ident("handshake identifier")?;
    let phase = items[1]
        .as_symbol()
        .and_then(Phase::from_token)
        .ok_or_else(|| ParseError::new(items[1].pos, "`R` or `A`", items[1].describe()))?;
    let direction = items[2]
        .as_symbol()
        .and_then(Direction::from_token)
        .ok_or_else(|| ParseError::new(items[2].pos, "`I` or `O`", items[2].describe()))?;
    Ok(Wire::new(handshake, phase, direction))
}
