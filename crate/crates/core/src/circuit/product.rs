//! Synchronous product of the instances of a netlist.
//!
//! A wire shared by a channel fires in both endpoint machines at once, driven
//! by the side that outputs it. A wire of an external handshake fires in its
//! machine alone, except that stable input wires never fire.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use super::Netlist;
use crate::labeling::{compute_block_idle, LabelError, LabelMap};
use crate::xdi::{Direction, Phase, StateIx, XdiError};

pub const DEFAULT_PRODUCT_BOUND: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProductError {
    #[error("product exploration exceeded {limit} states")]
    TooLarge { limit: usize },
    #[error(transparent)]
    Machine(#[from] XdiError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// A wire firing: `link` indexes channels first, then externals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move {
    pub link: usize,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy)]
enum Peer {
    Connected { instance: usize, link: usize },
    External { link: usize, stable_request: bool, stable_ack: bool },
}

/// Local states of all instances, in netlist order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductState(pub Vec<(String, String)>);

impl fmt::Display for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (inst, s)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{inst}={s}")?;
        }
        Ok(())
    }
}

impl Serialize for ProductState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (inst, s) in &self.0 {
            map.serialize_entry(inst, s)?;
        }
        map.end()
    }
}

/// Reachable part of the product, explored breadth-first from the initial
/// states; state 0 is the initial product state and indices follow
/// discovery order.
#[derive(Debug, Clone)]
pub struct Product<'n> {
    netlist: &'n Netlist,
    states: Vec<Box<[StateIx]>>,
    edges: Vec<Vec<(Move, usize)>>,
    parents: Vec<Option<(usize, Move)>>,
}

pub fn compose(n: &Netlist) -> Result<Product<'_>, ProductError> {
    compose_bounded(n, DEFAULT_PRODUCT_BOUND)
}

pub fn compose_bounded(n: &Netlist, bound: usize) -> Result<Product<'_>, ProductError> {
    let machines: Vec<_> = n.instances.iter().map(|i| i.machine()).collect();
    let mut peers: Vec<HashMap<&str, (Peer, &str)>> = vec![HashMap::new(); machines.len()];
    for (link, ch) in n.channels.iter().enumerate() {
        let s = n.instance_ix(&ch.sender.instance).expect("validated netlist");
        let r = n.instance_ix(&ch.receiver.instance).expect("validated netlist");
        peers[s].insert(&ch.sender.handshake, (Peer::Connected { instance: r, link }, &ch.receiver.handshake));
        peers[r].insert(&ch.receiver.handshake, (Peer::Connected { instance: s, link }, &ch.sender.handshake));
    }
    for (k, ext) in n.externals.iter().enumerate() {
        let i = n.instance_ix(&ext.endpoint.instance).expect("validated netlist");
        let peer = Peer::External {
            link: n.channels.len() + k,
            stable_request: ext.stable.contains(&Phase::Request),
            stable_ack: ext.stable.contains(&Phase::Ack),
        };
        peers[i].insert(&ext.endpoint.handshake, (peer, ""));
    }

    let initial: Box<[StateIx]> = machines
        .iter()
        .map(|m| m.initial())
        .collect::<Result<_, _>>()?;
    let mut index: HashMap<Box<[StateIx]>, usize> = HashMap::from([(initial.clone(), 0)]);
    let mut states = vec![initial];
    let mut parents = vec![None];
    let mut edges: Vec<Vec<(Move, usize)>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);

    while let Some(cur) = queue.pop_front() {
        let mut out: Vec<(Move, usize)> = Vec::new();
        let mut successors: Vec<(Move, Box<[StateIx]>)> = Vec::new();
        {
            let state = &states[cur];
            for (i, m) in machines.iter().enumerate() {
                for (wire, target) in m.edges(state[i]) {
                    let Some(&(peer, peer_handshake)) = peers[i].get(wire.handshake.as_str()) else {
                        continue;
                    };
                    match peer {
                        Peer::Connected { instance: j, link } => {
                            if wire.direction != Direction::Output {
                                continue;
                            }
                            for (w2, t2) in machines[j].edges(state[j]) {
                                if w2.handshake == peer_handshake
                                    && w2.phase == wire.phase
                                    && w2.direction == Direction::Input
                                {
                                    let mut next = state.clone();
                                    next[i] = target;
                                    next[j] = t2;
                                    successors.push((Move { link, phase: wire.phase }, next));
                                }
                            }
                        }
                        Peer::External {
                            link,
                            stable_request,
                            stable_ack,
                        } => {
                            let stable = match wire.phase {
                                Phase::Request => stable_request,
                                Phase::Ack => stable_ack,
                            };
                            if wire.direction == Direction::Input && stable {
                                continue;
                            }
                            let mut next = state.clone();
                            next[i] = target;
                            successors.push((Move { link, phase: wire.phase }, next));
                        }
                    }
                }
            }
        }
        for (mv, next) in successors {
            let ix = match index.get(&next) {
                Some(&ix) => ix,
                None => {
                    if states.len() >= bound {
                        return Err(ProductError::TooLarge { limit: bound });
                    }
                    let ix = states.len();
                    index.insert(next.clone(), ix);
                    states.push(next);
                    parents.push(Some((cur, mv)));
                    queue.push_back(ix);
                    ix
                }
            };
            if !out.contains(&(mv, ix)) {
                out.push((mv, ix));
            }
        }
        if edges.len() <= cur {
            edges.resize(cur + 1, Vec::new());
        }
        edges[cur] = out;
    }
    edges.resize(states.len(), Vec::new());

    Ok(Product {
        netlist: n,
        states,
        edges,
        parents,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeadlockKind {
    /// A transient instance that no continuation ever moves.
    StuckTransient {
        instance: String,
        #[serde(rename = "instance_state")]
        state: String,
    },
    /// A channel whose pending request is never acknowledged in any
    /// continuation.
    BlockedChannel { channel: String },
}

impl fmt::Display for DeadlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeadlockKind::StuckTransient { instance, state } => {
                write!(f, "instance `{instance}` is stuck in transient state {state}")
            }
            DeadlockKind::BlockedChannel { channel } => {
                write!(f, "channel `{channel}` is permanently blocked")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Deadlock {
    #[serde(flatten)]
    pub kind: DeadlockKind,
    pub state: ProductState,
    /// Wire firings leading from the initial product state to `state`.
    pub moves: Vec<String>,
    /// Product states along the path, both ends included.
    pub path: Vec<ProductState>,
}

impl<'n> Product<'n> {
    pub fn netlist(&self) -> &'n Netlist {
        self.netlist
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn local_states(&self, ix: usize) -> &[StateIx] {
        &self.states[ix]
    }

    pub fn edges(&self, ix: usize) -> &[(Move, usize)] {
        &self.edges[ix]
    }

    /// Product state index of a tuple of local states, if reachable.
    pub fn find(&self, local: &[StateIx]) -> Option<usize> {
        self.states.iter().position(|s| &**s == local)
    }

    pub fn move_label(&self, mv: Move) -> String {
        let n = self.netlist;
        let name = match n.channels.get(mv.link) {
            Some(c) => c.name.clone(),
            None => n.externals[mv.link - n.channels.len()].name(),
        };
        format!("{name}.{}", mv.phase.letter())
    }

    /// Instances whose local state changes when `mv` fires.
    pub fn move_instances(&self, mv: Move) -> Vec<usize> {
        let n = self.netlist;
        match n.channels.get(mv.link) {
            Some(c) => vec![
                n.instance_ix(&c.sender.instance).expect("validated netlist"),
                n.instance_ix(&c.receiver.instance).expect("validated netlist"),
            ],
            None => {
                let ext = &n.externals[mv.link - n.channels.len()];
                vec![n.instance_ix(&ext.endpoint.instance).expect("validated netlist")]
            }
        }
    }

    pub fn state(&self, ix: usize) -> ProductState {
        ProductState(
            self.netlist
                .instances
                .iter()
                .zip(self.states[ix].iter())
                .map(|(inst, &s)| (inst.id.clone(), inst.machine().state(s).id.clone()))
                .collect(),
        )
    }

    fn is_transient(&self, ix: usize, inst: usize) -> bool {
        self.netlist.instances[inst]
            .machine()
            .is_transient(self.states[ix][inst])
    }

    /// No instance with two or more handshakes sits in a transient state.
    /// Single-handshake primitives (sources, sinks) stand for the
    /// environment and are ignored.
    pub fn is_settled(&self, ix: usize) -> bool {
        self.netlist
            .instances
            .iter()
            .enumerate()
            .all(|(i, inst)| inst.machine().handshakes().len() < 2 || !self.is_transient(ix, i))
    }

    /// Shortest path of moves from the initial state, with the states
    /// visited.
    pub fn path_to(&self, ix: usize) -> (Vec<Move>, Vec<usize>) {
        let mut moves = Vec::new();
        let mut states = vec![ix];
        let mut cur = ix;
        while let Some((p, mv)) = self.parents[cur] {
            moves.push(mv);
            states.push(p);
            cur = p;
        }
        moves.reverse();
        states.reverse();
        (moves, states)
    }

    /// Marks every state from which some state in `targets` is reachable.
    fn backward_closure(&self, mut marked: Vec<bool>) -> Vec<bool> {
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); self.len()];
        for (s, out) in self.edges.iter().enumerate() {
            for &(_, t) in out {
                preds[t].push(s);
            }
        }
        let mut stack: Vec<usize> = (0..self.len()).filter(|&s| marked[s]).collect();
        while let Some(s) = stack.pop() {
            for &p in &preds[s] {
                if !marked[p] {
                    marked[p] = true;
                    stack.push(p);
                }
            }
        }
        marked
    }

    /// Per product state, whether the channel's request is outstanding.
    pub fn pending(&self, channel: usize) -> Result<Vec<bool>, ProductError> {
        let ch = &self.netlist.channels[channel];
        let r = self.netlist.instance_ix(&ch.receiver.instance).expect("validated netlist");
        let labels: LabelMap = compute_block_idle(self.netlist.instances[r].machine(), &ch.receiver.handshake)?;
        Ok(self.states.iter().map(|s| labels.is_blocking(s[r])).collect())
    }

    /// First deadlocked state in breadth-first order, if any.
    pub fn find_deadlock(&self) -> Result<Option<Deadlock>, ProductError> {
        let n_inst = self.netlist.instances.len();
        let mut stuck: Vec<Vec<bool>> = Vec::with_capacity(n_inst);
        for i in 0..n_inst {
            let moves_here: Vec<bool> = (0..self.len())
                .map(|s| {
                    self.edges[s]
                        .iter()
                        .any(|&(mv, _)| self.move_instances(mv).contains(&i))
                })
                .collect();
            let can_move = self.backward_closure(moves_here);
            stuck.push(
                can_move
                    .into_iter()
                    .enumerate()
                    .map(|(s, m)| !m && self.is_transient(s, i))
                    .collect(),
            );
        }
        let mut blocked: Vec<Vec<bool>> = Vec::new();
        for c in 0..self.netlist.channels.len() {
            let pending = self.pending(c)?;
            let released = self.backward_closure(pending.iter().map(|p| !p).collect());
            blocked.push(released.into_iter().map(|r| !r).collect());
        }

        for s in 0..self.len() {
            let kind = (0..n_inst)
                .find(|&i| stuck[i][s])
                .map(|i| {
                    let inst = &self.netlist.instances[i];
                    DeadlockKind::StuckTransient {
                        instance: inst.id.clone(),
                        state: inst.machine().state(self.states[s][i]).id.clone(),
                    }
                })
                .or_else(|| {
                    (0..blocked.len()).find(|&c| blocked[c][s]).map(|c| DeadlockKind::BlockedChannel {
                        channel: self.netlist.channels[c].name.clone(),
                    })
                });
            if let Some(kind) = kind {
                let (moves, path) = self.path_to(s);
                return Ok(Some(Deadlock {
                    kind,
                    state: self.state(s),
                    moves: moves.into_iter().map(|m| self.move_label(m)).collect(),
                    path: path.into_iter().map(|p| self.state(p)).collect(),
                }));
            }
        }
        Ok(None)
    }
}

pub fn find_deadlock(n: &Netlist) -> Result<Option<Deadlock>, ProductError> {
    compose(n)?.find_deadlock()
}

/// Fullness of every storage instance over the reachable settled states
/// (all reachable states when none is settled). While a fork or join is
/// mid-transfer the storages it serves can disagree, so the projection skips
/// those states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FullnessProjection {
    pub storages: Vec<String>,
    pub vectors: BTreeSet<Vec<bool>>,
    pub settled_only: bool,
}

impl FullnessProjection {
    /// True when storages `a` and `b` agree in every projected vector.
    pub fn always_equal(&self, a: &str, b: &str) -> Option<bool> {
        let ia = self.storages.iter().position(|s| s == a)?;
        let ib = self.storages.iter().position(|s| s == b)?;
        Some(self.vectors.iter().all(|v| v[ia] == v[ib]))
    }
}

pub fn fullness_projection(p: &Product<'_>) -> FullnessProjection {
    let n = p.netlist;
    let storages: Vec<(usize, BTreeSet<StateIx>)> = n
        .instances
        .iter()
        .enumerate()
        .filter_map(|(i, inst)| {
            let info = inst.primitive.storage.as_ref()?;
            let full = info
                .full_states
                .iter()
                .filter_map(|id| inst.machine().state_ix(id).ok())
                .collect();
            Some((i, full))
        })
        .collect();
    let settled: Vec<usize> = (0..p.len()).filter(|&s| p.is_settled(s)).collect();
    let settled_only = !settled.is_empty();
    let over: Vec<usize> = if settled_only { settled } else { (0..p.len()).collect() };
    let vectors = over
        .into_iter()
        .map(|s| {
            storages
                .iter()
                .map(|(i, full)| full.contains(&p.states[s][*i]))
                .collect()
        })
        .collect();
    FullnessProjection {
        storages: storages.iter().map(|(i, _)| n.instances[*i].id.clone()).collect(),
        vectors,
        settled_only,
    }
}
