//! Circuits built from library primitives: netlist parsing and validation,
//! product composition, deadlock search and deadlock formulas.
//!
//! Netlist files are s-expressions:
//!
//! ```text
//! (circuit NAME
//!   (instance ID PRIMITIVE) ...
//!   (channel NAME (INSTANCE PORT) (INSTANCE PORT)) ...
//!   (stable INSTANCE PORT R|A) ...)
//! ```
//!
//! Ports are handshake names of the primitive or its declared aliases.
//! Handshakes not named by any channel are external; their environment is
//! live unless a `stable` form freezes one of their input wires.

mod formula;
mod product;

pub use formula::{derive_deadlock_formula, emit_smt, DeadlockInstance, SatError, MAX_SAT_VARIABLES};
pub use product::{
    compose, compose_bounded, find_deadlock, fullness_projection, Deadlock, DeadlockKind,
    FullnessProjection, Move, Product, ProductError, ProductState, DEFAULT_PRODUCT_BOUND,
};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::library::{self, LibraryError, PrimitiveSpec};
use crate::sexpr::{self, ParseError, Pos, Sexp};
use crate::xdi::{Direction, Phase, XdiMachine};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetlistError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("{pos}: {violation}")]
    Invalid { pos: Pos, violation: NetlistViolation },
    #[error(transparent)]
    Library(#[from] LibraryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetlistViolation {
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("duplicate instance `{0}`")]
    DuplicateInstance(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("primitive `{primitive}` of instance `{instance}` has no port `{port}`")]
    UnknownPort {
        instance: String,
        primitive: String,
        port: String,
    },
    #[error("duplicate channel `{0}`")]
    DuplicateChannel(String),
    #[error("handshake `{instance}.{handshake}` is used by channels `{first}` and `{second}`")]
    EndpointReused {
        instance: String,
        handshake: String,
        first: String,
        second: String,
    },
    #[error("channel `{0}` connects an instance to itself")]
    SelfLoop(String),
    #[error("direction clash on channel `{channel}`: both ends drive or both ends receive the {phase} wire")]
    DirectionClash { channel: String, phase: &'static str },
    #[error("`{instance}.{handshake}` is connected by channel `{channel}`; only external handshakes can be stable")]
    StableNotExternal {
        instance: String,
        handshake: String,
        channel: String,
    },
    #[error("`{instance}.{handshake}.{phase}` is an output of the instance; only input wires can be stable")]
    StableNotInput {
        instance: String,
        handshake: String,
        phase: char,
    },
    #[error("channel name `{0}` collides with the name of an external handshake")]
    NameCollision(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub primitive: PrimitiveSpec,
}

impl Instance {
    pub fn machine(&self) -> &XdiMachine {
        &self.primitive.machine
    }
}

/// One side of a channel; `handshake` is the machine's own name, aliases
/// already resolved.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub instance: String,
    pub handshake: String,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.instance, self.handshake)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub name: String,
    /// The end that drives the request wire.
    pub sender: Endpoint,
    pub receiver: Endpoint,
}

/// A handshake of some instance that no channel connects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct External {
    pub endpoint: Endpoint,
    /// True when the instance drives the request wire.
    pub sends: bool,
    pub stable: BTreeSet<Phase>,
}

impl External {
    /// Channel-style name used in formulas: `<instance>_<handshake>`.
    pub fn name(&self) -> String {
        format!("{}_{}", self.endpoint.instance, self.endpoint.handshake)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub name: String,
    pub instances: Vec<Instance>,
    pub channels: Vec<Channel>,
    pub externals: Vec<External>,
}

impl Netlist {
    pub fn instance_ix(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.id == id)
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn external(&self, name: &str) -> Option<&External> {
        self.externals.iter().find(|e| e.name() == name)
    }

    /// Channel name or external name that carries `(instance, handshake)`.
    pub fn link_name(&self, instance: &str, handshake: &str) -> Option<String> {
        let ep = Endpoint {
            instance: instance.to_string(),
            handshake: handshake.to_string(),
        };
        self.channels
            .iter()
            .find(|c| c.sender == ep || c.receiver == ep)
            .map(|c| c.name.clone())
            .or_else(|| {
                self.externals
                    .iter()
                    .find(|e| e.endpoint == ep)
                    .map(External::name)
            })
    }

    /// Names accepted as deadlock targets: channels, then externals.
    pub fn link_names(&self) -> Vec<String> {
        self.channels
            .iter()
            .map(|c| c.name.clone())
            .chain(self.externals.iter().map(External::name))
            .collect()
    }
}

fn invalid(pos: Pos, violation: NetlistViolation) -> NetlistError {
    NetlistError::Invalid { pos, violation }
}

fn keyed<'a>(form: &'a Sexp, key: &str, arity: usize, shape: &str) -> Result<&'a [Sexp], NetlistError> {
    let items = form.expect_list(shape)?;
    if items.len() != arity + 1 {
        return Err(ParseError::new(form.pos, shape, format!("{} elements", items.len())).into());
    }
    debug_assert_eq!(items[0].as_symbol(), Some(key));
    Ok(&items[1..])
}

struct RawEndpoint<'a> {
    form: &'a Sexp,
    instance: &'a str,
    port: &'a str,
}

fn raw_endpoint(form: &Sexp) -> Result<RawEndpoint<'_>, NetlistError> {
    let items = form.expect_list("`(INSTANCE PORT)`")?;
    let [inst, port] = items else {
        return Err(ParseError::new(form.pos, "`(INSTANCE PORT)`", format!("{} elements", items.len())).into());
    };
    Ok(RawEndpoint {
        form,
        instance: inst.expect_ident("instance id")?,
        port: port.expect_ident("port name")?,
    })
}

pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let forms = sexpr::parse_all(text)?;
    let [form] = forms.as_slice() else {
        let (pos, found) = match forms.get(1) {
            Some(extra) => (extra.pos, extra.describe()),
            None => (Pos::default(), "end of input".to_string()),
        };
        return Err(ParseError::new(pos, "exactly one `(circuit ...)` form", found).into());
    };
    netlist_from_sexp(form)
}

pub fn netlist_from_sexp(form: &Sexp) -> Result<Netlist, NetlistError> {
    let items = form.expect_list("`(circuit NAME ...)`")?;
    let Some((head, rest)) = items.split_first() else {
        return Err(ParseError::new(form.pos, "`circuit`", "empty list").into());
    };
    if head.expect_symbol("`circuit`")? != "circuit" {
        return Err(ParseError::new(head.pos, "`circuit`", head.describe()).into());
    }
    let Some((name, body)) = rest.split_first() else {
        return Err(ParseError::new(form.pos, "circuit name", "end of list").into());
    };
    let name = name.expect_ident("circuit name")?.to_string();

    let mut instances: Vec<Instance> = Vec::new();
    let mut raw_channels = Vec::new();
    let mut raw_stable = Vec::new();
    for item in body {
        let key = item
            .as_list()
            .and_then(|l| l.first())
            .and_then(Sexp::as_symbol);
        match key {
            Some("instance") => {
                let [id, prim] = keyed(item, "instance", 2, "`(instance ID PRIMITIVE)`")? else {
                    unreachable!()
                };
                let id_name = id.expect_ident("instance id")?;
                let prim_name = prim.expect_ident("primitive name")?;
                if instances.iter().any(|i| i.id == id_name) {
                    return Err(invalid(id.pos, NetlistViolation::DuplicateInstance(id_name.into())));
                }
                let primitive = match library::primitive(prim_name) {
                    Ok(p) => p,
                    Err(LibraryError::UnknownPrimitive(_)) => {
                        return Err(invalid(prim.pos, NetlistViolation::UnknownPrimitive(prim_name.into())))
                    }
                    Err(e) => return Err(e.into()),
                };
                instances.push(Instance {
                    id: id_name.to_string(),
                    primitive,
                });
            }
            Some("channel") => {
                let [ch, a, b] = keyed(item, "channel", 3, "`(channel NAME (INSTANCE PORT) (INSTANCE PORT))`")?
                else {
                    unreachable!()
                };
                raw_channels.push((ch, raw_endpoint(a)?, raw_endpoint(b)?));
            }
            Some("stable") => {
                let [inst, port, phase] = keyed(item, "stable", 3, "`(stable INSTANCE PORT R|A)`")? else {
                    unreachable!()
                };
                let phase_tok = phase.expect_symbol("`R` or `A`")?;
                let phase = match phase_tok.to_ascii_uppercase().as_str() {
                    "R" => Phase::Request,
                    "A" => Phase::Ack,
                    _ => return Err(ParseError::new(phase.pos, "`R` or `A`", phase.describe()).into()),
                };
                raw_stable.push((
                    item,
                    RawEndpoint {
                        form: item,
                        instance: inst.expect_ident("instance id")?,
                        port: port.expect_ident("port name")?,
                    },
                    phase,
                ));
            }
            _ => {
                return Err(ParseError::new(
                    item.pos,
                    "`(instance ...)`, `(channel ...)` or `(stable ...)`",
                    item.describe(),
                )
                .into())
            }
        }
    }

    let resolve = |raw: &RawEndpoint<'_>| -> Result<(usize, Endpoint), NetlistError> {
        let ix = instances
            .iter()
            .position(|i| i.id == raw.instance)
            .ok_or_else(|| invalid(raw.form.pos, NetlistViolation::UnknownInstance(raw.instance.into())))?;
        let inst = &instances[ix];
        let handshake = inst.primitive.resolve_port(raw.port).ok_or_else(|| {
            invalid(
                raw.form.pos,
                NetlistViolation::UnknownPort {
                    instance: inst.id.clone(),
                    primitive: inst.primitive.name.clone(),
                    port: raw.port.into(),
                },
            )
        })?;
        Ok((
            ix,
            Endpoint {
                instance: inst.id.clone(),
                handshake: handshake.to_string(),
            },
        ))
    };

    let mut channels: Vec<Channel> = Vec::new();
    let mut used: HashMap<Endpoint, String> = HashMap::new();
    for (ch, a, b) in &raw_channels {
        let ch_name = ch.expect_ident("channel name")?;
        if channels.iter().any(|c| c.name == ch_name) {
            return Err(invalid(ch.pos, NetlistViolation::DuplicateChannel(ch_name.into())));
        }
        let (ia, ea) = resolve(a)?;
        let (ib, eb) = resolve(b)?;
        if ia == ib {
            return Err(invalid(ch.pos, NetlistViolation::SelfLoop(ch_name.into())));
        }
        for ep in [&ea, &eb] {
            if let Some(first) = used.get(ep) {
                return Err(invalid(
                    ch.pos,
                    NetlistViolation::EndpointReused {
                        instance: ep.instance.clone(),
                        handshake: ep.handshake.clone(),
                        first: first.clone(),
                        second: ch_name.into(),
                    },
                ));
            }
            used.insert(ep.clone(), ch_name.to_string());
        }
        let (ma, mb) = (instances[ia].machine(), instances[ib].machine());
        let mut a_sends = None;
        for (phase, label) in [(Phase::Request, "request"), (Phase::Ack, "acknowledge")] {
            let da = ma.direction_of(&ea.handshake, phase);
            let db = mb.direction_of(&eb.handshake, phase);
            match (da, db) {
                (Some(x), Some(y)) if x == y.flip() => {
                    if phase == Phase::Request {
                        a_sends = Some(x == Direction::Output);
                    }
                }
                _ => {
                    return Err(invalid(
                        ch.pos,
                        NetlistViolation::DirectionClash {
                            channel: ch_name.into(),
                            phase: label,
                        },
                    ))
                }
            }
        }
        let (sender, receiver) = if a_sends == Some(true) { (ea, eb) } else { (eb, ea) };
        channels.push(Channel {
            name: ch_name.to_string(),
            sender,
            receiver,
        });
    }

    let mut externals = Vec::new();
    for inst in &instances {
        let m = inst.machine();
        for h in m.handshakes() {
            let endpoint = Endpoint {
                instance: inst.id.clone(),
                handshake: h.to_string(),
            };
            if used.contains_key(&endpoint) {
                continue;
            }
            externals.push(External {
                endpoint,
                sends: m.direction_of(h, Phase::Request) == Some(Direction::Output),
                stable: BTreeSet::new(),
            });
        }
    }
    for (item, raw, phase) in &raw_stable {
        let (ix, ep) = resolve(raw)?;
        if let Some(ch) = used.get(&ep) {
            return Err(invalid(
                item.pos,
                NetlistViolation::StableNotExternal {
                    instance: ep.instance,
                    handshake: ep.handshake,
                    channel: ch.clone(),
                },
            ));
        }
        if !instances[ix].machine().is_input_wire(&ep.handshake, *phase) {
            return Err(invalid(
                item.pos,
                NetlistViolation::StableNotInput {
                    instance: ep.instance,
                    handshake: ep.handshake,
                    phase: phase.letter(),
                },
            ));
        }
        let ext = externals
            .iter_mut()
            .find(|e| e.endpoint == ep)
            .expect("unconnected handshakes are external");
        ext.stable.insert(*phase);
    }

    for ext in &externals {
        if let Some((ch, _, _)) = raw_channels
            .iter()
            .find(|(ch, _, _)| ch.as_symbol() == Some(ext.name().as_str()))
        {
            return Err(invalid(ch.pos, NetlistViolation::NameCollision(ext.name())));
        }
    }

    Ok(Netlist {
        name,
        instances,
        channels,
        externals,
    })
}

/// Canonical netlist text; parses back to an equal netlist.
impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(circuit {}", self.name)?;
        for i in &self.instances {
            write!(f, "\n  (instance {} {})", i.id, i.primitive.name)?;
        }
        for c in &self.channels {
            write!(
                f,
                "\n  (channel {} ({} {}) ({} {}))",
                c.name, c.sender.instance, c.sender.handshake, c.receiver.instance, c.receiver.handshake
            )?;
        }
        for e in &self.externals {
            for p in &e.stable {
                write!(f, "\n  (stable {} {} {})", e.endpoint.instance, e.endpoint.handshake, p.letter())?;
            }
        }
        f.write_str(")")
    }
}

/// Example circuits shipped with the crate.
pub const FORK_JOIN: &str = include_str!("../../circuits/fork_join.net");
pub const FORK_JOIN_STARVED: &str = include_str!("../../circuits/fork_join_starved.net");
