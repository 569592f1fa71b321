//! Built-in primitives: machines plus their verified block/idle conditions,
//! stored as data files under `library/`.
//!
//! A primitive file holds a `(machine ...)` form followed by a
//! `(conditions (NAME "CONDITION") ...)` trailer. Storage-like primitives add
//! `(storage (input H) (output H) (full STATE...))`, naming the states in
//! which the primitive holds a packet. `(ports (ALIAS HANDSHAKE) ...)` gives
//! handshakes alternative names for use in netlists.

use thiserror::Error;

use crate::equations::{parse_condition, Condition, ConditionParseError};
use crate::sexpr::{self, ParseError, Sexp};
use crate::xdi::{machine_from_sexp, XdiMachine};

pub const JOIN_BLOCKING_A: &str = "blocked(a) <-> blocked(c) | idle(b)";

/// The three-case blocking equation of the distributor's packet input,
/// written with `a` for the packet input, `b` for the output chosen by
/// `select01` and `c` for the output chosen by `select10`.
pub const DISTRIBUTOR_SELECT_EQUATION: &str = "blocked(a) <-> \
    idle(select00) & idle(select01) & idle(select10) \
    | !idle(select01) & blocked(b) \
    | !idle(select10) & blocked(c)";

const SOURCES: [(&str, &str); 6] = [
    ("join", include_str!("../library/join.xdi")),
    ("distributor", include_str!("../library/distributor.xdi")),
    ("fork", include_str!("../library/fork.xdi")),
    ("storage", include_str!("../library/storage.xdi")),
    ("source", include_str!("../library/source.xdi")),
    ("sink", include_str!("../library/sink.xdi")),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("condition `{name}`: {source}")]
    Condition {
        name: String,
        source: ConditionParseError,
    },
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedCondition {
    pub name: String,
    pub text: String,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageInfo {
    pub input: String,
    pub output: String,
    pub full_states: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveSpec {
    pub name: String,
    pub machine: XdiMachine,
    pub conditions: Vec<NamedCondition>,
    pub storage: Option<StorageInfo>,
    pub ports: Vec<(String, String)>,
}

impl PrimitiveSpec {
    /// Resolves a netlist port name: a handshake of the machine or an alias.
    pub fn resolve_port(&self, name: &str) -> Option<&str> {
        if let Some(h) = self.machine.handshakes().into_iter().find(|h| *h == name) {
            return Some(h);
        }
        self.ports
            .iter()
            .find(|(alias, _)| alias == name)
            .map(|(_, h)| h.as_str())
    }
}

fn keyed<'a>(form: &'a Sexp, key: &str) -> Result<&'a [Sexp], ParseError> {
    let items = form.expect_list(&format!("`({key} ...)`"))?;
    match items.split_first() {
        Some((head, rest)) if head.as_symbol() == Some(key) => Ok(rest),
        Some((head, _)) => Err(ParseError::new(
            head.pos,
            format!("`{key}`"),
            head.describe(),
        )),
        None => Err(ParseError::new(
            form.pos,
            format!("`({key} ...)`"),
            "empty list",
        )),
    }
}

fn head_symbol(form: &Sexp) -> Option<&str> {
    form.as_list()?.first()?.as_symbol()
}

/// Parses a machine file, optionally carrying `conditions` and `storage`
/// trailers.
pub fn parse_primitive(text: &str) -> Result<PrimitiveSpec, LibraryError> {
    let forms = sexpr::parse_all(text)?;
    let Some((first, rest)) = forms.split_first() else {
        return Err(ParseError::new(Default::default(), "`(machine ...)`", "end of input").into());
    };
    let machine = machine_from_sexp(first)?;
    let mut conditions = Vec::new();
    let mut storage = None;
    let mut ports = Vec::new();
    for form in rest {
        match head_symbol(form) {
            Some("conditions") => {
                for entry in keyed(form, "conditions")? {
                    let items = entry.expect_list("`(NAME \"CONDITION\")`")?;
                    let [name, body] = items else {
                        return Err(ParseError::new(
                            entry.pos,
                            "`(NAME \"CONDITION\")`",
                            format!("{} elements", items.len()),
                        )
                        .into());
                    };
                    let name = name.expect_ident("condition name")?.to_string();
                    let text = body.expect_string("condition string")?.to_string();
                    let condition =
                        parse_condition(&text).map_err(|source| LibraryError::Condition {
                            name: name.clone(),
                            source,
                        })?;
                    conditions.push(NamedCondition {
                        name,
                        text,
                        condition,
                    });
                }
            }
            Some("storage") => {
                let mut input = None;
                let mut output = None;
                let mut full_states = Vec::new();
                for field in keyed(form, "storage")? {
                    let items = field.expect_list("storage field")?;
                    let key = items
                        .first()
                        .ok_or_else(|| ParseError::new(field.pos, "storage field", "empty list"))?
                        .expect_symbol("`input`, `output` or `full`")?;
                    match (key, &items[1..]) {
                        ("input", [h]) => input = Some(h.expect_ident("handshake")?.to_string()),
                        ("output", [h]) => output = Some(h.expect_ident("handshake")?.to_string()),
                        ("full", states) => {
                            for s in states {
                                full_states.push(s.expect_ident("state id")?.to_string());
                            }
                        }
                        _ => {
                            return Err(ParseError::new(
                                field.pos,
                                "`(input H)`, `(output H)` or `(full STATE...)`",
                                field.describe(),
                            )
                            .into())
                        }
                    }
                }
                let (Some(input), Some(output)) = (input, output) else {
                    return Err(ParseError::new(
                        form.pos,
                        "both `(input H)` and `(output H)`",
                        "an incomplete storage declaration",
                    )
                    .into());
                };
                storage = Some(StorageInfo {
                    input,
                    output,
                    full_states,
                });
            }
            Some("ports") => {
                for entry in keyed(form, "ports")? {
                    let items = entry.expect_list("`(ALIAS HANDSHAKE)`")?;
                    let [alias, h] = items else {
                        return Err(ParseError::new(
                            entry.pos,
                            "`(ALIAS HANDSHAKE)`",
                            format!("{} elements", items.len()),
                        )
                        .into());
                    };
                    let h_name = h.expect_ident("handshake")?;
                    if !machine.has_handshake(h_name) {
                        return Err(ParseError::new(
                            h.pos,
                            "a handshake of the machine",
                            format!("`{h_name}`"),
                        )
                        .into());
                    }
                    ports.push((
                        alias.expect_ident("port alias")?.to_string(),
                        h_name.to_string(),
                    ));
                }
            }
            _ => {
                return Err(ParseError::new(
                    form.pos,
                    "`(conditions ...)`, `(storage ...)` or `(ports ...)`",
                    form.describe(),
                )
                .into())
            }
        }
    }
    Ok(PrimitiveSpec {
        name: machine.name().to_string(),
        machine,
        conditions,
        storage,
        ports,
    })
}

pub fn builtin_library() -> Vec<PrimitiveSpec> {
    SOURCES
        .iter()
        .map(|(name, text)| {
            parse_primitive(text).unwrap_or_else(|e| panic!("built-in primitive `{name}`: {e}"))
        })
        .collect()
}

pub fn primitive(name: &str) -> Result<PrimitiveSpec, LibraryError> {
    SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_primitive(text))
        .unwrap_or_else(|| Err(LibraryError::UnknownPrimitive(name.to_string())))
}

/// Source text of a built-in primitive file.
pub fn primitive_source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn join_machine() -> XdiMachine {
    primitive("join").expect("built-in join").machine
}

pub fn distributor_machine() -> XdiMachine {
    primitive("distributor")
        .expect("built-in distributor")
        .machine
}
