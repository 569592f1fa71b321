//! Deadlock formulas over channel-level block/idle variables.
//!
//! Every channel (and external handshake) `x` gets `blk_x` and `idl_x`,
//! every storage instance `s` gets `full_s`. Primitive conditions are
//! instantiated on these variables; storages are described by their fullness
//! instead of their unconditional conditions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::product::{compose, fullness_projection, ProductError};
use super::Netlist;
use crate::equations::Atom;
use crate::formula::Expr;

/// Brute-force enumeration refuses instances with more variables.
pub const MAX_SAT_VARIABLES: usize = 26;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SatError {
    #[error("{0} variables exceed the enumeration limit of {MAX_SAT_VARIABLES}")]
    TooManyVariables(usize),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error(transparent)]
    Product(#[from] ProductError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Constraint {
    /// Where the constraint comes from, e.g. `j.blocked_a` or `target`.
    pub origin: String,
    #[serde(serialize_with = "serialize_display")]
    pub expr: Expr<String>,
}

fn serialize_display<S: serde::Serializer>(e: &Expr<String>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(e)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockInstance {
    pub circuit: String,
    pub target: String,
    pub variables: Vec<String>,
    pub constraints: Vec<Constraint>,
}

fn var(name: impl Into<String>) -> Expr<String> {
    Expr::Atom(name.into())
}

fn blk(link: &str) -> String {
    format!("blk_{link}")
}

fn idl(link: &str) -> String {
    format!("idl_{link}")
}

fn full(inst: &str) -> String {
    format!("full_{inst}")
}

pub fn derive_deadlock_formula(n: &Netlist, target: &str) -> Result<DeadlockInstance, SatError> {
    let links = n.link_names();
    if !links.iter().any(|l| l == target) {
        return Err(SatError::UnknownChannel(target.to_string()));
    }
    let mut variables: Vec<String> = links.iter().flat_map(|l| [blk(l), idl(l)]).collect();
    let mut constraints = Vec::new();
    let link_of = |inst: &str, h: &str| n.link_name(inst, h).expect("every handshake is linked");

    for inst in &n.instances {
        let id = &inst.id;
        if let Some(storage) = &inst.primitive.storage {
            variables.push(full(id));
            let (i, o) = (link_of(id, &storage.input), link_of(id, &storage.output));
            let f = var(full(id));
            let coupling = [
                ("full_blocks", Expr::implies(f.clone(), Expr::iff(var(blk(&i)), var(blk(&o))))),
                ("full_offers", Expr::implies(f.clone(), Expr::not(var(idl(&o))))),
                ("empty_idles", Expr::implies(Expr::not(f.clone()), Expr::iff(var(idl(&o)), var(idl(&i))))),
                ("empty_accepts", Expr::implies(Expr::not(f), Expr::not(var(blk(&i))))),
            ];
            for (name, expr) in coupling {
                constraints.push(Constraint {
                    origin: format!("{id}.{name}"),
                    expr,
                });
            }
            continue;
        }
        for c in &inst.primitive.conditions {
            let expr = c.condition.map_atoms(&mut |a: &Atom| match a {
                Atom::Blocked(h) => blk(&link_of(id, h)),
                Atom::Idle(h) => idl(&link_of(id, h)),
            });
            constraints.push(Constraint {
                origin: format!("{id}.{}", c.name),
                expr,
            });
        }
    }

    // the environment of an external handshake controls one of its two
    // predicates: idleness when it sends requests, blocking when it acks
    for ext in &n.externals {
        let name = ext.name();
        let (v, stable) = if ext.sends {
            (blk(&name), ext.stable.contains(&crate::xdi::Phase::Ack))
        } else {
            (idl(&name), ext.stable.contains(&crate::xdi::Phase::Request))
        };
        constraints.push(Constraint {
            origin: format!("{name}.environment"),
            expr: if stable { var(v) } else { Expr::not(var(v)) },
        });
    }

    let storages: Vec<&str> = n
        .instances
        .iter()
        .filter(|i| i.primitive.storage.is_some())
        .map(|i| i.id.as_str())
        .collect();
    if !storages.is_empty() {
        let product = compose(n)?;
        let proj = fullness_projection(&product);
        let expr = Expr::any(proj.vectors.iter().map(|v| {
            Expr::all(proj.storages.iter().zip(v).map(|(s, &bit)| {
                if bit {
                    var(full(s))
                } else {
                    Expr::not(var(full(s)))
                }
            }))
        }));
        constraints.push(Constraint {
            origin: "reachable_fullness".into(),
            expr,
        });
    }

    constraints.push(Constraint {
        origin: "target".into(),
        expr: Expr::and(var(blk(target)), Expr::not(var(idl(target)))),
    });

    Ok(DeadlockInstance {
        circuit: n.name.clone(),
        target: target.to_string(),
        variables,
        constraints,
    })
}

impl DeadlockInstance {
    /// Variables referenced by constraints but not declared.
    pub fn undeclared(&self) -> BTreeSet<&str> {
        let declared: BTreeSet<&str> = self.variables.iter().map(String::as_str).collect();
        self.constraints
            .iter()
            .flat_map(|c| c.expr.atoms())
            .map(String::as_str)
            .filter(|v| !declared.contains(v))
            .collect()
    }

    /// Copy without the constraints whose origin matches.
    pub fn without(&self, origin: &str) -> DeadlockInstance {
        DeadlockInstance {
            constraints: self
                .constraints
                .iter()
                .filter(|c| c.origin != origin)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    fn compiled(&self) -> Result<Vec<Expr<usize>>, SatError> {
        if self.variables.len() > MAX_SAT_VARIABLES {
            return Err(SatError::TooManyVariables(self.variables.len()));
        }
        let index: BTreeMap<&str, usize> = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        Ok(self
            .constraints
            .iter()
            .map(|c| c.expr.map_atoms(&mut |v: &String| index[v.as_str()]))
            .collect())
    }

    fn models(&self) -> Result<impl Iterator<Item = u64> + '_, SatError> {
        let compiled = self.compiled()?;
        let count = 1u64 << self.variables.len();
        Ok((0..count).filter(move |bits| {
            compiled
                .iter()
                .all(|e| e.eval(&mut |&i| bits >> i & 1 == 1))
        }))
    }

    fn assignment(&self, bits: u64) -> BTreeMap<String, bool> {
        self.variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), bits >> i & 1 == 1))
            .collect()
    }

    /// First model in enumeration order (variable `i` is bit `i`).
    pub fn solve(&self) -> Result<Option<BTreeMap<String, bool>>, SatError> {
        Ok(self.models()?.next().map(|bits| self.assignment(bits)))
    }

    pub fn is_satisfiable(&self) -> Result<bool, SatError> {
        Ok(self.solve()?.is_some())
    }

    /// Values taken by `vars` across all models.
    pub fn project(&self, vars: &[&str]) -> Result<BTreeSet<Vec<bool>>, SatError> {
        let ixs: Vec<usize> = vars
            .iter()
            .map(|v| {
                self.variables
                    .iter()
                    .position(|x| x == v)
                    .ok_or_else(|| SatError::UnknownChannel(v.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(self
            .models()?
            .map(|bits| ixs.iter().map(|&i| bits >> i & 1 == 1).collect())
            .collect())
    }
}

fn smt_expr(e: &Expr<String>, out: &mut String) {
    fn chain<'a>(e: &'a Expr<String>, and: bool, items: &mut Vec<&'a Expr<String>>) {
        match (e, and) {
            (Expr::And(l, r), true) | (Expr::Or(l, r), false) => {
                chain(l, and, items);
                chain(r, and, items);
            }
            _ => items.push(e),
        }
    }
    match e {
        Expr::Const(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Atom(v) => out.push_str(v),
        Expr::Not(x) => {
            out.push_str("(not ");
            smt_expr(x, out);
            out.push(')');
        }
        Expr::And(..) | Expr::Or(..) => {
            let and = matches!(e, Expr::And(..));
            let mut items = Vec::new();
            chain(e, and, &mut items);
            out.push_str(if and { "(and" } else { "(or" });
            for item in items {
                out.push(' ');
                smt_expr(item, out);
            }
            out.push(')');
        }
        Expr::Implies(l, r) | Expr::Iff(l, r) => {
            out.push_str(if matches!(e, Expr::Implies(..)) { "(=> " } else { "(= " });
            smt_expr(l, out);
            out.push(' ');
            smt_expr(r, out);
            out.push(')');
        }
    }
}

/// SMT-LIB 2 text for the instance: declarations in variable order, one
/// assertion per constraint, then `(check-sat)`.
pub fn emit_smt(di: &DeadlockInstance) -> String {
    let mut out = String::new();
    writeln!(out, "; deadlock of `{}` in circuit {}", di.target, di.circuit).unwrap();
    out.push_str("(set-logic QF_UF)\n");
    for v in &di.variables {
        writeln!(out, "(declare-const {v} Bool)").unwrap();
    }
    for c in &di.constraints {
        writeln!(out, "; {}", c.origin).unwrap();
        out.push_str("(assert ");
        smt_expr(&c.expr, &mut out);
        out.push_str(")\n");
    }
    out.push_str("(check-sat)\n");
    out
}
