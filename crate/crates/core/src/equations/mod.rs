//! Block/idle conditions: a small formula language over `blocked(h)` and
//! `idle(h)` atoms, evaluated per environment by the checker and verified
//! over every reasonable environment of a machine.

mod discover;

pub use discover::{discover, truth_table, TruthTable};

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::checker::{reasonable_envs, CheckError, Checker};
use crate::formula::Expr;
use crate::xdi::{Environment, XdiMachine};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Blocked(String),
    Idle(String),
}

impl Atom {
    pub fn handshake(&self) -> &str {
        match self {
            Atom::Blocked(h) | Atom::Idle(h) => h,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Blocked(h) => write!(f, "blocked({h})"),
            Atom::Idle(h) => write!(f, "idle({h})"),
        }
    }
}

pub type Condition = Expr<Atom>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {col}: expected {expected}, found {found}")]
pub struct ConditionParseError {
    pub col: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquationError {
    #[error("invalid condition: {0}")]
    Parse(#[from] ConditionParseError),
    #[error("condition mentions handshake `{0}`, which the machine does not have")]
    UnknownHandshake(String),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("{0} environments exceed the 64 supported by formula discovery")]
    TooManyEnvironments(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Not,
    And,
    Or,
    Implies,
    Iff,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Not => f.write_str("`!`"),
            Tok::And => f.write_str("`&`"),
            Tok::Or => f.write_str("`|`"),
            Tok::Implies => f.write_str("`->`"),
            Tok::Iff => f.write_str("`<->`"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ConditionParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        if c.is_whitespace() {
            i += 1;
        } else if rest.starts_with("<->") {
            out.push((col, Tok::Iff));
            i += 3;
        } else if rest.starts_with("->") {
            out.push((col, Tok::Implies));
            i += 2;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((col, Tok::Ident(chars[start..i].iter().collect())));
        } else {
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '!' => Tok::Not,
                '&' => Tok::And,
                '|' => Tok::Or,
                _ => {
                    return Err(ConditionParseError {
                        col,
                        expected: "an operator, atom or parenthesis".into(),
                        found: format!("`{c}`"),
                    })
                }
            };
            out.push((col, tok));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(c, _)| *c)
    }

    fn error(&self, expected: &str) -> ConditionParseError {
        ConditionParseError {
            col: self.col(),
            expected: expected.to_string(),
            found: self
                .peek()
                .map_or_else(|| "end of input".to_string(), |t| t.to_string()),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn iff(&mut self) -> Result<Condition, ConditionParseError> {
        let mut lhs = self.implies()?;
        while self.eat(&Tok::Iff) {
            lhs = Expr::iff(lhs, self.implies()?);
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<Condition, ConditionParseError> {
        let lhs = self.or()?;
        if self.eat(&Tok::Implies) {
            Ok(Expr::implies(lhs, self.implies()?))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Condition, ConditionParseError> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Or) {
            lhs = Expr::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Condition, ConditionParseError> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::And) {
            lhs = Expr::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Condition, ConditionParseError> {
        if self.eat(&Tok::Not) {
            Ok(Expr::not(self.unary()?))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Condition, ConditionParseError> {
        const EXPECTED: &str = "`blocked(h)`, `idle(h)`, `true`, `false`, `!` or `(`";
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.iff()?;
                if !self.eat(&Tok::RParen) {
                    return Err(self.error("`)`"));
                }
                Ok(e)
            }
            Some(Tok::Ident(word)) => {
                self.pos += 1;
                match word.as_str() {
                    "true" => Ok(Expr::Const(true)),
                    "false" => Ok(Expr::Const(false)),
                    "blocked" | "idle" => {
                        if !self.eat(&Tok::LParen) {
                            return Err(self.error("`(` after the predicate name"));
                        }
                        let h = match self.peek().cloned() {
                            Some(Tok::Ident(h)) => {
                                self.pos += 1;
                                h
                            }
                            _ => return Err(self.error("a handshake identifier")),
                        };
                        if !self.eat(&Tok::RParen) {
                            return Err(self.error("`)`"));
                        }
                        Ok(Expr::Atom(if word == "blocked" {
                            Atom::Blocked(h)
                        } else {
                            Atom::Idle(h)
                        }))
                    }
                    _ => {
                        self.pos -= 1;
                        Err(self.error(EXPECTED))
                    }
                }
            }
            _ => Err(self.error(EXPECTED)),
        }
    }
}

/// Parses the condition language. Precedence from loosest to tightest:
/// `<->`, `->`, `|`, `&`, `!`.
pub fn parse_condition(text: &str) -> Result<Condition, ConditionParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.chars().count() + 1,
    };
    let e = p.iff()?;
    if p.pos < p.toks.len() {
        return Err(p.error("an operator or end of input"));
    }
    Ok(e)
}

/// Every atom must name a handshake of `m`.
pub fn check_atoms(c: &Condition, m: &XdiMachine) -> Result<(), EquationError> {
    match c
        .atoms()
        .into_iter()
        .find(|a| !m.has_handshake(a.handshake()))
    {
        Some(a) => Err(EquationError::UnknownHandshake(a.handshake().to_string())),
        None => Ok(()),
    }
}

pub fn eval_atom(
    checker: &Checker<'_>,
    atom: &Atom,
    env: &Environment,
) -> Result<bool, CheckError> {
    match atom {
        Atom::Blocked(h) => checker.blocked(h, env),
        Atom::Idle(h) => checker.idle(h, env),
    }
}

pub fn eval_condition(
    c: &Condition,
    checker: &Checker<'_>,
    env: &Environment,
) -> Result<bool, EquationError> {
    check_atoms(c, checker.machine())?;
    Ok(c.eval_with(&mut |a| eval_atom(checker, a, env))?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnvVerdict {
    pub env: Environment,
    /// Sides of a top-level `<->`; absent for other shapes.
    pub lhs: Option<bool>,
    pub rhs: Option<bool>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub machine: String,
    pub condition: String,
    pub holds_overall: bool,
    pub per_env: Vec<EnvVerdict>,
    pub failing_envs: Vec<EnvVerdict>,
}

fn eval_env(
    c: &Condition,
    checker: &Checker<'_>,
    env: &Environment,
) -> Result<EnvVerdict, CheckError> {
    let mut atom = |a: &Atom| eval_atom(checker, a, env);
    Ok(match c {
        Expr::Iff(l, r) => {
            let lhs = l.eval_with(&mut atom)?;
            let rhs = r.eval_with(&mut atom)?;
            EnvVerdict {
                env: env.clone(),
                lhs: Some(lhs),
                rhs: Some(rhs),
                holds: lhs == rhs,
            }
        }
        _ => EnvVerdict {
            env: env.clone(),
            lhs: None,
            rhs: None,
            holds: c.eval_with(&mut atom)?,
        },
    })
}

/// Evaluates `c` in every reasonable environment of `m`, in the
/// deterministic environment order.
pub fn verify_condition(c: &Condition, m: &XdiMachine) -> Result<Verdict, EquationError> {
    use rayon::prelude::*;

    check_atoms(c, m)?;
    let checker = Checker::new(m);
    let per_env = reasonable_envs(m)
        .par_iter()
        .map(|env| eval_env(c, &checker, env))
        .collect::<Result<Vec<_>, _>>()?;
    let failing_envs: Vec<EnvVerdict> = per_env.iter().filter(|v| !v.holds).cloned().collect();
    Ok(Verdict {
        machine: m.name().to_string(),
        condition: c.to_string(),
        holds_overall: failing_envs.is_empty(),
        per_env,
        failing_envs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library;

    fn blocked(h: &str) -> Condition {
        Expr::Atom(Atom::Blocked(h.into()))
    }

    fn idle(h: &str) -> Condition {
        Expr::Atom(Atom::Idle(h.into()))
    }

    #[test]
    fn parses_join_condition() {
        let c = parse_condition("blocked(a) <-> blocked(c) | idle(b)").unwrap();
        assert_eq!(
            c,
            Expr::iff(blocked("a"), Expr::or(blocked("c"), idle("b")))
        );
        assert_eq!(c.to_string(), "blocked(a) <-> blocked(c) | idle(b)");
    }

    #[test]
    fn parses_constants_and_precedence() {
        assert_eq!(parse_condition("true").unwrap(), Expr::Const(true));
        let c = parse_condition("!idle(a) & blocked(b) | false -> true <-> idle(c)").unwrap();
        assert_eq!(
            c,
            Expr::iff(
                Expr::implies(
                    Expr::or(
                        Expr::and(Expr::not(idle("a")), blocked("b")),
                        Expr::Const(false)
                    ),
                    Expr::Const(true)
                ),
                idle("c")
            )
        );
        let c = parse_condition("idle(a) -> idle(b) -> idle(c)").unwrap();
        assert_eq!(
            c,
            Expr::implies(idle("a"), Expr::implies(idle("b"), idle("c")))
        );
    }

    #[test]
    fn parse_errors() {
        let err = parse_condition("blocked(a").unwrap_err();
        assert_eq!(err.found, "end of input");
        assert_eq!(err.col, 10);
        assert!(parse_condition("stuck(a)").is_err());
        assert!(parse_condition("blocked(a) idle(b)").is_err());
        assert!(parse_condition("blocked(a) $ idle(b)").is_err());
        assert!(parse_condition("").is_err());
        assert!(parse_condition("(idle(a)").is_err());
    }

    #[test]
    fn evaluates_join_condition() {
        let m = library::join_machine();
        let checker = Checker::new(&m);
        let c = parse_condition(library::JOIN_BLOCKING_A).unwrap();
        let env = |s: &str| s.parse::<Environment>().unwrap();
        assert!(eval_condition(&c, &checker, &env("c.A")).unwrap());
        let v = eval_env(&c, &checker, &env("c.A")).unwrap();
        assert_eq!((v.lhs, v.rhs), (Some(true), Some(true)));
        let v = eval_env(&c, &checker, &env("")).unwrap();
        assert_eq!((v.lhs, v.rhs), (Some(false), Some(false)));
        assert!(!eval_condition(&Expr::Const(false), &checker, &env("")).unwrap());
    }

    #[test]
    fn unguarded_join_condition_fails_when_both_inputs_are_silent() {
        let m = library::join_machine();
        let c = parse_condition(library::JOIN_BLOCKING_A).unwrap();
        let v = verify_condition(&c, &m).unwrap();
        assert!(!v.holds_overall);
        assert_eq!(v.per_env.len(), 8);
        let failing: Vec<String> = v.failing_envs.iter().map(|e| e.env.to_string()).collect();
        assert_eq!(failing, ["{a.R,b.R}", "{a.R,b.R,c.A}"]);
        // a is idle there, so it cannot also be blocked
        for e in &v.failing_envs {
            assert_eq!((e.lhs, e.rhs), (Some(false), Some(true)));
        }
    }

    #[test]
    fn verifies_guarded_join_condition() {
        let m = library::join_machine();
        let c = parse_condition("blocked(a) <-> !idle(a) & (blocked(c) | idle(b))").unwrap();
        let v = verify_condition(&c, &m).unwrap();
        assert!(v.holds_overall);
        assert_eq!(v.per_env.len(), 8);
        assert!(v.failing_envs.is_empty());
    }

    #[test]
    fn blocked_alone_is_environment_dependent() {
        let m = library::join_machine();
        let v = verify_condition(&blocked("a"), &m).unwrap();
        assert!(!v.holds_overall);
        let live = &v.per_env[0];
        assert!(live.env.is_empty() && !live.holds);
        let stuck_c = v
            .per_env
            .iter()
            .find(|e| e.env.to_string() == "{c.A}")
            .unwrap();
        assert!(stuck_c.holds);
        assert!(v.failing_envs.iter().any(|e| e.env.is_empty()));

        let v = verify_condition(&parse_condition("blocked(a) <-> idle(a)").unwrap(), &m).unwrap();
        assert!(!v.holds_overall);
    }

    #[test]
    fn unknown_atoms_are_rejected() {
        let m = library::join_machine();
        assert_eq!(
            verify_condition(&blocked("zz"), &m),
            Err(EquationError::UnknownHandshake("zz".into()))
        );
    }
}
