//! Text and JSON rendering of check results.
//!
//! JSON output is always an array with one object per result. Object
//! schemas per subcommand are listed in the README.

use serde::Serialize;

use crate::checker::{CheckResult, Mode, TemporalOp};
use crate::xdi::{Environment, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// A result that can be rendered as one or more text lines or as a JSON
/// object.
pub trait Record: Serialize {
    fn text(&self) -> String;
}

/// Renders `items` in order. An empty slice renders as `[]` or
/// `nothing to report`.
pub fn render<T: Record>(items: &[T], format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(items).expect("records serialize");
            s.push('\n');
            s
        }
        Format::Text if items.is_empty() => "nothing to report\n".to_string(),
        Format::Text => {
            let mut s = String::new();
            for it in items {
                s.push_str(&it.text());
                if !s.ends_with('\n') {
                    s.push('\n');
                }
            }
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryRecord {
    pub handshake: String,
    pub mode: Mode,
    pub op: TemporalOp,
    pub env: Environment,
    pub holds: bool,
    pub visited: Vec<String>,
    pub counterexample: Option<Trace>,
}

impl QueryRecord {
    pub fn new(handshake: &str, mode: Mode, op: TemporalOp, env: &Environment, r: CheckResult) -> Self {
        QueryRecord {
            handshake: handshake.to_string(),
            mode,
            op,
            env: env.clone(),
            holds: r.holds,
            visited: r.visited,
            counterexample: r.counterexample,
        }
    }
}

impl Record for QueryRecord {
    fn text(&self) -> String {
        let mut s = format!(
            "{} {} {} env={}: {}",
            self.op,
            self.mode,
            self.handshake,
            self.env,
            if self.holds { "holds" } else { "fails" }
        );
        s.push_str(&format!("\n  visited: {}", self.visited.join(" ")));
        if let Some(t) = &self.counterexample {
            s.push_str(&format!("\n  counterexample: {t}"));
        }
        s
    }
}

impl Record for Environment {
    fn text(&self) -> String {
        self.to_string()
    }
}

impl Record for crate::equations::EnvVerdict {
    fn text(&self) -> String {
        let side = |b: Option<bool>| match b {
            Some(true) => " true",
            Some(false) => " false",
            None => "",
        };
        match (self.lhs, self.rhs) {
            (Some(_), Some(_)) => format!(
                "{} lhs={} rhs={}: {}",
                self.env,
                side(self.lhs).trim(),
                side(self.rhs).trim(),
                if self.holds { "holds" } else { "fails" }
            ),
            _ => format!("{}: {}", self.env, if self.holds { "holds" } else { "fails" }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelsRecord {
    pub machine: String,
    pub handshake: String,
    pub blocking: Vec<String>,
    pub idling: Vec<String>,
    pub ambiguous: bool,
    /// Parity conflicts, rendered as text.
    pub conflicts: Vec<String>,
}

impl Record for LabelsRecord {
    fn text(&self) -> String {
        let mut s = format!(
            "blocking: {}\nidling: {}\nambiguous: {}",
            self.blocking.join(" "),
            self.idling.join(" "),
            if self.ambiguous { "yes" } else { "no" }
        );
        for c in &self.conflicts {
            s.push_str(&format!("\n  {c}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationRecord {
    pub machine: String,
    pub valid: bool,
    pub violations: Vec<String>,
}

impl Record for ValidationRecord {
    fn text(&self) -> String {
        if self.valid {
            return format!("{}: valid", self.machine);
        }
        let mut s = format!("{}: {} violation(s)", self.machine, self.violations.len());
        for v in &self.violations {
            s.push_str(&format!("\n  {v}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConditionRecord {
    pub primitive: String,
    pub name: String,
    pub condition: String,
    pub holds: bool,
    pub environments: usize,
    pub failing_envs: Vec<Environment>,
}

impl Record for ConditionRecord {
    fn text(&self) -> String {
        let mut s = format!(
            "{}.{}: {} ({} environments) {}",
            self.primitive,
            self.name,
            if self.holds { "holds" } else { "FAILS" },
            self.environments,
            self.condition
        );
        for e in &self.failing_envs {
            s.push_str(&format!("\n  fails in {e}"));
        }
        s
    }
}

impl Record for crate::checker::oracle::CrossCheckSummary {
    fn text(&self) -> String {
        let mut s = format!(
            "{}: {} queries, {} agreeing, {} disagreeing",
            self.machine,
            self.queries,
            self.agreeing,
            self.disagreements.len()
        );
        for d in &self.disagreements {
            s.push_str(&format!(
                "\n  {} {} {} env={} start={}: checker={} oracle={}",
                d.op, d.mode, d.handshake, d.env, d.start, d.fast, d.oracle
            ));
        }
        s
    }
}
