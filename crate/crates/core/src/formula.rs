//! Boolean formulas over an arbitrary atom type.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr<A> {
    Const(bool),
    Atom(A),
    Not(Box<Expr<A>>),
    And(Box<Expr<A>>, Box<Expr<A>>),
    Or(Box<Expr<A>>, Box<Expr<A>>),
    Implies(Box<Expr<A>>, Box<Expr<A>>),
    Iff(Box<Expr<A>>, Box<Expr<A>>),
}

impl<A> Expr<A> {
    pub fn atom(a: A) -> Self {
        Expr::Atom(a)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr<A>) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn and(l: Expr<A>, r: Expr<A>) -> Self {
        Expr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Expr<A>, r: Expr<A>) -> Self {
        Expr::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Expr<A>, r: Expr<A>) -> Self {
        Expr::Implies(Box::new(l), Box::new(r))
    }

    pub fn iff(l: Expr<A>, r: Expr<A>) -> Self {
        Expr::Iff(Box::new(l), Box::new(r))
    }

    /// Left-nested conjunction; `true` when empty.
    pub fn all(items: impl IntoIterator<Item = Expr<A>>) -> Self {
        items
            .into_iter()
            .reduce(Expr::and)
            .unwrap_or(Expr::Const(true))
    }

    /// Left-nested disjunction; `false` when empty.
    pub fn any(items: impl IntoIterator<Item = Expr<A>>) -> Self {
        items
            .into_iter()
            .reduce(Expr::or)
            .unwrap_or(Expr::Const(false))
    }

    pub fn eval_with<E>(&self, atom: &mut impl FnMut(&A) -> Result<bool, E>) -> Result<bool, E> {
        Ok(match self {
            Expr::Const(b) => *b,
            Expr::Atom(a) => atom(a)?,
            Expr::Not(e) => !e.eval_with(atom)?,
            Expr::And(l, r) => l.eval_with(atom)? && r.eval_with(atom)?,
            Expr::Or(l, r) => l.eval_with(atom)? || r.eval_with(atom)?,
            Expr::Implies(l, r) => !l.eval_with(atom)? || r.eval_with(atom)?,
            Expr::Iff(l, r) => l.eval_with(atom)? == r.eval_with(atom)?,
        })
    }

    pub fn eval(&self, atom: &mut impl FnMut(&A) -> bool) -> bool {
        self.eval_with::<std::convert::Infallible>(&mut |a| Ok(atom(a)))
            .unwrap_or_else(|e| match e {})
    }

    /// Atoms in left-to-right order of occurrence, duplicates included.
    pub fn atoms(&self) -> Vec<&A> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a A>) {
        match self {
            Expr::Const(_) => {}
            Expr::Atom(a) => out.push(a),
            Expr::Not(e) => e.collect_atoms(out),
            Expr::And(l, r) | Expr::Or(l, r) | Expr::Implies(l, r) | Expr::Iff(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    pub fn map_atoms<B>(&self, f: &mut impl FnMut(&A) -> B) -> Expr<B> {
        match self {
            Expr::Const(b) => Expr::Const(*b),
            Expr::Atom(a) => Expr::Atom(f(a)),
            Expr::Not(e) => Expr::not(e.map_atoms(f)),
            Expr::And(l, r) => Expr::and(l.map_atoms(f), r.map_atoms(f)),
            Expr::Or(l, r) => Expr::or(l.map_atoms(f), r.map_atoms(f)),
            Expr::Implies(l, r) => Expr::implies(l.map_atoms(f), r.map_atoms(f)),
            Expr::Iff(l, r) => Expr::iff(l.map_atoms(f), r.map_atoms(f)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Iff(..) => 1,
            Expr::Implies(..) => 2,
            Expr::Or(..) => 3,
            Expr::And(..) => 4,
            Expr::Not(_) => 5,
            Expr::Const(_) | Expr::Atom(_) => 6,
        }
    }
}

impl<A: fmt::Display> Expr<A> {
    fn write_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Infix syntax with `!`, `&`, `|`, `->` (right-associative) and `<->`,
/// parenthesised only where precedence requires it.
impl<A: fmt::Display> fmt::Display for Expr<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            Expr::Const(b) => write!(f, "{b}"),
            Expr::Atom(a) => write!(f, "{a}"),
            Expr::Not(e) => {
                f.write_str("!")?;
                e.write_child(f, p)
            }
            Expr::And(l, r) | Expr::Or(l, r) | Expr::Iff(l, r) => {
                let op = match self {
                    Expr::And(..) => " & ",
                    Expr::Or(..) => " | ",
                    _ => " <-> ",
                };
                l.write_child(f, p)?;
                f.write_str(op)?;
                r.write_child(f, p + 1)
            }
            Expr::Implies(l, r) => {
                l.write_child(f, p + 1)?;
                f.write_str(" -> ")?;
                r.write_child(f, p)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type E = Expr<&'static str>;

    #[test]
    fn evaluation() {
        let e: E = Expr::iff(
            Expr::atom("x"),
            Expr::or(Expr::atom("y"), Expr::not(Expr::atom("x"))),
        );
        let mut env = |a: &&str| *a == "y";
        assert!(!e.eval(&mut env)); // x=false, rhs=true
        assert!(Expr::<&str>::all([]).eval(&mut |_| false));
        assert!(!Expr::<&str>::any([]).eval(&mut |_| true));
    }

    #[test]
    fn display_uses_minimal_parentheses() {
        let e: E = Expr::iff(
            Expr::atom("a"),
            Expr::or(
                Expr::atom("c"),
                Expr::and(Expr::atom("b"), Expr::not(Expr::atom("d"))),
            ),
        );
        assert_eq!(e.to_string(), "a <-> c | b & !d");
        let e: E = Expr::and(Expr::or(Expr::atom("a"), Expr::atom("b")), Expr::atom("c"));
        assert_eq!(e.to_string(), "(a | b) & c");
        let e: E = Expr::implies(
            Expr::implies(Expr::atom("a"), Expr::atom("b")),
            Expr::atom("c"),
        );
        assert_eq!(e.to_string(), "(a -> b) -> c");
        let e: E = Expr::not(Expr::and(Expr::atom("a"), Expr::atom("b")));
        assert_eq!(e.to_string(), "!(a & b)");
    }

    #[test]
    fn atoms_and_mapping() {
        let e: E = Expr::and(Expr::atom("a"), Expr::or(Expr::atom("b"), Expr::atom("a")));
        assert_eq!(e.atoms(), [&"a", &"b", &"a"]);
        let upper = e.map_atoms(&mut |a| a.to_uppercase());
        assert_eq!(upper.to_string(), "A & (B | A)");
    }
}
