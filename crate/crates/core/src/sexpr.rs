//! Minimal s-expression reader shared by the machine, library and netlist
//! formats.
//!
//! Atoms are bare symbols or double-quoted strings. `;` starts a comment that
//! runs to the end of the line. Every node remembers the position it started
//! at so that higher-level parsers can report errors with line/column context.

use std::fmt;

use thiserror::Error;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: expected {expected}, found {found}")]
pub struct ParseError {
    pub pos: Pos,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub fn new(pos: Pos, expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError {
            pos,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SexpKind {
    Symbol(String),
    Str(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sexp {
    pub kind: SexpKind,
    pub pos: Pos,
}

impl Sexp {
    pub fn as_symbol(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match &self.kind {
            SexpKind::List(items) => Some(items),
            _ => None,
        }
    }

    /// Short human description used in "found ..." error messages.
    pub fn describe(&self) -> String {
        match &self.kind {
            SexpKind::Symbol(s) => format!("symbol `{s}`"),
            SexpKind::Str(s) => format!("string {s:?}"),
            SexpKind::List(items) if items.is_empty() => "empty list".to_string(),
            SexpKind::List(_) => "list".to_string(),
        }
    }

    pub fn expect_symbol(&self, what: &str) -> Result<&str, ParseError> {
        self.as_symbol()
            .ok_or_else(|| ParseError::new(self.pos, what, self.describe()))
    }

    pub fn expect_list(&self, what: &str) -> Result<&[Sexp], ParseError> {
        self.as_list()
            .ok_or_else(|| ParseError::new(self.pos, what, self.describe()))
    }

    pub fn expect_string(&self, what: &str) -> Result<&str, ParseError> {
        match &self.kind {
            SexpKind::Str(s) => Ok(s),
            _ => Err(ParseError::new(self.pos, what, self.describe())),
        }
    }

    /// Symbol that is also a valid identifier (`[A-Za-z_][A-Za-z0-9_]*`).
    pub fn expect_ident(&self, what: &str) -> Result<&str, ParseError> {
        let s = self.expect_symbol(what)?;
        if is_identifier(s) {
            Ok(s)
        } else {
            Err(ParseError::new(self.pos, what, format!("`{s}`")))
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            pos: Pos { line: 1, col: 1 },
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Option<Sexp>, ParseError> {
        self.skip_trivia();
        let start = self.pos;
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => {
                            return Err(ParseError::new(
                                self.pos,
                                format!("`)` closing the list opened at {start}"),
                                "end of input",
                            ))
                        }
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        Some(_) => {
                            // read() only yields None at end of input, handled above
                            if let Some(item) = self.read()? {
                                items.push(item);
                            }
                        }
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::List(items),
                    pos: start,
                }))
            }
            ')' => Err(ParseError::new(start, "an expression", "unbalanced `)`")),
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => {
                            return Err(ParseError::new(
                                self.pos,
                                format!("closing `\"` for the string opened at {start}"),
                                "end of input",
                            ))
                        }
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some(c) => s.push(c),
                            None => {
                                return Err(ParseError::new(
                                    self.pos,
                                    "escaped character",
                                    "end of input",
                                ))
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::Str(s),
                    pos: start,
                }))
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Some(Sexp {
                    kind: SexpKind::Symbol(s),
                    pos: start,
                }))
            }
        }
    }
}

/// Reads every top-level expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut reader = Reader::new(text);
    let mut out = Vec::new();
    while let Some(sexp) = reader.read()? {
        out.push(sexp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_and_comments() {
        let exprs = parse_all("; header\n(a (b \"c d\") ()) ; tail\nx").unwrap();
        assert_eq!(exprs.len(), 2);
        let items = exprs[0].as_list().unwrap();
        assert_eq!(items[0].as_symbol(), Some("a"));
        assert_eq!(
            items[1].as_list().unwrap()[1].kind,
            SexpKind::Str("c d".into())
        );
        assert_eq!(items[2].as_list().unwrap().len(), 0);
        assert_eq!(exprs[1].pos, Pos { line: 3, col: 1 });
    }

    #[test]
    fn unbalanced_input_reports_position() {
        let err = parse_all("(a\n  (b c)").unwrap_err();
        assert_eq!(err.found, "end of input");
        assert!(err.expected.contains("1:1"));

        let err = parse_all("a )").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 3 });
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("select00"));
        assert!(is_identifier("_x"));
        assert!(!is_identifier("0a"));
        assert!(!is_identifier("a-b"));
        assert!(!is_identifier(""));
    }
}
