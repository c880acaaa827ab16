//! Role conditions: boolean expressions over user attributes.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr    := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | primary
//! primary := "(" expr ")" | "true" | "false" | atom
//! atom    := ident ("==" | "!=") string
//!          | ident "in" "[" string ("," string)* "]"
//! ```
//!
//! Strings are double-quoted with `\"` and `\\` escapes.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::UserAttributes;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoleCondition {
    True,
    False,
    Atom(Atom),
    And(Vec<RoleCondition>),
    Or(Vec<RoleCondition>),
    Not(Box<RoleCondition>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub attribute: String,
    pub test: AtomTest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtomTest {
    Eq(String),
    Ne(String),
    In(Vec<String>),
}

impl RoleCondition {
    pub fn eq(attribute: &str, value: &str) -> Self {
        RoleCondition::Atom(Atom {
            attribute: attribute.to_owned(),
            test: AtomTest::Eq(value.to_owned()),
        })
    }

    pub fn ne(attribute: &str, value: &str) -> Self {
        RoleCondition::Atom(Atom {
            attribute: attribute.to_owned(),
            test: AtomTest::Ne(value.to_owned()),
        })
    }

    pub fn is_in(attribute: &str, values: &[&str]) -> Self {
        RoleCondition::Atom(Atom {
            attribute: attribute.to_owned(),
            test: AtomTest::In(values.iter().map(|v| (*v).to_owned()).collect()),
        })
    }

    /// Distinct attribute names the condition reads.
    pub fn attributes(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_attributes(&mut out);
        out
    }

    fn collect_attributes<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            RoleCondition::True | RoleCondition::False => {}
            RoleCondition::Atom(a) => {
                out.insert(a.attribute.as_str());
            }
            RoleCondition::And(cs) | RoleCondition::Or(cs) => {
                cs.iter().for_each(|c| c.collect_attributes(out))
            }
            RoleCondition::Not(c) => c.collect_attributes(out),
        }
    }

    pub fn contains_negation(&self) -> bool {
        match self {
            RoleCondition::True | RoleCondition::False => false,
            RoleCondition::Atom(a) => matches!(a.test, AtomTest::Ne(_)),
            RoleCondition::And(cs) | RoleCondition::Or(cs) => cs.iter().any(Self::contains_negation),
            RoleCondition::Not(_) => true,
        }
    }
}

/// Evaluates a condition. An atom over an attribute the user does not have
/// is false, whatever its operator.
pub fn eval_condition(cond: &RoleCondition, attrs: &UserAttributes) -> bool {
    match cond {
        RoleCondition::True => true,
        RoleCondition::False => false,
        RoleCondition::Atom(atom) => match attrs.get(&atom.attribute) {
            None => false,
            Some(v) => match &atom.test {
                AtomTest::Eq(want) => v == want,
                AtomTest::Ne(want) => v != want,
                AtomTest::In(options) => options.iter().any(|o| o == v),
            },
        },
        RoleCondition::And(cs) => cs.iter().all(|c| eval_condition(c, attrs)),
        RoleCondition::Or(cs) => cs.iter().any(|c| eval_condition(c, attrs)),
        RoleCondition::Not(c) => !eval_condition(c, attrs),
    }
}

impl std::ops::Not for RoleCondition {
    type Output = RoleCondition;

    fn not(self) -> RoleCondition {
        RoleCondition::Not(Box::new(self))
    }
}

impl fmt::Display for RoleCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn quote(s: &str) -> String {
            format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
        }
        // Every compound is parenthesized so the rendering never depends on precedence.
        fn join(f: &mut fmt::Formatter<'_>, cs: &[RoleCondition], op: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")
        }
        match self {
            RoleCondition::True => f.write_str("true"),
            RoleCondition::False => f.write_str("false"),
            RoleCondition::Atom(a) => match &a.test {
                AtomTest::Eq(v) => write!(f, "{} == {}", a.attribute, quote(v)),
                AtomTest::Ne(v) => write!(f, "{} != {}", a.attribute, quote(v)),
                AtomTest::In(vs) => {
                    let items: Vec<String> = vs.iter().map(|v| quote(v)).collect();
                    write!(f, "{} in [{}]", a.attribute, items.join(", "))
                }
            },
            RoleCondition::And(cs) => join(f, cs, "and"),
            RoleCondition::Or(cs) => join(f, cs, "or"),
            RoleCondition::Not(c) => write!(f, "not ({c})"),
        }
    }
}

impl Serialize for RoleCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoleCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_condition(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("condition parse error at byte {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    EqEq,
    NotEq,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            b'[' => out.push((start, Tok::LBracket)),
            b']' => out.push((start, Tok::RBracket)),
            b',' => out.push((start, Tok::Comma)),
            b'=' | b'!' if bytes.get(i + 1) == Some(&b'=') => {
                out.push((start, if c == b'=' { Tok::EqEq } else { Tok::NotEq }));
                i += 1;
            }
            b'"' => {
                let mut value = String::new();
                let mut chars = text[i + 1..].char_indices();
                loop {
                    match chars.next() {
                        None => {
                            return Err(ParseError {
                                position: text.len(),
                                expected: "closing quote".into(),
                            })
                        }
                        Some((_, '\\')) => match chars.next() {
                            Some((_, ch @ ('"' | '\\'))) => value.push(ch),
                            _ => {
                                return Err(ParseError {
                                    position: start,
                                    expected: "escape `\\\"` or `\\\\`".into(),
                                })
                            }
                        },
                        Some((off, '"')) => {
                            i = i + 1 + off;
                            break;
                        }
                        Some((_, ch)) => value.push(ch),
                    }
                }
                out.push((start, Tok::Str(value)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_owned())));
                continue;
            }
            _ => {
                return Err(ParseError {
                    position: start,
                    expected: "identifier, string, operator or parenthesis".into(),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.offset(),
            expected: expected.to_owned(),
        })
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(what)
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail("quoted string value"),
        }
    }

    fn expr(&mut self) -> Result<RoleCondition, ParseError> {
        let mut parts = vec![self.and()?];
        while self.keyword("or") {
            self.pos += 1;
            parts.push(self.and()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            RoleCondition::Or(parts)
        })
    }

    fn and(&mut self) -> Result<RoleCondition, ParseError> {
        let mut parts = vec![self.unary()?];
        while self.keyword("and") {
            self.pos += 1;
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            RoleCondition::And(parts)
        })
    }

    fn unary(&mut self) -> Result<RoleCondition, ParseError> {
        if self.keyword("not") {
            self.pos += 1;
            return Ok(!self.unary()?);
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<RoleCondition, ParseError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(word)) if word == "true" => {
                self.pos += 1;
                Ok(RoleCondition::True)
            }
            Some(Tok::Ident(word)) if word == "false" => {
                self.pos += 1;
                Ok(RoleCondition::False)
            }
            Some(Tok::Ident(word)) if !matches!(word.as_str(), "and" | "or" | "not" | "in") => {
                self.pos += 1;
                let test = match self.peek() {
                    Some(Tok::EqEq) => {
                        self.pos += 1;
                        AtomTest::Eq(self.string()?)
                    }
                    Some(Tok::NotEq) => {
                        self.pos += 1;
                        AtomTest::Ne(self.string()?)
                    }
                    Some(Tok::Ident(kw)) if kw == "in" => {
                        self.pos += 1;
                        self.expect(Tok::LBracket, "`[`")?;
                        let mut values = vec![self.string()?];
                        while self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                            values.push(self.string()?);
                        }
                        self.expect(Tok::RBracket, "`,` or `]`")?;
                        AtomTest::In(values)
                    }
                    _ => return self.fail("`==`, `!=` or `in`"),
                };
                Ok(RoleCondition::Atom(Atom {
                    attribute: word,
                    test,
                }))
            }
            _ => self.fail("condition"),
        }
    }
}

pub fn parse_condition(text: &str) -> Result<RoleCondition, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let cond = p.expr()?;
    if p.pos != p.toks.len() {
        return p.fail("`and`, `or` or end of expression");
    }
    Ok(cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(pairs: &[(&str, &str)]) -> UserAttributes {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect()
    }

    #[test]
    fn parses_or_of_atoms() {
        let c = parse_condition(r#"role == "hr_manager" or division == "hr""#).unwrap();
        assert_eq!(
            c,
            RoleCondition::Or(vec![
                RoleCondition::eq("role", "hr_manager"),
                RoleCondition::eq("division", "hr")
            ])
        );
        // truth table over the two atoms
        for (role, division, want) in [
            (None, None, false),
            (Some("hr_manager"), None, true),
            (None, Some("hr"), true),
            (Some("clerk"), Some("it"), false),
            (Some("hr_manager"), Some("hr"), true),
        ] {
            let mut a = UserAttributes::default();
            if let Some(r) = role {
                a.insert("role", r);
            }
            if let Some(d) = division {
                a.insert("division", d);
            }
            assert_eq!(eval_condition(&c, &a), want, "{role:?} {division:?}");
        }
    }

    #[test]
    fn literals_and_not() {
        assert_eq!(parse_condition("true").unwrap(), RoleCondition::True);
        assert!(!eval_condition(&!RoleCondition::True, &attrs(&[])));
    }

    #[test]
    fn precedence_not_binds_tightest() {
        let c = parse_condition(r#"not a == "1" and b == "2" or c in ["3", "4"]"#).unwrap();
        assert_eq!(
            c,
            RoleCondition::Or(vec![
                RoleCondition::And(vec![
                    !RoleCondition::eq("a", "1"),
                    RoleCondition::eq("b", "2"),
                ]),
                RoleCondition::is_in("c", &["3", "4"]),
            ])
        );
    }

    #[test]
    fn missing_value_reports_position() {
        let err = parse_condition("role ==").unwrap_err();
        assert_eq!(err.position, 7);
        assert_eq!(err.expected, "quoted string value");
        assert_eq!(parse_condition("").unwrap_err().position, 0);
        assert!(parse_condition(r#"a in []"#).is_err());
        assert!(parse_condition(r#"(a == "x""#).is_err());
        assert!(parse_condition(r#"a == "x" b"#).is_err());
    }

    #[test]
    fn missing_attribute_denies() {
        let c = RoleCondition::eq("division", "hr");
        assert!(!eval_condition(&c, &attrs(&[])));
        assert!(!eval_condition(&RoleCondition::ne("division", "hr"), &attrs(&[])));
    }

    #[test]
    fn escapes_survive_rendering() {
        let c = RoleCondition::eq("note", "say \"hi\" \\o/");
        assert_eq!(parse_condition(&c.to_string()).unwrap(), c);
    }
}
