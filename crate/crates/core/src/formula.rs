//! Model formulas of the form `resp ~ a + b * c + d:e`.
//!
//! `a * b` expands to `a + b + a:b`; longer chains expand to every
//! non-empty subset of their factors, lower orders first. Duplicate terms
//! are collapsed keeping the first occurrence. The intercept is always
//! present; `1` may be written explicitly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model term: one variable for a main effect, several for an interaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term(Vec<String>);

impl Term {
    pub fn new<S: Into<String>>(vars: impl IntoIterator<Item = S>) -> Self {
        let mut out: Vec<String> = Vec::new();
        for v in vars {
            let v = v.into();
            if !out.contains(&v) {
                out.push(v);
            }
        }
        Term(out)
    }

    pub fn vars(&self) -> &[String] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn contains_var(&self, var: &str) -> bool {
        self.0.iter().any(|v| v == var)
    }

    /// True when every variable of `self` is in `other` and `other` is larger.
    pub fn is_strictly_contained_in(&self, other: &Term) -> bool {
        other.order() > self.order() && self.0.iter().all(|v| other.contains_var(v))
    }

    pub fn label(&self) -> String {
        self.0.join(":")
    }

    fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.0.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.sorted() == other.sorted()
    }
}

impl Eq for Term {}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Formula {
    pub response: String,
    pub terms: Vec<Term>,
    pub intercept: bool,
    source: String,
}

impl Formula {
    /// The text as written, used to echo the formula in reports.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Right-hand side as written, e.g. `block + water * pot`.
    pub fn rhs_source(&self) -> &str {
        self.source
            .split_once('~')
            .map(|(_, r)| r.trim())
            .unwrap_or("")
    }

    /// Distinct explanatory variables in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.terms {
            for v in t.vars() {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.response == other.response
            && self.terms == other.terms
            && self.intercept == other.intercept
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_formula(s)
    }
}

impl TryFrom<String> for Formula {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_formula(&s)
    }
}

impl From<Formula> for String {
    fn from(f: Formula) -> String {
        f.source
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    One,
    Tilde,
    Plus,
    Star,
    Colon,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '~' | '+' | '*' | ':' => {
                chars.next();
                let t = match c {
                    '~' => Tok::Tilde,
                    '+' => Tok::Plus,
                    '*' => Tok::Star,
                    _ => Tok::Colon,
                };
                toks.push((pos, t));
            }
            c if is_ident_start(c) => {
                let mut end = pos;
                while let Some(&(p, ch)) = chars.peek() {
                    if !is_ident_char(ch) {
                        break;
                    }
                    end = p + ch.len_utf8();
                    chars.next();
                }
                toks.push((pos, Tok::Ident(text[pos..end].to_string())));
            }
            c if c.is_ascii_digit() => {
                let mut end = pos;
                while let Some(&(p, ch)) = chars.peek() {
                    if !ch.is_ascii_digit() {
                        break;
                    }
                    end = p + 1;
                    chars.next();
                }
                if &text[pos..end] != "1" {
                    return Err(Error::Syntax {
                        offset: pos,
                        message: format!("unexpected number '{}'", &text[pos..end]),
                    });
                }
                toks.push((pos, Tok::One));
            }
            '-' | '/' | '^' | '|' | '%' | '(' | ')' | '=' | '<' | '>' | '!' | '&' | '$' => {
                return Err(Error::UnknownOperator { offset: pos, op: c });
            }
            _ => {
                return Err(Error::Syntax {
                    offset: pos,
                    message: format!("unexpected character '{c}'"),
                })
            }
        }
    }
    Ok(toks)
}

/// Parse a formula; `*` is expanded and duplicate terms collapsed.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let toks = tokenize(text)?;
    let end = text.len();
    let mut it = toks.iter().peekable();

    let response = match it.next() {
        Some((_, Tok::Ident(name))) => name.clone(),
        Some((pos, _)) => {
            return Err(Error::Syntax {
                offset: *pos,
                message: "expected response name".into(),
            })
        }
        None => {
            return Err(Error::Syntax {
                offset: 0,
                message: "empty formula".into(),
            })
        }
    };
    match it.next() {
        Some((_, Tok::Tilde)) => {}
        Some((pos, _)) => {
            return Err(Error::Syntax {
                offset: *pos,
                message: "expected '~'".into(),
            })
        }
        None => {
            return Err(Error::Syntax {
                offset: end,
                message: "expected '~'".into(),
            })
        }
    }

    let mut terms: Vec<Term> = Vec::new();
    let mut last_op: Option<(usize, &Tok)> = None;
    loop {
        // one product: atom (('*' | ':') atom)*, split by '*' into groups
        let mut groups: Vec<Vec<String>> = Vec::new();
        let mut current: Vec<String> = Vec::new();
        let mut saw_one = false;
        loop {
            match it.next() {
                Some((_, Tok::Ident(name))) => current.push(name.clone()),
                Some((pos, Tok::One)) => {
                    if !current.is_empty() || !groups.is_empty() {
                        return Err(Error::Syntax {
                            offset: *pos,
                            message: "'1' cannot appear inside an interaction".into(),
                        });
                    }
                    saw_one = true;
                }
                Some((pos, tok)) => {
                    return Err(Error::Syntax {
                        offset: *pos,
                        message: format!("expected a variable, found {}", describe(tok)),
                    })
                }
                None => {
                    let (offset, op) = last_op.map(|(p, t)| (p, describe(t))).unwrap_or((end, "'~'".into()));
                    return Err(Error::Syntax {
                        offset,
                        message: format!("expected a term after {op}"),
                    });
                }
            }
            match it.peek() {
                Some((pos, Tok::Colon)) | Some((pos, Tok::Star)) if saw_one => {
                    return Err(Error::Syntax {
                        offset: *pos,
                        message: "'1' cannot appear inside an interaction".into(),
                    });
                }
                Some((pos, tok @ Tok::Colon)) => {
                    last_op = Some((*pos, tok));
                    it.next();
                }
                Some((pos, tok @ Tok::Star)) => {
                    last_op = Some((*pos, tok));
                    groups.push(std::mem::take(&mut current));
                    it.next();
                }
                _ => break,
            }
        }
        if !saw_one {
            groups.push(current);
            for term in expand_product(&groups) {
                if !terms.contains(&term) {
                    terms.push(term);
                }
            }
        }
        match it.next() {
            Some((pos, tok @ Tok::Plus)) => last_op = Some((*pos, tok)),
            Some((pos, tok)) => {
                return Err(Error::Syntax {
                    offset: *pos,
                    message: format!("unexpected {}", describe(tok)),
                })
            }
            None => break,
        }
    }

    Ok(Formula {
        response,
        terms,
        intercept: true,
        source: text.trim().to_string(),
    })
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::One => "'1'".into(),
        Tok::Tilde => "'~'".into(),
        Tok::Plus => "'+'".into(),
        Tok::Star => "'*'".into(),
        Tok::Colon => "':'".into(),
    }
}

/// All non-empty subsets of the `*`-separated groups, by size then position.
fn expand_product(groups: &[Vec<String>]) -> Vec<Term> {
    let m = groups.len();
    let mut subsets: Vec<Vec<usize>> = (1u32..(1u32 << m))
        .map(|mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|s| Term::new(s.into_iter().flat_map(|i| groups[i].iter().cloned())))
        .collect()
}
