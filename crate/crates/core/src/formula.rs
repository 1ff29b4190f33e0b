//! Model formulas such as `~ x1 + x2 + x1:x2 + P(x1, 2)`.
//!
//! ```text
//! formula := "~" term ("+" term)*
//! term    := "1" | ident | ident ":" ident | "P(" ident "," integer ")"
//! ```
//!
//! The intercept is always part of the model; a literal `1` is accepted and
//! adds nothing.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSpec, TimeBounds};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Main(String),
    Interaction(String, String),
    Polynomial(String, usize),
}

impl Term {
    fn same_effect(&self, other: &Term) -> bool {
        match (self, other) {
            (Term::Interaction(a, b), Term::Interaction(c, d)) => {
                (a == c && b == d) || (a == d && b == c)
            }
            _ => self == other,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Main(x) => write!(f, "{x}"),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
            Term::Polynomial(x, d) => write!(f, "P({x}, {d})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaAst {
    pub include_intercept: bool,
    pub terms: Vec<Term>,
}

impl fmt::Display for FormulaAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "~ 1")?;
        for t in &self.terms {
            write!(f, " + {t}")?;
        }
        Ok(())
    }
}

pub fn parse_formula(text: &str) -> Result<FormulaAst> {
    Parser::new(text).formula()
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    idx: usize,
    len: usize,
    _text: &'a str,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.char_indices().collect(),
            idx: 0,
            len: text.len(),
            _text: text,
        }
    }

    fn pos(&self) -> usize {
        self.chars.get(self.idx).map_or(self.len, |c| c.0)
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.idx).is_some_and(|c| c.1.is_whitespace()) {
            self.idx += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.idx).map(|c| c.1)
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == want => {
                self.idx += 1;
                Ok(())
            }
            Some(c) => self.error(format!("expected '{want}', found '{c}'")),
            None => self.error(format!("expected '{want}', found end of input")),
        }
    }

    fn formula(mut self) -> Result<FormulaAst> {
        self.expect('~')?;
        let mut terms: Vec<Term> = Vec::new();
        loop {
            let start = self.pos();
            if let Some(term) = self.term()? {
                if terms.iter().any(|t| t.same_effect(&term)) {
                    return Err(Error::Syntax {
                        pos: start,
                        msg: format!("duplicate term '{term}'"),
                    });
                }
                terms.push(term);
            }
            match self.peek() {
                None => break,
                Some('+') => self.idx += 1,
                Some(c) => return self.error(format!("expected '+' or end of formula, found '{c}'")),
            }
        }
        Ok(FormulaAst {
            include_intercept: true,
            terms,
        })
    }

    /// `None` for the intercept literal.
    fn term(&mut self) -> Result<Option<Term>> {
        match self.peek() {
            Some('1') => {
                self.idx += 1;
                if self.chars.get(self.idx).is_some_and(|c| c.1.is_ascii_digit()) {
                    return self.error("only the literal 1 is allowed as a numeric term");
                }
                Ok(None)
            }
            Some(c) if is_ident_start(c) => {
                let name = self.ident()?;
                match self.peek() {
                    Some('(') if name == "P" => {
                        self.idx += 1;
                        let factor = self.ident()?;
                        self.expect(',')?;
                        let deg_pos = {
                            self.skip_ws();
                            self.pos()
                        };
                        let deg = self.integer()?;
                        self.expect(')')?;
                        if deg < 2 {
                            return Err(Error::Syntax {
                                pos: deg_pos,
                                msg: format!(
                                    "polynomial degree must be at least 2, got {deg} (use a main effect for degree 1)"
                                ),
                            });
                        }
                        Ok(Some(Term::Polynomial(factor, deg)))
                    }
                    Some(':') => {
                        self.idx += 1;
                        let rhs_pos = {
                            self.skip_ws();
                            self.pos()
                        };
                        let rhs = self.ident()?;
                        if rhs == name {
                            return Err(Error::Syntax {
                                pos: rhs_pos,
                                msg: format!("interaction of '{name}' with itself; use P({name}, 2)"),
                            });
                        }
                        Ok(Some(Term::Interaction(name, rhs)))
                    }
                    _ => Ok(Some(Term::Main(name))),
                }
            }
            Some(c) => self.error(format!("expected a term, found '{c}'")),
            None => self.error("expected a term, found end of input"),
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let mut out = String::new();
        match self.chars.get(self.idx) {
            Some(&(_, c)) if is_ident_start(c) => {}
            _ => return self.error("expected a factor name"),
        }
        while let Some(&(_, c)) = self.chars.get(self.idx) {
            if is_ident_char(c) {
                out.push(c);
                self.idx += 1;
            } else {
                break;
            }
        }
        Ok(out)
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let mut digits = String::new();
        while let Some(&(_, c)) = self.chars.get(self.idx) {
            if c.is_ascii_digit() {
                digits.push(c);
                self.idx += 1;
            } else {
                break;
            }
        }
        if digits.is_empty() {
            return self.error("expected an integer degree");
        }
        digits
            .parse()
            .or_else(|_| self.error(format!("degree '{digits}' is out of range")))
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

/// A controllable factor: its name and the basis its coefficient rows expand.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub name: String,
    pub basis: BasisSpec,
}

/// Parameter basis for one formula term, before binding to a time interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub family: BasisFamily,
    pub degree: usize,
    #[serde(default)]
    pub knots: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Intercept,
    Main { factor: usize },
    /// `left < right` in factor declaration order.
    Interaction { left: usize, right: usize },
    Polynomial { factor: usize, degree: usize },
}

impl TermKind {
    /// Factor index for each slot of the Kronecker product, in order.
    pub fn factor_slots(&self) -> Vec<usize> {
        match *self {
            TermKind::Intercept => Vec::new(),
            TermKind::Main { factor } => vec![factor],
            TermKind::Interaction { left, right } => vec![left, right],
            TermKind::Polynomial { factor, degree } => vec![factor; degree],
        }
    }

    pub fn involves(&self, factor: usize) -> bool {
        self.factor_slots().contains(&factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundTerm {
    pub kind: TermKind,
    pub param: BasisSpec,
}

impl BoundTerm {
    pub fn dimension(&self) -> usize {
        self.param.dimension()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermList {
    terms: Vec<BoundTerm>,
    tbounds: TimeBounds,
}

impl TermList {
    pub fn terms(&self) -> &[BoundTerm] {
        &self.terms
    }

    pub fn tbounds(&self) -> TimeBounds {
        self.tbounds
    }

    /// Number of terms including the intercept.
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn num_params(&self) -> usize {
        self.terms.iter().map(BoundTerm::dimension).sum()
    }

    pub fn param_dims(&self) -> Vec<usize> {
        self.terms.iter().map(BoundTerm::dimension).collect()
    }
}

/// Bind every formula term to its factors and parameter basis.
///
/// `params` covers the non-intercept terms in formula order; the intercept
/// always gets the constant basis.
pub fn expand_terms(
    ast: &FormulaAst,
    factors: &[FactorSpec],
    params: &[ParamSpec],
    tbounds: TimeBounds,
) -> Result<TermList> {
    if params.len() != ast.terms.len() {
        return Err(Error::Config(format!(
            "formula has {} non-intercept terms but {} parameter bases were given",
            ast.terms.len(),
            params.len()
        )));
    }
    for f in factors {
        if f.basis.tbounds() != tbounds {
            return Err(Error::Config(format!(
                "factor '{}' is defined on a different time interval",
                f.name
            )));
        }
    }
    let lookup = |name: &str| -> Result<usize> {
        factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::Config(format!("unknown factor '{name}' in formula")))
    };

    let mut terms = Vec::with_capacity(ast.terms.len() + 1);
    terms.push(BoundTerm {
        kind: TermKind::Intercept,
        param: BasisSpec::constant(tbounds),
    });
    for (term, spec) in ast.terms.iter().zip(params) {
        let kind = match term {
            Term::Main(x) => TermKind::Main { factor: lookup(x)? },
            Term::Interaction(a, b) => {
                let (a, b) = (lookup(a)?, lookup(b)?);
                TermKind::Interaction {
                    left: a.min(b),
                    right: a.max(b),
                }
            }
            Term::Polynomial(x, d) => TermKind::Polynomial {
                factor: lookup(x)?,
                degree: *d,
            },
        };
        if terms.iter().any(|t: &BoundTerm| t.kind == kind) {
            return Err(Error::Config(format!("duplicate term '{term}'")));
        }
        let param = BasisSpec::new(spec.family, spec.degree, spec.knots.clone(), tbounds)?;
        terms.push(BoundTerm { kind, param });
    }
    Ok(TermList { terms, tbounds })
}
