//! Propositional formulas over the four statement shapes used by the
//! generator (atom, negation, conditional, disjunction), a symbolic
//! parser/printer, and a truth-table entailment oracle.
//!
//! Symbolic grammar:
//!
//! ```text
//! formula := unary | unary "->" unary | unary "|" unary
//! unary   := atom | "~" unary | "(" unary ("->" | "|") unary ")"
//! atom    := [a-z] ([1-9][0-9]*)?
//! ```
//!
//! Binary connectives are parenthesised everywhere except at the top level.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::parallel::Parallelism;

/// Atom identifiers are opaque integers; the alias is derived from the id.
///
/// Ids `0..26` print as `a..z`; larger ids append the "round" number, so
/// `26` is `a1`, `27` is `b1` and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(pub u32);

impl Atom {
    pub fn alias(self) -> String {
        let letter = (b'a' + (self.0 % 26) as u8) as char;
        match self.0 / 26 {
            0 => letter.to_string(),
            round => format!("{letter}{round}"),
        }
    }

    pub fn from_alias(alias: &str) -> Option<Atom> {
        let bytes = alias.as_bytes();
        let first = *bytes.first()?;
        if !first.is_ascii_lowercase() {
            return None;
        }
        let letter = u32::from(first - b'a');
        let rest = &alias[1..];
        if rest.is_empty() {
            return Some(Atom(letter));
        }
        if rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let round: u32 = rest.parse().ok()?;
        round.checked_mul(26)?.checked_add(letter).map(Atom)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.alias())
    }
}

/// A propositional formula. There is deliberately no conjunction: premise
/// sets are passed around as lists instead.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(Atom),
    Negation(Box<Formula>),
    Conditional(Box<Formula>, Box<Formula>),
    Disjunction(Box<Formula>, Box<Formula>),
}

/// The outermost constructor of a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Atom,
    Negation,
    Conditional,
    Disjunction,
}

impl Formula {
    pub fn atom(id: u32) -> Formula {
        Formula::Atom(Atom(id))
    }

    pub fn negation(inner: Formula) -> Formula {
        Formula::Negation(Box::new(inner))
    }

    pub fn conditional(antecedent: Formula, consequent: Formula) -> Formula {
        Formula::Conditional(Box::new(antecedent), Box::new(consequent))
    }

    pub fn disjunction(left: Formula, right: Formula) -> Formula {
        Formula::Disjunction(Box::new(left), Box::new(right))
    }

    pub fn shape(&self) -> Shape {
        match self {
            Formula::Atom(_) => Shape::Atom,
            Formula::Negation(_) => Shape::Negation,
            Formula::Conditional(..) => Shape::Conditional,
            Formula::Disjunction(..) => Shape::Disjunction,
        }
    }

    /// Depth of connective nesting; atoms are 0, `~a` and `a -> b` are 1.
    pub fn nesting(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::Negation(inner) => 1 + inner.nesting(),
            Formula::Conditional(a, b) | Formula::Disjunction(a, b) => 1 + a.nesting().max(b.nesting()),
        }
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    pub fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Formula::Atom(a) => {
                out.insert(*a);
            }
            Formula::Negation(inner) => inner.collect_atoms(out),
            Formula::Conditional(a, b) | Formula::Disjunction(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Negates, collapsing a double negation instead of stacking another `~`.
    pub fn negated_normalized(&self) -> Formula {
        match self {
            Formula::Negation(inner) => (**inner).clone(),
            other => Formula::negation(other.clone()),
        }
    }

    /// Evaluates against a total assignment. Unassigned atoms read as false.
    pub fn eval(&self, assignment: &Assignment) -> bool {
        match self {
            Formula::Atom(a) => assignment.get(*a),
            Formula::Negation(inner) => !inner.eval(assignment),
            Formula::Conditional(a, b) => !a.eval(assignment) || b.eval(assignment),
            Formula::Disjunction(a, b) => a.eval(assignment) || b.eval(assignment),
        }
    }

    pub fn render(&self) -> String {
        render_symbolic(self)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_symbolic(self))
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&render_symbolic(self))
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_formula(&text).map_err(serde::de::Error::custom)
    }
}

/// Truth values for a set of atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    values: HashMap<Atom, bool>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, atom: Atom, value: bool) {
        self.values.insert(atom, value);
    }

    pub fn get(&self, atom: Atom) -> bool {
        self.values.get(&atom).copied().unwrap_or(false)
    }

    pub fn covers(&self, atoms: &BTreeSet<Atom>) -> bool {
        atoms.iter().all(|a| self.values.contains_key(a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let mut parser = Parser { src: text.as_bytes(), pos: 0 };
    let left = parser.unary()?;
    parser.skip_ws();
    let formula = match parser.connective() {
        Some(op) => {
            let right = parser.unary()?;
            op.build(left, right)
        }
        None => left,
    };
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(formula)
}

#[derive(Clone, Copy)]
enum Connective {
    Implies,
    Or,
}

impl Connective {
    fn build(self, left: Formula, right: Formula) -> Formula {
        match self {
            Connective::Implies => Formula::conditional(left, right),
            Connective::Or => Formula::disjunction(left, right),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn connective(&mut self) -> Option<Connective> {
        if self.src[self.pos..].starts_with(b"->") {
            self.pos += 2;
            Some(Connective::Implies)
        } else if self.peek() == Some(b'|') {
            self.pos += 1;
            Some(Connective::Or)
        } else {
            None
        }
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'~') => {
                self.pos += 1;
                Ok(Formula::negation(self.unary()?))
            }
            Some(b'(') => {
                self.pos += 1;
                let left = self.unary()?;
                self.skip_ws();
                let op = self.connective().ok_or_else(|| self.error("expected '->' or '|'"))?;
                let right = self.unary()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(op.build(left, right))
            }
            Some(c) if c.is_ascii_lowercase() => {
                let start = self.pos;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                Atom::from_alias(text)
                    .map(Formula::Atom)
                    .ok_or(ParseError { offset: start, message: format!("invalid atom `{text}`") })
            }
            Some(_) => Err(self.error("expected a formula")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

pub fn render_symbolic(f: &Formula) -> String {
    let mut out = String::new();
    match f {
        Formula::Conditional(a, b) => {
            write_nested(a, &mut out);
            out.push_str(" -> ");
            write_nested(b, &mut out);
        }
        Formula::Disjunction(a, b) => {
            write_nested(a, &mut out);
            out.push_str(" | ");
            write_nested(b, &mut out);
        }
        other => write_nested(other, &mut out),
    }
    out
}

fn write_nested(f: &Formula, out: &mut String) {
    match f {
        Formula::Atom(a) => out.push_str(&a.alias()),
        Formula::Negation(inner) => {
            out.push('~');
            write_nested(inner, out);
        }
        Formula::Conditional(a, b) => {
            out.push('(');
            write_nested(a, out);
            out.push_str(" -> ");
            write_nested(b, out);
            out.push(')');
        }
        Formula::Disjunction(a, b) => {
            out.push('(');
            write_nested(a, out);
            out.push_str(" | ");
            write_nested(b, out);
            out.push(')');
        }
    }
}

pub const DEFAULT_ORACLE_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("entailment check over {atoms} atoms exceeds the oracle cap of {cap}")]
    CapExceeded { atoms: usize, cap: usize },
}

/// Three-way relation between a premise set and a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Entailed,
    Contradicted,
    Independent,
}

/// Exhaustive truth-table oracle.
///
/// Assignments are enumerated 64 at a time: the first six atoms vary inside
/// a machine word, the remaining atoms are fixed per word.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub cap: usize,
    pub parallelism: Parallelism,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle { cap: DEFAULT_ORACLE_CAP, parallelism: Parallelism::default() }
    }
}

// Words per task below which enumeration stays on the calling thread.
const PAR_WORD_THRESHOLD: u64 = 1 << 12;

const LANE_PATTERNS: [u64; 6] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0xCCCC_CCCC_CCCC_CCCC,
    0xF0F0_F0F0_F0F0_F0F0,
    0xFF00_FF00_FF00_FF00,
    0xFFFF_0000_FFFF_0000,
    0xFFFF_FFFF_0000_0000,
];

enum Compiled {
    Var(usize),
    Not(Box<Compiled>),
    Implies(Box<Compiled>, Box<Compiled>),
    Or(Box<Compiled>, Box<Compiled>),
}

impl Compiled {
    fn new(f: &Formula, index: &HashMap<Atom, usize>) -> Compiled {
        match f {
            Formula::Atom(a) => Compiled::Var(index[a]),
            Formula::Negation(inner) => Compiled::Not(Box::new(Compiled::new(inner, index))),
            Formula::Conditional(a, b) => {
                Compiled::Implies(Box::new(Compiled::new(a, index)), Box::new(Compiled::new(b, index)))
            }
            Formula::Disjunction(a, b) => {
                Compiled::Or(Box::new(Compiled::new(a, index)), Box::new(Compiled::new(b, index)))
            }
        }
    }

    fn eval(&self, word: u64) -> u64 {
        match self {
            Compiled::Var(i) if *i < 6 => LANE_PATTERNS[*i],
            Compiled::Var(i) => 0u64.wrapping_sub((word >> (i - 6)) & 1),
            Compiled::Not(inner) => !inner.eval(word),
            Compiled::Implies(a, b) => !a.eval(word) | b.eval(word),
            Compiled::Or(a, b) => a.eval(word) | b.eval(word),
        }
    }
}

struct Table {
    premises: Vec<Compiled>,
    statement: Compiled,
    words: u64,
    valid: u64,
}

impl Table {
    /// Returns (some model of the premises makes the statement true,
    /// some model makes it false) restricted to one word of assignments.
    fn scan(&self, word: u64) -> (bool, bool) {
        let sat = self.premises.iter().fold(self.valid, |acc, p| acc & p.eval(word));
        if sat == 0 {
            return (false, false);
        }
        let s = self.statement.eval(word);
        (sat & s != 0, sat & !s != 0)
    }
}

impl Oracle {
    pub fn with_cap(cap: usize) -> Self {
        Oracle { cap, ..Oracle::default() }
    }

    pub fn parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    fn table(&self, premises: &[Formula], statement: &Formula) -> Result<Table, OracleError> {
        let mut atoms = BTreeSet::new();
        for p in premises {
            p.collect_atoms(&mut atoms);
        }
        statement.collect_atoms(&mut atoms);
        if atoms.len() > self.cap {
            return Err(OracleError::CapExceeded { atoms: atoms.len(), cap: self.cap });
        }
        let index: HashMap<Atom, usize> = atoms.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let n = atoms.len();
        let (words, valid) = if n >= 6 { (1u64 << (n - 6), u64::MAX) } else { (1, (1u64 << (1u32 << n)) - 1) };
        Ok(Table {
            premises: premises.iter().map(|p| Compiled::new(p, &index)).collect(),
            statement: Compiled::new(statement, &index),
            words,
            valid,
        })
    }

    /// True iff every assignment satisfying all premises satisfies the conclusion.
    pub fn entails(&self, premises: &[Formula], conclusion: &Formula) -> Result<bool, OracleError> {
        let table = self.table(premises, conclusion)?;
        let refuted = |w: u64| table.scan(w).1;
        let any_refutation = if self.parallelism.is_parallel() && table.words >= PAR_WORD_THRESHOLD {
            crate::parallel::any_in_range(table.words, refuted)
        } else {
            (0..table.words).any(refuted)
        };
        Ok(!any_refutation)
    }

    pub fn consistent_with(&self, premises: &[Formula], statement: &Formula) -> Result<Verdict, OracleError> {
        let table = self.table(premises, statement)?;
        let merge = |a: (bool, bool), b: (bool, bool)| (a.0 || b.0, a.1 || b.1);
        let (can_be_true, can_be_false) = if self.parallelism.is_parallel() && table.words >= PAR_WORD_THRESHOLD {
            crate::parallel::fold_range(table.words, (false, false), |w| table.scan(w), merge)
        } else {
            (0..table.words).map(|w| table.scan(w)).fold((false, false), merge)
        };
        // With unsatisfiable premises both flags stay false and everything is entailed.
        Ok(match (can_be_true, can_be_false) {
            (_, false) => Verdict::Entailed,
            (false, true) => Verdict::Contradicted,
            (true, true) => Verdict::Independent,
        })
    }
}

pub fn entails(premises: &[Formula], conclusion: &Formula) -> Result<bool, OracleError> {
    Oracle::default().entails(premises, conclusion)
}

pub fn consistent_with(premises: &[Formula], statement: &Formula) -> Result<Verdict, OracleError> {
    Oracle::default().consistent_with(premises, statement)
}
