//! The seven argument-form schemas and backward instantiation from a target
//! conclusion.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{Atom, Formula, Oracle, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgumentForm {
    ModusPonens,
    ModusTollens,
    HypotheticalSyllogism,
    DisjunctiveSyllogism,
    ReductioAdAbsurdum,
    ConstructiveDilemma,
    DisjunctionElimination,
}

/// Metavariables of the schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Meta {
    P,
    Q,
    R,
    S,
}

impl Meta {
    const ALL: [Meta; 4] = [Meta::P, Meta::Q, Meta::R, Meta::S];

    fn index(self) -> usize {
        self as usize
    }
}

/// A formula template over metavariables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Var(Meta),
    Not(Box<Pattern>),
    Implies(Box<Pattern>, Box<Pattern>),
    Or(Box<Pattern>, Box<Pattern>),
}

fn var(m: Meta) -> Pattern {
    Pattern::Var(m)
}

fn not(p: Pattern) -> Pattern {
    Pattern::Not(Box::new(p))
}

fn implies(a: Pattern, b: Pattern) -> Pattern {
    Pattern::Implies(Box::new(a), Box::new(b))
}

fn or(a: Pattern, b: Pattern) -> Pattern {
    Pattern::Or(Box::new(a), Box::new(b))
}

/// Partial substitution of formulas for metavariables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings([Option<Formula>; 4]);

impl Bindings {
    pub fn get(&self, m: Meta) -> Option<&Formula> {
        self.0[m.index()].as_ref()
    }

    pub fn bind(&mut self, m: Meta, f: Formula) {
        self.0[m.index()] = Some(f);
    }
}

impl Pattern {
    /// Extends `bindings` so the pattern matches `f`; returns false (with
    /// `bindings` possibly partially extended) on mismatch.
    pub fn unify(&self, f: &Formula, bindings: &mut Bindings) -> bool {
        match (self, f) {
            (Pattern::Var(m), f) => match bindings.get(*m) {
                Some(bound) => bound == f,
                None => {
                    bindings.bind(*m, f.clone());
                    true
                }
            },
            (Pattern::Not(p), Formula::Negation(inner)) => p.unify(inner, bindings),
            (Pattern::Implies(pa, pb), Formula::Conditional(a, b))
            | (Pattern::Or(pa, pb), Formula::Disjunction(a, b)) => pa.unify(a, bindings) && pb.unify(b, bindings),
            _ => false,
        }
    }

    /// Instantiates the pattern; every metavariable must be bound.
    pub fn substitute(&self, bindings: &Bindings) -> Formula {
        match self {
            Pattern::Var(m) => bindings.get(*m).cloned().unwrap_or_else(|| panic!("metavariable {m:?} unbound")),
            Pattern::Not(p) => Formula::negation(p.substitute(bindings)),
            Pattern::Implies(a, b) => Formula::conditional(a.substitute(bindings), b.substitute(bindings)),
            Pattern::Or(a, b) => Formula::disjunction(a.substitute(bindings), b.substitute(bindings)),
        }
    }

    fn metas(&self, out: &mut BTreeSet<Meta>) {
        match self {
            Pattern::Var(m) => {
                out.insert(*m);
            }
            Pattern::Not(p) => p.metas(out),
            Pattern::Implies(a, b) | Pattern::Or(a, b) => {
                a.metas(out);
                b.metas(out);
            }
        }
    }
}

/// Premise templates (in table row order) and conclusion template.
#[derive(Debug, Clone)]
pub struct Schema {
    pub premises: Vec<Pattern>,
    pub conclusion: Pattern,
}

/// What a target conclusion must look like for a form to derive it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConclusionShape {
    Any,
    Negation,
    Conditional,
    Disjunction,
}

impl ConclusionShape {
    pub fn admits(self, shape: Shape) -> bool {
        match self {
            ConclusionShape::Any => true,
            ConclusionShape::Negation => shape == Shape::Negation,
            ConclusionShape::Conditional => shape == Shape::Conditional,
            ConclusionShape::Disjunction => shape == Shape::Disjunction,
        }
    }
}

impl ArgumentForm {
    pub const ALL: [ArgumentForm; 7] = [
        ArgumentForm::ModusPonens,
        ArgumentForm::ModusTollens,
        ArgumentForm::HypotheticalSyllogism,
        ArgumentForm::DisjunctiveSyllogism,
        ArgumentForm::ReductioAdAbsurdum,
        ArgumentForm::ConstructiveDilemma,
        ArgumentForm::DisjunctionElimination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArgumentForm::ModusPonens => "modus_ponens",
            ArgumentForm::ModusTollens => "modus_tollens",
            ArgumentForm::HypotheticalSyllogism => "hypothetical_syllogism",
            ArgumentForm::DisjunctiveSyllogism => "disjunctive_syllogism",
            ArgumentForm::ReductioAdAbsurdum => "reductio_ad_absurdum",
            ArgumentForm::ConstructiveDilemma => "constructive_dilemma",
            ArgumentForm::DisjunctionElimination => "disjunction_elimination",
        }
    }

    /// Display title as used in prompts.
    pub fn title(self) -> &'static str {
        match self {
            ArgumentForm::ModusPonens => "Modus Ponens",
            ArgumentForm::ModusTollens => "Modus Tollens",
            ArgumentForm::HypotheticalSyllogism => "Hypothetical Syllogism",
            ArgumentForm::DisjunctiveSyllogism => "Disjunctive Syllogism",
            ArgumentForm::ReductioAdAbsurdum => "Reductio ad absurdum",
            ArgumentForm::ConstructiveDilemma => "Constructive Dilemma",
            ArgumentForm::DisjunctionElimination => "Disjunction Elimination",
        }
    }

    pub fn schema(self) -> Schema {
        use Meta::*;
        let (premises, conclusion) = match self {
            ArgumentForm::ModusPonens => (vec![implies(var(P), var(Q)), var(P)], var(Q)),
            ArgumentForm::ModusTollens => (vec![implies(var(P), var(Q)), not(var(Q))], not(var(P))),
            ArgumentForm::HypotheticalSyllogism => {
                (vec![implies(var(P), var(Q)), implies(var(Q), var(R))], implies(var(P), var(R)))
            }
            ArgumentForm::DisjunctiveSyllogism => (vec![or(var(P), var(Q)), not(var(P))], var(Q)),
            ArgumentForm::ReductioAdAbsurdum => {
                (vec![implies(var(P), var(Q)), implies(var(P), not(var(Q)))], not(var(P)))
            }
            ArgumentForm::ConstructiveDilemma => {
                (vec![or(var(P), var(Q)), implies(var(P), var(R)), implies(var(Q), var(S))], or(var(R), var(S)))
            }
            ArgumentForm::DisjunctionElimination => {
                (vec![or(var(P), var(Q)), implies(var(P), var(R)), implies(var(Q), var(R))], var(R))
            }
        };
        Schema { premises, conclusion }
    }

    pub fn conclusion_shape(self) -> ConclusionShape {
        match self.schema().conclusion {
            Pattern::Var(_) => ConclusionShape::Any,
            Pattern::Not(_) => ConclusionShape::Negation,
            Pattern::Implies(..) => ConclusionShape::Conditional,
            Pattern::Or(..) => ConclusionShape::Disjunction,
        }
    }

    pub fn can_conclude(self, target: &Formula) -> bool {
        self.conclusion_shape().admits(target.shape())
    }

    /// Forms able to conclude a formula of the given shape, in declaration order.
    pub fn concluding(shape: Shape) -> Vec<ArgumentForm> {
        ArgumentForm::ALL.into_iter().filter(|f| f.conclusion_shape().admits(shape)).collect()
    }
}

impl fmt::Display for ArgumentForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown argument form `{0}`")]
pub struct UnknownForm(pub String);

impl FromStr for ArgumentForm {
    type Err = UnknownForm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArgumentForm::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| UnknownForm(s.to_string()))
    }
}

/// Hands out atoms that have never been handed out before.
#[derive(Debug, Clone, Default)]
pub struct AtomAllocator {
    next: u32,
}

impl AtomAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    /// An allocator whose output is disjoint from every atom in `formulas`.
    pub fn above<'a>(formulas: impl IntoIterator<Item = &'a Formula>) -> Self {
        let next = formulas.into_iter().flat_map(|f| f.atoms()).map(|a| a.0 + 1).max().unwrap_or(0);
        AtomAllocator { next }
    }

    pub fn fresh(&mut self) -> Atom {
        let atom = Atom(self.next);
        self.next += 1;
        atom
    }

    /// Number of atoms allocated so far (including any reserved by `above`).
    pub fn allocated(&self) -> u32 {
        self.next
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InferenceStep {
    pub form: ArgumentForm,
    pub premises: Vec<Formula>,
    pub conclusion: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{form} cannot conclude `{target}`: it derives {expected:?} conclusions, got a {actual:?}")]
pub struct ShapeMismatch {
    pub form: ArgumentForm,
    pub target: String,
    pub expected: ConclusionShape,
    pub actual: Shape,
}

/// Instantiates `form` so that its conclusion is exactly `target`; free
/// metavariables receive fresh atoms from `fresh`.
pub fn instantiate_for_conclusion(
    form: ArgumentForm,
    target: &Formula,
    fresh: &mut AtomAllocator,
) -> Result<InferenceStep, ShapeMismatch> {
    let schema = form.schema();
    let mut bindings = Bindings::default();
    if !schema.conclusion.unify(target, &mut bindings) {
        return Err(ShapeMismatch {
            form,
            target: target.render(),
            expected: form.conclusion_shape(),
            actual: target.shape(),
        });
    }
    let mut used = BTreeSet::new();
    for p in &schema.premises {
        p.metas(&mut used);
    }
    for m in Meta::ALL {
        if used.contains(&m) && bindings.get(m).is_none() {
            bindings.bind(m, Formula::Atom(fresh.fresh()));
        }
    }
    Ok(InferenceStep {
        form,
        premises: schema.premises.iter().map(|p| p.substitute(&bindings)).collect(),
        conclusion: target.clone(),
    })
}

/// True iff the step has its form's exact premise/conclusion layout under a
/// single substitution.
pub fn matches_schema(step: &InferenceStep) -> bool {
    let schema = step.form.schema();
    if schema.premises.len() != step.premises.len() {
        return false;
    }
    let mut bindings = Bindings::default();
    schema.conclusion.unify(&step.conclusion, &mut bindings)
        && schema.premises.iter().zip(&step.premises).all(|(p, f)| p.unify(f, &mut bindings))
}

/// Syntactic match against the schema plus a semantic entailment check.
pub fn validate_step(step: &InferenceStep) -> bool {
    validate_step_with(step, &Oracle::default())
}

pub fn validate_step_with(step: &InferenceStep, oracle: &Oracle) -> bool {
    matches_schema(step) && oracle.entails(&step.premises, &step.conclusion).unwrap_or(false)
}
