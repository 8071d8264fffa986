//! Depth-targeted backward construction of argument structures.
//!
//! Generation starts from a random conclusion, picks a form able to derive
//! it, and then keeps turning one premise of the newest step into a
//! sub-conclusion supported by another random form until the requested
//! depth is reached.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{instantiate_for_conclusion, ArgumentForm, AtomAllocator, InferenceStep};
use crate::logic::Formula;

/// Per-instance random stream.
pub type GenRng = ChaCha8Rng;

/// Identifies one instance's random stream.
///
/// The stream is ChaCha8 keyed by `seed` with the 64-bit stream id set to
/// `instance_index`, so every instance owns an independent, counter-based
/// sequence regardless of which thread generates it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenSeed {
    pub seed: u64,
    pub instance_index: u64,
}

impl GenSeed {
    pub fn new(seed: u64, instance_index: u64) -> Self {
        GenSeed { seed, instance_index }
    }

    pub fn stream(self) -> GenRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.instance_index);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureConfig {
    pub max_depth: usize,
    /// Upper bound on connective nesting of any generated premise.
    pub max_nesting: usize,
    /// Also expand non-chain premises into shorter side derivations.
    pub branching: bool,
    /// Allow conditional and disjunction root conclusions.
    pub compound_roots: bool,
    /// Side derivations are only added while the structure stays within
    /// this many atoms.
    pub atom_budget: usize,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig { max_depth: 10, max_nesting: 3, branching: false, compound_roots: false, atom_budget: 19 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("depth {depth} is outside 1..={max}")]
    DepthOutOfRange { depth: usize, max: usize },
}

/// A tree of inference steps. `steps[0]` derives the final conclusion;
/// `support[i][j]` names the step that derives premise `j` of step `i`,
/// or `None` when that premise is a leaf stated in the paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentStructure {
    pub final_conclusion: Formula,
    pub steps: Vec<InferenceStep>,
    pub support: Vec<Vec<Option<usize>>>,
    pub leaf_premises: Vec<Formula>,
}

impl ArgumentStructure {
    pub fn root_form(&self) -> ArgumentForm {
        self.steps[0].form
    }

    /// Forms in step order (root first).
    pub fn forms(&self) -> Vec<ArgumentForm> {
        self.steps.iter().map(|s| s.form).collect()
    }

    pub fn depth(&self) -> usize {
        measure_depth(self)
    }

    /// Unsupported premises recomputed from `steps` and `support`, or
    /// `None` when the support table is not a tree rooted at `steps[0]`.
    pub fn leaves(&self) -> Option<Vec<Formula>> {
        self.support_is_tree().then(|| Self::collect_leaves(&self.steps, &self.support))
    }

    /// Leaf premises in derivation order: a premise derived by a sub-step is
    /// replaced in place by that sub-step's leaves.
    fn collect_leaves(steps: &[InferenceStep], support: &[Vec<Option<usize>>]) -> Vec<Formula> {
        fn walk(i: usize, steps: &[InferenceStep], support: &[Vec<Option<usize>>], out: &mut Vec<Formula>) {
            for (j, premise) in steps[i].premises.iter().enumerate() {
                match support[i][j] {
                    Some(child) => walk(child, steps, support, out),
                    None => out.push(premise.clone()),
                }
            }
        }
        let mut out = Vec::new();
        if !steps.is_empty() {
            walk(0, steps, support, &mut out);
        }
        out
    }

    /// Checks the tree invariants: every support link points at a distinct
    /// later step concluding exactly that premise, every step but the root
    /// is referenced once, and the stored leaves are the unsupported premises.
    pub fn is_well_formed(&self) -> bool {
        self.support_is_tree() && Self::collect_leaves(&self.steps, &self.support) == self.leaf_premises
    }

    fn support_is_tree(&self) -> bool {
        if self.steps.is_empty() || self.support.len() != self.steps.len() {
            return false;
        }
        if self.steps[0].conclusion != self.final_conclusion {
            return false;
        }
        let mut referenced = vec![0usize; self.steps.len()];
        for (i, step) in self.steps.iter().enumerate() {
            if self.support[i].len() != step.premises.len() {
                return false;
            }
            for (j, link) in self.support[i].iter().enumerate() {
                if let Some(child) = *link {
                    if child <= i || child >= self.steps.len() {
                        return false;
                    }
                    if self.steps[child].conclusion != step.premises[j] {
                        return false;
                    }
                    referenced[child] += 1;
                }
            }
        }
        referenced[0] == 0 && referenced[1..].iter().all(|&r| r == 1)
    }
}

/// Length of the longest chain of steps from a leaf premise to the final
/// conclusion.
pub fn measure_depth(s: &ArgumentStructure) -> usize {
    fn depth_of(i: usize, s: &ArgumentStructure) -> usize {
        1 + s.support[i].iter().flatten().map(|&child| depth_of(child, s)).max().unwrap_or(0)
    }
    if s.steps.is_empty() {
        0
    } else {
        depth_of(0, s)
    }
}

struct Builder<'a, R: Rng> {
    rng: &'a mut R,
    config: &'a StructureConfig,
    alloc: AtomAllocator,
    steps: Vec<InferenceStep>,
    support: Vec<Vec<Option<usize>>>,
}

impl<R: Rng> Builder<'_, R> {
    /// Forms that can derive `target` without any premise exceeding the
    /// nesting bound.
    fn viable_forms(&self, target: &Formula) -> Vec<ArgumentForm> {
        ArgumentForm::concluding(target.shape())
            .into_iter()
            .filter(|&form| {
                let mut probe = self.alloc.clone();
                instantiate_for_conclusion(form, target, &mut probe)
                    .map(|s| s.premises.iter().all(|p| p.nesting() <= self.config.max_nesting))
                    .unwrap_or(false)
            })
            .collect()
    }

    /// Adds a derivation of `target` that is exactly `depth` steps deep and
    /// returns the index of its top step.
    fn derive(&mut self, target: &Formula, depth: usize, allow_branches: bool) -> usize {
        let forms = self.viable_forms(target);
        let form = *forms.choose(self.rng).expect("every premise shape has a nesting-preserving form");
        let step = instantiate_for_conclusion(form, target, &mut self.alloc).expect("viable form unifies with target");
        let index = self.steps.len();
        let premises = step.premises.clone();
        self.steps.push(step);
        self.support.push(vec![None; premises.len()]);
        if depth == 1 {
            return index;
        }

        let expandable: Vec<usize> =
            (0..premises.len()).filter(|&j| !self.viable_forms(&premises[j]).is_empty()).collect();
        let chain = *expandable.choose(self.rng).expect("at least one premise can be expanded");
        let child = self.derive(&premises[chain], depth - 1, allow_branches);
        self.support[index][chain] = Some(child);

        if allow_branches {
            for &j in expandable.iter().filter(|&&j| j != chain) {
                if !self.rng.gen_bool(0.5) {
                    continue;
                }
                let side_depth = self.rng.gen_range(1..depth);
                // a single-chain derivation introduces at most two atoms per step
                let worst_case = self.alloc.allocated() as usize + 2 * side_depth;
                if worst_case > self.config.atom_budget {
                    continue;
                }
                let child = self.derive(&premises[j], side_depth, false);
                self.support[index][j] = Some(child);
            }
        }
        index
    }
}

fn random_root<R: Rng>(rng: &mut R, alloc: &mut AtomAllocator, compound: bool) -> Formula {
    let shapes = if compound { 4 } else { 2 };
    match rng.gen_range(0..shapes) {
        0 => Formula::Atom(alloc.fresh()),
        1 => Formula::negation(Formula::Atom(alloc.fresh())),
        2 => Formula::conditional(Formula::Atom(alloc.fresh()), Formula::Atom(alloc.fresh())),
        _ => Formula::disjunction(Formula::Atom(alloc.fresh()), Formula::Atom(alloc.fresh())),
    }
}

pub fn generate_structure<R: Rng>(
    depth: usize,
    rng: &mut R,
    config: &StructureConfig,
) -> Result<ArgumentStructure, StructureError> {
    if depth == 0 || depth > config.max_depth {
        return Err(StructureError::DepthOutOfRange { depth, max: config.max_depth });
    }
    let mut alloc = AtomAllocator::new();
    let root = random_root(rng, &mut alloc, config.compound_roots);
    let mut builder = Builder { rng, config, alloc, steps: Vec::new(), support: Vec::new() };
    builder.derive(&root, depth, config.branching);
    let leaf_premises = ArgumentStructure::collect_leaves(&builder.steps, &builder.support);
    Ok(ArgumentStructure { final_conclusion: root, steps: builder.steps, support: builder.support, leaf_premises })
}

/// The premises shown to the solver: leaves only, optionally shuffled.
pub fn paragraph_premises<R: Rng>(s: &ArgumentStructure, rng: &mut R, shuffle: bool) -> Vec<Formula> {
    let mut premises = s.leaf_premises.clone();
    if shuffle {
        premises.shuffle(rng);
    }
    premises
}
