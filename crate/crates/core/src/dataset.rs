//! Query statements, gold labels, instance assembly, balanced splits and
//! JSONL persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{validate_step_with, ArgumentForm, InferenceStep};
use crate::logic::{Atom, Formula, Oracle, OracleError, Verdict, DEFAULT_ORACLE_CAP};
use crate::parallel::{map_indices, Parallelism};
use crate::structure::{
    generate_structure, measure_depth, paragraph_premises, ArgumentStructure, GenSeed, StructureConfig, StructureError,
};
use crate::surface::{
    flesch_kincaid_grade, realize_with, text_counts, vocabulary_size, AtomBinding, Choices, RandomChoices,
    SentenceBank, SurfaceError, TemplateClass, TemplateSet, TextCounts,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const QUESTION: &str = "Is the following statement true, false, or uncertain?";
pub const GENERATOR: &str = concat!("logicbench ", env!("CARGO_PKG_VERSION"));

pub const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    True,
    False,
    Uncertain,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::True, Label::False, Label::Uncertain];

    pub fn from_verdict(v: Verdict) -> Label {
        match v {
            Verdict::Entailed => Label::True,
            Verdict::Contradicted => Label::False,
            Verdict::Independent => Label::Uncertain,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::True => "True",
            Label::False => "False",
            Label::Uncertain => "Uncertain",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

/// Real-world accuracy of a query, assuming every bank sentence is true.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factuality {
    Accurate,
    Inaccurate,
    Indeterminate,
}

/// atom: accurate; negated atom: inaccurate; a disjunction with at least
/// one bare atom as a disjunct: accurate; anything else: indeterminate.
pub fn tag_factuality(query: &Formula) -> Factuality {
    match query {
        Formula::Atom(_) => Factuality::Accurate,
        Formula::Negation(inner) if matches!(**inner, Formula::Atom(_)) => Factuality::Inaccurate,
        Formula::Disjunction(a, b) if matches!(**a, Formula::Atom(_)) || matches!(**b, Formula::Atom(_)) => {
            Factuality::Accurate
        }
        _ => Factuality::Indeterminate,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicMeta {
    /// Aligned with `Instance::paragraph`.
    pub premises: Vec<Formula>,
    pub query: Formula,
    pub conclusion: Formula,
    pub steps: Vec<InferenceStep>,
    pub support: Vec<Vec<Option<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub schema_version: u32,
    pub depth: usize,
    pub forms: Vec<ArgumentForm>,
    pub root_form: ArgumentForm,
    pub symbolic: SymbolicMeta,
    pub bindings: BTreeMap<String, String>,
    pub factuality: Factuality,
    pub seed: u64,
    pub instance_index: u64,
    pub template_checksum: String,
    pub bank_checksum: String,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub paragraph: Vec<String>,
    pub question: String,
    pub statement: String,
    pub label: Label,
    pub meta: InstanceMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Instance>,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &[Instance]); 3] {
        [(SPLIT_NAMES[0], &self.train), (SPLIT_NAMES[1], &self.validation), (SPLIT_NAMES[2], &self.test)]
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &Instance> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("internal consistency failure in instance {index}: {reason}")]
    InternalConsistency { index: u64, reason: String },
    #[error("invalid depth range {lo}:{hi} (depths must lie in 1..={max})")]
    InvalidRange { lo: usize, hi: usize, max: usize },
    #[error("{n} instances cannot cover {cells} depth/label cells")]
    TooFewInstances { n: usize, cells: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { path: PathBuf, line: usize, found: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

/// Oracle cap large enough for any structure of `depth`: one root atom,
/// at most two fresh atoms per step, one query atom.
pub fn oracle_cap_for_depth(depth: usize) -> usize {
    DEFAULT_ORACLE_CAP.max(2 * depth + 2)
}

/// Everything instance assembly needs besides depth and label.
#[derive(Debug, Clone)]
pub struct GenContext<'a> {
    pub bank: &'a SentenceBank,
    pub templates: &'a TemplateSet,
    pub seed: u64,
    pub structure: StructureConfig,
    pub shuffle: bool,
    pub parallelism: Parallelism,
}

impl<'a> GenContext<'a> {
    pub fn new(bank: &'a SentenceBank, templates: &'a TemplateSet, seed: u64) -> Self {
        GenContext {
            bank,
            templates,
            seed,
            structure: StructureConfig::default(),
            shuffle: true,
            parallelism: Parallelism::default(),
        }
    }

    fn oracle(&self, depth: usize) -> Oracle {
        // instances are already generated in parallel; keep each check on its thread
        Oracle::with_cap(oracle_cap_for_depth(depth)).parallelism(Parallelism::Sequential)
    }
}

/// Template choices for query statements: atoms stay verbatim.
struct QueryChoices<'a, R: Rng>(RandomChoices<'a, R>);

impl<R: Rng> Choices for QueryChoices<'_, R> {
    fn template(&mut self, class: TemplateClass, count: usize) -> usize {
        self.0.template(class, count)
    }

    fn wrap_atom(&mut self) -> bool {
        false
    }
}

/// Derives the query for `target`. Uncertain queries get a fresh atom,
/// which is bound to a sentence the instance does not use yet.
pub fn make_query<R: Rng>(
    s: &ArgumentStructure,
    target: Label,
    bank: &SentenceBank,
    binding: &mut AtomBinding,
    rng: &mut R,
) -> Result<(Formula, Label), SurfaceError> {
    let query = match target {
        Label::True => s.final_conclusion.clone(),
        Label::False => s.final_conclusion.negated_normalized(),
        Label::Uncertain => {
            let next = s
                .steps
                .iter()
                .flat_map(|st| st.premises.iter().chain(std::iter::once(&st.conclusion)))
                .flat_map(|f| f.atoms())
                .chain(binding.0.keys().copied())
                .map(|a| a.0 + 1)
                .max()
                .unwrap_or(0);
            let atom = Atom(next);
            bank.bind_fresh(atom, binding, rng)?;
            Formula::Atom(atom)
        }
    };
    Ok((query, target))
}

/// Generates the structure for instance `index` and assembles it.
pub fn assemble_instance(
    depth: usize,
    target: Label,
    index: u64,
    ctx: &GenContext<'_>,
) -> Result<Instance, DatasetError> {
    let mut rng = GenSeed::new(ctx.seed, index).stream();
    let structure = generate_structure(depth, &mut rng, &ctx.structure)?;
    assemble_from_structure(structure, target, index, &mut rng, ctx)
}

/// Binds, renders and labels an existing structure. Fails rather than
/// relabelling when the oracle disagrees with the intended label.
pub fn assemble_from_structure<R: Rng>(
    structure: ArgumentStructure,
    target: Label,
    index: u64,
    rng: &mut R,
    ctx: &GenContext<'_>,
) -> Result<Instance, DatasetError> {
    let depth = measure_depth(&structure);
    let oracle = ctx.oracle(depth);
    let inconsistent = |reason: String| DatasetError::InternalConsistency { index, reason };
    if !structure.is_well_formed() {
        return Err(inconsistent("malformed support tree".into()));
    }
    if let Some(bad) = structure.steps.iter().position(|s| !validate_step_with(s, &oracle)) {
        return Err(inconsistent(format!("step {bad} is not a valid {}", structure.steps[bad].form)));
    }

    let premises = paragraph_premises(&structure, rng, ctx.shuffle);
    let mut atoms = structure.final_conclusion.atoms();
    for p in &structure.leaf_premises {
        p.collect_atoms(&mut atoms);
    }
    let mut binding = ctx.bank.bind(&atoms, rng)?;
    let paragraph = premises
        .iter()
        .map(|p| realize_with(p, &binding, ctx.templates, &mut RandomChoices(rng)))
        .collect::<Result<Vec<_>, _>>()?;

    let (query, label) = make_query(&structure, target, ctx.bank, &mut binding, rng)?;
    let verdict = oracle.consistent_with(&premises, &query)?;
    if Label::from_verdict(verdict) != label {
        return Err(inconsistent(format!(
            "oracle says {verdict:?} for query `{query}` but the intended label is {label}"
        )));
    }
    if label == Label::Uncertain {
        let query_atoms = query.atoms();
        if premises.iter().any(|p| p.atoms().iter().any(|a| query_atoms.contains(a))) {
            return Err(inconsistent("uncertain query shares an atom with the premises".into()));
        }
    }
    let statement = realize_with(&query, &binding, ctx.templates, &mut QueryChoices(RandomChoices(rng)))?;

    Ok(Instance {
        id: format!("s{}-{index:06}", ctx.seed),
        paragraph,
        question: QUESTION.to_string(),
        statement,
        label,
        meta: InstanceMeta {
            schema_version: SCHEMA_VERSION,
            depth,
            forms: structure.forms(),
            root_form: structure.root_form(),
            factuality: tag_factuality(&query),
            symbolic: SymbolicMeta {
                premises,
                query,
                conclusion: structure.final_conclusion.clone(),
                steps: structure.steps,
                support: structure.support,
            },
            bindings: binding.by_alias(),
            seed: ctx.seed,
            instance_index: index,
            template_checksum: ctx.templates.checksum.clone(),
            bank_checksum: ctx.bank.checksum.clone(),
            generator: GENERATOR.to_string(),
        },
    })
}

/// Depth and target label for every instance index.
pub fn plan_instances(n: usize, depths: &RangeInclusive<usize>) -> Vec<(usize, Label)> {
    let lo = *depths.start();
    let k = depths.clone().count();
    let mut plan = Vec::with_capacity(n);
    for (d, depth) in depths.clone().enumerate() {
        let count = n / k + usize::from(d < n % k);
        // rotate the starting label per depth so remainders spread evenly
        let offset = (depth - lo) % 3;
        plan.extend((0..count).map(|j| (depth, Label::ALL[(j + offset) % 3])));
    }
    plan
}

/// Target sizes (train, validation, test) for one depth/label cell.
pub fn cell_split_sizes(count: usize) -> (usize, usize, usize) {
    let train = (count as f64 * 0.70).round() as usize;
    let validation = ((count as f64 * 0.15).round() as usize).min(count - train);
    (train, validation, count - train - validation)
}

pub fn build_dataset(
    n: usize,
    depths: RangeInclusive<usize>,
    ctx: &GenContext<'_>,
) -> Result<DatasetSplit, DatasetError> {
    let (lo, hi) = (*depths.start(), *depths.end());
    if lo == 0 || lo > hi || hi > ctx.structure.max_depth {
        return Err(DatasetError::InvalidRange { lo, hi, max: ctx.structure.max_depth });
    }
    let cells = depths.clone().count() * Label::ALL.len();
    if n < cells {
        return Err(DatasetError::TooFewInstances { n, cells });
    }
    let plan = plan_instances(n, &depths);
    let instances = map_indices(plan.len(), ctx.parallelism, |i| {
        let (depth, label) = plan[i];
        assemble_instance(depth, label, i as u64, ctx)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut cells: BTreeMap<(usize, Label), Vec<usize>> = BTreeMap::new();
    for (i, (depth, label)) in plan.iter().enumerate() {
        cells.entry((*depth, *label)).or_default().push(i);
    }
    // the split stream is disjoint from every instance stream
    let mut rng = GenSeed::new(ctx.seed, u64::MAX).stream();
    let mut assignment = vec![0usize; plan.len()];
    for members in cells.values_mut() {
        members.shuffle(&mut rng);
        let (train, validation, _) = cell_split_sizes(members.len());
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = if pos < train {
                0
            } else if pos < train + validation {
                1
            } else {
                2
            };
        }
    }
    let mut split = DatasetSplit::default();
    for (inst, part) in instances.into_iter().zip(assignment) {
        match part {
            0 => split.train.push(inst),
            1 => split.validation.push(inst),
            _ => split.test.push(inst),
        }
    }
    Ok(split)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(bytes).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn to_jsonl(instances: &[Instance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst).expect("instances serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, instances: &[Instance]) -> Result<(), DatasetError> {
    write_atomic(path, to_jsonl(instances).as_bytes())
}

pub fn write_dataset(split: &DatasetSplit, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, part) in split.parts() {
        write_jsonl(&dir.join(format!("{name}.jsonl")), part)?;
    }
    Ok(())
}

pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<Instance>, DatasetError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_error = |message: String| DatasetError::Parse { path: path.to_path_buf(), line: line_no, message };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| parse_error(e.to_string()))?;
        let version = &value["meta"]["schema_version"];
        if version.as_u64() != Some(u64::from(SCHEMA_VERSION)) {
            return Err(DatasetError::SchemaVersion {
                path: path.to_path_buf(),
                line: line_no,
                found: version.to_string(),
            });
        }
        out.push(serde_json::from_value(value).map_err(|e| parse_error(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Instance>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_jsonl(&text, path)
}

pub fn read_dataset(dir: &Path) -> Result<DatasetSplit, DatasetError> {
    let read = |name: &str| read_jsonl(&dir.join(format!("{name}.jsonl")));
    Ok(DatasetSplit { train: read("train")?, validation: read("validation")?, test: read("test")? })
}

/// Why a stored instance failed re-verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyFailure {
    pub id: String,
    pub reason: String,
}

/// Re-derives an instance's label from its symbolic metadata alone and
/// checks the recorded derivation.
pub fn verify_instance(inst: &Instance) -> Result<(), VerifyFailure> {
    let fail = |reason: String| VerifyFailure { id: inst.id.clone(), reason };
    let sym = &inst.meta.symbolic;
    if sym.premises.len() != inst.paragraph.len() {
        return Err(fail(format!(
            "{} paragraph sentences but {} symbolic premises",
            inst.paragraph.len(),
            sym.premises.len()
        )));
    }
    let oracle = Oracle::with_cap(oracle_cap_for_depth(inst.meta.depth)).parallelism(Parallelism::Sequential);
    let verdict = oracle.consistent_with(&sym.premises, &sym.query).map_err(|e| fail(e.to_string()))?;
    let expected = Label::from_verdict(verdict);
    if expected != inst.label {
        return Err(fail(format!("stored label {} but the premises make the statement {expected}", inst.label)));
    }
    let mut structure = ArgumentStructure {
        final_conclusion: sym.conclusion.clone(),
        steps: sym.steps.clone(),
        support: sym.support.clone(),
        leaf_premises: Vec::new(),
    };
    structure.leaf_premises =
        structure.leaves().ok_or_else(|| fail("recorded derivation is not a well-formed support tree".into()))?;
    let mut leaves: Vec<&Formula> = structure.leaf_premises.iter().collect();
    let mut shown: Vec<&Formula> = sym.premises.iter().collect();
    leaves.sort();
    shown.sort();
    if leaves != shown {
        return Err(fail("paragraph premises differ from the leaves of the recorded derivation".into()));
    }
    if let Some(bad) = structure.steps.iter().position(|s| !validate_step_with(s, &oracle)) {
        return Err(fail(format!("recorded step {bad} is not a valid {}", structure.steps[bad].form)));
    }
    if measure_depth(&structure) != inst.meta.depth {
        return Err(fail("recorded depth differs from the derivation depth".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub total: usize,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn verified(&self) -> usize {
        self.total - self.failures.len()
    }

    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn verify_instances(instances: &[Instance], parallelism: Parallelism) -> VerifyReport {
    let failures = map_indices(instances.len(), parallelism, |i| verify_instance(&instances[i]).err())
        .into_iter()
        .flatten()
        .collect();
    VerifyReport { total: instances.len(), failures }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub fk_grade: Option<f64>,
    pub counts: TextCounts,
    pub vocabulary: usize,
    pub by_depth: BTreeMap<usize, usize>,
    pub by_label: BTreeMap<Label, usize>,
    pub by_depth_label: BTreeMap<String, usize>,
}

/// Readability and histograms over paragraphs and statements.
pub fn corpus_stats<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> CorpusStats {
    let mut texts: Vec<&str> = Vec::new();
    let mut by_depth = BTreeMap::new();
    let mut by_label = BTreeMap::new();
    let mut by_depth_label = BTreeMap::new();
    let mut count = 0;
    for inst in instances {
        count += 1;
        texts.extend(inst.paragraph.iter().map(String::as_str));
        texts.push(&inst.statement);
        *by_depth.entry(inst.meta.depth).or_insert(0) += 1;
        *by_label.entry(inst.label).or_insert(0) += 1;
        *by_depth_label.entry(format!("{}/{}", inst.meta.depth, inst.label)).or_insert(0) += 1;
    }
    CorpusStats {
        instances: count,
        fk_grade: flesch_kincaid_grade(&texts).ok(),
        counts: text_counts(&texts),
        vocabulary: vocabulary_size(&texts),
        by_depth,
        by_label,
        by_depth_label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn factuality_rules() {
        assert_eq!(tag_factuality(&f("a")), Factuality::Accurate);
        assert_eq!(tag_factuality(&f("~a")), Factuality::Inaccurate);
        assert_eq!(tag_factuality(&f("a | ~b")), Factuality::Accurate);
        assert_eq!(tag_factuality(&f("~a | ~b")), Factuality::Indeterminate);
        assert_eq!(tag_factuality(&f("a -> b")), Factuality::Indeterminate);
        assert_eq!(tag_factuality(&f("~(a -> b)")), Factuality::Indeterminate);
    }

    #[test]
    fn label_serializes_capitalized() {
        assert_eq!(serde_json::to_string(&Label::Uncertain).unwrap(), "\"Uncertain\"");
        assert!(serde_json::from_str::<Label>("\"Maybe\"").is_err());
        assert_eq!("false".parse::<Label>().unwrap(), Label::False);
    }

    #[test]
    fn plan_rotates_labels() {
        let plan = plan_instances(7000, &(1..=7));
        assert_eq!(plan.len(), 7000);
        for depth in 1..=7 {
            let mut counts: Vec<usize> =
                Label::ALL.iter().map(|l| plan.iter().filter(|(d, x)| *d == depth && x == l).count()).collect();
            counts.sort();
            assert_eq!(counts, vec![333, 333, 334]);
        }
        let plan = plan_instances(22, &(1..=7));
        assert_eq!(plan.iter().filter(|(d, _)| *d == 1).count(), 4);
        assert_eq!(plan.iter().filter(|(d, _)| *d == 7).count(), 3);
    }

    #[test]
    fn cell_sizes() {
        assert_eq!(cell_split_sizes(333), (233, 50, 50));
        assert_eq!(cell_split_sizes(334), (234, 50, 50));
        assert_eq!(cell_split_sizes(1), (1, 0, 0));
        assert_eq!(cell_split_sizes(0), (0, 0, 0));
    }

    #[test]
    fn oracle_cap_covers_deep_structures() {
        assert_eq!(oracle_cap_for_depth(7), 20);
        assert_eq!(oracle_cap_for_depth(10), 22);
    }
}
