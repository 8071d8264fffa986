//! Natural-language realization of formulas and corpus complexity metrics.
//!
//! Formulas are rendered bottom-up: atoms become bank sentences, compound
//! formulas pick an expression template of their class and have their
//! operands slotted in. A compound operand is wrapped in single quotes when
//! its slot is followed by more template text, so the reader can tell where
//! the inner clause ends.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::IteratorRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::logic::{Atom, Formula};

pub const BUILTIN_TEMPLATES: &str = include_str!("../data/expressions.txt");
pub const FALLBACK_BANK: &str = include_str!("../data/fallback_bank.txt");

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("template file: {0}")]
    Templates(String),
    #[error("cannot read sentence bank {path}: {source}")]
    BankIo { path: String, source: std::io::Error },
    #[error("sentence bank header has no generic-sentence column")]
    MissingSentenceColumn,
    #[error("sentence bank is empty after filtering ({rejected} lines rejected)")]
    EmptyBank { rejected: usize },
    #[error("atom {0} has no bound sentence")]
    UnboundAtom(Atom),
    #[error("sentence bank exhausted: {needed} distinct sentences needed, {available} available")]
    BankExhausted { needed: usize, available: usize },
    #[error("cannot compute a readability grade for an empty corpus")]
    EmptyCorpus,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateClass {
    Basic,
    Negation,
    Conditional,
    Disjunction,
}

impl TemplateClass {
    pub const ALL: [TemplateClass; 4] =
        [TemplateClass::Basic, TemplateClass::Negation, TemplateClass::Conditional, TemplateClass::Disjunction];

    pub fn expected_count(self) -> usize {
        match self {
            TemplateClass::Basic => 16,
            TemplateClass::Negation => 15,
            TemplateClass::Conditional => 11,
            TemplateClass::Disjunction => 8,
        }
    }

    fn slots(self) -> &'static [&'static str] {
        match self {
            TemplateClass::Basic | TemplateClass::Negation => &["{x}"],
            TemplateClass::Conditional | TemplateClass::Disjunction => &["{x}", "{y}"],
        }
    }

    fn section(self) -> &'static str {
        match self {
            TemplateClass::Basic => "basic",
            TemplateClass::Negation => "negation",
            TemplateClass::Conditional => "conditional",
            TemplateClass::Disjunction => "disjunction",
        }
    }
}

/// The four expression inventories.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub basic: Vec<String>,
    pub negation: Vec<String>,
    pub conditional: Vec<String>,
    pub disjunction: Vec<String>,
    pub checksum: String,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet::parse(BUILTIN_TEMPLATES).expect("built-in templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self, SurfaceError> {
        let text = fs::read_to_string(path).map_err(|e| SurfaceError::Templates(format!("{}: {e}", path.display())))?;
        TemplateSet::parse(&text)
    }

    /// Parses the sectioned template format and checks class sizes and slots.
    pub fn parse(text: &str) -> Result<Self, SurfaceError> {
        let mut sections: BTreeMap<TemplateClass, Vec<String>> = BTreeMap::new();
        let mut current = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let class = TemplateClass::ALL
                    .into_iter()
                    .find(|c| c.section() == name)
                    .ok_or_else(|| SurfaceError::Templates(format!("line {}: unknown section `{name}`", n + 1)))?;
                current = Some(class);
                continue;
            }
            let class = current
                .ok_or_else(|| SurfaceError::Templates(format!("line {}: template outside a section", n + 1)))?;
            for slot in class.slots() {
                if line.matches(slot).count() != 1 {
                    return Err(SurfaceError::Templates(format!(
                        "line {}: `{line}` must contain {slot} exactly once",
                        n + 1
                    )));
                }
            }
            if class.slots().len() == 1 && line.contains("{y}") {
                return Err(SurfaceError::Templates(format!("line {}: unexpected {{y}}", n + 1)));
            }
            sections.entry(class).or_default().push(line.to_string());
        }
        for class in TemplateClass::ALL {
            let got = sections.get(&class).map_or(0, Vec::len);
            if got != class.expected_count() {
                return Err(SurfaceError::Templates(format!(
                    "section [{}] has {got} templates, expected {}",
                    class.section(),
                    class.expected_count()
                )));
            }
        }
        let mut take = |c| sections.remove(&c).unwrap_or_default();
        Ok(TemplateSet {
            basic: take(TemplateClass::Basic),
            negation: take(TemplateClass::Negation),
            conditional: take(TemplateClass::Conditional),
            disjunction: take(TemplateClass::Disjunction),
            checksum: sha256_hex(text.as_bytes()),
        })
    }

    pub fn class(&self, class: TemplateClass) -> &[String] {
        match class {
            TemplateClass::Basic => &self.basic,
            TemplateClass::Negation => &self.negation,
            TemplateClass::Conditional => &self.conditional,
            TemplateClass::Disjunction => &self.disjunction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    pub text: String,
    pub source: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub accepted: usize,
    pub rejected: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankFormat {
    Tsv,
    Plain,
}

impl BankFormat {
    /// `.tsv` files are tab-separated, everything else is one sentence per line.
    pub fn from_path(path: &Path) -> BankFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => BankFormat::Tsv,
            _ => BankFormat::Plain,
        }
    }
}

const BANNED_WORDS: [&str; 6] = ["if", "then", "or", "either", "unless", "not"];

/// A sentence qualifies as a simple proposition: 3 to 20 words, printable
/// ASCII only, and none of the connective words the templates supply.
pub fn is_simple_sentence(text: &str) -> bool {
    if !text.bytes().all(|b| (0x20..=0x7e).contains(&b)) {
        return false;
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    if !(3..=20).contains(&words.len()) {
        return false;
    }
    !words.iter().any(|w| {
        let bare: String = w.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        BANNED_WORDS.contains(&bare.as_str())
    })
}

/// Pool of simple real-world sentences used to instantiate atoms.
#[derive(Debug, Clone)]
pub struct SentenceBank {
    entries: Vec<BankEntry>,
    pub stats: LoadStats,
    pub checksum: String,
}

impl SentenceBank {
    pub fn from_entries(raw: impl IntoIterator<Item = BankEntry>) -> Result<Self, SurfaceError> {
        let mut stats = LoadStats::default();
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for entry in raw {
            let text = entry.text.trim().to_string();
            if !is_simple_sentence(&text) {
                stats.rejected += 1;
            } else if !seen.insert(text.clone()) {
                stats.duplicates += 1;
            } else {
                stats.accepted += 1;
                entries.push(BankEntry { text, source: entry.source });
            }
        }
        if entries.is_empty() {
            return Err(SurfaceError::EmptyBank { rejected: stats.rejected });
        }
        let mut hasher = Sha256::new();
        for e in &entries {
            hasher.update(e.text.as_bytes());
            hasher.update(b"\n");
        }
        let checksum = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(SentenceBank { entries, stats, checksum })
    }

    /// The bundled 200-sentence bank.
    pub fn fallback() -> Self {
        SentenceBank::parse_plain(FALLBACK_BANK, "fallback").expect("fallback bank is valid")
    }

    pub fn parse_plain(text: &str, source: &str) -> Result<Self, SurfaceError> {
        SentenceBank::from_entries(
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(n, l)| BankEntry { text: l.to_string(), source: format!("{source}:{}", n + 1) }),
        )
    }

    /// Parses GenericsKB-style TSV. The sentence column is located by
    /// header name; a `SOURCE` column, when present, provides the source id.
    pub fn parse_tsv(text: &str) -> Result<Self, SurfaceError> {
        let mut lines = text.lines();
        let header: Vec<String> =
            lines.next().unwrap_or("").split('\t').map(|h| h.trim().to_ascii_lowercase().replace('_', " ")).collect();
        let sentence_col = ["generic sentence", "sentence"]
            .iter()
            .find_map(|name| header.iter().position(|h| h == name))
            .ok_or(SurfaceError::MissingSentenceColumn)?;
        let source_col = header.iter().position(|h| h == "source");
        let mut missing = 0;
        let rows: Vec<BankEntry> = lines
            .enumerate()
            .filter_map(|(n, line)| {
                let cols: Vec<&str> = line.split('\t').collect();
                match cols.get(sentence_col) {
                    Some(text) => Some(BankEntry {
                        text: text.to_string(),
                        source: source_col
                            .and_then(|c| cols.get(c))
                            .map(|s| format!("{s}:{}", n + 2))
                            .unwrap_or_else(|| format!("line:{}", n + 2)),
                    }),
                    None => {
                        missing += 1;
                        None
                    }
                }
            })
            .collect();
        let mut bank = SentenceBank::from_entries(rows)?;
        bank.stats.rejected += missing;
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn contains(&self, text: &str) -> bool {
        self.entries.iter().any(|e| e.text == text)
    }

    /// Binds each atom to a distinct sentence, sampled without replacement.
    pub fn bind<R: Rng>(&self, atoms: &BTreeSet<Atom>, rng: &mut R) -> Result<AtomBinding, SurfaceError> {
        if atoms.len() > self.entries.len() {
            return Err(SurfaceError::BankExhausted { needed: atoms.len(), available: self.entries.len() });
        }
        let picks = rand::seq::index::sample(rng, self.entries.len(), atoms.len());
        Ok(AtomBinding(atoms.iter().zip(picks.iter()).map(|(a, i)| (*a, self.entries[i].text.clone())).collect()))
    }

    /// Adds `atom` to `binding` with a sentence the binding does not use yet.
    pub fn bind_fresh<R: Rng>(&self, atom: Atom, binding: &mut AtomBinding, rng: &mut R) -> Result<(), SurfaceError> {
        let used: HashSet<&str> = binding.0.values().map(String::as_str).collect();
        let available = self.entries.len().saturating_sub(used.len());
        if available == 0 {
            return Err(SurfaceError::BankExhausted { needed: used.len() + 1, available: self.entries.len() });
        }
        // rejection sampling while the bank is much larger than the binding
        let text = if available * 2 > self.entries.len() {
            loop {
                let candidate = &self.entries[rng.gen_range(0..self.entries.len())].text;
                if !used.contains(candidate.as_str()) {
                    break candidate.clone();
                }
            }
        } else {
            self.entries
                .iter()
                .filter(|e| !used.contains(e.text.as_str()))
                .choose(rng)
                .expect("available > 0")
                .text
                .clone()
        };
        binding.0.insert(atom, text);
        Ok(())
    }
}

pub fn load_sentence_bank(path: &Path, format: BankFormat) -> Result<SentenceBank, SurfaceError> {
    let text =
        fs::read_to_string(path).map_err(|source| SurfaceError::BankIo { path: path.display().to_string(), source })?;
    match format {
        BankFormat::Tsv => SentenceBank::parse_tsv(&text),
        BankFormat::Plain => SentenceBank::parse_plain(&text, &path.display().to_string()),
    }
}

/// Injective map from atoms to sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomBinding(pub BTreeMap<Atom, String>);

impl AtomBinding {
    pub fn get(&self, atom: Atom) -> Option<&str> {
        self.0.get(&atom).map(String::as_str)
    }

    pub fn is_injective(&self) -> bool {
        let distinct: HashSet<&String> = self.0.values().collect();
        distinct.len() == self.0.len()
    }

    /// Alias-keyed copy for serialization.
    pub fn by_alias(&self) -> BTreeMap<String, String> {
        self.0.iter().map(|(a, s)| (a.alias(), s.clone())).collect()
    }
}

impl Serialize for Atom {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.alias())
    }
}

impl<'de> Deserialize<'de> for Atom {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let alias = String::deserialize(d)?;
        Atom::from_alias(&alias).ok_or_else(|| serde::de::Error::custom(format!("invalid atom `{alias}`")))
    }
}

/// Source of template and wrapping decisions during realization.
pub trait Choices {
    fn template(&mut self, class: TemplateClass, count: usize) -> usize;
    /// Whether a standalone atomic sentence gets a basic template.
    fn wrap_atom(&mut self) -> bool;
}

/// Uniform template choice; atoms are wrapped with probability 0.5.
pub struct RandomChoices<'a, R: Rng>(pub &'a mut R);

impl<R: Rng> Choices for RandomChoices<'_, R> {
    fn template(&mut self, _class: TemplateClass, count: usize) -> usize {
        self.0.gen_range(0..count)
    }

    fn wrap_atom(&mut self) -> bool {
        self.0.gen_bool(0.5)
    }
}

/// Always the same template index; never wraps standalone atoms.
pub struct FixedChoice(pub usize);

impl Choices for FixedChoice {
    fn template(&mut self, _class: TemplateClass, count: usize) -> usize {
        self.0 % count
    }

    fn wrap_atom(&mut self) -> bool {
        false
    }
}

fn lower_first(text: &str) -> String {
    let mut chars = text.chars();
    let Some(first) = chars.next() else {
        return String::new();
    };
    let first_word = text.split_whitespace().next().unwrap_or("");
    // leave acronyms and camel-cased names alone
    if first_word.chars().skip(1).any(|c| c.is_ascii_uppercase()) {
        return text.to_string();
    }
    first.to_lowercase().chain(chars).collect()
}

fn upper_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// A bank sentence in embeddable form: lowercase initial, no final period.
fn atom_clause(sentence: &str) -> String {
    lower_first(sentence.trim().trim_end_matches(['.', '!', '?']))
}

fn as_sentence(text: &str) -> String {
    let trimmed = text.trim();
    let mut out = upper_first(trimmed);
    if !trimmed.ends_with(['.', '!', '?']) {
        out.push('.');
    }
    out
}

fn fill(
    template: &str,
    slots: &[(&str, &Formula)],
    render: &mut dyn FnMut(&Formula) -> Result<String, SurfaceError>,
) -> Result<String, SurfaceError> {
    let positions: Vec<(usize, &str, &Formula)> =
        slots.iter().map(|(slot, f)| (template.find(slot).expect("template validated"), *slot, *f)).collect();
    // operands render in x, y order; text is assembled in template order
    let rendered: Vec<String> = positions.iter().map(|(_, _, f)| render(f)).collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by_key(|&i| positions[i].0);
    let mut out = String::new();
    let mut cursor = 0;
    for i in order {
        let (at, slot, operand) = positions[i];
        out.push_str(&template[cursor..at]);
        let slot_is_final = template[at + slot.len()..].trim_end_matches('.').is_empty();
        if matches!(operand, Formula::Atom(_)) || slot_is_final {
            out.push_str(&rendered[i]);
        } else {
            out.push('\'');
            out.push_str(&rendered[i]);
            out.push('\'');
        }
        cursor = at + slot.len();
    }
    out.push_str(&template[cursor..]);
    Ok(out)
}

fn render_clause(
    f: &Formula,
    binding: &AtomBinding,
    templates: &TemplateSet,
    choices: &mut dyn Choices,
) -> Result<String, SurfaceError> {
    let sentence = match f {
        Formula::Atom(a) => {
            let text = binding.get(*a).ok_or(SurfaceError::UnboundAtom(*a))?;
            return Ok(atom_clause(text));
        }
        _ => render_compound(f, binding, templates, choices)?,
    };
    Ok(lower_first(sentence.trim_end_matches('.')))
}

fn render_compound(
    f: &Formula,
    binding: &AtomBinding,
    templates: &TemplateSet,
    choices: &mut dyn Choices,
) -> Result<String, SurfaceError> {
    let (class, slots): (TemplateClass, Vec<(&str, &Formula)>) = match f {
        Formula::Atom(_) => unreachable!("atoms are rendered directly"),
        Formula::Negation(x) => (TemplateClass::Negation, vec![("{x}", x)]),
        Formula::Conditional(x, y) => (TemplateClass::Conditional, vec![("{x}", x), ("{y}", y)]),
        Formula::Disjunction(x, y) => (TemplateClass::Disjunction, vec![("{x}", x), ("{y}", y)]),
    };
    let pool = templates.class(class);
    let template = &pool[choices.template(class, pool.len())];
    // operands are rendered left to right so choice order is stable
    let filled = fill(template, &slots, &mut |g| render_clause(g, binding, templates, choices))?;
    Ok(upper_first(&filled))
}

/// Renders a standalone statement as a full sentence. Atomic statements are
/// either the bank sentence verbatim or wrapped in a basic template.
pub fn realize_with(
    f: &Formula,
    binding: &AtomBinding,
    templates: &TemplateSet,
    choices: &mut dyn Choices,
) -> Result<String, SurfaceError> {
    match f {
        Formula::Atom(a) => {
            let text = binding.get(*a).ok_or(SurfaceError::UnboundAtom(*a))?;
            if choices.wrap_atom() {
                let pool = templates.class(TemplateClass::Basic);
                let template = &pool[choices.template(TemplateClass::Basic, pool.len())];
                Ok(upper_first(&template.replacen("{x}", &atom_clause(text), 1)))
            } else {
                Ok(as_sentence(text))
            }
        }
        _ => render_compound(f, binding, templates, choices),
    }
}

pub fn realize_statement<R: Rng>(
    f: &Formula,
    binding: &AtomBinding,
    templates: &TemplateSet,
    rng: &mut R,
) -> Result<String, SurfaceError> {
    realize_with(f, binding, templates, &mut RandomChoices(rng))
}

/// Per-corpus counts behind the readability grade.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TextCounts {
    pub sentences: usize,
    pub words: usize,
    pub syllables: usize,
}

impl fmt::Display for TextCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sentences, {} words, {} syllables", self.sentences, self.words, self.syllables)
    }
}

/// Syllables by vowel-group counting: each maximal run of `aeiouy` counts
/// once, a trailing silent `e` is dropped (except in a consonant + `le`
/// ending), and every word has at least one syllable.
pub fn count_syllables(word: &str) -> usize {
    let letters: Vec<u8> = word.bytes().filter(u8::is_ascii_alphabetic).map(|b| b.to_ascii_lowercase()).collect();
    if letters.is_empty() {
        return 0;
    }
    let is_vowel = |b: u8| matches!(b, b'a' | b'e' | b'i' | b'o' | b'u' | b'y');
    let mut groups = 0;
    let mut prev_vowel = false;
    for &b in &letters {
        let v = is_vowel(b);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    if groups > 1 && letters[n - 1] == b'e' && !is_vowel(letters[n - 2]) {
        let consonant_le = n >= 3 && letters[n - 2] == b'l' && !is_vowel(letters[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

/// Sentences split at runs of `.`, `!`, `?`; words are whitespace tokens
/// containing at least one letter.
pub fn text_counts<S: AsRef<str>>(texts: &[S]) -> TextCounts {
    let mut counts = TextCounts::default();
    for text in texts {
        for sentence in text.as_ref().split(['.', '!', '?']) {
            let words: Vec<&str> =
                sentence.split_whitespace().filter(|w| w.chars().any(|c| c.is_ascii_alphabetic())).collect();
            if words.is_empty() {
                continue;
            }
            counts.sentences += 1;
            counts.words += words.len();
            counts.syllables += words.iter().map(|w| count_syllables(w)).sum::<usize>();
        }
    }
    counts
}

pub fn flesch_kincaid_grade<S: AsRef<str>>(texts: &[S]) -> Result<f64, SurfaceError> {
    let c = text_counts(texts);
    if c.sentences == 0 || c.words == 0 {
        return Err(SurfaceError::EmptyCorpus);
    }
    Ok(0.39 * (c.words as f64 / c.sentences as f64) + 11.8 * (c.syllables as f64 / c.words as f64) - 15.59)
}

/// Number of distinct lowercased alphabetic tokens (maximal ASCII letter runs).
pub fn vocabulary_size<S: AsRef<str>>(texts: &[S]) -> usize {
    let mut vocab = HashSet::new();
    for text in texts {
        for token in text.as_ref().split(|c: char| !c.is_ascii_alphabetic()) {
            if !token.is_empty() {
                vocab.insert(token.to_ascii_lowercase());
            }
        }
    }
    vocab.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn binding(pairs: &[(u32, &str)]) -> AtomBinding {
        AtomBinding(pairs.iter().map(|(a, s)| (Atom(*a), s.to_string())).collect())
    }

    #[test]
    fn builtin_inventory_has_expected_counts() {
        let t = TemplateSet::builtin();
        assert_eq!([t.basic.len(), t.negation.len(), t.conditional.len(), t.disjunction.len()], [16, 15, 11, 8]);
        assert_eq!(t.checksum.len(), 64);
    }

    #[test]
    fn malformed_template_files_are_rejected() {
        let bad_slot = BUILTIN_TEMPLATES.replace("If {x}, then {y}.", "If {x}, then {x}.");
        assert!(TemplateSet::parse(&bad_slot).is_err());
        let missing = BUILTIN_TEMPLATES.replace("Either {x} or {y}.\n", "");
        assert!(TemplateSet::parse(&missing).is_err());
        assert!(TemplateSet::parse("{x} stray\n").is_err());
    }

    #[test]
    fn table_samples_render() {
        let t = TemplateSet::builtin();
        let b = binding(&[(0, "Condensation is water vapor changing to liquid water."), (1, "Doors are solids.")]);
        assert_eq!(
            realize_with(&f("~a"), &b, &t, &mut FixedChoice(0)).unwrap(),
            "The claim that condensation is water vapor changing to liquid water does not reflect reality."
        );
        assert_eq!(
            realize_with(&f("a | b"), &b, &t, &mut FixedChoice(0)).unwrap(),
            "It is a fact that either condensation is water vapor changing to liquid water or doors are solids."
        );
        assert_eq!(realize_with(&f("b"), &b, &t, &mut FixedChoice(0)).unwrap(), "Doors are solids.");
    }

    #[test]
    fn nested_clauses_are_quoted_when_not_final() {
        let t = TemplateSet::builtin();
        let b = binding(&[
            (0, "Night blooming plants and trees depend on nectar eating bats for pollination."),
            (1, "Many species are critically endangered."),
            (2, "Doors are solids."),
        ]);
        // conditional template 3 puts {y} before " is true."
        let text = realize_with(&f("a -> (b -> ~c)"), &b, &t, &mut FixedChoice(3)).unwrap();
        assert_eq!(
            text,
            "Whenever it is true that night blooming plants and trees depend on nectar eating bats \
             for pollination, 'whenever it is true that many species are critically endangered, \
             'it is false that doors are solids' is true' is true."
        );
        // consequent slot at the end of the template stays unquoted
        let text = realize_with(&f("a -> (b -> c)"), &b, &t, &mut FixedChoice(1)).unwrap();
        assert!(text.starts_with("If night blooming"));
        assert!(text.ends_with("then if many species are critically endangered, then doors are solids."));
    }

    #[test]
    fn unbound_atoms_error() {
        let t = TemplateSet::builtin();
        let err =
            realize_with(&f("a -> z"), &binding(&[(0, "Doors are solids.")]), &t, &mut FixedChoice(0)).unwrap_err();
        assert!(matches!(err, SurfaceError::UnboundAtom(Atom(25))));
    }

    #[test]
    fn simplicity_filter() {
        assert!(is_simple_sentence("Doors are solids."));
        assert!(!is_simple_sentence("Either it rains or it snows."));
        assert!(!is_simple_sentence("Cats are not dogs."));
        assert!(!is_simple_sentence("Too short."));
        assert!(!is_simple_sentence("Caf\u{e9}s sell coffee daily."));
        assert!(is_simple_sentence("Forests store carbon."));
    }

    #[test]
    fn fallback_bank_is_clean() {
        let bank = SentenceBank::fallback();
        assert_eq!(bank.len(), 200);
        assert_eq!(bank.stats.rejected, 0);
        assert_eq!(bank.stats.duplicates, 0);
    }

    #[test]
    fn tsv_bank_locates_sentence_column() {
        let tsv = "SOURCE\tTERM\tQUANTIFIER\tGENERIC SENTENCE\tSCORE\n\
                   Waterloo\tdoor\t\tDoors are solids.\t0.9\n\
                   Waterloo\tweather\t\tEither it rains or it snows.\t0.5\n\
                   Waterloo\tdoor\t\tDoors are solids.\t0.9\n";
        let bank = SentenceBank::parse_tsv(tsv).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.entries()[0].source, "Waterloo:2");
        assert_eq!(bank.stats, LoadStats { accepted: 1, rejected: 1, duplicates: 1 });
        assert!(matches!(SentenceBank::parse_tsv("A\tB\nx\ty\n"), Err(SurfaceError::MissingSentenceColumn)));
        assert!(matches!(
            SentenceBank::parse_plain("Either it rains or it snows.\n", "t"),
            Err(SurfaceError::EmptyBank { rejected: 1 })
        ));
    }

    #[test]
    fn binding_is_injective_and_fresh_binding_avoids_used() {
        use crate::structure::GenSeed;
        let bank = SentenceBank::parse_plain("Doors are solids.\nJapan is in Asia.\nBees make honey.\n", "t").unwrap();
        let mut rng = GenSeed::new(1, 1).stream();
        let atoms: BTreeSet<Atom> = [Atom(0), Atom(1)].into_iter().collect();
        let mut b = bank.bind(&atoms, &mut rng).unwrap();
        assert!(b.is_injective());
        bank.bind_fresh(Atom(2), &mut b, &mut rng).unwrap();
        assert!(b.is_injective());
        assert_eq!(b.0.len(), 3);
        assert!(matches!(bank.bind_fresh(Atom(3), &mut b, &mut rng), Err(SurfaceError::BankExhausted { .. })));
    }

    #[test]
    fn syllable_heuristic() {
        for (word, n) in [
            ("the", 1),
            ("cat", 1),
            ("table", 2),
            ("make", 1),
            ("reality", 3), // "ea" is one vowel group
            ("water", 2),
            ("condensation", 4),
            ("be", 1),
            ("rhythm", 1),
            ("a", 1),
        ] {
            assert_eq!(count_syllables(word), n, "{word}");
        }
    }

    #[test]
    fn readability_grade() {
        let grade = flesch_kincaid_grade(&["The cat sat."]).unwrap();
        assert!((grade - (-2.62)).abs() < 1e-9);
        let corpus = ["Doors are solids.", "Many species are critically endangered!"];
        let doubled: Vec<&str> = corpus.iter().chain(corpus.iter()).copied().collect();
        assert_eq!(flesch_kincaid_grade(&corpus).unwrap(), flesch_kincaid_grade(&doubled).unwrap());
        assert!(matches!(flesch_kincaid_grade::<&str>(&[]), Err(SurfaceError::EmptyCorpus)));
        assert!(matches!(flesch_kincaid_grade(&["..."]), Err(SurfaceError::EmptyCorpus)));
    }

    #[test]
    fn vocabulary() {
        assert_eq!(vocabulary_size(&["A b a."]), 2);
        assert_eq!(vocabulary_size::<&str>(&[]), 0);
        assert_eq!(vocabulary_size(&["It's DOORS, doors."]), 3);
    }
}
