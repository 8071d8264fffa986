//! Prompt construction, model querying, answer extraction and scoring.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::dataset::{write_atomic, DatasetError, Instance, Label};
use crate::forms::ArgumentForm;
use crate::structure::GenSeed;
use crate::surface::sha256_hex;

pub const PREAMBLE: &str = include_str!("../data/preamble.txt");
pub const TASK_QUESTION: &str = "Is the statement true, false, or uncertain?";
pub const PK_QUESTION: &str = "Is the following statement true, false, or uncertain?";
pub const PK_INSTRUCTIONS: [&str; 3] = [
    "Use the knowledge you currently have to answer as accurately as possible.",
    "You have 3 answer options: True, False, and Uncertain.",
    "There should be roughly an equal proportion of each option.",
];
pub const BUILTIN_COT: &str = include_str!("../data/cot_exemplars.json");
pub const DEFAULT_SHOTS: usize = 3;

/// Stream index reserved for exemplar selection.
const EXEMPLAR_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    ChainOfThought,
    PkTest,
}

impl PromptMode {
    pub fn name(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::FewShot => "few_shot",
            PromptMode::ChainOfThought => "chain_of_thought",
            PromptMode::PkTest => "pk_test",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "zero_shot" => Ok(PromptMode::ZeroShot),
            "few_shot" => Ok(PromptMode::FewShot),
            "chain_of_thought" | "cot" => Ok(PromptMode::ChainOfThought),
            "pk_test" | "pk" => Ok(PromptMode::PkTest),
            _ => Err(format!("unknown prompt mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub shots: usize,
}

impl PromptSpec {
    pub fn new(mode: PromptMode) -> Self {
        let shots = match mode {
            PromptMode::FewShot | PromptMode::ChainOfThought => DEFAULT_SHOTS,
            PromptMode::ZeroShot | PromptMode::PkTest => 0,
        };
        PromptSpec { mode, shots }
    }

    pub fn with_shots(mut self, shots: usize) -> Self {
        self.shots = shots;
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let ok = match self.mode {
            PromptMode::FewShot | PromptMode::ChainOfThought => self.shots >= 1,
            PromptMode::ZeroShot | PromptMode::PkTest => self.shots == 0,
        };
        if ok {
            Ok(())
        } else {
            Err(PromptError::BadShots { mode: self.mode, shots: self.shots })
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{mode} prompts cannot use {shots} shots")]
    BadShots { mode: PromptMode, shots: usize },
    #[error("expected {expected} exemplars, got {got}")]
    ExemplarCount { expected: usize, got: usize },
    #[error("exemplar overlaps the target instance {id}")]
    ExemplarOverlap { id: String },
    #[error("chain-of-thought exemplars need worked reasoning")]
    MissingReasoning,
    #[error("not enough exemplars: wanted {wanted}, only {available} available")]
    NotEnoughExemplars { wanted: usize, available: usize },
    #[error("{mode} prompts are built with a different function")]
    WrongMode { mode: PromptMode },
    #[error("malformed exemplar file: {0}")]
    ExemplarFile(String),
}

/// A solved example shown before the target question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub paragraph: Vec<String>,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub label: Label,
}

impl Exemplar {
    pub fn from_instance(inst: &Instance) -> Self {
        Exemplar {
            id: Some(inst.id.clone()),
            paragraph: inst.paragraph.clone(),
            statement: inst.statement.clone(),
            reasoning: None,
            label: inst.label,
        }
    }

    fn overlaps(&self, inst: &Instance) -> bool {
        self.id.as_deref() == Some(inst.id.as_str())
            || (self.statement == inst.statement && self.paragraph == inst.paragraph)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotExemplars {
    pub version: u32,
    pub exemplars: Vec<Exemplar>,
    #[serde(skip)]
    pub checksum: String,
}

impl CotExemplars {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_COT).expect("built-in exemplars are well formed")
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut set: CotExemplars = serde_json::from_str(text).map_err(|e| PromptError::ExemplarFile(e.to_string()))?;
        if set.exemplars.iter().any(|e| e.reasoning.as_deref().is_none_or(str::is_empty)) {
            return Err(PromptError::MissingReasoning);
        }
        set.checksum = sha256_hex(text.as_bytes());
        Ok(set)
    }

    /// The first `shots` exemplars.
    pub fn take(&self, shots: usize) -> Result<Vec<Exemplar>, PromptError> {
        if shots > self.exemplars.len() {
            return Err(PromptError::NotEnoughExemplars { wanted: shots, available: self.exemplars.len() });
        }
        Ok(self.exemplars[..shots].to_vec())
    }
}

/// Seeded label-stratified draw from `pool`: labels are visited round-robin
/// and each label's instances are taken in a seeded shuffled order.
pub fn select_exemplars(pool: &[Instance], shots: usize, seed: u64) -> Result<Vec<Exemplar>, PromptError> {
    if shots > pool.len() {
        return Err(PromptError::NotEnoughExemplars { wanted: shots, available: pool.len() });
    }
    let mut rng = GenSeed::new(seed, EXEMPLAR_STREAM).stream();
    let mut buckets: Vec<Vec<&Instance>> =
        Label::ALL.iter().map(|l| pool.iter().filter(|i| i.label == *l).collect()).collect();
    for b in &mut buckets {
        b.shuffle(&mut rng);
    }
    let mut out = Vec::with_capacity(shots);
    let mut k = 0;
    while out.len() < shots {
        if let Some(inst) = buckets[k % 3].pop() {
            out.push(Exemplar::from_instance(inst));
        }
        k += 1;
    }
    Ok(out)
}

fn label_word(label: Label) -> &'static str {
    match label {
        Label::True => "TRUE",
        Label::False => "FALSE",
        Label::Uncertain => "UNCERTAIN",
    }
}

fn push_problem(out: &mut String, paragraph: &[String], statement: &str) {
    out.push_str("Paragraph: ");
    out.push_str(&paragraph.join(" "));
    out.push_str("\nStatement: ");
    out.push_str(statement);
    out.push_str("\nQuestion: ");
    out.push_str(TASK_QUESTION);
    out.push('\n');
}

pub fn build_task_prompt(inst: &Instance, spec: &PromptSpec, exemplars: &[Exemplar]) -> Result<String, PromptError> {
    spec.validate()?;
    if spec.mode == PromptMode::PkTest {
        return Err(PromptError::WrongMode { mode: spec.mode });
    }
    if exemplars.len() != spec.shots {
        return Err(PromptError::ExemplarCount { expected: spec.shots, got: exemplars.len() });
    }
    if exemplars.iter().any(|e| e.overlaps(inst)) {
        return Err(PromptError::ExemplarOverlap { id: inst.id.clone() });
    }
    let cot = spec.mode == PromptMode::ChainOfThought;
    if cot && exemplars.iter().any(|e| e.reasoning.is_none()) {
        return Err(PromptError::MissingReasoning);
    }

    let mut out = String::from(PREAMBLE.trim_end());
    out.push_str("\n\n");
    for (k, ex) in exemplars.iter().enumerate() {
        out.push_str(&format!("Example {}\n", k + 1));
        push_problem(&mut out, &ex.paragraph, &ex.statement);
        if cot {
            out.push_str("Reasoning: ");
            out.push_str(ex.reasoning.as_deref().unwrap_or_default());
            out.push('\n');
        }
        out.push_str("Answer: ");
        out.push_str(label_word(ex.label));
        out.push_str("\n\n");
    }
    push_problem(&mut out, &inst.paragraph, &inst.statement);
    out.push_str(if cot { "Reasoning:" } else { "Answer:" });
    Ok(out)
}

/// Statement-only prompt: no paragraph, answer from prior knowledge.
pub fn build_pk_prompt(inst: &Instance, spec: &PromptSpec) -> Result<String, PromptError> {
    spec.validate()?;
    if spec.mode != PromptMode::PkTest {
        return Err(PromptError::WrongMode { mode: spec.mode });
    }
    let mut out = String::from("Instructions:\n");
    for line in PK_INSTRUCTIONS {
        out.push_str("- ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&format!("\nQuestion: {PK_QUESTION}\nStatement: {}\nAnswer:", inst.statement));
    Ok(out)
}

/// One rendered prompt, keyed by instance id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub mode: PromptMode,
    pub prompt_checksum: String,
    pub prompt: String,
}

impl PromptRecord {
    pub fn new(id: &str, mode: PromptMode, prompt: String) -> Self {
        PromptRecord { id: id.to_string(), mode, prompt_checksum: sha256_hex(prompt.as_bytes()), prompt }
    }
}

/// Prompts for every instance in `targets`. Few-shot exemplars come from
/// `pool`; chain-of-thought exemplars from `cot`.
pub fn build_prompts(
    targets: &[Instance],
    spec: &PromptSpec,
    pool: &[Instance],
    cot: &CotExemplars,
    seed: u64,
) -> Result<Vec<PromptRecord>, PromptError> {
    spec.validate()?;
    let exemplars = match spec.mode {
        PromptMode::FewShot => select_exemplars(pool, spec.shots, seed)?,
        PromptMode::ChainOfThought => cot.take(spec.shots)?,
        PromptMode::ZeroShot | PromptMode::PkTest => Vec::new(),
    };
    targets
        .iter()
        .map(|inst| {
            let prompt = match spec.mode {
                PromptMode::PkTest => build_pk_prompt(inst, spec)?,
                _ => build_task_prompt(inst, spec, &exemplars)?,
            };
            Ok(PromptRecord::new(&inst.id, spec.mode, prompt))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 4, initial_backoff_ms: 500, max_backoff_ms: 16_000 }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }
}

/// Chat-completion endpoint settings. Holds the name of the token
/// variable, never the token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model: String,
    pub token_env: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: Option<u32>,
    pub max_parallel: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        ModelEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            token_env: None,
            temperature: 0.6,
            top_p: 0.9,
            max_tokens: None,
            max_parallel: 4,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn check_url(&self) -> Result<(), EndpointError> {
        let bad = |why: &str| EndpointError::BadUrl { url: self.base_url.clone(), reason: why.to_string() };
        let uri: ureq::http::Uri = self.completions_url().parse().map_err(|_| bad("not a valid URI"))?;
        match uri.scheme_str() {
            Some("http") | Some("https") => {}
            _ => return Err(bad("scheme must be http or https")),
        }
        if uri.host().is_none_or(str::is_empty) {
            return Err(bad("missing host"));
        }
        Ok(())
    }

    fn resolve_token(&self) -> Result<Option<String>, EndpointError> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(token) if !token.is_empty() => Ok(Some(token)),
                _ => Err(EndpointError::MissingToken { var: var.clone() }),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("bad endpoint URL `{url}`: {reason}")]
    BadUrl { url: String, reason: String },
    #[error("environment variable {var} holding the API token is unset or empty")]
    MissingToken { var: String },
    #[error("max_parallel must be at least 1")]
    NoWorkers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Transport,
    Timeout,
    HttpStatus,
    MalformedResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestFailure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub prompt_checksum: String,
    pub raw: Option<String>,
    /// `None` when no verdict could be extracted.
    pub extracted: Option<Label>,
    #[serde(default)]
    pub low_confidence: bool,
    pub latency_ms: u64,
    #[serde(default)]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RequestFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl EvalRecord {
    /// Record for a response obtained some other way than `query_model`.
    pub fn from_response(id: &str, prompt_checksum: &str, raw: &str) -> Self {
        let ext = extract_answer(raw);
        EvalRecord {
            id: id.to_string(),
            prompt_checksum: prompt_checksum.to_string(),
            raw: Some(raw.to_string()),
            extracted: ext.answer,
            low_confidence: ext.low_confidence,
            latency_ms: 0,
            retries: 0,
            failure: None,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

enum Attempt {
    Done { raw: String, prompt_tokens: Option<u64>, completion_tokens: Option<u64> },
    Retry(RequestFailure, Option<Duration>),
    Fatal(RequestFailure),
}

fn failure(kind: FailureKind, message: impl Into<String>) -> RequestFailure {
    RequestFailure { kind, message: message.into() }
}

fn attempt(agent: &ureq::Agent, url: &str, token: Option<&str>, body: &serde_json::Value) -> Attempt {
    let mut req = agent.post(url);
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    let mut resp = match req.send_json(body) {
        Ok(r) => r,
        Err(ureq::Error::Timeout(t)) => return Attempt::Retry(failure(FailureKind::Timeout, t.to_string()), None),
        Err(e) => return Attempt::Retry(failure(FailureKind::Transport, e.to_string()), None),
    };
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        let wait = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        return Attempt::Retry(failure(FailureKind::HttpStatus, format!("HTTP {status}")), wait);
    }
    if !(200..300).contains(&status) {
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        let snippet: String = text.chars().take(200).collect();
        return Attempt::Fatal(failure(FailureKind::HttpStatus, format!("HTTP {status}: {snippet}")));
    }
    let value: serde_json::Value = match resp.body_mut().read_json() {
        Ok(v) => v,
        Err(ureq::Error::Timeout(t)) => return Attempt::Retry(failure(FailureKind::Timeout, t.to_string()), None),
        Err(e) => return Attempt::Fatal(failure(FailureKind::MalformedResponse, e.to_string())),
    };
    let Some(raw) = value["choices"][0]["message"]["content"].as_str() else {
        return Attempt::Fatal(failure(FailureKind::MalformedResponse, "no choices[0].message.content"));
    };
    Attempt::Done {
        raw: raw.to_string(),
        prompt_tokens: value["usage"]["prompt_tokens"].as_u64(),
        completion_tokens: value["usage"]["completion_tokens"].as_u64(),
    }
}

fn query_one(agent: &ureq::Agent, endpoint: &ModelEndpoint, token: Option<&str>, prompt: &PromptRecord) -> EvalRecord {
    let mut body = json!({
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt.prompt}],
        "temperature": endpoint.temperature,
        "top_p": endpoint.top_p,
    });
    if let Some(n) = endpoint.max_tokens {
        body["max_tokens"] = json!(n);
    }
    let url = endpoint.completions_url();
    let started = Instant::now();
    let mut retries = 0;
    let mut record = EvalRecord {
        id: prompt.id.clone(),
        prompt_checksum: prompt.prompt_checksum.clone(),
        raw: None,
        extracted: None,
        low_confidence: false,
        latency_ms: 0,
        retries: 0,
        failure: None,
        prompt_tokens: None,
        completion_tokens: None,
    };
    loop {
        match attempt(agent, &url, token, &body) {
            Attempt::Done { raw, prompt_tokens, completion_tokens } => {
                let ext = extract_answer(&raw);
                record.extracted = ext.answer;
                record.low_confidence = ext.low_confidence;
                record.raw = Some(raw);
                record.prompt_tokens = prompt_tokens;
                record.completion_tokens = completion_tokens;
                break;
            }
            Attempt::Fatal(f) => {
                record.failure = Some(f);
                break;
            }
            Attempt::Retry(f, wait) => {
                if retries >= endpoint.retry.max_retries {
                    record.failure = Some(f);
                    break;
                }
                let backoff = endpoint.retry.backoff(retries);
                let max = Duration::from_millis(endpoint.retry.max_backoff_ms);
                std::thread::sleep(wait.map_or(backoff, |w| w.min(max)).max(backoff));
                retries += 1;
            }
        }
    }
    record.retries = retries;
    record.latency_ms = started.elapsed().as_millis() as u64;
    record
}

/// Sends every prompt with at most `max_parallel` requests in flight.
/// Request failures become records; only configuration errors abort.
pub fn query_model(endpoint: &ModelEndpoint, prompts: &[PromptRecord]) -> Result<Vec<EvalRecord>, EndpointError> {
    endpoint.check_url()?;
    let token = endpoint.resolve_token()?;
    if endpoint.max_parallel == 0 {
        return Err(EndpointError::NoWorkers);
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EvalRecord>>> = Mutex::new(vec![None; prompts.len()]);
    let workers = endpoint.max_parallel.min(prompts.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(prompt) = prompts.get(i) else { break };
                let record = query_one(&agent, endpoint, token.as_deref(), prompt);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(record);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every prompt is claimed by a worker"))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extraction {
    pub answer: Option<Label>,
    /// More than one distinct verdict keyword was in play.
    pub low_confidence: bool,
}

fn keywords(text: &str) -> Vec<Label> {
    let lower = text.to_ascii_lowercase();
    lower
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter_map(|w| match w {
            "true" => Some(Label::True),
            "false" => Some(Label::False),
            "uncertain" => Some(Label::Uncertain),
            _ => None,
        })
        .collect()
}

fn decide(found: &[Label]) -> Extraction {
    let answer = found.last().copied();
    let low_confidence = found.iter().any(|l| Some(*l) != answer);
    Extraction { answer, low_confidence }
}

/// Last verdict keyword on the last `Answer:` line that has one, otherwise
/// the last keyword anywhere in the text.
pub fn extract_answer(raw: &str) -> Extraction {
    for line in raw.lines().rev() {
        let cleaned = line.trim().trim_start_matches(|c: char| !c.is_ascii_alphanumeric()).to_ascii_lowercase();
        if let Some(rest) = cleaned.strip_prefix("answer") {
            let found = keywords(rest);
            if !found.is_empty() {
                return decide(&found);
            }
        }
    }
    decide(&keywords(raw))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Cell {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }

    fn finish(&mut self) {
        self.accuracy = if self.total == 0 { 0.0 } else { round1(100.0 * self.correct as f64 / self.total as f64) };
    }
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PkSummary {
    pub options: usize,
    pub random: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mode: PromptMode,
    pub overall: Cell,
    pub by_depth: BTreeMap<usize, Cell>,
    /// Depth-1 instances only, keyed by their single form.
    pub by_form: BTreeMap<ArgumentForm, Cell>,
    /// gold label -> predicted label (or "unparseable") -> count
    pub confusion: BTreeMap<Label, BTreeMap<String, usize>>,
    pub parse_failures: usize,
    pub parse_failure_rate: f64,
    pub request_failures: usize,
    pub low_confidence: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pk: Option<PkSummary>,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("record `{id}` matches no gold instance")]
    UnmatchedRecord { id: String },
    #[error("no records to score")]
    Empty,
}

const UNPARSEABLE: &str = "unparseable";

/// Pure and order-independent: permuting `records` gives the same report.
pub fn score(records: &[EvalRecord], gold: &[Instance], mode: PromptMode) -> Result<ScoreReport, ScoreError> {
    if records.is_empty() {
        return Err(ScoreError::Empty);
    }
    let by_id: HashMap<&str, &Instance> = gold.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut report = ScoreReport {
        mode,
        overall: Cell::default(),
        by_depth: BTreeMap::new(),
        by_form: BTreeMap::new(),
        confusion: BTreeMap::new(),
        parse_failures: 0,
        parse_failure_rate: 0.0,
        request_failures: 0,
        low_confidence: 0,
        pk: None,
    };
    for rec in records {
        let inst = by_id.get(rec.id.as_str()).ok_or_else(|| ScoreError::UnmatchedRecord { id: rec.id.clone() })?;
        let correct = rec.extracted == Some(inst.label);
        report.overall.add(correct);
        report.by_depth.entry(inst.meta.depth).or_default().add(correct);
        if inst.meta.depth == 1 {
            report.by_form.entry(inst.meta.root_form).or_default().add(correct);
        }
        let predicted = rec.extracted.map_or(UNPARSEABLE, Label::as_str).to_string();
        *report.confusion.entry(inst.label).or_default().entry(predicted).or_insert(0) += 1;
        if rec.failure.is_some() {
            report.request_failures += 1;
        } else if rec.extracted.is_none() {
            report.parse_failures += 1;
        }
        report.low_confidence += usize::from(rec.low_confidence);
    }
    report.overall.finish();
    report.by_depth.values_mut().for_each(Cell::finish);
    report.by_form.values_mut().for_each(Cell::finish);
    report.parse_failure_rate = round1(100.0 * report.parse_failures as f64 / records.len() as f64);
    if mode == PromptMode::PkTest {
        let options = Label::ALL.len();
        let random = round1(100.0 / options as f64);
        report.pk = Some(PkSummary { options, random, delta: round1((report.overall.accuracy - random).abs()) });
    }
    Ok(report)
}

impl ScoreReport {
    /// One row per breakdown cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("breakdown,cell,correct,total,accuracy\n");
        let row = |out: &mut String, breakdown: &str, key: &str, c: &Cell| {
            out.push_str(&format!("{breakdown},{key},{},{},{:.1}\n", c.correct, c.total, c.accuracy));
        };
        row(&mut out, "overall", "all", &self.overall);
        for (d, c) in &self.by_depth {
            row(&mut out, "depth", &d.to_string(), c);
        }
        for (f, c) in &self.by_form {
            row(&mut out, "form", f.name(), c);
        }
        for (gold, preds) in &self.confusion {
            for (pred, n) in preds {
                out.push_str(&format!("confusion,{gold}->{pred},,{n},\n"));
            }
        }
        if let Some(pk) = &self.pk {
            out.push_str(&format!("pk,random,,,{:.1}\npk,delta,,,{:.1}\n", pk.random, pk.delta));
        }
        out
    }
}

fn to_lines<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_prompts(path: &Path, prompts: &[PromptRecord]) -> Result<(), DatasetError> {
    write_atomic(path, to_lines(prompts).as_bytes())
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<(), DatasetError> {
    write_atomic(path, to_lines(records).as_bytes())
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_prompts(path: &Path) -> Result<Vec<PromptRecord>, DatasetError> {
    read_lines(path)
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, DatasetError> {
    read_lines(path)
}
