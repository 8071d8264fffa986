#[path = "support/mock.rs"]
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use logicbench::dataset::{build_dataset, DatasetSplit, GenContext, Instance, Label};
use logicbench::eval::{
    build_pk_prompt, build_prompts, build_task_prompt, query_model, read_records, score, select_exemplars,
    write_records, CotExemplars, EvalRecord, Exemplar, FailureKind, ModelEndpoint, PromptError, PromptMode,
    PromptRecord, PromptSpec, RetryPolicy, ScoreError, PREAMBLE,
};
use logicbench::surface::{SentenceBank, TemplateSet};
use mock::{MockServer, Reply};

fn dataset(n: usize, seed: u64) -> DatasetSplit {
    let (bank, templates) = (SentenceBank::fallback(), TemplateSet::builtin());
    build_dataset(n, 1..=7, &GenContext::new(&bank, &templates, seed)).unwrap()
}

fn all(split: &DatasetSplit) -> Vec<Instance> {
    split.all().cloned().collect()
}

fn fast_endpoint(url: &str) -> ModelEndpoint {
    let mut e = ModelEndpoint::new(url, "mock-model");
    e.retry = RetryPolicy { max_retries: 2, initial_backoff_ms: 5, max_backoff_ms: 20 };
    e.timeout_secs = 5;
    e
}

fn answer(id: &str, label: Option<Label>) -> EvalRecord {
    let raw = label.map_or("I cannot tell.".to_string(), |l| format!("Answer: {l}"));
    EvalRecord::from_response(id, "x", &raw)
}

#[test]
fn zero_shot_prompt_layout() {
    let split = dataset(21, 1);
    let inst = &split.test.first().unwrap_or(&split.train[0]).clone();
    let prompt = build_task_prompt(inst, &PromptSpec::new(PromptMode::ZeroShot), &[]).unwrap();
    assert!(prompt.starts_with(PREAMBLE.trim_end()));
    assert!(prompt.contains("- Disjunction Elimination\n"));
    assert!(prompt.contains("Assume that all premises in the paragraph are true."));
    assert!(prompt.contains(&inst.paragraph.join(" ")));
    assert!(prompt.contains(&format!("Statement: {}", inst.statement)));
    assert!(prompt.contains("Question: Is the statement true, false, or uncertain?"));
    assert!(!prompt.contains("Example 1"));
}

#[test]
fn few_shot_uses_three_stratified_train_exemplars() {
    let split = dataset(210, 2);
    let exemplars = select_exemplars(&split.train, 3, 7).unwrap();
    let mut labels: Vec<Label> = exemplars.iter().map(|e| e.label).collect();
    labels.sort();
    assert_eq!(labels, Label::ALL.to_vec());
    assert_eq!(exemplars, select_exemplars(&split.train, 3, 7).unwrap());

    let spec = PromptSpec::new(PromptMode::FewShot);
    let prompt = build_task_prompt(&split.test[0], &spec, &exemplars).unwrap();
    assert_eq!(prompt.matches("\nAnswer: ").count(), 3);
    assert!(prompt.contains("Example 3") && !prompt.contains("Example 4"));
    assert!(prompt.ends_with("Answer:"));

    let leaked = vec![exemplars[0].clone(), exemplars[1].clone(), Exemplar::from_instance(&split.test[0])];
    let err = build_task_prompt(&split.test[0], &spec, &leaked).unwrap_err();
    assert!(matches!(err, PromptError::ExemplarOverlap { .. }));
    let err = build_task_prompt(&split.test[0], &spec, &exemplars[..2]).unwrap_err();
    assert!(matches!(err, PromptError::ExemplarCount { expected: 3, got: 2 }));
}

#[test]
fn chain_of_thought_carries_worked_reasoning() {
    let split = dataset(21, 3);
    let cot = CotExemplars::builtin();
    let prompts = build_prompts(&split.train, &PromptSpec::new(PromptMode::ChainOfThought), &[], &cot, 0).unwrap();
    for p in &prompts {
        assert_eq!(p.prompt.matches("Reasoning: ").count(), 3);
        assert!(p.prompt.ends_with("Reasoning:"));
    }
    let too_many = PromptSpec::new(PromptMode::ChainOfThought).with_shots(4);
    assert!(build_prompts(&split.train, &too_many, &[], &cot, 0).is_err());
}

#[test]
fn pk_prompt_has_statement_but_no_premises() {
    let split = dataset(63, 4);
    let spec = PromptSpec::new(PromptMode::PkTest);
    for inst in split.all() {
        let prompt = build_pk_prompt(inst, &spec).unwrap();
        assert!(prompt.contains(&format!("Statement: {}", inst.statement)));
        assert!(prompt.contains("True, False, and Uncertain"));
        for premise in &inst.paragraph {
            assert!(!prompt.contains(premise.as_str()), "premise leaked into pk prompt");
        }
    }
    let mut doors = split.train[0].clone();
    doors.statement = "Doors are solids.".into();
    let prompt = build_pk_prompt(&doors, &spec).unwrap();
    assert!(prompt
        .contains("Question: Is the following statement true, false, or uncertain?\nStatement: Doors are solids."));
}

#[test]
fn healthy_endpoint_returns_one_record_per_prompt() {
    let server = MockServer::start(|req, _| {
        assert_eq!(req.auth.as_deref(), Some("Bearer sekrit"));
        assert_eq!(req.body["temperature"], 0.6);
        assert_eq!(req.body["top_p"], 0.9);
        Reply::content("Answer: TRUE")
    });
    std::env::set_var("LOGICBENCH_TEST_TOKEN", "sekrit");
    let mut endpoint = fast_endpoint(&server.base_url);
    endpoint.token_env = Some("LOGICBENCH_TEST_TOKEN".into());
    let prompts = vec![PromptRecord::new("q1", PromptMode::ZeroShot, "hello".into())];
    let records = query_model(&endpoint, &prompts).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].raw.as_deref(), Some("Answer: TRUE"));
    assert_eq!(records[0].extracted, Some(Label::True));
    assert_eq!(records[0].retries, 0);
    assert_eq!(records[0].prompt_tokens, Some(10));
    let serialized = serde_json::to_string(&endpoint).unwrap() + &serde_json::to_string(&records).unwrap();
    assert!(!serialized.contains("sekrit"));
}

#[test]
fn rate_limit_then_success_counts_one_retry() {
    let server = MockServer::start(|_, n| {
        if n == 0 {
            let mut r = Reply::status(429);
            r.headers.push(("Retry-After".into(), "0".into()));
            r
        } else {
            Reply::content("FALSE")
        }
    });
    let records =
        query_model(&fast_endpoint(&server.base_url), &[PromptRecord::new("q", PromptMode::ZeroShot, "p".into())])
            .unwrap();
    assert_eq!(records[0].retries, 1);
    assert_eq!(records[0].extracted, Some(Label::False));
    assert!(records[0].failure.is_none());
    assert_eq!(server.hits(), 2);
}

#[test]
fn persistent_server_errors_become_failure_records() {
    let server =
        MockServer::start(
            |req, _| {
                if req.prompt() == "bad" {
                    Reply::status(503)
                } else {
                    Reply::content("Answer: Uncertain")
                }
            },
        );
    let prompts = vec![
        PromptRecord::new("a", PromptMode::ZeroShot, "bad".into()),
        PromptRecord::new("b", PromptMode::ZeroShot, "good".into()),
    ];
    let records = query_model(&fast_endpoint(&server.base_url), &prompts).unwrap();
    assert_eq!(records[0].failure.as_ref().unwrap().kind, FailureKind::HttpStatus);
    assert_eq!(records[0].retries, 2);
    assert_eq!(records[1].extracted, Some(Label::Uncertain));
}

#[test]
fn unreachable_host_marks_transport_failures() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = fast_endpoint(&format!("http://127.0.0.1:{port}/v1"));
    let prompts: Vec<PromptRecord> =
        (0..3).map(|i| PromptRecord::new(&format!("q{i}"), PromptMode::ZeroShot, "p".into())).collect();
    let records = query_model(&endpoint, &prompts).unwrap();
    assert_eq!(records.len(), 3);
    for r in &records {
        assert_eq!(r.failure.as_ref().unwrap().kind, FailureKind::Transport);
        assert_eq!(r.retries, 2);
        assert_eq!(r.extracted, None);
    }
}

#[test]
fn in_flight_requests_stay_bounded() {
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (l, p) = (live.clone(), peak.clone());
    let server = MockServer::start(move |_, _| {
        let now = l.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(20));
        l.fetch_sub(1, Ordering::SeqCst);
        Reply::content("True")
    });
    let mut endpoint = fast_endpoint(&server.base_url);
    endpoint.max_parallel = 3;
    let prompts: Vec<PromptRecord> =
        (0..12).map(|i| PromptRecord::new(&format!("q{i}"), PromptMode::ZeroShot, format!("p{i}"))).collect();
    let records = query_model(&endpoint, &prompts).unwrap();
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let expected: Vec<String> = (0..12).map(|i| format!("q{i}")).collect();
    assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(peak.load(Ordering::SeqCst) <= 3);
}

#[test]
fn perfect_answers_score_full_marks() {
    let gold = all(&dataset(70, 5));
    let records: Vec<EvalRecord> = gold.iter().map(|i| answer(&i.id, Some(i.label))).collect();
    let report = score(&records, &gold, PromptMode::ZeroShot).unwrap();
    assert_eq!(report.overall.accuracy, 100.0);
    assert!(report.by_depth.values().all(|c| c.accuracy == 100.0));
    assert!(report.by_form.values().all(|c| c.accuracy == 100.0));
    assert_eq!(report.parse_failures, 0);
}

#[test]
fn shallow_only_profile() {
    let gold = all(&dataset(210, 6));
    let records: Vec<EvalRecord> = gold
        .iter()
        .map(|i| {
            let wrong = Label::ALL.into_iter().find(|l| *l != i.label).unwrap();
            answer(&i.id, Some(if i.meta.depth <= 3 { i.label } else { wrong }))
        })
        .collect();
    let report = score(&records, &gold, PromptMode::FewShot).unwrap();
    let profile: Vec<f64> = report.by_depth.values().map(|c| c.accuracy).collect();
    assert_eq!(profile, vec![100.0, 100.0, 100.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(report.overall.accuracy, 42.9);
    assert_eq!(report.by_depth.values().map(|c| c.total).sum::<usize>(), report.overall.total);
    for (label, row) in &report.confusion {
        let gold_count = gold.iter().filter(|i| i.label == *label).count();
        assert_eq!(row.values().sum::<usize>(), gold_count);
    }
}

#[test]
fn by_form_ignores_deeper_instances() {
    let gold = all(&dataset(140, 7));
    let shallow: Vec<EvalRecord> =
        gold.iter().filter(|i| i.meta.depth == 1).map(|i| answer(&i.id, Some(i.label))).collect();
    let mut everything = shallow.clone();
    everything.extend(gold.iter().filter(|i| i.meta.depth > 1).map(|i| answer(&i.id, None)));
    let a = score(&shallow, &gold, PromptMode::ZeroShot).unwrap();
    let b = score(&everything, &gold, PromptMode::ZeroShot).unwrap();
    assert_eq!(a.by_form, b.by_form);
    assert_ne!(a.overall, b.overall);
    assert_eq!(b.parse_failures, everything.len() - shallow.len());
}

#[test]
fn pk_delta_against_random() {
    let gold = all(&dataset(1000, 8));
    // 337 of 1000 correct
    let records: Vec<EvalRecord> = gold
        .iter()
        .enumerate()
        .map(|(k, i)| {
            let wrong = Label::ALL.into_iter().find(|l| *l != i.label).unwrap();
            answer(&i.id, Some(if k < 337 { i.label } else { wrong }))
        })
        .collect();
    let report = score(&records, &gold, PromptMode::PkTest).unwrap();
    assert_eq!(report.overall.accuracy, 33.7);
    let pk = report.pk.unwrap();
    assert_eq!(pk.random, 33.3);
    assert_eq!(pk.delta, 0.4);
}

#[test]
fn unmatched_records_are_errors() {
    let gold = all(&dataset(21, 9));
    let err = score(&[answer("nope", Some(Label::True))], &gold, PromptMode::ZeroShot).unwrap_err();
    assert!(matches!(err, ScoreError::UnmatchedRecord { .. }));
}

#[test]
fn records_round_trip_and_csv_has_every_cell() {
    let gold = all(&dataset(21, 10));
    let records: Vec<EvalRecord> = gold.iter().map(|i| answer(&i.id, Some(Label::True))).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    write_records(&path, &records).unwrap();
    assert_eq!(read_records(&path).unwrap(), records);
    let report = score(&records, &gold, PromptMode::PkTest).unwrap();
    let csv = report.to_csv();
    assert!(csv.starts_with("breakdown,cell,correct,total,accuracy\noverall,all,"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("depth,")).count(), 7);
    assert!(csv.contains("pk,random,,,33.3"));
}
