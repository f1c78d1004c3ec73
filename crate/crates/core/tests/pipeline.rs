use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use docent_core::corpus::CorpusStore;
use docent_core::persona::{generate_personas, PersonaSource};
use docent_core::pipeline::backend::{
    synthesize_dialogue, BackendError, GenerationBackend, MockBackend, RemoteBackend, RemoteConfig,
};
use docent_core::pipeline::export::{read_records, Conversation, Speaker};
use docent_core::pipeline::{
    export_instruct, generate_dialogue, parse_transcript, plan_job, run_batch, validate_transcript, BatchConfig,
    BatchInputs, DialogueTranscript, InstructRecord, RetryPolicy, Role, RuleConfig, RuleId, Turn,
};
use proptest::prelude::*;

fn inputs() -> BatchInputs {
    let personas = generate_personas(12, 3, PersonaSource::Template).unwrap();
    BatchInputs::with_defaults(CorpusStore::default_store(), personas)
}

fn body_line() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.!?'\u{e9}\u{4e2d}-]{0,30}".prop_map(|s| s.trim_end().to_owned()).prop_filter(
        "not a role line",
        |s| {
            let l = s.to_ascii_lowercase();
            !l.starts_with("student") && !l.starts_with("teacher") && !s.is_empty()
        },
    )
}

fn turn_text() -> impl Strategy<Value = String> {
    prop::collection::vec(body_line(), 1..4).prop_map(|lines| lines.join("\n"))
}

fn transcript_strategy() -> impl Strategy<Value = DialogueTranscript> {
    (any::<bool>(), prop::collection::vec(turn_text(), 1..30)).prop_map(|(student_first, texts)| {
        let mut role = if student_first { Role::Student } else { Role::Teacher };
        let mut turns = Vec::new();
        for t in texts {
            turns.push(Turn::new(role, t));
            role = role.other();
        }
        DialogueTranscript::new(turns)
    })
}

fn record_strategy() -> impl Strategy<Value = InstructRecord> {
    ("[a-z0-9-]{1,12}", "[a-z/]{1,10}\\.(jpg|png)", prop::collection::vec("\\PC{0,40}", 1..12)).prop_map(
        |(id, image, values)| {
            let conversations = values
                .into_iter()
                .enumerate()
                .map(|(i, v)| Conversation {
                    from: if i % 2 == 0 { Speaker::Human } else { Speaker::Gpt },
                    value: if i == 0 { format!("<image>\n{v}") } else { v },
                })
                .collect();
            InstructRecord { id, image, conversations }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn transcript_text_round_trips(t in transcript_strategy()) {
        let text = t.to_text();
        let parsed = parse_transcript(&text).unwrap();
        prop_assert_eq!(&parsed, &t);
        prop_assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn instruct_records_round_trip(r in record_strategy()) {
        let line = r.to_json_line();
        let back: Vec<InstructRecord> = read_records(format!("{line}\n").as_bytes()).unwrap();
        prop_assert_eq!(&back[0], &r);
        prop_assert_eq!(back[0].to_json_line(), line);
    }

    #[test]
    fn export_then_recover_is_identity(t in transcript_strategy()) {
        let art = &CorpusStore::default_store().artworks()[0].clone();
        let r = export_instruct(&t, art, "x").unwrap();
        prop_assert!(r.schema_problems().is_empty());
        prop_assert_eq!(r.to_transcript().turns, t.turns);
    }

    #[test]
    fn adding_sentences_never_removes_warnings(t in transcript_strategy(), extra in "[A-Za-z ]{1,12}[.?]") {
        let rules = RuleConfig::default();
        let before = validate_transcript(&t, &rules);
        let mut longer = t.clone();
        for turn in &mut longer.turns {
            turn.text.push(' ');
            turn.text.push_str(&extra);
        }
        let after = validate_transcript(&longer, &rules);
        prop_assert_eq!(before.verdict, after.verdict);
        for w in &before.warnings {
            prop_assert!(after.warnings.iter().any(|x| x.rule == w.rule && x.turn == w.turn));
        }
    }
}

#[test]
fn batch_with_five_over_length_scripts() {
    let inputs = inputs();
    let n = 20;
    let mut mock = MockBackend::synthesizing();
    let long: String = (0..21).map(|i| format!("student: answer {i}\nteacher: Nice. What else?\n")).collect();
    for i in [1, 4, 9, 13, 17] {
        let plan = plan_job(&inputs, 77, i).unwrap();
        mock.insert(plan.prompt.checksum.clone(), long.clone());
    }
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.jsonl");
    let mut cfg = BatchConfig::new(n, 77);
    cfg.workers = 4;
    let summary = run_batch(&cfg, &inputs, &mock, &out).unwrap();
    assert_eq!(summary.attempted, 20);
    assert_eq!(summary.valid, 15);
    assert_eq!(summary.invalid_by_rule.get("MaxExchangesExceeded"), Some(&5));
    let records = read_records(BufReader::new(std::fs::File::open(&out).unwrap())).unwrap();
    assert_eq!(records.len(), 15);
    assert!(records.iter().all(|r| r.schema_problems().is_empty()));

    cfg.fill_to_n = true;
    let filled = run_batch(&cfg, &inputs, &mock, &out).unwrap();
    assert_eq!(filled.valid, 20);
    assert_eq!(filled.attempted, 25);
}

#[test]
fn synthesized_dialogues_are_valid() {
    let inputs = inputs();
    for i in 0..30 {
        let plan = plan_job(&inputs, 5, i).unwrap();
        let t = parse_transcript(&synthesize_dialogue(&plan.prompt.text)).unwrap();
        let report = validate_transcript(&t, &RuleConfig::default());
        assert!(report.is_valid(), "{:?}", report.errors);
        assert!(!report.has_warning(RuleId::MultipleQuestions));
        assert_eq!(t.turns[0].role, Role::Student);
    }
}

/// Serves one canned HTTP response per accepted connection.
fn serve(responses: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for response in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            seen.push(head);
            let mut stream = stream;
            stream.write_all(response.as_bytes()).unwrap();
        }
        seen
    });
    (url, handle)
}

fn http(status: &str, extra: &str, body: &str) -> String {
    format!("HTTP/1.1 {status}\r\n{extra}Content-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len())
}

fn remote(url: &str) -> RemoteBackend {
    RemoteBackend::new(
        RemoteConfig { base_url: url.to_owned(), model: "m".into(), timeout_secs: 5, max_concurrency: Some(2) },
        "secret",
    )
}

#[test]
fn unauthorized_endpoint_is_an_auth_error() {
    let (url, handle) = serve(vec![http("401 Unauthorized", "", "{}")]);
    let err = remote(&url).complete("hi").unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)), "{err:?}");
    let seen = handle.join().unwrap();
    assert!(seen[0].to_ascii_lowercase().contains("authorization: bearer secret"));
}

#[test]
fn rate_limits_are_retried_then_succeed() {
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"student: hi\nteacher: hello"}}]}"#;
    let (url, handle) = serve(vec![http("429 Too Many Requests", "Retry-After: 0\r\n", "{}"), http("200 OK", "", ok)]);
    let backend = remote(&url);
    let prompt = plan_job(&inputs(), 1, 0).unwrap().prompt;
    let policy = RetryPolicy { base_delay: Duration::from_millis(1), ..RetryPolicy::default() };
    let done = generate_dialogue(&prompt, &backend, &policy).unwrap();
    assert_eq!(done.retries, 1);
    assert_eq!(done.text, "student: hi\nteacher: hello");
    handle.join().unwrap();
}

#[test]
fn backend_failures_are_counted_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let summary = run_batch(&BatchConfig::new(4, 1), &inputs(), &MockBackend::silent(), &out).unwrap();
    assert_eq!(summary.backend_failures, 4);
    assert_eq!(summary.valid, 0);
    assert_eq!(std::fs::read_to_string(out).unwrap(), "");
}
