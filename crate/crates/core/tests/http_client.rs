//! HTTP chat-completion client against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use stylemt::llm::{Backend, HttpBackend, LlmError, ModelParams, RetryPolicy};
use stylemt::prompting::WireMessage;

struct Stub {
    url: String,
    requests: Arc<Mutex<Vec<(String, String)>>>,
}

/// Serves one scripted `(status, body)` response per connection.
fn stub(script: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock()
                .unwrap()
                .push((auth, String::from_utf8(buf).unwrap()));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    Stub { url, requests }
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "id": "x", "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]
    })
    .to_string()
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 4,
        initial_backoff_ms: 1,
        max_backoff_ms: 5,
        multiplier: 2.0,
        timeout_ms: 5_000,
    }
}

fn messages() -> Vec<WireMessage> {
    vec![
        WireMessage {
            role: "system".into(),
            content: "Translate German into English.".into(),
        },
        WireMessage {
            role: "user".into(),
            content: "Hallo Welt".into(),
        },
    ]
}

#[test]
fn returns_first_choice_content() {
    let s = stub(vec![(200, ok_body("Hello world"))]);
    let backend = HttpBackend::new(&s.url, "sk-test", fast_retry());
    let r = backend
        .complete(&messages(), &ModelParams::default())
        .unwrap();
    assert_eq!(r.text, "Hello world");
    assert_eq!(r.attempt_count, 1);
    assert!(r.backend_id.starts_with("http:"));

    let reqs = s.requests.lock().unwrap();
    assert_eq!(reqs[0].0, "Bearer sk-test");
    let body: serde_json::Value = serde_json::from_str(&reqs[0].1).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo-0301");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(body["messages"][1]["content"], "Hallo Welt");
    assert!(body.get("max_tokens").is_none());
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let s = stub(vec![
        (429, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("ok")),
    ]);
    let backend = HttpBackend::new(&s.url, "k", fast_retry());
    let r = backend
        .complete(&messages(), &ModelParams::default())
        .unwrap();
    assert_eq!(r.text, "ok");
    assert_eq!(r.attempt_count, 3);
}

#[test]
fn server_errors_are_transient() {
    let s = stub(vec![(503, "{}".into()), (200, ok_body("fine"))]);
    let backend = HttpBackend::new(&s.url, "k", fast_retry());
    assert_eq!(
        backend
            .complete(&messages(), &ModelParams::default())
            .unwrap()
            .attempt_count,
        2
    );
}

#[test]
fn auth_failure_is_not_retried() {
    let s = stub(vec![(401, r#"{"error":{"message":"bad key"}}"#.into())]);
    let backend = HttpBackend::new(&s.url, "k", fast_retry());
    let err = backend
        .complete(&messages(), &ModelParams::default())
        .unwrap_err();
    assert_eq!(
        err,
        LlmError::Auth {
            status: 401,
            attempts: 1
        }
    );
    assert_eq!(s.requests.lock().unwrap().len(), 1);
}

#[test]
fn rate_limit_exhaustion() {
    let s = stub(vec![(429, "{}".into()); 4]);
    let backend = HttpBackend::new(&s.url, "k", fast_retry());
    let err = backend
        .complete(&messages(), &ModelParams::default())
        .unwrap_err();
    assert_eq!(err, LlmError::RateLimited { attempts: 4 });
}

#[test]
fn other_client_errors_are_permanent() {
    let s = stub(vec![(400, "bad request".into())]);
    let backend = HttpBackend::new(&s.url, "k", fast_retry());
    let err = backend
        .complete(&messages(), &ModelParams::default())
        .unwrap_err();
    assert!(matches!(err, LlmError::Http { status: 400, .. }));
}

#[test]
fn malformed_response() {
    let s = stub(vec![(200, "not json".into())]);
    let backend = HttpBackend::new(&s.url, "k", fast_retry());
    let err = backend
        .complete(&messages(), &ModelParams::default())
        .unwrap_err();
    assert!(matches!(err, LlmError::MalformedResponse(_)));
}

#[test]
fn max_tokens_is_forwarded() {
    let s = stub(vec![(200, ok_body("x"))]);
    let backend = HttpBackend::new(&s.url, "k", fast_retry());
    let params = ModelParams {
        max_tokens: Some(256),
        ..Default::default()
    };
    backend.complete(&messages(), &params).unwrap();
    let body: serde_json::Value = serde_json::from_str(&s.requests.lock().unwrap()[0].1).unwrap();
    assert_eq!(body["max_tokens"], 256);
}
