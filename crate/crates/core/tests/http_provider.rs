use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use lexevo_core::provider::{HttpConfig, HttpProvider, Message, Provider, ProviderError, ProviderRequest, Role};

/// Serves the canned (status, body) pairs in order, one per connection, and
/// records each request body.
fn serve(responses: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0u8; len];
            reader.read_exact(&mut req).unwrap();
            log.lock().unwrap().push(String::from_utf8(req).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}"), seen)
}

fn config(base: &str) -> HttpConfig {
    let mut cfg = HttpConfig::new(base, "test-model");
    cfg.api_key = None;
    cfg.initial_backoff = Duration::from_millis(5);
    cfg.timeout = Duration::from_secs(5);
    cfg
}

fn request() -> ProviderRequest {
    ProviderRequest {
        session_id: "trial-001".into(),
        call_index: 1,
        template: "plan".into(),
        messages: vec![Message { role: Role::User, content: "hello".into() }],
        temperature: 0.7,
        max_tokens: 64,
    }
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}]}"#;

#[test]
fn retries_server_errors_then_succeeds() {
    let (base, seen) = serve(vec![(500, "{}"), (500, "{}"), (200, OK)]);
    let mut p = HttpProvider::new(config(&base));
    assert_eq!(p.complete(&request()).unwrap(), "hi there");
    let bodies = seen.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["temperature"], 0.7);
}

#[test]
fn gives_up_after_configured_attempts() {
    let (base, seen) = serve(vec![(503, "{}"), (503, "{}"), (503, "{}")]);
    let mut p = HttpProvider::new(config(&base));
    match p.complete(&request()) {
        Err(ProviderError::Unavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_fail_without_retry() {
    let (base, seen) = serve(vec![(401, r#"{"error":"bad key"}"#), (200, OK)]);
    let mut p = HttpProvider::new(config(&base));
    match p.complete(&request()) {
        Err(ProviderError::Rejected { status, body }) => {
            assert_eq!(status, 401);
            assert!(body.contains("bad key"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (base, _) = serve(vec![(200, r#"{"choices":[]}"#)]);
    let mut p = HttpProvider::new(config(&base));
    assert!(matches!(p.complete(&request()), Err(ProviderError::Malformed { .. })));
}

/// Talks to a real endpoint when LEXEVO_LIVE_URL is set.
#[test]
fn live_endpoint_smoke() {
    let Ok(url) = std::env::var("LEXEVO_LIVE_URL") else {
        eprintln!("LEXEVO_LIVE_URL not set; skipping");
        return;
    };
    let model = std::env::var("LEXEVO_LIVE_MODEL").unwrap_or_else(|_| HttpConfig::DEFAULT_MODEL.into());
    let mut p = HttpProvider::new(HttpConfig::new(url, model));
    let text = p.complete(&request()).expect("live call");
    assert!(!text.trim().is_empty());
}
