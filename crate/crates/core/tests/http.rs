//! HTTP clients against a local canned-response server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use mislc::gateways::llm::HttpLlmConfig;
use mislc::gateways::search::HttpSearchConfig;
use mislc::gateways::{
    GatewayError, GenerationRequest, HttpFetcher, HttpLlm, HttpSearch, LanguageModel, NetConfig, PageFetcher,
    WebSearch,
};

struct Server {
    url: String,
    /// Request line and body of every request received.
    seen: Arc<Mutex<Vec<(String, String)>>>,
}

/// Serves `replies` (status, body) in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut req_body = vec![0; length];
            reader.read_exact(&mut req_body).unwrap();
            log.lock()
                .unwrap()
                .push((request_line.trim().to_string(), String::from_utf8_lossy(&req_body).into_owned()));
            let mut stream = reader.into_inner();
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    Server { url, seen }
}

fn fast_net() -> NetConfig {
    NetConfig {
        rps: 0.0,
        max_retries: 2,
        backoff: Duration::from_millis(5),
        timeout: Duration::from_secs(5),
    }
}

fn chat_body() -> String {
    serde_json::json!({
        "choices": [{
            "message": {"content": "Misinformation."},
            "finish_reason": "stop",
            "logprobs": {"content": [
                {"token": "Mis", "logprob": -0.1},
                {"token": "information.", "logprob": -0.5}
            ]}
        }]
    })
    .to_string()
}

fn llm(url: &str) -> HttpLlm {
    HttpLlm::new(HttpLlmConfig {
        endpoint: format!("{url}/v1/chat/completions"),
        model: "test-model".into(),
        api_key: Some("secret".into()),
        net: fast_net(),
    })
}

#[test]
fn chat_retries_server_errors_then_parses() {
    let server = serve(vec![(500, "{}".into()), (200, chat_body())]);
    let mut req = GenerationRequest::new("Claim: x");
    req.continuation = "So far".into();
    req.want_logprobs = true;
    let resp = llm(&server.url).generate(&req).unwrap();
    assert_eq!(resp.text, "Misinformation.");
    assert_eq!(resp.tokens.len(), 2);
    assert!((resp.tokens[1].prob() - (-0.5f64).exp()).abs() < 1e-12);

    let seen = server.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[1].0.starts_with("POST /v1/chat/completions"));
    let body: serde_json::Value = serde_json::from_str(&seen[1].1).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["logprobs"], true);
    assert_eq!(body["messages"][1]["content"], "So far");
}

#[test]
fn chat_gives_up_after_max_retries() {
    let server = serve(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let err = llm(&server.url).generate(&GenerationRequest::new("p")).unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
    assert_eq!(server.seen.lock().unwrap().len(), 3);
}

#[test]
fn chat_missing_logprobs_is_reported() {
    let body = serde_json::json!({"choices": [{"message": {"content": "factual"}, "finish_reason": "stop"}]});
    let server = serve(vec![(200, body.to_string())]);
    let mut req = GenerationRequest::new("p");
    req.want_logprobs = true;
    let err = llm(&server.url).generate(&req).unwrap_err();
    assert_eq!(err, GatewayError::LogprobsUnavailable);
}

#[test]
fn chat_client_error_is_protocol() {
    let server = serve(vec![(404, "not here".into())]);
    let err = llm(&server.url).generate(&GenerationRequest::new("p")).unwrap_err();
    assert!(matches!(err, GatewayError::Protocol(ref m) if m.contains("404")), "{err:?}");
}

fn search(url: &str) -> HttpSearch {
    HttpSearch::new(HttpSearchConfig {
        endpoint: format!("{url}/customsearch/v1"),
        api_key: Some("k".into()),
        cx: Some("engine".into()),
        net: fast_net(),
    })
}

#[test]
fn search_parses_results_and_sends_params() {
    let body = serde_json::json!({"items": [
        {"title": "A", "link": "https://a.example", "snippet": "first"},
        {"title": "B", "link": "https://b.example", "snippet": "second"},
        {"title": "C", "link": "https://c.example", "snippet": "third"}
    ]});
    let server = serve(vec![(200, body.to_string())]);
    let hits = search(&server.url).search("is the moon cheese", 2).unwrap();
    assert_eq!(hits.len(), 2);
    assert_eq!((hits[0].rank, hits[0].snippet.as_str()), (1, "first"));
    let line = server.seen.lock().unwrap()[0].0.clone();
    assert!(line.starts_with("GET /customsearch/v1?"), "{line}");
    for part in ["q=is", "num=2", "key=k", "cx=engine"] {
        assert!(line.contains(part), "{line} lacks {part}");
    }
}

#[test]
fn search_quota_is_not_retried() {
    let server = serve(vec![(403, r#"{"error": "Daily Limit Exceeded"}"#.into()), (200, "{}".into())]);
    let err = search(&server.url).search("q", 10).unwrap_err();
    assert!(matches!(err, GatewayError::QuotaExceeded(_)), "{err:?}");
    assert_eq!(server.seen.lock().unwrap().len(), 1);
}

#[test]
fn search_rate_limit_retried() {
    let server = serve(vec![(429, "slow down".into()), (200, r#"{"items": []}"#.into())]);
    assert!(search(&server.url).search("q", 10).unwrap().is_empty());
}

#[test]
fn fetcher_reads_http_and_files() {
    let server = serve(vec![(200, "<p>page</p>".into())]);
    let fetcher = HttpFetcher::new(fast_net());
    assert_eq!(fetcher.fetch(&format!("{}/page", server.url)).unwrap(), "<p>page</p>");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.html");
    std::fs::write(&path, "<b>local</b>").unwrap();
    assert_eq!(fetcher.fetch(&format!("file://{}", path.display())).unwrap(), "<b>local</b>");
    assert!(matches!(
        fetcher.fetch("file:///definitely/not/here"),
        Err(GatewayError::Transport(_))
    ));
}

#[test]
fn unreachable_host_is_transport() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = llm(&format!("http://127.0.0.1:{port}")).generate(&GenerationRequest::new("p")).unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
}
