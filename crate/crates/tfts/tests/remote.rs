use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use tfts::remote::{RemoteBackend, RemoteConfig};
use tfts_core::writers::{WriterBackend, WriterError, WriterRequest};

enum Reply {
    Ok(&'static str, u64, u64),
    Status(u16),
    Hang(Duration),
}

struct Stub {
    url: String,
    bodies: Arc<std::sync::Mutex<Vec<String>>>,
    peak: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> String {
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0; length];
    let _ = reader.read_exact(&mut body);
    String::from_utf8_lossy(&body).into_owned()
}

fn respond(stream: &mut TcpStream, reply: &Reply) {
    let (status, body) = match reply {
        Reply::Ok(text, input, output) => (
            200,
            serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": text}}],
                "usage": {"prompt_tokens": input, "completion_tokens": output},
            })
            .to_string(),
        ),
        Reply::Status(code) => (*code, "{\"error\":\"stub\"}".to_string()),
        Reply::Hang(d) => {
            thread::sleep(*d);
            return;
        }
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

/// Serves `script` in order, one reply per connection; the last reply repeats.
fn stub(script: Vec<Reply>, delay: Duration) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let bodies = Arc::new(std::sync::Mutex::new(Vec::new()));
    let peak = Arc::new(AtomicUsize::new(0));
    let active = Arc::new(AtomicUsize::new(0));
    let script = Arc::new(script);
    let (b, p) = (bodies.clone(), peak.clone());
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { continue };
            let (b, p, active, script) = (b.clone(), p.clone(), active.clone(), script.clone());
            thread::spawn(move || {
                let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                p.fetch_max(now, Ordering::SeqCst);
                let body = read_request(&mut stream);
                b.lock().unwrap().push(body);
                thread::sleep(delay);
                respond(&mut stream, &script[i.min(script.len() - 1)]);
                active.fetch_sub(1, Ordering::SeqCst);
            });
        }
    });
    Stub { url, bodies, peak }
}

fn config(url: &str, key_env: &str) -> RemoteConfig {
    std::env::set_var(key_env, "test-key");
    RemoteConfig {
        timeout_ms: 2_000,
        max_retries: 2,
        max_in_flight: 4,
        ..RemoteConfig::new(url, "stub-model", key_env)
    }
}

fn request() -> WriterRequest {
    WriterRequest::new("Write one insight.".into(), "sleep-insight-v1", None)
}

#[test]
fn usage_comes_from_the_provider() {
    let s = stub(vec![Reply::Ok("{\"x\":1}", 10, 20)], Duration::ZERO);
    let backend = RemoteBackend::new(config(&s.url, "TFTS_TEST_KEY_USAGE"));
    let r = backend.write(&request()).unwrap();
    assert_eq!((r.raw_text.as_str(), r.input_tokens, r.output_tokens, r.attempts), ("{\"x\":1}", 10, 20, 1));
    let sent: serde_json::Value = serde_json::from_str(&s.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["model"], "stub-model");
    assert_eq!(sent["messages"][0]["content"], "Write one insight.");
    assert_eq!(sent["temperature"], 0);
    assert_eq!(r.request_body.as_deref(), Some(s.bodies.lock().unwrap()[0].as_str()));
    assert!(r.response_body.unwrap().contains("completion_tokens"));
}

#[test]
fn transient_failures_are_retried() {
    let s = stub(vec![Reply::Status(500), Reply::Status(500), Reply::Ok("ok", 1, 2)], Duration::from_millis(20));
    let backend = RemoteBackend::new(config(&s.url, "TFTS_TEST_KEY_RETRY"));
    let r = backend.write(&request()).unwrap();
    assert_eq!((r.raw_text.as_str(), r.attempts), ("ok", 3));
    assert!(r.latency_ms >= 60, "latency {} should cover all three attempts", r.latency_ms);
}

#[test]
fn retries_are_bounded() {
    let s = stub(vec![Reply::Status(503)], Duration::ZERO);
    let backend = RemoteBackend::new(RemoteConfig { max_retries: 1, ..config(&s.url, "TFTS_TEST_KEY_BOUND") });
    assert_eq!(backend.write(&request()), Err(WriterError::ProviderError(503)));
    assert_eq!(s.bodies.lock().unwrap().len(), 2);
}

#[test]
fn auth_and_client_errors_are_not_retried() {
    let s = stub(vec![Reply::Status(401)], Duration::ZERO);
    let backend = RemoteBackend::new(config(&s.url, "TFTS_TEST_KEY_AUTH"));
    assert_eq!(backend.write(&request()), Err(WriterError::AuthFailure));
    let s = stub(vec![Reply::Status(400)], Duration::ZERO);
    let backend = RemoteBackend::new(config(&s.url, "TFTS_TEST_KEY_400"));
    assert_eq!(backend.write(&request()), Err(WriterError::ProviderError(400)));
    assert_eq!(s.bodies.lock().unwrap().len(), 1);
}

#[test]
fn missing_key_is_an_auth_failure() {
    let backend = RemoteBackend::new(RemoteConfig::new("http://127.0.0.1:9", "m", "TFTS_TEST_KEY_NEVER_SET"));
    assert_eq!(backend.write(&request()), Err(WriterError::AuthFailure));
}

#[test]
fn hanging_server_times_out() {
    let s = stub(vec![Reply::Hang(Duration::from_secs(3))], Duration::ZERO);
    let backend =
        RemoteBackend::new(RemoteConfig { timeout_ms: 300, max_retries: 0, ..config(&s.url, "TFTS_TEST_KEY_HANG") });
    let started = Instant::now();
    assert_eq!(backend.write(&request()), Err(WriterError::Timeout(300)));
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn unreachable_host_is_a_transport_failure() {
    // bind then drop to get a port nobody listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let backend = RemoteBackend::new(RemoteConfig { max_retries: 0, ..config(&url, "TFTS_TEST_KEY_DOWN") });
    let started = Instant::now();
    assert!(matches!(backend.write(&request()), Err(WriterError::TransportFailure(_))));
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn in_flight_requests_are_capped() {
    let s = stub(vec![Reply::Ok("ok", 1, 1)], Duration::from_millis(100));
    let backend =
        Arc::new(RemoteBackend::new(RemoteConfig { max_in_flight: 2, ..config(&s.url, "TFTS_TEST_KEY_SLOTS") }));
    let handles: Vec<_> = (0..6)
        .map(|_| {
            let b = backend.clone();
            thread::spawn(move || b.write(&request()).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(s.bodies.lock().unwrap().len(), 6);
    assert!(s.peak.load(Ordering::SeqCst) <= 2, "peak {}", s.peak.load(Ordering::SeqCst));
}

#[test]
fn remote_runs_log_bodies_and_keep_going_on_errors() {
    use tfts::report::{aggregate_scored, score_traces};
    use tfts::runner::run_nights;
    use tfts_core::cohort::{generate_cohort, generate_history, CohortSpec};
    use tfts_core::model::ConditionId;
    use tfts_core::pipeline::{reference_nights, AnalysisConfig};

    let spec = CohortSpec { n_users: 1, nights_per_user: 3, ..CohortSpec::default() };
    let cfg = AnalysisConfig::default();
    let (nights, _) = reference_nights(&generate_cohort(&spec).unwrap(), &generate_history(&spec).unwrap(), &cfg);

    // artifact call, writer call, then a 400 for every later call
    let s =
        stub(vec![Reply::Ok("not an artifact", 5, 6), Reply::Ok("not json", 7, 8), Reply::Status(400)], Duration::ZERO);
    let backend = RemoteBackend::new(RemoteConfig { max_in_flight: 1, ..config(&s.url, "TFTS_TEST_KEY_RUN") });
    let traces = run_nights(&nights, ConditionId::ReplaceRanker, &backend, &cfg, &[], None, 1).unwrap();
    assert_eq!(traces.len(), 3);
    assert!(traces.iter().all(|t| t.calls.len() == 2));
    let first = &traces[0];
    assert!(first.calls.iter().all(|c| c.request_body.is_some() && c.response_body.is_some()));
    let artifact = first.artifact.as_ref().unwrap();
    assert!(!artifact.applied && artifact.error.is_some());
    assert_eq!(first.input_tokens(), 12);
    assert!(traces[2].calls.iter().all(|c| c.error.as_deref() == Some("provider error: HTTP 400")));
    let agg = &aggregate_scored(&score_traces(&traces, None).unwrap())[0].agg;
    assert_eq!(agg.schema_failures, 3);
}
