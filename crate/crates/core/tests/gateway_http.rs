use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use ulsched::channel::generate_channels;
use ulsched::episode::EpisodeRunner;
use ulsched::gateway::{BackendConfig, Gateway, GatewayConfig};
use ulsched::prompt::PromptTemplates;
use ulsched::{FeedbackStatus, McsTable, PolicySpec, WlanConfig};

#[derive(Clone, Copy)]
enum Mode {
    /// Agent k asks for RU (k % R) + 1, wrapped in prose.
    Chatty,
    /// OpenAI-style `choices` envelope.
    Choices,
    /// First `n` requests get HTTP 500.
    FailFirst(usize),
    /// Sleep before answering.
    Slow(u64),
}

struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Value> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    serde_json::from_slice(&body).ok()
}

fn agent_of(body: &Value) -> usize {
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    let tail = &prompt[prompt.find("You are Agent_").map_or(0, |i| i + 14)..];
    tail.chars().take_while(char::is_ascii_digit).collect::<String>().parse().unwrap_or(0)
}

fn spawn(mode: Mode, n_rus: usize) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let active = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, a, p, b) = (hits.clone(), active.clone(), peak.clone(), bodies.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (h, a, p, b) = (h.clone(), a.clone(), p.clone(), b.clone());
            thread::spawn(move || {
                let now = a.fetch_add(1, Ordering::SeqCst) + 1;
                p.fetch_max(now, Ordering::SeqCst);
                let Some(body) = read_request(&mut stream) else {
                    a.fetch_sub(1, Ordering::SeqCst);
                    return;
                };
                let nth = h.fetch_add(1, Ordering::SeqCst);
                let id = agent_of(&body);
                b.lock().unwrap().push(body);
                let intent = json!({"agent_id": id, "assigned_rus": [(id - 1) % n_rus + 1], "reasoning": "test"});
                let (status, payload) = match mode {
                    Mode::FailFirst(k) if nth < k => ("500 Internal Server Error", json!({"error": "busy"})),
                    Mode::Choices => ("200 OK", json!({"choices": [{"message": {"content": intent.to_string()}}]})),
                    Mode::Slow(ms) => {
                        thread::sleep(Duration::from_millis(ms));
                        ("200 OK", json!({"message": {"role": "assistant", "content": intent.to_string()}}))
                    }
                    _ => (
                        "200 OK",
                        json!({"message": {"role": "assistant", "content": format!("Sure! Here is my choice:\n```json\n{intent}\n```")}}),
                    ),
                };
                let text = payload.to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.flush();
                a.fetch_sub(1, Ordering::SeqCst);
            });
        }
    });
    Server { url, hits, peak, bodies }
}

fn http_config(url: &str, retries: u32, timeout_ms: u64, max_in_flight: usize) -> GatewayConfig {
    let mut cfg = GatewayConfig::new(BackendConfig::Http {
        endpoint: url.to_string(),
        model: "test-model".into(),
        path: "/api/chat".into(),
        timeout_ms,
        retries,
        backoff_ms: 10,
    });
    cfg.max_in_flight = max_in_flight;
    cfg
}

fn run_llm(gw: &Gateway, n: usize, t: usize) -> ulsched::episode::EpisodeOutput {
    let chan = generate_channels(&WlanConfig::new(n, 2, 9, t).with_seed(8)).unwrap();
    let table = McsTable::default();
    let templates = PromptTemplates::default();
    let mut runner = EpisodeRunner::new(&table, &templates);
    runner.gateway = Some(gw);
    runner.run(&chan, &PolicySpec::Llm, 0).unwrap()
}

#[test]
fn prose_wrapped_answers_parse() {
    let server = spawn(Mode::Chatty, 9);
    let gw = Gateway::from_config(&http_config(&server.url, 0, 5_000, 4)).unwrap();
    let out = run_llm(&gw, 4, 3);
    assert_eq!(server.hits.load(Ordering::SeqCst), 12);
    for s in &out.record.slots {
        assert!(s.statuses.iter().all(|f| *f == FeedbackStatus::ParseSuccess));
        for i in 0..4 {
            let expect: Vec<bool> = (0..9).map(|l| l == i).collect();
            assert_eq!(s.proposed.row(i), expect.as_slice());
        }
    }
    assert_eq!(out.responses.len(), 12);
    assert!(out.responses.iter().all(|r| r.raw.is_some() && r.prompt_hash.len() == 16));
    let bodies = server.bodies.lock().unwrap();
    for b in bodies.iter() {
        assert_eq!(b["model"], "test-model");
        assert_eq!(b["stream"], false);
        assert_eq!(b["format"], "json");
        assert_eq!(b["messages"][0]["role"], "user");
    }
}

#[test]
fn choices_envelope_accepted() {
    let server = spawn(Mode::Choices, 9);
    let gw = Gateway::from_config(&http_config(&server.url, 0, 5_000, 2)).unwrap();
    let out = run_llm(&gw, 3, 1);
    assert!(out.record.slots[0].statuses.iter().all(|f| !f.is_error()));
}

#[test]
fn retries_recover_from_server_errors() {
    let server = spawn(Mode::FailFirst(2), 9);
    let gw = Gateway::from_config(&http_config(&server.url, 2, 5_000, 1)).unwrap();
    let out = run_llm(&gw, 2, 1);
    assert!(out.record.slots[0].statuses.iter().all(|f| !f.is_error()));
    assert_eq!(server.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn exhausted_retries_give_zero_rows() {
    let server = spawn(Mode::FailFirst(usize::MAX), 9);
    let gw = Gateway::from_config(&http_config(&server.url, 1, 5_000, 2)).unwrap();
    let out = run_llm(&gw, 2, 1);
    let s = &out.record.slots[0];
    assert_eq!(s.proposed.count_ones(), 0);
    assert_eq!(s.rate_sum, 0.0);
    assert!(s.statuses.iter().all(|f| matches!(f, FeedbackStatus::ParseError(d) if d.starts_with("gateway:"))));
    assert_eq!(out.transport_failures(), 2);
    assert_eq!(server.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn unreachable_endpoint_contained() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gw = Gateway::from_config(&http_config(&format!("http://127.0.0.1:{port}"), 0, 1_000, 4)).unwrap();
    let out = run_llm(&gw, 3, 2);
    assert_eq!(out.transport_failures(), 6);
    for s in &out.record.slots {
        assert_eq!(s.assignment.count_ones(), 0);
        assert!(s.statuses.iter().all(FeedbackStatus::is_error));
    }
    // failures feed back into the next slot's prompts
    let p = out.record.slots[1].prompts.as_ref().unwrap();
    assert!(p.iter().all(|x| x.contains("could not be parsed")));
}

#[test]
fn timeout_is_a_transport_failure() {
    let server = spawn(Mode::Slow(1_500), 9);
    let gw = Gateway::from_config(&http_config(&server.url, 0, 200, 2)).unwrap();
    let out = run_llm(&gw, 2, 1);
    assert_eq!(out.transport_failures(), 2);
}

#[test]
fn in_flight_limit_respected() {
    let server = spawn(Mode::Slow(60), 9);
    let gw = Gateway::from_config(&http_config(&server.url, 0, 5_000, 2)).unwrap();
    let out = run_llm(&gw, 6, 1);
    assert!(out.record.slots[0].statuses.iter().all(|f| !f.is_error()));
    let peak = server.peak.load(Ordering::SeqCst);
    assert!((1..=2).contains(&peak), "peak concurrency {peak}");
}
