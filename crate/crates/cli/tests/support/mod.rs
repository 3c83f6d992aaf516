//! Test helpers: a minimal chat-completions stub server and a capturing logger.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug, Clone, Copy)]
pub enum StubMode {
    Ok,
    /// Every request fails with this status; the body echoes the request's
    /// Authorization header to check that error paths redact it.
    AlwaysStatus(u16),
    /// The first `n` requests get a 503, later ones succeed.
    FailFirst(usize),
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub authorization: Option<String>,
    pub body: String,
}

pub struct StubServer {
    pub base_url: String,
    pub hits: Arc<AtomicUsize>,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Recorded> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut content_length = 0;
    let mut authorization = None;
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    loop {
        line.clear();
        reader.read_line(&mut line).ok()?;
        let header = line.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body).ok()?;
    Some(Recorded {
        authorization,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

fn reply_for(body: &str) -> String {
    if body.contains("single integer") {
        "4".to_string()
    } else {
        "[Speak]: I agree, it sounds plausible.\n[Think]: I doubt it, honestly.".to_string()
    }
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Service Unavailable",
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.flush();
}

impl StubServer {
    pub fn start(mode: StubMode) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let base_url = format!("http://{}/v1", listener.local_addr().expect("addr"));
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (h, r) = (Arc::clone(&hits), Arc::clone(&requests));
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let Some(request) = read_request(&mut stream) else {
                    continue;
                };
                let n = h.fetch_add(1, Ordering::SeqCst);
                let auth = request.authorization.clone().unwrap_or_default();
                let content = reply_for(&request.body);
                r.lock().unwrap().push(request);
                match mode {
                    StubMode::AlwaysStatus(status) => respond(
                        &mut stream,
                        status,
                        &format!("{{\"error\":\"upstream down for {auth}\"}}"),
                    ),
                    StubMode::FailFirst(k) if n < k => {
                        respond(&mut stream, 503, "{\"error\":\"busy\"}")
                    }
                    _ => {
                        let body = serde_json::json!({
                            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
                        });
                        respond(&mut stream, 200, &body.to_string())
                    }
                }
            }
        });
        Self {
            base_url,
            hits,
            requests,
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// Records every log line at any level.
pub struct CaptureLogger {
    lines: Mutex<Vec<String>>,
}

impl log::Log for CaptureLogger {
    fn enabled(&self, _: &log::Metadata<'_>) -> bool {
        true
    }
    fn log(&self, record: &log::Record<'_>) {
        self.lines.lock().unwrap().push(format!(
            "{} {}: {}",
            record.level(),
            record.target(),
            record.args()
        ));
    }
    fn flush(&self) {}
}

/// Installs the capturing logger (once per process) and returns it.
pub fn capture_logs() -> &'static CaptureLogger {
    static LOGGER: OnceLock<&'static CaptureLogger> = OnceLock::new();
    LOGGER.get_or_init(|| {
        let logger: &'static CaptureLogger = Box::leak(Box::new(CaptureLogger {
            lines: Mutex::new(Vec::new()),
        }));
        log::set_logger(logger).expect("no other logger installed");
        log::set_max_level(log::LevelFilter::Trace);
        logger
    })
}

impl CaptureLogger {
    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().unwrap().clone()
    }
}
