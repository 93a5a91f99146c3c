//! A minimal chat-completions server on localhost for tests and examples.
//!
//! Each connection is served on its own thread and closed after one response.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use regex::Regex;

use super::{Group, Query, QueryRole, RuleOracle};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StubRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: Option<f64>,
    pub authorization: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StubReply {
    /// 200 with this assistant message.
    Content(String),
    /// Error status with a body.
    Status(u16, String),
    /// Sleep, then drop the connection without answering.
    Hang(Duration),
}

type Responder = dyn Fn(&StubRequest) -> StubReply + Send + Sync;

pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<StubRequest>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(responder: F) -> io::Result<Self>
    where
        F: Fn(&StubRequest) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let responder: Arc<Responder> = Arc::new(responder);
        let (r, l, s) = (requests.clone(), log.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (r, l, responder) = (r.clone(), l.clone(), responder.clone());
                std::thread::spawn(move || {
                    let _ = serve(stream, &r, &l, responder.as_ref());
                });
            }
        });
        Ok(Self { addr, requests, log, stop, handle: Some(handle) })
    }

    /// Serves oracle verdicts wrapped in a short reasoning transcript.
    pub fn with_oracle(oracle: RuleOracle) -> io::Result<Self> {
        Self::start(move |req| match parse_user_prompt(&req.user) {
            Some(q) => match oracle.verdict(&q) {
                Ok(v) => StubReply::Content(format!(
                    "The command asks about {:?}. Considering {} {:?}.\nFinal answer: {}",
                    q.utterance,
                    q.group.phrase(),
                    q.candidate,
                    if v.is_yes() { "yes" } else { "no" }
                )),
                Err(e) => StubReply::Status(400, e.to_string()),
            },
            None => StubReply::Status(400, "unrecognised prompt".into()),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn log(&self) -> Vec<StubRequest> {
        self.log.lock().expect("log lock").clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, count: &AtomicUsize, log: &Mutex<Vec<StubRequest>>, responder: &Responder) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut authorization = None;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;
    count.fetch_add(1, Ordering::SeqCst);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    let message = |role: &str| {
        v["messages"]
            .as_array()
            .and_then(|ms| ms.iter().find(|m| m["role"] == role))
            .and_then(|m| m["content"].as_str())
            .unwrap_or_default()
            .to_string()
    };
    let req = StubRequest {
        model: v["model"].as_str().unwrap_or_default().to_string(),
        system: message("system"),
        user: message("user"),
        temperature: v["temperature"].as_f64(),
        authorization,
    };
    let reply = responder(&req);
    log.lock().expect("log lock").push(req);
    let (status, body) = match reply {
        StubReply::Content(text) => {
            let b = serde_json::json!({
                "id": "stub",
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
            });
            (200, b.to_string())
        }
        StubReply::Status(code, text) => (code, serde_json::json!({"error": {"message": text}}).to_string()),
        StubReply::Hang(d) => {
            std::thread::sleep(d);
            return Ok(());
        }
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    out.flush()
}

/// Recovers the query from a user prompt built by [`super::user_prompt`].
pub fn parse_user_prompt(user: &str) -> Option<Query> {
    let re = Regex::new(
        r#"^The command is "(.*)"\. In an instantiation of the environment that contains only some subset of the object types and colors, could the (target object|object to avoid) have (object type|object color) "(.*)"\?"#,
    )
    .expect("valid regex");
    let c = re.captures(user)?;
    let role = if &c[2] == "target object" { QueryRole::Target } else { QueryRole::Avoid };
    let group = if &c[3] == "object type" { Group::ObjectType } else { Group::ObjectColor };
    Some(Query { utterance: c[1].to_string(), group, candidate: c[4].to_string(), role })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::user_prompt;

    #[test]
    fn user_prompt_parses_back() {
        let u = user_prompt("Sweep the block without touching the pan.", Group::ObjectColor, "dark red swirl", QueryRole::Avoid);
        let q = parse_user_prompt(&u).unwrap();
        assert_eq!(q.utterance, "Sweep the block without touching the pan.");
        assert_eq!(q.group, Group::ObjectColor);
        assert_eq!(q.candidate, "dark red swirl");
        assert_eq!(q.role, QueryRole::Avoid);
    }
}
