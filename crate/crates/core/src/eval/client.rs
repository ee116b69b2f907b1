//! HTTP text-service transport shared by the judge and the rephrase clients:
//! one JSON POST endpoint, bounded retries with linear backoff, and a
//! concurrent-request cap.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TextServiceError {
    #[error("request failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("endpoint returned malformed JSON: {0}")]
    BadReply(String),
}

/// Endpoint settings. The URL and model name come from configuration, the
/// credential from the named environment variable, never from code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    pub model: Option<String>,
    /// Environment variable holding the bearer credential, if any.
    pub api_key_env: Option<String>,
    pub timeout_s: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_concurrency: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: None,
            api_key_env: None,
            timeout_s: 30,
            max_attempts: 3,
            backoff_ms: 250,
            max_concurrency: 4,
        }
    }
}

/// Counting semaphore capping in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.permits.lock().unwrap();
        *n += 1;
        self.gate.cv.notify_one();
    }
}

/// Blocking JSON-over-HTTP client with retries. Requests are idempotent by
/// contract, so a retry after a transport failure is safe.
pub struct HttpTextService {
    config: EndpointConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl HttpTextService {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_s.max(1)))
            .build();
        let gate = Gate::new(config.max_concurrency);
        Self {
            config,
            agent,
            gate,
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// POSTs `body` to the configured URL and parses the JSON reply,
    /// retrying up to `max_attempts` with linear backoff.
    pub fn post_json(
        &self,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, TextServiceError> {
        let _permit = self.gate.acquire();
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms * (attempt as u64 - 1),
                ));
            }
            let mut req = self.agent.post(&self.config.url);
            if let Some(env_name) = &self.config.api_key_env {
                if let Ok(key) = std::env::var(env_name) {
                    req = req.set("authorization", &format!("Bearer {key}"));
                }
            }
            match req.send_json(body.clone()) {
                Ok(resp) => {
                    return resp
                        .into_json::<serde_json::Value>()
                        .map_err(|e| TextServiceError::BadReply(e.to_string()));
                }
                Err(e) => {
                    last = e.to_string();
                    log::warn!("text service attempt {attempt}/{attempts} failed: {last}");
                }
            }
        }
        Err(TextServiceError::Exhausted { attempts, last })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-request HTTP server for exercising the client offline.
    pub(crate) fn serve_once(
        status: u16,
        body: String,
    ) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 8192];
            let mut req = Vec::new();
            loop {
                let n = stream.read(&mut buf).unwrap();
                req.extend_from_slice(&buf[..n]);
                if let Some(head_end) = find_header_end(&req) {
                    let head = String::from_utf8_lossy(&req[..head_end]).to_string();
                    let len = content_length(&head);
                    if req.len() >= head_end + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&req).to_string()
        });
        (format!("http://{addr}"), handle)
    }

    fn find_header_end(req: &[u8]) -> Option<usize> {
        req.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
    }

    fn content_length(head: &str) -> usize {
        head.lines()
            .find_map(|l| {
                let (k, v) = l.split_once(':')?;
                k.eq_ignore_ascii_case("content-length")
                    .then(|| v.trim().parse().ok())?
            })
            .unwrap_or(0)
    }

    #[test]
    fn post_json_round_trip() {
        let (url, handle) = serve_once(200, r#"{"verdict":"correct","rationale":"ok"}"#.into());
        let svc = HttpTextService::new(EndpointConfig {
            url,
            backoff_ms: 0,
            ..EndpointConfig::default()
        });
        let reply = svc
            .post_json(&serde_json::json!({"question": "q"}))
            .unwrap();
        assert_eq!(reply["verdict"], "correct");
        let req = handle.join().unwrap();
        assert!(req.contains(r#""question":"q""#));
    }

    #[test]
    fn post_json_exhausts_attempts_on_dead_endpoint() {
        // Bind then drop a listener to get a port that refuses connections.
        let dead = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            format!("http://{}", l.local_addr().unwrap())
        };
        let svc = HttpTextService::new(EndpointConfig {
            url: dead,
            max_attempts: 2,
            backoff_ms: 0,
            timeout_s: 1,
            ..EndpointConfig::default()
        });
        match svc.post_json(&serde_json::json!({})) {
            Err(TextServiceError::Exhausted { attempts: 2, .. }) => {}
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }
}
