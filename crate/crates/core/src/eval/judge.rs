//! Judge endpoint contract: POST {question, reference, prediction} and read
//! back {verdict, rationale}. The concrete judge model sits behind an HTTP
//! endpoint named in configuration; tests use local mocks.

use serde::{Deserialize, Serialize};

use super::client::{EndpointConfig, HttpTextService, TextServiceError};

#[derive(Debug, Clone, Serialize)]
pub struct JudgeRequest<'a> {
    pub question: &'a str,
    pub reference: &'a str,
    pub prediction: &'a str,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct JudgeReply {
    pub verdict: String,
    #[serde(default)]
    pub rationale: String,
}

impl JudgeReply {
    /// Interprets the verdict token. Anything that is not clearly "correct"
    /// counts as incorrect.
    pub fn is_correct(&self) -> bool {
        let v = self.verdict.trim().to_ascii_lowercase();
        v == "correct" || v == "yes" || v == "true"
    }
}

/// Something that can judge a prediction against a reference answer.
pub trait Judge: Send + Sync {
    fn judge(&self, request: &JudgeRequest<'_>) -> Result<JudgeReply, TextServiceError>;
}

/// HTTP-backed judge.
pub struct HttpJudge {
    service: HttpTextService,
}

impl HttpJudge {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            service: HttpTextService::new(config),
        }
    }
}

impl Judge for HttpJudge {
    fn judge(&self, request: &JudgeRequest<'_>) -> Result<JudgeReply, TextServiceError> {
        let mut body = serde_json::to_value(request).expect("judge request serializes");
        if let Some(model) = &self.service.config().model {
            body["model"] = serde_json::Value::String(model.clone());
        }
        let reply = self.service.post_json(&body)?;
        serde_json::from_value(reply).map_err(|e| TextServiceError::BadReply(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_token_interpretation() {
        let ok = JudgeReply {
            verdict: " Correct ".into(),
            rationale: String::new(),
        };
        assert!(ok.is_correct());
        let bad = JudgeReply {
            verdict: "incorrect".into(),
            rationale: "mismatch".into(),
        };
        assert!(!bad.is_correct());
    }

    #[test]
    fn http_judge_round_trip_against_local_mock() {
        let (url, handle) = super::super::client::tests::serve_once(
            200,
            r#"{"verdict":"incorrect","rationale":"prediction names the wrong side"}"#.into(),
        );
        let judge = HttpJudge::new(EndpointConfig {
            url,
            model: Some("judge-model".into()),
            backoff_ms: 0,
            ..EndpointConfig::default()
        });
        let reply = judge
            .judge(&JudgeRequest {
                question: "which is left?",
                reference: "the chair",
                prediction: "the table",
            })
            .unwrap();
        assert!(!reply.is_correct());
        assert!(reply.rationale.contains("wrong side"));
        let raw = handle.join().unwrap();
        assert!(raw.contains(r#""model":"judge-model""#));
        assert!(raw.contains(r#""reference":"the chair""#));
    }
}
