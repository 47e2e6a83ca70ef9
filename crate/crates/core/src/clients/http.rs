//! OpenAI-compatible HTTP backend.
//!
//! Speaks `POST {base_url}/embeddings` and `POST {base_url}/chat/completions`
//! with standard request/response bodies. The API key is read from the
//! environment variable named in the endpoint config and never logged.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    Backend, ClientError, Completion, EmbeddingVector, GenerationRequest, InferenceEndpoint,
};

pub struct LiveBackend {
    endpoint: InferenceEndpoint,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl LiveBackend {
    pub fn new(endpoint: InferenceEndpoint) -> Result<Self, ClientError> {
        endpoint.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_s)))
            .build()
            .into();
        let api_key = if endpoint.api_key_env.is_empty() {
            None
        } else {
            std::env::var(&endpoint.api_key_env).ok()
        };
        Ok(Self {
            endpoint,
            agent,
            api_key,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.endpoint.base_url.trim_end_matches('/'))
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<serde_json::Value, ClientError> {
        let mut req = self.agent.post(self.url(path));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send_json(body).map_err(|e| match &e {
            // 4xx other than 429 will not get better on retry.
            ureq::Error::StatusCode(code) if *code != 429 && *code < 500 => {
                ClientError::InvalidResponse(format!("HTTP {code} from {path}"))
            }
            _ => ClientError::EndpointUnavailable {
                attempts: 1,
                reason: e.to_string(),
            },
        })?;
        response
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::InvalidResponse(format!("bad JSON from {path}: {e}")))
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl Backend for LiveBackend {
    fn id(&self) -> String {
        format!("live:{}", self.endpoint.model_name)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ClientError> {
        let body = json!({
            "model": self.endpoint.model_name,
            "input": texts,
        });
        let value = self.post("embeddings", body)?;
        let parsed: EmbeddingsResponse = serde_json::from_value(value)
            .map_err(|e| ClientError::InvalidResponse(format!("embeddings body: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(ClientError::InvalidResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        let mut data = parsed.data;
        data.sort_by_key(|d| d.index);
        Ok(data
            .into_iter()
            .map(|d| EmbeddingVector::new(d.embedding))
            .collect())
    }

    fn complete(&self, req: &GenerationRequest) -> Result<Completion, ClientError> {
        let body = json!({
            "model": self.endpoint.model_name,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_content},
            ],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        });
        let value = self.post("chat/completions", body)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| ClientError::InvalidResponse(format!("chat body: {e}")))?;
        let choice =
            parsed.choices.into_iter().next().ok_or_else(|| {
                ClientError::InvalidResponse("no choices in chat response".into())
            })?;
        Ok(Completion {
            text: choice.message.content.unwrap_or_default(),
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn endpoint(base_url: &str) -> InferenceEndpoint {
        InferenceEndpoint {
            base_url: base_url.into(),
            model_name: "m".into(),
            api_key_env: String::new(),
            timeout_s: 0.2,
            max_retries: 0,
        }
    }

    #[test]
    fn url_joining_trims_trailing_slash() {
        let backend = LiveBackend::new(endpoint("http://localhost:9/v1/")).unwrap();
        assert_eq!(
            backend.url("embeddings"),
            "http://localhost:9/v1/embeddings"
        );
    }

    #[test]
    fn unreachable_endpoint_reports_unavailable() {
        // Port 9 (discard) is not listening in the test environment.
        let backend = LiveBackend::new(endpoint("http://127.0.0.1:9/v1")).unwrap();
        let req = GenerationRequest::deterministic("s".into(), "u".into(), 4);
        assert!(matches!(
            backend.complete(&req),
            Err(ClientError::EndpointUnavailable { .. })
        ));
    }

    #[test]
    fn invalid_base_url_is_rejected_at_construction() {
        assert!(LiveBackend::new(endpoint("not-a-url")).is_err());
    }
}
