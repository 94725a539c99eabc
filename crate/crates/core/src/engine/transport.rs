use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, EngineError, EngineReply, EngineRequest, Usage};

pub const ENV_URL: &str = "FEATGEO_ENGINE_URL";
pub const ENV_MODEL: &str = "FEATGEO_MODEL";
pub const ENV_API_KEY: &str = "FEATGEO_API_KEY";
pub const ENV_CACHE_DIR: &str = "FEATGEO_CACHE_DIR";

/// Chat-completion endpoint: `POST {base_url}/chat/completions`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Result<Self, EngineError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            client,
        })
    }

    pub fn from_env() -> Result<Self, EngineError> {
        let url = std::env::var(ENV_URL)
            .map_err(|_| EngineError::Precondition(format!("{ENV_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| EngineError::Precondition(format!("{ENV_MODEL} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        HttpBackend::new(&url, &model, key)
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

fn parse_reply(body: &Value) -> Result<(String, Option<Usage>), EngineError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| EngineError::Transport(format!("reply has no message content: {body}")))?;
    let usage = match (
        body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        body.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    ) {
        (Some(p), Some(c)) => Some(Usage {
            prompt_tokens: p,
            completion_tokens: c,
        }),
        _ => None,
    };
    Ok((text.to_string(), usage))
}

impl Backend for HttpBackend {
    fn identity(&self) -> String {
        format!("http/{}", self.model)
    }

    fn complete(&self, req: &EngineRequest) -> Result<EngineReply, EngineError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature.value(),
        });
        let started = Instant::now();
        let mut call = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| EngineError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| EngineError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EngineError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| EngineError::Transport(format!("invalid JSON reply: {e}")))?;
        let (text, usage) = parse_reply(&value)?;
        Ok(EngineReply {
            text,
            usage,
            latency_us: Some(started.elapsed().as_micros() as u64),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_openai_style_reply() {
        let v = json!({
            "choices": [{"message": {"role": "assistant", "content": "hi"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3}
        });
        let (text, usage) = parse_reply(&v).unwrap();
        assert_eq!(text, "hi");
        assert_eq!(usage.unwrap().prompt_tokens, 12);
        let bare = json!({"choices": [{"message": {"content": "x"}}]});
        assert_eq!(parse_reply(&bare).unwrap().1, None);
        assert!(parse_reply(&json!({})).is_err());
    }
}
