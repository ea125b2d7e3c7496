use std::time::Duration;

use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum EndpointError {
    #[error("endpoint not configured: {0}")]
    NotConfigured(&'static str),
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// Assistant text plus the raw body kept for audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub content: String,
    pub raw: String,
}

pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<ChatReply, EndpointError>;
}

/// OpenAI-style chat-completion client.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
}

impl HttpEndpoint {
    /// Reads `SYNTH_ENDPOINT` and optional `SYNTH_API_KEY`.
    pub fn from_env(model: impl Into<String>, temperature: f64) -> Result<HttpEndpoint, EndpointError> {
        let url = std::env::var("SYNTH_ENDPOINT").map_err(|_| EndpointError::NotConfigured("SYNTH_ENDPOINT is unset"))?;
        Ok(HttpEndpoint {
            url,
            api_key: std::env::var("SYNTH_API_KEY").ok().filter(|k| !k.is_empty()),
            model: model.into(),
            temperature,
            timeout: Duration::from_secs(300),
        })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        })
    }
}

pub(crate) fn parse_reply(raw: String) -> Result<ChatReply, EndpointError> {
    let v: Value = serde_json::from_str(&raw).map_err(|e| EndpointError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| EndpointError::Malformed("missing choices[0].message.content".into()))?
        .to_string();
    Ok(ChatReply { content, raw })
}

impl ChatEndpoint for HttpEndpoint {
    fn complete(&self, prompt: &str) -> Result<ChatReply, EndpointError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut req = agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(&self.request_body(prompt)).expect("json value serializes");
        let mut resp = req.send(body.as_bytes()).map_err(|e| EndpointError::Transport(e.to_string()))?;
        let raw = resp.body_mut().read_to_string().map_err(|e| EndpointError::Transport(e.to_string()))?;
        parse_reply(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shape() {
        let ep = HttpEndpoint {
            url: "http://localhost".into(),
            api_key: None,
            model: "m".into(),
            temperature: 0.7,
            timeout: Duration::from_secs(1),
        };
        let b = ep.request_body("hi");
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["messages"][0]["content"], "hi");
        assert_eq!(b["model"], "m");
        assert_eq!(b["temperature"], 0.7);
    }

    #[test]
    fn reply_parsing() {
        let r = parse_reply(r#"{"choices":[{"message":{"role":"assistant","content":"ok"}}]}"#.into()).unwrap();
        assert_eq!(r.content, "ok");
        assert!(parse_reply("{}".into()).is_err());
        assert!(parse_reply("not json".into()).is_err());
    }
}
