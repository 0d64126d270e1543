use std::time::Duration;

use serde_json::{json, Value};

use super::{ApiFlavor, Completer, ModelConfig, TransportError};
use crate::prompt::Prompt;

/// Completion over HTTP against a local model server.
#[derive(Debug, Clone)]
pub struct HttpCompleter {
    config: ModelConfig,
    client: reqwest::blocking::Client,
}

impl HttpCompleter {
    pub fn new(config: ModelConfig) -> Result<Self, TransportError> {
        config.validate().map_err(TransportError::Config)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn request_body(&self, prompt: &str) -> Value {
        let c = &self.config;
        match c.api {
            ApiFlavor::Ollama => {
                let mut options = json!({ "temperature": c.temperature, "num_predict": c.max_output_tokens });
                if let Some(seed) = c.seed {
                    options["seed"] = json!(seed);
                }
                json!({ "model": c.model, "prompt": prompt, "stream": false, "options": options })
            }
            ApiFlavor::OpenAiChat => {
                let mut body = json!({
                    "model": c.model,
                    "messages": [{ "role": "user", "content": prompt }],
                    "temperature": c.temperature,
                    "max_tokens": c.max_output_tokens,
                    "stream": false,
                });
                if let Some(seed) = c.seed {
                    body["seed"] = json!(seed);
                }
                body
            }
        }
    }

    /// Checks that the server answers and, where the API lists models, that the
    /// configured model is among them.
    pub fn probe(&self) -> Result<Vec<String>, TransportError> {
        let path = match self.config.api {
            ApiFlavor::Ollama => "/api/tags",
            ApiFlavor::OpenAiChat => "/v1/models",
        };
        let value = self.send(self.client.get(self.url(path)))?;
        let names: Vec<String> = match self.config.api {
            ApiFlavor::Ollama => value["models"]
                .as_array()
                .map(|m| m.iter().filter_map(|x| x["name"].as_str()).map(String::from).collect()),
            ApiFlavor::OpenAiChat => {
                value["data"].as_array().map(|m| m.iter().filter_map(|x| x["id"].as_str()).map(String::from).collect())
            }
        }
        .ok_or_else(|| TransportError::Protocol("model list missing".into()))?;
        Ok(names)
    }

    fn send(&self, request: reqwest::blocking::RequestBuilder) -> Result<Value, TransportError> {
        let request = match &self.config.api_key {
            Some(key) => request.bearer_auth(key),
            None => request,
        };
        let response = request.send().map_err(classify)?;
        let status = response.status();
        let text = response.text().map_err(classify)?;
        if !status.is_success() {
            let mut body = text;
            body.truncate(500);
            return Err(TransportError::Status { code: status.as_u16(), body });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Protocol(format!("invalid JSON: {e}")))
    }
}

fn classify(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout(e.to_string())
    } else if e.is_connect() || e.is_request() {
        TransportError::Connection(e.to_string())
    } else {
        TransportError::Protocol(e.to_string())
    }
}

impl Completer for HttpCompleter {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        let (path, pointer) = match self.config.api {
            ApiFlavor::Ollama => ("/api/generate", "/response"),
            ApiFlavor::OpenAiChat => ("/v1/chat/completions", "/choices/0/message/content"),
        };
        let value = self.send(self.client.post(self.url(path)).json(&self.request_body(&prompt.body)))?;
        value
            .pointer(pointer)
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| TransportError::Protocol(format!("no text at {pointer}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ollama_body_shape() {
        let mut config = ModelConfig::new("http://h:1/", "m");
        config.seed = Some(7);
        let c = HttpCompleter::new(config).unwrap();
        let body = c.request_body("hi");
        assert_eq!(body["stream"], json!(false));
        assert_eq!(body["options"]["temperature"], json!(0.0));
        assert_eq!(body["options"]["seed"], json!(7));
        assert_eq!(c.url("/api/generate"), "http://h:1/api/generate");
    }

    #[test]
    fn openai_body_shape() {
        let mut config = ModelConfig::new("http://h:1", "m");
        config.api = ApiFlavor::OpenAiChat;
        let body = HttpCompleter::new(config).unwrap().request_body("hi");
        assert_eq!(body["messages"][0]["content"], json!("hi"));
        assert!(body.get("seed").is_none());
    }

    #[test]
    fn invalid_config_rejected() {
        let config = ModelConfig::new("http://h:1", "");
        assert!(matches!(HttpCompleter::new(config), Err(TransportError::Config(_))));
    }
}
