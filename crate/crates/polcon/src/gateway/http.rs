//! OpenAI-style chat-completions provider over HTTP.

use super::{ChatRequest, Provider, ProviderError};
use serde_json::{json, Value};
use std::time::Duration;

pub struct HttpProvider {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(endpoint: &str, api_key: String) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("client construction cannot fail with static options"),
        }
    }

    fn url(&self) -> String {
        if self.endpoint.ends_with("/chat/completions") {
            self.endpoint.clone()
        } else {
            format!("{}/chat/completions", self.endpoint)
        }
    }
}

impl Provider for HttpProvider {
    fn complete_text(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user_prompt}));
        let body = json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });

        let mut builder = self.client.post(self.url()).json(&body);
        if !self.api_key.is_empty() {
            builder = builder.bearer_auth(&self.api_key);
        }
        let response = builder
            .send()
            .map_err(|e| ProviderError::Transport(format!("request failed: {e}")))?;

        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ProviderError::Auth(format!("provider rejected credential ({status})")));
        }
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        let payload: Value = response
            .json()
            .map_err(|e| ProviderError::Transport(format!("bad JSON body: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| ProviderError::Transport("response missing choices[0].message.content".to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server; each closure answers one request.
    fn serve(responses: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 65536];
                // Read headers plus enough of the body to let the client move on.
                let mut total = 0;
                loop {
                    let n = stream.read(&mut buf[total..]).unwrap_or(0);
                    total += n;
                    let text = String::from_utf8_lossy(&buf[..total]);
                    if n == 0 || text.contains("\r\n\r\n") {
                        if let Some(at) = text.find("content-length: ") {
                            let rest = &text[at + 16..];
                            let len: usize = rest[..rest.find('\r').unwrap_or(0)].trim().parse().unwrap_or(0);
                            let header_end = text.find("\r\n\r\n").unwrap() + 4;
                            if total >= header_end + len {
                                break;
                            }
                        } else {
                            break;
                        }
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}/v1")
    }

    #[test]
    fn parses_openai_shaped_responses() {
        let endpoint = serve(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"  hello there "}}]}"#.to_string(),
        )]);
        let provider = HttpProvider::new(&endpoint, "key".to_string());
        let text = provider.complete_text(&ChatRequest::new("m", "hi")).unwrap();
        // Verbatim, untrimmed.
        assert_eq!(text, "  hello there ");
    }

    #[test]
    fn server_errors_are_transport_and_auth_is_terminal() {
        let endpoint = serve(vec![(500, "{}".to_string()), (401, "{}".to_string())]);
        let provider = HttpProvider::new(&endpoint, "key".to_string());
        assert!(matches!(
            provider.complete_text(&ChatRequest::new("m", "hi")),
            Err(ProviderError::Transport(_))
        ));
        assert!(matches!(
            provider.complete_text(&ChatRequest::new("m", "hi")),
            Err(ProviderError::Auth(_))
        ));
    }
}
