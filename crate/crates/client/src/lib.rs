//! Async client for the enhancement service.

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use stlut_api::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The server answered with an error body.
    #[error("{}: {}", label(.error.kind), .error.message)]
    Api { status: StatusCode, error: ApiError },
    #[error("cannot reach {url}: {source}")]
    Transport { url: String, source: reqwest::Error },
    #[error("unexpected reply from {url} ({status}): {message}")]
    Protocol { url: String, status: StatusCode, message: String },
}

fn label(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Usage => "usage error",
        ErrorKind::Data => "data error",
        ErrorKind::Numeric => "numeric failure",
    }
}

impl ClientError {
    /// Process exit code for this failure. Unreachable servers count as
    /// data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Api { error, .. } => error.kind.exit_code(),
            ClientError::Transport { .. } | ClientError::Protocol { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `server` is `host:port` or a full `http://` URL.
    pub fn new(server: &str) -> Self {
        let base = if server.contains("://") {
            server.trim_end_matches('/').to_string()
        } else {
            format!("http://{}", server.trim_end_matches('/'))
        };
        Self {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub async fn health(&self) -> Result<Health> {
        let url = self.url("/health");
        let resp = self.http.get(&url).send().await;
        decode(url, resp).await
    }

    pub async fn init_weights(&self, req: &InitWeightsRequest) -> Result<InitWeightsResponse> {
        self.post("/v1/weights/init", req).await
    }

    pub async fn build_luts(&self, req: &BuildLutsRequest) -> Result<BuildLutsResponse> {
        self.post("/v1/build-luts", req).await
    }

    pub async fn enhance(&self, req: &EnhanceRequest) -> Result<EnhanceResponse> {
        self.post("/v1/enhance", req).await
    }

    pub async fn metrics(&self, req: &MetricsRequest) -> Result<MetricsReport> {
        self.post("/v1/metrics", req).await
    }

    pub async fn bench(&self, req: &BenchRequest) -> Result<BenchReport> {
        self.post("/v1/bench", req).await
    }

    pub async fn open_session(&self, req: &SessionRequest) -> Result<SessionCreated> {
        self.post("/v1/sessions", req).await
    }

    pub async fn send_frame(&self, session: &str, req: &FrameRequest) -> Result<FrameResponse> {
        self.post(&format!("/v1/sessions/{session}/frames"), req).await
    }

    pub async fn close_session(&self, session: &str) -> Result<SessionClosed> {
        let url = self.url(&format!("/v1/sessions/{session}"));
        let resp = self.http.delete(&url).send().await;
        decode(url, resp).await
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let url = self.url(path);
        let resp = self.http.post(&url).json(body).send().await;
        decode(url, resp).await
    }
}

async fn decode<T: DeserializeOwned>(url: String, resp: reqwest::Result<reqwest::Response>) -> Result<T> {
    let resp = match resp {
        Ok(r) => r,
        Err(source) => return Err(ClientError::Transport { url, source }),
    };
    let status = resp.status();
    let bytes = match resp.bytes().await {
        Ok(b) => b,
        Err(source) => return Err(ClientError::Transport { url, source }),
    };
    if status.is_success() {
        return serde_json::from_slice(&bytes).map_err(|e| ClientError::Protocol {
            url,
            status,
            message: e.to_string(),
        });
    }
    match serde_json::from_slice::<ApiError>(&bytes) {
        Ok(error) => Err(ClientError::Api { status, error }),
        Err(_) => Err(ClientError::Protocol {
            url,
            status,
            message: String::from_utf8_lossy(&bytes).into_owned(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_url_accepts_host_port_or_url() {
        assert_eq!(Client::new("127.0.0.1:8750").base_url(), "http://127.0.0.1:8750");
        assert_eq!(Client::new("http://h:1/").base_url(), "http://h:1");
    }

    #[test]
    fn api_errors_map_to_exit_codes() {
        let e = |kind| ClientError::Api {
            status: StatusCode::BAD_REQUEST,
            error: ApiError {
                kind,
                message: String::new(),
            },
        };
        assert_eq!(e(ErrorKind::Usage).exit_code(), 1);
        assert_eq!(e(ErrorKind::Data).exit_code(), 2);
        assert_eq!(e(ErrorKind::Numeric).exit_code(), 3);
    }
}
