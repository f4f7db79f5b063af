use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use watn_core::wire::{Method, Transport, TransportError, WireRequest, WireResponse};

/// Blocking HTTP/1.1 transport.
pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .new_agent();
        HttpTransport {
            base: base_url.trim_end_matches('/').to_owned(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, TransportError> {
        let url = format!("{}{}", self.base, req.path);
        let pairs = req.query.iter().map(|(k, v)| (k.as_str(), v.as_str()));
        let result = match req.method {
            Method::Get => self.agent.get(&url).query_pairs(pairs).call(),
            Method::Post => self
                .agent
                .post(&url)
                .query_pairs(pairs)
                .header("content-type", "application/json")
                .send(&req.body[..]),
        };
        let mut resp = result.map_err(|e| match e {
            ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound
            | ureq::Error::Timeout(_) => TransportError::Unreachable(e.to_string()),
            other => TransportError::Other(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(WireResponse { status, body })
    }
}

/// Passes requests through and keeps a copy of each, so tests can inspect
/// exactly what left the client.
#[derive(Clone)]
pub struct RecordingTransport<T> {
    inner: T,
    log: Arc<Mutex<Vec<WireRequest>>>,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            log: Arc::default(),
        }
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    pub fn count(&self) -> usize {
        self.log.lock().len()
    }

    pub fn requests(&self) -> Vec<WireRequest> {
        self.log.lock().clone()
    }

    pub fn take(&self) -> Vec<WireRequest> {
        std::mem::take(&mut *self.log.lock())
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, TransportError> {
        self.log.lock().push(req.clone());
        self.inner.send(req)
    }
}
