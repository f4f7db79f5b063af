use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use watn_core::wire::{Transport, TransportError, WireRequest, WireResponse};

use crate::Api;

/// Calls [`Api::handle`] directly, without a socket. The `online` switch
/// simulates the server going away.
#[derive(Clone)]
pub struct LocalTransport {
    api: Arc<Api>,
    online: Arc<AtomicBool>,
}

impl LocalTransport {
    pub fn new(api: Arc<Api>) -> Self {
        LocalTransport {
            api,
            online: Arc::new(AtomicBool::new(true)),
        }
    }

    pub fn set_online(&self, up: bool) {
        self.online.store(up, Ordering::SeqCst);
    }

    pub fn api(&self) -> &Arc<Api> {
        &self.api
    }
}

impl Transport for LocalTransport {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, TransportError> {
        if !self.online.load(Ordering::SeqCst) {
            return Err(TransportError::Unreachable("server offline".into()));
        }
        Ok(self.api.handle(req))
    }
}
