use std::sync::atomic::{AtomicU64, Ordering};

use super::{Backend, BackendError, BackendResponse, GenerationRequest};
use crate::budget::CallPermit;

type Script = dyn Fn(&GenerationRequest) -> Result<String, BackendError> + Send + Sync;

/// Backend driven by a closure; handy for tests and fixtures.
pub struct ScriptedBackend {
    script: Box<Script>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(script: impl Fn(&GenerationRequest) -> String + Send + Sync + 'static) -> Self {
        Self::fallible(move |r| Ok(script(r)))
    }

    pub fn fallible(script: impl Fn(&GenerationRequest) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        Self { script: Box::new(script), calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn invoke(&self, request: &GenerationRequest, _permit: &CallPermit) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(request).map(BackendResponse::text)
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
