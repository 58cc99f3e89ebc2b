use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

type Responder = dyn Fn(&str, &str, u32) -> String + Send + Sync;

/// Deterministic backend: the response is a function of
/// `(system_prompt, user_prompt, variant_seed)` only.
pub struct MockBackend {
    id: String,
    responder: Box<Responder>,
}

impl MockBackend {
    pub fn new<F>(responder: F) -> Self
    where
        F: Fn(&str, &str, u32) -> String + Send + Sync + 'static,
    {
        MockBackend {
            id: "mock".into(),
            responder: Box::new(responder),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Always answers with the same text.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        MockBackend::new(move |_, _, _| text.clone())
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        req.validate()?;
        let text = (self.responder)(&req.system_prompt, &req.user_prompt, req.variant_seed);
        Ok(ChatResponse {
            text,
            latency_ms: 0,
            backend_id: self.id.clone(),
        })
    }

    fn backend_id(&self) -> &str {
        &self.id
    }
}
