use std::sync::{Arc, Mutex};

use super::{ChatBackend, ChatMessage, ChatParams, Completion, GatewayError};

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub messages: Vec<ChatMessage>,
    pub response: Result<String, GatewayError>,
}

/// Wraps a chat backend and keeps every request/response pair.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    calls: Mutex<Vec<CallRecord>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self { inner, calls: Mutex::default() }
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.calls.lock().unwrap().clear();
    }
}

impl ChatBackend for RecordingBackend {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn chat(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<Completion, GatewayError> {
        let result = self.inner.chat(messages, params);
        self.calls.lock().unwrap().push(CallRecord {
            messages: messages.to_vec(),
            response: result.as_ref().map(|c| c.text.clone()).map_err(Clone::clone),
        });
        result
    }
}
