//! Uniform black-box LLM interface: a deterministic simulator for offline
//! verification, an HTTP client for chat-completion APIs, and a scripted
//! double for exercising failure paths in tests.

pub mod http;
pub mod parse;
pub mod prompts;
pub mod sim;

use std::collections::VecDeque;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::seed;

pub use http::HttpLlm;
pub use sim::{simulate_answer, simulate_helper_scores, BiasLaw, MissModel, SimWorld,
    SimulatedLlm, SimulatorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn user(text: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![ChatMessage {
                role: Role::User,
                text: text.into(),
            }],
            temperature: 0.0,
        }
    }

    /// Stable content digest, used by the simulator to key per-request
    /// randomness.
    pub fn digest(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for m in &self.messages {
            h ^= seed::fnv1a(m.role.as_str().as_bytes());
            h = h.wrapping_mul(0x100_0000_01b3);
            h ^= seed::fnv1a(m.text.as_bytes());
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

/// Canned-reply double: each call pops the next reply. Running out of
/// replies reports the backend as unavailable.
pub struct ScriptedLlm {
    replies: Mutex<VecDeque<String>>,
}

impl ScriptedLlm {
    pub fn new(replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ScriptedLlm {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
        }
    }

    fn complete(&self) -> Result<ChatReply> {
        let mut q = self.replies.lock().unwrap();
        match q.pop_front() {
            Some(text) => Ok(ChatReply {
                text,
                prompt_tokens: 0,
                completion_tokens: 0,
            }),
            None => Err(Error::BackendUnavailable {
                reason: "scripted backend exhausted".into(),
            }),
        }
    }
}

pub enum BackendKind {
    Simulated(SimulatedLlm),
    Http(HttpLlm),
    Scripted(ScriptedLlm),
}

/// A black-box chat backend plus its call policy.
pub struct LlmBackend {
    pub model_id: String,
    pub parallelism: usize,
    pub retry_budget: usize,
    pub kind: BackendKind,
}

impl LlmBackend {
    pub fn simulated(sim: SimulatedLlm) -> Self {
        LlmBackend {
            model_id: "simulated".into(),
            parallelism: 1,
            retry_budget: 3,
            kind: BackendKind::Simulated(sim),
        }
    }

    pub fn scripted(replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        LlmBackend {
            model_id: "scripted".into(),
            parallelism: 1,
            retry_budget: 3,
            kind: BackendKind::Scripted(ScriptedLlm::new(replies)),
        }
    }

    pub fn http(http: HttpLlm) -> Self {
        LlmBackend {
            model_id: http.model_id().to_string(),
            parallelism: 4,
            retry_budget: 3,
            kind: BackendKind::Http(http),
        }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        assert!(parallelism >= 1);
        self.parallelism = parallelism;
        self
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatReply> {
        match &self.kind {
            BackendKind::Simulated(sim) => sim.complete(req),
            BackendKind::Http(http) => http.complete(req, self.retry_budget),
            BackendKind::Scripted(s) => s.complete(),
        }
    }

    /// Token count the backend's tokenizer would assign to `text`. The
    /// simulator counts whitespace-separated tokens; the HTTP client uses a
    /// chars-per-token ratio calibrated from usage metadata.
    pub fn token_len(&self, text: &str) -> usize {
        match &self.kind {
            BackendKind::Http(http) => http.token_len(text),
            _ => text.split_whitespace().count().max(1),
        }
    }

    pub fn simulator(&self) -> Option<&SimulatedLlm> {
        match &self.kind {
            BackendKind::Simulated(sim) => Some(sim),
            _ => None,
        }
    }
}

/// Run `f` over the items with at most `parallelism` worker threads,
/// returning results in input order. Results never depend on scheduling.
pub fn bounded_map<T, U, F>(parallelism: usize, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, T) -> U + Sync,
{
    let n = items.len();
    if parallelism <= 1 || n <= 1 {
        return items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let work: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<U>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let item = work[i].lock().unwrap().take().expect("item taken once");
                *results[i].lock().unwrap() = Some(f(i, item));
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("result written"))
        .collect()
}
