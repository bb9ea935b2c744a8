//! Interactive decisions bridged to HTTP clients.
//!
//! The simulation thread blocks in [`InteractiveProvider::prompt`] while the
//! prompt sits in the [`PromptHub`]. An HTTP answer or the timeout resolves
//! it, whichever takes the hub lock first; the loser sees the prompt gone.

use std::collections::HashMap;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use pmmg_core::broker::{DecisionProvider, PromptContext, UserDecision};
use pmmg_core::{PermissionStatus, Tick};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingPrompt {
    pub prompt_id: String,
    pub context: PromptContext,
    pub issued_at: Tick,
    pub deadline: Tick,
}

/// Everything the service pushes to stream subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HubEvent {
    Prompt(PendingPrompt),
    Resolved {
        prompt_id: String,
        status: PermissionStatus,
    },
    Expired {
        prompt_id: String,
        status: PermissionStatus,
    },
    Step(serde_json::Value),
}

impl HubEvent {
    pub fn name(&self) -> &'static str {
        match self {
            HubEvent::Prompt(_) => "prompt",
            HubEvent::Resolved { .. } => "resolved",
            HubEvent::Expired { .. } => "expired",
            HubEvent::Step(_) => "step",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Answered(PermissionStatus),
    Expired(PermissionStatus),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnswerError {
    #[error("unknown prompt {0}")]
    NotFound(String),
    #[error("prompt {0} already {1}")]
    Closed(String, &'static str),
}

#[derive(Default)]
struct HubState {
    next_id: u64,
    pending: Option<(PendingPrompt, mpsc::SyncSender<PermissionStatus>)>,
    closed: HashMap<String, Resolution>,
}

pub struct PromptHub {
    state: Mutex<HubState>,
    events: broadcast::Sender<HubEvent>,
}

impl PromptHub {
    pub fn new() -> Arc<PromptHub> {
        let (events, _) = broadcast::channel(256);
        Arc::new(PromptHub {
            state: Mutex::new(HubState::default()),
            events,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HubState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn pending(&self) -> Option<PendingPrompt> {
        self.lock().pending.as_ref().map(|(p, _)| p.clone())
    }

    /// Current pending prompt plus a receiver for everything after it, taken
    /// atomically so nothing is missed or seen twice.
    pub fn subscribe(&self) -> (Option<PendingPrompt>, broadcast::Receiver<HubEvent>) {
        let state = self.lock();
        let pending = state.pending.as_ref().map(|(p, _)| p.clone());
        (pending, self.events.subscribe())
    }

    pub fn publish(&self, event: HubEvent) {
        let _state = self.lock();
        let _ = self.events.send(event);
    }

    pub fn resolution(&self, prompt_id: &str) -> Option<Resolution> {
        self.lock().closed.get(prompt_id).copied()
    }

    pub fn answer(&self, prompt_id: &str, status: PermissionStatus) -> Result<(), AnswerError> {
        let mut state = self.lock();
        match &state.pending {
            Some((p, _)) if p.prompt_id == prompt_id => {
                let (p, tx) = state.pending.take().expect("checked above");
                let _ = tx.send(status);
                state.closed.insert(p.prompt_id.clone(), Resolution::Answered(status));
                let _ = self.events.send(HubEvent::Resolved {
                    prompt_id: p.prompt_id,
                    status,
                });
                Ok(())
            }
            _ => match state.closed.get(prompt_id) {
                Some(Resolution::Answered(_)) => Err(AnswerError::Closed(prompt_id.into(), "answered")),
                Some(Resolution::Expired(_)) => Err(AnswerError::Closed(prompt_id.into(), "expired")),
                None => Err(AnswerError::NotFound(prompt_id.into())),
            },
        }
    }

    fn open(&self, context: PromptContext, timeout_ticks: Tick) -> (String, mpsc::Receiver<PermissionStatus>) {
        let mut state = self.lock();
        state.next_id += 1;
        let prompt = PendingPrompt {
            prompt_id: format!("p{}", state.next_id),
            issued_at: context.at,
            deadline: context.at + timeout_ticks,
            context,
        };
        let (tx, rx) = mpsc::sync_channel(1);
        let id = prompt.prompt_id.clone();
        let _ = self.events.send(HubEvent::Prompt(prompt.clone()));
        state.pending = Some((prompt, tx));
        (id, rx)
    }

    /// Closes the prompt as expired unless an answer got there first.
    fn expire(&self, prompt_id: &str, default: PermissionStatus) -> Option<PermissionStatus> {
        let mut state = self.lock();
        if let Some(Resolution::Answered(s)) = state.closed.get(prompt_id) {
            return Some(*s);
        }
        state.pending.take();
        state.closed.insert(prompt_id.into(), Resolution::Expired(default));
        let _ = self.events.send(HubEvent::Expired {
            prompt_id: prompt_id.into(),
            status: default,
        });
        None
    }
}

/// Decision provider answered by a human through the hub.
pub struct InteractiveProvider {
    hub: Arc<PromptHub>,
    timeout: Duration,
    default: PermissionStatus,
}

impl InteractiveProvider {
    pub fn new(hub: Arc<PromptHub>, timeout: Duration, default: PermissionStatus) -> Self {
        InteractiveProvider { hub, timeout, default }
    }
}

impl DecisionProvider for InteractiveProvider {
    fn prompt(&mut self, ctx: &PromptContext) -> UserDecision {
        let (id, rx) = self.hub.open(ctx.clone(), self.timeout.as_secs_f64().ceil() as Tick);
        let status = match rx.recv_timeout(self.timeout) {
            Ok(status) => status,
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => {
                self.hub.expire(&id, self.default).unwrap_or(self.default)
            }
        };
        UserDecision { status }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmmg_core::broker::PromptOccasion;
    use pmmg_core::{Criticality, ResourceClass};

    fn ctx() -> PromptContext {
        PromptContext {
            app_id: "maps".into(),
            display_name: "Maps".into(),
            resource: ResourceClass::Location,
            criticality: Criticality::Required,
            occasion: PromptOccasion::Install,
            at: 10,
        }
    }

    #[test]
    fn answered_prompt_cannot_expire_or_be_reanswered() {
        let hub = PromptHub::new();
        let (_, mut events) = hub.subscribe();
        let mut p = InteractiveProvider::new(hub.clone(), Duration::from_secs(5), PermissionStatus::Deny);
        let answering = {
            let hub = hub.clone();
            std::thread::spawn(move || loop {
                if let Some(pending) = hub.pending() {
                    hub.answer(&pending.prompt_id, PermissionStatus::VirtualGrant).unwrap();
                    return pending.prompt_id;
                }
                std::thread::sleep(Duration::from_millis(2));
            })
        };
        assert_eq!(p.prompt(&ctx()).status, PermissionStatus::VirtualGrant);
        let id = answering.join().unwrap();
        assert!(matches!(hub.answer(&id, PermissionStatus::Grant), Err(AnswerError::Closed(_, "answered"))));
        assert!(matches!(hub.answer("p99", PermissionStatus::Grant), Err(AnswerError::NotFound(_))));
        assert_eq!(events.try_recv().unwrap().name(), "prompt");
        assert_eq!(events.try_recv().unwrap().name(), "resolved");
        assert!(events.try_recv().is_err());
    }

    #[test]
    fn timeout_applies_default_once() {
        let hub = PromptHub::new();
        let mut p = InteractiveProvider::new(hub.clone(), Duration::from_millis(20), PermissionStatus::Deny);
        assert_eq!(p.prompt(&ctx()).status, PermissionStatus::Deny);
        assert!(hub.pending().is_none());
        assert_eq!(hub.resolution("p1"), Some(Resolution::Expired(PermissionStatus::Deny)));
        assert!(matches!(hub.answer("p1", PermissionStatus::Grant), Err(AnswerError::Closed(_, "expired"))));
    }
}
