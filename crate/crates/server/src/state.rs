use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use reverso_core::clock::{Clock, Timestamp};
use reverso_core::doc::SourceDocument;
use reverso_core::draft::{warm_start, Workspace, WorkspaceId};
use reverso_core::gateway::{CancelToken, CompletionProvider, CompletionRequest, CompletionResult, GatewayError};
use reverso_core::store::{FileStore, SessionRecorder};

use crate::error::ApiError;

/// A loaded workspace and its event/snapshot recorder.
pub struct Session {
    pub ws: Workspace,
    pub recorder: SessionRecorder,
}

pub enum Slot {
    Pending,
    Failed(ApiError),
    Ready(Box<Session>),
}

/// Shared server state. Each workspace sits behind its own mutex, so
/// mutations of one workspace are serialized while different workspaces
/// proceed independently.
pub struct AppState {
    pub store: FileStore,
    pub provider: Arc<dyn CompletionProvider>,
    pub clock: Arc<dyn Clock>,
    slots: Mutex<HashMap<WorkspaceId, Arc<Mutex<Slot>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl AppState {
    pub fn new(store: FileStore, provider: Arc<dyn CompletionProvider>, clock: Arc<dyn Clock>) -> Self {
        AppState {
            store,
            provider,
            clock,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Picks an unused id derived from the document hash.
    pub fn allocate_id(&self, doc: &SourceDocument) -> WorkspaceId {
        let stem = doc.doc_id.0.trim_start_matches("doc-");
        let slots = lock(&self.slots);
        (1..)
            .map(|n| WorkspaceId(format!("ws-{stem}-{n}")))
            .find(|id| !slots.contains_key(id) && !self.store.exists(id))
            .expect("unbounded id space")
    }

    /// Registers a pending workspace and runs warm start on the blocking
    /// pool. The returned handle completes when the workspace is ready or
    /// has failed.
    pub fn start_workspace(
        self: &Arc<Self>,
        doc: SourceDocument,
    ) -> (WorkspaceId, tokio::task::JoinHandle<()>) {
        let id = self.allocate_id(&doc);
        let slot = Arc::new(Mutex::new(Slot::Pending));
        lock(&self.slots).insert(id.clone(), slot.clone());
        let state = self.clone();
        let ws_id = id.clone();
        let handle = tokio::task::spawn_blocking(move || {
            let outcome = state.run_warm_start(&doc, ws_id.clone());
            if let Err(e) = &outcome {
                log::warn!("warm start for {ws_id} failed: {}", e.message);
            }
            *lock(&slot) = match outcome {
                Ok(session) => Slot::Ready(Box::new(session)),
                Err(e) => Slot::Failed(e),
            };
        });
        (id, handle)
    }

    fn run_warm_start(&self, doc: &SourceDocument, id: WorkspaceId) -> Result<Session, ApiError> {
        let now = self.now();
        let mut ws = warm_start(doc, self.provider.as_ref(), now, id)?;
        self.store.save(&ws)?;
        let mut recorder = SessionRecorder::open(self.store.clone(), &ws, now)?;
        recorder.record(&mut ws, now)?;
        Ok(Session { ws, recorder })
    }

    /// Returns the slot for `id`, loading a saved workspace from disk if it
    /// is not open yet. Loading counts as reopening the session.
    pub fn slot(&self, id: &WorkspaceId) -> Result<Arc<Mutex<Slot>>, ApiError> {
        let mut slots = lock(&self.slots);
        if let Some(slot) = slots.get(id) {
            return Ok(slot.clone());
        }
        let ws = self.store.load(id)?;
        let recorder = SessionRecorder::open(self.store.clone(), &ws, self.now())?;
        let slot = Arc::new(Mutex::new(Slot::Ready(Box::new(Session { ws, recorder }))));
        slots.insert(id.clone(), slot.clone());
        Ok(slot)
    }

    /// Runs `f` against a ready workspace, then logs the events it queued
    /// and takes a periodic snapshot if one is due.
    pub fn with_session<R>(
        &self,
        id: &WorkspaceId,
        f: impl FnOnce(&mut Session, Timestamp) -> Result<R, ApiError>,
    ) -> Result<R, ApiError> {
        let slot = self.slot(id)?;
        let mut guard = lock(&slot);
        let session = match &mut *guard {
            Slot::Pending => return Err(ApiError::not_ready(format!("workspace {id} is still warming up"))),
            Slot::Failed(e) => {
                return Err(ApiError::not_ready(format!("warm start failed: {}", e.message))
                    .with_details(serde_json::json!({ "cause": e.code })))
            }
            Slot::Ready(s) => s,
        };
        let now = self.now();
        let result = f(session, now);
        session.recorder.record(&mut session.ws, now)?;
        result
    }

    /// Status of a workspace without requiring it to be ready.
    pub fn inspect<R>(&self, id: &WorkspaceId, f: impl FnOnce(&Slot) -> R) -> Result<R, ApiError> {
        let slot = self.slot(id)?;
        let guard = lock(&slot);
        Ok(f(&guard))
    }

    /// Captures due periodic snapshots for every open workspace.
    pub fn tick_all(&self) {
        let slots: Vec<_> = lock(&self.slots).values().cloned().collect();
        let now = self.now();
        for slot in slots {
            if let Slot::Ready(s) = &mut *lock(&slot) {
                if let Err(e) = s.recorder.tick(&s.ws, now) {
                    log::warn!("snapshot for {} failed: {e}", s.ws.workspace_id);
                }
            }
        }
    }
}

/// Cancels its token when dropped. Held by a request handler so that a
/// client disconnect discards the provider result.
pub struct CancelOnDrop(pub CancelToken);

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        self.0.cancel();
    }
}

/// A provider whose calls are abandoned once `token` is cancelled.
pub struct Cancellable {
    pub inner: Arc<dyn CompletionProvider>,
    pub token: CancelToken,
}

impl CompletionProvider for Cancellable {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        self.inner.complete_cancellable(req, &self.token)
    }
}
