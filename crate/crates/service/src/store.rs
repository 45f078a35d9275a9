//! Live sessions and their append-only logs.
//!
//! Each session is a JSON-lines file `<data_dir>/<id>.jsonl`, one
//! [`Envelope`] per line. Commands on one session are serialized by its
//! mutex (tokio's mutex is FIFO, so commands apply in arrival order);
//! different sessions never contend.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use tokio::io::AsyncWriteExt;
use tokio::sync::broadcast;

use crate::error::ServiceError;
use crate::session::{
    validate_create, CaptureRequest, CreateRequest, Envelope, Event, SessionState, SuggestRequest,
    Suggestion,
};

type Result<T> = std::result::Result<T, ServiceError>;

struct Live {
    state: SessionState,
    log: Vec<Envelope>,
}

struct Handle {
    live: tokio::sync::Mutex<Live>,
    events: broadcast::Sender<Envelope>,
}

impl Handle {
    fn new(live: Live) -> Arc<Self> {
        Arc::new(Self {
            live: tokio::sync::Mutex::new(live),
            events: broadcast::channel(256).0,
        })
    }
}

pub struct Store {
    dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Handle>>>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    async fn handle(&self, id: &str) -> Result<Arc<Handle>> {
        if let Some(h) = self.sessions.lock().unwrap().get(id) {
            return Ok(h.clone());
        }
        // Ids come from URLs; only ever look at files this store names.
        if uuid::Uuid::parse_str(id).is_err() {
            return Err(ServiceError::SessionNotFound(id.into()));
        }
        let text = match tokio::fs::read_to_string(self.log_path(id)).await {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ServiceError::SessionNotFound(id.into()))
            }
            Err(e) => return Err(e.into()),
        };
        let log = parse_log(&text)?;
        let state = SessionState::replay(log.iter().map(|e| &e.event))
            .ok_or_else(|| ServiceError::CorruptLog(format!("{id}: missing creation event")))?;
        let handle = Handle::new(Live { state, log });
        Ok(self
            .sessions
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert(handle)
            .clone())
    }

    async fn append(&self, handle: &Handle, live: &mut Live, event: Event) -> Result<Envelope> {
        let envelope = Envelope {
            seq: live.log.len(),
            event,
        };
        let mut line = serde_json::to_string(&envelope)
            .map_err(|e| ServiceError::CorruptLog(e.to_string()))?;
        line.push('\n');
        let mut file = tokio::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.log_path(&live.state.id))
            .await?;
        file.write_all(line.as_bytes()).await?;
        file.flush().await?;
        live.state.apply(&envelope.event);
        live.log.push(envelope.clone());
        // Nobody listening is fine.
        let _ = handle.events.send(envelope.clone());
        Ok(envelope)
    }

    pub async fn create(&self, req: CreateRequest) -> Result<SessionState> {
        validate_create(&req)?;
        let id = uuid::Uuid::new_v4().to_string();
        let state = SessionState::new(id.clone(), req.clone());
        let handle = Handle::new(Live {
            state,
            log: Vec::new(),
        });
        let mut live = handle.live.lock().await;
        self.append(
            &handle,
            &mut live,
            Event::Created {
                id: id.clone(),
                request: req,
            },
        )
        .await?;
        self.sessions.lock().unwrap().insert(id, handle.clone());
        Ok(live.state.clone())
    }

    pub async fn capture(&self, id: &str, req: CaptureRequest) -> Result<SessionState> {
        let handle = self.handle(id).await?;
        let mut live = handle.live.lock().await;
        let state = live.state.clone();
        let event = tokio::task::spawn_blocking(move || state.capture(&req))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))??;
        self.append(&handle, &mut live, event).await?;
        Ok(live.state.clone())
    }

    pub async fn suggest(&self, id: &str, req: SuggestRequest) -> Result<Suggestion> {
        let handle = self.handle(id).await?;
        let mut live = handle.live.lock().await;
        let state = live.state.clone();
        let event = tokio::task::spawn_blocking(move || state.suggest(&req))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))??;
        self.append(&handle, &mut live, event).await?;
        Ok(live
            .state
            .suggestion
            .clone()
            .expect("suggestion just applied"))
    }

    pub async fn state(&self, id: &str) -> Result<SessionState> {
        let handle = self.handle(id).await?;
        let live = handle.live.lock().await;
        Ok(live.state.clone())
    }

    /// Logged events with `seq >= from`, plus a receiver for later ones.
    /// Events may appear in both; callers skip by sequence number.
    pub async fn subscribe(
        &self,
        id: &str,
        from: usize,
    ) -> Result<(Vec<Envelope>, broadcast::Receiver<Envelope>)> {
        let handle = self.handle(id).await?;
        let rx = handle.events.subscribe();
        let live = handle.live.lock().await;
        Ok((live.log.iter().skip(from).cloned().collect(), rx))
    }
}

pub fn parse_log(text: &str) -> Result<Vec<Envelope>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let env: Envelope = serde_json::from_str(line)
                .map_err(|e| ServiceError::CorruptLog(format!("line {}: {e}", i + 1)))?;
            if env.seq != i {
                return Err(ServiceError::CorruptLog(format!(
                    "line {} has sequence {}",
                    i + 1,
                    env.seq
                )));
            }
            Ok(env)
        })
        .collect()
}
