//! On-disk persistence, one directory per workspace:
//!
//! ```text
//! <root>/<workspace_id>/
//!     workspace.json      canonical pretty JSON, replaced atomically
//!     initial.txt         the warm-start draft as plain text
//!     events.jsonl        one interaction event per line, append-only
//!     snapshots/<ts>-<trigger>.txt
//! ```

pub mod events;

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::draft::{Workspace, WorkspaceId, WORKSPACE_FORMAT_VERSION};
use events::{EventPayload, InteractionEvent};

pub const WORKSPACE_FILE: &str = "workspace.json";
pub const INITIAL_FILE: &str = "initial.txt";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_INTERVAL: Duration = Duration::from_secs(60);

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("workspace {0} not found")]
    NotFound(WorkspaceId),
    #[error("invalid workspace id {0:?}")]
    InvalidId(String),
    #[error("workspace format version {found} is not supported (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad snapshot file name {0}")]
    SnapshotName(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Canonical workspace serialization: pretty JSON plus a trailing newline.
pub fn canonical_json(ws: &Workspace) -> String {
    let mut s = serde_json::to_string_pretty(ws).expect("workspace serializes");
    s.push('\n');
    s
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FileStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, id: &WorkspaceId) -> Result<PathBuf, StoreError> {
        if !valid_id(&id.0) {
            return Err(StoreError::InvalidId(id.0.clone()));
        }
        Ok(self.root.join(&id.0))
    }

    pub fn exists(&self, id: &WorkspaceId) -> bool {
        self.dir(id)
            .map(|d| d.join(WORKSPACE_FILE).is_file())
            .unwrap_or(false)
    }

    /// Writes the workspace record, and `initial.txt` the first time.
    pub fn save(&self, ws: &Workspace) -> Result<(), StoreError> {
        let dir = self.dir(&ws.workspace_id)?;
        fs::create_dir_all(dir.join(SNAPSHOT_DIR)).map_err(io_err(&dir))?;
        let initial = dir.join(INITIAL_FILE);
        if !initial.exists() {
            write_atomic(&initial, ws.initial_preview().as_bytes())?;
        }
        write_atomic(&dir.join(WORKSPACE_FILE), canonical_json(ws).as_bytes())
    }

    pub fn load(&self, id: &WorkspaceId) -> Result<Workspace, StoreError> {
        let path = self.dir(id)?.join(WORKSPACE_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.clone()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(&text).map_err(|source| StoreError::Format {
            path: path.clone(),
            source,
        })?;
        if probe.format_version != WORKSPACE_FORMAT_VERSION {
            return Err(StoreError::UnsupportedVersion {
                found: probe.format_version,
                expected: WORKSPACE_FORMAT_VERSION,
            });
        }
        serde_json::from_str(&text).map_err(|source| StoreError::Format { path, source })
    }

    pub fn list(&self) -> Result<Vec<WorkspaceId>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root)(e)),
        };
        let mut ids: Vec<_> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(WORKSPACE_FILE).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .map(WorkspaceId)
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn event_log(&self, id: &WorkspaceId) -> Result<EventLog, StoreError> {
        EventLog::open(self.dir(id)?.join(EVENTS_FILE))
    }

    pub fn read_events(&self, id: &WorkspaceId) -> Result<Vec<InteractionEvent>, StoreError> {
        read_events(&self.dir(id)?.join(EVENTS_FILE))
    }

    pub fn write_snapshot(&self, id: &WorkspaceId, snap: &Snapshot) -> Result<PathBuf, StoreError> {
        let dir = self.dir(id)?.join(SNAPSHOT_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(snap.file_name());
        write_atomic(&path, snap.text.as_bytes())?;
        Ok(path)
    }

    pub fn read_snapshots(&self, id: &WorkspaceId) -> Result<Vec<Snapshot>, StoreError> {
        read_snapshots(&self.dir(id)?.join(SNAPSHOT_DIR))
    }
}

/// Reads a JSON-lines event file; a missing file is an empty log.
pub fn read_events(path: &Path) -> Result<Vec<InteractionEvent>, StoreError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| StoreError::Format {
                path: path.to_path_buf(),
                source,
            })?,
        );
    }
    Ok(out)
}

/// Reads every snapshot file in `dir`, ordered by timestamp then name.
pub fn read_snapshots(dir: &Path) -> Result<Vec<Snapshot>, StoreError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(dir)(e)),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let (timestamp, trigger) = Snapshot::parse_name(&p)?;
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            Ok(Snapshot {
                timestamp,
                text,
                trigger,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotTrigger {
    Open,
    Periodic,
    Save,
}

impl SnapshotTrigger {
    pub fn as_str(self) -> &'static str {
        match self {
            SnapshotTrigger::Open => "open",
            SnapshotTrigger::Periodic => "periodic",
            SnapshotTrigger::Save => "save",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(SnapshotTrigger::Open),
            "periodic" => Some(SnapshotTrigger::Periodic),
            "save" => Some(SnapshotTrigger::Save),
            _ => None,
        }
    }
}

/// A timed capture of the full draft text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub timestamp: Timestamp,
    pub text: String,
    pub trigger: SnapshotTrigger,
}

impl Snapshot {
    pub fn file_name(&self) -> String {
        format!("{:013}-{}.txt", self.timestamp.millis(), self.trigger.as_str())
    }

    fn parse_name(path: &Path) -> Result<(Timestamp, SnapshotTrigger), StoreError> {
        let bad = || StoreError::SnapshotName(path.to_path_buf());
        let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
        let (ts, trigger) = stem.split_once('-').ok_or_else(bad)?;
        Ok((
            Timestamp(ts.parse().map_err(|_| bad())?),
            SnapshotTrigger::parse(trigger).ok_or_else(bad)?,
        ))
    }
}

/// Decides when to capture the draft. Opening always captures. A periodic
/// capture fires when at least 60 s have passed since the previous capture
/// and some event happened less than 60 s ago. Every capture restarts the
/// timer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotScheduler {
    interval: Duration,
    last_snapshot: Option<Timestamp>,
}

impl Default for SnapshotScheduler {
    fn default() -> Self {
        SnapshotScheduler::new(SNAPSHOT_INTERVAL)
    }
}

impl SnapshotScheduler {
    pub fn new(interval: Duration) -> Self {
        SnapshotScheduler {
            interval,
            last_snapshot: None,
        }
    }

    pub fn last_snapshot(&self) -> Option<Timestamp> {
        self.last_snapshot
    }

    pub fn on_open(&mut self, now: Timestamp) -> SnapshotTrigger {
        self.last_snapshot = Some(now);
        SnapshotTrigger::Open
    }

    pub fn on_save(&mut self, now: Timestamp) -> SnapshotTrigger {
        self.last_snapshot = Some(now);
        SnapshotTrigger::Save
    }

    pub fn snapshot_if_due(
        &mut self,
        now: Timestamp,
        last_event: Option<Timestamp>,
    ) -> Option<SnapshotTrigger> {
        let interval = self.interval.as_millis() as i64;
        let since_snapshot = match self.last_snapshot {
            Some(t) => now.millis() - t.millis(),
            None => i64::MAX,
        };
        let active = last_event.is_some_and(|e| now.millis() - e.millis() < interval);
        if since_snapshot >= interval && active {
            self.last_snapshot = Some(now);
            Some(SnapshotTrigger::Periodic)
        } else {
            None
        }
    }
}

/// Append-only writer for `events.jsonl`. Timestamps are clamped so the
/// file stays monotone. Events that fail to reach disk stay pending and are
/// written ahead of the next batch.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    last: Option<Timestamp>,
    pending: Vec<InteractionEvent>,
}

impl EventLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let last = read_events(&path)?.last().map(|e| e.timestamp);
        Ok(EventLog {
            path,
            last,
            pending: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_timestamp(&self) -> Option<Timestamp> {
        self.last
    }

    pub fn pending(&self) -> &[InteractionEvent] {
        &self.pending
    }

    pub fn append(
        &mut self,
        events: impl IntoIterator<Item = InteractionEvent>,
    ) -> Result<(), StoreError> {
        for mut e in events {
            if let Some(last) = self.last {
                e.timestamp = e.timestamp.max(last);
            }
            self.last = Some(e.timestamp);
            self.pending.push(e);
        }
        self.flush()
    }

    /// Writes pending events in a single append.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in &self.pending {
            buf.push_str(&serde_json::to_string(e).expect("event serializes"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err(&self.path))?;
        f.write_all(buf.as_bytes()).map_err(io_err(&self.path))?;
        self.pending.clear();
        Ok(())
    }
}

/// Ties a workspace's event log and snapshot schedule to a store.
#[derive(Debug)]
pub struct SessionRecorder {
    store: FileStore,
    workspace_id: WorkspaceId,
    log: EventLog,
    scheduler: SnapshotScheduler,
}

impl SessionRecorder {
    /// Starts a session: logs an `open` event and captures an open snapshot.
    pub fn open(store: FileStore, ws: &Workspace, now: Timestamp) -> Result<Self, StoreError> {
        let log = store.event_log(&ws.workspace_id)?;
        let mut rec = SessionRecorder {
            store,
            workspace_id: ws.workspace_id.clone(),
            log,
            scheduler: SnapshotScheduler::default(),
        };
        rec.log.append([InteractionEvent::new(
            now,
            ws.workspace_id.clone(),
            EventPayload::Open,
        )])?;
        let trigger = rec.scheduler.on_open(now);
        rec.capture(ws, now, trigger)?;
        Ok(rec)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn store(&self) -> &FileStore {
        &self.store
    }

    /// Appends events drained from the workspace, then captures a periodic
    /// snapshot if one is due.
    pub fn record(
        &mut self,
        ws: &mut Workspace,
        now: Timestamp,
    ) -> Result<Option<Snapshot>, StoreError> {
        self.log.append(ws.take_events())?;
        self.tick(ws, now)
    }

    pub fn tick(&mut self, ws: &Workspace, now: Timestamp) -> Result<Option<Snapshot>, StoreError> {
        match self.scheduler.snapshot_if_due(now, self.log.last_timestamp()) {
            Some(trigger) => self.capture(ws, now, trigger).map(Some),
            None => Ok(None),
        }
    }

    /// Persists the workspace, logs a `save` event and captures a snapshot.
    pub fn save(&mut self, ws: &mut Workspace, now: Timestamp) -> Result<Snapshot, StoreError> {
        self.log.append(ws.take_events())?;
        self.store.save(ws)?;
        self.log.append([InteractionEvent::new(
            now,
            self.workspace_id.clone(),
            EventPayload::Save,
        )])?;
        let trigger = self.scheduler.on_save(now);
        self.capture(ws, now, trigger)
    }

    fn capture(
        &mut self,
        ws: &Workspace,
        now: Timestamp,
        trigger: SnapshotTrigger,
    ) -> Result<Snapshot, StoreError> {
        let snap = Snapshot {
            timestamp: now,
            text: ws.post.render_preview(),
            trigger,
        };
        self.store.write_snapshot(&self.workspace_id, &snap)?;
        Ok(snap)
    }
}
