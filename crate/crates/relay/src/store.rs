//! Append-only journal, the in-memory index rebuilt from it, and the single
//! writer task that owns the file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lens_core::event::{CrimeEvent, Gps};
use lens_core::videoio::ActionLabel;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::{broadcast, mpsc, oneshot};
use uuid::Uuid;

use crate::config::{Role, TokenEntry};
use crate::RelayError;

const JOURNAL: &str = "journal.jsonl";
const CLIPS: &str = "clips";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeLogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: CrimeEvent,
    pub received_at_ms: u64,
    pub clip_stored: bool,
    pub suppressed: bool,
}

/// What a civilian may see of a log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeNotice {
    pub event_id: Uuid,
    pub camera_id: String,
    pub gps: Gps,
    pub timestamp_ms: u64,
    pub label: ActionLabel,
    pub confidence: f64,
    pub received_at_ms: u64,
}

impl From<&CrimeLogEntry> for CrimeNotice {
    fn from(e: &CrimeLogEntry) -> Self {
        Self {
            event_id: e.event.event_id,
            camera_id: e.event.camera_id.clone(),
            gps: e.event.gps,
            timestamp_ms: e.event.timestamp_ms,
            label: e.event.label,
            confidence: e.event.confidence,
            received_at_ms: e.received_at_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Broadcast {
    pub broadcast_id: Uuid,
    pub message: String,
    pub center: Gps,
    pub radius_m: f64,
    pub created_by: String,
    pub created_at_ms: u64,
    pub recipients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastNotice {
    pub broadcast_id: Uuid,
    pub message: String,
    pub center: Gps,
    pub radius_m: f64,
    pub created_at_ms: u64,
}

impl From<&Broadcast> for BroadcastNotice {
    fn from(b: &Broadcast) -> Self {
        Self {
            broadcast_id: b.broadcast_id,
            message: b.message.clone(),
            center: b.center,
            radius_m: b.radius_m,
            created_at_ms: b.created_at_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Event(CrimeLogEntry),
    Threshold {
        seq: u64,
        value: f64,
        user_id: String,
        at_ms: u64,
    },
    Broadcast {
        seq: u64,
        broadcast: Broadcast,
    },
    User {
        seq: u64,
        account: TokenEntry,
    },
}

impl Record {
    fn seq(&self) -> u64 {
        match self {
            Record::Event(e) => e.seq,
            Record::Threshold { seq, .. }
            | Record::Broadcast { seq, .. }
            | Record::User { seq, .. } => *seq,
        }
    }
}

/// One message on the live alert streams, numbered by journal sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Alert {
    Crime(CrimeLogEntry),
    Broadcast { seq: u64, broadcast: Broadcast },
    Threshold { seq: u64, value: f64 },
}

impl Alert {
    pub fn id(&self) -> u64 {
        match self {
            Alert::Crime(e) => e.seq,
            Alert::Broadcast { seq, .. } | Alert::Threshold { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Default)]
pub struct Index {
    pub events: Vec<CrimeLogEntry>,
    by_id: HashMap<Uuid, usize>,
    pub threshold: f64,
    pub users: HashMap<String, TokenEntry>,
    pub broadcasts: Vec<Broadcast>,
    pub alerts: Vec<Arc<Alert>>,
    next_seq: u64,
}

impl Index {
    pub fn event(&self, id: &Uuid) -> Option<&CrimeLogEntry> {
        self.by_id.get(id).map(|&i| &self.events[i])
    }

    fn apply(&mut self, rec: Record) -> Option<Arc<Alert>> {
        self.next_seq = self.next_seq.max(rec.seq() + 1);
        let alert = match rec {
            Record::Event(e) => {
                self.by_id.insert(e.event.event_id, self.events.len());
                self.events.push(e.clone());
                (!e.suppressed).then_some(Alert::Crime(e))
            }
            Record::Threshold { seq, value, .. } => {
                self.threshold = value;
                Some(Alert::Threshold { seq, value })
            }
            Record::Broadcast { seq, broadcast } => {
                self.broadcasts.push(broadcast.clone());
                Some(Alert::Broadcast { seq, broadcast })
            }
            Record::User { account, .. } => {
                self.users.insert(account.token.clone(), account);
                None
            }
        };
        let alert = alert.map(Arc::new);
        if let Some(a) = &alert {
            self.alerts.push(a.clone());
        }
        alert
    }

    /// Alerts with id greater than `after`, in order.
    pub fn alerts_after(&self, after: u64) -> Vec<Arc<Alert>> {
        let start = self.alerts.partition_point(|a| a.id() <= after);
        self.alerts[start..].to_vec()
    }
}

pub enum Ingest {
    Created(CrimeLogEntry),
    Duplicate(CrimeLogEntry),
}

enum Op {
    Event(
        Box<CrimeEvent>,
        u64,
        oneshot::Sender<Result<Ingest, RelayError>>,
    ),
    Threshold(f64, String, u64, oneshot::Sender<Result<f64, RelayError>>),
    Broadcast(
        Box<Broadcast>,
        oneshot::Sender<Result<Broadcast, RelayError>>,
    ),
    User(TokenEntry, oneshot::Sender<Result<TokenEntry, RelayError>>),
}

/// Shared handle: lock-guarded index for reads, a queue to the writer task
/// for every mutation.
#[derive(Clone)]
pub struct Store {
    root: PathBuf,
    pub index: Arc<RwLock<Index>>,
    tx: mpsc::Sender<Op>,
    pub live: broadcast::Sender<Arc<Alert>>,
}

fn io_err(path: &Path, e: std::io::Error) -> RelayError {
    RelayError::Storage(format!("{}: {e}", path.display()))
}

impl Store {
    /// Replays the journal, then starts the writer task.
    pub fn open(
        root: impl Into<PathBuf>,
        default_threshold: f64,
        tokens: &[TokenEntry],
    ) -> Result<Self, RelayError> {
        let root = root.into();
        std::fs::create_dir_all(root.join(CLIPS)).map_err(|e| io_err(&root, e))?;
        let path = root.join(JOURNAL);
        let mut index = Index {
            threshold: default_threshold,
            next_seq: 1,
            ..Index::default()
        };
        for t in tokens {
            index.users.insert(t.token.clone(), t.clone());
        }
        if path.exists() {
            let f = File::open(&path).map_err(|e| io_err(&path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| io_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Record>(&line) {
                    Ok(rec) => {
                        index.apply(rec);
                    }
                    // a torn final line from a crash is the only tolerated damage
                    Err(e) => tracing::warn!("journal line {} unreadable, skipped: {e}", n + 1),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let index = Arc::new(RwLock::new(index));
        let (tx, rx) = mpsc::channel(64);
        let (live, _) = broadcast::channel(256);
        tokio::spawn(writer(rx, file, path, index.clone(), live.clone()));
        Ok(Self {
            root,
            index,
            tx,
            live,
        })
    }

    async fn call<T>(
        &self,
        op: impl FnOnce(oneshot::Sender<Result<T, RelayError>>) -> Op,
    ) -> Result<T, RelayError> {
        let (tx, rx) = oneshot::channel();
        self.tx
            .send(op(tx))
            .await
            .map_err(|_| RelayError::Storage("writer stopped".into()))?;
        rx.await
            .map_err(|_| RelayError::Storage("writer stopped".into()))?
    }

    pub async fn ingest(&self, event: CrimeEvent, now_ms: u64) -> Result<Ingest, RelayError> {
        self.call(|tx| Op::Event(Box::new(event), now_ms, tx)).await
    }

    pub async fn set_threshold(
        &self,
        value: f64,
        user_id: String,
        now_ms: u64,
    ) -> Result<f64, RelayError> {
        self.call(|tx| Op::Threshold(value, user_id, now_ms, tx))
            .await
    }

    pub async fn add_broadcast(&self, b: Broadcast) -> Result<Broadcast, RelayError> {
        self.call(|tx| Op::Broadcast(Box::new(b), tx)).await
    }

    pub async fn add_user(&self, account: TokenEntry) -> Result<TokenEntry, RelayError> {
        self.call(|tx| Op::User(account, tx)).await
    }

    pub fn user(&self, token: &str) -> Option<TokenEntry> {
        self.index.read().users.get(token).cloned()
    }

    pub fn civilians(&self) -> Vec<TokenEntry> {
        self.index
            .read()
            .users
            .values()
            .filter(|u| u.role == Role::Civilian)
            .cloned()
            .collect()
    }

    fn clip_path(&self, clip_ref: &str) -> Option<PathBuf> {
        let ok = clip_ref.len() == 64 && clip_ref.bytes().all(|b| b.is_ascii_hexdigit());
        ok.then(|| self.root.join(CLIPS).join(format!("{clip_ref}.lclip")))
    }

    pub fn has_clip(&self, clip_ref: &str) -> bool {
        self.clip_path(clip_ref).is_some_and(|p| p.exists())
    }

    /// Stores clip bytes under their SHA-256, so re-uploads are no-ops.
    /// Returns the reference and whether it was new.
    pub fn put_clip(&self, bytes: &[u8]) -> Result<(String, bool), RelayError> {
        let clip_ref = hex::encode(Sha256::digest(bytes));
        let path = self
            .clip_path(&clip_ref)
            .expect("digest is a valid reference");
        if path.exists() {
            return Ok((clip_ref, false));
        }
        let tmp = path.with_extension(format!("tmp-{}", Uuid::new_v4().simple()));
        let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes)
            .and_then(|_| f.sync_all())
            .map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        Ok((clip_ref, true))
    }

    pub fn get_clip(&self, clip_ref: &str) -> Result<Option<Vec<u8>>, RelayError> {
        let Some(path) = self.clip_path(clip_ref) else {
            return Ok(None);
        };
        match std::fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

struct Writer {
    file: File,
    path: PathBuf,
    index: Arc<RwLock<Index>>,
    live: broadcast::Sender<Arc<Alert>>,
}

impl Writer {
    fn next_seq(&self) -> u64 {
        self.index.read().next_seq
    }

    fn commit(&mut self, rec: Record) -> Result<(), RelayError> {
        let mut line =
            serde_json::to_string(&rec).map_err(|e| RelayError::Storage(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| io_err(&self.path, e))?;
        let alert = self.index.write().apply(rec);
        if let Some(a) = alert {
            // no subscribers is fine
            let _ = self.live.send(a);
        }
        Ok(())
    }

    fn event(
        &mut self,
        event: CrimeEvent,
        now_ms: u64,
        clip_stored: bool,
    ) -> Result<Ingest, RelayError> {
        let (existing, threshold) = {
            let idx = self.index.read();
            (idx.event(&event.event_id).cloned(), idx.threshold)
        };
        if let Some(e) = existing {
            return Ok(Ingest::Duplicate(e));
        }
        let entry = CrimeLogEntry {
            seq: self.next_seq(),
            suppressed: event.confidence < threshold,
            event,
            received_at_ms: now_ms,
            clip_stored,
        };
        self.commit(Record::Event(entry.clone()))?;
        Ok(Ingest::Created(entry))
    }
}

async fn writer(
    mut rx: mpsc::Receiver<Op>,
    file: File,
    path: PathBuf,
    index: Arc<RwLock<Index>>,
    live: broadcast::Sender<Arc<Alert>>,
) {
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut w = Writer {
        file,
        path,
        index,
        live,
    };
    while let Some(op) = rx.recv().await {
        match op {
            Op::Event(event, now, reply) => {
                let stored = event
                    .clip_ref
                    .as_deref()
                    .is_some_and(|r| root.join(CLIPS).join(format!("{r}.lclip")).exists());
                let _ = reply.send(w.event(*event, now, stored));
            }
            Op::Threshold(value, user_id, at_ms, reply) => {
                let seq = w.next_seq();
                let r = w
                    .commit(Record::Threshold {
                        seq,
                        value,
                        user_id,
                        at_ms,
                    })
                    .map(|_| value);
                let _ = reply.send(r);
            }
            Op::Broadcast(b, reply) => {
                let seq = w.next_seq();
                let r = w
                    .commit(Record::Broadcast {
                        seq,
                        broadcast: (*b).clone(),
                    })
                    .map(|_| *b);
                let _ = reply.send(r);
            }
            Op::User(account, reply) => {
                let seq = w.next_seq();
                let r = w
                    .commit(Record::User {
                        seq,
                        account: account.clone(),
                    })
                    .map(|_| account);
                let _ = reply.send(r);
            }
        }
    }
}
