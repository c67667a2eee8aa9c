//! Persistent send queue. Each pending event is a JSON file (plus its clip)
//! under `pending/`, named so that lexical order is enqueue order. Events the
//! relay rejects are appended to `dead_letter.jsonl`.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use lens_core::event::CrimeEvent;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::EdgeError;

pub const DEAD_LETTER_FILE: &str = "dead_letter.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct PendingItem {
    pub path: PathBuf,
    pub event: CrimeEvent,
    pub clip_path: Option<PathBuf>,
}

impl PendingItem {
    pub fn read_clip(&self) -> Result<Option<Vec<u8>>, EdgeError> {
        self.clip_path
            .as_ref()
            .map(|p| fs::read(p).map_err(|e| EdgeError::Queue(format!("{}: {e}", p.display()))))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub event: CrimeEvent,
    pub status: Option<u16>,
    pub reason: String,
}

pub struct Outbox {
    root: PathBuf,
    pending: PathBuf,
    next: Mutex<u64>,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> EdgeError + '_ {
    move |e| EdgeError::Queue(format!("{}: {e}", path.display()))
}

fn write_durably(path: &Path, bytes: &[u8]) -> Result<(), EdgeError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_data().map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

impl Outbox {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, EdgeError> {
        let root = root.into();
        let pending = root.join("pending");
        fs::create_dir_all(&pending).map_err(io(&pending))?;
        let mut last = 0;
        for entry in fs::read_dir(&pending).map_err(io(&pending))? {
            let name = entry.map_err(io(&pending))?.file_name();
            let name = name.to_string_lossy();
            if name.ends_with(".tmp") {
                let _ = fs::remove_file(pending.join(&*name));
                continue;
            }
            if let Some(seq) = name.split('-').next().and_then(|s| s.parse::<u64>().ok()) {
                last = last.max(seq);
            }
        }
        Ok(Self {
            root,
            pending,
            next: Mutex::new(last + 1),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Persists the event and its clip; on return both survive a crash.
    pub fn enqueue(
        &self,
        event: &CrimeEvent,
        clip: Option<&[u8]>,
    ) -> Result<PendingItem, EdgeError> {
        let seq = {
            let mut n = self.next.lock();
            *n += 1;
            *n - 1
        };
        let stem = format!("{seq:012}-{}", event.event_id);
        let clip_path = match clip {
            Some(bytes) => {
                let p = self.pending.join(format!("{stem}.lclip"));
                write_durably(&p, bytes)?;
                Some(p)
            }
            None => None,
        };
        let path = self.pending.join(format!("{stem}.json"));
        let json = serde_json::to_vec(event).map_err(|e| EdgeError::Queue(e.to_string()))?;
        write_durably(&path, &json)?;
        Ok(PendingItem {
            path,
            event: event.clone(),
            clip_path,
        })
    }

    /// Everything not yet acknowledged, oldest first. Unreadable entries are
    /// dead-lettered.
    pub fn pending(&self) -> Result<Vec<PendingItem>, EdgeError> {
        let mut names: Vec<PathBuf> = fs::read_dir(&self.pending)
            .map_err(io(&self.pending))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        names.sort();
        let mut out = Vec::new();
        for path in names {
            let bytes = fs::read(&path).map_err(io(&path))?;
            match serde_json::from_slice::<CrimeEvent>(&bytes) {
                Ok(event) => {
                    let clip = path.with_extension("lclip");
                    out.push(PendingItem {
                        clip_path: clip.exists().then_some(clip),
                        path,
                        event,
                    });
                }
                Err(e) => {
                    tracing::warn!("discarding unreadable queue entry {}: {e}", path.display());
                    let _ = fs::rename(&path, path.with_extension("corrupt"));
                }
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> Result<usize, EdgeError> {
        Ok(self.pending()?.len())
    }

    pub fn is_empty(&self) -> Result<bool, EdgeError> {
        Ok(self.len()? == 0)
    }

    pub fn complete(&self, item: &PendingItem) -> Result<(), EdgeError> {
        fs::remove_file(&item.path).map_err(io(&item.path))?;
        if let Some(c) = &item.clip_path {
            let _ = fs::remove_file(c);
        }
        Ok(())
    }

    pub fn dead_letter(
        &self,
        item: &PendingItem,
        status: Option<u16>,
        reason: &str,
    ) -> Result<(), EdgeError> {
        let path = self.root.join(DEAD_LETTER_FILE);
        let line = serde_json::to_string(&DeadLetter {
            event: item.event.clone(),
            status,
            reason: reason.to_string(),
        })
        .map_err(|e| EdgeError::Queue(e.to_string()))?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        writeln!(f, "{line}").map_err(io(&path))?;
        f.sync_data().map_err(io(&path))?;
        self.complete(item)
    }

    pub fn dead_letters(&self) -> Result<Vec<DeadLetter>, EdgeError> {
        let path = self.root.join(DEAD_LETTER_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(&path)(e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| EdgeError::Queue(e.to_string())))
            .collect()
    }
}
