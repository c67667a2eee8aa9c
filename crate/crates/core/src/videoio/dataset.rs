use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lclip, ActionLabel, Clip};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: String,
    pub label: ActionLabel,
    pub group: u32,
    pub clip: u32,
    pub frames: usize,
}

/// Contents of `dataset.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub groups_per_action: u32,
    pub clips_per_group: u32,
    pub width: usize,
    pub height: usize,
    pub fps: u16,
    pub clip_count: usize,
    pub clips: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_NAME);
        let mut body = serde_json::to_vec_pretty(self)?;
        body.push(b'\n');
        fs::write(&path, body).map_err(|e| Error::at_path(path, e))
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_NAME);
        let body = fs::read(&path).map_err(|e| Error::at_path(&path, e))?;
        Ok(serde_json::from_slice(&body)?)
    }

    pub fn count_by_label(&self) -> [usize; ActionLabel::COUNT] {
        let mut counts = [0; ActionLabel::COUNT];
        for e in &self.clips {
            counts[e.label.index()] += 1;
        }
        counts
    }
}

/// A generated dataset on disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest = DatasetManifest::read(&root)?;
        Ok(Self { root, manifest })
    }

    pub fn load(&self, entry: &DatasetEntry) -> Result<Clip> {
        let clip = lclip::load_clip(self.root.join(&entry.path))?;
        if clip.label != Some(entry.label) {
            return Err(Error::invalid(format!(
                "{} is labelled {:?} in the manifest but {:?} on disk",
                entry.path, entry.label, clip.label
            )));
        }
        Ok(clip)
    }

    /// Loads every clip, in manifest order.
    pub fn load_all(&self) -> Result<Vec<Clip>> {
        self.manifest
            .clips
            .par_iter()
            .map(|e| self.load(e))
            .collect()
    }
}
