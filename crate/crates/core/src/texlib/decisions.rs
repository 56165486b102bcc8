use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CurationState, TextureAsset};
use crate::{Error, Result};

/// One state change. Ingestion events carry a snapshot of the new asset so
/// the log alone can rebuild the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub seq: u64,
    pub timestamp: String,
    pub asset_id: String,
    pub from: Option<CurationState>,
    pub to: CurationState,
    pub actor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<TextureAsset>,
}

/// Append-only JSONL file of [`DecisionEvent`]s.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    next_seq: u64,
}

impl DecisionLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let last = Self::read_all(&path)?.last().map(|e| e.seq).unwrap_or(0);
        Ok(Self {
            path,
            next_seq: last + 1,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Every event in file order; a missing file is an empty log.
    pub fn read_all(path: &Path) -> Result<Vec<DecisionEvent>> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(ev) => out.push(ev),
                // A torn final line from a crash mid-append is dropped.
                Err(e) => log::warn!("{}:{}: skipping unreadable decision: {e}", path.display(), i + 1),
            }
        }
        Ok(out)
    }

    /// Assigns the next sequence number and timestamp, appends, and syncs to disk.
    pub fn append(&mut self, mut event: DecisionEvent) -> Result<DecisionEvent> {
        event.seq = self.next_seq;
        if event.timestamp.is_empty() {
            event.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        }
        let mut line = serde_json::to_string(&event)?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(line.as_bytes())
            .and_then(|_| file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.next_seq += 1;
        Ok(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(asset: &str, to: CurationState) -> DecisionEvent {
        DecisionEvent {
            seq: 0,
            timestamp: String::new(),
            asset_id: asset.into(),
            from: Some(CurationState::Pending),
            to,
            actor: "test".into(),
            note: None,
            asset: None,
        }
    }

    #[test]
    fn sequence_numbers_continue_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut log = DecisionLog::open(&path).unwrap();
        assert_eq!(log.append(event("a", CurationState::Accepted)).unwrap().seq, 1);
        assert_eq!(log.append(event("b", CurationState::Rejected)).unwrap().seq, 2);
        let mut log = DecisionLog::open(&path).unwrap();
        assert_eq!(log.append(event("c", CurationState::Accepted)).unwrap().seq, 3);
        let all = DecisionLog::read_all(&path).unwrap();
        assert_eq!(all.iter().map(|e| e.asset_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn torn_trailing_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut log = DecisionLog::open(&path).unwrap();
        log.append(event("a", CurationState::Accepted)).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\": 2, \"asset_").unwrap();
        assert_eq!(DecisionLog::read_all(&path).unwrap().len(), 1);
    }
}
