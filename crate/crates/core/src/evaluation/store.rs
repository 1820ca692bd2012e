//! Append-only score log with periodic snapshots.
//!
//! Every accepted score is written as one JSON line to `scores.log` and
//! synced before it is acknowledged. `snapshot.json` holds the full record
//! table plus the log offset it covers; on open the snapshot is loaded and the
//! log is replayed from that offset. A trailing partial line (a crash
//! mid-write, never acknowledged) is truncated away.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, ScoreRecord, MAX_SCORE};

pub const LOG_FILE: &str = "scores.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
/// Appends between snapshots.
pub const SNAPSHOT_EVERY: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    #[serde(flatten)]
    pub record: ScoreRecord,
    /// Score that this entry replaced, for overwrites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Ack {
    Created,
    Unchanged,
    Overwritten { previous: u8 },
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    log_offset: u64,
    records: Vec<ScoreRecord>,
}

type Key = (String, String, String);

fn key_of(r: &ScoreRecord) -> Key {
    (r.item_id.clone(), r.rater_id.clone(), r.model_id.clone())
}

pub struct ScoreStore {
    dir: PathBuf,
    log: File,
    log_len: u64,
    records: BTreeMap<Key, ScoreRecord>,
    since_snapshot: usize,
}

impl ScoreStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, EvalError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let (mut records, offset) = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => {
                let snap: Snapshot =
                    serde_json::from_slice(&bytes).map_err(|e| EvalError::Corrupt(format!("snapshot: {e}")))?;
                (snap.records.into_iter().map(|r| (key_of(&r), r)).collect(), snap.log_offset)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (BTreeMap::new(), 0),
            Err(e) => return Err(e.into()),
        };

        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(dir.join(LOG_FILE))?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes)?;
        let offset = offset.min(bytes.len() as u64) as usize;
        let complete = bytes[offset..]
            .iter()
            .rposition(|b| *b == b'\n')
            .map_or(offset, |p| offset + p + 1);
        let mut replayed = 0;
        for line in bytes[offset..complete].split(|b| *b == b'\n') {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let entry: StoreEntry =
                serde_json::from_slice(line).map_err(|e| EvalError::Corrupt(format!("log line: {e}")))?;
            records.insert(key_of(&entry.record), entry.record);
            replayed += 1;
        }
        if complete < bytes.len() {
            log.set_len(complete as u64)?;
            log.sync_all()?;
        }
        log.seek(SeekFrom::End(0))?;
        Ok(Self {
            dir,
            log,
            log_len: complete as u64,
            records,
            since_snapshot: replayed,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, item_id: &str, rater_id: &str, model_id: &str) -> Option<&ScoreRecord> {
        self.records
            .get(&(item_id.to_string(), rater_id.to_string(), model_id.to_string()))
    }

    /// Current record table, ordered by (item, rater, model).
    pub fn records(&self) -> Vec<ScoreRecord> {
        self.records.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Every log entry in write order, including superseded scores.
    pub fn history(&self) -> Result<Vec<StoreEntry>, EvalError> {
        let text = fs::read_to_string(self.dir.join(LOG_FILE))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| EvalError::Corrupt(e.to_string())))
            .collect()
    }

    /// Persists `record`. Identical resubmissions are acknowledged without a
    /// write; a different score for a scored triple needs `overwrite`.
    pub fn record(&mut self, record: ScoreRecord, overwrite: bool) -> Result<Ack, EvalError> {
        if record.score > MAX_SCORE {
            return Err(EvalError::InvalidScore(record.score));
        }
        if record.rater_id.is_empty() {
            return Err(EvalError::EmptyRater);
        }
        let key = key_of(&record);
        let previous = match self.records.get(&key) {
            Some(existing) if existing.score == record.score => return Ok(Ack::Unchanged),
            Some(existing) if !overwrite => {
                return Err(EvalError::AlreadyScored {
                    item_id: record.item_id,
                    rater_id: record.rater_id,
                    model_id: record.model_id,
                    existing: existing.score,
                })
            }
            Some(existing) => Some(existing.score),
            None => None,
        };
        let entry = StoreEntry { record, previous };
        let mut line = serde_json::to_vec(&entry).map_err(|e| EvalError::Corrupt(e.to_string()))?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        self.log_len += line.len() as u64;
        self.records.insert(key, entry.record);

        self.since_snapshot += 1;
        if self.since_snapshot >= SNAPSHOT_EVERY {
            self.snapshot()?;
        }
        Ok(match previous {
            Some(previous) => Ack::Overwritten { previous },
            None => Ack::Created,
        })
    }

    pub fn snapshot(&mut self) -> Result<(), EvalError> {
        let snap = Snapshot {
            log_offset: self.log_len,
            records: self.records(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut file = File::create(&tmp)?;
        file.write_all(&serde_json::to_vec(&snap).map_err(|e| EvalError::Corrupt(e.to_string()))?)?;
        file.sync_all()?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        self.since_snapshot = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(item: &str, rater: &str, model: &str, score: u8) -> ScoreRecord {
        ScoreRecord {
            item_id: item.into(),
            rater_id: rater.into(),
            slot: "A".into(),
            model_id: model.into(),
            score,
            timestamp: "2024-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn record_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = ScoreStore::open(dir.path()).unwrap();
            assert_eq!(s.record(rec("i1", "r", "m", 2), false).unwrap(), Ack::Created);
            assert_eq!(s.record(rec("i1", "r", "m", 2), false).unwrap(), Ack::Unchanged);
            assert!(matches!(
                s.record(rec("i1", "r", "m", 1), false),
                Err(EvalError::AlreadyScored { existing: 2, .. })
            ));
            assert_eq!(
                s.record(rec("i1", "r", "m", 1), true).unwrap(),
                Ack::Overwritten { previous: 2 }
            );
            assert!(matches!(s.record(rec("i2", "r", "m", 3), false), Err(EvalError::InvalidScore(3))));
        }
        let s = ScoreStore::open(dir.path()).unwrap();
        assert_eq!(s.get("i1", "r", "m").unwrap().score, 1);
        let history = s.history().unwrap();
        assert_eq!(history.len(), 2);
        assert_eq!(history[1].previous, Some(2));
    }

    #[test]
    fn snapshot_plus_tail_replay() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = ScoreStore::open(dir.path()).unwrap();
            for i in 0..SNAPSHOT_EVERY + 5 {
                s.record(rec(&format!("i{i}"), "r", "m", (i % 3) as u8), false).unwrap();
            }
            assert!(dir.path().join(SNAPSHOT_FILE).exists());
        }
        let s = ScoreStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), SNAPSHOT_EVERY + 5);
        assert_eq!(s.get("i66", "r", "m").unwrap().score, 0);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = ScoreStore::open(dir.path()).unwrap();
            s.record(rec("i1", "r", "m", 2), false).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join(LOG_FILE)).unwrap();
        f.write_all(br#"{"item_id":"i2","rater"#).unwrap();
        drop(f);
        let mut s = ScoreStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 1);
        s.record(rec("i3", "r", "m", 0), false).unwrap();
        let s = ScoreStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 2);
    }
}
