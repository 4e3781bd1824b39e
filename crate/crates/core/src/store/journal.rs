//! Move journal: line-delimited JSON records appended to `store.journal`.
//!
//! A folder move writes `begin`, copies the folder into a staging directory,
//! renames the staging directory into place, writes `copied`, removes the
//! source and finally writes `done`. Recovery looks at the last record per
//! patient and either rolls the move forward or back.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StoreError;

pub const JOURNAL_FILE: &str = "store.journal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveState {
    Begin,
    Copied,
    Done,
    RolledBack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub op: String,
    pub patient: String,
    /// Paths relative to the store root.
    pub src: String,
    pub dst: String,
    pub state: MoveState,
}

/// Points inside a folder move where a crash can be injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrashPoint {
    AfterBegin,
    MidCopy,
    AfterCopy,
    AfterRename,
    AfterCopiedRecord,
    MidDelete,
    AfterDelete,
}

impl CrashPoint {
    pub const ALL: [CrashPoint; 7] = [
        CrashPoint::AfterBegin,
        CrashPoint::MidCopy,
        CrashPoint::AfterCopy,
        CrashPoint::AfterRename,
        CrashPoint::AfterCopiedRecord,
        CrashPoint::MidDelete,
        CrashPoint::AfterDelete,
    ];
}

pub(crate) fn append(root: &Path, record: &JournalRecord) -> Result<(), StoreError> {
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(root.join(JOURNAL_FILE))?;
    file.write_all(line.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

/// Reads every parseable record. A torn trailing line is ignored.
pub fn read(root: &Path) -> Result<Vec<JournalRecord>, StoreError> {
    let path = root.join(JOURNAL_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    Ok(text
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect())
}

pub(crate) fn staging_path(dst: &Path, patient: &str) -> PathBuf {
    dst.parent()
        .expect("patient folder has a parent")
        .join(format!(".{patient}.moving"))
}

/// Completes or undoes every unfinished move, then truncates the journal.
/// Returns the records that needed recovery.
pub(crate) fn recover(root: &Path) -> Result<Vec<JournalRecord>, StoreError> {
    let mut last: BTreeMap<String, JournalRecord> = BTreeMap::new();
    for rec in read(root)? {
        last.insert(rec.patient.clone(), rec);
    }
    let mut recovered = Vec::new();
    for rec in last.into_values() {
        let src = root.join(&rec.src);
        let dst = root.join(&rec.dst);
        let staging = staging_path(&dst, &rec.patient);
        match rec.state {
            MoveState::Done | MoveState::RolledBack => continue,
            MoveState::Begin if !dst.exists() => {
                // Copy never reached the rename: the source is authoritative.
                remove_if_exists(&staging)?;
                append(root, &JournalRecord { state: MoveState::RolledBack, ..rec.clone() })?;
            }
            MoveState::Begin | MoveState::Copied => {
                remove_if_exists(&src)?;
                append(root, &JournalRecord { state: MoveState::Done, ..rec.clone() })?;
            }
        }
        tracing::warn!(patient = %rec.patient, state = ?rec.state, "recovered interrupted move");
        recovered.push(rec);
    }
    // Every move is closed now.
    fs::write(root.join(JOURNAL_FILE), b"")?;
    Ok(recovered)
}

fn remove_if_exists(path: &Path) -> std::io::Result<()> {
    match fs::remove_dir_all(path) {
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let rec = JournalRecord {
            op: "move".into(),
            patient: "p1".into(),
            src: "Patient/p1".into(),
            dst: "Specialty/Cardiology/p1".into(),
            state: MoveState::Begin,
        };
        append(dir.path(), &rec).unwrap();
        let mut f = OpenOptions::new()
            .append(true)
            .open(dir.path().join(JOURNAL_FILE))
            .unwrap();
        f.write_all(b"{\"op\":\"mo").unwrap();
        assert_eq!(read(dir.path()).unwrap(), vec![rec]);
    }

    #[test]
    fn record_wire_shape() {
        let rec = JournalRecord {
            op: "move".into(),
            patient: "p1".into(),
            src: "a".into(),
            dst: "b".into(),
            state: MoveState::Copied,
        };
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["state"], "copied");
        assert_eq!(v["op"], "move");
    }
}
