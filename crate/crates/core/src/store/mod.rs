//! Filesystem-backed patient record store.
//!
//! ```text
//! <root>/
//! ├── layout.json
//! ├── store.journal
//! ├── Patient/<id>/...              central patient database
//! └── Specialty/<name>/<id>/...     patients under a specialty
//! ```
//!
//! Documents are UTF-8 markdown named `<kind>_<NNN>.md`. Other files in a
//! patient folder (`episode.json`, trace logs) travel with the folder but are
//! not documents.

mod journal;
mod layout;
mod search;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use journal::{CrashPoint, JournalRecord, MoveState, JOURNAL_FILE};
pub use layout::{StoreLayout, DEFAULT_SPECIALTIES, PRIMARY_CARE};
pub use search::{LineHit, SearchHit, SearchScope, DEFAULT_SEARCH_LIMIT};

pub const LAYOUT_FILE: &str = "layout.json";
const MAX_SEQUENCE: u32 = 999;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("path not writable: {}: {source}", path.display())]
    PathNotWritable { path: PathBuf, source: io::Error },
    #[error("corrupt layout: {0}")]
    CorruptLayout(String),
    #[error("invalid patient id {0:?}")]
    InvalidId(String),
    #[error("patient {0:?} already exists")]
    DuplicatePatient(String),
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("unknown specialty {0:?}")]
    UnknownSpecialty(String),
    #[error("patient {0:?} is already in the central database")]
    AlreadyCentral(String),
    #[error("no free {kind} filename left for patient {patient_id:?}")]
    FilenameCollision { patient_id: String, kind: DocKind },
    #[error("document {filename:?} not found for patient {patient_id:?}")]
    UnknownDocument { patient_id: String, filename: String },
    #[error("search query is empty")]
    EmptyQuery,
    #[error("invalid auxiliary file name {0:?}")]
    InvalidFileName(String),
    #[error("injected crash at {0:?}")]
    InjectedCrash(CrashPoint),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name")]
pub enum Location {
    CentralDatabase,
    Specialty(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::CentralDatabase => f.write_str("central"),
            Location::Specialty(name) => write!(f, "specialty:{name}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DocKind {
    Profile,
    Transcript,
    History,
    Report,
    UpdateExplanation,
    ReferralReport,
    MedicationPlan,
    ExamResult,
}

impl DocKind {
    pub const ALL: [DocKind; 8] = [
        DocKind::Profile,
        DocKind::Transcript,
        DocKind::History,
        DocKind::Report,
        DocKind::UpdateExplanation,
        DocKind::ReferralReport,
        DocKind::MedicationPlan,
        DocKind::ExamResult,
    ];

    /// Filename prefix for this kind.
    pub fn prefix(self) -> &'static str {
        match self {
            DocKind::Profile => "profile",
            DocKind::Transcript => "transcript",
            DocKind::History => "history",
            DocKind::Report => "report",
            DocKind::UpdateExplanation => "explanation",
            DocKind::ReferralReport => "referral",
            DocKind::MedicationPlan => "medication",
            DocKind::ExamResult => "exam",
        }
    }

    pub fn filename(self, sequence: u32) -> String {
        format!("{}_{:03}.md", self.prefix(), sequence)
    }

    /// Parses `<kind>_<NNN>.md` into its kind and sequence number.
    pub fn parse_filename(name: &str) -> Option<(DocKind, u32)> {
        let stem = name.strip_suffix(".md")?;
        let (prefix, seq) = stem.rsplit_once('_')?;
        if seq.len() != 3 || !seq.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let kind = DocKind::ALL.into_iter().find(|k| k.prefix() == prefix)?;
        Some((kind, seq.parse().ok()?))
    }
}

impl fmt::Display for DocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

impl FromStr for DocKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let wanted = s.trim().to_lowercase();
        DocKind::ALL
            .into_iter()
            .find(|k| k.prefix() == wanted || format!("{k:?}").to_lowercase() == wanted)
            .ok_or_else(|| format!("unknown document kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRef {
    pub patient_id: String,
    pub doc_kind: DocKind,
    pub filename: String,
    pub created_at: DateTime<Utc>,
    pub content_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientFolder {
    pub patient_id: String,
    pub location: Location,
    pub documents: Vec<DocumentRef>,
}

pub fn digest(content: &[u8]) -> String {
    hex::encode(Sha256::digest(content))
}

/// Patient ids become directory names: ASCII alphanumerics plus `_-.`, not
/// starting with a dot.
pub fn validate_patient_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

pub struct RecordStore {
    root: PathBuf,
    layout: RwLock<StoreLayout>,
    patient_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    crash_at: Mutex<Option<CrashPoint>>,
}

impl fmt::Debug for RecordStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecordStore").field("root", &self.root).finish()
    }
}

/// Creates (or reopens) a store at `root` with the given layout, recovering
/// any move interrupted by a crash.
pub fn init_store(root: impl AsRef<Path>, layout: StoreLayout) -> Result<RecordStore> {
    let root = root.as_ref().to_path_buf();
    layout.validate()?;
    fs::create_dir_all(&root).map_err(|source| StoreError::PathNotWritable {
        path: root.clone(),
        source,
    })?;
    let layout_path = root.join(LAYOUT_FILE);
    if layout_path.exists() {
        let existing: StoreLayout = serde_json::from_slice(&fs::read(&layout_path)?)
            .map_err(|e| StoreError::CorruptLayout(format!("{LAYOUT_FILE}: {e}")))?;
        if existing != layout {
            return Err(StoreError::CorruptLayout(format!(
                "existing {LAYOUT_FILE} does not match the requested layout"
            )));
        }
    } else {
        write_atomic(&layout_path, serde_json::to_string_pretty(&layout)?.as_bytes()).map_err(
            |source| StoreError::PathNotWritable {
                path: root.clone(),
                source,
            },
        )?;
    }
    let store = RecordStore {
        root,
        layout: RwLock::new(layout),
        patient_locks: Mutex::default(),
        crash_at: Mutex::new(None),
    };
    store.ensure_skeleton()?;
    journal::recover(&store.root)?;
    Ok(store)
}

impl RecordStore {
    /// Opens an existing store using its persisted layout.
    pub fn open(root: impl AsRef<Path>) -> Result<RecordStore> {
        let root = root.as_ref();
        let bytes = fs::read(root.join(LAYOUT_FILE)).map_err(|e| {
            StoreError::CorruptLayout(format!("cannot read {}: {e}", root.join(LAYOUT_FILE).display()))
        })?;
        let layout: StoreLayout = serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::CorruptLayout(format!("{LAYOUT_FILE}: {e}")))?;
        init_store(root, layout)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn layout(&self) -> StoreLayout {
        self.layout.read().unwrap().clone()
    }

    fn ensure_skeleton(&self) -> Result<()> {
        let layout = self.layout();
        let check_dir = |p: &Path| -> Result<()> {
            if p.exists() && !p.is_dir() {
                return Err(StoreError::CorruptLayout(format!(
                    "{} exists and is not a directory",
                    p.display()
                )));
            }
            fs::create_dir_all(p).map_err(|source| StoreError::PathNotWritable {
                path: p.to_path_buf(),
                source,
            })
        };
        check_dir(&self.root.join(&layout.patient_root))?;
        let spec_root = self.root.join(&layout.specialty_root);
        check_dir(&spec_root)?;
        for name in &layout.specialties {
            check_dir(&spec_root.join(name))?;
        }
        Ok(())
    }

    /// Adds a specialty folder. This is an administrative operation; the
    /// agent never invokes it.
    pub fn add_specialty(&self, name: &str) -> Result<()> {
        let mut layout = self.layout.write().unwrap();
        let mut updated = layout.clone();
        updated.specialties.push(name.to_string());
        updated.validate()?;
        fs::create_dir_all(self.root.join(&updated.specialty_root).join(name))?;
        write_atomic(
            &self.root.join(LAYOUT_FILE),
            serde_json::to_string_pretty(&updated)?.as_bytes(),
        )?;
        *layout = updated;
        Ok(())
    }

    /// Arms a one-shot crash at `point` in the next folder move. The move
    /// then returns [`StoreError::InjectedCrash`] leaving the disk as a real
    /// crash would; reopen the store to recover.
    pub fn inject_crash(&self, point: CrashPoint) {
        *self.crash_at.lock().unwrap() = Some(point);
    }

    fn crash_check(&self, point: CrashPoint) -> Result<()> {
        let mut armed = self.crash_at.lock().unwrap();
        if *armed == Some(point) {
            *armed = None;
            return Err(StoreError::InjectedCrash(point));
        }
        Ok(())
    }

    fn patient_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.patient_locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn location_dir(&self, location: &Location) -> PathBuf {
        let layout = self.layout.read().unwrap();
        match location {
            Location::CentralDatabase => self.root.join(&layout.patient_root),
            Location::Specialty(name) => self.root.join(&layout.specialty_root).join(name),
        }
    }

    pub fn patient_dir(&self, id: &str, location: &Location) -> PathBuf {
        self.location_dir(location).join(id)
    }

    fn all_locations(&self) -> Vec<Location> {
        let layout = self.layout.read().unwrap();
        std::iter::once(Location::CentralDatabase)
            .chain(layout.specialties.iter().cloned().map(Location::Specialty))
            .collect()
    }

    /// Every location holding a folder for `id`. Length 1 in a consistent store.
    pub fn locations_of(&self, id: &str) -> Vec<Location> {
        self.all_locations()
            .into_iter()
            .filter(|loc| self.patient_dir(id, loc).is_dir())
            .collect()
    }

    pub fn locate(&self, id: &str) -> Option<Location> {
        if validate_patient_id(id).is_err() {
            return None;
        }
        self.locations_of(id).into_iter().next()
    }

    fn require(&self, id: &str) -> Result<Location> {
        self.locate(id)
            .ok_or_else(|| StoreError::UnknownPatient(id.to_string()))
    }

    /// All patient folders as `(id, location)`, sorted by id.
    pub fn list_patients(&self) -> Result<Vec<(String, Location)>> {
        let mut out = Vec::new();
        for loc in self.all_locations() {
            out.extend(self.patients_at(&loc)?.into_iter().map(|id| (id, loc.clone())));
        }
        out.sort();
        Ok(out)
    }

    pub(crate) fn patients_at(&self, location: &Location) -> Result<Vec<String>> {
        let dir = self.location_dir(location);
        let mut ids = Vec::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(ids),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type()?.is_dir() && validate_patient_id(&name).is_ok() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn folder(&self, id: &str) -> Result<PatientFolder> {
        let location = self.require(id)?;
        let documents = self.documents_in(id, &location)?;
        Ok(PatientFolder {
            patient_id: id.to_string(),
            location,
            documents,
        })
    }

    fn documents_in(&self, id: &str, location: &Location) -> Result<Vec<DocumentRef>> {
        let dir = self.patient_dir(id, location);
        let mut docs = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some((kind, _)) = DocKind::parse_filename(&name) else {
                continue;
            };
            let bytes = fs::read(entry.path())?;
            let modified = entry.metadata()?.modified()?;
            docs.push(DocumentRef {
                patient_id: id.to_string(),
                doc_kind: kind,
                filename: name,
                created_at: modified.into(),
                content_digest: digest(&bytes),
            });
        }
        docs.sort_by(|a, b| a.filename.cmp(&b.filename));
        Ok(docs)
    }

    pub fn list_documents(&self, id: &str) -> Result<Vec<DocumentRef>> {
        let location = self.require(id)?;
        self.documents_in(id, &location)
    }

    /// Folders whose id or document filenames contain `name_or_id`,
    /// case-insensitively. Document contents are not consulted.
    pub fn find_patient(&self, name_or_id: &str) -> Result<Vec<PatientFolder>> {
        let query = name_or_id.trim().to_lowercase();
        if query.is_empty() {
            return Ok(Vec::new());
        }
        let mut found = Vec::new();
        for (id, location) in self.list_patients()? {
            let docs = self.documents_in(&id, &location)?;
            let hit = id.to_lowercase().contains(&query)
                || docs.iter().any(|d| d.filename.to_lowercase().contains(&query));
            if hit {
                found.push(PatientFolder {
                    patient_id: id,
                    location,
                    documents: docs,
                });
            }
        }
        Ok(found)
    }

    pub fn create_patient(&self, id: &str, demographics: &str) -> Result<PatientFolder> {
        validate_patient_id(id)?;
        let lock = self.patient_lock(id);
        let _guard = lock.lock().unwrap();
        if self.locate(id).is_some() {
            return Err(StoreError::DuplicatePatient(id.to_string()));
        }
        let dir = self.patient_dir(id, &Location::CentralDatabase);
        fs::create_dir(&dir)?;
        write_atomic(&dir.join(DocKind::Profile.filename(1)), demographics.as_bytes())?;
        let documents = self.documents_in(id, &Location::CentralDatabase)?;
        Ok(PatientFolder {
            patient_id: id.to_string(),
            location: Location::CentralDatabase,
            documents,
        })
    }

    pub fn store_document(&self, id: &str, kind: DocKind, content: &str) -> Result<DocumentRef> {
        let lock = self.patient_lock(id);
        let _guard = lock.lock().unwrap();
        let location = self.require(id)?;
        let dir = self.patient_dir(id, &location);
        let mut next = 1;
        for entry in fs::read_dir(&dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some((k, seq)) = DocKind::parse_filename(&name) {
                if k == kind {
                    next = next.max(seq + 1);
                }
            }
        }
        if next > MAX_SEQUENCE {
            return Err(StoreError::FilenameCollision {
                patient_id: id.to_string(),
                kind,
            });
        }
        let filename = kind.filename(next);
        let path = dir.join(&filename);
        write_atomic(&path, content.as_bytes())?;
        Ok(DocumentRef {
            patient_id: id.to_string(),
            doc_kind: kind,
            created_at: fs::metadata(&path)?.modified()?.into(),
            content_digest: digest(content.as_bytes()),
            filename,
        })
    }

    pub fn read_document(&self, id: &str, filename: &str) -> Result<String> {
        if DocKind::parse_filename(filename).is_none() {
            return Err(StoreError::UnknownDocument {
                patient_id: id.to_string(),
                filename: filename.to_string(),
            });
        }
        let location = self.require(id)?;
        match fs::read_to_string(self.patient_dir(id, &location).join(filename)) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::UnknownDocument {
                patient_id: id.to_string(),
                filename: filename.to_string(),
            }),
            other => Ok(other?),
        }
    }

    /// Latest document of `kind` by sequence number.
    pub fn latest_document(&self, id: &str, kind: DocKind) -> Result<Option<(DocumentRef, String)>> {
        let latest = self
            .list_documents(id)?
            .into_iter()
            .filter(|d| d.doc_kind == kind)
            .max_by_key(|d| d.filename.clone());
        match latest {
            Some(doc) => {
                let text = self.read_document(id, &doc.filename)?;
                Ok(Some((doc, text)))
            }
            None => Ok(None),
        }
    }

    fn aux_path(&self, id: &str, name: &str) -> Result<PathBuf> {
        if name.is_empty()
            || name.starts_with('.')
            || name.contains(['/', '\\'])
            || DocKind::parse_filename(name).is_some()
        {
            return Err(StoreError::InvalidFileName(name.to_string()));
        }
        let location = self.require(id)?;
        Ok(self.patient_dir(id, &location).join(name))
    }

    /// Atomically writes a non-document file (e.g. `episode.json`) into the
    /// patient folder.
    pub fn write_aux(&self, id: &str, name: &str, content: &[u8]) -> Result<()> {
        let lock = self.patient_lock(id);
        let _guard = lock.lock().unwrap();
        let path = self.aux_path(id, name)?;
        write_atomic(&path, content)?;
        Ok(())
    }

    pub fn append_aux(&self, id: &str, name: &str, content: &[u8]) -> Result<()> {
        use std::io::Write;
        let lock = self.patient_lock(id);
        let _guard = lock.lock().unwrap();
        let path = self.aux_path(id, name)?;
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(content)?;
        Ok(())
    }

    pub fn read_aux(&self, id: &str, name: &str) -> Result<Option<Vec<u8>>> {
        let path = self.aux_path(id, name)?;
        match fs::read(path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Moves the patient's whole folder under `specialty`. Moving to the
    /// current location is a no-op.
    pub fn move_to_specialty(&self, id: &str, specialty: &str) -> Result<PatientFolder> {
        let canonical = self
            .layout()
            .resolve_specialty(specialty)
            .map(str::to_string)
            .ok_or_else(|| StoreError::UnknownSpecialty(specialty.to_string()))?;
        let lock = self.patient_lock(id);
        let _guard = lock.lock().unwrap();
        let from = self.require(id)?;
        let to = Location::Specialty(canonical);
        if from != to {
            self.relocate(id, &from, &to)?;
        }
        self.folder_at(id, to)
    }

    /// Returns the patient's folder from its specialty to the central database.
    pub fn discharge_to_central(&self, id: &str) -> Result<PatientFolder> {
        let lock = self.patient_lock(id);
        let _guard = lock.lock().unwrap();
        let from = self.require(id)?;
        if from == Location::CentralDatabase {
            return Err(StoreError::AlreadyCentral(id.to_string()));
        }
        self.relocate(id, &from, &Location::CentralDatabase)?;
        self.folder_at(id, Location::CentralDatabase)
    }

    fn folder_at(&self, id: &str, location: Location) -> Result<PatientFolder> {
        let documents = self.documents_in(id, &location)?;
        Ok(PatientFolder {
            patient_id: id.to_string(),
            location,
            documents,
        })
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    /// Journaled copy-then-delete. Caller holds the patient lock.
    fn relocate(&self, id: &str, from: &Location, to: &Location) -> Result<()> {
        let src = self.patient_dir(id, from);
        let dst = self.patient_dir(id, to);
        let staging = journal::staging_path(&dst, id);
        let record = |state| JournalRecord {
            op: "move".into(),
            patient: id.to_string(),
            src: self.relative(&src),
            dst: self.relative(&dst),
            state,
        };
        journal::append(&self.root, &record(MoveState::Begin))?;
        self.crash_check(CrashPoint::AfterBegin)?;

        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)?;
        let mut entries: Vec<_> = fs::read_dir(&src)?.collect::<io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for (i, entry) in entries.iter().enumerate() {
            copy_preserving_mtime(&entry.path(), &staging.join(entry.file_name()))?;
            if i == 0 {
                self.crash_check(CrashPoint::MidCopy)?;
            }
        }
        self.crash_check(CrashPoint::AfterCopy)?;

        fs::rename(&staging, &dst)?;
        self.crash_check(CrashPoint::AfterRename)?;
        journal::append(&self.root, &record(MoveState::Copied))?;
        self.crash_check(CrashPoint::AfterCopiedRecord)?;

        if let Some(first) = entries.first() {
            fs::remove_file(first.path())?;
            self.crash_check(CrashPoint::MidDelete)?;
        }
        fs::remove_dir_all(&src)?;
        self.crash_check(CrashPoint::AfterDelete)?;
        journal::append(&self.root, &record(MoveState::Done))?;
        Ok(())
    }

    /// Journal records currently on disk, for inspection.
    pub fn journal(&self) -> Result<Vec<JournalRecord>> {
        journal::read(&self.root)
    }
}

fn copy_preserving_mtime(src: &Path, dst: &Path) -> io::Result<()> {
    let meta = fs::metadata(src)?;
    if meta.is_dir() {
        fs::create_dir(dst)?;
        for entry in fs::read_dir(src)? {
            let entry = entry?;
            copy_preserving_mtime(&entry.path(), &dst.join(entry.file_name()))?;
        }
        return Ok(());
    }
    fs::copy(src, dst)?;
    let f = fs::OpenOptions::new().write(true).open(dst)?;
    f.set_modified(meta.modified()?)?;
    Ok(())
}

/// Write to a temporary sibling, then rename over the target.
pub(crate) fn write_atomic(path: &Path, content: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    static SEQ: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let n = SEQ.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let tmp = path.with_file_name(format!(".{name}.{}.{n}.tmp", std::process::id()));
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)
}
