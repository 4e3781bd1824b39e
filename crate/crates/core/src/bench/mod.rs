//! Benchmark harness: simulated patient cases run end to end through the
//! workflow, scored against a ground-truth diagnosis.
//!
//! Physical findings and test results stay hidden until the clinician asks
//! for them; the patient actor only ever sees the case's actor profile.

mod actor;
mod episode;
mod exams;
mod metrics;
mod svg;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docs::DocsError;
use crate::gateway::GatewayError;
use crate::react::ReactError;
use crate::sim::ClinicianScript;
use crate::store::{StoreError, DEFAULT_SPECIALTIES};
use crate::workflow::WorkflowError;

pub use actor::{simulate_patient_turn, ProfilePatient, PATIENT_TASK};
pub use episode::{ask_question, parse_final_assessment, run_case, CaseContext, CaseResult, ExamLog, DEFAULT_INQUIRY_TURNS};
pub use exams::{
    categorize_exam, match_exam, score_diagnosis, ExamCategory, ExamMatch, MatchedExam, CATEGORY_RULES,
    CATEGORY_RULES_VERSION,
};
pub use metrics::{
    build_metrics, run_benchmark, BenchBackends, BenchConfig, BenchOutput, CaseFailure, ExamHistogram, MetricsRow,
    MetricsTable,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("schema violations: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    SchemaViolation(Vec<Violation>),
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    React(#[from] ReactError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Docs(#[from] DocsError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub case_id: String,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}: {}", self.case_id, self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedText {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case_id: String,
    pub specialty: String,
    pub actor_profile: String,
    pub history: String,
    #[serde(default)]
    pub physical_findings: Vec<NamedText>,
    #[serde(default)]
    pub test_results: Vec<NamedText>,
    pub truth_diagnosis: String,
    /// Expected first referral target, when known.
    #[serde(default)]
    pub truth_specialty: Option<String>,
}

impl CaseSpec {
    /// Every broken invariant, named by field.
    pub fn violations(&self, specialties: &[String]) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &str, message: String| {
            out.push(Violation {
                case_id: self.case_id.clone(),
                field: field.into(),
                message,
            })
        };
        if self.case_id.trim().is_empty() {
            push("case_id", "empty".into());
        }
        if !specialties.iter().any(|s| s.eq_ignore_ascii_case(&self.specialty)) {
            push("specialty", format!("{:?} is not a configured specialty", self.specialty));
        }
        if let Some(t) = &self.truth_specialty {
            if !specialties.iter().any(|s| s.eq_ignore_ascii_case(t)) {
                push("truth_specialty", format!("{t:?} is not a configured specialty"));
            }
        }
        if self.actor_profile.trim().is_empty() {
            push("actor_profile", "empty".into());
        }
        if self.truth_diagnosis.trim().is_empty() {
            push("truth_diagnosis", "empty".into());
        }
        for (field, list) in [("physical_findings", &self.physical_findings), ("test_results", &self.test_results)] {
            let mut seen = HashSet::new();
            for item in list {
                if item.name.trim().is_empty() {
                    push(field, "item with empty name".into());
                } else if !seen.insert(item.name.to_lowercase()) {
                    push(field, format!("duplicate name {:?}", item.name));
                }
            }
        }
        out
    }
}

pub fn default_specialties() -> Vec<String> {
    DEFAULT_SPECIALTIES.iter().map(|s| s.to_string()).collect()
}

fn read(path: &Path) -> Result<String, BenchError> {
    fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn violation(case_id: &str, field: &str, message: impl Into<String>) -> Violation {
    Violation {
        case_id: case_id.into(),
        field: field.into(),
        message: message.into(),
    }
}

/// Loads cases from a directory of `*.json` case files (sorted by name) or
/// from one file holding a case or an array of cases. All violations are
/// collected before failing.
pub fn load_dataset(path: &Path, specialties: &[String]) -> Result<Vec<CaseSpec>, BenchError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|source| BenchError::Io {
                path: path.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut cases = Vec::new();
    let mut violations = Vec::new();
    for file in &files {
        let label = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let text = read(file)?;
        if text.trim().is_empty() {
            violations.push(violation(&label, "file", "empty file"));
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                violations.push(violation(&label, "file", e.to_string()));
                continue;
            }
        };
        let items = match value {
            serde_json::Value::Array(items) => items,
            other => vec![other],
        };
        for (i, item) in items.into_iter().enumerate() {
            let id = item
                .get("case_id")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("{label}[{i}]"));
            match serde_json::from_value::<CaseSpec>(item) {
                Ok(case) => {
                    violations.extend(case.violations(specialties));
                    cases.push(case);
                }
                Err(e) => violations.push(violation(&id, &field_of(&e.to_string()), e.to_string())),
            }
        }
    }
    let mut seen = HashSet::new();
    for c in &cases {
        if !seen.insert(c.case_id.clone()) {
            violations.push(violation(&c.case_id, "case_id", "duplicate case id"));
        }
    }
    if !violations.is_empty() {
        return Err(BenchError::SchemaViolation(violations));
    }
    if cases.is_empty() {
        return Err(BenchError::SchemaViolation(vec![violation(
            &path.display().to_string(),
            "file",
            "no cases found",
        )]));
    }
    Ok(cases)
}

/// The field named in a serde "missing field `x`" style message.
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "case".into())
}

/// Per-case clinician scripts from `scripts/<case_id>.json` next to the
/// case files. Cases without a script get the default one.
pub fn load_scripts(dataset: &Path) -> Result<BTreeMap<String, ClinicianScript>, BenchError> {
    let base = if dataset.is_dir() {
        dataset.to_path_buf()
    } else {
        dataset.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let dir = base.join("scripts");
    let mut out = BTreeMap::new();
    let Ok(entries) = fs::read_dir(&dir) else { return Ok(out) };
    for entry in entries.filter_map(Result::ok) {
        let path = entry.path();
        if path.extension().is_some_and(|x| x == "json") {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.insert(id, serde_json::from_str(&read(&path)?)?);
        }
    }
    Ok(out)
}
