//! The per-episode clinical state machine.
//!
//! An episode runs Inquiry → Triage → (referral) → Reporting ⇄ exam loop →
//! MedicationPlanning → Discharged. Each transition is checked against the
//! current [`Stage`], applied to the record store and persisted to
//! `episode.json` in the patient folder before returning.

mod engine;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docs::{DiagnosisAssessment, DocsError, ReferralReport};
use crate::grounding::GroundingError;
use crate::store::StoreError;

pub use engine::{draft_file_name, MedicationDraft, ReportInputs, Workflow, EPISODE_FILE};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("{op} is not allowed at stage {stage}")]
    WrongStage { op: &'static str, stage: String },
    #[error("exam budget exhausted ({used}/{budget})")]
    BudgetExhausted { used: u32, budget: u32 },
    #[error("no final assessment")]
    NoFinalAssessment,
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("patient {0:?} has no episode")]
    NoEpisode(String),
    #[error("patient {0:?} already has an active episode")]
    ActiveEpisode(String),
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("invalid exam request: {0}")]
    InvalidExam(String),
    #[error("invalid referral: {0}")]
    InvalidReferral(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("clinician approval required")]
    ApprovalRequired,
    #[error("no report exists yet")]
    NoReport,
    #[error("stored report is invalid: {0}")]
    CorruptReport(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Docs(#[from] DocsError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error("episode file: {0}")]
    Episode(#[from] serde_json::Error),
}

pub type Result<T, E = WorkflowError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowPolicy {
    pub exam_budget: u32,
    /// A diagnosis is accepted when confidence is strictly greater.
    pub confidence_accept_threshold: u8,
    pub max_key_terms: usize,
    pub medication_count: usize,
}

impl Default for WorkflowPolicy {
    fn default() -> Self {
        Self {
            exam_budget: 4,
            confidence_accept_threshold: 7,
            max_key_terms: 3,
            medication_count: 3,
        }
    }
}

impl WorkflowPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.exam_budget == 0 || self.max_key_terms == 0 || self.medication_count == 0 {
            return Err(WorkflowError::InvalidPolicy("all limits must be positive".into()));
        }
        if !(1..=10).contains(&self.confidence_accept_threshold) {
            return Err(WorkflowError::InvalidPolicy(format!(
                "threshold {} outside 1..=10",
                self.confidence_accept_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    AcceptDiagnosis,
    RequestExam,
    ForcedFinal,
}

/// Gating rule. Acceptance takes precedence: a confident diagnosis on the
/// last exam is accepted rather than forced.
pub fn decide(confidence: u8, exams_used: u32, policy: &WorkflowPolicy) -> Decision {
    if confidence > policy.confidence_accept_threshold {
        Decision::AcceptDiagnosis
    } else if exams_used >= policy.exam_budget {
        Decision::ForcedFinal
    } else {
        Decision::RequestExam
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamRequest {
    pub name: String,
    pub rationale: String,
    pub requested_at: DateTime<Utc>,
}

impl ExamRequest {
    pub fn new(name: impl Into<String>, rationale: impl Into<String>) -> Self {
        Self {
            name: name.into().trim().to_string(),
            rationale: rationale.into(),
            requested_at: Utc::now(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ExamOutcome {
    /// `name` is the item actually provided, which may differ from the
    /// requested name.
    Result { name: String, content: String },
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum ExamStatus {
    Pending,
    Resulted { provided: String, document: String },
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamRecord {
    pub request: ExamRequest,
    #[serde(flatten)]
    pub status: ExamStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Stage {
    Inquiry,
    Triage,
    UnderSpecialty { specialty: String },
    AwaitingExamResult { request: ExamRequest },
    Reporting,
    ReferralPending,
    MedicationPlanning,
    Discharged,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Inquiry => "Inquiry",
            Stage::Triage => "Triage",
            Stage::UnderSpecialty { .. } => "UnderSpecialty",
            Stage::AwaitingExamResult { .. } => "AwaitingExamResult",
            Stage::Reporting => "Reporting",
            Stage::ReferralPending => "ReferralPending",
            Stage::MedicationPlanning => "MedicationPlanning",
            Stage::Discharged => "Discharged",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::UnderSpecialty { specialty } => write!(f, "UnderSpecialty({specialty})"),
            Stage::AwaitingExamResult { request } => write!(f, "AwaitingExamResult({})", request.name),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InquiryTurn {
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeEvent {
    pub at: DateTime<Utc>,
    pub op: String,
    pub stage: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAssessment {
    pub decision: Decision,
    pub assessment: DiagnosisAssessment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseState {
    pub episode_id: String,
    pub patient_id: String,
    pub stage: Stage,
    /// Managing specialty; `None` while the patient is in primary care.
    pub specialty: Option<String>,
    pub exams_used: u32,
    pub exam_budget: u32,
    pub exams: Vec<ExamRecord>,
    pub latest_assessment: Option<DiagnosisAssessment>,
    pub final_assessment: Option<FinalAssessment>,
    pub report_revisions: u32,
    pub results_ingested: u32,
    pub key_terms: Vec<String>,
    pub inquiry_turns: Vec<InquiryTurn>,
    pub referrals: Vec<String>,
    pub pending_referral: Option<ReferralReport>,
    /// Stage to return to when a pending referral is approved or rejected.
    pub resume_stage: Option<Box<Stage>>,
    pub medication_count: Option<usize>,
    pub approvals: Vec<String>,
    pub traces: Vec<String>,
    pub events: Vec<EpisodeEvent>,
    pub started_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl CaseState {
    pub fn new(patient_id: &str, episode_id: String, policy: &WorkflowPolicy) -> Self {
        let now = Utc::now();
        Self {
            episode_id,
            patient_id: patient_id.to_string(),
            stage: Stage::Inquiry,
            specialty: None,
            exams_used: 0,
            exam_budget: policy.exam_budget,
            exams: Vec::new(),
            latest_assessment: None,
            final_assessment: None,
            report_revisions: 0,
            results_ingested: 0,
            key_terms: Vec::new(),
            inquiry_turns: Vec::new(),
            referrals: Vec::new(),
            pending_referral: None,
            resume_stage: None,
            medication_count: None,
            approvals: Vec::new(),
            traces: Vec::new(),
            events: Vec::new(),
            started_at: now,
            updated_at: now,
        }
    }

    pub fn current_specialty(&self) -> &str {
        self.specialty.as_deref().unwrap_or(crate::store::PRIMARY_CARE)
    }

    pub fn pending_exam(&self) -> Option<&ExamRequest> {
        match &self.stage {
            Stage::AwaitingExamResult { request } => Some(request),
            _ => None,
        }
    }

    /// Checks the state's own invariants; returns the broken ones.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.exams_used > self.exam_budget {
            out.push(format!("exams_used {} > budget {}", self.exams_used, self.exam_budget));
        }
        let settled = self.exams.iter().filter(|e| e.status != ExamStatus::Pending).count();
        if self.exams_used as usize != settled {
            out.push("exams_used disagrees with exam records".into());
        }
        let resulted = self.exams.iter().filter(|e| matches!(e.status, ExamStatus::Resulted { .. })).count();
        if self.results_ingested as usize != resulted {
            out.push("results_ingested disagrees with exam records".into());
        }
        let outstanding = self.exams.len() - settled;
        if outstanding > 1 || (outstanding == 1) != self.pending_exam().is_some() {
            out.push(format!("{outstanding} outstanding exam requests"));
        }
        if self.report_revisions > 0 && self.report_revisions != 1 + self.results_ingested {
            out.push(format!(
                "report_revisions {} != 1 + results {}",
                self.report_revisions, self.results_ingested
            ));
        }
        if self.stage == Stage::Discharged && self.final_assessment.is_none() {
            out.push("discharged without final assessment".into());
        }
        out
    }
}
