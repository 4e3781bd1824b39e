//! Structured clinical documents: seven-section reports, update
//! explanations, referral reports and medication plans.
//!
//! Generation goes through a [`ChatBackend`]; everything else here is
//! deterministic parsing, validation and rendering. The markdown grammar is
//! described in `docs/report-format.md`.

mod fields;
mod medication;
mod referral;
mod report;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatBackend, ChatMessage, ChatParams, GatewayError};
use crate::grounding::GroundingDoc;
use crate::store::DocumentRef;

pub use medication::{
    generate_medications, parse_medication_plan, render_medication_plan, MedicationPlan,
    MedicationRecommendation, MedicationSet, UNVERIFIED_SOURCE,
};
pub use referral::{generate_referral, parse_referral, ReferralOutcome, ReferralReport};
pub use report::{
    changed_sections, generate_report, parse_explanation, update_report, validate_report, ExplanationRecord,
    StructuredReport, UpdateExplanation, Violation, PLACEHOLDER,
};

#[derive(Debug, Error)]
pub enum DocsError {
    #[error("no input documents")]
    EmptyInputs,
    #[error("no new evidence")]
    EmptyEvidence,
    #[error("malformed generation: {0}")]
    GenerationMalformed(String),
    #[error("model proposed unknown specialty {0:?}")]
    UnknownSpecialtyProposed(String),
    #[error("unknown specialty {0:?}")]
    UnknownSpecialty(String),
    #[error("invalid assessment: {0}")]
    InvalidAssessment(String),
    #[error(transparent)]
    Backend(#[from] GatewayError),
}

/// The seven report sections, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    PatientIdentification,
    MedicalHistory,
    PhysicalExaminationFindings,
    TestResults,
    TreatmentPlan,
    ProgressNotes,
    DischargeSummary,
}

impl Section {
    pub const ALL: [Section; 7] = [
        Section::PatientIdentification,
        Section::MedicalHistory,
        Section::PhysicalExaminationFindings,
        Section::TestResults,
        Section::TreatmentPlan,
        Section::ProgressNotes,
        Section::DischargeSummary,
    ];

    /// Heading text.
    pub fn title(self) -> &'static str {
        match self {
            Section::PatientIdentification => "Patient Identification",
            Section::MedicalHistory => "Medical History",
            Section::PhysicalExaminationFindings => "Physical Examination Findings",
            Section::TestResults => "Test Results",
            Section::TreatmentPlan => "Treatment Plan",
            Section::ProgressNotes => "Progress Notes",
            Section::DischargeSummary => "Discharge Summary",
        }
    }

    pub fn from_title(title: &str) -> Option<Section> {
        Section::ALL.into_iter().find(|s| s.title() == title)
    }

    /// Loose match used for model output: ignores case, punctuation and
    /// spacing, and accepts the key form (`TestResults`).
    pub fn from_loose(heading: &str) -> Option<Section> {
        let want = squash(heading);
        Section::ALL.into_iter().find(|s| squash(s.title()) == want)
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

pub(crate) fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceBand {
    Vague,
    Moderate,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisAssessment {
    pub diagnosis: String,
    pub confidence: u8,
    pub rationale: String,
}

impl DiagnosisAssessment {
    pub fn new(diagnosis: impl Into<String>, confidence: u8, rationale: impl Into<String>) -> Result<Self, DocsError> {
        let a = Self {
            diagnosis: diagnosis.into().trim().to_string(),
            confidence,
            rationale: rationale.into().trim().to_string(),
        };
        a.check()?;
        Ok(a)
    }

    pub fn check(&self) -> Result<(), DocsError> {
        if self.diagnosis.is_empty() {
            return Err(DocsError::InvalidAssessment("diagnosis is empty".into()));
        }
        if !(1..=10).contains(&self.confidence) {
            return Err(DocsError::InvalidAssessment(format!(
                "confidence {} outside 1..=10",
                self.confidence
            )));
        }
        Ok(())
    }

    pub fn band(&self) -> ConfidenceBand {
        match self.confidence {
            0..=4 => ConfidenceBand::Vague,
            5..=6 => ConfidenceBand::Moderate,
            _ => ConfidenceBand::Strong,
        }
    }

    /// Parses `Diagnosis:` / `Confidence:` / `Rationale:` lines. The
    /// rationale may continue over following lines.
    pub fn parse(text: &str) -> Result<Self, DocsError> {
        let f = fields::parse_fields(text, &["Diagnosis", "Confidence", "Rationale"]);
        let diagnosis = f.get("Diagnosis").cloned().unwrap_or_default();
        let raw = f.get("Confidence").cloned().unwrap_or_default();
        let confidence = leading_int(&raw)
            .ok_or_else(|| DocsError::InvalidAssessment(format!("confidence {raw:?} is not a number")))?;
        let confidence = u8::try_from(confidence)
            .map_err(|_| DocsError::InvalidAssessment(format!("confidence {confidence} outside 1..=10")))?;
        Self::new(diagnosis, confidence, f.get("Rationale").cloned().unwrap_or_default())
    }

    pub fn render(&self) -> String {
        format!(
            "Diagnosis: {}\nConfidence: {}\nRationale: {}",
            self.diagnosis, self.confidence, self.rationale
        )
    }
}

fn leading_int(s: &str) -> Option<u32> {
    let digits: String = s.trim().chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// One generation input: a stored document or free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDoc {
    pub label: String,
    pub content: String,
    pub doc: Option<DocumentRef>,
}

impl InputDoc {
    pub fn text(label: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            content: content.into(),
            doc: None,
        }
    }

    pub fn stored(doc: DocumentRef, content: impl Into<String>) -> Self {
        Self {
            label: doc.filename.clone(),
            content: content.into(),
            doc: Some(doc),
        }
    }
}

fn render_inputs(inputs: &[InputDoc]) -> String {
    let mut out = String::new();
    for input in inputs {
        out.push_str(&format!("--- {} ---\n{}\n", input.label, input.content.trim_end()));
    }
    out
}

fn render_grounding(grounding: &[GroundingDoc]) -> String {
    if grounding.is_empty() {
        return "Reference material: none.\n".into();
    }
    let mut out = String::from("Reference material:\n");
    for (i, g) in grounding.iter().enumerate() {
        out.push_str(&format!("[{}] {}\n{}\n", i + 1, g.provenance_line(), g.excerpt.trim()));
    }
    out
}

/// Deduplicated provenance lines in first-seen order.
pub fn provenance_lines<'a>(existing: &[String], grounding: impl IntoIterator<Item = &'a GroundingDoc>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in existing.iter().cloned().chain(grounding.into_iter().map(GroundingDoc::provenance_line)) {
        if !out.contains(&line) {
            out.push(line);
        }
    }
    out
}

/// Sends `messages`; on a parse failure appends one repair turn and tries
/// again. The error from the second attempt is returned as malformed.
fn with_repair<T>(
    chat: &dyn ChatBackend,
    mut messages: Vec<ChatMessage>,
    repair_header: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, DocsError> {
    let params = ChatParams::default();
    let first = chat.chat(&messages, &params)?;
    let problem = match parse(&first.text) {
        Ok(v) => return Ok(v),
        Err(p) => p,
    };
    tracing::debug!(%problem, "repairing malformed generation");
    messages.push(ChatMessage::assistant(first.text));
    messages.push(ChatMessage::user(format!(
        "{repair_header}\nYour previous reply could not be accepted: {problem}\n\
         Reply again with the complete document in the required format."
    )));
    let second = chat.chat(&messages, &params)?;
    parse(&second.text).map_err(DocsError::GenerationMalformed)
}

/// Removes a surrounding ``` fence, if the whole reply is fenced.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let Some(body) = rest.strip_suffix("```") else { return t };
    match body.split_once('\n') {
        Some((_lang, inner)) => inner.trim(),
        None => body.trim(),
    }
}
