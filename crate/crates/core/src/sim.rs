//! A deterministic stand-in clinician for offline runs.
//!
//! [`SimClinician`] answers every prompt the workflow sends (key terms,
//! report drafts and updates, referrals, medications, inquiry questions and
//! the ReAct stages) from a per-case [`ClinicianScript`]. Replies are a pure
//! function of the messages, so runs replay bit-identically.

use serde::{Deserialize, Serialize};

use crate::bench::categorize_exam;
use crate::bench::ExamCategory;
use crate::docs::{validate_report, Section, PLACEHOLDER};
use crate::gateway::{
    estimate_tokens, validate_messages, ChatBackend, ChatMessage, ChatParams, Completion, GatewayError, Role,
};
use crate::store::PRIMARY_CARE;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedAssessment {
    pub diagnosis: String,
    pub confidence: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedMedication {
    pub brand_name: String,
    pub generic_name: String,
    pub dosage: String,
    pub frequency: String,
    pub duration: String,
    #[serde(default)]
    pub cautions: Vec<String>,
    #[serde(default)]
    pub side_effects: Vec<String>,
    #[serde(default)]
    pub patient_considerations: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClinicianScript {
    pub key_terms: Vec<String>,
    /// Referral target out of primary care; `None` keeps the patient there.
    pub specialty: Option<String>,
    /// A second referral proposed once an exam result has been reviewed.
    pub follow_up_specialty: Option<String>,
    /// Assessment per report revision; the last entry repeats.
    pub assessments: Vec<ScriptedAssessment>,
    /// Exam names requested in order.
    pub exams: Vec<String>,
    pub questions: Vec<String>,
    pub medications: Vec<ScriptedMedication>,
}

impl ClinicianScript {
    pub fn assessment(&self, revision: u32) -> ScriptedAssessment {
        let i = (revision.max(1) - 1) as usize;
        self.assessments
            .get(i)
            .or(self.assessments.last())
            .cloned()
            .unwrap_or(ScriptedAssessment {
                diagnosis: "Undifferentiated illness".into(),
                confidence: 5,
            })
    }
}

const GENERIC_QUESTIONS: [&str; 5] = [
    "What brings you in today?",
    "When did it start, and has it changed since?",
    "Do you have any other symptoms?",
    "Do you have any medical conditions or take any medicines?",
    "Is there anything else you think I should know?",
];

const FALLBACK_EXAM: &str = "complete blood count";

pub struct SimClinician {
    script: ClinicianScript,
}

impl SimClinician {
    pub const ID: &'static str = "sim-clinician";

    pub fn new(script: ClinicianScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &ClinicianScript {
        &self.script
    }

    fn respond(&self, messages: &[ChatMessage]) -> String {
        let first_user = messages.iter().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("");
        let system = messages.iter().find(|m| m.role == Role::System).map(|m| m.content.as_str()).unwrap_or("");
        let task = task_of(first_user).or_else(|| task_of(system)).unwrap_or("");
        let replies = messages.iter().filter(|m| m.role == Role::Assistant).count();
        match task {
            "key-terms" => self.key_terms(),
            "report" => self.report(first_user, 1),
            "report-update" => self.report_update(first_user),
            "referral" => self.referral(first_user),
            "medication" => self.medications(),
            "inquiry-question" => self.question(first_user),
            "assess-stage" => self.assess_stage(first_user, replies),
            "exam-stage" => self.exam_stage(first_user, replies),
            _ => "Final Answer: no scripted reply for this request".into(),
        }
    }

    fn key_terms(&self) -> String {
        if self.script.key_terms.is_empty() {
            "symptoms".into()
        } else {
            self.script.key_terms.join("; ")
        }
    }

    fn report(&self, user: &str, revision: u32) -> String {
        let patient = header(user, "Patient").unwrap_or_default();
        let history: Vec<String> = doc_blocks(user)
            .into_iter()
            .filter(|(label, _)| !label.starts_with("exam") && !label.starts_with("referral"))
            .flat_map(|(_, body)| summary_lines(&body))
            .take(6)
            .collect();
        let mut sections = vec![
            (Section::PatientIdentification, format!("Patient {patient}.")),
            (
                Section::MedicalHistory,
                if history.is_empty() { PLACEHOLDER.to_string() } else { history.join("\n") },
            ),
            (Section::PhysicalExaminationFindings, PLACEHOLDER.to_string()),
            (Section::TestResults, PLACEHOLDER.to_string()),
            (Section::TreatmentPlan, "Supportive care while the work-up continues.".to_string()),
            (Section::ProgressNotes, format!("Revision {revision}: initial assessment.")),
            (Section::DischargeSummary, PLACEHOLDER.to_string()),
        ];
        let a = self.script.assessment(revision);
        if a.confidence > 7 {
            sections[4].1 = format!("Treat as {}.", a.diagnosis);
        }
        draft(&sections, &a, None)
    }

    fn report_update(&self, user: &str) -> String {
        let revision: u32 = header(user, "Revision").and_then(|r| r.parse().ok()).unwrap_or(2);
        let current = between(user, "Current report:\n", "\nNew evidence:\n").unwrap_or("");
        let Ok(prior) = validate_report(current) else {
            return self.report(user, revision);
        };
        let mut sections: Vec<(Section, String)> =
            Section::ALL.iter().map(|&s| (s, prior.section(s).to_string())).collect();
        let mut reasons = Vec::new();
        let evidence = user.split_once("\nNew evidence:\n").map(|(_, e)| e).unwrap_or("");
        for (label, body) in doc_blocks(evidence) {
            let name = header(&body, "Provided").unwrap_or_else(|| label.clone());
            let finding = result_text(&body);
            let target = if categorize_exam(&name) == ExamCategory::PhysicalExam {
                Section::PhysicalExaminationFindings
            } else {
                Section::TestResults
            };
            let slot = &mut sections.iter_mut().find(|(s, _)| *s == target).expect("all sections").1;
            let line = format!("- {name}: {finding}");
            if slot.trim() == PLACEHOLDER {
                *slot = line;
            } else {
                slot.push('\n');
                slot.push_str(&line);
            }
            reasons.push(format!("The {name} result was added to {}.", target.title()));
            let notes = &mut sections[5].1;
            notes.push_str(&format!("\nRevision {revision}: reviewed {name}."));
        }
        let a = self.script.assessment(revision);
        let prior_a = &prior.assessment;
        if a.diagnosis != prior_a.diagnosis {
            reasons.push(format!(
                "The diagnosis changed from {} to {} in light of the new result.",
                prior_a.diagnosis, a.diagnosis
            ));
        } else if a.confidence != prior_a.confidence {
            reasons.push(format!(
                "Confidence in {} moved from {} to {}.",
                a.diagnosis, prior_a.confidence, a.confidence
            ));
        }
        if a.confidence > 7 {
            sections[4].1 = format!("Treat as {}.", a.diagnosis);
            reasons.push("The treatment plan now targets the working diagnosis.".into());
        }
        draft(&sections, &a, Some(&reasons.join(" ")))
    }

    fn referral(&self, user: &str) -> String {
        let current = header(user, "Current Specialty").unwrap_or_else(|| PRIMARY_CARE.into());
        let reviewed_result = header(user, "Revision").and_then(|r| r.parse::<u32>().ok()).unwrap_or(0) >= 2;
        let target = if current.eq_ignore_ascii_case(PRIMARY_CARE) {
            self.script.specialty.clone().unwrap_or(current.clone())
        } else {
            match &self.script.follow_up_specialty {
                Some(next) if reviewed_result && Some(&current) != Some(next) => next.clone(),
                _ => current.clone(),
            }
        };
        let a = self.script.assessment(1);
        format!(
            "Recommended Specialty: {target}\n\
             Rationale: The presentation is most consistent with {} and is best managed by {target}.\n\
             Clinical Summary: Patient referred from {current} for further evaluation.\n\
             Points for Attention:\n- Confirm the working diagnosis of {}.\n- Review outstanding examinations.\n",
            a.diagnosis, a.diagnosis
        )
    }

    fn medications(&self) -> String {
        let meds = if self.script.medications.is_empty() {
            vec![ScriptedMedication {
                brand_name: "Tylenol".into(),
                generic_name: "acetaminophen".into(),
                dosage: "500 mg".into(),
                frequency: "every 6 hours as needed".into(),
                duration: "up to 5 days".into(),
                cautions: vec!["liver disease".into()],
                side_effects: vec!["rare hepatotoxicity".into()],
                patient_considerations: "do not exceed 3 g per day".into(),
            }]
        } else {
            self.script.medications.clone()
        };
        let mut out = String::new();
        for (i, m) in meds.iter().enumerate() {
            out.push_str(&format!(
                "### Medication {}\nBrand Name: {}\nGeneric Name: {}\nDosage: {}\nFrequency: {}\nDuration: {}\n\
                 Cautions: {}\nSide Effects: {}\nPatient Considerations: {}\nSource: reference material\n\n",
                i + 1,
                m.brand_name,
                m.generic_name,
                m.dosage,
                m.frequency,
                m.duration,
                or_none(&m.cautions.join("; ")),
                or_none(&m.side_effects.join("; ")),
                or_none(&m.patient_considerations),
            ));
        }
        out
    }

    fn question(&self, user: &str) -> String {
        let turn: usize = header(user, "Turn").and_then(|t| t.parse().ok()).unwrap_or(1);
        let i = turn.max(1) - 1;
        self.script
            .questions
            .get(i)
            .map(String::as_str)
            .unwrap_or(GENERIC_QUESTIONS[i % GENERIC_QUESTIONS.len()])
            .to_string()
    }

    fn assess_stage(&self, user: &str, replies: usize) -> String {
        let revision: u32 = header(user, "Report revision").and_then(|r| r.parse().ok()).unwrap_or(1);
        let a = self.script.assessment(revision);
        if replies == 0 {
            let keyword = self.script.key_terms.first().cloned().unwrap_or_else(|| "Assessment".into());
            return format!(
                "Thought: Check where the report discusses {keyword}.\nAction: find_in_report\n```json\n{}\n```",
                serde_json::json!({ "keyword": keyword })
            );
        }
        format!(
            "Thought: The report supports a working diagnosis.\nFinal Answer: Diagnosis: {}; Confidence: {}",
            a.diagnosis, a.confidence
        )
    }

    fn exam_stage(&self, user: &str, replies: usize) -> String {
        let used: usize = header(user, "Exams used")
            .and_then(|u| u.split_whitespace().next().and_then(|n| n.parse().ok()))
            .unwrap_or(0);
        let name = self.script.exams.get(used).map(String::as_str).unwrap_or(FALLBACK_EXAM);
        if replies == 0 {
            return format!(
                "Thought: {name} would narrow the differential.\nAction: request_exam\n```json\n{}\n```",
                serde_json::json!({ "name": name, "rationale": "narrow the differential" })
            );
        }
        format!("Final Answer: requested {name}")
    }
}

impl ChatBackend for SimClinician {
    fn id(&self) -> String {
        Self::ID.into()
    }

    fn chat(&self, messages: &[ChatMessage], _params: &ChatParams) -> Result<Completion, GatewayError> {
        validate_messages(messages)?;
        let text = self.respond(messages);
        Ok(Completion {
            token_estimate: estimate_tokens(&text),
            text,
            backend_id: Self::ID.into(),
            latency_ms: 0,
        })
    }
}

fn task_of(text: &str) -> Option<&str> {
    text.lines().next()?.strip_prefix("Task:").map(str::trim)
}

/// Value of the first `Label: value` line.
fn header(text: &str, label: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let (k, v) = l.split_once(':')?;
        (k.trim() == label).then(|| v.trim().to_string())
    })
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let (_, rest) = text.split_once(start)?;
    Some(rest.split_once(end).map(|(a, _)| a).unwrap_or(rest))
}

/// `--- label ---` blocks as rendered in generation prompts.
fn doc_blocks(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(label) = line.strip_prefix("--- ").and_then(|l| l.strip_suffix(" ---")) {
            out.push((label.to_string(), String::new()));
        } else if line.starts_with("Reference material") {
            break;
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    out
}

fn summary_lines(body: &str) -> Vec<String> {
    body.lines()
        .map(|l| l.trim().trim_start_matches('#').trim())
        .filter(|l| !l.is_empty() && !l.starts_with("Patient:") && !l.starts_with("Doctor:"))
        .map(|l| l.strip_prefix("Patient ").unwrap_or(l).to_string())
        .map(|l| format!("- {l}"))
        .collect()
}

/// Result text below an exam document's header lines, on one line.
fn result_text(body: &str) -> String {
    let text = body.split_once("\n\n").map(|(_, r)| r).unwrap_or(body);
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined.is_empty() {
        "reported".into()
    } else {
        joined
    }
}

fn or_none(s: &str) -> &str {
    if s.trim().is_empty() {
        "none"
    } else {
        s
    }
}

fn draft(sections: &[(Section, String)], a: &ScriptedAssessment, rationale: Option<&str>) -> String {
    let mut out = String::new();
    for (s, body) in sections {
        out.push_str(&format!("## {}\n{}\n\n", s.title(), body.trim()));
    }
    out.push_str(&format!(
        "## Assessment\nDiagnosis: {}\nConfidence: {}\nRationale: Based on the findings recorded so far.\n",
        a.diagnosis, a.confidence
    ));
    if let Some(r) = rationale {
        out.push_str(&format!("\n## Update Rationale\n{r}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docs::{generate_report, update_report, InputDoc};

    fn script() -> ClinicianScript {
        ClinicianScript {
            key_terms: vec!["cough".into(), "fever".into()],
            specialty: Some("Pulmonology".into()),
            assessments: vec![
                ScriptedAssessment { diagnosis: "Pneumonia".into(), confidence: 5 },
                ScriptedAssessment { diagnosis: "Community-acquired pneumonia".into(), confidence: 8 },
            ],
            exams: vec!["chest X-ray".into()],
            ..Default::default()
        }
    }

    #[test]
    fn report_and_update_round_trip() {
        let sim = SimClinician::new(script());
        let inputs = [InputDoc::text("history_001.md", "Cough and fever for five days.")];
        let r1 = generate_report("p1", &inputs, &[], &sim).unwrap();
        assert_eq!(r1.assessment.confidence, 5);
        assert!(r1.section(Section::MedicalHistory).contains("Cough and fever"));
        let exam = "# Exam Result\nPatient: p1\nRequested: chest X-ray\nProvided: chest X-ray\n\nRight lower lobe consolidation.\n";
        let (r2, ex) = update_report(&r1, &[InputDoc::text("exam result: chest X-ray", exam)], &[], &sim).unwrap();
        assert_eq!(r2.revision, 2);
        assert_eq!(r2.assessment.diagnosis, "Community-acquired pneumonia");
        assert!(r2.section(Section::TestResults).contains("consolidation"));
        assert!(ex.changed_sections.contains(&Section::TestResults));
        assert!(ex.diagnosis_changed);
        assert!(ex.reasoning.contains("chest X-ray"));
    }

    #[test]
    fn react_stage_replies() {
        let sim = SimClinician::new(script());
        let goal = ChatMessage::user("Task: exam-stage\nPatient: p1\nExams used: 0 of 4\n");
        let first = sim.respond(&[goal.clone()]);
        assert!(first.contains("Action: request_exam") && first.contains("chest X-ray"));
        let done = sim.respond(&[goal, ChatMessage::assistant(first), ChatMessage::user("Observation: ok")]);
        assert!(done.starts_with("Final Answer:"));
        let used = ChatMessage::user("Task: exam-stage\nPatient: p1\nExams used: 3 of 4\n");
        assert!(sim.respond(&[used]).contains(FALLBACK_EXAM));
    }

    #[test]
    fn questions_cycle() {
        let sim = SimClinician::new(ClinicianScript::default());
        let ask = |t: usize| sim.respond(&[ChatMessage::user(format!("Task: inquiry-question\nTurn: {t}\n"))]);
        assert_eq!(ask(1), GENERIC_QUESTIONS[0]);
        assert_eq!(ask(6), GENERIC_QUESTIONS[0]);
    }
}
