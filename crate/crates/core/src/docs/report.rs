use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::fields::{bullets, parse_fields};
use super::{
    provenance_lines, render_grounding, render_inputs, squash, strip_fence, with_repair,
    DiagnosisAssessment, DocsError, InputDoc, Section,
};
use crate::gateway::{ChatBackend, ChatMessage};
use crate::grounding::GroundingDoc;
use crate::store::DocumentRef;

/// Body text for sections with nothing to report yet.
pub const PLACEHOLDER: &str = "Not available at this stage.";

const REPORT_TITLE: &str = "# Medical Report";
const EXPLANATION_TITLE: &str = "# Report Update Explanation";
const ASSESSMENT: &str = "Assessment";
const SOURCES: &str = "Sources";
const UPDATE_RATIONALE: &str = "Update Rationale";
const NONE: &str = "None.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub patient_id: String,
    pub revision: u32,
    pub sections: BTreeMap<Section, String>,
    pub assessment: DiagnosisAssessment,
    pub sources: Vec<String>,
}

impl StructuredReport {
    pub fn section(&self, section: Section) -> &str {
        self.sections.get(&section).map(String::as_str).unwrap_or(PLACEHOLDER)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{REPORT_TITLE}\nPatient: {}\nRevision: {}\n", self.patient_id, self.revision);
        for section in Section::ALL {
            out.push_str(&format!("\n## {}\n{}\n", section.title(), self.section(section)));
        }
        out.push_str(&format!("\n## {ASSESSMENT}\n{}\n", self.assessment.render()));
        out.push_str(&format!("\n## {SOURCES}\n"));
        if self.sources.is_empty() {
            out.push_str(NONE);
            out.push('\n');
        }
        for line in &self.sources {
            out.push_str(&format!("- {line}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    MissingTitle,
    MissingPatient,
    InvalidRevision(String),
    MissingSection(Section),
    DuplicateSection(Section),
    EmptySection(Section),
    SectionOrder,
    UnknownHeading(String),
    MissingAssessment,
    InvalidAssessment(String),
    MissingSources,
    SourcesNotLast,
    MalformedSource(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingTitle => write!(f, "missing title line {REPORT_TITLE:?}"),
            Violation::MissingPatient => write!(f, "missing Patient line"),
            Violation::InvalidRevision(r) => write!(f, "invalid revision {r:?}"),
            Violation::MissingSection(s) => write!(f, "missing section {}", s.title()),
            Violation::DuplicateSection(s) => write!(f, "duplicate section {}", s.title()),
            Violation::EmptySection(s) => write!(f, "empty section {}", s.title()),
            Violation::SectionOrder => write!(f, "section order"),
            Violation::UnknownHeading(h) => write!(f, "unknown heading {h:?}"),
            Violation::MissingAssessment => write!(f, "missing Assessment block"),
            Violation::InvalidAssessment(e) => write!(f, "invalid assessment: {e}"),
            Violation::MissingSources => write!(f, "missing Sources block"),
            Violation::SourcesNotLast => write!(f, "Sources block is not last"),
            Violation::MalformedSource(l) => write!(f, "malformed source line {l:?}"),
        }
    }
}

struct Block {
    heading: String,
    body: String,
}

/// Splits on `## ` headings. Returns the text before the first heading and
/// the blocks in document order.
fn split_blocks(text: &str) -> (String, Vec<Block>) {
    let mut preamble = String::new();
    let mut blocks: Vec<Block> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            blocks.push(Block {
                heading: h.trim().to_string(),
                body: String::new(),
            });
            continue;
        }
        let target = match blocks.last_mut() {
            Some(b) => &mut b.body,
            None => &mut preamble,
        };
        target.push_str(line);
        target.push('\n');
    }
    for b in &mut blocks {
        b.body = b.body.trim().to_string();
    }
    (preamble, blocks)
}

/// Checks a persisted report against the canonical grammar. Every violation
/// found is returned, not just the first.
pub fn validate_report(candidate: &str) -> Result<StructuredReport, Vec<Violation>> {
    let mut violations = Vec::new();
    let (preamble, blocks) = split_blocks(candidate);

    let mut lines = preamble.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(REPORT_TITLE) {
        violations.push(Violation::MissingTitle);
    }
    let header = parse_fields(&preamble, &["Patient", "Revision"]);
    let patient_id = header.get("Patient").cloned().unwrap_or_default();
    if patient_id.is_empty() {
        violations.push(Violation::MissingPatient);
    }
    let raw_revision = header.get("Revision").cloned().unwrap_or_default();
    let revision = raw_revision.parse::<u32>().ok().filter(|&r| r >= 1);
    if revision.is_none() {
        violations.push(Violation::InvalidRevision(raw_revision));
    }

    let mut sections = BTreeMap::new();
    let mut seen_order = Vec::new();
    let mut assessment = None;
    let mut sources = None;
    for (i, block) in blocks.iter().enumerate() {
        if let Some(section) = Section::from_title(&block.heading) {
            if sections.contains_key(&section) {
                violations.push(Violation::DuplicateSection(section));
                continue;
            }
            if block.body.is_empty() {
                violations.push(Violation::EmptySection(section));
            }
            seen_order.push(section);
            sections.insert(section, block.body.clone());
        } else if block.heading == ASSESSMENT {
            match DiagnosisAssessment::parse(&block.body) {
                Ok(a) => assessment = Some(a),
                Err(e) => violations.push(Violation::InvalidAssessment(e.to_string())),
            }
        } else if block.heading == SOURCES {
            if i + 1 != blocks.len() {
                violations.push(Violation::SourcesNotLast);
            }
            sources = Some(parse_sources(&block.body, &mut violations));
        } else {
            violations.push(Violation::UnknownHeading(block.heading.clone()));
        }
    }
    for section in Section::ALL {
        if !sections.contains_key(&section) {
            violations.push(Violation::MissingSection(section));
        }
    }
    if seen_order.windows(2).any(|w| w[0] > w[1]) {
        violations.push(Violation::SectionOrder);
    }
    if assessment.is_none() && !blocks.iter().any(|b| b.heading == ASSESSMENT) {
        violations.push(Violation::MissingAssessment);
    }
    if sources.is_none() {
        violations.push(Violation::MissingSources);
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(StructuredReport {
        patient_id,
        revision: revision.expect("checked"),
        sections,
        assessment: assessment.expect("checked"),
        sources: sources.expect("checked"),
    })
}

fn parse_sources(body: &str, violations: &mut Vec<Violation>) -> Vec<String> {
    let mut out = Vec::new();
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line == NONE {
            continue;
        }
        match line.strip_prefix("- ") {
            Some(s) if !s.trim().is_empty() => out.push(s.trim().to_string()),
            _ => violations.push(Violation::MalformedSource(line.to_string())),
        }
    }
    out
}

/// A model draft: sections, assessment and an optional update rationale.
struct Draft {
    sections: BTreeMap<Section, String>,
    assessment: DiagnosisAssessment,
    rationale: Option<String>,
}

enum DraftHeading {
    Section(Section),
    Assessment,
    Rationale,
    Sources,
}

fn draft_heading(line: &str) -> Option<DraftHeading> {
    let t = line.trim();
    if !(t.starts_with('#') || t.starts_with("**")) {
        return None;
    }
    let key = squash(t);
    if let Some(s) = Section::from_loose(&key) {
        return Some(DraftHeading::Section(s));
    }
    match key.as_str() {
        "assessment" | "diagnosisassessment" => Some(DraftHeading::Assessment),
        "updaterationale" => Some(DraftHeading::Rationale),
        "sources" | "references" => Some(DraftHeading::Sources),
        _ => None,
    }
}

/// Lines that would read as headings in the persisted grammar are demoted.
fn sanitize_body(body: &str) -> String {
    body.lines()
        .map(|l| {
            let t = l.trim_start();
            if t.starts_with("# ") || t.starts_with("## ") {
                format!("### {}", t.trim_start_matches('#').trim_start())
            } else {
                l.trim_end().to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

fn parse_draft(text: &str) -> Result<Draft, String> {
    let mut current: Option<DraftHeading> = None;
    let mut sections: BTreeMap<Section, String> = BTreeMap::new();
    let mut assessment_text: Option<String> = None;
    let mut rationale: Option<String> = None;
    let mut buf = String::new();

    let flush = |heading: &Option<DraftHeading>, buf: &mut String,
                     sections: &mut BTreeMap<Section, String>,
                     assessment_text: &mut Option<String>,
                     rationale: &mut Option<String>| {
        let body = std::mem::take(buf);
        match heading {
            Some(DraftHeading::Section(s)) => {
                sections.entry(*s).or_insert(body);
            }
            Some(DraftHeading::Assessment) => {
                assessment_text.get_or_insert(body);
            }
            Some(DraftHeading::Rationale) => {
                rationale.get_or_insert(body);
            }
            Some(DraftHeading::Sources) | None => {}
        }
    };

    for line in strip_fence(text).lines() {
        if let Some(h) = draft_heading(line) {
            flush(&current, &mut buf, &mut sections, &mut assessment_text, &mut rationale);
            current = Some(h);
        } else {
            buf.push_str(line);
            buf.push('\n');
        }
    }
    flush(&current, &mut buf, &mut sections, &mut assessment_text, &mut rationale);

    let missing: Vec<&str> = Section::ALL
        .into_iter()
        .filter(|s| !sections.contains_key(s))
        .map(Section::title)
        .collect();
    let mut problems = Vec::new();
    if !missing.is_empty() {
        problems.push(format!("missing sections: {}", missing.join(", ")));
    }
    let assessment = match assessment_text {
        None => {
            problems.push("missing Assessment block".to_string());
            None
        }
        Some(t) => match DiagnosisAssessment::parse(&t) {
            Ok(mut a) => {
                a.rationale = sanitize_body(&a.rationale);
                Some(a)
            }
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        },
    };
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    let sections = sections
        .into_iter()
        .map(|(s, body)| {
            let body = sanitize_body(&body);
            (s, if body.is_empty() { PLACEHOLDER.to_string() } else { body })
        })
        .collect();
    Ok(Draft {
        sections,
        assessment: assessment.expect("checked"),
        rationale: rationale.map(|r| sanitize_body(&r)).filter(|r| !r.is_empty()),
    })
}

fn heading_list() -> String {
    Section::ALL
        .iter()
        .map(|s| format!("## {}", s.title()))
        .chain([format!("## {ASSESSMENT}")])
        .collect::<Vec<_>>()
        .join("\n")
}

fn report_system() -> String {
    format!(
        "Task: report\n\
         You are a specialist physician writing a structured medical report. Use exactly \
         these markdown headings, in this order:\n{}\n\
         Write \"{PLACEHOLDER}\" under any section with no information yet. The Assessment \
         block has three lines: \"Diagnosis: <most likely diagnosis>\", \"Confidence: <integer \
         1-10>\" (1-4 vague or uncertain findings, 5-6 moderate, 7-10 strong evidence) and \
         \"Rationale: <reasoning>\". Use the reference material where relevant. Do not add a \
         sources list; it is attached automatically.",
        heading_list()
    )
}

fn update_system() -> String {
    format!(
        "Task: report-update\n\
         You revise a structured medical report after new evidence arrives. Integrate the new \
         data with the current report and reply with the complete revised report using exactly \
         these headings, in this order:\n{}\n## {UPDATE_RATIONALE}\n\
         Keep unchanged sections verbatim. Under {UPDATE_RATIONALE}, state which new \
         information caused each change and why; if the diagnosis or treatment plan changed, \
         say so explicitly. Assessment lines as before: Diagnosis, Confidence (1-10), Rationale.",
        heading_list()
    )
}

/// Drafts revision 1 from the inputs and grounding passages.
pub fn generate_report(
    patient_id: &str,
    inputs: &[InputDoc],
    grounding: &[GroundingDoc],
    chat: &dyn ChatBackend,
) -> Result<StructuredReport, DocsError> {
    if inputs.is_empty() || inputs.iter().all(|i| i.content.trim().is_empty()) {
        return Err(DocsError::EmptyInputs);
    }
    let user = format!(
        "Task: report\nPatient: {patient_id}\nRevision: 1\n\nPatient documents:\n{}\n{}",
        render_inputs(inputs),
        render_grounding(grounding)
    );
    let messages = vec![ChatMessage::system(report_system()), ChatMessage::user(user)];
    let header = format!("Task: report-repair\nPatient: {patient_id}\nRevision: 1");
    let draft = with_repair(chat, messages, &header, parse_draft)?;
    Ok(StructuredReport {
        patient_id: patient_id.to_string(),
        revision: 1,
        sections: draft.sections,
        assessment: draft.assessment,
        sources: provenance_lines(&[], grounding),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateExplanation {
    pub patient_id: String,
    pub prior_revision: u32,
    pub new_revision: u32,
    pub changed_sections: Vec<Section>,
    pub triggering_evidence: Vec<DocumentRef>,
    pub reasoning: String,
    pub diagnosis_changed: bool,
    pub prior_diagnosis: String,
    pub new_diagnosis: String,
}

impl UpdateExplanation {
    pub fn render(&self) -> String {
        let yes_no = if self.diagnosis_changed { "yes" } else { "no" };
        let mut out = format!(
            "{EXPLANATION_TITLE}\nPatient: {}\nPrior Revision: {}\nNew Revision: {}\n\
             Diagnosis Changed: {yes_no}\nPrior Diagnosis: {}\nNew Diagnosis: {}\n\n## Changed Sections\n",
            self.patient_id, self.prior_revision, self.new_revision, self.prior_diagnosis, self.new_diagnosis
        );
        if self.changed_sections.is_empty() {
            out.push_str(NONE);
            out.push('\n');
        }
        for s in &self.changed_sections {
            out.push_str(&format!("- {}\n", s.title()));
        }
        out.push_str("\n## Triggering Evidence\n");
        if self.triggering_evidence.is_empty() {
            out.push_str(NONE);
            out.push('\n');
        }
        for d in &self.triggering_evidence {
            out.push_str(&format!("- {} (sha256 {})\n", d.filename, d.content_digest));
        }
        out.push_str(&format!("\n## Reasoning\n{}\n", self.reasoning));
        out
    }
}

/// The checkable part of a persisted explanation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub prior_revision: u32,
    pub new_revision: u32,
    pub diagnosis_changed: bool,
    pub changed_sections: Vec<Section>,
    pub evidence: Vec<String>,
    pub reasoning: String,
}

pub fn parse_explanation(text: &str) -> Result<ExplanationRecord, String> {
    let (preamble, blocks) = split_blocks(text);
    if preamble.lines().map(str::trim).find(|l| !l.is_empty()) != Some(EXPLANATION_TITLE) {
        return Err("missing explanation title".into());
    }
    let h = parse_fields(
        &preamble,
        &["Patient", "Prior Revision", "New Revision", "Diagnosis Changed", "Prior Diagnosis", "New Diagnosis"],
    );
    let num = |k: &str| -> Result<u32, String> {
        h.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("missing or invalid {k}"))
    };
    let prior_revision = num("Prior Revision")?;
    let new_revision = num("New Revision")?;
    let diagnosis_changed = match h.get("Diagnosis Changed").map(String::as_str) {
        Some("yes") => true,
        Some("no") => false,
        other => return Err(format!("invalid Diagnosis Changed {other:?}")),
    };
    let block = |name: &str| blocks.iter().find(|b| b.heading == name).map(|b| b.body.as_str());
    let changed = block("Changed Sections").ok_or("missing Changed Sections")?;
    let changed_sections = bullets(changed)
        .iter()
        .filter(|s| s.as_str() != NONE)
        .map(|s| Section::from_title(s).ok_or_else(|| format!("unknown section {s:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    let evidence = bullets(block("Triggering Evidence").ok_or("missing Triggering Evidence")?)
        .into_iter()
        .filter(|s| s != NONE)
        .map(|s| s.split_whitespace().next().unwrap_or_default().to_string())
        .collect();
    let reasoning = block("Reasoning").ok_or("missing Reasoning")?.to_string();
    Ok(ExplanationRecord {
        prior_revision,
        new_revision,
        diagnosis_changed,
        changed_sections,
        evidence,
        reasoning,
    })
}

/// Sections whose trimmed text differs, in canonical order.
pub fn changed_sections(prior: &StructuredReport, new: &StructuredReport) -> Vec<Section> {
    Section::ALL
        .into_iter()
        .filter(|&s| prior.section(s).trim() != new.section(s).trim())
        .collect()
}

/// Produces revision `prior.revision + 1` and its explanation. The changed
/// section list comes from a text diff, never from the model.
pub fn update_report(
    prior: &StructuredReport,
    new_evidence: &[InputDoc],
    grounding: &[GroundingDoc],
    chat: &dyn ChatBackend,
) -> Result<(StructuredReport, UpdateExplanation), DocsError> {
    if new_evidence.is_empty() || new_evidence.iter().all(|i| i.content.trim().is_empty()) {
        return Err(DocsError::EmptyEvidence);
    }
    let next = prior.revision + 1;
    let user = format!(
        "Task: report-update\nPatient: {}\nRevision: {next}\n\nCurrent report:\n{}\nNew evidence:\n{}\n{}",
        prior.patient_id,
        prior.render(),
        render_inputs(new_evidence),
        render_grounding(grounding)
    );
    let messages = vec![ChatMessage::system(update_system()), ChatMessage::user(user)];
    let header = format!("Task: report-update-repair\nPatient: {}\nRevision: {next}", prior.patient_id);
    let draft = with_repair(chat, messages, &header, parse_draft)?;
    let report = StructuredReport {
        patient_id: prior.patient_id.clone(),
        revision: next,
        sections: draft.sections,
        assessment: draft.assessment,
        sources: provenance_lines(&prior.sources, grounding),
    };
    let changed = changed_sections(prior, &report);
    let reasoning = draft
        .rationale
        .unwrap_or_else(|| format!("No update rationale was given. Assessment rationale: {}", report.assessment.rationale));
    let explanation = UpdateExplanation {
        patient_id: prior.patient_id.clone(),
        prior_revision: prior.revision,
        new_revision: next,
        changed_sections: changed,
        triggering_evidence: new_evidence.iter().filter_map(|e| e.doc.clone()).collect(),
        reasoning,
        diagnosis_changed: prior.assessment.diagnosis.trim() != report.assessment.diagnosis.trim(),
        prior_diagnosis: prior.assessment.diagnosis.clone(),
        new_diagnosis: report.assessment.diagnosis.clone(),
    };
    Ok((report, explanation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{last_user_message, FnBackend, GatewayError};
    use crate::grounding::Source;
    use chrono::Utc;
    use proptest::prelude::*;

    pub(crate) fn draft(overrides: &[(Section, &str)], diagnosis: &str, confidence: u8) -> String {
        let mut out = String::new();
        for s in Section::ALL {
            let body = overrides
                .iter()
                .find(|(k, _)| *k == s)
                .map(|(_, v)| v.to_string())
                .unwrap_or_else(|| format!("{} text.", s.title()));
            out.push_str(&format!("## {}\n{}\n\n", s.title(), body));
        }
        out.push_str(&format!(
            "## Assessment\nDiagnosis: {diagnosis}\nConfidence: {confidence}\nRationale: fits the findings\n"
        ));
        out
    }

    fn fixed(text: String) -> impl ChatBackend {
        FnBackend::new("fixed", move |_| Ok(text.clone()))
    }

    fn gdoc(title: &str) -> GroundingDoc {
        GroundingDoc {
            source: Source::Wikipedia,
            query: title.to_lowercase(),
            title: title.into(),
            excerpt: "text".into(),
            url_or_id: format!("https://en.wikipedia.org/wiki/{title}"),
            fetched_at: Utc::now(),
        }
    }

    fn inputs() -> Vec<InputDoc> {
        vec![InputDoc::text("transcript_001.md", "Doctor: hi\nPatient: cough for a week")]
    }

    #[test]
    fn happy_path_revision_one() {
        let r = generate_report("p1", &inputs(), &[], &fixed(draft(&[], "Pneumonia", 6))).unwrap();
        assert_eq!(r.revision, 1);
        assert_eq!(r.sections.len(), 7);
        assert_eq!(r.assessment.confidence, 6);
        assert_eq!(validate_report(&r.render()), Ok(r));
    }

    #[test]
    fn grounding_provenance_lands_in_sources() {
        let g = vec![gdoc("Pneumonia"), gdoc("Cough"), gdoc("Pneumonia")];
        let r = generate_report("p1", &inputs(), &g, &fixed(draft(&[], "Pneumonia", 6))).unwrap();
        let want: std::collections::BTreeSet<String> = g.iter().map(GroundingDoc::provenance_line).collect();
        let got: std::collections::BTreeSet<String> = r.sources.iter().cloned().collect();
        assert_eq!(got, want);
        assert_eq!(r.sources.len(), 2);
    }

    #[test]
    fn repair_prompt_then_malformed() {
        let partial = draft(&[], "X", 5).replace("## Discharge Summary\nDischarge Summary text.\n", "");
        let calls = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let c = calls.clone();
        let backend = FnBackend::new("partial", move |msgs: &[ChatMessage]| {
            c.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if msgs.len() > 2 {
                assert!(last_user_message(msgs).unwrap().contains("Discharge Summary"));
            }
            Ok(partial.clone())
        });
        let err = generate_report("p1", &inputs(), &[], &backend).unwrap_err();
        assert!(matches!(err, DocsError::GenerationMalformed(ref m) if m.contains("Discharge Summary")));
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 2);
    }

    #[test]
    fn repair_succeeds() {
        let good = draft(&[], "X", 5);
        let backend = FnBackend::new("r", move |msgs: &[ChatMessage]| {
            Ok(if msgs.len() > 2 { good.clone() } else { "I cannot format that.".into() })
        });
        assert!(generate_report("p1", &inputs(), &[], &backend).is_ok());
    }

    #[test]
    fn empty_inputs() {
        let b = fixed(String::new());
        assert!(matches!(generate_report("p", &[], &[], &b), Err(DocsError::EmptyInputs)));
    }

    #[test]
    fn backend_error_propagates() {
        let b = FnBackend::new("down", |_| Err(GatewayError::Transport("down".into())));
        assert!(matches!(generate_report("p", &inputs(), &[], &b), Err(DocsError::Backend(_))));
    }

    #[test]
    fn loose_drafts_normalize() {
        let text = format!(
            "```markdown\n# Medical Report\nPreamble chatter\n{}\n## Sources\n- ignored\n```",
            draft(&[(Section::DischargeSummary, ""), (Section::ProgressNotes, "## Day 1\nstable")], "Flu", 4)
                .replace("## Test Results", "### test results")
        );
        let r = generate_report("p", &inputs(), &[], &fixed(text)).unwrap();
        assert_eq!(r.section(Section::DischargeSummary), PLACEHOLDER);
        assert_eq!(r.section(Section::ProgressNotes), "### Day 1\nstable");
        assert!(r.sources.is_empty());
        assert!(validate_report(&r.render()).is_ok());
    }

    fn prior() -> StructuredReport {
        generate_report("p1", &inputs(), &[gdoc("Cough")], &fixed(draft(&[], "Bronchitis", 5))).unwrap()
    }

    #[test]
    fn update_changes_two_sections() {
        let prior = prior();
        let revised = draft(
            &[(Section::TestResults, "CT: right lower lobe consolidation."), (Section::TreatmentPlan, "Start antibiotics.")],
            "Pneumonia",
            8,
        ) + "\n## Update Rationale\nCT shows consolidation.\n";
        let evidence = vec![InputDoc::text("exam_001.md", "CT chest: RLL consolidation")];
        let (r, e) = update_report(&prior, &evidence, &[gdoc("Pneumonia")], &fixed(revised)).unwrap();
        assert_eq!(r.revision, 2);
        assert_eq!(e.prior_revision, 1);
        assert_eq!(e.new_revision, 2);
        assert_eq!(e.changed_sections, vec![Section::TestResults, Section::TreatmentPlan]);
        assert!(e.diagnosis_changed);
        assert_eq!(e.reasoning, "CT shows consolidation.");
        assert_eq!(r.sources.len(), 2);
        let rec = parse_explanation(&e.render()).unwrap();
        assert_eq!(rec.changed_sections, e.changed_sections);
        assert!(rec.diagnosis_changed);
    }

    #[test]
    fn verbatim_update_changes_nothing() {
        let prior = prior();
        let same = draft(&[], "Bronchitis", 5);
        let (r, e) = update_report(&prior, &inputs(), &[], &fixed(same)).unwrap();
        assert!(e.changed_sections.is_empty());
        assert!(!e.diagnosis_changed);
        assert_eq!(r.revision, 2);
        assert!(e.reasoning.starts_with("No update rationale"));
    }

    #[test]
    fn empty_evidence() {
        let b = fixed(String::new());
        assert!(matches!(update_report(&prior(), &[], &[], &b), Err(DocsError::EmptyEvidence)));
    }

    #[test]
    fn reordered_sections_flagged() {
        let text = prior().render();
        let swapped = text
            .replace("## Medical History", "## TEMP")
            .replace("## Test Results", "## Medical History")
            .replace("## TEMP", "## Test Results");
        let v = validate_report(&swapped).unwrap_err();
        assert_eq!(v, vec![Violation::SectionOrder]);
        assert_eq!(v[0].to_string(), "section order");
    }

    #[test]
    fn missing_section_named() {
        let text = prior().render().replace("## Progress Notes\nProgress Notes text.\n", "");
        let v = validate_report(&text).unwrap_err();
        assert_eq!(v, vec![Violation::MissingSection(Section::ProgressNotes)]);
    }

    #[test]
    fn exhaustive_violations() {
        let text = "## Test Results\n\n## Test Results\nx\n## Sources\n- a\n## Bogus\nx\n";
        let v = validate_report(text).unwrap_err();
        for want in [
            Violation::MissingTitle,
            Violation::MissingPatient,
            Violation::InvalidRevision(String::new()),
            Violation::EmptySection(Section::TestResults),
            Violation::DuplicateSection(Section::TestResults),
            Violation::SourcesNotLast,
            Violation::UnknownHeading("Bogus".into()),
            Violation::MissingAssessment,
            Violation::MissingSection(Section::DischargeSummary),
        ] {
            assert!(v.contains(&want), "{want:?} not in {v:?}");
        }
        assert!(!v.contains(&Violation::MissingSources));
    }

    #[test]
    fn missing_sources_block() {
        let text = prior().render();
        let cut = &text[..text.find("## Sources").unwrap()];
        assert_eq!(validate_report(cut).unwrap_err(), vec![Violation::MissingSources]);
    }

    /// Independent oracle: compare section bodies by scanning rendered text.
    fn oracle_diff(a: &str, b: &str) -> Vec<Section> {
        let body = |text: &str, s: Section| -> String {
            let start = text.find(&format!("## {}\n", s.title())).unwrap() + s.title().len() + 4;
            let rest = &text[start..];
            rest[..rest.find("\n## ").unwrap()].trim().to_string()
        };
        Section::ALL.into_iter().filter(|&s| body(a, s) != body(b, s)).collect()
    }

    proptest! {
        #[test]
        fn render_validate_round_trip(
            bodies in proptest::collection::vec("[a-zA-Z0-9 .,]{1,40}(\n[a-zA-Z0-9 .,]{1,40}){0,2}", 7),
            diagnosis in "[A-Za-z][A-Za-z ]{0,20}[a-z]",
            confidence in 1u8..=10,
            sources in proptest::collection::vec("[A-Za-z\\[\\]<>:/ ]{1,30}[a-z]", 0..4),
        ) {
            let sections = Section::ALL.into_iter().zip(bodies.into_iter().map(|b| sanitize_body(&b)))
                .map(|(s, b)| (s, if b.is_empty() { PLACEHOLDER.to_string() } else { b }))
                .collect();
            let r = StructuredReport {
                patient_id: "p9".into(),
                revision: 3,
                sections,
                assessment: DiagnosisAssessment::new(diagnosis, confidence, "r").unwrap(),
                sources: sources.into_iter().map(|s| s.trim().to_string()).collect(),
            };
            prop_assert_eq!(validate_report(&r.render()), Ok(r));
        }

        #[test]
        fn diff_matches_oracle(changes in proptest::collection::vec(proptest::option::of("[a-z]{1,12}"), 7)) {
            let prior = prior();
            let overrides: Vec<(Section, String)> = Section::ALL.into_iter().zip(changes)
                .filter_map(|(s, c)| c.map(|c| (s, c))).collect();
            let refs: Vec<(Section, &str)> = overrides.iter().map(|(s, c)| (*s, c.as_str())).collect();
            let (r, e) = update_report(&prior, &inputs(), &[], &fixed(draft(&refs, "Bronchitis", 5))).unwrap();
            prop_assert_eq!(&e.changed_sections, &oracle_diff(&prior.render(), &r.render()));
            prop_assert_eq!(r.revision, prior.revision + 1);
        }
    }
}
