use serde::{Deserialize, Serialize};

use super::fields::{bullets, parse_fields};
use super::{provenance_lines, render_grounding, squash, strip_fence, DiagnosisAssessment, DocsError};
use crate::gateway::{ChatBackend, ChatMessage, ChatParams};
use crate::grounding::GroundingDoc;

/// Source line for items no grounding document supports.
pub const UNVERIFIED_SOURCE: &str = "model knowledge, unverified";

const TITLE: &str = "# Medication Plan";
const LABELS: [&str; 9] = [
    "Brand Name",
    "Generic Name",
    "Dosage",
    "Frequency",
    "Duration",
    "Cautions",
    "Side Effects",
    "Patient Considerations",
    "Source",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationRecommendation {
    pub brand_name: String,
    pub generic_name: String,
    pub dosage: String,
    pub frequency: String,
    pub duration: String,
    pub cautions: Vec<String>,
    pub side_effects: Vec<String>,
    pub patient_considerations: String,
    pub source: String,
}

impl MedicationRecommendation {
    /// Mandatory-field check; returns the names of missing or invalid fields.
    pub fn problems(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.generic_name.trim().is_empty() {
            out.push("Generic Name");
        }
        let has_digit = self.dosage.chars().any(|c| c.is_ascii_digit());
        let has_unit = self.dosage.chars().any(char::is_alphabetic);
        if !(has_digit && has_unit) {
            out.push("Dosage (amount with unit)");
        }
        if self.frequency.trim().is_empty() {
            out.push("Frequency");
        }
        if self.duration.trim().is_empty() {
            out.push("Duration");
        }
        if self.source.trim().is_empty() {
            out.push("Source");
        }
        out
    }

    fn render(&self, index: usize) -> String {
        format!(
            "## Medication {index}\nBrand Name: {}\nGeneric Name: {}\nDosage: {}\nFrequency: {}\nDuration: {}\n\
             Cautions: {}\nSide Effects: {}\nPatient Considerations: {}\nSource: {}\n",
            self.brand_name,
            self.generic_name,
            self.dosage,
            self.frequency,
            self.duration,
            self.cautions.join("; "),
            self.side_effects.join("; "),
            self.patient_considerations,
            self.source
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationSet {
    pub items: Vec<MedicationRecommendation>,
    pub warnings: Vec<String>,
}

/// Splits model output into per-medication chunks at `Medication N`
/// headings. Output without such headings is one chunk.
fn chunks(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut seen_heading = false;
    for line in text.lines() {
        let t = line.trim();
        let is_heading = (t.starts_with('#') || t.starts_with("**"))
            && squash(t).starts_with("medication")
            && squash(t)["medication".len()..].chars().all(|c| c.is_ascii_digit());
        if is_heading {
            if seen_heading || !current.trim().is_empty() {
                out.push(std::mem::take(&mut current));
            }
            seen_heading = true;
            continue;
        }
        current.push_str(line);
        current.push('\n');
    }
    out.push(current);
    out.into_iter().filter(|c| !c.trim().is_empty()).collect()
}

fn list(text: &str) -> Vec<String> {
    bullets(text).into_iter().map(|s| s.replace(';', ",")).collect()
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Picks the provenance for an item: a grounding document mentioning the
/// generic name, else one whose title the model cited, else the unverified
/// marker.
fn attribute(generic: &str, cited: &str, grounding: &[GroundingDoc]) -> String {
    let g = generic.to_lowercase();
    let mentions = grounding.iter().find(|d| {
        d.title.to_lowercase().contains(&g) || d.excerpt.to_lowercase().contains(&g)
    });
    let cited = cited.to_lowercase();
    let named = || {
        grounding
            .iter()
            .find(|d| !d.title.trim().is_empty() && cited.contains(&d.title.to_lowercase()))
    };
    mentions
        .or_else(named)
        .map(GroundingDoc::provenance_line)
        .unwrap_or_else(|| UNVERIFIED_SOURCE.to_string())
}

fn parse_item(chunk: &str, grounding: &[GroundingDoc]) -> Result<MedicationRecommendation, String> {
    let f = parse_fields(chunk, &LABELS);
    let get = |k: &str| f.get(k).map(|v| one_line(v)).unwrap_or_default();
    let generic_name = get("Generic Name");
    let item = MedicationRecommendation {
        brand_name: get("Brand Name"),
        source: attribute(&generic_name, &get("Source"), grounding),
        generic_name,
        dosage: get("Dosage"),
        frequency: get("Frequency"),
        duration: get("Duration"),
        cautions: list(f.get("Cautions").map(String::as_str).unwrap_or_default()),
        side_effects: list(f.get("Side Effects").map(String::as_str).unwrap_or_default()),
        patient_considerations: f.get("Patient Considerations").cloned().unwrap_or_default(),
    };
    let problems = item.problems();
    if problems.is_empty() {
        Ok(item)
    } else {
        Err(format!("missing {}", problems.join(", ")))
    }
}

fn parse_set(text: &str, n: usize, grounding: &[GroundingDoc]) -> MedicationSet {
    let mut items: Vec<MedicationRecommendation> = Vec::new();
    let mut warnings = Vec::new();
    for (i, chunk) in chunks(strip_fence(text)).iter().enumerate() {
        match parse_item(chunk, grounding) {
            Ok(item) if items.iter().any(|m| m.generic_name.eq_ignore_ascii_case(&item.generic_name)) => {
                warnings.push(format!("item {}: duplicate {}", i + 1, item.generic_name));
            }
            Ok(_) if items.len() == n => {
                warnings.push(format!("item {}: beyond the requested {n}", i + 1));
            }
            Ok(item) => items.push(item),
            Err(e) => warnings.push(format!("item {}: {e}", i + 1)),
        }
    }
    MedicationSet { items, warnings }
}

fn system_prompt(n: usize) -> String {
    format!(
        "Task: medication\n\
         You recommend discharge medications for the final diagnosis using the reference \
         material. Give {n} recommendations, each under a heading \"### Medication <k>\" with \
         these labelled lines: Brand Name, Generic Name, Dosage (amount with unit), Frequency, \
         Duration, Cautions, Side Effects, Patient Considerations, Source (the reference you \
         relied on). Separate list items with semicolons."
    )
}

/// Up to `n` validated recommendations. Items that fail validation are
/// dropped with a warning; a reply with none usable gets one repair prompt.
pub fn generate_medications(
    patient_id: &str,
    assessment: &DiagnosisAssessment,
    grounding: &[GroundingDoc],
    chat: &dyn ChatBackend,
    n: usize,
) -> Result<MedicationSet, DocsError> {
    assessment.check()?;
    let n = n.max(1);
    let params = ChatParams::default();
    let mut messages = vec![
        ChatMessage::system(system_prompt(n)),
        ChatMessage::user(format!(
            "Task: medication\nPatient: {patient_id}\nDiagnosis: {}\nConfidence: {}\n\n{}",
            assessment.diagnosis,
            assessment.confidence,
            render_grounding(grounding)
        )),
    ];
    let first = chat.chat(&messages, &params)?;
    let set = parse_set(&first.text, n, grounding);
    if !set.items.is_empty() {
        for w in &set.warnings {
            tracing::warn!(patient_id, warning = %w, "medication item dropped");
        }
        return Ok(set);
    }
    messages.push(ChatMessage::assistant(first.text));
    messages.push(ChatMessage::user(format!(
        "Task: medication-repair\nPatient: {patient_id}\nNo recommendation could be used ({}). \
         Reply again with \"### Medication <k>\" blocks containing every labelled line.",
        set.warnings.join("; ")
    )));
    let second = chat.chat(&messages, &params)?;
    let mut retry = parse_set(&second.text, n, grounding);
    if retry.items.is_empty() {
        return Err(DocsError::GenerationMalformed(format!(
            "no usable medication recommendation: {}",
            retry.warnings.join("; ")
        )));
    }
    let mut warnings = set.warnings;
    warnings.append(&mut retry.warnings);
    Ok(MedicationSet {
        items: retry.items,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationPlan {
    pub patient_id: String,
    pub diagnosis: String,
    pub items: Vec<MedicationRecommendation>,
    pub sources: Vec<String>,
    pub note: Option<String>,
}

impl MedicationPlan {
    pub fn render(&self) -> String {
        let mut out = format!("{TITLE}\nPatient: {}\nDiagnosis: {}\n", self.patient_id, self.diagnosis);
        for (i, item) in self.items.iter().enumerate() {
            out.push('\n');
            out.push_str(&item.render(i + 1));
        }
        if let Some(note) = &self.note {
            out.push_str(&format!("\n## Note\n{note}\n"));
        }
        out.push_str("\n## Sources\n");
        if self.sources.is_empty() {
            out.push_str("None.\n");
        }
        for s in &self.sources {
            out.push_str(&format!("- {s}\n"));
        }
        out
    }
}

/// Builds the discharge medication document. Every grounding document
/// consulted is listed under sources, whether or not an item cites it.
pub fn render_medication_plan(
    patient_id: &str,
    assessment: &DiagnosisAssessment,
    items: &[MedicationRecommendation],
    grounding: &[GroundingDoc],
    note: Option<&str>,
) -> MedicationPlan {
    MedicationPlan {
        patient_id: patient_id.to_string(),
        diagnosis: assessment.diagnosis.clone(),
        items: items.to_vec(),
        sources: provenance_lines(&[], grounding),
        note: note.map(str::to_string),
    }
}

/// Reads back a persisted plan. Items are re-validated; any problem is an
/// error.
pub fn parse_medication_plan(text: &str) -> Result<MedicationPlan, String> {
    if text.lines().map(str::trim).find(|l| !l.is_empty()) != Some(TITLE) {
        return Err("missing medication plan title".into());
    }
    let mut preamble = String::new();
    let mut blocks: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            blocks.push((h.trim().to_string(), String::new()));
        } else if let Some((_, body)) = blocks.last_mut() {
            body.push_str(line);
            body.push('\n');
        } else {
            preamble.push_str(line);
            preamble.push('\n');
        }
    }
    let header = parse_fields(&preamble, &["Patient", "Diagnosis"]);
    let mut items = Vec::new();
    let mut sources = Vec::new();
    let mut note = None;
    let mut saw_sources = false;
    for (heading, body) in &blocks {
        if heading.starts_with("Medication ") {
            let f = parse_fields(body, &LABELS);
            let get = |k: &str| f.get(k).cloned().unwrap_or_default();
            let split = |k: &str| -> Vec<String> {
                get(k).split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
            };
            let item = MedicationRecommendation {
                brand_name: get("Brand Name"),
                generic_name: get("Generic Name"),
                dosage: get("Dosage"),
                frequency: get("Frequency"),
                duration: get("Duration"),
                cautions: split("Cautions"),
                side_effects: split("Side Effects"),
                patient_considerations: get("Patient Considerations"),
                source: get("Source"),
            };
            let problems = item.problems();
            if !problems.is_empty() {
                return Err(format!("{heading}: missing {}", problems.join(", ")));
            }
            items.push(item);
        } else if heading == "Note" {
            note = Some(body.trim().to_string());
        } else if heading == "Sources" {
            saw_sources = true;
            sources = body
                .lines()
                .filter_map(|l| l.trim().strip_prefix("- "))
                .map(|s| s.trim().to_string())
                .collect();
        } else {
            return Err(format!("unknown heading {heading:?}"));
        }
    }
    if !saw_sources {
        return Err("missing Sources block".into());
    }
    Ok(MedicationPlan {
        patient_id: header.get("Patient").cloned().unwrap_or_default(),
        diagnosis: header.get("Diagnosis").cloned().unwrap_or_default(),
        items,
        sources,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::FnBackend;
    use crate::grounding::Source;
    use chrono::Utc;

    pub(crate) const PNEUMONIA_REPLY: &str = "### Medication 1
Brand Name: Biaxin
Generic Name: clarithromycin
Dosage: 500 mg
Frequency: every 12 hours
Duration: 7 days
Cautions: QT prolongation; CYP3A4 interactions
Side Effects: diarrhea; nausea; abnormal taste
Patient Considerations: take with food
Source: DailyMed clarithromycin label

### Medication 2
Brand Name: Amoxil
Generic Name: amoxicillin
Dosage: 1 g
Frequency: three times daily
Duration: 5 days
Cautions: penicillin allergy
Side Effects: rash; diarrhea
Patient Considerations: complete the course
Source: Wikipedia

### Medication 3
Brand Name: Tylenol
Generic Name: acetaminophen
Dosage: 650 mg
Frequency: every 6 hours as needed
Duration: up to 5 days
Cautions: liver disease
Side Effects: rare hepatotoxicity
Patient Considerations: do not exceed 3 g per day
Source: general knowledge
";

    fn pneumonia() -> DiagnosisAssessment {
        DiagnosisAssessment::new("Community-acquired pneumonia", 8, "consolidation on CT").unwrap()
    }

    fn grounding() -> Vec<GroundingDoc> {
        let doc = |source, title: &str, excerpt: &str| GroundingDoc {
            source,
            query: "pneumonia".into(),
            title: title.into(),
            excerpt: excerpt.into(),
            url_or_id: format!("fixture:{title}"),
            fetched_at: Utc::now(),
        };
        vec![
            doc(Source::DailyMed, "CLARITHROMYCIN tablet", "macrolide antibacterial"),
            doc(Source::Wikipedia, "Pneumonia", "often treated with amoxicillin"),
        ]
    }

    #[test]
    fn pneumonia_three_items() {
        let b = FnBackend::new("s", |_| Ok(PNEUMONIA_REPLY.to_string()));
        let g = grounding();
        let set = generate_medications("p1", &pneumonia(), &g, &b, 3).unwrap();
        assert_eq!(set.items.len(), 3);
        assert!(set.warnings.is_empty());
        let first = &set.items[0];
        assert_eq!(first.generic_name, "clarithromycin");
        assert_eq!(first.dosage, "500 mg");
        assert_eq!(first.cautions, vec!["QT prolongation", "CYP3A4 interactions"]);
        assert_eq!(first.side_effects.len(), 3);
        assert_eq!(first.source, g[0].provenance_line());
        assert_eq!(set.items[1].source, g[1].provenance_line());
        assert_eq!(set.items[2].source, UNVERIFIED_SOURCE);
    }

    #[test]
    fn partial_parse_keeps_valid_items() {
        let broken = PNEUMONIA_REPLY.replace("Dosage: 1 g\n", "Dosage: as needed\n");
        let b = FnBackend::new("s", move |_| Ok(broken.clone()));
        let set = generate_medications("p1", &pneumonia(), &grounding(), &b, 3).unwrap();
        assert_eq!(set.items.len(), 2);
        assert_eq!(set.warnings.len(), 1);
        assert!(set.warnings[0].starts_with("item 2"));
    }

    #[test]
    fn nothing_parseable_twice() {
        let b = FnBackend::new("s", |_| Ok("Rest and fluids.".into()));
        assert!(matches!(
            generate_medications("p1", &pneumonia(), &[], &b, 3),
            Err(DocsError::GenerationMalformed(_))
        ));
    }

    #[test]
    fn truncates_to_n() {
        let b = FnBackend::new("s", |_| Ok(PNEUMONIA_REPLY.to_string()));
        let set = generate_medications("p1", &pneumonia(), &[], &b, 2).unwrap();
        assert_eq!(set.items.len(), 2);
        assert!(set.items.iter().all(|m| m.source == UNVERIFIED_SOURCE));
    }

    #[test]
    fn plan_round_trip() {
        let b = FnBackend::new("s", |_| Ok(PNEUMONIA_REPLY.to_string()));
        let g = grounding();
        let set = generate_medications("p1", &pneumonia(), &g, &b, 3).unwrap();
        let plan = render_medication_plan("p1", &pneumonia(), &set.items, &g, None);
        assert_eq!(parse_medication_plan(&plan.render()).unwrap(), plan);
        let empty = render_medication_plan("p1", &pneumonia(), &[], &[], Some("generation failed"));
        assert_eq!(parse_medication_plan(&empty.render()).unwrap(), empty);
    }

    #[test]
    fn unheaded_single_item() {
        let text = "Generic Name: ibuprofen\nDosage: 400 mg\nFrequency: tid\nDuration: 3 days";
        let set = parse_set(text, 3, &[]);
        assert_eq!(set.items.len(), 1);
    }
}
