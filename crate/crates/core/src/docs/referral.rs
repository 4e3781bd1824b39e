use serde::{Deserialize, Serialize};

use super::fields::{bullets, parse_fields};
use super::{strip_fence, DocsError};
use crate::gateway::{ChatBackend, ChatMessage, ChatParams};
use crate::store::{StoreLayout, PRIMARY_CARE};

const TITLE: &str = "# Referral Report";
const LABELS: [&str; 4] = ["Recommended Specialty", "Rationale", "Clinical Summary", "Points for Attention"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferralReport {
    pub patient_id: String,
    pub current_specialty: String,
    pub recommended_specialty: String,
    pub rationale: String,
    pub clinical_summary: String,
    pub points_for_attention: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferralOutcome {
    Referral(ReferralReport),
    NoReferralNeeded { specialty: String, rationale: String },
}

impl ReferralReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{TITLE}\nPatient: {}\nCurrent Specialty: {}\nRecommended Specialty: {}\n\n\
             ## Rationale\n{}\n\n## Clinical Summary\n{}\n\n## Points for Attention\n",
            self.patient_id, self.current_specialty, self.recommended_specialty, self.rationale, self.clinical_summary
        );
        for p in &self.points_for_attention {
            out.push_str(&format!("- {p}\n"));
        }
        out
    }
}

/// Reads back a persisted referral report.
pub fn parse_referral(text: &str) -> Result<ReferralReport, String> {
    if text.lines().map(str::trim).find(|l| !l.is_empty()) != Some(TITLE) {
        return Err("missing referral title".into());
    }
    let f = parse_fields(
        text,
        &["Patient", "Current Specialty", "Recommended Specialty", "Rationale", "Clinical Summary", "Points for Attention"],
    );
    let get = |k: &str| f.get(k).cloned().filter(|v| !v.is_empty()).ok_or_else(|| format!("missing {k}"));
    let points = bullets(&get("Points for Attention")?);
    if points.is_empty() {
        return Err("empty Points for Attention".into());
    }
    Ok(ReferralReport {
        patient_id: get("Patient")?,
        current_specialty: get("Current Specialty")?,
        recommended_specialty: get("Recommended Specialty")?,
        rationale: get("Rationale")?,
        clinical_summary: get("Clinical Summary")?,
        points_for_attention: points,
    })
}

struct Proposal {
    specialty: String,
    rationale: String,
    summary: String,
    points: Vec<String>,
}

fn parse_proposal(text: &str) -> Result<Proposal, String> {
    let f = parse_fields(strip_fence(text), &LABELS);
    let get = |k: &str| f.get(k).cloned().unwrap_or_default();
    let specialty = get("Recommended Specialty")
        .lines()
        .next()
        .unwrap_or_default()
        .trim_matches(['*', '.', '"', ' '])
        .to_string();
    let mut missing = Vec::new();
    if specialty.is_empty() {
        missing.push("Recommended Specialty");
    }
    if get("Rationale").is_empty() {
        missing.push("Rationale");
    }
    if get("Clinical Summary").is_empty() {
        missing.push("Clinical Summary");
    }
    let points = bullets(&get("Points for Attention"));
    if points.is_empty() {
        missing.push("Points for Attention (at least one bullet)");
    }
    if !missing.is_empty() {
        return Err(format!("missing {}", missing.join(", ")));
    }
    Ok(Proposal {
        specialty,
        rationale: get("Rationale"),
        summary: get("Clinical Summary"),
        points,
    })
}

fn system_prompt(allowed: &[String]) -> String {
    format!(
        "Task: referral\n\
         You decide which specialty should manage the patient next and write a structured \
         referral report. Reply with these labelled fields:\n\
         Recommended Specialty: <one of: {}>\n\
         Rationale: <why this specialty>\n\
         Clinical Summary: <brief summary of the patient's clinical status>\n\
         Points for Attention:\n- <critical issue for the receiving specialist>\n\
         If the current specialty should keep the patient, name the current specialty.",
        allowed.join(", ")
    )
}

/// Asks for a referral decision. A proposal outside the layout gets one
/// re-prompt listing the allowed names; a malformed reply gets one repair.
pub fn generate_referral(
    patient_id: &str,
    case_summary: &str,
    current: &str,
    chat: &dyn ChatBackend,
    layout: &StoreLayout,
) -> Result<ReferralOutcome, DocsError> {
    let current = if current.eq_ignore_ascii_case(PRIMARY_CARE) {
        PRIMARY_CARE.to_string()
    } else {
        layout
            .resolve_specialty(current)
            .map(str::to_string)
            .ok_or_else(|| DocsError::UnknownSpecialty(current.to_string()))?
    };
    let params = ChatParams::default();
    let mut messages = vec![
        ChatMessage::system(system_prompt(&layout.specialties)),
        ChatMessage::user(format!(
            "Task: referral\nPatient: {patient_id}\nCurrent Specialty: {current}\n\n{case_summary}"
        )),
    ];
    let mut repaired = false;
    let mut reprompted = false;
    loop {
        let reply = chat.chat(&messages, &params)?;
        let proposal = match parse_proposal(&reply.text) {
            Ok(p) => p,
            Err(problem) if !repaired => {
                repaired = true;
                messages.push(ChatMessage::assistant(reply.text));
                messages.push(ChatMessage::user(format!(
                    "Task: referral-repair\nPatient: {patient_id}\nYour reply could not be accepted: {problem}\n\
                     Reply again with all four labelled fields."
                )));
                continue;
            }
            Err(problem) => return Err(DocsError::GenerationMalformed(problem)),
        };
        let resolved = if proposal.specialty.eq_ignore_ascii_case(PRIMARY_CARE) {
            Some(PRIMARY_CARE.to_string())
        } else {
            layout.resolve_specialty(&proposal.specialty).map(str::to_string)
        };
        let Some(recommended) = resolved else {
            if reprompted {
                return Err(DocsError::UnknownSpecialtyProposed(proposal.specialty));
            }
            reprompted = true;
            messages.push(ChatMessage::assistant(reply.text));
            messages.push(ChatMessage::user(format!(
                "Task: referral-repair\nPatient: {patient_id}\n\"{}\" is not a specialty in this hospital. \
                 Choose exactly one of: {}",
                proposal.specialty,
                layout.specialties.join(", ")
            )));
            continue;
        };
        if recommended == current {
            return Ok(ReferralOutcome::NoReferralNeeded {
                specialty: current,
                rationale: proposal.rationale,
            });
        }
        return Ok(ReferralOutcome::Referral(ReferralReport {
            patient_id: patient_id.to_string(),
            current_specialty: current,
            recommended_specialty: recommended,
            rationale: proposal.rationale,
            clinical_summary: proposal.summary,
            points_for_attention: proposal.points,
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::FnBackend;

    fn reply(specialty: &str) -> String {
        format!(
            "Recommended Specialty: {specialty}\nRationale: persistent hypoxia\n\
             Clinical Summary: 60M with cough and fever.\nPoints for Attention:\n- penicillin allergy\n- on warfarin\n"
        )
    }

    fn layout() -> StoreLayout {
        StoreLayout::default()
    }

    #[test]
    fn cardiology_to_pulmonology() {
        let b = FnBackend::new("s", |_| Ok(reply("pulmonology")));
        let out = generate_referral("p1", "summary", "Cardiology", &b, &layout()).unwrap();
        let ReferralOutcome::Referral(r) = out else { panic!("expected referral") };
        assert_eq!(r.current_specialty, "Cardiology");
        assert_eq!(r.recommended_specialty, "Pulmonology");
        assert_eq!(r.points_for_attention, vec!["penicillin allergy", "on warfarin"]);
        assert_eq!(parse_referral(&r.render()).unwrap(), r);
    }

    #[test]
    fn same_specialty_needs_no_referral() {
        let b = FnBackend::new("s", |_| Ok(reply("Cardiology")));
        let out = generate_referral("p1", "summary", "cardiology", &b, &layout()).unwrap();
        assert!(matches!(out, ReferralOutcome::NoReferralNeeded { ref specialty, .. } if specialty == "Cardiology"));
    }

    #[test]
    fn unknown_specialty_twice() {
        let b = FnBackend::new("s", |_| Ok(reply("Wizardry")));
        let err = generate_referral("p1", "summary", "Cardiology", &b, &layout()).unwrap_err();
        assert!(matches!(err, DocsError::UnknownSpecialtyProposed(ref s) if s == "Wizardry"));
    }

    #[test]
    fn reprompt_lists_allowed_names() {
        let b = FnBackend::new("s", |msgs: &[ChatMessage]| {
            let last = crate::gateway::last_user_message(msgs).unwrap();
            Ok(if last.contains("Choose exactly one of") && last.contains("Neurology") {
                reply("Neurology")
            } else {
                reply("Brain Stuff")
            })
        });
        let out = generate_referral("p1", "summary", PRIMARY_CARE, &b, &layout()).unwrap();
        assert!(matches!(out, ReferralOutcome::Referral(ref r) if r.recommended_specialty == "Neurology"));
    }

    #[test]
    fn missing_points_is_malformed() {
        let b = FnBackend::new("s", |_| Ok("Recommended Specialty: Neurology\nRationale: x\nClinical Summary: y\n".into()));
        let err = generate_referral("p1", "s", "Cardiology", &b, &layout()).unwrap_err();
        assert!(matches!(err, DocsError::GenerationMalformed(ref m) if m.contains("Points for Attention")));
    }

    #[test]
    fn current_must_be_known() {
        let b = FnBackend::new("s", |_| Ok(reply("Neurology")));
        assert!(matches!(
            generate_referral("p1", "s", "Alchemy", &b, &layout()),
            Err(DocsError::UnknownSpecialty(_))
        ));
    }
}
