use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::Utc;

use super::*;
use crate::docs::{
    generate_medications, generate_referral, generate_report, render_medication_plan, update_report,
    validate_report, InputDoc, MedicationRecommendation, MedicationSet, ReferralOutcome, StructuredReport,
    UpdateExplanation,
};
use crate::gateway::ChatBackend;
use crate::grounding::{extract_key_terms, GroundingDoc, GroundingError, Grounder, Source};
use crate::store::{DocKind, DocumentRef, Location, RecordStore};

pub const EPISODE_FILE: &str = "episode.json";

/// Medications proposed for review before discharge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationDraft {
    pub medications: Vec<MedicationRecommendation>,
    pub grounding: Vec<GroundingDoc>,
    pub warnings: Vec<String>,
}

pub fn draft_file_name(episode_id: &str) -> String {
    format!("medication_draft_{episode_id}.json")
}

/// Which stored documents feed the initial report.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ReportInputs {
    /// Every clinical document in the folder.
    #[default]
    All,
    Files(Vec<String>),
}

pub struct Workflow {
    store: Arc<RecordStore>,
    chat: Arc<dyn ChatBackend>,
    grounder: Arc<Grounder>,
    policy: WorkflowPolicy,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Workflow {
    pub fn new(
        store: Arc<RecordStore>,
        chat: Arc<dyn ChatBackend>,
        grounder: Arc<Grounder>,
        policy: WorkflowPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            store,
            chat,
            grounder,
            policy,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &Arc<RecordStore> {
        &self.store
    }

    pub fn chat(&self) -> &Arc<dyn ChatBackend> {
        &self.chat
    }

    pub fn grounder(&self) -> &Arc<Grounder> {
        &self.grounder
    }

    pub fn policy(&self) -> &WorkflowPolicy {
        &self.policy
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    pub fn load(&self, patient_id: &str) -> Result<CaseState> {
        if self.store.locate(patient_id).is_none() {
            return Err(WorkflowError::UnknownPatient(patient_id.to_string()));
        }
        match self.store.read_aux(patient_id, EPISODE_FILE)? {
            Some(bytes) => Ok(serde_json::from_slice(&bytes)?),
            None => Err(WorkflowError::NoEpisode(patient_id.to_string())),
        }
    }

    fn save(&self, state: &CaseState) -> Result<()> {
        let json = serde_json::to_vec_pretty(state)?;
        self.store.write_aux(&state.patient_id, EPISODE_FILE, &json)?;
        Ok(())
    }

    /// Loads the episode, applies `f` and persists the result. Nothing is
    /// written if `f` fails.
    fn transition<T>(
        &self,
        patient_id: &str,
        op: &'static str,
        f: impl FnOnce(&mut CaseState) -> Result<(T, String)>,
    ) -> Result<(CaseState, T)> {
        let lock = self.lock(patient_id);
        let _guard = lock.lock().unwrap();
        let mut state = self.load(patient_id)?;
        let (out, detail) = f(&mut state)?;
        state.updated_at = Utc::now();
        state.events.push(EpisodeEvent {
            at: state.updated_at,
            op: op.to_string(),
            stage: state.stage.to_string(),
            detail,
        });
        debug_assert!(state.violations().is_empty(), "{:?}", state.violations());
        self.save(&state)?;
        tracing::debug!(patient_id, op, stage = %state.stage, "transition");
        Ok((state, out))
    }

    /// Opens a new episode. A patient unknown to the store is created when
    /// `demographics` is given. The previous episode, if discharged, is
    /// archived as `episode_<id>.json`.
    pub fn start_episode(&self, patient_id: &str, demographics: Option<&str>) -> Result<CaseState> {
        let lock = self.lock(patient_id);
        let _guard = lock.lock().unwrap();
        if self.store.locate(patient_id).is_none() {
            match demographics {
                Some(d) => {
                    self.store.create_patient(patient_id, d)?;
                }
                None => return Err(WorkflowError::UnknownPatient(patient_id.to_string())),
            }
        }
        let mut number = 1;
        if let Some(bytes) = self.store.read_aux(patient_id, EPISODE_FILE)? {
            let prior: CaseState = serde_json::from_slice(&bytes)?;
            if prior.stage != Stage::Discharged {
                return Err(WorkflowError::ActiveEpisode(patient_id.to_string()));
            }
            self.store
                .write_aux(patient_id, &format!("episode_{}.json", prior.episode_id), &bytes)?;
            number = episode_number(&prior.episode_id) + 1;
        }
        let mut state = CaseState::new(patient_id, format!("ep{number:03}"), &self.policy);
        state.events.push(EpisodeEvent {
            at: state.started_at,
            op: "start_episode".into(),
            stage: state.stage.to_string(),
            detail: String::new(),
        });
        self.save(&state)?;
        Ok(state)
    }

    /// Appends one dialogue turn during inquiry.
    pub fn add_inquiry_turn(&self, patient_id: &str, speaker: &str, text: &str) -> Result<CaseState> {
        let (state, ()) = self.transition(patient_id, "inquiry_turn", |s| {
            expect_stage(s, "inquiry_turn", |st| matches!(st, Stage::Inquiry))?;
            if text.trim().is_empty() {
                return Err(WorkflowError::EmptyTranscript);
            }
            s.inquiry_turns.push(InquiryTurn {
                speaker: speaker.trim().to_string(),
                text: text.trim().to_string(),
            });
            Ok(((), speaker.to_string()))
        })?;
        Ok(state)
    }

    /// Stores the transcript and moves to triage. An empty `transcript`
    /// falls back to the accumulated inquiry turns.
    pub fn record_inquiry(&self, patient_id: &str, transcript: &str) -> Result<(CaseState, DocumentRef)> {
        self.transition(patient_id, "record_inquiry", |s| {
            expect_stage(s, "record_inquiry", |st| matches!(st, Stage::Inquiry))?;
            let text = if transcript.trim().is_empty() {
                render_turns(&s.inquiry_turns)
            } else {
                transcript.trim().to_string()
            };
            if text.is_empty() {
                return Err(WorkflowError::EmptyTranscript);
            }
            let doc = self.store.store_document(&s.patient_id, DocKind::Transcript, &format!("{text}\n"))?;
            s.stage = Stage::Triage;
            let detail = doc.filename.clone();
            Ok((doc, detail))
        })
    }

    /// Drafts report revision 1: key terms from the transcript, grounding
    /// for each term, then generation over the selected documents.
    pub fn write_initial_report(&self, patient_id: &str, inputs: ReportInputs) -> Result<(CaseState, StructuredReport)> {
        self.transition(patient_id, "write_initial_report", |s| {
            expect_stage(s, "write_initial_report", |st| {
                matches!(st, Stage::Triage | Stage::UnderSpecialty { .. })
            })?;
            if s.report_revisions > 0 {
                return Err(WorkflowError::WrongStage {
                    op: "write_initial_report",
                    stage: format!("{} (report exists)", s.stage),
                });
            }
            let docs = self.report_inputs(&s.patient_id, &inputs)?;
            if docs.is_empty() {
                return Err(DocsError::EmptyInputs.into());
            }
            let transcript = match self.store.latest_document(&s.patient_id, DocKind::Transcript)? {
                Some((_, t)) => t,
                None => docs.iter().map(|d| d.content.as_str()).collect::<Vec<_>>().join("\n"),
            };
            let terms = extract_key_terms(&transcript, self.chat.as_ref(), self.policy.max_key_terms)?;
            let mut grounding = Vec::new();
            for term in &terms.terms {
                grounding.extend(self.ground(term, &[Source::Wikipedia, Source::PubMed])?);
            }
            let report = generate_report(&s.patient_id, &docs, &grounding, self.chat.as_ref())?;
            let rendered = report.render();
            validate_report(&rendered).map_err(|v| WorkflowError::CorruptReport(format!("{v:?}")))?;
            let doc = self.store.store_document(&s.patient_id, DocKind::Report, &rendered)?;
            s.key_terms = terms.terms;
            s.report_revisions = 1;
            s.latest_assessment = Some(report.assessment.clone());
            s.stage = Stage::Reporting;
            Ok((report, doc.filename))
        })
    }

    /// Grounding for one term. Losing every source is logged, not fatal:
    /// the report is then drafted without reference material.
    fn ground(&self, term: &str, sources: &[Source]) -> Result<Vec<GroundingDoc>> {
        match self.grounder.fetch_grounding(term, sources) {
            Ok(docs) => Ok(docs),
            Err(GroundingError::AllSourcesFailed { errors, .. }) => {
                tracing::warn!(term, ?errors, "no grounding available");
                Ok(Vec::new())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn report_inputs(&self, patient_id: &str, inputs: &ReportInputs) -> Result<Vec<InputDoc>> {
        let refs: Vec<DocumentRef> = match inputs {
            ReportInputs::All => self
                .store
                .list_documents(patient_id)?
                .into_iter()
                .filter(|d| {
                    !matches!(
                        d.doc_kind,
                        DocKind::Report | DocKind::UpdateExplanation | DocKind::MedicationPlan
                    )
                })
                .collect(),
            ReportInputs::Files(names) => {
                let all = self.store.list_documents(patient_id)?;
                names
                    .iter()
                    .map(|n| {
                        all.iter().find(|d| &d.filename == n).cloned().ok_or_else(|| {
                            crate::store::StoreError::UnknownDocument {
                                patient_id: patient_id.to_string(),
                                filename: n.clone(),
                            }
                            .into()
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        refs.into_iter()
            .map(|r| {
                let content = self.store.read_document(patient_id, &r.filename)?;
                Ok(InputDoc::stored(r, content))
            })
            .collect()
    }

    /// Records an assessment and applies the gating rule. A final decision
    /// moves the episode to medication planning.
    pub fn apply_assessment(&self, patient_id: &str, a: DiagnosisAssessment) -> Result<(CaseState, Decision)> {
        a.check()?;
        self.transition(patient_id, "apply_assessment", |s| {
            expect_stage(s, "apply_assessment", |st| {
                matches!(st, Stage::Triage | Stage::UnderSpecialty { .. } | Stage::Reporting)
            })?;
            let policy = WorkflowPolicy {
                exam_budget: s.exam_budget,
                ..self.policy.clone()
            };
            let decision = decide(a.confidence, s.exams_used, &policy);
            let detail = format!("{decision:?} confidence {}", a.confidence);
            s.latest_assessment = Some(a.clone());
            if decision != Decision::RequestExam {
                s.final_assessment = Some(FinalAssessment { decision, assessment: a });
                s.stage = Stage::MedicationPlanning;
            }
            Ok((decision, detail))
        })
    }

    pub fn request_exam(&self, patient_id: &str, req: ExamRequest) -> Result<CaseState> {
        let (state, ()) = self.transition(patient_id, "request_exam", |s| {
            expect_stage(s, "request_exam", |st| {
                matches!(st, Stage::Reporting | Stage::UnderSpecialty { .. })
            })?;
            if s.report_revisions == 0 {
                return Err(WorkflowError::NoReport);
            }
            if s.exams_used >= s.exam_budget {
                return Err(WorkflowError::BudgetExhausted {
                    used: s.exams_used,
                    budget: s.exam_budget,
                });
            }
            if req.name.trim().is_empty() {
                return Err(WorkflowError::InvalidExam("name is empty".into()));
            }
            s.exams.push(ExamRecord {
                request: req.clone(),
                status: ExamStatus::Pending,
            });
            let detail = req.name.clone();
            s.stage = Stage::AwaitingExamResult { request: req };
            Ok(((), detail))
        })?;
        Ok(state)
    }

    /// Settles the outstanding exam request. Both arms consume budget; only
    /// a result produces a new report revision and its explanation.
    pub fn ingest_exam_outcome(
        &self,
        patient_id: &str,
        outcome: ExamOutcome,
    ) -> Result<(CaseState, Option<(StructuredReport, UpdateExplanation)>)> {
        self.transition(patient_id, "ingest_exam_outcome", |s| {
            let Some(request) = s.pending_exam().cloned() else {
                return Err(wrong_stage("ingest_exam_outcome", s));
            };
            let (status, update, detail) = match outcome {
                ExamOutcome::Unavailable { reason } => {
                    let detail = format!("{} unavailable: {reason}", request.name);
                    (ExamStatus::Unavailable { reason }, None, detail)
                }
                ExamOutcome::Result { name, content } => {
                    if content.trim().is_empty() {
                        return Err(WorkflowError::InvalidExam("result content is empty".into()));
                    }
                    let prior = self.latest_report(&s.patient_id)?;
                    let body = format!(
                        "# Exam Result\nPatient: {}\nRequested: {}\nProvided: {}\n\n{}\n",
                        s.patient_id,
                        request.name,
                        name,
                        content.trim()
                    );
                    let evidence = [InputDoc::text(format!("exam result: {name}"), body.clone())];
                    let (report, mut explanation) = update_report(&prior, &evidence, &[], self.chat.as_ref())?;
                    let rendered = report.render();
                    validate_report(&rendered).map_err(|v| WorkflowError::CorruptReport(format!("{v:?}")))?;
                    let exam_doc = self.store.store_document(&s.patient_id, DocKind::ExamResult, &body)?;
                    self.store.store_document(&s.patient_id, DocKind::Report, &rendered)?;
                    explanation.triggering_evidence = vec![exam_doc.clone()];
                    self.store
                        .store_document(&s.patient_id, DocKind::UpdateExplanation, &explanation.render())?;
                    s.report_revisions = report.revision;
                    s.results_ingested += 1;
                    s.latest_assessment = Some(report.assessment.clone());
                    let detail = format!("{} -> {} revision {}", request.name, exam_doc.filename, report.revision);
                    (
                        ExamStatus::Resulted {
                            provided: name,
                            document: exam_doc.filename,
                        },
                        Some((report, explanation)),
                        detail,
                    )
                }
            };
            let record = s.exams.last_mut().expect("pending exam has a record");
            record.status = status;
            s.exams_used += 1;
            s.stage = Stage::Reporting;
            Ok((update, detail))
        })
    }

    pub fn latest_report(&self, patient_id: &str) -> Result<StructuredReport> {
        let (doc, text) = self
            .store
            .latest_document(patient_id, DocKind::Report)?
            .ok_or(WorkflowError::NoReport)?;
        validate_report(&text).map_err(|v| WorkflowError::CorruptReport(format!("{}: {v:?}", doc.filename)))
    }

    /// Asks the model whether the patient should move. Does not change the
    /// episode.
    pub fn suggest_referral(&self, patient_id: &str) -> Result<ReferralOutcome> {
        let state = self.load(patient_id)?;
        let summary = match self.latest_report(patient_id) {
            Ok(r) => r.render(),
            Err(WorkflowError::NoReport) => self
                .store
                .latest_document(patient_id, DocKind::Transcript)?
                .map(|(_, t)| t)
                .unwrap_or_default(),
            Err(e) => return Err(e),
        };
        let layout = self.store.layout();
        Ok(generate_referral(
            patient_id,
            &summary,
            state.current_specialty(),
            self.chat.as_ref(),
            &layout,
        )?)
    }

    fn check_referral(&self, s: &CaseState, r: &ReferralReport) -> Result<String> {
        if r.patient_id != s.patient_id {
            return Err(WorkflowError::InvalidReferral(format!("report is for {:?}", r.patient_id)));
        }
        if !r.current_specialty.eq_ignore_ascii_case(s.current_specialty()) {
            return Err(WorkflowError::InvalidReferral(format!(
                "current specialty is {}, not {}",
                s.current_specialty(),
                r.current_specialty
            )));
        }
        let layout = self.store.layout();
        let target = layout
            .resolve_specialty(&r.recommended_specialty)
            .ok_or_else(|| DocsError::UnknownSpecialty(r.recommended_specialty.clone()))?
            .to_string();
        if target.eq_ignore_ascii_case(s.current_specialty()) {
            return Err(WorkflowError::InvalidReferral("referral to the current specialty".into()));
        }
        if r.points_for_attention.iter().all(|p| p.trim().is_empty()) {
            return Err(WorkflowError::InvalidReferral("no points for attention".into()));
        }
        Ok(target)
    }

    fn do_referral(&self, s: &mut CaseState, r: &ReferralReport) -> Result<String> {
        let target = self.check_referral(s, r)?;
        let doc = self.store.store_document(&s.patient_id, DocKind::ReferralReport, &r.render())?;
        self.store.move_to_specialty(&s.patient_id, &target)?;
        s.specialty = Some(target.clone());
        s.referrals.push(doc.filename.clone());
        s.stage = Stage::UnderSpecialty { specialty: target.clone() };
        Ok(format!("{} -> {target} ({})", r.current_specialty, doc.filename))
    }

    /// Stores the referral report and moves the folder.
    pub fn apply_referral(&self, patient_id: &str, r: &ReferralReport) -> Result<CaseState> {
        let (state, ()) = self.transition(patient_id, "apply_referral", |s| {
            expect_stage(s, "apply_referral", referral_allowed)?;
            Ok(((), self.do_referral(s, r)?))
        })?;
        Ok(state)
    }

    /// Holds a referral for clinician approval.
    pub fn propose_referral(&self, patient_id: &str, r: ReferralReport) -> Result<CaseState> {
        let (state, ()) = self.transition(patient_id, "propose_referral", |s| {
            expect_stage(s, "propose_referral", referral_allowed)?;
            self.check_referral(s, &r)?;
            let detail = r.recommended_specialty.clone();
            s.resume_stage = Some(Box::new(std::mem::replace(&mut s.stage, Stage::ReferralPending)));
            s.pending_referral = Some(r);
            Ok(((), detail))
        })?;
        Ok(state)
    }

    pub fn approve_referral(&self, patient_id: &str, approved_by: &str) -> Result<CaseState> {
        self.approve_referral_to(patient_id, approved_by, None)
    }

    /// Approves the pending referral, optionally redirecting it to another
    /// specialty chosen by the approver.
    pub fn approve_referral_to(&self, patient_id: &str, approved_by: &str, target: Option<&str>) -> Result<CaseState> {
        if approved_by.trim().is_empty() {
            return Err(WorkflowError::ApprovalRequired);
        }
        let (state, ()) = self.transition(patient_id, "approve_referral", |s| {
            expect_stage(s, "approve_referral", |st| matches!(st, Stage::ReferralPending))?;
            let original = s.pending_referral.take().expect("pending stage has a referral");
            let mut r = original.clone();
            if let Some(t) = target.map(str::trim).filter(|t| !t.eq_ignore_ascii_case(&original.recommended_specialty)) {
                r.rationale = format!(
                    "{}\nOverridden by {}: {} -> {t}.",
                    r.rationale.trim_end(),
                    approved_by.trim(),
                    original.recommended_specialty
                );
                r.recommended_specialty = t.to_string();
            }
            let detail = self.do_referral(s, &r).inspect_err(|_| {
                s.pending_referral = Some(original.clone());
            })?;
            s.resume_stage = None;
            s.approvals.push(format!("referral: {}", approved_by.trim()));
            Ok(((), format!("{detail} approved by {}", approved_by.trim())))
        })?;
        Ok(state)
    }

    pub fn reject_referral(&self, patient_id: &str, by: &str) -> Result<CaseState> {
        let (state, ()) = self.transition(patient_id, "reject_referral", |s| {
            expect_stage(s, "reject_referral", |st| matches!(st, Stage::ReferralPending))?;
            s.pending_referral = None;
            s.stage = *s.resume_stage.take().expect("pending stage has a resume stage");
            Ok(((), format!("rejected by {}", by.trim())))
        })?;
        Ok(state)
    }

    /// Drug grounding for the final diagnosis and generated recommendations.
    /// Does not change the episode.
    pub fn plan_medications(&self, patient_id: &str) -> Result<(MedicationSet, Vec<GroundingDoc>)> {
        let state = self.load(patient_id)?;
        let final_assessment = state.final_assessment.ok_or(WorkflowError::NoFinalAssessment)?;
        let a = final_assessment.assessment;
        let grounding = match self.grounder.fetch_drug_grounding(&a.diagnosis) {
            Ok(g) => g,
            Err(GroundingError::AllSourcesFailed { errors, .. }) => {
                tracing::warn!(?errors, "no drug grounding available");
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };
        let set = generate_medications(
            patient_id,
            &a,
            &grounding,
            self.chat.as_ref(),
            self.policy.medication_count,
        )?;
        Ok((set, grounding))
    }

    /// Stores the medication plan, returns the folder to the central
    /// database and closes the episode.
    pub fn finalize(
        &self,
        patient_id: &str,
        meds: &[MedicationRecommendation],
        grounding: &[GroundingDoc],
        note: Option<&str>,
    ) -> Result<(CaseState, DocumentRef)> {
        self.transition(patient_id, "finalize", |s| {
            let Some(fa) = s.final_assessment.clone() else {
                return Err(WorkflowError::NoFinalAssessment);
            };
            expect_stage(s, "finalize", |st| matches!(st, Stage::MedicationPlanning))?;
            if s.report_revisions == 0 {
                return Err(WorkflowError::NoReport);
            }
            let plan = render_medication_plan(&s.patient_id, &fa.assessment, meds, grounding, note);
            let doc = self.store.store_document(&s.patient_id, DocKind::MedicationPlan, &plan.render())?;
            if self.store.locate(&s.patient_id) != Some(Location::CentralDatabase) {
                self.store.discharge_to_central(&s.patient_id)?;
            }
            s.medication_count = Some(meds.len());
            s.stage = Stage::Discharged;
            let detail = format!(
                "{} ({:?}, confidence {})",
                doc.filename, fa.decision, fa.assessment.confidence
            );
            Ok((doc, detail))
        })
    }

    /// Plans medications and keeps them as the episode's draft for review.
    pub fn draft_medications(&self, patient_id: &str) -> Result<MedicationDraft> {
        let state = self.load(patient_id)?;
        let (set, grounding) = self.plan_medications(patient_id)?;
        let draft = MedicationDraft {
            medications: set.items,
            grounding,
            warnings: set.warnings,
        };
        let name = draft_file_name(&state.episode_id);
        self.store.write_aux(patient_id, &name, &serde_json::to_vec_pretty(&draft)?)?;
        Ok(draft)
    }

    pub fn medication_draft(&self, patient_id: &str) -> Result<Option<MedicationDraft>> {
        let state = self.load(patient_id)?;
        match self.store.read_aux(patient_id, &draft_file_name(&state.episode_id))? {
            Some(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            None => Ok(None),
        }
    }

    /// Finalizes with the reviewed draft, planning one first if none exists.
    pub fn discharge(&self, patient_id: &str, note: Option<&str>) -> Result<(CaseState, DocumentRef)> {
        let draft = match self.medication_draft(patient_id)? {
            Some(d) => d,
            None => self.draft_medications(patient_id)?,
        };
        self.finalize(patient_id, &draft.medications, &draft.grounding, note)
    }

    pub fn record_approval(&self, patient_id: &str, what: &str, by: &str) -> Result<CaseState> {
        if by.trim().is_empty() {
            return Err(WorkflowError::ApprovalRequired);
        }
        let (state, ()) = self.transition(patient_id, "approve", |s| {
            s.approvals.push(format!("{what}: {}", by.trim()));
            Ok(((), format!("{what} approved by {}", by.trim())))
        })?;
        Ok(state)
    }

    /// Remembers a ReAct trace file written for this episode.
    pub fn record_trace(&self, patient_id: &str, name: &str) -> Result<CaseState> {
        let (state, ()) = self.transition(patient_id, "trace", |s| {
            if !s.traces.iter().any(|t| t == name) {
                s.traces.push(name.to_string());
            }
            Ok(((), name.to_string()))
        })?;
        Ok(state)
    }
}

fn referral_allowed(st: &Stage) -> bool {
    matches!(st, Stage::Triage | Stage::UnderSpecialty { .. } | Stage::Reporting)
}

fn wrong_stage(op: &'static str, s: &CaseState) -> WorkflowError {
    WorkflowError::WrongStage {
        op,
        stage: s.stage.to_string(),
    }
}

fn expect_stage(s: &CaseState, op: &'static str, ok: impl Fn(&Stage) -> bool) -> Result<()> {
    if ok(&s.stage) {
        Ok(())
    } else {
        Err(wrong_stage(op, s))
    }
}

fn render_turns(turns: &[InquiryTurn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn episode_number(id: &str) -> u32 {
    id.trim_start_matches("ep").parse().unwrap_or(0)
}
