//! One benchmark case driven end to end through the workflow.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{match_exam, score_diagnosis, simulate_patient_turn, BenchError, CaseSpec, ExamCategory};
use crate::docs::{DiagnosisAssessment, ReferralOutcome, Section};
use crate::gateway::{ChatBackend, ChatMessage, ChatParams, EmbedBackend};
use crate::grounding::Grounder;
use crate::react::{run_episode, write_trace, ArgType, Limits, ParamSpec, ToolRegistry, ToolSpec};
use crate::store::{init_store, DocKind, RecordStore, StoreLayout};
use crate::viewer::open_document;
use crate::workflow::{Decision, ExamOutcome, ExamRequest, ReportInputs, Workflow, WorkflowError, WorkflowPolicy};

pub const DEFAULT_INQUIRY_TURNS: usize = 3;

/// Confidence assumed when a final answer gives none.
const DEFAULT_CONFIDENCE: u8 = 5;

const DOCTOR_SYSTEM: &str = "You are a physician taking a history. Ask the patient one short question \
at a time. Reply with the question only.";

pub struct CaseContext {
    pub store_root: PathBuf,
    pub clinician: Arc<dyn ChatBackend>,
    pub patient: Arc<dyn ChatBackend>,
    pub embed: Arc<dyn EmbedBackend>,
    pub grounder: Arc<Grounder>,
    pub policy: WorkflowPolicy,
    pub match_threshold: f64,
    pub limits: Limits,
    pub inquiry_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamLog {
    pub requested: String,
    pub matched: Option<String>,
    pub category: Option<ExamCategory>,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub specialty: String,
    pub truth_diagnosis: String,
    pub predicted_diagnosis: String,
    pub score: f64,
    pub confidence: u8,
    pub decision: Decision,
    pub exams_requested: usize,
    pub exams_ordered: usize,
    pub exams: Vec<ExamLog>,
    pub report_count: u32,
    pub medication_count: usize,
    pub referrals: Vec<String>,
    pub first_referral_correct: Option<bool>,
    pub final_referral_correct: Option<bool>,
    pub referral_failures: Vec<String>,
    pub medication_failure: Option<String>,
    pub warnings: Vec<String>,
}

/// Splits a final answer into diagnosis and confidence. Accepts
/// `Diagnosis: x; Confidence: 8` and `x, confidence 8`.
pub fn parse_final_assessment(text: &str) -> (String, Option<u8>) {
    static CONF: OnceLock<Regex> = OnceLock::new();
    static DIAG: OnceLock<Regex> = OnceLock::new();
    let conf_re = CONF.get_or_init(|| Regex::new(r"(?i)confidence\s*(?:score)?\s*[:=]?\s*(\d+)").unwrap());
    let diag_re = DIAG.get_or_init(|| Regex::new(r"(?i)diagnosis\s*:\s*([^;\n]+)").unwrap());
    let conf_match = conf_re.captures(text);
    let confidence = conf_match
        .as_ref()
        .and_then(|c| c[1].parse::<u8>().ok())
        .filter(|c| (1..=10).contains(c));
    let diagnosis = match diag_re.captures(text) {
        Some(c) => c[1].to_string(),
        None => {
            let end = conf_match.map(|c| c.get(0).unwrap().start()).unwrap_or(text.len());
            text[..end].to_string()
        }
    };
    let diagnosis = diagnosis
        .split(|c| c == '\n')
        .next()
        .unwrap_or_default()
        .trim()
        .trim_end_matches([',', ';', '.', ' '])
        .trim()
        .to_string();
    (diagnosis, confidence)
}

fn patient_id(case_id: &str) -> String {
    let id: String = case_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '_' | '-') { c } else { '_' })
        .collect();
    if id.is_empty() {
        "case".into()
    } else {
        id
    }
}

fn latest_report(store: &RecordStore, pid: &str) -> Result<String, String> {
    store
        .latest_document(pid, DocKind::Report)
        .map_err(|e| e.to_string())?
        .map(|(_, text)| text)
        .ok_or_else(|| "no report yet".to_string())
}

fn assess_tools(store: Arc<RecordStore>, pid: &str) -> ToolRegistry {
    let mut r = ToolRegistry::new();
    let (s, p) = (store.clone(), pid.to_string());
    r.register(
        ToolSpec::new(
            "find_in_report",
            "List the report lines containing a keyword (case-insensitive).",
            vec![ParamSpec::required("keyword", ArgType::String)],
            "matching line numbers and text",
        ),
        move |c| {
            let text = latest_report(&s, &p)?;
            let view = open_document(&text, 20).map_err(|e| e.to_string())?;
            let keyword = c.arg("keyword").unwrap_or_default();
            let hits = view.find_all(keyword).map_err(|e| e.to_string())?;
            if hits.is_empty() {
                return Ok(format!("no lines contain {keyword:?}"));
            }
            Ok(hits
                .iter()
                .take(10)
                .map(|h| format!("{}: {}", h.line, view.lines[h.line - 1]))
                .collect::<Vec<_>>()
                .join("\n"))
        },
    )
    .expect("static tool spec");
    let (s, p) = (store.clone(), pid.to_string());
    r.register(
        ToolSpec::new(
            "goto_line",
            "Show the report from a line onwards.",
            vec![ParamSpec::required("n", ArgType::Integer)],
            "up to 20 numbered lines",
        ),
        move |c| {
            let text = latest_report(&s, &p)?;
            let view = open_document(&text, 20).map_err(|e| e.to_string())?.goto_line(c.int("n").unwrap_or(1));
            Ok(view
                .visible()
                .iter()
                .map(|(n, l)| format!("{n}: {l}"))
                .collect::<Vec<_>>()
                .join("\n"))
        },
    )
    .expect("static tool spec");
    let names: Vec<String> = Section::ALL.iter().map(|s| s.title().to_string()).collect();
    let (s, p) = (store, pid.to_string());
    r.register(
        ToolSpec::new(
            "read_section",
            "Return the text of one report section.",
            vec![ParamSpec::required("section", ArgType::Enum(names))],
            "section text",
        ),
        move |c| {
            let text = latest_report(&s, &p)?;
            let report = crate::docs::validate_report(&text).map_err(|v| format!("{v:?}"))?;
            let section = Section::from_title(c.arg("section").unwrap_or_default()).ok_or("unknown section")?;
            Ok(report.section(section).to_string())
        },
    )
    .expect("static tool spec");
    r
}

struct ExamTool {
    wf: Arc<Workflow>,
    case: Arc<CaseSpec>,
    embed: Arc<dyn EmbedBackend>,
    threshold: f64,
    pid: String,
    log: Arc<Mutex<Vec<ExamLog>>>,
    used: AtomicBool,
}

impl ExamTool {
    fn request(&self, name: &str, rationale: &str) -> Result<String, String> {
        if self.used.swap(true, Ordering::SeqCst) {
            return Err("only one examination per cycle; give your Final Answer".into());
        }
        let name = name.trim();
        self.wf
            .request_exam(&self.pid, ExamRequest::new(name, rationale))
            .map_err(|e| {
                self.used.store(false, Ordering::SeqCst);
                e.to_string()
            })?;
        let found = match_exam(name, &self.case, self.embed.as_ref(), self.threshold);
        let (outcome, entry) = match &found {
            Ok(m) => match &m.matched {
                Some(x) => (
                    ExamOutcome::Result {
                        name: x.name.clone(),
                        content: x.content.clone(),
                    },
                    ExamLog {
                        requested: name.to_string(),
                        matched: Some(x.name.clone()),
                        category: Some(x.category),
                        similarity: m.similarity,
                    },
                ),
                None => (
                    ExamOutcome::Unavailable {
                        reason: format!("no matching examination (best similarity {:.3})", m.similarity),
                    },
                    ExamLog {
                        requested: name.to_string(),
                        matched: None,
                        category: None,
                        similarity: m.similarity,
                    },
                ),
            },
            Err(e) => (
                ExamOutcome::Unavailable { reason: e.to_string() },
                ExamLog {
                    requested: name.to_string(),
                    matched: None,
                    category: None,
                    similarity: 0.0,
                },
            ),
        };
        self.log.lock().unwrap().push(entry.clone());
        let observation = match &outcome {
            ExamOutcome::Result { name: provided, content } => {
                format!("Result for {provided} (requested {name:?}): {}", content.trim())
            }
            ExamOutcome::Unavailable { reason } => format!("{name} is not available ({reason}); continuing without it."),
        };
        let (_, update) = self.wf.ingest_exam_outcome(&self.pid, outcome).map_err(|e| e.to_string())?;
        Ok(match update {
            Some((report, _)) => format!("{observation}\nThe report is now at revision {}.", report.revision),
            None => observation,
        })
    }
}

fn exam_tools(tool: Arc<ExamTool>) -> ToolRegistry {
    let mut r = ToolRegistry::new();
    r.register(
        ToolSpec::new(
            "request_exam",
            "Order one physical examination or test for the patient.",
            vec![
                ParamSpec::required("name", ArgType::String),
                ParamSpec::optional("rationale", ArgType::String),
            ],
            "the result, or a note that it is unavailable",
        ),
        move |c| tool.request(c.arg("name").unwrap_or_default(), c.arg("rationale").unwrap_or_default()),
    )
    .expect("static tool spec");
    r
}

struct Referrals {
    targets: Vec<String>,
    failures: Vec<String>,
}

impl Referrals {
    /// Asks for a referral decision and applies it. Generation problems are
    /// recorded, not fatal.
    fn consider(&mut self, wf: &Workflow, pid: &str) -> Result<(), BenchError> {
        match wf.suggest_referral(pid) {
            Ok(ReferralOutcome::Referral(r)) => {
                let state = wf.apply_referral(pid, &r)?;
                self.targets.push(state.current_specialty().to_string());
            }
            Ok(ReferralOutcome::NoReferralNeeded { .. }) => {}
            Err(WorkflowError::Docs(e)) => self.failures.push(e.to_string()),
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }
}

/// Asks the clinician for the next inquiry question given the dialogue so
/// far (`Doctor: ...` / `Patient: ...` lines).
pub fn ask_question(clinician: &dyn ChatBackend, pid: &str, turn: usize, conversation: &str) -> Result<String, BenchError> {
    let prompt = [
        ChatMessage::system(DOCTOR_SYSTEM),
        ChatMessage::user(format!(
            "Task: inquiry-question\nPatient: {pid}\nTurn: {turn}\n\nConversation so far:\n{}",
            if conversation.is_empty() { "(none)" } else { conversation }
        )),
    ];
    let question = clinician.chat(&prompt, &ChatParams::default())?.text.trim().to_string();
    Ok(if question.is_empty() { "Is there anything else I should know?".to_string() } else { question })
}

/// Runs the full workflow for one case in its own store under
/// `ctx.store_root`.
pub fn run_case(case: &CaseSpec, ctx: &CaseContext) -> Result<CaseResult, BenchError> {
    let store = Arc::new(init_store(&ctx.store_root, StoreLayout::default())?);
    let wf = Arc::new(Workflow::new(
        store.clone(),
        ctx.clinician.clone(),
        ctx.grounder.clone(),
        ctx.policy.clone(),
    )?);
    let pid = patient_id(&case.case_id);
    let state = wf.start_episode(&pid, Some(&format!("Patient: {pid}\nCase: {}\n", case.case_id)))?;
    let ep = state.episode_id.clone();
    store.store_document(&pid, DocKind::History, &format!("# History\n{}\n", case.history.trim()))?;
    let mut warnings = Vec::new();

    let mut conversation = String::new();
    for turn in 1..=ctx.inquiry_turns {
        let question = ask_question(ctx.clinician.as_ref(), &pid, turn, &conversation)?;
        let answer = simulate_patient_turn(case, &question, ctx.patient.as_ref())?;
        wf.add_inquiry_turn(&pid, "Doctor", &question)?;
        wf.add_inquiry_turn(&pid, "Patient", &answer)?;
        conversation.push_str(&format!("Doctor: {question}\nPatient: {answer}\n"));
    }
    wf.record_inquiry(&pid, "")?;

    let mut referrals = Referrals { targets: Vec::new(), failures: Vec::new() };
    referrals.consider(&wf, &pid)?;
    let first_specialty = wf.load(&pid)?.current_specialty().to_string();
    wf.write_initial_report(&pid, ReportInputs::All)?;

    let log = Arc::new(Mutex::new(Vec::new()));
    let budget = ctx.policy.exam_budget as usize;
    let mut cycle = 0;
    loop {
        cycle += 1;
        if cycle > budget + 1 {
            return Err(WorkflowError::BudgetExhausted {
                used: budget as u32,
                budget: budget as u32,
            }
            .into());
        }
        let state = wf.load(&pid)?;
        let goal = format!(
            "Task: assess-stage\nPatient: {pid}\nReport revision: {}\nExams used: {} of {}\n\n\
             Review the current report with the tools and state the most likely diagnosis. Finish with \
             `Final Answer: Diagnosis: <diagnosis>; Confidence: <1-10>`. A confidence above {} accepts the \
             diagnosis; otherwise an examination is requested.",
            state.report_revisions, state.exams_used, state.exam_budget, ctx.policy.confidence_accept_threshold
        );
        let episode = run_episode(&goal, &assess_tools(store.clone(), &pid), ctx.clinician.as_ref(), ctx.limits)?;
        let name = write_trace(&store, &pid, &format!("{ep}-assess{cycle}"), &episode.trace)?;
        wf.record_trace(&pid, &name)?;
        let fallback = state.latest_assessment.clone();
        let assessment = match episode.final_answer().map(parse_final_assessment) {
            Some((diagnosis, confidence)) if !diagnosis.is_empty() => {
                let confidence = confidence.unwrap_or_else(|| {
                    warnings.push(format!("cycle {cycle}: no confidence given; using {DEFAULT_CONFIDENCE}"));
                    DEFAULT_CONFIDENCE
                });
                DiagnosisAssessment::new(diagnosis, confidence, "Stated at the end of the review cycle.")?
            }
            _ => {
                warnings.push(format!("cycle {cycle}: no usable final answer; using the report assessment"));
                fallback.ok_or(WorkflowError::NoReport)?
            }
        };
        let (_, decision) = wf.apply_assessment(&pid, assessment.clone())?;
        if decision != Decision::RequestExam {
            break;
        }

        let prior = wf.load(&pid)?;
        let (before, results_before) = (prior.exams_used, prior.results_ingested);
        let tool = Arc::new(ExamTool {
            wf: wf.clone(),
            case: Arc::new(case.clone()),
            embed: ctx.embed.clone(),
            threshold: ctx.match_threshold,
            pid: pid.clone(),
            log: log.clone(),
            used: AtomicBool::new(false),
        });
        let goal = format!(
            "Task: exam-stage\nPatient: {pid}\nExams used: {before} of {}\nCurrent diagnosis: {} (confidence {})\n\n\
             Request the single most informative examination with the request_exam tool, then give a one-line \
             Final Answer naming what was requested.",
            ctx.policy.exam_budget, assessment.diagnosis, assessment.confidence
        );
        let episode = run_episode(&goal, &exam_tools(tool), ctx.clinician.as_ref(), ctx.limits)?;
        let name = write_trace(&store, &pid, &format!("{ep}-exam{cycle}"), &episode.trace)?;
        wf.record_trace(&pid, &name)?;
        let state = wf.load(&pid)?;
        if state.pending_exam().is_some() {
            return Err(WorkflowError::InvalidExam("exam request left unresolved".into()).into());
        }
        if state.exams_used == before {
            warnings.push(format!("cycle {cycle}: no examination requested; counted as skipped"));
            wf.request_exam(&pid, ExamRequest::new("unspecified examination", "none named"))?;
            wf.ingest_exam_outcome(
                &pid,
                ExamOutcome::Unavailable {
                    reason: "no examination was named".into(),
                },
            )?;
            log.lock().unwrap().push(ExamLog {
                requested: "unspecified examination".into(),
                matched: None,
                category: None,
                similarity: 0.0,
            });
        } else if state.results_ingested > results_before {
            referrals.consider(&wf, &pid)?;
        }
    }

    let (items, grounding, medication_failure) = match wf.plan_medications(&pid) {
        Ok((set, grounding)) => (set.items, grounding, None),
        Err(WorkflowError::Docs(e)) => (Vec::new(), Vec::new(), Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let note = medication_failure.as_ref().map(|_| "No medication recommendation could be generated.");
    let (state, _) = wf.finalize(&pid, &items, &grounding, note)?;
    let fa = state.final_assessment.clone().ok_or(WorkflowError::NoFinalAssessment)?;
    let score = score_diagnosis(&fa.assessment.diagnosis, &case.truth_diagnosis, ctx.embed.as_ref())?;
    let exams = log.lock().unwrap().clone();
    let truth = case.truth_specialty.as_deref();
    Ok(CaseResult {
        case_id: case.case_id.clone(),
        specialty: case.specialty.clone(),
        truth_diagnosis: case.truth_diagnosis.clone(),
        predicted_diagnosis: fa.assessment.diagnosis.clone(),
        score,
        confidence: fa.assessment.confidence,
        decision: fa.decision,
        exams_requested: exams.len(),
        exams_ordered: exams.iter().filter(|e| e.matched.is_some()).count(),
        exams,
        report_count: state.report_revisions,
        medication_count: items.len(),
        referrals: referrals.targets,
        first_referral_correct: truth.map(|t| t.eq_ignore_ascii_case(&first_specialty)),
        final_referral_correct: truth.map(|t| t.eq_ignore_ascii_case(state.current_specialty())),
        referral_failures: referrals.failures,
        medication_failure,
        warnings,
    })
}
