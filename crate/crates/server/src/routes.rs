//! Endpoint handlers. Workflow calls are blocking and run on the blocking
//! pool so long model calls do not stall unrelated requests.

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use medos_core::docs::{
    parse_explanation, validate_report, DiagnosisAssessment, ExplanationRecord, ReferralOutcome, StructuredReport,
    UpdateExplanation,
};
use medos_core::store::{
    DocKind, DocumentRef, Location, PatientFolder, SearchHit, SearchScope, DEFAULT_SEARCH_LIMIT,
};
use medos_core::viewer::{open_document, LineMatches};
use medos_core::workflow::{
    CaseState, Decision, ExamOutcome, ExamRequest, MedicationDraft, ReportInputs, Stage, Workflow, EPISODE_FILE,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{ApiError, AppState, SessionToken};

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(app: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Workflow) -> Result<T, ApiError> + Send + 'static,
{
    let wf = app.workflow().clone();
    tokio::task::spawn_blocking(move || f(&wf))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn require_approval(app: &AppState, approved_by: &Option<String>) -> Result<Option<String>, ApiError> {
    let by = approved_by.as_deref().map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
    if app.settings().attended && by.is_none() {
        return Err(medos_core::workflow::WorkflowError::ApprovalRequired.into());
    }
    Ok(by)
}

pub fn public() -> Router<AppState> {
    Router::new().route("/healthz", get(healthz))
}

pub fn protected() -> Router<AppState> {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/patients", get(list_patients).post(create_patient))
        .route("/patients/{id}", get(get_patient))
        .route("/patients/{id}/documents/{filename}", get(get_document))
        .route("/cases", get(list_cases).post(start_case))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/inquiry/turns", post(add_turn))
        .route("/cases/{id}/inquiry/complete", post(complete_inquiry))
        .route("/cases/{id}/reports", get(list_reports).post(write_report))
        .route("/cases/{id}/report/{rev}", get(get_report))
        .route("/cases/{id}/assessment", post(assess))
        .route("/cases/{id}/exams", post(request_exam))
        .route("/cases/{id}/exams/outcome", post(ingest_outcome))
        .route("/cases/{id}/referral", post(referral))
        .route("/cases/{id}/medications", post(medications))
        .route("/cases/{id}/discharge", post(discharge))
        .route("/search", get(search))
        .route("/viewer", post(viewer))
}

async fn healthz(State(app): State<AppState>) -> Json<Value> {
    let s = app.settings();
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "mode": s.mode,
        "attended": s.attended,
        "backends": { "chat": s.chat_backend, "embedding": s.embed_model },
        "policy": app.workflow().policy(),
        "auth": s.token.is_some(),
    }))
}

async fn create_session(State(app): State<AppState>) -> (StatusCode, Json<SessionToken>) {
    (StatusCode::CREATED, Json(app.issue_session()))
}

#[derive(Deserialize)]
struct NewPatient {
    patient_id: String,
    demographics: String,
}

async fn create_patient(
    State(app): State<AppState>,
    Json(body): Json<NewPatient>,
) -> Result<(StatusCode, Json<PatientFolder>), ApiError> {
    let folder = blocking(&app, move |wf| Ok(wf.store().create_patient(&body.patient_id, &body.demographics)?)).await?;
    Ok((StatusCode::CREATED, Json(folder)))
}

#[derive(Deserialize)]
struct LocationFilter {
    specialty: Option<String>,
}

#[derive(Serialize)]
struct PatientEntry {
    patient_id: String,
    location: Location,
}

fn matches_location(wf: &Workflow, filter: &Option<String>, location: &Location) -> Result<bool, ApiError> {
    let Some(want) = filter else { return Ok(true) };
    if want.eq_ignore_ascii_case("central") {
        return Ok(*location == Location::CentralDatabase);
    }
    let canonical = wf
        .store()
        .layout()
        .resolve_specialty(want)
        .ok_or_else(|| ApiError::bad_request("UnknownSpecialty", format!("unknown specialty {want:?}")))?
        .to_string();
    Ok(*location == Location::Specialty(canonical))
}

async fn list_patients(State(app): State<AppState>, Query(q): Query<LocationFilter>) -> ApiResult<Vec<PatientEntry>> {
    let out = blocking(&app, move |wf| {
        let mut out = Vec::new();
        for (patient_id, location) in wf.store().list_patients()? {
            if matches_location(wf, &q.specialty, &location)? {
                out.push(PatientEntry { patient_id, location });
            }
        }
        Ok(out)
    })
    .await?;
    Ok(Json(out))
}

async fn get_patient(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<PatientFolder> {
    Ok(Json(blocking(&app, move |wf| Ok(wf.store().folder(&id)?)).await?))
}

async fn get_document(State(app): State<AppState>, Path((id, filename)): Path<(String, String)>) -> ApiResult<Value> {
    let content = blocking(&app, move |wf| {
        let content = wf.store().read_document(&id, &filename)?;
        Ok(json!({ "patient_id": id, "filename": filename, "content": content }))
    })
    .await?;
    Ok(Json(content))
}

#[derive(Serialize)]
struct CaseSummary {
    patient_id: String,
    episode_id: String,
    stage: Stage,
    location: Location,
    exams_used: u32,
    exam_budget: u32,
    report_revisions: u32,
    pending_approvals: Vec<String>,
}

#[derive(Deserialize)]
struct CaseFilter {
    specialty: Option<String>,
    /// Only cases not yet discharged.
    #[serde(default)]
    active: bool,
}

async fn list_cases(State(app): State<AppState>, Query(q): Query<CaseFilter>) -> ApiResult<Vec<CaseSummary>> {
    let attended = app.settings().attended;
    let out = blocking(&app, move |wf| {
        let mut out = Vec::new();
        for (patient_id, location) in wf.store().list_patients()? {
            if !matches_location(wf, &q.specialty, &location)? {
                continue;
            }
            if wf.store().read_aux(&patient_id, EPISODE_FILE)?.is_none() {
                continue;
            }
            let state = wf.load(&patient_id)?;
            if q.active && state.stage == Stage::Discharged {
                continue;
            }
            let mut pending = Vec::new();
            match state.stage {
                Stage::ReferralPending => pending.push("referral".to_string()),
                Stage::MedicationPlanning if attended => pending.push("discharge".to_string()),
                _ => {}
            }
            out.push(CaseSummary {
                patient_id,
                episode_id: state.episode_id,
                stage: state.stage,
                location,
                exams_used: state.exams_used,
                exam_budget: state.exam_budget,
                report_revisions: state.report_revisions,
                pending_approvals: pending,
            });
        }
        Ok(out)
    })
    .await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
struct StartCase {
    patient_id: String,
    demographics: Option<String>,
}

async fn start_case(
    State(app): State<AppState>,
    Json(body): Json<StartCase>,
) -> Result<(StatusCode, Json<CaseState>), ApiError> {
    let state =
        blocking(&app, move |wf| Ok(wf.start_episode(&body.patient_id, body.demographics.as_deref())?)).await?;
    Ok((StatusCode::CREATED, Json(state)))
}

async fn get_case(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<CaseState> {
    Ok(Json(blocking(&app, move |wf| Ok(wf.load(&id)?)).await?))
}

#[derive(Deserialize)]
struct Turn {
    speaker: String,
    text: String,
}

async fn add_turn(State(app): State<AppState>, Path(id): Path<String>, Json(t): Json<Turn>) -> ApiResult<CaseState> {
    Ok(Json(blocking(&app, move |wf| Ok(wf.add_inquiry_turn(&id, &t.speaker, &t.text)?)).await?))
}

#[derive(Deserialize, Default)]
struct CompleteInquiry {
    #[serde(default)]
    transcript: String,
}

#[derive(Serialize)]
struct StateWithDoc {
    state: CaseState,
    document: DocumentRef,
}

async fn complete_inquiry(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<CompleteInquiry>>,
) -> ApiResult<StateWithDoc> {
    let transcript = body.map(|b| b.0.transcript).unwrap_or_default();
    let (state, document) = blocking(&app, move |wf| Ok(wf.record_inquiry(&id, &transcript)?)).await?;
    Ok(Json(StateWithDoc { state, document }))
}

#[derive(Deserialize, Default)]
struct WriteReport {
    files: Option<Vec<String>>,
    approved_by: Option<String>,
}

#[derive(Serialize)]
struct StateWithReport {
    state: CaseState,
    report: StructuredReport,
}

async fn write_report(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<WriteReport>>,
) -> ApiResult<StateWithReport> {
    let body = body.map(|b| b.0).unwrap_or_default();
    let by = require_approval(&app, &body.approved_by)?;
    let (state, report) = blocking(&app, move |wf| {
        let inputs = body.files.map(ReportInputs::Files).unwrap_or_default();
        let (mut state, report) = wf.write_initial_report(&id, inputs)?;
        if let Some(by) = by {
            state = wf.record_approval(&id, "report", &by)?;
        }
        Ok((state, report))
    })
    .await?;
    Ok(Json(StateWithReport { state, report }))
}

#[derive(Serialize)]
struct RevisionEntry {
    revision: usize,
    document: DocumentRef,
    explanation: Option<DocumentRef>,
}

fn revisions(wf: &Workflow, id: &str) -> Result<Vec<RevisionEntry>, ApiError> {
    wf.load(id)?;
    let docs = wf.store().list_documents(id)?;
    let explanations: Vec<&DocumentRef> = docs.iter().filter(|d| d.doc_kind == DocKind::UpdateExplanation).collect();
    Ok(docs
        .iter()
        .filter(|d| d.doc_kind == DocKind::Report)
        .enumerate()
        .map(|(i, d)| RevisionEntry {
            revision: i + 1,
            document: d.clone(),
            explanation: i.checked_sub(1).and_then(|j| explanations.get(j)).map(|d| (*d).clone()),
        })
        .collect())
}

async fn list_reports(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<RevisionEntry>> {
    Ok(Json(blocking(&app, move |wf| revisions(wf, &id)).await?))
}

#[derive(Serialize)]
struct ReportRevision {
    revision: usize,
    document: DocumentRef,
    content: String,
    report: StructuredReport,
    explanation: Option<ExplanationView>,
}

#[derive(Serialize)]
struct ExplanationView {
    document: DocumentRef,
    content: String,
    parsed: Option<ExplanationRecord>,
}

async fn get_report(State(app): State<AppState>, Path((id, rev)): Path<(String, usize)>) -> ApiResult<ReportRevision> {
    let out = blocking(&app, move |wf| {
        let entry = revisions(wf, &id)?
            .into_iter()
            .find(|e| e.revision == rev)
            .ok_or_else(|| {
                ApiError::not_found("UnknownRevision", format!("report revision {rev} does not exist"))
                    .with_detail(json!({ "revision": rev }))
            })?;
        let content = wf.store().read_document(&id, &entry.document.filename)?;
        let report = validate_report(&content).map_err(|v| ApiError::internal(format!("stored report invalid: {v:?}")))?;
        let explanation = match entry.explanation {
            Some(doc) => {
                let content = wf.store().read_document(&id, &doc.filename)?;
                Some(ExplanationView {
                    parsed: parse_explanation(&content).ok(),
                    document: doc,
                    content,
                })
            }
            None => None,
        };
        Ok(ReportRevision {
            revision: rev,
            document: entry.document,
            content,
            report,
            explanation,
        })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
struct Assessment {
    diagnosis: String,
    confidence: u8,
    #[serde(default)]
    rationale: String,
}

#[derive(Serialize)]
struct AssessmentResult {
    decision: Decision,
    state: CaseState,
}

async fn assess(State(app): State<AppState>, Path(id): Path<String>, Json(a): Json<Assessment>) -> ApiResult<AssessmentResult> {
    let (state, decision) = blocking(&app, move |wf| {
        let a = DiagnosisAssessment::new(a.diagnosis, a.confidence, a.rationale)?;
        Ok(wf.apply_assessment(&id, a)?)
    })
    .await?;
    Ok(Json(AssessmentResult { decision, state }))
}

#[derive(Deserialize)]
struct NewExam {
    name: String,
    #[serde(default)]
    rationale: String,
}

async fn request_exam(State(app): State<AppState>, Path(id): Path<String>, Json(e): Json<NewExam>) -> ApiResult<CaseState> {
    Ok(Json(blocking(&app, move |wf| Ok(wf.request_exam(&id, ExamRequest::new(e.name, e.rationale))?)).await?))
}

#[derive(Serialize)]
struct OutcomeResult {
    state: CaseState,
    report: Option<StructuredReport>,
    explanation: Option<UpdateExplanation>,
}

async fn ingest_outcome(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(outcome): Json<ExamOutcome>,
) -> ApiResult<OutcomeResult> {
    let (state, update) = blocking(&app, move |wf| Ok(wf.ingest_exam_outcome(&id, outcome)?)).await?;
    let (report, explanation) = update.map(|(r, e)| (Some(r), Some(e))).unwrap_or((None, None));
    Ok(Json(OutcomeResult {
        state,
        report,
        explanation,
    }))
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ReferralAction {
    /// Generate a recommendation without changing the case.
    Suggest,
    /// Generate and hold it for approval.
    Propose,
    /// Generate and apply immediately.
    Apply,
    Approve,
    Reject,
}

#[derive(Deserialize)]
struct ReferralRequest {
    action: ReferralAction,
    approved_by: Option<String>,
    /// Approver's override of the recommended specialty.
    specialty: Option<String>,
}

#[derive(Serialize)]
struct ReferralResult {
    outcome: Option<ReferralOutcome>,
    state: CaseState,
}

async fn referral(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ReferralRequest>,
) -> ApiResult<ReferralResult> {
    let by = match req.action {
        ReferralAction::Apply => require_approval(&app, &req.approved_by)?,
        ReferralAction::Approve | ReferralAction::Reject => Some(
            req.approved_by
                .clone()
                .filter(|s| !s.trim().is_empty())
                .ok_or(medos_core::workflow::WorkflowError::ApprovalRequired)?,
        ),
        _ => None,
    };
    let out = blocking(&app, move |wf| {
        Ok(match req.action {
            ReferralAction::Suggest => ReferralResult {
                outcome: Some(wf.suggest_referral(&id)?),
                state: wf.load(&id)?,
            },
            ReferralAction::Propose | ReferralAction::Apply => {
                let outcome = wf.suggest_referral(&id)?;
                let state = match (&outcome, req.action) {
                    (ReferralOutcome::Referral(r), ReferralAction::Propose) => wf.propose_referral(&id, r.clone())?,
                    (ReferralOutcome::Referral(r), _) => {
                        let state = wf.apply_referral(&id, r)?;
                        match &by {
                            Some(by) => wf.record_approval(&id, "referral", by)?,
                            None => state,
                        }
                    }
                    (ReferralOutcome::NoReferralNeeded { .. }, _) => wf.load(&id)?,
                };
                ReferralResult {
                    outcome: Some(outcome),
                    state,
                }
            }
            ReferralAction::Approve => ReferralResult {
                outcome: None,
                state: wf.approve_referral_to(&id, by.as_deref().unwrap_or_default(), req.specialty.as_deref())?,
            },
            ReferralAction::Reject => ReferralResult {
                outcome: None,
                state: wf.reject_referral(&id, by.as_deref().unwrap_or_default())?,
            },
        })
    })
    .await?;
    Ok(Json(out))
}

/// Generates recommendations for review. The draft is kept beside the
/// episode and used by discharge; the case itself does not change.
async fn medications(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<MedicationDraft> {
    Ok(Json(blocking(&app, move |wf| Ok(wf.draft_medications(&id)?)).await?))
}

#[derive(Deserialize, Default)]
struct Discharge {
    approved_by: Option<String>,
    note: Option<String>,
}

async fn discharge(State(app): State<AppState>, Path(id): Path<String>, body: Option<Json<Discharge>>) -> ApiResult<StateWithDoc> {
    let body = body.map(|b| b.0).unwrap_or_default();
    let by = require_approval(&app, &body.approved_by)?;
    let out = blocking(&app, move |wf| {
        let (mut state, document) = wf.discharge(&id, body.note.as_deref())?;
        if let Some(by) = by {
            state = wf.record_approval(&id, "discharge", &by)?;
        }
        Ok(StateWithDoc { state, document })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    q: String,
    limit: Option<usize>,
    patient: Option<String>,
    specialty: Option<String>,
}

async fn search(State(app): State<AppState>, Query(q): Query<SearchQuery>) -> ApiResult<Vec<SearchHit>> {
    let limit = q.limit.unwrap_or(DEFAULT_SEARCH_LIMIT);
    if limit == 0 {
        return Err(ApiError::bad_request("InvalidLimit", "limit must be at least 1"));
    }
    let scope = match (q.patient, q.specialty) {
        (Some(p), None) => SearchScope::Patient(p),
        (None, Some(s)) => SearchScope::Specialty(s),
        (None, None) => SearchScope::AllDocuments,
        (Some(_), Some(_)) => {
            return Err(ApiError::bad_request("InvalidScope", "give patient or specialty, not both"));
        }
    };
    let hits = blocking(&app, move |wf| Ok(wf.store().search_keyword(&q.q, &scope, limit)?)).await?;
    Ok(Json(hits))
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum ViewerOp {
    Open,
    Scroll { delta: i64 },
    GotoLine { line: i64 },
    FindAll { keyword: String },
    GotoFirst { keyword: String },
}

#[derive(Deserialize)]
struct ViewerRequest {
    patient_id: String,
    document: String,
    #[serde(default = "default_height")]
    height: usize,
    top_line: Option<i64>,
    cursor_line: Option<i64>,
    #[serde(flatten)]
    op: ViewerOp,
}

fn default_height() -> usize {
    20
}

#[derive(Serialize)]
struct VisibleLine {
    line: usize,
    text: String,
}

#[derive(Serialize)]
struct ViewerResponse {
    document: String,
    line_count: usize,
    height: usize,
    top_line: usize,
    cursor_line: usize,
    visible: Vec<VisibleLine>,
    hits: Option<Vec<LineMatches>>,
}

/// Stateless viewer: the client sends back the position it was given.
async fn viewer(State(app): State<AppState>, Json(req): Json<ViewerRequest>) -> ApiResult<ViewerResponse> {
    let out = blocking(&app, move |wf| {
        let content = wf.store().read_document(&req.patient_id, &req.document)?;
        let mut view = open_document(&content, req.height)?;
        if req.top_line.is_some() || req.cursor_line.is_some() {
            let top = req.top_line.unwrap_or(1);
            view = view.at(top, req.cursor_line.unwrap_or(top));
        }
        let mut hits = None;
        view = match req.op {
            ViewerOp::Open => view,
            ViewerOp::Scroll { delta } => view.scroll(delta),
            ViewerOp::GotoLine { line } => view.goto_line(line),
            ViewerOp::FindAll { keyword } => {
                hits = Some(view.find_all(&keyword)?);
                view
            }
            ViewerOp::GotoFirst { keyword } => view.goto_first(&keyword)?,
        };
        Ok(ViewerResponse {
            document: req.document,
            line_count: view.line_count(),
            height: view.height,
            top_line: view.top_line,
            cursor_line: view.cursor_line,
            visible: view
                .visible()
                .into_iter()
                .map(|(line, text)| VisibleLine {
                    line,
                    text: text.to_string(),
                })
                .collect(),
            hits,
        })
    })
    .await?;
    Ok(Json(out))
}
