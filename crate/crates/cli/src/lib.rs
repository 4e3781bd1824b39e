//! The `medos` operator CLI. Subcommands mirror the HTTP endpoints and
//! print pretty JSON on stdout.

pub mod config;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use medos_core::bench::{
    ask_question, default_specialties, load_dataset, load_scripts, run_benchmark, simulate_patient_turn,
    BenchBackends, BenchConfig, CaseSpec, ProfilePatient,
};
use medos_core::docs::{parse_explanation, validate_report, DiagnosisAssessment, ReferralOutcome};
use medos_core::gateway::{ChatBackend, OpenAiBackend, RemoteConfig};
use medos_core::grounding::{Grounder, GroundingCache};
use medos_core::store::{init_store, DocKind, RecordStore, SearchScope, StoreLayout, DEFAULT_SEARCH_LIMIT};
use medos_core::viewer::open_document;
use medos_core::workflow::{ExamOutcome, ExamRequest, ReportInputs, Workflow, WorkflowError};
use serde_json::{json, Value};

pub use config::Config;

#[derive(Debug, Parser)]
#[command(name = "medos", version, about = "Clinical workflow agent: store, episodes, benchmark and HTTP service")]
pub struct Cli {
    /// Config file; defaults to ./medos.json when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured store root.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Overrides the exam budget.
    #[arg(long, global = true)]
    pub budget: Option<u32>,
    /// Overrides the confidence acceptance threshold.
    #[arg(long, global = true)]
    pub threshold: Option<u8>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create (or verify) the store layout.
    Init {
        /// Comma-separated specialty names replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        specialties: Option<Vec<String>>,
    },
    /// Open an episode, creating the patient when needed.
    Admit {
        patient_id: String,
        #[arg(long)]
        demographics: Option<String>,
        /// File stored as the patient's history document.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Inquiry dialogue.
    Inquire {
        patient_id: String,
        #[command(subcommand)]
        action: InquireAction,
    },
    /// Apply a diagnosis assessment and report the gating decision.
    Assess {
        patient_id: String,
        #[arg(long)]
        diagnosis: String,
        #[arg(long)]
        confidence: u8,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    /// Request an exam or settle the outstanding one.
    Exam {
        patient_id: String,
        #[command(subcommand)]
        action: ExamAction,
    },
    /// Write, list or show report revisions.
    Report {
        patient_id: String,
        #[command(subcommand)]
        action: ReportAction,
    },
    /// Referral suggestion, proposal, application and review.
    Refer {
        patient_id: String,
        #[command(flatten)]
        action: ReferAction,
    },
    /// Draft medications for review; discharge uses the draft.
    Medicate { patient_id: String },
    /// Finalize with the medication draft and return the folder to the central database.
    Discharge {
        patient_id: String,
        #[arg(long)]
        note: Option<String>,
        #[arg(long)]
        approved_by: Option<String>,
    },
    /// Show the current episode state.
    Status { patient_id: String },
    /// List patients and their locations.
    Patients,
    /// Keyword search over stored documents.
    Search {
        query: String,
        #[arg(long, default_value_t = DEFAULT_SEARCH_LIMIT)]
        limit: usize,
        #[arg(long, conflicts_with = "specialty")]
        patient: Option<String>,
        #[arg(long)]
        specialty: Option<String>,
    },
    /// Stateless document viewer.
    View(ViewArgs),
    /// Run the simulated benchmark over a case dataset.
    Bench(BenchArgs),
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        addr: Option<SocketAddr>,
        #[arg(long)]
        attended: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum InquireAction {
    /// Append one dialogue turn.
    Turn {
        #[arg(long, default_value = "patient")]
        speaker: String,
        text: String,
    },
    /// Let the configured clinician ask and answer from a case file.
    Simulate {
        /// Case file supplying the patient actor profile.
        #[arg(long)]
        case: PathBuf,
        #[arg(long, default_value_t = 3)]
        turns: usize,
    },
    /// Store the transcript and move to triage.
    Complete {
        /// Transcript file; the recorded turns are used when absent.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExamAction {
    Request {
        name: String,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    Result {
        /// Name of the item actually provided.
        name: String,
        #[arg(long, conflicts_with = "content_file")]
        content: Option<String>,
        #[arg(long)]
        content_file: Option<PathBuf>,
    },
    Unavailable {
        #[arg(long, default_value = "not available")]
        reason: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportAction {
    /// Write the initial report from stored documents.
    Write {
        /// Restrict inputs to these stored filenames.
        #[arg(long = "file")]
        files: Vec<String>,
        #[arg(long)]
        approved_by: Option<String>,
    },
    /// List revisions.
    List,
    Show { revision: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReferVerb {
    Suggest,
    Propose,
    Apply,
    Approve,
    Reject,
}

#[derive(Debug, Args)]
pub struct ReferAction {
    #[arg(value_enum)]
    pub verb: ReferVerb,
    #[arg(long)]
    pub approved_by: Option<String>,
    /// Approver's override of the recommended specialty.
    #[arg(long)]
    pub specialty: Option<String>,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    pub patient_id: String,
    pub document: String,
    #[arg(long, default_value_t = 20)]
    pub height: usize,
    #[arg(long)]
    pub top: Option<i64>,
    #[arg(long)]
    pub cursor: Option<i64>,
    #[arg(long, allow_hyphen_values = true, group = "op")]
    pub scroll: Option<i64>,
    #[arg(long, group = "op")]
    pub goto: Option<i64>,
    #[arg(long, group = "op")]
    pub find: Option<String>,
    #[arg(long, group = "op")]
    pub first: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Scripted clinicians, trigram embeddings and fixture grounding,
    /// regardless of the configured backends.
    #[arg(long)]
    pub offline: bool,
    #[arg(long)]
    pub match_threshold: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub inquiry_turns: Option<usize>,
    /// Grounding fixture tree; defaults to the configured one.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

impl Cli {
    pub fn config(&self) -> Result<Config> {
        let mut c = Config::load(self.config.as_deref())?;
        if let Some(s) = &self.store {
            c.store_root = s.clone();
        }
        if let Some(b) = self.budget {
            c.policy.exam_budget = b;
        }
        if let Some(t) = self.threshold {
            c.policy.confidence_accept_threshold = t;
        }
        c.policy.validate()?;
        Ok(c)
    }
}

fn workflow(config: &Config) -> Result<Workflow> {
    let store = RecordStore::open(&config.store_root)
        .with_context(|| format!("store at {} (run `medos init` first)", config.store_root.display()))?;
    let grounder = config.grounder(&config.store_root);
    Ok(Workflow::new(
        Arc::new(store),
        config.chat_backend()?,
        Arc::new(grounder),
        config.policy.clone(),
    )?)
}

/// The approver for a gated transition; required in attended mode.
fn approver(config: &Config, given: &Option<String>) -> Result<Option<String>> {
    match given.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
        Some(by) => Ok(Some(by.to_string())),
        None if config.attended => Err(WorkflowError::ApprovalRequired.into()),
        None => Ok(None),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Executes one command and returns its JSON output. `serve` blocks.
pub fn run(cli: Cli) -> Result<Value> {
    let config = cli.config()?;
    match cli.command {
        Command::Init { specialties } => {
            let names = specialties
                .or_else(|| config.specialties.clone())
                .unwrap_or_else(default_specialties);
            let store = init_store(&config.store_root, StoreLayout::with_specialties(names))?;
            Ok(json!({ "store_root": store.root(), "layout": store.layout() }))
        }
        Command::Admit {
            patient_id,
            demographics,
            history,
        } => {
            let wf = workflow(&config)?;
            let state = wf.start_episode(&patient_id, Some(demographics.as_deref().unwrap_or(&patient_id)))?;
            let history = match history {
                Some(p) => Some(wf.store().store_document(&patient_id, DocKind::History, &read_text(&p)?)?),
                None => None,
            };
            Ok(json!({ "state": state, "history": history }))
        }
        Command::Inquire { patient_id, action } => {
            let wf = workflow(&config)?;
            match action {
                InquireAction::Turn { speaker, text } => Ok(json!(wf.add_inquiry_turn(&patient_id, &speaker, &text)?)),
                InquireAction::Simulate { case, turns } => {
                    let case: CaseSpec = serde_json::from_str(&read_text(&case)?)?;
                    simulate_inquiry(&wf, &patient_id, &case, turns)
                }
                InquireAction::Complete { transcript } => {
                    let text = match transcript {
                        Some(p) => read_text(&p)?,
                        None => String::new(),
                    };
                    let (state, document) = wf.record_inquiry(&patient_id, &text)?;
                    Ok(json!({ "state": state, "document": document }))
                }
            }
        }
        Command::Assess {
            patient_id,
            diagnosis,
            confidence,
            rationale,
        } => {
            let wf = workflow(&config)?;
            let a = DiagnosisAssessment::new(diagnosis, confidence, rationale)?;
            let (state, decision) = wf.apply_assessment(&patient_id, a)?;
            Ok(json!({ "decision": decision, "state": state }))
        }
        Command::Exam { patient_id, action } => {
            let wf = workflow(&config)?;
            match action {
                ExamAction::Request { name, rationale } => {
                    Ok(json!(wf.request_exam(&patient_id, ExamRequest::new(name, rationale))?))
                }
                ExamAction::Result {
                    name,
                    content,
                    content_file,
                } => {
                    let content = match (content, content_file) {
                        (Some(c), _) => c,
                        (None, Some(p)) => read_text(&p)?,
                        (None, None) => bail!("give --content or --content-file"),
                    };
                    let (state, update) = wf.ingest_exam_outcome(&patient_id, ExamOutcome::Result { name, content })?;
                    let (report, explanation) = update.unzip();
                    Ok(json!({ "state": state, "report": report, "explanation": explanation }))
                }
                ExamAction::Unavailable { reason } => {
                    let (state, _) = wf.ingest_exam_outcome(&patient_id, ExamOutcome::Unavailable { reason })?;
                    Ok(json!({ "state": state }))
                }
            }
        }
        Command::Report { patient_id, action } => {
            let wf = workflow(&config)?;
            report(&config, &wf, &patient_id, action)
        }
        Command::Refer { patient_id, action } => {
            let wf = workflow(&config)?;
            refer(&config, &wf, &patient_id, &action)
        }
        Command::Medicate { patient_id } => {
            let wf = workflow(&config)?;
            Ok(json!(wf.draft_medications(&patient_id)?))
        }
        Command::Discharge {
            patient_id,
            note,
            approved_by,
        } => {
            let by = approver(&config, &approved_by)?;
            let wf = workflow(&config)?;
            let (mut state, document) = wf.discharge(&patient_id, note.as_deref())?;
            if let Some(by) = by {
                state = wf.record_approval(&patient_id, "discharge", &by)?;
            }
            Ok(json!({ "state": state, "document": document }))
        }
        Command::Status { patient_id } => Ok(json!(workflow(&config)?.load(&patient_id)?)),
        Command::Patients => {
            let store = RecordStore::open(&config.store_root)?;
            let list: Vec<Value> = store
                .list_patients()?
                .into_iter()
                .map(|(id, location)| json!({ "patient_id": id, "location": location }))
                .collect();
            Ok(Value::Array(list))
        }
        Command::Search {
            query,
            limit,
            patient,
            specialty,
        } => {
            if limit == 0 {
                bail!("limit must be at least 1");
            }
            let store = RecordStore::open(&config.store_root)?;
            let scope = match (patient, specialty) {
                (Some(p), _) => SearchScope::Patient(p),
                (None, Some(s)) => SearchScope::Specialty(s),
                (None, None) => SearchScope::AllDocuments,
            };
            Ok(json!(store.search_keyword(&query, &scope, limit)?))
        }
        Command::View(args) => view(&config, args),
        Command::Bench(args) => bench(&config, args),
        Command::Serve { addr, attended } => serve(&config, addr, attended),
    }
}

fn simulate_inquiry(wf: &Workflow, patient_id: &str, case: &CaseSpec, turns: usize) -> Result<Value> {
    let mut state = wf.load(patient_id)?;
    let mut conversation: String = state
        .inquiry_turns
        .iter()
        .map(|t| format!("{}: {}\n", t.speaker, t.text))
        .collect();
    for turn in 1..=turns {
        let question = ask_question(wf.chat().as_ref(), patient_id, turn, &conversation)?;
        let answer = simulate_patient_turn(case, &question, &ProfilePatient)?;
        wf.add_inquiry_turn(patient_id, "Doctor", &question)?;
        state = wf.add_inquiry_turn(patient_id, "Patient", &answer)?;
        conversation.push_str(&format!("Doctor: {question}\nPatient: {answer}\n"));
    }
    Ok(json!(state))
}

fn report(config: &Config, wf: &Workflow, patient_id: &str, action: ReportAction) -> Result<Value> {
    match action {
        ReportAction::Write { files, approved_by } => {
            let by = approver(config, &approved_by)?;
            let inputs = if files.is_empty() {
                ReportInputs::All
            } else {
                ReportInputs::Files(files)
            };
            let (mut state, report) = wf.write_initial_report(patient_id, inputs)?;
            if let Some(by) = by {
                state = wf.record_approval(patient_id, "report", &by)?;
            }
            Ok(json!({ "state": state, "report": report }))
        }
        ReportAction::List => Ok(Value::Array(
            revisions(wf, patient_id)?
                .into_iter()
                .map(|(rev, doc, expl)| json!({ "revision": rev, "document": doc, "explanation": expl }))
                .collect(),
        )),
        ReportAction::Show { revision } => {
            let (_, doc, expl) = revisions(wf, patient_id)?
                .into_iter()
                .find(|(rev, _, _)| *rev == revision)
                .ok_or_else(|| anyhow!("report revision {revision} does not exist"))?;
            let content = wf.store().read_document(patient_id, &doc)?;
            let report = validate_report(&content).map_err(|v| anyhow!("stored report invalid: {v:?}"))?;
            let explanation = match expl {
                Some(name) => {
                    let text = wf.store().read_document(patient_id, &name)?;
                    json!({ "document": name, "parsed": parse_explanation(&text).ok(), "content": text })
                }
                None => Value::Null,
            };
            Ok(json!({ "revision": revision, "document": doc, "content": content, "report": report, "explanation": explanation }))
        }
    }
}

/// `(revision, report filename, explanation filename)`; revision n >= 2 is
/// explained by the (n-1)th explanation.
fn revisions(wf: &Workflow, patient_id: &str) -> Result<Vec<(usize, String, Option<String>)>> {
    wf.load(patient_id)?;
    let docs = wf.store().list_documents(patient_id)?;
    let explanations: Vec<&str> = docs
        .iter()
        .filter(|d| d.doc_kind == DocKind::UpdateExplanation)
        .map(|d| d.filename.as_str())
        .collect();
    Ok(docs
        .iter()
        .filter(|d| d.doc_kind == DocKind::Report)
        .enumerate()
        .map(|(i, d)| {
            let expl = i.checked_sub(1).and_then(|j| explanations.get(j)).map(|s| s.to_string());
            (i + 1, d.filename.clone(), expl)
        })
        .collect())
}

fn refer(config: &Config, wf: &Workflow, patient_id: &str, action: &ReferAction) -> Result<Value> {
    let named = || {
        action
            .approved_by
            .clone()
            .filter(|s| !s.trim().is_empty())
            .ok_or(WorkflowError::ApprovalRequired)
    };
    Ok(match action.verb {
        ReferVerb::Suggest => json!({ "outcome": wf.suggest_referral(patient_id)?, "state": wf.load(patient_id)? }),
        ReferVerb::Propose | ReferVerb::Apply => {
            let by = if action.verb == ReferVerb::Apply {
                approver(config, &action.approved_by)?
            } else {
                None
            };
            let outcome = wf.suggest_referral(patient_id)?;
            let state = match &outcome {
                ReferralOutcome::Referral(r) if action.verb == ReferVerb::Propose => {
                    wf.propose_referral(patient_id, r.clone())?
                }
                ReferralOutcome::Referral(r) => {
                    let state = wf.apply_referral(patient_id, r)?;
                    match by {
                        Some(by) => wf.record_approval(patient_id, "referral", &by)?,
                        None => state,
                    }
                }
                ReferralOutcome::NoReferralNeeded { .. } => wf.load(patient_id)?,
            };
            json!({ "outcome": outcome, "state": state })
        }
        ReferVerb::Approve => {
            json!({ "state": wf.approve_referral_to(patient_id, &named()?, action.specialty.as_deref())? })
        }
        ReferVerb::Reject => json!({ "state": wf.reject_referral(patient_id, &named()?)? }),
    })
}

fn view(config: &Config, a: ViewArgs) -> Result<Value> {
    let store = RecordStore::open(&config.store_root)?;
    let content = store.read_document(&a.patient_id, &a.document)?;
    let mut v = open_document(&content, a.height)?;
    if a.top.is_some() || a.cursor.is_some() {
        let top = a.top.unwrap_or(1);
        v = v.at(top, a.cursor.unwrap_or(top));
    }
    let mut hits = None;
    if let Some(d) = a.scroll {
        v = v.scroll(d);
    } else if let Some(n) = a.goto {
        v = v.goto_line(n);
    } else if let Some(k) = &a.find {
        hits = Some(v.find_all(k)?);
    } else if let Some(k) = &a.first {
        v = v.goto_first(k)?;
    }
    let visible: Vec<Value> = v.visible().into_iter().map(|(line, text)| json!({ "line": line, "text": text })).collect();
    Ok(json!({
        "document": a.document,
        "line_count": v.line_count(),
        "height": v.height,
        "top_line": v.top_line,
        "cursor_line": v.cursor_line,
        "visible": visible,
        "hits": hits,
    }))
}

fn bench(config: &Config, a: BenchArgs) -> Result<Value> {
    let specialties = config.specialties.clone().unwrap_or_else(default_specialties);
    let dataset = load_dataset(&a.dataset, &specialties)?;
    let defaults = BenchConfig::default();
    let bench_config = BenchConfig {
        policy: config.policy.clone(),
        match_threshold: a.match_threshold.unwrap_or(defaults.match_threshold),
        workers: a.workers.unwrap_or(defaults.workers),
        inquiry_turns: a.inquiry_turns.unwrap_or(defaults.inquiry_turns),
        limits: defaults.limits,
    };
    let fixtures = a.fixtures.clone().or_else(|| config.grounding.fixtures.clone());
    let backends = if a.offline || config.is_offline() {
        BenchBackends::offline(load_scripts(&a.dataset)?, fixtures)
    } else {
        remote_backends(config, fixtures)?
    };
    let out = run_benchmark(&dataset, &bench_config, &backends, &a.out)?;
    Ok(json!({
        "out": a.out,
        "cases_total": out.metrics.cases_total,
        "cases_failed": out.metrics.cases_failed,
        "overall": out.metrics.overall,
        "files": out.files,
    }))
}

/// Remote chat for both the clinician and the patient actor, with the
/// configured embedding and grounding.
fn remote_backends(config: &Config, fixtures: Option<PathBuf>) -> Result<BenchBackends> {
    let remote = Arc::new(OpenAiBackend::new(RemoteConfig::from_env()?)?);
    let id = remote.id();
    let chat: Arc<dyn ChatBackend> = remote;
    let (c, p) = (chat.clone(), chat);
    let grounding = config.grounding.clone();
    Ok(BenchBackends {
        clinician: Box::new(move |_| c.clone()),
        patient: Box::new(move |_| p.clone()),
        embed: config.embed_backend()?,
        grounder: Box::new(move |root| {
            let cache = GroundingCache::for_store(root);
            match grounding.mode {
                config::GroundingMode::Offline => Grounder::offline(cache, fixtures.clone()),
                config::GroundingMode::Online => Grounder::public_sources(cache),
            }
        }),
        clinician_id: id.clone(),
        patient_id: id,
    })
}

fn serve(config: &Config, addr: Option<SocketAddr>, attended: bool) -> Result<Value> {
    let addr: SocketAddr = match addr {
        Some(a) => a,
        None => config.server.addr.parse().with_context(|| format!("server.addr {:?}", config.server.addr))?,
    };
    let store = medos_server::open_store(&config.store_root)?;
    let chat = config.chat_backend()?;
    let settings = medos_server::Settings {
        token: std::env::var(medos_server::TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        attended: attended || config.attended,
        session_ttl_minutes: config.server.session_ttl_minutes,
        mode: if config.is_offline() { "offline" } else { "online" }.into(),
        chat_backend: chat.id(),
        embed_model: config.embed_backend()?.model_id(),
    };
    let wf = Workflow::new(
        Arc::new(store),
        chat,
        Arc::new(config.grounder(&config.store_root)),
        config.policy.clone(),
    )?;
    let state = medos_server::AppState::new(Arc::new(wf), settings);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = medos_server::bind(addr).await?;
        medos_server::serve(listener, state).await
    })?;
    Ok(json!({ "stopped": addr.to_string() }))
}
