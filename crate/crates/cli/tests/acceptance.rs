//! Acceptance suite. Runs every criterion at its tolerance and prints one
//! PASS/FAIL line each; exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use medos_core::bench::{
    default_specialties, load_dataset, load_scripts, run_benchmark, BenchBackends, BenchConfig, CaseSpec, NamedText,
    ProfilePatient, PATIENT_TASK,
};
use medos_core::docs::{
    parse_explanation, parse_medication_plan, parse_referral, validate_report, DiagnosisAssessment, Section,
};
use medos_core::gateway::{cosine_similarity, ChatBackend, EmbeddingVector, RecordingBackend, TrigramEmbedder};
use medos_core::grounding::{Grounder, GroundingCache, NetworkProbe};
use medos_core::sim::{ClinicianScript, ScriptedAssessment, SimClinician};
use medos_core::store::{
    init_store, CrashPoint, DocKind, Location, RecordStore, SearchScope, StoreError, StoreLayout,
};
use medos_core::viewer::open_document;
use medos_core::workflow::{
    CaseState, Decision, ExamOutcome, ExamRequest, ExamStatus, ReportInputs, Stage, Workflow, WorkflowPolicy,
    EPISODE_FILE,
};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Duration, Check); 10] = [
        ("gating table", Duration::from_secs(1), gating_table),
        ("report-count law", Duration::from_secs(60), report_count_law),
        ("budget safety", Duration::from_secs(120), budget_safety),
        ("store conservation", Duration::from_secs(120), store_conservation),
        ("search and viewer oracles", Duration::from_secs(120), search_and_viewer),
        ("embedding math", Duration::from_secs(1), embedding_math),
        ("document conformance", Duration::from_secs(60), document_conformance),
        ("benchmark determinism", Duration::from_secs(300), benchmark_determinism),
        ("information firewall", Duration::from_secs(60), information_firewall),
        ("hermeticity", Duration::from_secs(60), hermeticity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:?}; {detail}")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("[{tag}] {name} ({:.2}s, limit {}s): {detail}", elapsed.as_secs_f64(), limit.as_secs());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixtures() -> PathBuf {
    repo().join("fixtures/grounding")
}

fn bench30() -> PathBuf {
    repo().join("fixtures/bench30")
}

fn bench30_cases() -> Vec<CaseSpec> {
    load_dataset(&bench30(), &default_specialties()).expect("fixture dataset loads")
}

fn offline_grounder(root: &Path) -> Arc<Grounder> {
    Arc::new(Grounder::offline(GroundingCache::for_store(root), Some(fixtures())))
}

fn workflow(store: Arc<RecordStore>, script: ClinicianScript) -> Workflow {
    let grounder = offline_grounder(store.root());
    Workflow::new(store, Arc::new(SimClinician::new(script)), grounder, WorkflowPolicy::default()).unwrap()
}

fn pending(state: &CaseState) -> usize {
    state.exams.iter().filter(|e| e.status == ExamStatus::Pending).count()
}

/// Opens an episode and brings it to the first assessment with `used`
/// exams already consumed.
fn episode_with_used_exams(wf: &Workflow, pid: &str, used: u32) -> Result<(), String> {
    let e = |x: medos_core::workflow::WorkflowError| format!("{pid}: {x}");
    wf.start_episode(pid, Some("Adult patient")).map_err(e)?;
    wf.add_inquiry_turn(pid, "Patient", "I have had a cough for a week.").map_err(e)?;
    wf.record_inquiry(pid, "").map_err(e)?;
    wf.write_initial_report(pid, ReportInputs::All).map_err(e)?;
    for i in 0..used {
        let a = DiagnosisAssessment::new("Undifferentiated cough", 3, "").unwrap();
        let (_, d) = wf.apply_assessment(pid, a).map_err(e)?;
        ensure(d == Decision::RequestExam, || format!("{pid}: setup decision {d:?}"))?;
        wf.request_exam(pid, ExamRequest::new(format!("exam {i}"), "setup")).map_err(e)?;
        wf.ingest_exam_outcome(pid, ExamOutcome::Unavailable { reason: "setup".into() }).map_err(e)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn gating_table() -> Result<String, String> {
    // Rows: confidence 1..=10. Columns: exams used 0..=4.
    // R = request exam, F = forced final, A = accept.
    const TABLE: [&str; 10] = [
        "RRRRF", "RRRRF", "RRRRF", "RRRRF", "RRRRF", "RRRRF", "RRRRF", "AAAAA", "AAAAA", "AAAAA",
    ];
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(init_store(dir.path(), StoreLayout::default()).unwrap());
    let wf = workflow(store, ClinicianScript::default());
    let mut checked = 0;
    for used in 0..=4u32 {
        for conf in 1..=10u8 {
            let pid = format!("g{conf}-{used}");
            episode_with_used_exams(&wf, &pid, used)?;
            let a = DiagnosisAssessment::new("Working diagnosis", conf, "").unwrap();
            let (state, decision) = wf.apply_assessment(&pid, a).map_err(|e| format!("{pid}: {e}"))?;
            let want = match TABLE[conf as usize - 1].as_bytes()[used as usize] {
                b'A' => Decision::AcceptDiagnosis,
                b'F' => Decision::ForcedFinal,
                _ => Decision::RequestExam,
            };
            ensure(decision == want, || format!("confidence {conf}, used {used}: got {decision:?}, want {want:?}"))?;
            let finalized = state.final_assessment.as_ref().map(|f| f.decision);
            let expect_final = (want != Decision::RequestExam).then_some(want);
            ensure(finalized == expect_final, || format!("confidence {conf}, used {used}: final {finalized:?}"))?;
            ensure(state.exams_used == used, || format!("{pid}: exams_used {}", state.exams_used))?;
            checked += 1;
        }
    }
    Ok(format!("{checked}/50 cells match"))
}

// ---------------------------------------------------------------------------

const SPECIALTIES6: [&str; 6] =
    ["Cardiology", "Pulmonology", "Gastroenterology", "Neurology", "Endocrinology", "Infectious Disease"];

fn random_script(rng: &mut StdRng, case: &CaseSpec) -> ClinicianScript {
    let mut pool: Vec<String> = case
        .test_results
        .iter()
        .chain(&case.physical_findings)
        .map(|t| t.name.clone())
        .collect();
    pool.extend(["bone marrow biopsy", "PET scan", "genetic panel"].map(String::from));
    let n_assess = rng.random_range(1..=6);
    ClinicianScript {
        key_terms: vec![case.truth_diagnosis.split_whitespace().last().unwrap_or("symptoms").to_lowercase()],
        specialty: Some(SPECIALTIES6.choose(rng).unwrap().to_string()),
        follow_up_specialty: rng.random_bool(0.4).then(|| SPECIALTIES6.choose(rng).unwrap().to_string()),
        assessments: (0..n_assess)
            .map(|_| ScriptedAssessment {
                diagnosis: if rng.random_bool(0.5) { case.truth_diagnosis.clone() } else { "Viral illness".into() },
                confidence: rng.random_range(1..=10),
            })
            .collect(),
        exams: (0..rng.random_range(0..=5)).map(|_| pool.choose(rng).unwrap().clone()).collect(),
        questions: Vec::new(),
        medications: Vec::new(),
    }
}

fn single_patient(store: &RecordStore) -> Result<String, String> {
    let patients = store.list_patients().map_err(|e| e.to_string())?;
    ensure(patients.len() == 1, || format!("expected one patient, found {}", patients.len()))?;
    Ok(patients[0].0.clone())
}

fn load_state(store: &RecordStore, pid: &str) -> Result<CaseState, String> {
    let bytes = store
        .read_aux(pid, EPISODE_FILE)
        .map_err(|e| e.to_string())?
        .ok_or_else(|| format!("{pid}: no episode"))?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn report_count_law() -> Result<String, String> {
    let base = bench30_cases();
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let mut cases = Vec::new();
    let mut scripts = BTreeMap::new();
    for i in 0..200 {
        let mut case = base[i % base.len()].clone();
        case.case_id = format!("rand-{i:03}");
        scripts.insert(case.case_id.clone(), random_script(&mut rng, &case));
        cases.push(case);
    }
    let out = tempfile::tempdir().unwrap();
    let backends = BenchBackends::offline(scripts, Some(fixtures()));
    let result = run_benchmark(&cases, &BenchConfig::default(), &backends, out.path()).map_err(|e| e.to_string())?;
    ensure(result.failures.is_empty(), || format!("failed cases: {:?}", result.failures))?;
    let mut discharged = 0;
    let mut revisions_checked = 0;
    for case in &cases {
        let store = RecordStore::open(out.path().join("cases").join(&case.case_id).join("store"))
            .map_err(|e| e.to_string())?;
        let pid = single_patient(&store)?;
        let state = load_state(&store, &pid)?;
        if state.stage != Stage::Discharged {
            continue;
        }
        discharged += 1;
        let docs = store.list_documents(&pid).map_err(|e| e.to_string())?;
        let reports = docs.iter().filter(|d| d.doc_kind == DocKind::Report).count() as u32;
        let resulted = state.exams.iter().filter(|e| matches!(e.status, ExamStatus::Resulted { .. })).count() as u32;
        ensure(state.report_revisions == 1 + resulted && reports == state.report_revisions, || {
            format!("{}: revisions {} stored {} results {}", case.case_id, state.report_revisions, reports, resulted)
        })?;
        let explanations: Vec<_> = docs.iter().filter(|d| d.doc_kind == DocKind::UpdateExplanation).collect();
        ensure(explanations.len() as u32 == reports - 1, || format!("{}: explanation count", case.case_id))?;
        for rev in 2..=reports {
            let found = explanations.iter().any(|d| {
                store
                    .read_document(&pid, &d.filename)
                    .ok()
                    .and_then(|t| parse_explanation(&t).ok())
                    .is_some_and(|x| x.new_revision == rev && x.prior_revision == rev - 1)
            });
            ensure(found, || format!("{}: no explanation for revision {rev}", case.case_id))?;
            revisions_checked += 1;
        }
    }
    ensure(discharged == 200, || format!("only {discharged}/200 episodes discharged"))?;
    Ok(format!("200 episodes discharged, {revisions_checked} later revisions explained, 0 violations"))
}

// ---------------------------------------------------------------------------

const FUZZ_EXAMS: [&str; 6] = ["chest x-ray", "complete blood count", "ECG", "", "  ", "CT head"];

fn fuzz_episode(wf: &Workflow, pid: &str, rng: &mut StdRng, budget: u32) -> Result<usize, String> {
    let mut observed = 0;
    let first = wf.start_episode(pid, Some("Fuzz patient"));
    ensure(first.is_ok(), || format!("{pid}: start failed: {:?}", first.err()))?;
    for _ in 0..rng.random_range(10..40) {
        let _ = match rng.random_range(0..14) {
            0 => wf.add_inquiry_turn(pid, "Patient", "It hurts.").map(drop),
            1 => wf.record_inquiry(pid, "").map(drop),
            2 => wf.write_initial_report(pid, ReportInputs::All).map(drop),
            3 | 4 => {
                let a = DiagnosisAssessment::new("Fuzz diagnosis", rng.random_range(1..=10), "").unwrap();
                wf.apply_assessment(pid, a).map(drop)
            }
            5 | 6 => wf.request_exam(pid, ExamRequest::new(*FUZZ_EXAMS.choose(rng).unwrap(), "fuzz")).map(drop),
            7 => wf
                .ingest_exam_outcome(pid, ExamOutcome::Result { name: "chest x-ray".into(), content: "Clear.".into() })
                .map(drop),
            8 => wf.ingest_exam_outcome(pid, ExamOutcome::Unavailable { reason: "none".into() }).map(drop),
            9 => match wf.suggest_referral(pid) {
                Ok(medos_core::docs::ReferralOutcome::Referral(r)) if rng.random_bool(0.5) => {
                    wf.apply_referral(pid, &r).map(drop)
                }
                Ok(medos_core::docs::ReferralOutcome::Referral(r)) => wf.propose_referral(pid, r).map(drop),
                other => other.map(drop),
            },
            10 => wf.approve_referral(pid, "dr-fuzz").map(drop),
            11 => wf.reject_referral(pid, "dr-fuzz").map(drop),
            12 => wf.discharge(pid, None).map(drop),
            _ => wf.start_episode(pid, None).map(drop),
        };
        let state = wf.load(pid).map_err(|e| format!("{pid}: load after op: {e}"))?;
        ensure(state.exams_used <= budget, || format!("{pid}: exams_used {} > {budget}", state.exams_used))?;
        ensure(pending(&state) <= 1, || format!("{pid}: {} outstanding exam requests", pending(&state)))?;
        observed += 1;
    }
    Ok(observed)
}

fn budget_safety() -> Result<String, String> {
    const EPISODES: usize = 1000;
    const THREADS: usize = 4;
    let total = Mutex::new(0usize);
    let errors = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for t in 0..THREADS {
            let (total, errors) = (&total, &errors);
            s.spawn(move || {
                let dir = tempfile::tempdir().unwrap();
                let store = Arc::new(init_store(dir.path(), StoreLayout::default()).unwrap());
                let mut rng = StdRng::seed_from_u64(0xb0d6e7 + t as u64);
                let cases = bench30_cases();
                for i in (t..EPISODES).step_by(THREADS) {
                    let script = random_script(&mut rng, &cases[i % cases.len()]);
                    let wf = workflow(store.clone(), script);
                    match fuzz_episode(&wf, &format!("f{i:04}"), &mut rng, wf.policy().exam_budget) {
                        Ok(n) => *total.lock().unwrap() += n,
                        Err(e) => errors.lock().unwrap().push(e),
                    }
                }
            });
        }
    });
    let errors = errors.into_inner().unwrap();
    ensure(errors.is_empty(), || format!("{} violations, first: {}", errors.len(), errors[0]))?;
    Ok(format!("{EPISODES} episodes, {} states observed, 0 violations", total.into_inner().unwrap()))
}

// ---------------------------------------------------------------------------

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Every stored document as `(patient, digest of the bytes on disk)`,
/// checking the recorded digest on the way.
fn disk_multiset(store: &RecordStore) -> Result<BTreeMap<(String, String), usize>, String> {
    let mut out = BTreeMap::new();
    for (pid, _) in store.list_patients().map_err(|e| e.to_string())? {
        for doc in store.list_documents(&pid).map_err(|e| e.to_string())? {
            let content = store.read_document(&pid, &doc.filename).map_err(|e| e.to_string())?;
            let d = sha256_hex(content.as_bytes());
            ensure(d == doc.content_digest, || format!("{pid}/{}: digest mismatch", doc.filename))?;
            *out.entry((pid.clone(), d)).or_insert(0) += 1;
        }
    }
    Ok(out)
}

fn store_conservation() -> Result<String, String> {
    const OPS: usize = 10_000;
    let dir = tempfile::tempdir().unwrap();
    let layout = StoreLayout::with_specialties(SPECIALTIES6);
    let mut store = init_store(dir.path(), layout.clone()).unwrap();
    let mut rng = StdRng::seed_from_u64(0x5707e);
    let mut model_docs: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut model_loc: BTreeMap<String, Location> = BTreeMap::new();
    let mut crashes = 0;
    let mut crash_points = BTreeSet::new();
    for op in 0..OPS {
        let ids: Vec<String> = model_loc.keys().cloned().collect();
        let pick = |rng: &mut StdRng| ids.choose(rng).cloned();
        match rng.random_range(0..10) {
            // Admit a new patient with a profile document.
            0 | 1 if model_loc.len() < 300 => {
                let id = format!("p{op:05}");
                let text = format!("Patient {id}\nborn {}", rng.random_range(1930..2020));
                store.create_patient(&id, &text).map_err(|e| format!("op {op} admit: {e}"))?;
                let docs = store.list_documents(&id).map_err(|e| e.to_string())?;
                for d in docs {
                    *model_docs.entry((id.clone(), d.content_digest)).or_insert(0) += 1;
                }
                model_loc.insert(id, Location::CentralDatabase);
            }
            2 | 3 => {
                let Some(id) = pick(&mut rng) else { continue };
                let text = format!("note {} for {id}", rng.random_range(0..50));
                store.store_document(&id, DocKind::Report, &text).map_err(|e| format!("op {op} store: {e}"))?;
                *model_docs.entry((id, sha256_hex(text.as_bytes()))).or_insert(0) += 1;
            }
            // Refer to, or move between, specialties.
            4..=6 => {
                let Some(id) = pick(&mut rng) else { continue };
                let target = SPECIALTIES6.choose(&mut rng).unwrap().to_string();
                let crash = rng.random_bool(0.02) && model_loc[&id] != Location::Specialty(target.clone());
                let point = CrashPoint::ALL[crashes % CrashPoint::ALL.len()];
                if crash {
                    store.inject_crash(point);
                }
                match store.move_to_specialty(&id, &target) {
                    Ok(_) => {
                        model_loc.insert(id, Location::Specialty(target));
                    }
                    Err(StoreError::InjectedCrash(p)) => {
                        crashes += 1;
                        crash_points.insert(format!("{p:?}"));
                        drop(store);
                        store = RecordStore::open(dir.path()).map_err(|e| format!("reopen after {p:?}: {e}"))?;
                        let locs = store.locations_of(&id);
                        ensure(locs.len() == 1, || format!("{id} after {p:?}: {locs:?}"))?;
                        let from = model_loc[&id].clone();
                        let to = Location::Specialty(target);
                        ensure(locs[0] == from || locs[0] == to, || format!("{id} after {p:?}: at {:?}", locs[0]))?;
                        ensure(disk_multiset(&store)? == model_docs, || format!("documents changed after {p:?}"))?;
                        model_loc.insert(id, locs[0].clone());
                    }
                    Err(_) if model_loc[&id] == Location::Specialty(target.clone()) => {}
                    Err(e) => return Err(format!("op {op} move {id} -> {target}: {e}")),
                }
            }
            // Discharge back to the central database.
            7 | 8 => {
                let Some(id) = pick(&mut rng) else { continue };
                match store.discharge_to_central(&id) {
                    Ok(_) => {
                        model_loc.insert(id, Location::CentralDatabase);
                    }
                    Err(StoreError::AlreadyCentral(_)) => {
                        ensure(model_loc[&id] == Location::CentralDatabase, || format!("{id}: spurious AlreadyCentral"))?;
                    }
                    Err(e) => return Err(format!("op {op} discharge {id}: {e}")),
                }
            }
            _ => {
                let Some(id) = pick(&mut rng) else { continue };
                let at = store.locate(&id);
                ensure(at.as_ref() == model_loc.get(&id), || format!("op {op}: {id} at {at:?}"))?;
            }
        }
        if op % 500 == 499 {
            check_locations(&store, &model_loc)?;
            ensure(disk_multiset(&store)? == model_docs, || format!("op {op}: document multiset diverged"))?;
        }
    }
    // Every crash point, once more, on a fresh patient.
    for point in CrashPoint::ALL {
        let id = format!("crash-{point:?}").to_lowercase();
        store.create_patient(&id, "crash probe").map_err(|e| e.to_string())?;
        for d in store.list_documents(&id).map_err(|e| e.to_string())? {
            *model_docs.entry((id.clone(), d.content_digest)).or_insert(0) += 1;
        }
        store.inject_crash(point);
        let err = store.move_to_specialty(&id, "Neurology");
        ensure(matches!(err, Err(StoreError::InjectedCrash(p)) if p == point), || format!("{point:?}: {err:?}"))?;
        drop(store);
        store = RecordStore::open(dir.path()).map_err(|e| e.to_string())?;
        let locs = store.locations_of(&id);
        ensure(locs.len() == 1, || format!("{point:?}: {locs:?}"))?;
        model_loc.insert(id, locs[0].clone());
        crash_points.insert(format!("{point:?}"));
        ensure(store.journal().map_err(|e| e.to_string())?.is_empty(), || format!("{point:?}: journal not empty"))?;
    }
    check_locations(&store, &model_loc)?;
    ensure(disk_multiset(&store)? == model_docs, || "final document multiset diverged".into())?;
    Ok(format!(
        "{OPS} ops over {} patients, {crashes} random crashes, all {} crash points recovered, 0 violations",
        model_loc.len(),
        crash_points.len()
    ))
}

fn check_locations(store: &RecordStore, model: &BTreeMap<String, Location>) -> Result<(), String> {
    let listed = store.list_patients().map_err(|e| e.to_string())?;
    let mut seen = BTreeSet::new();
    for (id, loc) in &listed {
        ensure(seen.insert(id.clone()), || format!("{id} listed twice"))?;
        ensure(model.get(id) == Some(loc), || format!("{id}: at {loc:?}, model {:?}", model.get(id)))?;
        ensure(store.locations_of(id).len() == 1, || format!("{id}: several folders"))?;
    }
    ensure(seen.len() == model.len(), || format!("{} listed, {} expected", seen.len(), model.len()))
}

// ---------------------------------------------------------------------------

const WORDS: [&str; 16] = [
    "fever", "Fever", "COUGH", "cough", "pneumonia", "bronchopneumonia", "Étoile", "étoile", "ab", "aba", "abab",
    "chest", "x-ray", "sepsis", "Sepsis", "straße",
];

fn random_line(rng: &mut StdRng) -> String {
    (0..rng.random_range(0..8)).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn oracle_fold(s: &str) -> String {
    s.chars()
        .map(|c| {
            let l: Vec<char> = c.to_lowercase().collect();
            if l.len() == 1 {
                l[0]
            } else {
                c
            }
        })
        .collect()
}

/// Naive keyword search over the model corpus.
fn oracle_search(
    docs: &[(String, String, String)],
    query: &str,
    limit: usize,
) -> Vec<(String, String, usize, Vec<(usize, String)>)> {
    let needle = oracle_fold(query.trim());
    let mut hits: Vec<_> = docs
        .iter()
        .filter_map(|(pid, file, content)| {
            let lines: Vec<(usize, String)> = content
                .lines()
                .enumerate()
                .filter(|(_, l)| oracle_fold(l).contains(&needle))
                .map(|(i, l)| (i + 1, l.to_string()))
                .collect();
            (!lines.is_empty()).then(|| (pid.clone(), file.clone(), lines.len(), lines))
        })
        .collect();
    hits.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    hits.truncate(limit);
    hits
}

/// Naive non-overlapping occurrences per line, as char offsets.
fn oracle_find_all(content: &str, keyword: &str) -> Vec<(usize, Vec<(usize, usize)>)> {
    let needle = oracle_fold(keyword);
    let width = needle.chars().count();
    content
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .filter_map(|(i, line)| {
            let hay = oracle_fold(line);
            let spans: Vec<(usize, usize)> = hay
                .match_indices(&needle)
                .map(|(byte, _)| {
                    let start = hay[..byte].chars().count();
                    (start, start + width)
                })
                .collect();
            (!spans.is_empty()).then_some((i + 1, spans))
        })
        .collect()
}

fn search_and_viewer() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x5ea5c4);
    let mut queries = 0;
    let mut viewer_ops = 0;
    let mut max_lines = 0;
    for round in 0..4 {
        let dir = tempfile::tempdir().unwrap();
        let store = init_store(dir.path(), StoreLayout::with_specialties(SPECIALTIES6)).unwrap();
        let mut corpus: Vec<(String, String, String)> = Vec::new();
        let mut where_: HashMap<String, Location> = HashMap::new();
        let n_docs = rng.random_range(50..=200);
        let n_patients = rng.random_range(5..=25);
        for p in 0..n_patients {
            let pid = format!("r{round}p{p:02}");
            store.create_patient(&pid, "corpus patient").unwrap();
            for d in store.list_documents(&pid).unwrap() {
                let text = store.read_document(&pid, &d.filename).unwrap();
                corpus.push((pid.clone(), d.filename, text));
            }
            where_.insert(pid, Location::CentralDatabase);
        }
        while corpus.len() < n_docs {
            let pid = format!("r{round}p{:02}", rng.random_range(0..n_patients));
            let lines = if round == 0 && corpus.len() == n_patients {
                10_000
            } else {
                rng.random_range(1..300)
            };
            max_lines = max_lines.max(lines);
            let text: Vec<String> = (0..lines).map(|_| random_line(&mut rng)).collect();
            let text = text.join("\n");
            let doc = store.store_document(&pid, DocKind::Transcript, &text).unwrap();
            corpus.push((pid, doc.filename, text));
        }
        for p in 0..n_patients {
            if rng.random_bool(0.4) {
                let pid = format!("r{round}p{p:02}");
                let spec = SPECIALTIES6.choose(&mut rng).unwrap().to_string();
                store.move_to_specialty(&pid, &spec).unwrap();
                where_.insert(pid, Location::Specialty(spec));
            }
        }
        for _ in 0..60 {
            let q = match rng.random_range(0..3) {
                0 => WORDS.choose(&mut rng).unwrap().to_string(),
                1 => WORDS.choose(&mut rng).unwrap().to_uppercase(),
                _ => {
                    let w = WORDS.choose(&mut rng).unwrap();
                    w.chars().take(2).collect()
                }
            };
            let scope = match rng.random_range(0..3) {
                0 => SearchScope::AllDocuments,
                1 => SearchScope::Patient(format!("r{round}p{:02}", rng.random_range(0..n_patients))),
                _ => SearchScope::Specialty(SPECIALTIES6.choose(&mut rng).unwrap().to_string()),
            };
            let subset: Vec<(String, String, String)> = corpus
                .iter()
                .filter(|(pid, _, _)| match &scope {
                    SearchScope::AllDocuments => true,
                    SearchScope::Patient(p) => p == pid,
                    SearchScope::Specialty(s) => where_[pid] == Location::Specialty(s.clone()),
                })
                .cloned()
                .collect();
            let full = store.search_keyword(&q, &scope, 1000).map_err(|e| e.to_string())?;
            let got: Vec<_> = full
                .iter()
                .map(|h| {
                    let lines = h.line_hits.iter().map(|l| (l.line, l.text.clone())).collect::<Vec<_>>();
                    (h.doc.patient_id.clone(), h.doc.filename.clone(), h.score, lines)
                })
                .collect();
            ensure(got == oracle_search(&subset, &q, 1000), || format!("search {q:?} in {scope:?} differs"))?;
            let limit = rng.random_range(1..=10);
            let cut = store.search_keyword(&q, &scope, limit).map_err(|e| e.to_string())?;
            ensure(cut.len() == limit.min(full.len()) && cut[..] == full[..cut.len()], || {
                format!("search {q:?} limit {limit} is not a prefix")
            })?;
            queries += 1;
        }
        ensure(matches!(store.search_keyword("  ", &SearchScope::AllDocuments, 5), Err(StoreError::EmptyQuery)), || {
            "blank query accepted".into()
        })?;
        // Viewer over a sample of documents.
        for (_, _, content) in corpus.iter().step_by(7) {
            let h = rng.random_range(1..40);
            let mut v = open_document(content, h).unwrap();
            let n = v.line_count() as i64;
            for _ in 0..40 {
                let kw = WORDS.choose(&mut rng).unwrap();
                let want_line = match rng.random_range(0..5) {
                    0 => {
                        v = v.scroll(rng.random_range(-3 * n..=3 * n));
                        None
                    }
                    1 => {
                        let target = rng.random_range(-5..=n + 5);
                        v = v.goto_line(target);
                        Some(target.clamp(1, n) as usize)
                    }
                    2 => {
                        let hits = v.find_all(kw).unwrap();
                        let got: Vec<(usize, Vec<(usize, usize)>)> = hits
                            .iter()
                            .map(|m| (m.line, m.spans.iter().map(|s| (s.start, s.end)).collect()))
                            .collect();
                        ensure(got == oracle_find_all(content, kw), || format!("find_all {kw:?} differs"))?;
                        None
                    }
                    3 => match oracle_find_all(content, kw).first() {
                        Some(&(line, _)) => {
                            v = v.goto_first(kw).unwrap();
                            Some(line)
                        }
                        None => {
                            ensure(v.goto_first(kw).is_err(), || format!("goto_first {kw:?} found a phantom"))?;
                            None
                        }
                    },
                    _ => {
                        v = v.at(rng.random_range(-5..=n + 5), rng.random_range(-5..=n + 5));
                        None
                    }
                };
                let (top, cur) = (v.top_line, v.cursor_line);
                let nn = n as usize;
                ensure(top >= 1 && top <= cur && cur <= nn && cur < top + h, || {
                    format!("viewport broken: top {top} cursor {cur} height {h} lines {nn}")
                })?;
                ensure(v.visible().len() == h.min(nn - top + 1), || "visible window has the wrong size".into())?;
                ensure(v.visible().first().map(|x| x.0) == Some(top), || "visible window misplaced".into())?;
                if let Some(line) = want_line {
                    ensure(cur == line, || format!("cursor {cur}, expected line {line}"))?;
                }
                viewer_ops += 1;
            }
        }
    }
    Ok(format!("{queries} searches, {viewer_ops} viewer ops, largest document {max_lines} lines, 0 violations"))
}

// ---------------------------------------------------------------------------

fn embedding_math() -> Result<String, String> {
    let v = |x: &[f64]| EmbeddingVector::new(x.to_vec(), "test");
    let cos = |a: &[f64], b: &[f64]| cosine_similarity(&v(a), &v(b)).map_err(|e| e.to_string());
    // 32 / (sqrt(14) * sqrt(77))
    let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
    ensure((expected - 0.974_631_846_197_076_2).abs() < 1e-15, || "hand value drifted".into())?;
    let got = cos(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])?;
    ensure((got - 0.974_631_846_197_076_2).abs() <= 1e-9, || format!("(1,2,3)·(4,5,6): {got}"))?;
    for (a, b, want) in [
        (vec![1.0, 0.0], vec![0.0, 1.0], 0.0),
        (vec![1.0, 1.0], vec![2.0, 2.0], 1.0),
        (vec![1.0, 0.0], vec![-1.0, 0.0], -1.0),
        (vec![3.0, 4.0], vec![4.0, 3.0], 24.0 / 25.0),
    ] {
        let got = cos(&a, &b)?;
        ensure((got - want).abs() <= 1e-9, || format!("{a:?}·{b:?}: {got}, want {want}"))?;
    }
    let mut rng = StdRng::seed_from_u64(0xe3bed);
    for _ in 0..1000 {
        let dim = rng.random_range(1..64);
        let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (ab, ba) = (cos(&a, &b)?, cos(&b, &a)?);
        ensure((ab - ba).abs() <= 1e-12, || format!("asymmetric: {ab} vs {ba}"))?;
        let k = rng.random_range(0.001..1000.0);
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        let s = cos(&scaled, &b)?;
        ensure((s - ab).abs() <= 1e-9, || format!("scale {k}: {s} vs {ab}"))?;
    }
    ensure(cos(&[0.0, 0.0], &[1.0, 0.0]).is_err(), || "zero vector accepted".into())?;
    ensure(cos(&[1.0], &[1.0, 0.0]).is_err(), || "dimension mismatch accepted".into())?;
    Ok("hand values to 1e-9, symmetry to 1e-12, scale invariance to 1e-9 over 1000 pairs".into())
}

// ---------------------------------------------------------------------------

/// Section headings to trimmed bodies, read straight from the markdown.
fn oracle_sections(markdown: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, String)> = None;
    for line in markdown.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            if let Some((k, v)) = current.take() {
                out.insert(k, v.trim().to_string());
            }
            current = Some((h.trim().to_string(), String::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    if let Some((k, v)) = current {
        out.insert(k, v.trim().to_string());
    }
    out
}

struct FixtureRun {
    _dir: tempfile::TempDir,
    out: PathBuf,
    cases: Vec<CaseSpec>,
    patient_calls: Vec<(String, Arc<RecordingBackend>)>,
    probes: Vec<(NetworkProbe, bool)>,
    metrics_json: String,
}

/// The fixture set run once in-process with prompt capture and grounding
/// probes attached.
fn fixture_run() -> &'static FixtureRun {
    static RUN: std::sync::OnceLock<FixtureRun> = std::sync::OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cases = bench30_cases();
        let scripts = load_scripts(&bench30()).unwrap();
        let recorders: Arc<Mutex<Vec<(String, Arc<RecordingBackend>)>>> = Arc::default();
        let probes: Arc<Mutex<Vec<(NetworkProbe, bool)>>> = Arc::default();
        let mut backends = BenchBackends::offline(scripts, Some(fixtures()));
        let r = recorders.clone();
        backends.patient = Box::new(move |case| {
            let rec = Arc::new(RecordingBackend::new(Arc::new(ProfilePatient)));
            r.lock().unwrap().push((case.case_id.clone(), rec.clone()));
            rec as Arc<dyn ChatBackend>
        });
        let p = probes.clone();
        backends.grounder = Box::new(move |root| {
            let g = Grounder::offline(GroundingCache::for_store(root), Some(fixtures()));
            p.lock().unwrap().push((g.probe().clone(), g.is_offline()));
            g
        });
        run_benchmark(&cases, &BenchConfig::default(), &backends, &out).expect("fixture run");
        let metrics_json = std::fs::read_to_string(out.join("metrics.json")).unwrap();
        let patient_calls = recorders.lock().unwrap().clone();
        let probes = probes.lock().unwrap().clone();
        FixtureRun {
            _dir: dir,
            out,
            cases,
            patient_calls,
            probes,
            metrics_json,
        }
    })
}

fn document_conformance() -> Result<String, String> {
    let run = fixture_run();
    let (mut reports, mut explanations, mut referrals, mut plans, mut med_failures) = (0, 0, 0, 0, 0);
    let failures: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.out.join("failures.json")).unwrap()).unwrap();
    let listed_med_failures = failures["medications"].as_array().map_or(0, Vec::len);
    for case in &run.cases {
        let store = RecordStore::open(run.out.join("cases").join(&case.case_id).join("store"))
            .map_err(|e| e.to_string())?;
        let pid = single_patient(&store)?;
        let docs = store.list_documents(&pid).map_err(|e| e.to_string())?;
        let read = |name: &str| store.read_document(&pid, name).map_err(|e| e.to_string());
        let report_docs: Vec<_> = docs.iter().filter(|d| d.doc_kind == DocKind::Report).collect();
        let mut texts = Vec::new();
        for d in &report_docs {
            let text = read(&d.filename)?;
            validate_report(&text).map_err(|v| format!("{}/{}: {v:?}", case.case_id, d.filename))?;
            reports += 1;
            texts.push(text);
        }
        for d in docs.iter().filter(|d| d.doc_kind == DocKind::UpdateExplanation) {
            let x = parse_explanation(&read(&d.filename)?).map_err(|e| format!("{}/{}: {e}", case.case_id, d.filename))?;
            let prior = oracle_sections(&texts[x.prior_revision as usize - 1]);
            let new = oracle_sections(&texts[x.new_revision as usize - 1]);
            let want: Vec<Section> = Section::ALL
                .into_iter()
                .filter(|s| prior.get(s.title()) != new.get(s.title()))
                .collect();
            ensure(x.changed_sections == want, || {
                format!("{}/{}: changed {:?}, diff says {want:?}", case.case_id, d.filename, x.changed_sections)
            })?;
            explanations += 1;
        }
        for d in docs.iter().filter(|d| d.doc_kind == DocKind::ReferralReport) {
            let text = read(&d.filename)?;
            let r = parse_referral(&text).map_err(|e| format!("{}/{}: {e}", case.case_id, d.filename))?;
            let bullets = oracle_sections(&text)
                .get("Points for Attention")
                .map_or(0, |b| b.lines().filter(|l| l.trim_start().starts_with("- ")).count());
            ensure(!r.points_for_attention.is_empty() && bullets > 0, || {
                format!("{}/{}: empty Points for Attention", case.case_id, d.filename)
            })?;
            referrals += 1;
        }
        for d in docs.iter().filter(|d| d.doc_kind == DocKind::MedicationPlan) {
            let text = read(&d.filename)?;
            plans += 1;
            match parse_medication_plan(&text) {
                Ok(plan) if !plan.items.is_empty()
                    && plan.items.iter().all(|m| m.problems().is_empty() && !m.source.trim().is_empty())
                    && oracle_sections(&text).contains_key("Sources") => {}
                _ => med_failures += 1,
            }
        }
    }
    let n = run.cases.len();
    ensure(plans == n, || format!("{plans} medication plans for {n} cases"))?;
    ensure(med_failures <= listed_med_failures, || {
        format!("{med_failures} nonconforming plans, {listed_med_failures} recorded failures")
    })?;
    Ok(format!(
        "{reports} reports valid, {explanations} explanations match the section diff, {referrals} referrals with \
         points, {}/{n} medication plans complete ({listed_med_failures} recorded failures)",
        plans - med_failures
    ))
}

// ---------------------------------------------------------------------------

fn run_cli_bench(out: &Path, workers: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_medos"))
        .current_dir(repo())
        .args(["--config", "fixtures/bench30.medos.json", "bench", "--offline", "--dataset"])
        .arg(bench30())
        .arg("--out")
        .arg(out)
        .args(["--budget", "4", "--threshold", "7", "--match-threshold", "0.5", "--workers"])
        .arg(workers.to_string())
        .arg("--fixtures")
        .arg(fixtures())
        .env_remove("MEDOS_LLM_BASE_URL")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || format!("medos bench failed: {}", String::from_utf8_lossy(&status.stderr)))
}

fn benchmark_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_cli_bench(&a, 4)?;
    run_cli_bench(&b, 2)?;
    let mut compared = 0;
    for entry in std::fs::read_dir(&a).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if !path.is_file() || name == "run_meta.json" {
            continue;
        }
        let (x, y) = (std::fs::read(&path).unwrap(), std::fs::read(b.join(&name)).map_err(|e| e.to_string())?);
        ensure(x == y, || format!("{name} differs between runs"))?;
        compared += 1;
    }
    let golden = std::fs::read_to_string(repo().join("fixtures/golden/bench30_metrics.json")).unwrap();
    let metrics = std::fs::read_to_string(a.join("metrics.json")).unwrap();
    ensure(metrics == golden, || "metrics.json does not match the committed golden file".into())?;
    let hist: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("exam_histogram.json")).unwrap()).unwrap();
    let (req, ord) = (hist["requested_total"].as_u64().unwrap(), hist["ordered_total"].as_u64().unwrap());
    ensure(ord <= req, || format!("ordered {ord} > requested {req}"))?;
    let cases: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("cases.json")).unwrap()).unwrap();
    for c in cases.as_array().unwrap() {
        ensure(c["exams_ordered"].as_u64() <= c["exams_requested"].as_u64(), || format!("{}: ordered > requested", c["case_id"]))?;
    }
    ensure(run_fixture_matches_golden(&golden), || "in-process run differs from golden".into())?;
    Ok(format!("{compared} output files bit-identical, metrics.json equals golden, ordered {ord} <= requested {req}"))
}

fn run_fixture_matches_golden(golden: &str) -> bool {
    fixture_run().metrics_json == golden
}

// ---------------------------------------------------------------------------

fn information_firewall() -> Result<String, String> {
    let run = fixture_run();
    let by_id: HashMap<&str, &CaseSpec> = run.cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    let mut prompts = 0;
    for (case_id, rec) in &run.patient_calls {
        let case = by_id[case_id.as_str()];
        let hidden: Vec<&str> = std::iter::once(case.truth_diagnosis.as_str())
            .chain(case.physical_findings.iter().chain(&case.test_results).map(|t: &NamedText| t.content.as_str()))
            .collect();
        for call in rec.calls() {
            let text: String = call.messages.iter().map(|m| m.content.to_lowercase() + "\n").collect();
            ensure(text.contains(&PATIENT_TASK.to_lowercase()), || format!("{case_id}: non-actor prompt"))?;
            for h in &hidden {
                ensure(!text.contains(&h.to_lowercase()), || format!("{case_id}: patient prompt leaks {h:?}"))?;
            }
            prompts += 1;
        }
    }
    ensure(prompts > 0, || "no patient prompts captured".into())?;
    ensure(run.patient_calls.len() == run.cases.len(), || "missing recorders".into())?;
    Ok(format!("{prompts} patient-actor prompts over {} episodes, 0 leaks", run.cases.len()))
}

// ---------------------------------------------------------------------------

fn hermeticity() -> Result<String, String> {
    let run = fixture_run();
    ensure(run.probes.len() == run.cases.len(), || "grounder count".into())?;
    let attempts: usize = run.probes.iter().map(|(p, _)| p.attempts()).sum();
    ensure(run.probes.iter().all(|(_, offline)| *offline), || "an online grounder was built".into())?;
    ensure(attempts == 0, || format!("{attempts} connection attempts"))?;
    let meta: serde_json::Value = serde_json::from_str(&run.metrics_json).unwrap();
    ensure(meta["run"]["clinician_backend"] == SimClinician::ID, || "clinician backend is not simulated".into())?;
    ensure(meta["run"]["patient_backend"] == ProfilePatient::ID, || "patient backend is not simulated".into())?;
    ensure(meta["run"]["embedding_model"] == TrigramEmbedder::MODEL_ID, || "embedding model is not offline".into())?;
    // The CLI's offline config must agree.
    let config = medos_cli::Config::load(Some(&repo().join("fixtures/bench30.medos.json"))).map_err(|e| e.to_string())?;
    ensure(config.is_offline(), || "fixture config is not offline".into())?;
    Ok(format!("{} offline grounders, 0 connection attempts, all backends offline", run.probes.len()))
}
