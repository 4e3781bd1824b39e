//! Running a dataset and aggregating results.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::episode::{run_case, CaseContext, CaseResult, DEFAULT_INQUIRY_TURNS};
use super::svg::bar_chart;
use super::{categorize_exam, BenchError, CaseSpec, ExamCategory, ProfilePatient, CATEGORY_RULES_VERSION};
use crate::gateway::{ChatBackend, EmbedBackend, TrigramEmbedder};
use crate::grounding::{Grounder, GroundingCache};
use crate::react::Limits;
use crate::sim::{ClinicianScript, SimClinician};
use crate::workflow::{Decision, WorkflowPolicy};

pub const AGGREGATION_NOTE: &str =
    "accuracy = mean over cases of the clamped cosine similarity between predicted and true diagnosis, x100; \
     the overall row weights every case equally";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub policy: WorkflowPolicy,
    pub match_threshold: f64,
    pub workers: usize,
    pub inquiry_turns: usize,
    pub limits: Limits,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            policy: WorkflowPolicy::default(),
            match_threshold: 0.5,
            workers: 4,
            inquiry_turns: DEFAULT_INQUIRY_TURNS,
            limits: Limits::default(),
        }
    }
}

type ChatFactory = Box<dyn Fn(&CaseSpec) -> Arc<dyn ChatBackend> + Send + Sync>;
type GrounderFactory = Box<dyn Fn(&Path) -> Grounder + Send + Sync>;

/// Backends for a run. Factories are called once per case; the grounder
/// factory receives the case store root.
pub struct BenchBackends {
    pub clinician: ChatFactory,
    pub patient: ChatFactory,
    pub embed: Arc<dyn EmbedBackend>,
    pub grounder: GrounderFactory,
    pub clinician_id: String,
    pub patient_id: String,
}

impl BenchBackends {
    /// Fully offline: scripted clinicians, the profile patient, trigram
    /// embeddings and fixture-backed grounding.
    pub fn offline(scripts: BTreeMap<String, ClinicianScript>, fixtures: Option<PathBuf>) -> Self {
        let scripts = Arc::new(scripts);
        Self {
            clinician: Box::new(move |case| {
                Arc::new(SimClinician::new(scripts.get(&case.case_id).cloned().unwrap_or_default()))
            }),
            patient: Box::new(|_| Arc::new(ProfilePatient)),
            embed: Arc::new(TrigramEmbedder),
            grounder: Box::new(move |root| Grounder::offline(GroundingCache::for_store(root), fixtures.clone())),
            clinician_id: SimClinician::ID.into(),
            patient_id: ProfilePatient::ID.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub specialty: String,
    pub cases: usize,
    pub accuracy_pct: f64,
    pub mean_confidence: f64,
    pub mean_exams_ordered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamSummary {
    pub requested_total: usize,
    pub ordered_total: usize,
    pub unavailable_total: usize,
    pub mean_requested: f64,
    pub mean_ordered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferralSummary {
    /// Cases with a known target specialty.
    pub evaluated: usize,
    pub first_attempt_correct: usize,
    pub first_attempt_pct: f64,
    pub after_follow_up_correct: usize,
    pub after_follow_up_pct: f64,
    pub cases_with_follow_up: usize,
    pub generation_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub mean: f64,
    pub distribution: BTreeMap<u32, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub clinician_backend: String,
    pub patient_backend: String,
    pub embedding_model: String,
    pub policy: WorkflowPolicy,
    pub match_threshold: f64,
    pub inquiry_turns: usize,
    pub category_rules_version: u32,
    pub aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    pub overall: MetricsRow,
    pub cases_total: usize,
    pub cases_failed: usize,
    pub exams: ExamSummary,
    pub referrals: ReferralSummary,
    pub reports: CountSummary,
    /// One plus the mean number of results ingested; equals `reports.mean`
    /// when every result produced exactly one revision.
    pub expected_mean_reports: f64,
    pub medications: CountSummary,
    pub medication_failures: usize,
    pub decisions: BTreeMap<String, usize>,
    pub run: RunInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamHistogram {
    /// Number of cases by how many exams were requested.
    pub requested: BTreeMap<u32, usize>,
    pub ordered: BTreeMap<u32, usize>,
    pub requested_total: usize,
    pub ordered_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub ordered: BTreeMap<ExamCategory, usize>,
    /// Category of every finding and result available in the dataset.
    pub available: BTreeMap<ExamCategory, usize>,
    pub rules_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failures {
    pub cases: Vec<CaseFailure>,
    pub referrals: Vec<CaseFailure>,
    pub medications: Vec<CaseFailure>,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub metrics: MetricsTable,
    pub results: Vec<CaseResult>,
    pub failures: Vec<CaseFailure>,
    pub histogram: ExamHistogram,
    pub categories: CategoryCounts,
    pub files: Vec<PathBuf>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Rounds for stable serialization.
fn r4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        r4(100.0 * num as f64 / den as f64)
    }
}

fn row(specialty: &str, results: &[&CaseResult]) -> MetricsRow {
    MetricsRow {
        specialty: specialty.into(),
        cases: results.len(),
        accuracy_pct: r4(100.0 * mean(results.iter().map(|r| r.score))),
        mean_confidence: r4(mean(results.iter().map(|r| r.confidence as f64))),
        mean_exams_ordered: r4(mean(results.iter().map(|r| r.exams_ordered as f64))),
    }
}

fn distribution(values: impl IntoIterator<Item = u32>) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for v in values {
        *out.entry(v).or_insert(0) += 1;
    }
    out
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::AcceptDiagnosis => "accept",
        Decision::RequestExam => "request_exam",
        Decision::ForcedFinal => "forced_final",
    }
}

/// Aggregates per-case results. Failed cases are counted, not scored.
pub fn build_metrics(results: &[CaseResult], failed: usize, info: RunInfo) -> MetricsTable {
    let mut by_specialty: BTreeMap<&str, Vec<&CaseResult>> = BTreeMap::new();
    for r in results {
        by_specialty.entry(r.specialty.as_str()).or_default().push(r);
    }
    let rows = by_specialty.iter().map(|(s, rs)| row(s, rs)).collect();
    let all: Vec<&CaseResult> = results.iter().collect();
    let requested_total: usize = results.iter().map(|r| r.exams_requested).sum();
    let ordered_total: usize = results.iter().map(|r| r.exams_ordered).sum();
    let evaluated: Vec<&CaseResult> = results.iter().filter(|r| r.first_referral_correct.is_some()).collect();
    let mut decisions = BTreeMap::new();
    for r in results {
        *decisions.entry(decision_name(r.decision).to_string()).or_insert(0) += 1;
    }
    MetricsTable {
        rows,
        overall: row("Overall", &all),
        cases_total: results.len() + failed,
        cases_failed: failed,
        exams: ExamSummary {
            requested_total,
            ordered_total,
            unavailable_total: requested_total - ordered_total,
            mean_requested: r4(mean(results.iter().map(|r| r.exams_requested as f64))),
            mean_ordered: r4(mean(results.iter().map(|r| r.exams_ordered as f64))),
        },
        referrals: {
            let first = evaluated.iter().filter(|r| r.first_referral_correct == Some(true)).count();
            let after = evaluated.iter().filter(|r| r.final_referral_correct == Some(true)).count();
            ReferralSummary {
                evaluated: evaluated.len(),
                first_attempt_correct: first,
                first_attempt_pct: pct(first, evaluated.len()),
                after_follow_up_correct: after,
                after_follow_up_pct: pct(after, evaluated.len()),
                cases_with_follow_up: results.iter().filter(|r| r.referrals.len() > 1).count(),
                generation_failures: results.iter().map(|r| r.referral_failures.len()).sum(),
            }
        },
        reports: CountSummary {
            mean: r4(mean(results.iter().map(|r| r.report_count as f64))),
            distribution: distribution(results.iter().map(|r| r.report_count)),
        },
        expected_mean_reports: r4(1.0 + mean(results.iter().map(|r| r.exams_ordered as f64))),
        medications: CountSummary {
            mean: r4(mean(results.iter().map(|r| r.medication_count as f64))),
            distribution: distribution(results.iter().map(|r| r.medication_count as u32)),
        },
        medication_failures: results.iter().filter(|r| r.medication_failure.is_some()).count(),
        decisions,
        run: info,
    }
}

fn render_markdown(m: &MetricsTable) -> String {
    let mut out = String::from("# Benchmark results\n\n| Specialty | Cases | Accuracy (%) | Mean confidence | Mean exams ordered |\n|---|---:|---:|---:|---:|\n");
    for r in m.rows.iter().chain(std::iter::once(&m.overall)) {
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.2} | {:.2} |\n",
            r.specialty, r.cases, r.accuracy_pct, r.mean_confidence, r.mean_exams_ordered
        ));
    }
    out.push_str(&format!(
        "\nCases: {} scored, {} failed.\n\nExams: {} requested, {} ordered.\n\n\
         Referral: {}/{} correct on first attempt ({:.2}%), {}/{} after follow-up ({:.2}%).\n\n\
         Reports per case: mean {:.4} (expected {:.4}).\n\nMedications per case: mean {:.4}.\n\n{}\n",
        m.cases_total - m.cases_failed,
        m.cases_failed,
        m.exams.requested_total,
        m.exams.ordered_total,
        m.referrals.first_attempt_correct,
        m.referrals.evaluated,
        m.referrals.first_attempt_pct,
        m.referrals.after_follow_up_correct,
        m.referrals.evaluated,
        m.referrals.after_follow_up_pct,
        m.reports.mean,
        m.expected_mean_reports,
        m.medications.mean,
        m.run.aggregation,
    ));
    out
}

fn write(path: &Path, content: &str, files: &mut Vec<PathBuf>) -> Result<(), BenchError> {
    fs::write(path, content).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    files.push(path.to_path_buf());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, files: &mut Vec<PathBuf>) -> Result<(), BenchError> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"), files)
}

/// Runs every case on a pool of worker threads and writes the reports to
/// `out_dir`. Results are identical for any worker count.
pub fn run_benchmark(
    dataset: &[CaseSpec],
    config: &BenchConfig,
    backends: &BenchBackends,
    out_dir: &Path,
) -> Result<BenchOutput, BenchError> {
    if dataset.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    config.policy.validate()?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BenchError::Io { path, source }
    };
    let cases_dir = out_dir.join("cases");
    fs::create_dir_all(&cases_dir).map_err(io(&cases_dir))?;

    let slots: Vec<Mutex<Option<Result<CaseResult, String>>>> = dataset.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.workers.clamp(1, dataset.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(case) = dataset.get(i) else { break };
                let root = cases_dir.join(sanitize(&case.case_id));
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    if root.exists() {
                        fs::remove_dir_all(&root).map_err(|e| e.to_string())?;
                    }
                    let ctx = CaseContext {
                        store_root: root.join("store"),
                        clinician: (backends.clinician)(case),
                        patient: (backends.patient)(case),
                        embed: backends.embed.clone(),
                        grounder: Arc::new((backends.grounder)(&root.join("store"))),
                        policy: config.policy.clone(),
                        match_threshold: config.match_threshold,
                        limits: config.limits,
                        inquiry_turns: config.inquiry_turns,
                    };
                    run_case(case, &ctx).map_err(|e| e.to_string())
                }))
                .unwrap_or_else(|p| {
                    Err(p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "case panicked".into()))
                });
                match &outcome {
                    Ok(r) => info!(case = %case.case_id, score = r.score, "case finished"),
                    Err(e) => warn!(case = %case.case_id, error = %e, "case failed"),
                }
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (case, slot) in dataset.iter().zip(slots) {
        match slot.into_inner().unwrap().unwrap_or_else(|| Err("not run".into())) {
            Ok(r) => results.push(r),
            Err(error) => failures.push(CaseFailure {
                case_id: case.case_id.clone(),
                error,
            }),
        }
    }

    let info = RunInfo {
        clinician_backend: backends.clinician_id.clone(),
        patient_backend: backends.patient_id.clone(),
        embedding_model: backends.embed.model_id(),
        policy: config.policy.clone(),
        match_threshold: config.match_threshold,
        inquiry_turns: config.inquiry_turns,
        category_rules_version: CATEGORY_RULES_VERSION,
        aggregation: AGGREGATION_NOTE.into(),
    };
    let metrics = build_metrics(&results, failures.len(), info);
    let histogram = ExamHistogram {
        requested: distribution(results.iter().map(|r| r.exams_requested as u32)),
        ordered: distribution(results.iter().map(|r| r.exams_ordered as u32)),
        requested_total: metrics.exams.requested_total,
        ordered_total: metrics.exams.ordered_total,
    };
    let mut categories = CategoryCounts {
        ordered: ExamCategory::ALL.iter().map(|c| (*c, 0)).collect(),
        available: ExamCategory::ALL.iter().map(|c| (*c, 0)).collect(),
        rules_version: CATEGORY_RULES_VERSION,
    };
    for r in &results {
        for e in &r.exams {
            if let Some(c) = e.category {
                *categories.ordered.entry(c).or_insert(0) += 1;
            }
        }
    }
    for case in dataset {
        *categories.available.entry(ExamCategory::PhysicalExam).or_insert(0) += case.physical_findings.len();
        for item in &case.test_results {
            *categories.available.entry(categorize_exam(&item.name)).or_insert(0) += 1;
        }
    }

    let mut files = Vec::new();
    write_json(&out_dir.join("metrics.json"), &metrics, &mut files)?;
    write(&out_dir.join("metrics.md"), &render_markdown(&metrics), &mut files)?;
    write_json(&out_dir.join("cases.json"), &results, &mut files)?;
    write_json(&out_dir.join("exam_histogram.json"), &histogram, &mut files)?;
    write_json(&out_dir.join("exam_categories.json"), &categories, &mut files)?;
    let per_case = |f: fn(&CaseResult) -> Option<String>| -> Vec<CaseFailure> {
        results
            .iter()
            .filter_map(|r| f(r).map(|error| CaseFailure { case_id: r.case_id.clone(), error }))
            .collect()
    };
    let failure_report = Failures {
        cases: failures.clone(),
        referrals: per_case(|r| (!r.referral_failures.is_empty()).then(|| r.referral_failures.join("; "))),
        medications: per_case(|r| r.medication_failure.clone()),
    };
    write_json(&out_dir.join("failures.json"), &failure_report, &mut files)?;

    let names: Vec<String> = metrics.rows.iter().map(|r| r.specialty.clone()).collect();
    let accuracy: Vec<f64> = metrics.rows.iter().map(|r| r.accuracy_pct).collect();
    write(
        &out_dir.join("accuracy_by_specialty.svg"),
        &bar_chart("Diagnostic accuracy by specialty (%)", &names, &[("accuracy", accuracy)], Some(100.0)),
        &mut files,
    )?;
    let max_n = histogram.requested.keys().chain(histogram.ordered.keys()).copied().max().unwrap_or(0);
    let counts: Vec<String> = (0..=max_n).map(|n| n.to_string()).collect();
    let lookup = |m: &BTreeMap<u32, usize>| (0..=max_n).map(|n| *m.get(&n).unwrap_or(&0) as f64).collect::<Vec<_>>();
    write(
        &out_dir.join("exam_histogram.svg"),
        &bar_chart(
            "Cases by number of exams",
            &counts,
            &[("requested", lookup(&histogram.requested)), ("ordered", lookup(&histogram.ordered))],
            None,
        ),
        &mut files,
    )?;
    let cat_names: Vec<String> = ExamCategory::ALL.iter().map(|c| format!("{c:?}")).collect();
    let cat_series = |m: &BTreeMap<ExamCategory, usize>| {
        ExamCategory::ALL.iter().map(|c| *m.get(c).unwrap_or(&0) as f64).collect::<Vec<_>>()
    };
    write(
        &out_dir.join("exam_categories.svg"),
        &bar_chart(
            "Exam categories",
            &cat_names,
            &[("ordered", cat_series(&categories.ordered)), ("available", cat_series(&categories.available))],
            None,
        ),
        &mut files,
    )?;
    write_json(
        &out_dir.join("run_meta.json"),
        &serde_json::json!({
            "finished_at": Utc::now().to_rfc3339(),
            "workers": workers,
            "cases": dataset.len(),
        }),
        &mut files,
    )?;

    Ok(BenchOutput {
        metrics,
        results,
        failures,
        histogram,
        categories,
        files,
    })
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '_' | '-') { c } else { '_' })
        .collect()
}
