//! Exam categorization, exam matching and diagnosis scoring.

use serde::{Deserialize, Serialize};

use super::{BenchError, CaseSpec, NamedText};
use crate::gateway::{cosine_similarity, EmbedBackend, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExamCategory {
    Laboratory,
    Imaging,
    PhysicalExam,
    Other,
}

impl ExamCategory {
    pub const ALL: [ExamCategory; 4] = [
        ExamCategory::Laboratory,
        ExamCategory::Imaging,
        ExamCategory::PhysicalExam,
        ExamCategory::Other,
    ];
}

/// Bumped whenever [`CATEGORY_RULES`] changes.
pub const CATEGORY_RULES_VERSION: u32 = 1;

/// Keyword rules, first match wins. A keyword matches a whole word or, when
/// it contains a space, a whole phrase of the lowercased name.
pub const CATEGORY_RULES: &[(ExamCategory, &[&str])] = &[
    (
        ExamCategory::Imaging,
        &[
            "ct", "cta", "mri", "mra", "x-ray", "xray", "radiograph", "radiography", "ultrasound", "ultrasonography",
            "sonography", "echocardiogram", "echocardiography", "echo", "doppler", "angiography", "angiogram",
            "scan", "imaging", "mammogram", "mammography", "fluoroscopy", "pet", "scintigraphy", "venogram",
        ],
    ),
    (
        ExamCategory::Laboratory,
        &[
            "blood", "count", "cbc", "panel", "serum", "plasma", "urinalysis", "urine", "culture", "level",
            "levels", "assay", "troponin", "glucose", "hemoglobin", "hba1c", "lipid", "metabolic", "electrolytes",
            "antibody", "antibodies", "pcr", "smear", "gas", "enzymes", "titer", "biopsy", "cytology", "histology",
            "pathology", "crp", "esr", "tsh", "creatinine", "bilirubin", "lactate", "d-dimer", "ferritin",
            "sodium", "potassium", "albumin", "stool", "sputum", "csf", "cerebrospinal", "aspirate", "serology",
            "function tests", "laboratory", "lab", "labs", "analysis", "marker", "markers", "bnp", "inr",
        ],
    ),
    (
        ExamCategory::PhysicalExam,
        &[
            "examination", "exam", "vital", "vitals", "signs", "auscultation", "palpation", "inspection",
            "percussion", "reflexes", "pressure", "heart rate", "pulse", "temperature", "respiratory rate",
            "oxygen saturation", "neurological", "fundoscopy", "otoscopy", "gait", "strength", "tenderness",
        ],
    ),
];

/// Keyword-rule classification; unmatched names fall back to Other.
pub fn categorize_exam(name: &str) -> ExamCategory {
    let lowered = name.to_lowercase();
    let words: Vec<&str> = lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .collect();
    let joined = format!(" {} ", words.join(" "));
    for (category, keywords) in CATEGORY_RULES {
        let hit = keywords.iter().any(|k| {
            if k.contains(' ') {
                joined.contains(&format!(" {k} "))
            } else {
                words.contains(k)
            }
        });
        if hit {
            return *category;
        }
    }
    ExamCategory::Other
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedExam {
    pub category: ExamCategory,
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamMatch {
    pub requested: String,
    pub matched: Option<MatchedExam>,
    pub similarity: f64,
}

/// Resolves a requested exam to the most similar available finding or
/// result. Ties go to the earlier item, physical findings first.
pub fn match_exam(
    requested: &str,
    case: &CaseSpec,
    embed: &dyn EmbedBackend,
    threshold: f64,
) -> Result<ExamMatch, BenchError> {
    let requested = requested.trim();
    if requested.is_empty() {
        return Err(BenchError::EmptyInput("requested exam"));
    }
    let available: Vec<&NamedText> = case.physical_findings.iter().chain(&case.test_results).collect();
    if available.is_empty() {
        return Ok(ExamMatch {
            requested: requested.to_string(),
            matched: None,
            similarity: 0.0,
        });
    }
    let mut texts = vec![requested.to_string()];
    texts.extend(available.iter().map(|item| item.name.clone()));
    let vectors = embed.embed(&texts)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vectors[1..].iter().enumerate() {
        let sim = similarity_or_zero(cosine_similarity(&vectors[0], v))?;
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    let (i, similarity) = best.expect("nonempty");
    let matched = (similarity >= threshold).then(|| {
        let item = available[i];
        MatchedExam {
            category: categorize_exam(&item.name),
            name: item.name.clone(),
            content: item.content.clone(),
        }
    });
    Ok(ExamMatch {
        requested: requested.to_string(),
        matched,
        similarity,
    })
}

/// Cosine similarity of the two embeddings, clamped to [0, 1].
pub fn score_diagnosis(predicted: &str, truth: &str, embed: &dyn EmbedBackend) -> Result<f64, BenchError> {
    if predicted.trim().is_empty() {
        return Err(BenchError::EmptyInput("predicted diagnosis"));
    }
    if truth.trim().is_empty() {
        return Err(BenchError::EmptyInput("truth diagnosis"));
    }
    let v = embed.embed(&[predicted.trim().to_string(), truth.trim().to_string()])?;
    similarity_or_zero(cosine_similarity(&v[0], &v[1]))
}

/// A text with no embeddable content is dissimilar to everything.
fn similarity_or_zero(r: Result<f64, GatewayError>) -> Result<f64, BenchError> {
    match r {
        Ok(s) => Ok(s.clamp(0.0, 1.0)),
        Err(GatewayError::ZeroVector) => Ok(0.0),
        Err(e) => Err(e.into()),
    }
}
