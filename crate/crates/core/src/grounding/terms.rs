use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::stopwords::is_stopword;
use super::GroundingError;
use crate::gateway::{ChatBackend, ChatMessage, ChatParams};
use crate::store::DocumentRef;

pub const MAX_KEY_TERMS: usize = 3;

/// Longest accepted term, in words.
const MAX_TERM_WORDS: usize = 5;

/// Speaker labels in stored transcripts; never useful as terms.
const TRANSCRIPT_LABELS: [&str; 4] = ["doctor", "patient", "transcript", "inquiry"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyTermSet {
    pub terms: Vec<String>,
    pub source_doc: Option<DocumentRef>,
}

pub(crate) const KEY_TERMS_SYSTEM: &str = "Task: key-terms\n\
You extract search terms for medical reference lookup. From the patient \
conversation, list up to 3 key medical terms (symptoms, findings or suspected \
conditions). Reply with the terms separated by semicolons and nothing else.";

/// Extracts 1 to `max_terms` distinct terms via the chat backend. Unparseable
/// output gets one repair prompt, after which the most frequent non-stopword
/// transcript tokens are used instead.
pub fn extract_key_terms(
    transcript: &str,
    chat: &dyn ChatBackend,
    max_terms: usize,
) -> Result<KeyTermSet, GroundingError> {
    if transcript.trim().is_empty() {
        return Err(GroundingError::EmptyTranscript);
    }
    let max_terms = max_terms.clamp(1, MAX_KEY_TERMS);
    let params = ChatParams::default();
    let mut messages = vec![
        ChatMessage::system(KEY_TERMS_SYSTEM),
        ChatMessage::user(transcript.to_string()),
    ];
    let first = chat.chat(&messages, &params)?;
    if let Some(terms) = parse_terms(&first.text, max_terms) {
        return Ok(KeyTermSet { terms, source_doc: None });
    }
    messages.push(ChatMessage::assistant(first.text.clone()));
    messages.push(ChatMessage::user(
        "Your reply could not be parsed. Reply ONLY with 1 to 3 short medical terms \
         separated by semicolons, for example: chest pain; dyspnea; fever",
    ));
    let second = chat.chat(&messages, &params)?;
    if let Some(terms) = parse_terms(&second.text, max_terms) {
        return Ok(KeyTermSet { terms, source_doc: None });
    }
    tracing::warn!("key term output unparseable twice; using frequency fallback");
    let mut terms = frequency_terms(transcript, max_terms);
    if terms.is_empty() {
        // Only short words or stopwords: keep the first word.
        terms.extend(transcript.split_whitespace().next().map(str::to_lowercase));
    }
    Ok(KeyTermSet { terms, source_doc: None })
}

/// Parses a delimited term list. Returns `None` for prose or empty output.
pub fn parse_terms(output: &str, max_terms: usize) -> Option<Vec<String>> {
    let mut text = output.trim();
    for label in ["key terms:", "terms:"] {
        if text.get(..label.len()).is_some_and(|p| p.eq_ignore_ascii_case(label)) {
            text = text[label.len()..].trim();
        }
    }
    if text.is_empty() {
        return None;
    }
    let delimited = text.contains([';', ',', '\n']);
    let items: Vec<String> = text
        .split([';', ',', '\n'])
        .map(clean_item)
        .filter(|s| !s.is_empty())
        .collect();
    if !delimited && items.first().is_some_and(|s| s.split_whitespace().count() > 4) {
        return None;
    }
    let mut terms: Vec<String> = Vec::new();
    for item in items {
        if item.split_whitespace().count() > MAX_TERM_WORDS || item.chars().count() > 60 {
            continue;
        }
        if !terms.iter().any(|t| t.to_lowercase() == item.to_lowercase()) {
            terms.push(item);
        }
        if terms.len() == max_terms {
            break;
        }
    }
    (!terms.is_empty()).then_some(terms)
}

fn clean_item(raw: &str) -> String {
    let mut s = raw.trim();
    s = s.trim_start_matches(['-', '*', '•']).trim();
    // "1." / "2)" numbering
    if let Some(pos) = s.find(['.', ')']) {
        if pos > 0 && s[..pos].bytes().all(|b| b.is_ascii_digit()) {
            s = s[pos + 1..].trim();
        }
    }
    s.trim_matches(['"', '\'', '`', '.'])
        .trim()
        .to_string()
}

/// Most frequent non-stopword tokens (length ≥ 3), ties broken by first
/// occurrence.
pub fn frequency_terms(transcript: &str, max_terms: usize) -> Vec<String> {
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let tokens = transcript
        .split(|c: char| !c.is_alphabetic())
        .map(str::to_lowercase)
        .filter(|w| w.chars().count() >= 3 && !is_stopword(w) && !TRANSCRIPT_LABELS.contains(&w.as_str()));
    for (pos, token) in tokens.enumerate() {
        counts.entry(token).or_insert((0, pos)).0 += 1;
    }
    let mut ranked: Vec<(String, usize, usize)> =
        counts.into_iter().map(|(w, (n, first))| (w, n, first)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.into_iter().take(max_terms).map(|(w, _, _)| w).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::FnBackend;

    fn fixed(reply: &'static str) -> FnBackend<impl Fn(&[ChatMessage]) -> Result<String, crate::gateway::GatewayError>> {
        FnBackend::new("fixed", move |_| Ok(reply.to_string()))
    }

    const TRANSCRIPT: &str = "Doctor: What brings you in?\n\
Patient: I have a cough and fever, the cough is worse at night.\n\
Doctor: Any chest pain?\n\
Patient: Some chest pain when I cough, and fever since Monday.";

    #[test]
    fn well_formed_output() {
        let set = extract_key_terms(TRANSCRIPT, &fixed("chest pain; dyspnea; fever"), 3).unwrap();
        assert_eq!(set.terms, vec!["chest pain", "dyspnea", "fever"]);
    }

    #[test]
    fn duplicates_collapse() {
        let set = extract_key_terms(TRANSCRIPT, &fixed("pain, pain, Pain"), 3).unwrap();
        assert_eq!(set.terms, vec!["pain"]);
    }

    #[test]
    fn prose_falls_back_to_frequency() {
        let prose = "The patient seems to describe a respiratory illness of some kind";
        let set = extract_key_terms(TRANSCRIPT, &fixed(prose), 3).unwrap();
        // Hand count over TRANSCRIPT: cough 3, fever 2, chest 2 (fever first).
        assert_eq!(set.terms, vec!["cough", "fever", "chest"]);
    }

    #[test]
    fn repair_prompt_is_used() {
        let backend = FnBackend::new("repair", |msgs: &[ChatMessage]| {
            Ok(if msgs.len() > 2 { "wheeze; cough".into() } else { "I think it is probably an infection of the lungs".into() })
        });
        let set = extract_key_terms(TRANSCRIPT, &backend, 3).unwrap();
        assert_eq!(set.terms, vec!["wheeze", "cough"]);
    }

    #[test]
    fn empty_transcript_rejected() {
        assert!(matches!(
            extract_key_terms("  ", &fixed("x"), 3),
            Err(GroundingError::EmptyTranscript)
        ));
    }

    #[test]
    fn parse_variants() {
        assert_eq!(parse_terms("Key terms: a; b", 3), Some(vec!["a".into(), "b".into()]));
        assert_eq!(
            parse_terms("1. chest pain\n2. fever\n3. cough\n4. rash", 3),
            Some(vec!["chest pain".into(), "fever".into(), "cough".into()])
        );
        assert_eq!(parse_terms("pneumonia", 3), Some(vec!["pneumonia".into()]));
        assert_eq!(parse_terms("", 3), None);
        assert_eq!(parse_terms("- \n- ", 3), None);
    }

    proptest::proptest! {
        #[test]
        fn term_count_bounded(output in ".{0,200}", transcript in "[a-z ]{1,200}") {
            proptest::prop_assume!(!transcript.trim().is_empty());
            let backend = FnBackend::new("fuzz", move |_| Ok(output.clone()));
            let set = extract_key_terms(&transcript, &backend, 3).unwrap();
            proptest::prop_assert!((1..=3).contains(&set.terms.len()));
            let lowered: std::collections::HashSet<_> = set.terms.iter().map(|t| t.to_lowercase()).collect();
            proptest::prop_assert_eq!(lowered.len(), set.terms.len());
        }
    }
}
