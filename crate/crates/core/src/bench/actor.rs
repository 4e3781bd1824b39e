//! The simulated patient.

use super::{BenchError, CaseSpec};
use crate::gateway::{
    estimate_tokens, validate_messages, ChatBackend, ChatMessage, ChatParams, Completion, GatewayError, Role,
};
use crate::grounding::is_stopword;

pub const PATIENT_TASK: &str = "Task: patient-actor";

fn persona_prompt(profile: &str) -> String {
    format!(
        "{PATIENT_TASK}\nYou are a patient talking to a doctor. Answer in the first person, briefly, using only \
         the profile below. If the profile does not cover the question, say you are not sure.\n\nProfile:\n{}",
        profile.trim()
    )
}

/// One patient answer. The prompt carries the actor profile and the
/// question, nothing else from the case.
pub fn simulate_patient_turn(case: &CaseSpec, question: &str, chat: &dyn ChatBackend) -> Result<String, BenchError> {
    if question.trim().is_empty() {
        return Err(BenchError::EmptyInput("question"));
    }
    let messages = [
        ChatMessage::system(persona_prompt(&case.actor_profile)),
        ChatMessage::user(question.trim()),
    ];
    Ok(chat.chat(&messages, &ChatParams::default())?.text.trim().to_string())
}

/// Offline patient: answers with the profile sentence sharing the most
/// content words with the question.
#[derive(Debug, Default)]
pub struct ProfilePatient;

impl ProfilePatient {
    pub const ID: &'static str = "profile-patient";

    fn answer(messages: &[ChatMessage]) -> String {
        let profile = messages
            .iter()
            .find(|m| m.role == Role::System)
            .and_then(|m| m.content.split_once("Profile:\n"))
            .map(|(_, p)| p)
            .unwrap_or("");
        let question = messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("");
        let asked = content_words(question);
        let sentences: Vec<&str> = profile
            .split(['.', '\n', '?', '!'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let best = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let words = content_words(s);
                (asked.iter().filter(|w| words.contains(w)).count(), i)
            })
            .filter(|(score, _)| *score > 0)
            .max_by_key(|&(score, i)| (score, std::cmp::Reverse(i)));
        match best {
            Some((_, i)) => format!("{}.", sentences[i]),
            None if is_opening(question) => sentences.first().map(|s| format!("{s}.")).unwrap_or_default(),
            None => "I'm not sure.".into(),
        }
    }
}

fn is_opening(question: &str) -> bool {
    let q = question.to_lowercase();
    q.contains("brings you") || q.contains("anything else") || q.contains("other symptoms")
}

fn content_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 2 && !is_stopword(w))
        .map(|w| w.trim_end_matches('s').to_string())
        .collect()
}

impl ChatBackend for ProfilePatient {
    fn id(&self) -> String {
        Self::ID.into()
    }

    fn chat(&self, messages: &[ChatMessage], _params: &ChatParams) -> Result<Completion, GatewayError> {
        validate_messages(messages)?;
        let text = Self::answer(messages);
        Ok(Completion {
            token_estimate: estimate_tokens(&text),
            text,
            backend_id: Self::ID.into(),
            latency_ms: 0,
        })
    }
}
