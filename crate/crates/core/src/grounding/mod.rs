//! Reference grounding: key terms in, short passages with provenance out.
//!
//! Lookups go cache first, then (offline) bundled fixtures or (online) the
//! Wikipedia, PubMed and DailyMed clients. Cache and fixture trees share one
//! format: `<dir>/<source>/<normalized-term>.json` holding a serialized
//! [`GroundingDoc`].

mod sources;
mod stopwords;
mod terms;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

pub use sources::{DailyMedClient, KnowledgeSource, PubMedClient, WikipediaClient};
pub use stopwords::{is_stopword, STOPWORDS};
pub use terms::{extract_key_terms, frequency_terms, parse_terms, KeyTermSet, MAX_KEY_TERMS};

pub const DEFAULT_EXCERPT_CAP: usize = 2_000;
const REQUESTS_PER_SECOND: u32 = 3;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("term is empty")]
    EmptyTerm,
    #[error("every source failed for {term:?}: {errors:?}")]
    AllSourcesFailed { term: String, errors: Vec<String> },
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Wikipedia,
    PubMed,
    DailyMed,
    LocalFixture,
}

impl Source {
    pub fn dir_name(self) -> &'static str {
        match self {
            Source::Wikipedia => "wikipedia",
            Source::PubMed => "pubmed",
            Source::DailyMed => "dailymed",
            Source::LocalFixture => "local",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingDoc {
    pub source: Source,
    pub query: String,
    pub title: String,
    pub excerpt: String,
    pub url_or_id: String,
    pub fetched_at: DateTime<Utc>,
}

impl GroundingDoc {
    /// One-line citation used in report source lists.
    pub fn provenance_line(&self) -> String {
        format!(
            "[{}] {} <{}> (query: {})",
            self.source, self.title, self.url_or_id, self.query
        )
    }

    fn capped(mut self, cap: usize) -> Self {
        if self.excerpt.chars().count() > cap {
            self.excerpt = self.excerpt.chars().take(cap).collect();
        }
        self
    }
}

/// Lowercase alphanumeric runs joined by `-`.
pub fn normalize_term(term: &str) -> String {
    term.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn doc_path(dir: &Path, source: Source, term: &str) -> PathBuf {
    dir.join(source.dir_name()).join(format!("{}.json", normalize_term(term)))
}

fn read_doc(path: &Path) -> Option<GroundingDoc> {
    let bytes = fs::read(path).ok()?;
    match serde_json::from_slice::<GroundingDoc>(&bytes) {
        Ok(doc) if !doc.excerpt.trim().is_empty() => Some(doc),
        Ok(_) => None,
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "unreadable grounding document");
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundingCache {
    dir: PathBuf,
    ttl: Option<Duration>,
}

impl GroundingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), ttl: None }
    }

    /// Cache rooted at `<store_root>/.cache/grounding`.
    pub fn for_store(store_root: &Path) -> Self {
        Self::new(store_root.join(".cache").join("grounding"))
    }

    pub fn with_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = Some(ttl);
        self
    }

    pub fn get(&self, source: Source, term: &str) -> Option<GroundingDoc> {
        let doc = read_doc(&doc_path(&self.dir, source, term))?;
        if let Some(ttl) = self.ttl {
            let age = Utc::now().signed_duration_since(doc.fetched_at);
            if age.to_std().map(|a| a > ttl).unwrap_or(false) {
                return None;
            }
        }
        Some(doc)
    }

    pub fn put(&self, source: Source, term: &str, doc: &GroundingDoc) -> std::io::Result<()> {
        let path = doc_path(&self.dir, source, term);
        fs::create_dir_all(path.parent().expect("cache path has parent"))?;
        let json = serde_json::to_vec_pretty(doc).expect("doc serializes");
        crate::store::write_atomic(&path, &json)
    }
}

/// Counts outbound connection attempts. Offline runs must leave it at zero.
#[derive(Debug, Clone, Default)]
pub struct NetworkProbe(Arc<AtomicUsize>);

impl NetworkProbe {
    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    pub fn attempts(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }
}

/// Spaces requests to one source at most `per_second` apart.
#[derive(Debug)]
struct RateLimiter {
    min_gap: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(per_second: u32) -> Self {
        Self {
            min_gap: Duration::from_secs(1) / per_second,
            last: Mutex::new(None),
        }
    }

    fn wait(&self) {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_gap {
                std::thread::sleep(self.min_gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

pub struct Grounder {
    cache: GroundingCache,
    fixtures: Option<PathBuf>,
    online: HashMap<Source, Arc<dyn KnowledgeSource>>,
    limiters: HashMap<Source, RateLimiter>,
    offline: bool,
    excerpt_cap: usize,
    probe: NetworkProbe,
}

impl Grounder {
    /// Serves only the cache and the fixture tree; never connects.
    pub fn offline(cache: GroundingCache, fixtures: Option<PathBuf>) -> Self {
        Self {
            cache,
            fixtures,
            online: HashMap::new(),
            limiters: HashMap::new(),
            offline: true,
            excerpt_cap: DEFAULT_EXCERPT_CAP,
            probe: NetworkProbe::default(),
        }
    }

    pub fn online(cache: GroundingCache, sources: Vec<Arc<dyn KnowledgeSource>>, probe: NetworkProbe) -> Self {
        let online: HashMap<_, _> = sources.into_iter().map(|s| (s.source(), s)).collect();
        let limiters = online
            .keys()
            .map(|&k| (k, RateLimiter::new(REQUESTS_PER_SECOND)))
            .collect();
        Self {
            cache,
            fixtures: None,
            online,
            limiters,
            offline: false,
            excerpt_cap: DEFAULT_EXCERPT_CAP,
            probe,
        }
    }

    /// Standard online setup using the public Wikipedia, PubMed and DailyMed
    /// endpoints.
    pub fn public_sources(cache: GroundingCache) -> Self {
        let probe = NetworkProbe::default();
        let sources: Vec<Arc<dyn KnowledgeSource>> = vec![
            Arc::new(WikipediaClient::new(probe.clone())),
            Arc::new(PubMedClient::new(probe.clone())),
            Arc::new(DailyMedClient::new(probe.clone())),
        ];
        Self::online(cache, sources, probe)
    }

    pub fn with_excerpt_cap(mut self, cap: usize) -> Self {
        self.excerpt_cap = cap.max(1);
        self
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    pub fn probe(&self) -> &NetworkProbe {
        &self.probe
    }

    /// At most one document per requested source.
    pub fn fetch_grounding(&self, term: &str, sources: &[Source]) -> Result<Vec<GroundingDoc>, GroundingError> {
        let term = term.trim();
        if term.is_empty() {
            return Err(GroundingError::EmptyTerm);
        }
        let mut docs = Vec::new();
        let mut errors = Vec::new();
        let mut attempted = 0;
        for &source in sources {
            if let Some(doc) = self.cache.get(source, term) {
                docs.push(doc);
                continue;
            }
            if self.offline {
                docs.extend(self.offline_lookup(source, term)?);
                continue;
            }
            let Some(client) = self.online.get(&source) else {
                continue;
            };
            attempted += 1;
            if let Some(limiter) = self.limiters.get(&source) {
                limiter.wait();
            }
            match client.fetch(term) {
                Ok(Some(doc)) => {
                    let doc = doc.capped(self.excerpt_cap);
                    self.cache.put(source, term, &doc)?;
                    docs.push(doc);
                }
                Ok(None) => {}
                Err(e) => {
                    tracing::warn!(%source, term, error = %e, "grounding fetch failed");
                    errors.push(format!("{source}: {e}"));
                }
            }
        }
        if self.offline && docs.is_empty() {
            // Source-agnostic bundled passages stand in for any source.
            if let Some(doc) = self.offline_lookup(Source::LocalFixture, term)? {
                docs.push(doc);
            }
        }
        if attempted > 0 && errors.len() == attempted && docs.is_empty() {
            return Err(GroundingError::AllSourcesFailed {
                term: term.to_string(),
                errors,
            });
        }
        Ok(docs)
    }

    fn offline_lookup(&self, source: Source, term: &str) -> Result<Option<GroundingDoc>, GroundingError> {
        if let Some(doc) = self.cache.get(source, term) {
            return Ok(Some(doc));
        }
        let fixture = self
            .fixtures
            .as_deref()
            .and_then(|dir| read_doc(&doc_path(dir, source, term)));
        let Some(doc) = fixture else { return Ok(None) };
        let doc = doc.capped(self.excerpt_cap);
        self.cache.put(source, term, &doc)?;
        Ok(Some(doc))
    }

    /// Prescribing references: DailyMed, then Wikipedia.
    pub fn fetch_drug_grounding(&self, diagnosis_or_drug: &str) -> Result<Vec<GroundingDoc>, GroundingError> {
        self.fetch_grounding(diagnosis_or_drug, &[Source::DailyMed, Source::Wikipedia])
    }
}

#[cfg(test)]
mod tests;
