use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;

fn repo_fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/grounding")
}

fn offline(tmp: &tempfile::TempDir) -> Grounder {
    Grounder::offline(GroundingCache::for_store(tmp.path()), Some(repo_fixtures()))
}

/// Counts fetches; answers every term.
struct Counting {
    source: Source,
    calls: Arc<AtomicUsize>,
    fail: bool,
}

impl KnowledgeSource for Counting {
    fn source(&self) -> Source {
        self.source
    }

    fn fetch(&self, term: &str) -> Result<Option<GroundingDoc>, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail {
            return Err("unreachable".into());
        }
        Ok(Some(GroundingDoc {
            source: self.source,
            query: term.into(),
            title: term.into(),
            excerpt: "x".repeat(5000),
            url_or_id: format!("mock:{term}"),
            fetched_at: Utc::now(),
        }))
    }
}

fn counting(source: Source, fail: bool) -> (Arc<dyn KnowledgeSource>, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    (Arc::new(Counting { source, calls: calls.clone(), fail }), calls)
}

#[test]
fn offline_fixture_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let g = offline(&tmp);
    let docs = g.fetch_grounding("pneumonia", &[Source::Wikipedia, Source::PubMed]).unwrap();
    assert_eq!(docs.len(), 1);
    assert_eq!(docs[0].source, Source::LocalFixture);
    assert!(!docs[0].excerpt.trim().is_empty());
    assert_eq!(g.probe().attempts(), 0);
}

#[test]
fn offline_missing_term_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let docs = offline(&tmp)
        .fetch_grounding("zebra syndrome", &[Source::Wikipedia, Source::PubMed])
        .unwrap();
    assert!(docs.is_empty());
}

#[test]
fn drug_fixture_and_cache_hit() {
    let tmp = tempfile::tempdir().unwrap();
    let g = offline(&tmp);
    let first = g.fetch_drug_grounding("clarithromycin").unwrap();
    assert_eq!(first.len(), 1);
    assert_eq!(first[0].source, Source::DailyMed);
    let cached = tmp.path().join(".cache/grounding/dailymed/clarithromycin.json");
    assert!(cached.is_file());
    // The cached copy now serves even without the fixture tree.
    let cache_only = Grounder::offline(GroundingCache::for_store(tmp.path()), None);
    assert_eq!(cache_only.fetch_drug_grounding("Clarithromycin").unwrap(), first);
}

#[test]
fn second_fetch_hits_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let (src, calls) = counting(Source::Wikipedia, false);
    let g = Grounder::online(GroundingCache::for_store(tmp.path()), vec![src], NetworkProbe::default());
    let a = g.fetch_grounding("asthma", &[Source::Wikipedia]).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    let b = g.fetch_grounding("Asthma ", &[Source::Wikipedia]).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    assert_eq!(a, b);
    assert_eq!(a[0].fetched_at, b[0].fetched_at);
    assert_eq!(a[0].excerpt.chars().count(), DEFAULT_EXCERPT_CAP);
}

#[test]
fn one_doc_per_source() {
    let tmp = tempfile::tempdir().unwrap();
    let (w, _) = counting(Source::Wikipedia, false);
    let (p, _) = counting(Source::PubMed, false);
    let g = Grounder::online(GroundingCache::for_store(tmp.path()), vec![w, p], NetworkProbe::default());
    let docs = g.fetch_grounding("asthma", &[Source::Wikipedia, Source::PubMed]).unwrap();
    let sources: Vec<Source> = docs.iter().map(|d| d.source).collect();
    assert_eq!(sources, vec![Source::Wikipedia, Source::PubMed]);
    let docs = g.fetch_grounding("asthma", &[Source::PubMed]).unwrap();
    assert_eq!(docs.len(), 1);
}

#[test]
fn all_sources_failing_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (w, _) = counting(Source::Wikipedia, true);
    let (p, _) = counting(Source::PubMed, true);
    let g = Grounder::online(GroundingCache::for_store(tmp.path()), vec![w, p], NetworkProbe::default());
    let err = g.fetch_grounding("asthma", &[Source::Wikipedia, Source::PubMed]).unwrap_err();
    assert!(matches!(err, GroundingError::AllSourcesFailed { ref errors, .. } if errors.len() == 2));
}

#[test]
fn partial_failure_keeps_good_docs() {
    let tmp = tempfile::tempdir().unwrap();
    let (w, _) = counting(Source::Wikipedia, true);
    let (p, _) = counting(Source::PubMed, false);
    let g = Grounder::online(GroundingCache::for_store(tmp.path()), vec![w, p], NetworkProbe::default());
    let docs = g.fetch_grounding("asthma", &[Source::Wikipedia, Source::PubMed]).unwrap();
    assert_eq!(docs.len(), 1);
    assert_eq!(docs[0].source, Source::PubMed);
}

#[test]
fn empty_term_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        offline(&tmp).fetch_grounding("  ", &[Source::Wikipedia]),
        Err(GroundingError::EmptyTerm)
    ));
}

#[test]
fn ttl_expires_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = GroundingCache::new(tmp.path());
    let mut doc = GroundingDoc {
        source: Source::PubMed,
        query: "gout".into(),
        title: "Gout".into(),
        excerpt: "urate".into(),
        url_or_id: "pmid:1".into(),
        fetched_at: Utc::now() - chrono::Duration::days(10),
    };
    cache.put(Source::PubMed, "gout", &doc).unwrap();
    assert!(cache.get(Source::PubMed, "gout").is_some());
    let short = cache.clone().with_ttl(Duration::from_secs(86_400));
    assert!(short.get(Source::PubMed, "gout").is_none());
    doc.fetched_at = Utc::now();
    cache.put(Source::PubMed, "gout", &doc).unwrap();
    assert!(short.get(Source::PubMed, "gout").is_some());
}

#[test]
fn concurrent_fetches_of_distinct_terms() {
    let tmp = tempfile::tempdir().unwrap();
    let (src, calls) = counting(Source::PubMed, false);
    let g = Grounder::online(GroundingCache::for_store(tmp.path()), vec![src], NetworkProbe::default());
    std::thread::scope(|s| {
        for t in ["a1", "b2", "c3", "d4"] {
            let g = &g;
            s.spawn(move || g.fetch_grounding(t, &[Source::PubMed]).unwrap());
        }
    });
    assert_eq!(calls.load(Ordering::SeqCst), 4);
    let stray = std::fs::read_dir(tmp.path().join(".cache/grounding/pubmed"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
        .count();
    assert_eq!(stray, 0);
}

#[test]
fn normalization() {
    assert_eq!(normalize_term("  Chest Pain "), "chest-pain");
    assert_eq!(normalize_term("COVID-19 (acute)"), "covid-19-acute");
}

#[test]
fn provenance_format() {
    let doc = GroundingDoc {
        source: Source::Wikipedia,
        query: "pneumonia".into(),
        title: "Pneumonia".into(),
        excerpt: "e".into(),
        url_or_id: "https://en.wikipedia.org/wiki/Pneumonia".into(),
        fetched_at: Utc::now(),
    };
    assert_eq!(
        doc.provenance_line(),
        "[Wikipedia] Pneumonia <https://en.wikipedia.org/wiki/Pneumonia> (query: pneumonia)"
    );
}

proptest::proptest! {
    #[test]
    fn cache_is_idempotent(term in "[a-zA-Z ]{1,20}") {
        proptest::prop_assume!(!term.trim().is_empty());
        let tmp = tempfile::tempdir().unwrap();
        let (src, _) = counting(Source::Wikipedia, false);
        let g = Grounder::online(GroundingCache::for_store(tmp.path()), vec![src], NetworkProbe::default());
        let a = g.fetch_grounding(&term, &[Source::Wikipedia]).unwrap();
        let b = g.fetch_grounding(&term, &[Source::Wikipedia]).unwrap();
        proptest::prop_assert_eq!(a, b);
    }
}
