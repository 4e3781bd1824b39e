//! Online reference clients. Each records on the shared [`NetworkProbe`]
//! before opening a connection.

use std::time::Duration;

use chrono::Utc;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use super::{GroundingDoc, NetworkProbe, Source};

const TIMEOUT: Duration = Duration::from_secs(15);
const USER_AGENT: &str = concat!("medos/", env!("CARGO_PKG_VERSION"));

pub trait KnowledgeSource: Send + Sync {
    fn source(&self) -> Source;

    /// `Ok(None)` when the source has nothing for `term`.
    fn fetch(&self, term: &str) -> Result<Option<GroundingDoc>, String>;
}

fn client() -> Client {
    Client::builder()
        .timeout(TIMEOUT)
        .user_agent(USER_AGENT)
        .build()
        .expect("http client builds")
}

fn get_json(
    client: &Client,
    probe: &NetworkProbe,
    url: &str,
    query: &[(&str, &str)],
) -> Result<Option<Value>, String> {
    probe.record();
    let resp = client.get(url).query(query).send().map_err(|e| e.to_string())?;
    let status = resp.status();
    if status == StatusCode::NOT_FOUND {
        return Ok(None);
    }
    if !status.is_success() {
        return Err(format!("HTTP {status}"));
    }
    resp.json::<Value>().map(Some).map_err(|e| e.to_string())
}

fn get_text(
    client: &Client,
    probe: &NetworkProbe,
    url: &str,
    query: &[(&str, &str)],
) -> Result<Option<String>, String> {
    probe.record();
    let resp = client.get(url).query(query).send().map_err(|e| e.to_string())?;
    let status = resp.status();
    if status == StatusCode::NOT_FOUND {
        return Ok(None);
    }
    if !status.is_success() {
        return Err(format!("HTTP {status}"));
    }
    resp.text().map(Some).map_err(|e| e.to_string())
}

fn doc(source: Source, term: &str, title: String, excerpt: String, url_or_id: String) -> Option<GroundingDoc> {
    let excerpt = excerpt.trim().to_string();
    (!excerpt.is_empty()).then(|| GroundingDoc {
        source,
        query: term.to_string(),
        title,
        excerpt,
        url_or_id,
        fetched_at: Utc::now(),
    })
}

/// Page summaries from the Wikipedia REST API.
pub struct WikipediaClient {
    base_url: String,
    client: Client,
    probe: NetworkProbe,
}

impl WikipediaClient {
    pub fn new(probe: NetworkProbe) -> Self {
        Self::with_base_url("https://en.wikipedia.org", probe)
    }

    pub fn with_base_url(base_url: impl Into<String>, probe: NetworkProbe) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client: client(),
            probe,
        }
    }
}

impl KnowledgeSource for WikipediaClient {
    fn source(&self) -> Source {
        Source::Wikipedia
    }

    fn fetch(&self, term: &str) -> Result<Option<GroundingDoc>, String> {
        let title = term.trim().replace(' ', "_");
        let url = format!("{}/api/rest_v1/page/summary/{}", self.base_url, title);
        let Some(body) = get_json(&self.client, &self.probe, &url, &[])? else {
            return Ok(None);
        };
        if body["type"].as_str() == Some("disambiguation") {
            return Ok(None);
        }
        let extract = body["extract"].as_str().unwrap_or_default().to_string();
        let page_title = body["title"].as_str().unwrap_or(term).to_string();
        let page_url = body["content_urls"]["desktop"]["page"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| format!("https://en.wikipedia.org/wiki/{title}"));
        Ok(doc(Source::Wikipedia, term, page_title, extract, page_url))
    }
}

/// NCBI E-utilities: esearch for the top PMID, then esummary and efetch.
pub struct PubMedClient {
    base_url: String,
    client: Client,
    probe: NetworkProbe,
}

impl PubMedClient {
    pub fn new(probe: NetworkProbe) -> Self {
        Self::with_base_url("https://eutils.ncbi.nlm.nih.gov", probe)
    }

    pub fn with_base_url(base_url: impl Into<String>, probe: NetworkProbe) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client: client(),
            probe,
        }
    }

    fn endpoint(&self, name: &str) -> String {
        format!("{}/entrez/eutils/{name}.fcgi", self.base_url)
    }
}

impl KnowledgeSource for PubMedClient {
    fn source(&self) -> Source {
        Source::PubMed
    }

    fn fetch(&self, term: &str) -> Result<Option<GroundingDoc>, String> {
        let search = get_json(
            &self.client,
            &self.probe,
            &self.endpoint("esearch"),
            &[("db", "pubmed"), ("term", term), ("retmax", "1"), ("retmode", "json"), ("sort", "relevance")],
        )?;
        let Some(pmid) = search
            .as_ref()
            .and_then(|v| v["esearchresult"]["idlist"].get(0))
            .and_then(Value::as_str)
            .map(str::to_string)
        else {
            return Ok(None);
        };
        let summary = get_json(
            &self.client,
            &self.probe,
            &self.endpoint("esummary"),
            &[("db", "pubmed"), ("id", &pmid), ("retmode", "json")],
        )?;
        let title = summary
            .as_ref()
            .and_then(|v| v["result"][pmid.as_str()]["title"].as_str())
            .unwrap_or(term)
            .to_string();
        let abstract_text = get_text(
            &self.client,
            &self.probe,
            &self.endpoint("efetch"),
            &[("db", "pubmed"), ("id", &pmid), ("rettype", "abstract"), ("retmode", "text")],
        )?
        .unwrap_or_default();
        let excerpt = if abstract_text.trim().is_empty() { title.clone() } else { abstract_text };
        Ok(doc(
            Source::PubMed,
            term,
            title,
            excerpt,
            format!("https://pubmed.ncbi.nlm.nih.gov/{pmid}/"),
        ))
    }
}

/// Structured product labels from the DailyMed v2 services.
pub struct DailyMedClient {
    base_url: String,
    client: Client,
    probe: NetworkProbe,
}

impl DailyMedClient {
    pub fn new(probe: NetworkProbe) -> Self {
        Self::with_base_url("https://dailymed.nlm.nih.gov", probe)
    }

    pub fn with_base_url(base_url: impl Into<String>, probe: NetworkProbe) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client: client(),
            probe,
        }
    }
}

impl KnowledgeSource for DailyMedClient {
    fn source(&self) -> Source {
        Source::DailyMed
    }

    fn fetch(&self, term: &str) -> Result<Option<GroundingDoc>, String> {
        let url = format!("{}/dailymed/services/v2/spls.json", self.base_url);
        let body = get_json(&self.client, &self.probe, &url, &[("drug_name", term), ("pagesize", "1")])?;
        let Some(first) = body.as_ref().and_then(|v| v["data"].get(0)) else {
            return Ok(None);
        };
        let setid = first["setid"].as_str().unwrap_or_default().to_string();
        let title = first["title"].as_str().unwrap_or(term).to_string();
        Ok(doc(
            Source::DailyMed,
            term,
            title.clone(),
            title,
            format!("{}/dailymed/drugInfo.cfm?setid={setid}", self.base_url),
        ))
    }
}
