use std::fs;

use serde::{Deserialize, Serialize};

use super::{DocumentRef, Location, RecordStore, Result, StoreError};
use crate::text;

pub const DEFAULT_SEARCH_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum SearchScope {
    AllDocuments,
    Patient(String),
    Specialty(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineHit {
    /// 1-based.
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc: DocumentRef,
    pub line_hits: Vec<LineHit>,
    /// Number of matching lines.
    pub score: usize,
}

impl RecordStore {
    /// Case-insensitive substring search over document lines.
    ///
    /// Documents are ranked by matching line count, ties broken by
    /// `(patient_id, filename)`, and truncated to `limit`.
    pub fn search_keyword(
        &self,
        query: &str,
        scope: &SearchScope,
        limit: usize,
    ) -> Result<Vec<SearchHit>> {
        let query = query.trim();
        if query.is_empty() {
            return Err(StoreError::EmptyQuery);
        }
        let needle = text::fold(query);

        let folders: Vec<(String, Location)> = match scope {
            SearchScope::AllDocuments => self.list_patients()?,
            SearchScope::Patient(id) => {
                let loc = self
                    .locate(id)
                    .ok_or_else(|| StoreError::UnknownPatient(id.clone()))?;
                vec![(id.clone(), loc)]
            }
            SearchScope::Specialty(name) => {
                let canonical = self
                    .layout()
                    .resolve_specialty(name)
                    .map(str::to_string)
                    .ok_or_else(|| StoreError::UnknownSpecialty(name.clone()))?;
                let loc = Location::Specialty(canonical);
                self.patients_at(&loc)?
                    .into_iter()
                    .map(|id| (id, loc.clone()))
                    .collect()
            }
        };

        let mut hits = Vec::new();
        for (id, location) in folders {
            // A folder may move away mid-scan; skip it rather than fail.
            let Ok(docs) = self.documents_in(&id, &location) else {
                continue;
            };
            let dir = self.patient_dir(&id, &location);
            for doc in docs {
                let Ok(content) = fs::read_to_string(dir.join(&doc.filename)) else {
                    continue;
                };
                let line_hits: Vec<LineHit> = content
                    .lines()
                    .enumerate()
                    .filter(|(_, line)| text::fold(line).contains(&needle))
                    .map(|(i, line)| LineHit {
                        line: i + 1,
                        text: line.to_string(),
                    })
                    .collect();
                if !line_hits.is_empty() {
                    hits.push(SearchHit {
                        score: line_hits.len(),
                        doc,
                        line_hits,
                    });
                }
            }
        }
        hits.sort_by(|a, b| {
            b.score
                .cmp(&a.score)
                .then_with(|| a.doc.patient_id.cmp(&b.doc.patient_id))
                .then_with(|| a.doc.filename.cmp(&b.doc.filename))
        });
        hits.truncate(limit);
        Ok(hits)
    }
}
